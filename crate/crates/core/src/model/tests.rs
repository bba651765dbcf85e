use super::*;
use crate::autodiff::Tensor;
use rand::{Rng, SeedableRng};

fn random_tensor(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect())
}

fn one_hot(n: usize, k: usize, classes: usize) -> Tensor<f64> {
    let mut d = vec![0.0; n * classes];
    for r in 0..n {
        d[r * classes + k] = 1.0;
    }
    Tensor::from_vec(&[n, classes], d)
}

fn tiny(variant: Variant) -> TpgModel<f64> {
    TpgModel::new(ModelConfig::tiny(), variant, 11).unwrap()
}

#[test]
fn content_features_default_width() {
    let m = TpgModel::<f32>::new(ModelConfig::default(), Variant::TpgVae, 0).unwrap();
    let g = Graph::inference(m.params());
    let x = g.constant(random_tensor(&[2, 3, 64, 64], 0.0, 1.0, 1).cast());
    let f = m.encode_content(x).unwrap();
    assert_eq!(f.h.shape(), vec![2, 128]);
    let widths: Vec<_> = f.skips.iter().map(|s| s.shape()).collect();
    assert_eq!(
        widths,
        vec![vec![2, 32, 64, 64], vec![2, 64, 32, 32], vec![2, 128, 16, 16], vec![2, 256, 8, 8]]
    );
    assert!(f.h.value().all_finite());

    let wrong = g.constant(Tensor::zeros(&[1, 3, 32, 32]));
    assert!(matches!(m.encode_content(wrong), Err(Error::Shape(_))));
}

#[test]
fn motion_features() {
    let m = TpgModel::<f32>::new(ModelConfig::default(), Variant::TpgVae, 0).unwrap();
    let g = Graph::inference(m.params());
    let zero = m.encode_motion(g.zeros(&[1, 1, 64, 64])).unwrap();
    assert_eq!(zero.shape(), vec![1, 128]);
    assert!(zero.value().all_finite());
    let d = random_tensor(&[1, 1, 64, 64], -1.0, 1.0, 4).cast::<f32>();
    let a = m.encode_motion(g.constant(d.clone())).unwrap();
    let b = m.encode_motion(g.constant(d)).unwrap();
    assert_eq!(a.value(), b.value());

    let cl = TpgModel::<f32>::new(ModelConfig::tiny(), Variant::ClVae, 0).unwrap();
    let g = Graph::inference(cl.params());
    assert!(matches!(cl.encode_motion(g.zeros(&[1, 1, 8, 8])), Err(Error::Argument(_))));
}

#[test]
fn log_var_respects_clamp() {
    let m = tiny(Variant::TpgVae);
    let g = Graph::inference(m.params());
    // large inputs push the heads far out
    let feat = g.constant(random_tensor(&[3, 6], -50.0, 50.0, 2));
    let s = m.initial_state_var(&g, Core::ContentPosterior, 3);
    let (q, _) = m.posterior_step(Core::ContentPosterior, feat, &s).unwrap();
    assert!(q.log_var.value().data().iter().all(|v| (-10.0..=10.0).contains(v)));
    assert!(q.mean.value().all_finite());
}

#[test]
fn stepwise_equals_unrolled() {
    let m = tiny(Variant::TpgVae);
    let feats: Vec<Tensor<f64>> = (0..10).map(|t| random_tensor(&[2, 6], -1.0, 1.0, 100 + t)).collect();

    let g = Graph::inference(m.params());
    let mut state = m.initial_state_var(&g, Core::ContentPosterior, 2);
    let mut unrolled = Vec::new();
    for f in &feats {
        let (q, next) = m.posterior_step(Core::ContentPosterior, g.constant(f.clone()), &state).unwrap();
        unrolled.push(q.rows());
        state = next;
    }

    let mut carried = m.initial_state(Core::ContentPosterior, 2);
    for (f, want) in feats.iter().zip(&unrolled) {
        let g = Graph::inference(m.params());
        let s = carried.attach(&g);
        let (q, next) = m.posterior_step(Core::ContentPosterior, g.constant(f.clone()), &s).unwrap();
        assert_eq!(&q.rows(), want);
        carried = next.detach();
    }
    assert_eq!(unrolled.len(), 10);
    assert_ne!(unrolled[0], unrolled[9]);
}

#[test]
fn core_kind_and_width_checked() {
    let m = tiny(Variant::TpgVae);
    let g = Graph::inference(m.params());
    let s = m.initial_state_var(&g, Core::MotionPrior, 1);
    let bad = g.constant(Tensor::zeros(&[1, 6]));
    assert!(matches!(m.prior_step(Core::MotionPrior, bad, &s), Err(Error::Shape(_))));
    let ok = g.constant(Tensor::zeros(&[1, 5]));
    assert!(m.prior_step(Core::MotionPrior, ok, &s).is_ok());
    assert!(matches!(m.prior_step(Core::MotionPosterior, ok, &s), Err(Error::Argument(_))));
    let p = m.initial_state_var(&g, Core::Predictor, 1);
    assert!(matches!(m.prior_step(Core::MotionPrior, ok, &p), Err(Error::Shape(_))));

    let sv = tiny(Variant::SvgLpStar);
    let g = Graph::inference(sv.params());
    let s = sv.initial_state_var(&g, Core::MotionPrior, 1);
    assert!(sv.prior_step(Core::MotionPrior, g.zeros(&[1, 5]), &s).is_err());
}

#[test]
fn latent_assembly_widths() {
    let cfg = ModelConfig::small();
    for (variant, width) in [(Variant::TpgVae, 36), (Variant::MlVae, 20), (Variant::SvgLpStar, 16)] {
        let m = TpgModel::<f32>::new(cfg.clone(), variant, 0).unwrap();
        let g = Graph::inference(m.params());
        let c = g.constant(Tensor::full(&[2, 16], 0.1));
        let mo = g.constant(Tensor::full(&[2, 16], 0.2));
        let l = g.constant(one_hot(2, 1, 4).cast());
        let z = m.assemble_latent(Some(c), Some(mo), Some(l)).unwrap();
        assert_eq!(z.width(), width);
        assert_eq!(m.latent_width(), width);
    }
    let m = tiny(Variant::TpgVae);
    let g = Graph::inference(m.params());
    let c = g.constant(Tensor::from_f64(&[1, 2], &[1.0, 2.0]));
    let mo = g.constant(Tensor::from_f64(&[1, 2], &[3.0, 4.0]));
    let l = g.constant(one_hot(1, 2, 4));
    let z = m.assemble_latent(Some(c), Some(mo), Some(l)).unwrap();
    assert_eq!(z.z.value().data(), &[1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 1.0, 0.0]);
    assert!(m.assemble_latent(Some(c), None, Some(l)).is_err());
    let short = g.constant(Tensor::zeros(&[1, 3]));
    assert!(matches!(m.assemble_latent(Some(c), Some(mo), Some(short)), Err(Error::Shape(_))));
}

#[test]
fn predictor_output_bounded() {
    let m = TpgModel::<f64>::new(ModelConfig::small(), Variant::TpgVae, 3).unwrap();
    let g = Graph::inference(m.params());
    let h = g.constant(random_tensor(&[2, 128], -1.0, 1.0, 5));
    let z = m
        .assemble_latent(
            Some(g.constant(random_tensor(&[2, 16], -3.0, 3.0, 6))),
            Some(g.constant(random_tensor(&[2, 16], -3.0, 3.0, 7))),
            Some(g.constant(one_hot(2, 0, 4))),
        )
        .unwrap();
    let s = m.initial_state_var(&g, Core::Predictor, 2);
    let (out, next) = m.predictor_step(h, &z, &s).unwrap();
    assert_eq!(out.shape(), vec![2, 128]);
    assert!(out.value().data().iter().all(|v| v.abs() < 1.0));
    assert_eq!(next.hidden.len(), 2);
    let (again, _) = m.predictor_step(h, &z, &s).unwrap();
    assert_eq!(out.value(), again.value());
}

#[test]
fn decoder_range_and_skip_checks() {
    let m = tiny(Variant::TpgVae);
    let g = Graph::inference(m.params());
    let x = g.constant(random_tensor(&[2, 1, 8, 8], 0.0, 1.0, 8));
    let f = m.encode_content(x).unwrap();
    let gt = g.constant(random_tensor(&[2, 6], -1.0, 1.0, 9));
    let out = m.decode(gt, &f.skips).unwrap();
    assert_eq!(out.shape(), vec![2, 1, 8, 8]);
    assert!(out.value().data().iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(out.value(), m.decode(gt, &f.skips).unwrap().value());

    let wrong = vec![f.skips[1], f.skips[1]];
    assert!(matches!(m.decode(gt, &wrong), Err(Error::Shape(_))));
    assert!(matches!(m.decode(gt, &f.skips[..1]), Err(Error::Shape(_))));
}

/// Runs encoder, priors (means), predictor and decoder once for a given label.
fn decode_with_label(m: &TpgModel<f64>, label: usize) -> Tensor<f64> {
    let g = Graph::inference(m.params());
    let x = g.constant(random_tensor(&[1, 1, 8, 8], 0.0, 1.0, 20));
    let f = m.encode_content(x).unwrap();
    let c = g.constant(random_tensor(&[1, 2], -1.0, 1.0, 21));
    let mo = g.constant(random_tensor(&[1, 2], -1.0, 1.0, 22));
    let z = m
        .assemble_latent(Some(c), Some(mo), Some(g.constant(one_hot(1, label, 4))))
        .unwrap();
    let s = m.initial_state_var(&g, Core::Predictor, 1);
    let (out, _) = m.predictor_step(f.h, &z, &s).unwrap();
    (*m.decode(out, &f.skips).unwrap().value()).clone()
}

#[test]
fn label_changes_decoded_frame() {
    let m = tiny(Variant::TpgVae);
    let a = decode_with_label(&m, 0);
    let b = decode_with_label(&m, 3);
    assert!(a.max_abs_diff(&b) > 1e-8);
}

#[test]
fn seeded_initialization() {
    let a = tiny(Variant::TpgVae);
    let b = tiny(Variant::TpgVae);
    let c = TpgModel::<f64>::new(ModelConfig::tiny(), Variant::TpgVae, 12).unwrap();
    let same = a.params().iter().zip(b.params().iter()).all(|(x, y)| x == y);
    assert!(same);
    let differs = a.params().iter().zip(c.params().iter()).any(|(x, y)| x.1 != y.1);
    assert!(differs);
}

#[test]
fn masked_parts_own_no_parameters() {
    let ml = tiny(Variant::MlVae);
    assert!(ml.params().iter().all(|(n, _)| !n.starts_with("content_posterior") && !n.starts_with("content_prior")));
    assert!(ml.params().iter().any(|(n, _)| n.starts_with("motion_prior")));
    let svg = tiny(Variant::SvgLpStar);
    assert!(svg.params().iter().all(|(n, _)| !n.starts_with("motion")));
    assert!(!svg.has_core(Core::MotionPosterior));
    assert!(svg.has_core(Core::Predictor));
}

#[test]
fn cast_keeps_weights() {
    let m = tiny(Variant::CmVae);
    let f = m.cast::<f32>();
    let back = f.cast::<f64>();
    for ((_, a), (_, b)) in m.params().iter().zip(back.params().iter()) {
        assert!(a.max_abs_diff(b) < 1e-6);
    }
    assert_eq!(f.variant(), Variant::CmVae);
}

#[test]
fn outputs_finite_for_extreme_inputs() {
    let m = tiny(Variant::TpgVae);
    let g = Graph::inference(m.params());
    for v in [0.0, 1.0] {
        let f = m.encode_content(g.constant(Tensor::full(&[1, 1, 8, 8], v))).unwrap();
        let h = m.encode_motion(g.constant(Tensor::full(&[1, 1, 8, 8], 2.0 * v - 1.0))).unwrap();
        assert!(f.h.value().all_finite() && h.value().all_finite());
    }
}
