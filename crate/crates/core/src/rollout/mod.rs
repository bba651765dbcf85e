//! Sequence procedures: the teacher-forced training pass, prior-mean
//! generation and sampled generation.
//!
//! Frame indices are zero-based here: index `i` is time step `t = i + 1`.

mod dump;
mod noise;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Real, Tensor, Var};
use crate::batch::{clip_key, frames_to_tensor, gray_difference, tensor_to_frames, ClipBatch};
use crate::data::{one_hot_label, Frame, GestureClass, VideoClip};
use crate::model::{Core, EncoderFeatures, GaussianVar, LatentGaussian, RecurrentState, TpgModel};
use crate::{Error, Result};

pub use dump::{read_prediction_dump, write_prediction_dump, PredictionRecord};
pub use noise::{mix_seed, NoisePart, NoiseSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutMode {
    TeacherForced,
    PriorMean,
    Sampled,
}

/// Posterior and prior of one step for each active latent.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLatents {
    pub content: Option<(LatentGaussian, LatentGaussian)>,
    pub motion: Option<(LatentGaussian, LatentGaussian)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    pub clip_id: String,
    pub mode: RolloutMode,
    /// Frames after the observed window.
    pub predicted: Vec<Frame>,
    /// Frames for `t = 2..=t_p`, when the procedure produces them.
    pub reconstructions: Option<Vec<Frame>>,
    pub latents: Option<Vec<StepLatents>>,
}

/// Graph nodes of a teacher-forced pass, one entry per step `t = 2..=T`.
pub struct TeacherForcedTrace<'g, T: Real> {
    pub predictions: Vec<Var<'g, T>>,
    /// `(posterior, prior)` per step; empty when content is masked out.
    pub content: Vec<(GaussianVar<'g, T>, GaussianVar<'g, T>)>,
    pub motion: Vec<(GaussianVar<'g, T>, GaussianVar<'g, T>)>,
}

/// Runs all cores on ground truth for `t = 2..=T` (`T = batch.len()`).
///
/// Posteriors see the features of `x_t`, priors and the predictor those of
/// `x_{t-1}`; latents are reparameterized posterior samples. The decoder's
/// skips come from the last frame of the observed window seen so far,
/// `x_{min(t-1, t_p)}`.
pub fn teacher_forced_trace<'g, T: Real>(
    graph: &'g Graph<T>,
    model: &TpgModel<T>,
    batch: &ClipBatch<T>,
    t_p: usize,
    noise: &NoiseSource,
) -> Result<TeacherForcedTrace<'g, T>> {
    let len = batch.len();
    if len < 2 {
        return Err(Error::Argument(format!("teacher forcing needs 2 frames, got {len}")));
    }
    if t_p < 1 || t_p >= len {
        return Err(Error::Argument(format!("t_p = {t_p} must satisfy 1 <= t_p < T = {len}")));
    }
    let mask = model.mask();
    let n = batch.batch_size();
    let latent = model.config().latent_dim;

    let content: Vec<EncoderFeatures<'g, T>> = batch
        .frames
        .iter()
        .map(|x| model.encode_content(graph.constant(x.clone())))
        .collect::<Result<_>>()?;
    let motion: Vec<Var<'g, T>> = if mask.motion {
        batch
            .diffs
            .iter()
            .map(|d| model.encode_motion(graph.constant(d.clone())))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let label = mask.label.then(|| graph.constant(batch.labels.clone()));

    let mut trace = TeacherForcedTrace {
        predictions: Vec::with_capacity(len - 1),
        content: Vec::new(),
        motion: Vec::new(),
    };
    let mut s_qc = model.initial_state_var(graph, Core::ContentPosterior, n);
    let mut s_pc = model.initial_state_var(graph, Core::ContentPrior, n);
    let mut s_qm = model.initial_state_var(graph, Core::MotionPosterior, n);
    let mut s_pm = model.initial_state_var(graph, Core::MotionPrior, n);
    let mut s_pred = model.initial_state_var(graph, Core::Predictor, n);

    for i in 1..len {
        let c = if mask.content {
            let (q, s1) = model.posterior_step(Core::ContentPosterior, content[i].h, &s_qc)?;
            let (p, s2) = model.prior_step(Core::ContentPrior, content[i - 1].h, &s_pc)?;
            (s_qc, s_pc) = (s1, s2);
            let eps = graph.constant(noise.draw(&batch.keys, i, NoisePart::Content, latent));
            trace.content.push((q, p));
            Some(q.sample(eps))
        } else {
            None
        };
        let m = if mask.motion {
            let (q, s1) = model.posterior_step(Core::MotionPosterior, motion[i], &s_qm)?;
            let (p, s2) = model.prior_step(Core::MotionPrior, motion[i - 1], &s_pm)?;
            (s_qm, s_pm) = (s1, s2);
            let eps = graph.constant(noise.draw(&batch.keys, i, NoisePart::Motion, latent));
            trace.motion.push((q, p));
            Some(q.sample(eps))
        } else {
            None
        };
        let z = model.assemble_latent(c, m, label)?;
        let (g, s) = model.predictor_step(content[i - 1].h, &z, &s_pred)?;
        s_pred = s;
        let skip_from = (i - 1).min(t_p - 1);
        trace.predictions.push(model.decode(g, &content[skip_from].skips)?);
    }
    Ok(trace)
}

/// Teacher-forced pass over the first `len` frames of each clip, without gradients.
pub fn teacher_forced_pass<T: Real>(
    clips: &[&VideoClip],
    model: &TpgModel<T>,
    t_p: usize,
    len: usize,
    noise: &NoiseSource,
) -> Result<Vec<RolloutResult>> {
    let batch = ClipBatch::<T>::from_clips(clips, len, model.config().num_classes)?;
    let graph = Graph::inference(model.params());
    let trace = teacher_forced_trace(&graph, model, &batch, t_p, noise)?;
    let frames: Vec<Vec<Frame>> = trace.predictions.iter().map(|p| tensor_to_frames(&p.value())).collect();
    let rows = |pairs: &[(GaussianVar<'_, T>, GaussianVar<'_, T>)]| -> Vec<Vec<(LatentGaussian, LatentGaussian)>> {
        pairs
            .iter()
            .map(|(q, p)| q.rows().into_iter().zip(p.rows()).collect())
            .collect()
    };
    let (content, motion) = (rows(&trace.content), rows(&trace.motion));
    Ok((0..batch.batch_size())
        .map(|r| {
            let mut recon = Vec::new();
            let mut predicted = Vec::new();
            for (k, step) in frames.iter().enumerate() {
                // step k produces frame index k + 1
                if k + 1 < t_p {
                    recon.push(step[r].clone());
                } else {
                    predicted.push(step[r].clone());
                }
            }
            let latents = (0..len - 1)
                .map(|k| StepLatents {
                    content: content.get(k).map(|v| v[r].clone()),
                    motion: motion.get(k).map(|v| v[r].clone()),
                })
                .collect();
            RolloutResult {
                clip_id: batch.clip_ids[r].clone(),
                mode: RolloutMode::TeacherForced,
                predicted,
                reconstructions: Some(recon),
                latents: Some(latents),
            }
        })
        .collect())
}

/// Conditioning input of a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub clip_id: String,
    pub frames: Vec<Frame>,
    pub label: GestureClass,
}

impl Observation {
    /// The first `t_p` frames of a clip.
    pub fn from_clip(clip: &VideoClip, t_p: usize) -> Result<Self> {
        if t_p > clip.len() {
            return Err(Error::Argument(format!(
                "clip {} has {} frames, fewer than t_p = {t_p}",
                clip.clip_id,
                clip.len()
            )));
        }
        Ok(Observation {
            clip_id: clip.clip_id.clone(),
            frames: clip.frames[..t_p].to_vec(),
            label: clip.gesture,
        })
    }

    pub fn with_label(mut self, label: GestureClass) -> Self {
        self.label = label;
        self
    }
}

/// Generation state carried between steps, detached from any graph.
///
/// Each [`RolloutSession::step`] builds a fresh inference graph, so rolling
/// out `a` steps and then `b` more is identical to rolling out `a + b`.
pub struct RolloutSession<'m, T: Real> {
    model: &'m TpgModel<T>,
    noise: NoiseSource,
    keys: Vec<u64>,
    labels: Tensor<T>,
    skips: Vec<Tensor<T>>,
    content_prior: RecurrentState<T>,
    motion_prior: RecurrentState<T>,
    predictor: RecurrentState<T>,
    /// Content feature of the last frame.
    h_prev: Tensor<T>,
    /// Motion feature of the last frame difference.
    m_prev: Option<Tensor<T>>,
    /// The last frame and the one before it.
    frame_prev: Tensor<T>,
    /// A generated frame whose features are not yet computed.
    pending: Option<Tensor<T>>,
    next_index: usize,
}

impl<'m, T: Real> RolloutSession<'m, T> {
    /// Threads every prior core and the predictor through the observed
    /// frames `t = 2..=t_p`.
    pub fn warm_up(model: &'m TpgModel<T>, observations: &[Observation], noise: NoiseSource) -> Result<Self> {
        let first = observations
            .first()
            .ok_or_else(|| Error::Argument("rollout of an empty batch".into()))?;
        let t_p = first.frames.len();
        if t_p < 2 {
            return Err(Error::Argument(format!("t_p = {t_p}, need at least 2 observed frames")));
        }
        if let Some(o) = observations.iter().find(|o| o.frames.len() != t_p) {
            return Err(Error::Argument(format!(
                "observation {} has {} frames, expected {t_p}",
                o.clip_id,
                o.frames.len()
            )));
        }
        let cfg = model.config();
        let n = observations.len();
        let frames = (0..t_p)
            .map(|i| frames_to_tensor::<T>(&observations.iter().map(|o| &o.frames[i]).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?;
        let mut labels = Vec::with_capacity(n * cfg.num_classes);
        for o in observations {
            labels.extend(one_hot_label(o.label, cfg.num_classes)?.into_iter().map(|v| T::c(v as f64)));
        }
        let &[_, _, h, w] = frames[0].shape() else { unreachable!() };

        type Features<T> = (Tensor<T>, Vec<Tensor<T>>, Option<Tensor<T>>);
        let features = |x: &Tensor<T>, prev: Option<&Tensor<T>>| -> Result<Features<T>> {
            let graph = Graph::inference(model.params());
            let f = model.encode_content(graph.constant(x.clone()))?;
            let m = if model.mask().motion {
                let d = match prev {
                    Some(p) => gray_difference(p, x),
                    None => Tensor::zeros(&[n, 1, h, w]),
                };
                Some((*model.encode_motion(graph.constant(d))?.value()).clone())
            } else {
                None
            };
            let skips = f.skips.iter().map(|s| (*s.value()).clone()).collect();
            Ok(((*f.h.value()).clone(), skips, m))
        };

        let (h0, skips0, m0) = features(&frames[0], None)?;
        let mut session = RolloutSession {
            model,
            noise,
            keys: observations.iter().map(|o| clip_key(&o.clip_id)).collect(),
            labels: Tensor::from_vec(&[n, cfg.num_classes], labels),
            skips: skips0,
            content_prior: model.initial_state(Core::ContentPrior, n),
            motion_prior: model.initial_state(Core::MotionPrior, n),
            predictor: model.initial_state(Core::Predictor, n),
            h_prev: h0,
            m_prev: m0,
            frame_prev: frames[0].clone(),
            pending: None,
            next_index: 1,
        };
        for i in 1..t_p {
            session.advance_cores()?;
            let (h, skips, m) = features(&frames[i], Some(&frames[i - 1]))?;
            session.h_prev = h;
            session.m_prev = m;
            session.skips = skips;
            session.frame_prev = frames[i].clone();
            session.next_index = i + 1;
        }
        Ok(session)
    }

    pub fn batch_size(&self) -> usize {
        self.keys.len()
    }

    /// Zero-based index of the frame the next step produces.
    pub fn next_index(&self) -> usize {
        self.next_index
    }

    /// One prior and predictor step from the stored features; returns `g_t`
    /// as a tensor and leaves the states advanced.
    fn advance_cores(&mut self) -> Result<Tensor<T>> {
        let model = self.model;
        let mask = model.mask();
        let latent = model.config().latent_dim;
        let graph = Graph::inference(model.params());
        let h_prev = graph.constant(self.h_prev.clone());
        let i = self.next_index;
        let c = if mask.content {
            let s = self.content_prior.attach(&graph);
            let (p, next) = model.prior_step(Core::ContentPrior, h_prev, &s)?;
            self.content_prior = next.detach();
            let eps = graph.constant(self.noise.draw(&self.keys, i, NoisePart::Content, latent));
            Some(p.sample(eps))
        } else {
            None
        };
        let m = match (&self.m_prev, mask.motion) {
            (Some(m_prev), true) => {
                let s = self.motion_prior.attach(&graph);
                let (p, next) = model.prior_step(Core::MotionPrior, graph.constant(m_prev.clone()), &s)?;
                self.motion_prior = next.detach();
                let eps = graph.constant(self.noise.draw(&self.keys, i, NoisePart::Motion, latent));
                Some(p.sample(eps))
            }
            _ => None,
        };
        let label = mask.label.then(|| graph.constant(self.labels.clone()));
        let z = model.assemble_latent(c, m, label)?;
        let s = self.predictor.attach(&graph);
        let (g, next) = model.predictor_step(h_prev, &z, &s)?;
        self.predictor = next.detach();
        Ok((*g.value()).clone())
    }

    fn absorb_pending(&mut self) -> Result<()> {
        let Some(x) = self.pending.take() else {
            return Ok(());
        };
        let graph = Graph::inference(self.model.params());
        let f = self.model.encode_content(graph.constant(x.clone()))?;
        self.h_prev = (*f.h.value()).clone();
        if self.model.mask().motion {
            let d = gray_difference(&self.frame_prev, &x);
            self.m_prev = Some((*self.model.encode_motion(graph.constant(d))?.value()).clone());
        }
        self.frame_prev = x;
        Ok(())
    }

    /// Generates the next frame batch `[N, c, h, w]`.
    pub fn step(&mut self) -> Result<Tensor<T>> {
        self.absorb_pending()?;
        let g = self.advance_cores()?;
        let graph = Graph::inference(self.model.params());
        let skips: Vec<_> = self.skips.iter().map(|s| graph.constant(s.clone())).collect();
        let x = (*self.model.decode(graph.constant(g), &skips)?.value()).clone();
        self.pending = Some(x.clone());
        self.next_index += 1;
        Ok(x)
    }

    /// `horizon` further frames, one `[N, c, h, w]` tensor per step.
    pub fn rollout(&mut self, horizon: usize) -> Result<Vec<Tensor<T>>> {
        (0..horizon).map(|_| self.step()).collect()
    }
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon < 1 {
        return Err(Error::Argument("rollout horizon must be at least 1".into()));
    }
    Ok(())
}

fn split_rows(observations: &[Observation], steps: &[Tensor<impl Real>], mode: RolloutMode) -> Vec<RolloutResult> {
    let per_step: Vec<Vec<Frame>> = steps.iter().map(tensor_to_frames).collect();
    observations
        .iter()
        .enumerate()
        .map(|(r, o)| RolloutResult {
            clip_id: o.clip_id.clone(),
            mode,
            predicted: per_step.iter().map(|s| s[r].clone()).collect(),
            reconstructions: None,
            latents: None,
        })
        .collect()
}

/// Deterministic generation from prior means, one result per observation.
pub fn prior_mean_rollout<T: Real>(
    observations: &[Observation],
    model: &TpgModel<T>,
    horizon: usize,
) -> Result<Vec<RolloutResult>> {
    check_horizon(horizon)?;
    let mut session = RolloutSession::warm_up(model, observations, NoiseSource::Zero)?;
    let steps = session.rollout(horizon)?;
    Ok(split_rows(observations, &steps, RolloutMode::PriorMean))
}

/// `k` generations with latents sampled from the priors. Result `[j][r]` is
/// sample `j` of observation `r`.
pub fn sampled_rollout<T: Real>(
    observations: &[Observation],
    model: &TpgModel<T>,
    horizon: usize,
    k: usize,
    noise: NoiseSource,
) -> Result<Vec<Vec<RolloutResult>>> {
    check_horizon(horizon)?;
    if k < 1 {
        return Err(Error::Argument("sampled rollout needs k >= 1".into()));
    }
    (0..k)
        .map(|j| {
            let mut session = RolloutSession::warm_up(model, observations, noise.sub_source(j))?;
            let steps = session.rollout(horizon)?;
            Ok(split_rows(observations, &steps, RolloutMode::Sampled))
        })
        .collect()
}

#[cfg(test)]
mod tests;
