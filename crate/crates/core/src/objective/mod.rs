//! The training objective: ℓ1 reconstruction plus β-weighted KL between
//! posterior and learned prior, and the optimizer that minimizes it.

mod optim;
mod train;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Real, Var};
use crate::batch::ClipBatch;
use crate::model::{GaussianVar, LatentGaussian, TpgModel};
use crate::rollout::{teacher_forced_trace, NoiseSource, TeacherForcedTrace};
use crate::{Error, Result};

pub use optim::{clip_global_norm, global_norm, AdamState};
pub use train::{train_epoch, train_step, EpochLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub beta: f64,
    pub learning_rate: f64,
    /// Frames per training sequence (`T`).
    #[serde(alias = "T")]
    pub seq_len: usize,
    /// Observed frames (`t_p`).
    pub t_p: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm bound; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            beta: 1e-4,
            learning_rate: 1e-4,
            seq_len: 20,
            t_p: 10,
            epochs: 200,
            batch_size: 16,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: Some(5.0),
        }
    }
}

impl TrainingConfig {
    // negated comparisons so that NaN fails too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Argument(m));
        if self.t_p < 1 || self.t_p >= self.seq_len {
            return fail(format!("need 1 <= t_p < T, got t_p = {} and T = {}", self.t_p, self.seq_len));
        }
        if !(self.beta >= 0.0) {
            return fail(format!("beta must be >= 0, got {}", self.beta));
        }
        // zero is allowed so a step can be checked for being a no-op
        if !(self.learning_rate >= 0.0) {
            return fail(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return fail("Adam moment coefficients must lie in [0, 1)".into());
        }
        if !(self.adam_eps > 0.0) {
            return fail("adam_eps must be positive".into());
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return fail(format!("grad_clip must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

/// Per-clip averages of the loss terms over one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon_l1: f64,
    pub kl_content: f64,
    pub kl_motion: f64,
    pub total: f64,
    pub beta: f64,
}

impl LossBreakdown {
    pub fn new(recon_l1: f64, kl_content: f64, kl_motion: f64, beta: f64) -> Self {
        LossBreakdown {
            recon_l1,
            kl_content,
            kl_motion,
            total: recon_l1 + beta * (kl_content + kl_motion),
            beta,
        }
    }
}

/// `mean + exp(log_var / 2) * noise`.
pub fn reparameterize(gauss: &LatentGaussian, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != gauss.dim() {
        return Err(Error::Shape(format!(
            "noise has {} dims, gaussian {}",
            noise.len(),
            gauss.dim()
        )));
    }
    Ok(gauss
        .mean
        .iter()
        .zip(&gauss.log_var)
        .zip(noise)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect())
}

/// Differentiable [`reparameterize`] on a graph.
pub fn reparameterize_var<'g, T: Real>(gauss: &GaussianVar<'g, T>, noise: Var<'g, T>) -> Var<'g, T> {
    gauss.sample(noise)
}

/// `KL(q || p)` for diagonal Gaussians, summed over dimensions.
pub fn kl_diag_gaussian(q: &LatentGaussian, p: &LatentGaussian) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::Shape(format!("KL between {} and {} dims", q.dim(), p.dim())));
    }
    Ok((0..q.dim())
        .map(|i| {
            let (mq, lq, mp, lp) = (q.mean[i], q.log_var[i], p.mean[i], p.log_var[i]);
            let d = mq - mp;
            0.5 * (lp - lq + ((lq - lp).exp() + d * d * (-lp).exp()) - 1.0)
        })
        .sum())
}

/// `KL(q || p)` summed over dimensions and batch rows.
pub fn kl_diag_var<'g, T: Real>(q: &GaussianVar<'g, T>, p: &GaussianVar<'g, T>) -> Var<'g, T> {
    let d = q.mean.sub(p.mean);
    let ratio = q.log_var.sub(p.log_var).exp();
    let maha = d.square().mul(p.log_var.scale(-1.0).exp());
    p.log_var
        .sub(q.log_var)
        .add(ratio)
        .add(maha)
        .add_scalar(-1.0)
        .sum_all()
        .scale(0.5)
}

/// Loss node and its breakdown for a traced teacher-forced pass.
pub fn loss_from_trace<'g, T: Real>(
    graph: &'g Graph<T>,
    trace: &TeacherForcedTrace<'g, T>,
    batch: &ClipBatch<T>,
    beta: f64,
) -> Result<(Var<'g, T>, LossBreakdown)> {
    if trace.predictions.len() + 1 != batch.len() {
        return Err(Error::Shape(format!(
            "{} predictions for a {}-frame batch",
            trace.predictions.len(),
            batch.len()
        )));
    }
    let n = batch.batch_size() as f64;
    let per_frame = batch.frames[0].row_len() as f64;
    let mut recon = graph.zeros(&[1]);
    for (pred, target) in trace.predictions.iter().zip(&batch.frames[1..]) {
        let l1 = pred.sub(graph.constant(target.clone())).abs().sum_all();
        recon = recon.add(l1);
    }
    let recon = recon.scale(1.0 / (n * per_frame));
    let kl_sum = |pairs: &[(GaussianVar<'g, T>, GaussianVar<'g, T>)]| {
        pairs.iter().fold(graph.zeros(&[1]), |acc, (q, p)| {
            acc.add(kl_diag_var(q, p))
        })
        .scale(1.0 / n)
    };
    let (kl_c, kl_m) = (kl_sum(&trace.content), kl_sum(&trace.motion));
    let total = recon.add(kl_c.add(kl_m).scale(beta));
    let breakdown = LossBreakdown::new(recon.item().f64(), kl_c.item().f64(), kl_m.item().f64(), beta);
    Ok((total, breakdown))
}

fn check_batch<T: Real>(batch: &ClipBatch<T>, config: &TrainingConfig) -> Result<()> {
    config.validate()?;
    if batch.len() != config.seq_len {
        return Err(Error::Argument(format!(
            "batch has {} frames per clip, training uses T = {}",
            batch.len(),
            config.seq_len
        )));
    }
    Ok(())
}

/// Loss node on `graph`; a tracking graph keeps what backpropagation needs.
pub fn sequence_loss_var<'g, T: Real>(
    graph: &'g Graph<T>,
    model: &TpgModel<T>,
    batch: &ClipBatch<T>,
    config: &TrainingConfig,
    noise: &NoiseSource,
) -> Result<(Var<'g, T>, LossBreakdown)> {
    check_batch(batch, config)?;
    let trace = teacher_forced_trace(graph, model, batch, config.t_p, noise)?;
    loss_from_trace(graph, &trace, batch, config.beta)
}

/// Batch-mean loss over `t = 2..=T`, without gradients.
pub fn sequence_loss<T: Real>(
    batch: &ClipBatch<T>,
    model: &TpgModel<T>,
    config: &TrainingConfig,
    noise: &NoiseSource,
) -> Result<LossBreakdown> {
    let graph = Graph::inference(model.params());
    Ok(sequence_loss_var(&graph, model, batch, config, noise)?.1)
}
