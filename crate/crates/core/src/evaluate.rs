//! Per-horizon evaluation of a trained model on held-out clips.

use crate::data::VideoClip;
use crate::exec::Exec;
use crate::metrics::{best_of_k, metric_curve, Embedder, Metric, MetricSeries};
use crate::model::{TpgModel, Variant};
use crate::rollout::{prior_mean_rollout, sampled_rollout, NoiseSource, Observation, RolloutResult};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub t_p: usize,
    pub horizon: usize,
    /// Samples per clip for the sampling baseline.
    pub k: usize,
    pub metrics: Vec<Metric>,
    /// Clips rolled out together.
    pub batch_size: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl EvalOptions {
    /// Absolute time label of the first predicted frame.
    pub fn first_t(&self) -> usize {
        self.t_p + 1
    }
}

#[derive(Debug, Clone)]
pub struct ClipEvaluation {
    pub clip_id: String,
    /// The prior-mean rollout, or for the sampling baseline the best sample
    /// under the first requested metric.
    pub prediction: RolloutResult,
    pub series: Vec<MetricSeries>,
}

/// Whether `variant` is scored by best-of-k over prior samples rather than
/// by its prior-mean rollout.
pub fn uses_sampling(variant: Variant) -> bool {
    variant == Variant::SvgLpStar
}

fn evaluate_chunk(
    model: &TpgModel<f32>,
    clips: &[VideoClip],
    opts: &EvalOptions,
    embedder: &dyn Embedder,
) -> Result<Vec<ClipEvaluation>> {
    let variant = model.variant().name().to_string();
    let obs = clips
        .iter()
        .map(|c| Observation::from_clip(c, opts.t_p))
        .collect::<Result<Vec<_>>>()?;
    let truths: Vec<_> = clips
        .iter()
        .map(|c| &c.frames[opts.t_p..opts.t_p + opts.horizon])
        .collect();
    let series_of = |clip_id: &str, metric: Metric, per_step: Vec<f64>| MetricSeries {
        variant: variant.clone(),
        metric,
        clip_id: clip_id.to_string(),
        per_step,
    };

    if uses_sampling(model.variant()) {
        let samples = sampled_rollout(&obs, model, opts.horizon, opts.k, NoiseSource::Seeded(opts.seed))?;
        (0..clips.len())
            .map(|r| {
                let row: Vec<RolloutResult> = samples.iter().map(|s| s[r].clone()).collect();
                let mut series = Vec::new();
                let mut prediction = None;
                for &m in &opts.metrics {
                    let (_, best) = best_of_k(&row, truths[r], m, embedder)?;
                    series.push(series_of(&best.clip_id, m, metric_curve(&best.predicted, truths[r], m, embedder)?));
                    prediction.get_or_insert_with(|| best.clone());
                }
                Ok(ClipEvaluation {
                    clip_id: clips[r].clip_id.clone(),
                    prediction: prediction.unwrap_or_else(|| row[0].clone()),
                    series,
                })
            })
            .collect()
    } else {
        let results = prior_mean_rollout(&obs, model, opts.horizon)?;
        results
            .into_iter()
            .zip(&truths)
            .map(|(res, truth)| {
                let series = opts
                    .metrics
                    .iter()
                    .map(|&m| Ok(series_of(&res.clip_id, m, metric_curve(&res.predicted, truth, m, embedder)?)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(ClipEvaluation {
                    clip_id: res.clip_id.clone(),
                    prediction: res,
                    series,
                })
            })
            .collect()
    }
}

/// Rolls out `horizon` frames after the first `t_p` of every clip and scores
/// each step against the ground truth. Results keep the order of `clips`.
pub fn evaluate_variant(
    model: &TpgModel<f32>,
    clips: &[VideoClip],
    opts: &EvalOptions,
    embedder: &dyn Embedder,
) -> Result<Vec<ClipEvaluation>> {
    if opts.batch_size == 0 || opts.k == 0 || opts.horizon == 0 {
        return Err(Error::Argument("evaluation needs batch_size, k and horizon >= 1".into()));
    }
    if let Some(c) = clips.iter().find(|c| c.len() < opts.t_p + opts.horizon) {
        return Err(Error::Argument(format!(
            "clip {} has {} frames, evaluation needs t_p + horizon = {}",
            c.clip_id,
            c.len(),
            opts.t_p + opts.horizon
        )));
    }
    let chunks: Vec<&[VideoClip]> = clips.chunks(opts.batch_size).collect();
    let per_chunk = opts.exec.try_map(&chunks, |chunk| evaluate_chunk(model, chunk, opts, embedder))?;
    Ok(per_chunk.into_iter().flatten().collect())
}
