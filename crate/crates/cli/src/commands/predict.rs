use std::path::PathBuf;

use tpg_core::checkpoint::load_checkpoint;
use tpg_core::data::load_clip;
use tpg_core::evaluate::{evaluate_variant, EvalOptions};
use tpg_core::metrics::RandomConvEmbedder;
use tpg_core::rollout::{write_prediction_dump, PredictionRecord};

use super::{exec, open_dataset};
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::lock::DirLock;
use crate::render::{frame_strip, save_png};

#[derive(Debug, Clone)]
pub struct PredictArgs {
    pub checkpoint: PathBuf,
    pub clip: String,
    /// Defaults to `run.dir/predict/<VARIANT>`.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct PredictOutcome {
    pub out_dir: PathBuf,
    pub record: PredictionRecord,
    pub strip: PathBuf,
}

/// Predicts `eval.horizon` frames after the first `t_p` of one clip, the
/// same way `eval` does, and writes the dump plus `<clip>_strip.png`.
pub fn predict(cfg: &ExperimentConfig, args: &PredictArgs) -> CliResult<PredictOutcome> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let manifest = open_dataset(cfg)?;
    let entry = manifest.find(&args.clip).ok_or_else(|| {
        tpg_core::Error::NotFound(format!("clip {} in {}", args.clip, cfg.data.root.display()))
    })?;
    let clip = load_clip(&cfg.data.root, &manifest, entry)?;
    let opts = EvalOptions {
        t_p: cfg.training.t_p,
        horizon: cfg.eval.horizon,
        k: cfg.eval.k,
        metrics: cfg.eval.metrics.clone(),
        batch_size: 1,
        seed: cfg.eval.seed,
        exec: exec(),
    };
    let embedder = RandomConvEmbedder::new(cfg.model.frame_size, cfg.eval.embedder_seed)?;
    let result = evaluate_variant(&ckpt.model, std::slice::from_ref(&clip), &opts, &embedder)?
        .pop()
        .expect("one clip in, one result out");

    let variant = ckpt.meta.variant;
    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| cfg.run.dir.join("predict").join(variant.name()));
    let _lock = DirLock::acquire(&out_dir)?;
    let record = write_prediction_dump(
        &out_dir,
        &result.prediction,
        variant,
        opts.t_p,
        &ckpt.meta.weights_sha256,
        opts.seed,
    )?;
    let truth = &clip.frames[opts.t_p..opts.t_p + opts.horizon];
    let strip = out_dir.join(format!("{}_strip.png", record.frames.trim_end_matches(".bin")));
    save_png(&frame_strip(truth, &result.prediction.predicted)?, &strip)?;
    Ok(PredictOutcome { out_dir, record, strip })
}
