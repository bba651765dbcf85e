mod eval;
mod plot;
mod predict;
mod synthgen;
mod train;

use std::path::{Path, PathBuf};

use tpg_core::checkpoint::sha256_hex;
use tpg_core::data::{load_clip, load_manifest, ClipManifest, ManifestEntry, Split, VideoClip};
use tpg_core::exec::Exec;

pub use eval::{eval, EvalArgs, EvalMeta, EvalOutcome, EVAL_META};
pub use plot::{plot, PlotArgs};
pub use predict::{predict, PredictArgs, PredictOutcome};
pub use synthgen::synthgen;
pub use train::{read_log, train, TrainArgs, TrainOutcome, LOG_NAME};

use crate::config::{deterministic_mode, ExperimentConfig};
use crate::error::{CliError, CliResult};

pub const CHECKPOINT_EXT: &str = "safetensors";
pub const INIT_CHECKPOINT: &str = "checkpoint_init";
pub const BEST_CHECKPOINT: &str = "checkpoint_best";
pub const FINAL_CHECKPOINT: &str = "checkpoint_final";

pub fn checkpoint_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.{CHECKPOINT_EXT}"))
}

/// Sequential under deterministic mode, parallel otherwise.
pub fn exec() -> Exec {
    if deterministic_mode() {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

/// Loads the manifest and checks it describes the frames the model expects.
fn open_dataset(cfg: &ExperimentConfig) -> CliResult<ClipManifest> {
    let manifest = load_manifest(&cfg.data.root)?;
    let m = &cfg.model;
    if (manifest.frame_size, manifest.channels, manifest.num_classes) != (m.frame_size, m.channels, m.num_classes) {
        return Err(CliError::Usage(format!(
            "dataset at {} has {}x{} frames with {} channels and {} classes, the model expects {}x{}, {} and {}",
            cfg.data.root.display(),
            manifest.frame_size,
            manifest.frame_size,
            manifest.channels,
            manifest.num_classes,
            m.frame_size,
            m.frame_size,
            m.channels,
            m.num_classes
        )));
    }
    Ok(manifest)
}

fn data_fingerprint(manifest: &ClipManifest) -> String {
    sha256_hex(&serde_json::to_vec(manifest).expect("manifest serializes"))
}

fn load_entries(cfg: &ExperimentConfig, manifest: &ClipManifest, entries: &[&ManifestEntry]) -> CliResult<Vec<VideoClip>> {
    let loaded = exec().try_map(entries, |e| load_clip(&cfg.data.root, manifest, e))?;
    Ok(loaded)
}

fn split_entries(manifest: &ClipManifest, split: Split) -> Vec<&ManifestEntry> {
    manifest.split(split).collect()
}

/// Runs synthgen, trains each `eval.variants` entry, evaluates and plots.
/// Returns the written plot paths.
pub fn pipeline(cfg: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    synthgen(cfg)?;
    for &variant in &cfg.eval.variants {
        train(
            cfg,
            &TrainArgs {
                variant: Some(variant),
                ..TrainArgs::default()
            },
        )?;
    }
    let res = eval(cfg, &EvalArgs::new(&cfg.run.dir))?;
    plot(&PlotArgs {
        input: res.out_dir,
        out: cfg.run.dir.join("plots"),
        marker: None,
    })
}
