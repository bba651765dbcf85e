use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tpg_core::checkpoint::load_checkpoint;
use tpg_core::data::{ClipManifest, ManifestEntry, Split};
use tpg_core::evaluate::{evaluate_variant, EvalOptions};
use tpg_core::metrics::{aggregate, write_series_csv, AggregateTable, RandomConvEmbedder};
use tpg_core::model::Variant;
use tpg_core::rollout::write_prediction_dump;

use super::{checkpoint_path, exec, load_entries, open_dataset, FINAL_CHECKPOINT};
use crate::config::ExperimentConfig;
use crate::error::{io_err, CliError, CliResult};
use crate::lock::DirLock;

pub const EVAL_META: &str = "eval_meta.json";

#[derive(Debug, Clone)]
pub struct EvalArgs {
    /// Holds one `<VARIANT>/` subdirectory per variant, as written by `train`.
    pub checkpoints: PathBuf,
    /// Defaults to `run.dir/eval`.
    pub out: Option<PathBuf>,
    /// Checkpoint file stem inside each variant directory.
    pub checkpoint_name: String,
}

impl EvalArgs {
    pub fn new(checkpoints: impl Into<PathBuf>) -> Self {
        EvalArgs {
            checkpoints: checkpoints.into(),
            out: None,
            checkpoint_name: FINAL_CHECKPOINT.to_string(),
        }
    }
}

/// Written next to the CSVs so `plot` knows where the training horizon is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMeta {
    pub t_p: usize,
    /// Frames per training sequence; the marker position in plots.
    pub train_horizon: usize,
    pub horizon: usize,
    pub k: usize,
    pub variants: Vec<Variant>,
    pub checkpoint_name: String,
    pub clip_ids: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub out_dir: PathBuf,
    /// Rows at `eval.time_steps` only.
    pub table: AggregateTable,
    /// Rows at every predicted step.
    pub curves: AggregateTable,
    pub meta: EvalMeta,
}

/// Up to `count` test clips, taken round-robin across classes so the
/// classes stay balanced.
fn balanced_selection(manifest: &ClipManifest, count: usize) -> Vec<&ManifestEntry> {
    let mut by_class: BTreeMap<usize, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in manifest.split(Split::Test) {
        by_class.entry(e.gesture.index()).or_default().push(e);
    }
    let mut queues: Vec<_> = by_class.into_values().map(|v| v.into_iter()).collect();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let before = out.len();
        for q in queues.iter_mut() {
            if out.len() == count {
                break;
            }
            if let Some(e) = q.next() {
                out.push(e);
            }
        }
        if out.len() == before {
            break;
        }
    }
    out
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializes") + "\n";
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Scores every `eval.variants` checkpoint on the balanced test clips and
/// writes `table.csv`, `curves.csv`, `per_clip.csv`, `eval_meta.json` and
/// `predictions/<VARIANT>/`.
pub fn eval(cfg: &ExperimentConfig, args: &EvalArgs) -> CliResult<EvalOutcome> {
    let e = &cfg.eval;
    let paths: Vec<(Variant, PathBuf)> = e
        .variants
        .iter()
        .map(|&v| (v, checkpoint_path(&args.checkpoints.join(v.name()), &args.checkpoint_name)))
        .collect();
    let missing: Vec<String> = paths
        .iter()
        .filter(|(_, p)| !p.is_file())
        .map(|(v, _)| v.name().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::MissingCheckpoints {
            variants: missing,
            looked_for: checkpoint_path(&args.checkpoints.join("<VARIANT>"), &args.checkpoint_name),
        });
    }

    let manifest = open_dataset(cfg)?;
    let entries = balanced_selection(&manifest, e.clip_count);
    if entries.is_empty() {
        return Err(CliError::Usage(format!("no test clips in {}", cfg.data.root.display())));
    }
    let clips = load_entries(cfg, &manifest, &entries)?;
    let embedder = RandomConvEmbedder::new(cfg.model.frame_size, e.embedder_seed)?;
    let out_dir = args.out.clone().unwrap_or_else(|| cfg.run.dir.join("eval"));
    let _lock = DirLock::acquire(&out_dir)?;

    let opts = EvalOptions {
        t_p: cfg.training.t_p,
        horizon: e.horizon,
        k: e.k,
        metrics: e.metrics.clone(),
        batch_size: e.batch_size,
        seed: e.seed,
        exec: exec(),
    };
    let mut series = Vec::new();
    for (variant, path) in &paths {
        let ckpt = load_checkpoint(path)?;
        if ckpt.meta.variant != *variant {
            return Err(CliError::Core(tpg_core::Error::Checkpoint {
                path: path.clone(),
                msg: format!("holds a {} model, expected {variant}", ckpt.meta.variant),
            }));
        }
        eprintln!("evaluating {variant} on {} clips", clips.len());
        let results = evaluate_variant(&ckpt.model, &clips, &opts, &embedder)?;
        let dump_dir = out_dir.join("predictions").join(variant.name());
        for r in results {
            write_prediction_dump(&dump_dir, &r.prediction, *variant, opts.t_p, &ckpt.meta.weights_sha256, e.seed)?;
            series.extend(r.series);
        }
    }

    let curves = aggregate(&series, opts.first_t())?;
    let table = curves.at_times(&e.time_steps)?;
    table.write_csv(&out_dir.join("table.csv"))?;
    curves.write_csv(&out_dir.join("curves.csv"))?;
    write_series_csv(&out_dir.join("per_clip.csv"), &series, opts.first_t())?;
    let meta = EvalMeta {
        t_p: opts.t_p,
        train_horizon: cfg.training.seq_len,
        horizon: e.horizon,
        k: e.k,
        variants: e.variants.clone(),
        checkpoint_name: args.checkpoint_name.clone(),
        clip_ids: clips.iter().map(|c| c.clip_id.clone()).collect(),
    };
    write_json(&out_dir.join(EVAL_META), &meta)?;
    Ok(EvalOutcome {
        out_dir,
        table,
        curves,
        meta,
    })
}
