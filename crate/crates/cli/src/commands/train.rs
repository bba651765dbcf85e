use std::path::{Path, PathBuf};

use tpg_core::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, FORMAT_VERSION};
use tpg_core::data::Split;
use tpg_core::model::{TpgModel, Variant};
use tpg_core::objective::{train_epoch, AdamState, EpochLog};

use super::{
    checkpoint_path, data_fingerprint, load_entries, open_dataset, split_entries, BEST_CHECKPOINT,
    FINAL_CHECKPOINT, INIT_CHECKPOINT,
};
use crate::config::{deterministic_mode, ExperimentConfig};
use crate::error::{csv_err, io_err, CliError, CliResult};
use crate::lock::DirLock;

pub const LOG_NAME: &str = "train_log.csv";

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    /// Continue from this checkpoint instead of a fresh initialization.
    pub resume: Option<PathBuf>,
    /// Overrides the config's `variant`.
    pub variant: Option<Variant>,
    /// Overrides `training.epochs`, the total epoch count to reach.
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    /// Every row of the log file, including rows from before a resume.
    pub log: Vec<EpochLog>,
    pub final_checkpoint: PathBuf,
}

pub fn read_log(path: &Path) -> CliResult<Vec<EpochLog>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    rdr.deserialize()
        .collect::<Result<Vec<EpochLog>, _>>()
        .map_err(|e| csv_err(path, e))
}

fn write_log(path: &Path, rows: &[EpochLog]) -> CliResult<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp).map_err(|e| csv_err(&tmp, e))?;
        if rows.is_empty() {
            w.write_record(["epoch", "recon_l1", "kl_content", "kl_motion", "total", "wall_time_s"])
                .map_err(|e| csv_err(&tmp, e))?;
        }
        for r in rows {
            w.serialize(r).map_err(|e| csv_err(&tmp, e))?;
        }
        w.flush().map_err(|e| io_err(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

/// Trains one variant on the training split. Writes into `run.dir/<VARIANT>/`:
/// `checkpoint_init`, `checkpoint_epochNNNN` every `run.checkpoint_every`
/// epochs, `checkpoint_best`, `checkpoint_final` and `train_log.csv`.
pub fn train(cfg: &ExperimentConfig, args: &TrainArgs) -> CliResult<TrainOutcome> {
    let variant = args.variant.unwrap_or(cfg.variant);
    let mut training = cfg.training.clone();
    if let Some(e) = args.epochs {
        training.epochs = e;
    }
    let manifest = open_dataset(cfg)?;
    let fingerprint = data_fingerprint(&manifest);
    let clips = load_entries(cfg, &manifest, &split_entries(&manifest, Split::Train))?;
    if clips.is_empty() {
        return Err(CliError::Usage(format!("no training clips in {}", cfg.data.root.display())));
    }

    let dir = cfg.variant_dir(variant);
    let _lock = DirLock::acquire(&dir)?;
    let log_path = dir.join(LOG_NAME);
    let mut meta = CheckpointMeta {
        format_version: FORMAT_VERSION,
        variant,
        model: cfg.model.clone(),
        training: training.clone(),
        epoch: 0,
        seed: training.seed,
        data_fingerprint: fingerprint.clone(),
        best_total: None,
        adam_step: None,
        weights_sha256: String::new(),
    };

    let (mut model, mut optimizer, mut log) = match &args.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            let m = &ckpt.meta;
            let mismatch = if m.variant != variant {
                Some(format!("was trained as {}, not {}", m.variant, variant))
            } else if m.model != cfg.model {
                Some("has a different model configuration".to_string())
            } else if m.data_fingerprint != fingerprint {
                Some("was trained on a different dataset".to_string())
            } else {
                None
            };
            if let Some(msg) = mismatch {
                return Err(CliError::Core(tpg_core::Error::Checkpoint {
                    path: path.clone(),
                    msg,
                }));
            }
            meta.epoch = m.epoch;
            meta.best_total = m.best_total;
            let optimizer = ckpt.optimizer.unwrap_or_else(|| AdamState::new(ckpt.model.params()));
            let mut log = if log_path.exists() { read_log(&log_path)? } else { Vec::new() };
            log.retain(|r| r.epoch <= m.epoch);
            (ckpt.model, optimizer, log)
        }
        None => {
            let model = TpgModel::<f32>::new(cfg.model.clone(), variant, training.seed)?;
            let optimizer = AdamState::new(model.params());
            save_checkpoint(&checkpoint_path(&dir, INIT_CHECKPOINT), &model, Some(&optimizer), &meta)?;
            (model, optimizer, Vec::new())
        }
    };
    write_log(&log_path, &log)?;

    let deterministic = deterministic_mode();
    for epoch in meta.epoch + 1..=training.epochs {
        let mut row = train_epoch(&mut model, &clips, &training, &mut optimizer, epoch)?;
        if deterministic {
            row.wall_time_s = 0.0;
        }
        eprintln!(
            "{variant} epoch {epoch}/{}: total {:.6} recon {:.6} kl_c {:.6} kl_m {:.6}",
            training.epochs, row.total, row.recon_l1, row.kl_content, row.kl_motion
        );
        log.push(row);
        write_log(&log_path, &log)?;
        meta.epoch = epoch;
        let improved = meta.best_total.is_none_or(|b| row.total < b);
        if improved {
            meta.best_total = Some(row.total);
            save_checkpoint(&checkpoint_path(&dir, BEST_CHECKPOINT), &model, Some(&optimizer), &meta)?;
        }
        if epoch % cfg.run.checkpoint_every == 0 {
            let name = format!("checkpoint_epoch{epoch:04}");
            save_checkpoint(&checkpoint_path(&dir, &name), &model, Some(&optimizer), &meta)?;
        }
    }
    let final_checkpoint = checkpoint_path(&dir, FINAL_CHECKPOINT);
    save_checkpoint(&final_checkpoint, &model, Some(&optimizer), &meta)?;
    Ok(TrainOutcome {
        dir,
        log,
        final_checkpoint,
    })
}
