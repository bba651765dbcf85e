use std::collections::HashSet;

use tpg_core::data::{build_synthetic_dataset, write_dataset, ClipManifest};

use super::exec;
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::lock::DirLock;

/// Renders the synthetic dataset into `data.root`. Within each class the
/// last `round(test_fraction * clips_per_class)` clips form the test split.
pub fn synthgen(cfg: &ExperimentConfig) -> CliResult<ClipManifest> {
    let d = &cfg.data;
    let _lock = DirLock::acquire(&d.root)?;
    let clips = build_synthetic_dataset(d.clips_per_class, d.clip_length, d.seed, &d.synth_options(), exec())?;
    let n_test = (d.test_fraction * d.clips_per_class as f64).round() as usize;
    let test_ids: HashSet<String> = clips
        .chunks(d.clips_per_class.max(1))
        .flat_map(|class| class[class.len() - n_test.min(class.len())..].iter())
        .map(|c| c.clip_id.clone())
        .collect();
    Ok(write_dataset(&d.root, &clips, &test_ids, d.num_classes)?)
}
