use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{RolloutMode, RolloutResult};
use crate::data::{read_clip_file, write_clip_file, Frame};
use crate::model::Variant;
use crate::{Error, Result};

/// Sidecar describing one dumped prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub clip_id: String,
    pub variant: Variant,
    pub mode: RolloutMode,
    pub t_p: usize,
    pub horizon: usize,
    pub checkpoint_fingerprint: String,
    pub seed: u64,
    /// Binary frame file, relative to the dump directory.
    pub frames: String,
}

fn file_stem(clip_id: &str) -> String {
    clip_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

/// Writes `<clip_id>.bin` and `<clip_id>.json` into `dir`.
pub fn write_prediction_dump(
    dir: &Path,
    result: &RolloutResult,
    variant: Variant,
    t_p: usize,
    checkpoint_fingerprint: &str,
    seed: u64,
) -> Result<PredictionRecord> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = file_stem(&result.clip_id);
    let record = PredictionRecord {
        clip_id: result.clip_id.clone(),
        variant,
        mode: result.mode,
        t_p,
        horizon: result.predicted.len(),
        checkpoint_fingerprint: checkpoint_fingerprint.to_string(),
        seed,
        frames: format!("{stem}.bin"),
    };
    write_clip_file(&dir.join(&record.frames), &result.predicted)?;
    let json_path = dir.join(format!("{stem}.json"));
    let json = serde_json::to_string_pretty(&record).expect("record serializes");
    fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;
    Ok(record)
}

pub fn read_prediction_dump(dir: &Path, clip_id: &str) -> Result<(PredictionRecord, Vec<Frame>)> {
    let json_path: PathBuf = dir.join(format!("{}.json", file_stem(clip_id)));
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let record: PredictionRecord =
        serde_json::from_str(&text).map_err(|e| Error::parse(&json_path, e.to_string()))?;
    let frames = read_clip_file(&dir.join(&record.frames))?;
    Ok((record, frames))
}
