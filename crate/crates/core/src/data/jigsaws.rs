//! Ingestion of JIGSAWS-style recordings.
//!
//! Layout:
//!
//! ```text
//! root/video/<video_id>/frame_000001.png ...
//! root/transcriptions/<video_id>.txt      "<start> <end> <gesture token>" per line
//! ```
//!
//! Every transcription line whose token is one of the selected gestures
//! becomes one clip. The operator is the letter leading the last
//! `_`-separated part of the video id (`Suturing_B001` -> `B`); the first
//! `train_users` operators in sorted order form the training split and the
//! rest the test split.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;

use super::store::{ClipManifest, ManifestEntry, Split};
use super::{subsample_every_other, ClipSource, Frame, GestureClass, VideoClip, DEFAULT_GESTURE_TOKENS};
use crate::{Error, Result};

/// Highest gesture number in the JIGSAWS vocabulary.
const MAX_GESTURE: u32 = 15;

#[derive(Debug, Clone)]
pub struct JigsawsOptions {
    pub frame_size: usize,
    pub channels: usize,
    pub train_users: usize,
    /// Selected tokens in canonical class order.
    pub gestures: Vec<String>,
    pub subsample: bool,
}

impl Default for JigsawsOptions {
    fn default() -> Self {
        JigsawsOptions {
            frame_size: 64,
            channels: 3,
            train_users: 6,
            gestures: DEFAULT_GESTURE_TOKENS.iter().map(|s| s.to_string()).collect(),
            subsample: true,
        }
    }
}

fn frame_path(root: &Path, video: &str, n: usize) -> PathBuf {
    root.join("video").join(video).join(format!("frame_{n:06}.png"))
}

fn user_of(video: &str) -> String {
    let tail = video.rsplit('_').next().unwrap_or(video);
    let mut chars = tail.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() && chars.clone().count() > 0 && chars.all(|d| d.is_ascii_digit()) => {
            c.to_string()
        }
        _ => video.to_string(),
    }
}

fn is_known_token(token: &str) -> bool {
    token
        .strip_prefix('G')
        .and_then(|n| n.parse::<u32>().ok())
        .is_some_and(|n| (1..=MAX_GESTURE).contains(&n))
}

pub fn scan_jigsaws(root: &Path, opts: &JigsawsOptions) -> Result<ClipManifest> {
    let tdir = root.join("transcriptions");
    let mut files: Vec<PathBuf> = fs::read_dir(&tdir)
        .map_err(|e| Error::io(&tdir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::io(
            &tdir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no transcription files"),
        ));
    }

    let mut segments = Vec::new();
    for file in &files {
        let video = file.file_stem().unwrap().to_string_lossy().to_string();
        let text = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        for (lineno, line) in text.lines().enumerate() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::parse(file, format!("line {}: {msg}", lineno + 1));
            if parts.len() != 3 {
                return Err(bad(format!("expected '<start> <end> <gesture>', got {line:?}")));
            }
            let start: usize = parts[0].parse().map_err(|_| bad(format!("bad start frame {:?}", parts[0])))?;
            let end: usize = parts[1].parse().map_err(|_| bad(format!("bad end frame {:?}", parts[1])))?;
            let token = parts[2];
            if !is_known_token(token) {
                return Err(bad(format!("unknown gesture token {token}")));
            }
            if end < start {
                return Err(bad(format!("end {end} before start {start}")));
            }
            let Some(class) = opts.gestures.iter().position(|g| g == token) else {
                continue;
            };
            // subsampling needs three frames to leave two
            if end - start + 1 < 3 {
                continue;
            }
            for n in start..=end {
                let p = frame_path(root, &video, n);
                if !p.is_file() {
                    return Err(Error::io(
                        p,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "frame listed in transcription is missing"),
                    ));
                }
            }
            segments.push((video.clone(), start, end, class));
        }
    }

    let users: BTreeSet<String> = segments.iter().map(|(v, ..)| user_of(v)).collect();
    let train_users: BTreeSet<&String> = users.iter().take(opts.train_users).collect();
    let entries = segments
        .into_iter()
        .map(|(video, start, end, class)| {
            let user = user_of(&video);
            ManifestEntry {
                clip_id: format!("{video}_f{start}-{end}"),
                path: format!("video/{video}"),
                gesture: GestureClass::new(class, opts.gestures.len()).expect("index from list"),
                frame_count: end - start + 1,
                split: if train_users.contains(&user) {
                    Split::Train
                } else {
                    Split::Test
                },
                source: ClipSource::Ingested,
                frame_range: Some([start, end]),
                user: Some(user),
            }
        })
        .collect();
    Ok(ClipManifest {
        num_classes: opts.gestures.len(),
        frame_size: opts.frame_size,
        channels: opts.channels,
        entries,
    })
}

fn read_frame(path: &Path, size: usize, channels: usize) -> Result<Frame> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = img.to_rgb32f();
    let resized = image::imageops::resize(&rgb, size as u32, size as u32, FilterType::Triangle);
    let mut data = Vec::with_capacity(size * size * channels);
    for px in resized.pixels() {
        let [r, g, b] = px.0.map(|v| v.clamp(0.0, 1.0));
        match channels {
            1 => data.push((0.299 * r + 0.587 * g + 0.114 * b).clamp(0.0, 1.0)),
            _ => data.extend([r, g, b]),
        }
    }
    Frame::new(size, size, channels, data)
}

/// Reads, resizes (bilinear) and subsamples one ingested segment.
pub fn load_jigsaws_clip(root: &Path, manifest: &ClipManifest, entry: &ManifestEntry) -> Result<VideoClip> {
    let [start, end] = entry
        .frame_range
        .ok_or_else(|| Error::Argument(format!("ingested entry {} has no frame range", entry.clip_id)))?;
    let dir = root.join(&entry.path);
    let frames = (start..=end)
        .map(|n| read_frame(&dir.join(format!("frame_{n:06}.png")), manifest.frame_size, manifest.channels))
        .collect::<Result<Vec<_>>>()?;
    let clip = VideoClip::new(entry.clip_id.clone(), entry.gesture, ClipSource::Ingested, frames)?;
    subsample_every_other(&clip)
}

/// Like [`load_jigsaws_clip`] but honours `opts.subsample`.
pub fn load_jigsaws_clip_with(
    root: &Path,
    manifest: &ClipManifest,
    entry: &ManifestEntry,
    opts: &JigsawsOptions,
) -> Result<VideoClip> {
    if opts.subsample {
        return load_jigsaws_clip(root, manifest, entry);
    }
    let [start, end] = entry
        .frame_range
        .ok_or_else(|| Error::Argument(format!("ingested entry {} has no frame range", entry.clip_id)))?;
    let dir = root.join(&entry.path);
    let frames = (start..=end)
        .map(|n| read_frame(&dir.join(format!("frame_{n:06}.png")), manifest.frame_size, manifest.channels))
        .collect::<Result<Vec<_>>>()?;
    VideoClip::new(entry.clip_id.clone(), entry.gesture, ClipSource::Ingested, frames)
}
