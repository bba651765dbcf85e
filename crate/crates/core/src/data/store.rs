//! On-disk dataset layout: `root/manifest.json` plus `root/clips/<clip_id>.bin`.
//!
//! Clip files start with a 32-byte little-endian header:
//!
//! ```text
//! 0   8  magic  b"TPGCLIP\0"
//! 8   4  u32    format version (1)
//! 12  1  u8     dtype (1 = f32)
//! 13  1  u8     endianness (0 = little)
//! 14  2         reserved
//! 16  16 u32x4  shape [T, h, w, c]
//! ```
//!
//! followed by `T*h*w*c` f32 values in frame-major, row-major, channel-last order.

use std::collections::HashSet;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{jigsaws, ClipSource, Frame, GestureClass, VideoClip};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"TPGCLIP\0";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: String,
    /// Relative to the dataset root: a clip file, or a frame directory for ingested video.
    pub path: String,
    pub gesture: GestureClass,
    pub frame_count: usize,
    pub split: Split,
    pub source: ClipSource,
    /// Inclusive frame-number range inside `path` for ingested segments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_range: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipManifest {
    pub num_classes: usize,
    pub frame_size: usize,
    pub channels: usize,
    pub entries: Vec<ManifestEntry>,
}

impl ClipManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn find(&self, clip_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.clip_id == clip_id)
    }

    /// Unique ids, in-range labels, and clip files whose headers declare the stated frame count.
    pub fn validate(&self, root: &Path) -> Result<()> {
        let manifest = root.join("manifest.json");
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.clip_id.as_str()) {
                return Err(Error::parse(&manifest, format!("duplicate clip_id {}", e.clip_id)));
            }
            GestureClass::new(e.gesture.index(), self.num_classes)?;
            if e.source == ClipSource::Synthetic {
                let path = root.join(&e.path);
                let shape = read_header(&path)?;
                if shape[0] != e.frame_count {
                    return Err(Error::parse(
                        &path,
                        format!("declares {} frames, manifest says {}", shape[0], e.frame_count),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let path = root.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}

/// Reads `root/manifest.json`, or scans a JIGSAWS-style layout
/// (`root/transcriptions/*.txt`, `root/video/<id>/frame_%06d.png`) when no
/// manifest exists.
pub fn load_manifest(root: &Path) -> Result<ClipManifest> {
    let path = root.join("manifest.json");
    if path.is_file() {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: ClipManifest =
            serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.to_string()))?;
        manifest.validate(root)?;
        return Ok(manifest);
    }
    if root.join("transcriptions").is_dir() {
        return jigsaws::scan_jigsaws(root, &jigsaws::JigsawsOptions::default());
    }
    Err(Error::io(
        path,
        std::io::Error::new(std::io::ErrorKind::NotFound, "no manifest.json or transcriptions/ directory"),
    ))
}

/// Loads one manifest entry as a clip.
pub fn load_clip(root: &Path, manifest: &ClipManifest, entry: &ManifestEntry) -> Result<VideoClip> {
    match entry.source {
        ClipSource::Synthetic => {
            let frames = read_clip_file(&root.join(&entry.path))?;
            VideoClip::new(entry.clip_id.clone(), entry.gesture, ClipSource::Synthetic, frames)
        }
        ClipSource::Ingested => jigsaws::load_jigsaws_clip(root, manifest, entry),
    }
}

pub fn write_clip_file(path: &Path, frames: &[Frame]) -> Result<()> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Argument("cannot write an empty clip".into()))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + frames.len() * first.data.len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(1);
    buf.push(0);
    buf.extend_from_slice(&[0, 0]);
    for d in [frames.len(), first.height, first.width, first.channels] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for f in frames {
        if f.shape() != first.shape() {
            return Err(Error::Shape("clip frames differ in shape".into()));
        }
        for v in &f.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn parse_header(path: &Path, h: &[u8]) -> Result<[usize; 4]> {
    if h.len() < HEADER_LEN || &h[..8] != MAGIC {
        return Err(Error::parse(path, "not a clip file (bad magic)"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(h[o..o + 4].try_into().unwrap());
    if u32_at(8) != VERSION {
        return Err(Error::parse(path, format!("unsupported clip version {}", u32_at(8))));
    }
    if h[12] != 1 || h[13] != 0 {
        return Err(Error::parse(path, "unsupported dtype or endianness"));
    }
    Ok([u32_at(16) as usize, u32_at(20) as usize, u32_at(24) as usize, u32_at(28) as usize])
}

fn read_header(path: &Path) -> Result<[usize; 4]> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = [0u8; HEADER_LEN];
    f.read_exact(&mut h).map_err(|e| Error::io(path, e))?;
    parse_header(path, &h)
}

pub fn read_clip_file(path: &Path) -> Result<Vec<Frame>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let [t, h, w, c] = parse_header(path, &bytes)?;
    let per = h * w * c;
    let body = &bytes[HEADER_LEN..];
    if body.len() != t * per * 4 {
        return Err(Error::parse(
            path,
            format!("expected {} data bytes, found {}", t * per * 4, body.len()),
        ));
    }
    let values: Vec<f32> = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(values
        .chunks(per)
        .map(|d| Frame {
            height: h,
            width: w,
            channels: c,
            data: d.to_vec(),
        })
        .collect())
}

/// Writes every clip plus the manifest. `test_ids` selects the test split.
pub fn write_dataset(root: &Path, clips: &[VideoClip], test_ids: &HashSet<String>, num_classes: usize) -> Result<ClipManifest> {
    let first = clips
        .first()
        .ok_or_else(|| Error::Argument("dataset has no clips".into()))?;
    let [h, _, c] = first.frame_shape();
    fs::create_dir_all(root.join("clips")).map_err(|e| Error::io(root.join("clips"), e))?;
    let mut entries = Vec::with_capacity(clips.len());
    for clip in clips {
        let rel: PathBuf = ["clips", &format!("{}.bin", clip.clip_id)].iter().collect();
        write_clip_file(&root.join(&rel), &clip.frames)?;
        entries.push(ManifestEntry {
            clip_id: clip.clip_id.clone(),
            path: rel.to_string_lossy().replace('\\', "/"),
            gesture: clip.gesture,
            frame_count: clip.len(),
            split: if test_ids.contains(&clip.clip_id) {
                Split::Test
            } else {
                Split::Train
            },
            source: clip.source,
            frame_range: None,
            user: None,
        });
    }
    let manifest = ClipManifest {
        num_classes,
        frame_size: h,
        channels: c,
        entries,
    };
    manifest.save(root)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic_clip;

    #[test]
    fn clip_file_roundtrip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let clip = generate_synthetic_clip(GestureClass::new(1, 4).unwrap(), 3, 4).unwrap();
        let path = dir.path().join("c.bin");
        write_clip_file(&path, &clip.frames).unwrap();
        assert_eq!(read_header(&path).unwrap(), [4, 64, 64, 3]);
        assert_eq!(read_clip_file(&path).unwrap(), clip.frames);
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(bytes.len(), HEADER_LEN + 4 * 64 * 64 * 3 * 4);
    }

    #[test]
    fn truncated_file_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        let clip = generate_synthetic_clip(GestureClass::new(0, 4).unwrap(), 3, 2).unwrap();
        write_clip_file(&path, &clip.frames).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(read_clip_file(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn dataset_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let clips: Vec<_> = (0..4)
            .map(|k| {
                let mut c = generate_synthetic_clip(GestureClass::new(k, 4).unwrap(), k as u64, 3).unwrap();
                c.clip_id = format!("clip{k}");
                c
            })
            .collect();
        let test: HashSet<String> = ["clip3".to_string()].into();
        let written = write_dataset(dir.path(), &clips, &test, 4).unwrap();
        let m = load_manifest(dir.path()).unwrap();
        assert_eq!(m, written);
        assert_eq!(m.split(Split::Test).count(), 1);
        let e = m.find("clip2").unwrap();
        assert_eq!(load_clip(dir.path(), &m, e).unwrap(), clips[2]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = generate_synthetic_clip(GestureClass::new(0, 4).unwrap(), 0, 2).unwrap();
        c.clip_id = "x".into();
        let mut m = write_dataset(dir.path(), &[c], &HashSet::new(), 4).unwrap();
        m.entries.push(m.entries[0].clone());
        m.save(dir.path()).unwrap();
        assert!(matches!(load_manifest(dir.path()), Err(Error::Parse { .. })));
    }

    #[test]
    fn empty_directory_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_manifest(dir.path()), Err(Error::Io { .. })));
    }

    #[test]
    fn frame_count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = generate_synthetic_clip(GestureClass::new(0, 4).unwrap(), 0, 3).unwrap();
        c.clip_id = "x".into();
        let mut m = write_dataset(dir.path(), &[c], &HashSet::new(), 4).unwrap();
        m.entries[0].frame_count = 5;
        m.save(dir.path()).unwrap();
        assert!(load_manifest(dir.path()).is_err());
    }
}
