//! Labelled video clips: synthetic generation, ingestion, storage and
//! preprocessing.

mod jigsaws;
mod preprocess;
mod store;
mod synth;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use jigsaws::{load_jigsaws_clip, load_jigsaws_clip_with, scan_jigsaws, JigsawsOptions};
pub use preprocess::{
    frame_difference, one_hot_label, subsample_every_other, to_grayscale, to_grayscale_with,
    FrameDifference, LUMA_WEIGHTS,
};
pub use store::{
    load_clip, load_manifest, read_clip_file, write_clip_file, write_dataset, ClipManifest,
    ManifestEntry, Split,
};
pub use synth::{
    build_synthetic_dataset, generate_synthetic_clip, generate_synthetic_clip_with, ArmScript,
    SynthGestureScript, SynthOptions,
};

/// Default number of gesture classes.
pub const DEFAULT_NUM_CLASSES: usize = 4;

/// Display tokens of the default classes in canonical order.
pub const DEFAULT_GESTURE_TOKENS: [&str; 4] = ["G2", "G3", "G4", "G6"];

/// Gesture label by canonical index: 0 = G2 (positioning needle),
/// 1 = G3 (pushing needle), 2 = G4 (transferring needle), 3 = G6 (pulling suture).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GestureClass(usize);

impl GestureClass {
    pub fn new(index: usize, num_classes: usize) -> Result<Self> {
        if index >= num_classes {
            return Err(Error::Domain(format!(
                "gesture class {index} out of range for {num_classes} classes"
            )));
        }
        Ok(GestureClass(index))
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn display_name(self) -> String {
        DEFAULT_GESTURE_TOKENS
            .get(self.0)
            .map(|s| s.to_string())
            .unwrap_or_else(|| format!("class{}", self.0))
    }

    /// Inverse of [`GestureClass::display_name`] for the default tokens.
    pub fn from_token(token: &str) -> Option<Self> {
        DEFAULT_GESTURE_TOKENS
            .iter()
            .position(|t| *t == token)
            .map(GestureClass)
    }
}

/// One image, row-major `[h, w, c]`, values in `[0, 1]` (differences excepted).
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Frame {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "frame data has {} values, expected {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Frame {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Frame {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }

    pub fn pixel(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Channel-major copy, `[c, h, w]`.
    pub fn to_chw(&self) -> Vec<f32> {
        let hw = self.height * self.width;
        let mut out = vec![0.0; self.data.len()];
        for (i, px) in self.data.chunks(self.channels).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                out[c * hw + i] = v;
            }
        }
        out
    }

    pub fn from_chw(height: usize, width: usize, channels: usize, chw: &[f32]) -> Self {
        let hw = height * width;
        assert_eq!(chw.len(), hw * channels);
        let mut data = vec![0.0; chw.len()];
        for c in 0..channels {
            for i in 0..hw {
                data[i * channels + c] = chw[c * hw + i];
            }
        }
        Frame {
            height,
            width,
            channels,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipSource {
    Synthetic,
    Ingested,
}

/// Ordered frames with a gesture label that holds for the whole clip.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    pub frames: Vec<Frame>,
    pub gesture: GestureClass,
    pub clip_id: String,
    pub source: ClipSource,
}

impl VideoClip {
    /// Checks the clip invariants: at least two frames, equal shapes, pixels in `[0, 1]`.
    pub fn new(
        clip_id: impl Into<String>,
        gesture: GestureClass,
        source: ClipSource,
        frames: Vec<Frame>,
    ) -> Result<Self> {
        let clip_id = clip_id.into();
        if frames.len() < 2 {
            return Err(Error::Argument(format!(
                "clip {clip_id} has {} frames, need at least 2",
                frames.len()
            )));
        }
        let shape = frames[0].shape();
        for (i, f) in frames.iter().enumerate() {
            if f.shape() != shape {
                return Err(Error::Shape(format!(
                    "clip {clip_id} frame {i} is {:?}, frame 0 is {shape:?}",
                    f.shape()
                )));
            }
            if !f.in_unit_range() {
                return Err(Error::Domain(format!(
                    "clip {clip_id} frame {i} has pixels outside [0, 1]"
                )));
            }
        }
        Ok(VideoClip {
            frames,
            gesture,
            clip_id,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_shape(&self) -> [usize; 3] {
        self.frames[0].shape()
    }
}
