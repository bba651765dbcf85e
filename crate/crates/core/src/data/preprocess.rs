use super::{Frame, GestureClass, VideoClip};
use crate::{Error, Result};

/// Luminance weights for RGB to gray conversion.
pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

/// Single-channel signed difference of two grayscale frames, values in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDifference {
    pub height: usize,
    pub width: usize,
    pub delta: Vec<f32>,
}

impl FrameDifference {
    pub fn zeros(height: usize, width: usize) -> Self {
        FrameDifference {
            height,
            width,
            delta: vec![0.0; height * width],
        }
    }
}

/// Frames at even indices 0, 2, 4, ...
pub fn subsample_every_other(clip: &VideoClip) -> Result<VideoClip> {
    if clip.len() < 3 {
        return Err(Error::Argument(format!(
            "subsampling clip {} needs at least 3 frames, it has {}",
            clip.clip_id,
            clip.len()
        )));
    }
    Ok(VideoClip {
        frames: clip.frames.iter().step_by(2).cloned().collect(),
        gesture: clip.gesture,
        clip_id: clip.clip_id.clone(),
        source: clip.source,
    })
}

pub fn to_grayscale(frame: &Frame) -> Result<Frame> {
    to_grayscale_with(frame, LUMA_WEIGHTS)
}

pub fn to_grayscale_with(frame: &Frame, weights: [f32; 3]) -> Result<Frame> {
    match frame.channels {
        1 => Ok(frame.clone()),
        3 => {
            let data = frame
                .data
                .chunks_exact(3)
                .map(|p| (p[0] * weights[0] + p[1] * weights[1] + p[2] * weights[2]).clamp(0.0, 1.0))
                .collect();
            Frame::new(frame.height, frame.width, 1, data)
        }
        c => Err(Error::Argument(format!(
            "grayscale conversion supports 1 or 3 channels, got {c}"
        ))),
    }
}

/// `gray(curr) - gray(prev)`.
pub fn frame_difference(prev: &Frame, curr: &Frame) -> Result<FrameDifference> {
    if prev.shape() != curr.shape() {
        return Err(Error::Shape(format!(
            "frame difference of {:?} and {:?}",
            prev.shape(),
            curr.shape()
        )));
    }
    let (a, b) = (to_grayscale(prev)?, to_grayscale(curr)?);
    Ok(FrameDifference {
        height: curr.height,
        width: curr.width,
        delta: b.data.iter().zip(&a.data).map(|(&c, &p)| c - p).collect(),
    })
}

pub fn one_hot_label(gesture: GestureClass, num_classes: usize) -> Result<Vec<f32>> {
    if gesture.index() >= num_classes {
        return Err(Error::Argument(format!(
            "gesture index {} does not fit a {num_classes}-way one-hot label",
            gesture.index()
        )));
    }
    let mut v = vec![0.0; num_classes];
    v[gesture.index()] = 1.0;
    Ok(v)
}
