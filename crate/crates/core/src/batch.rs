//! Conversion between clips and batched `[N, C, H, W]` tensors.

use sha2::{Digest, Sha256};

use crate::autodiff::{Real, Tensor};
use crate::data::{one_hot_label, Frame, VideoClip, LUMA_WEIGHTS};
use crate::{Error, Result};

/// Stable 64-bit key of a clip id, used to key per-clip noise streams.
pub fn clip_key(clip_id: &str) -> u64 {
    let digest = Sha256::digest(clip_id.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Stacks frames of equal shape into `[N, c, h, w]`.
pub fn frames_to_tensor<T: Real>(frames: &[&Frame]) -> Result<Tensor<T>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Argument("no frames to stack".into()))?;
    let [h, w, c] = first.shape();
    let mut data = Vec::with_capacity(frames.len() * h * w * c);
    for f in frames {
        if f.shape() != [h, w, c] {
            return Err(Error::Shape(format!(
                "cannot stack frame {:?} with {:?}",
                f.shape(),
                [h, w, c]
            )));
        }
        data.extend(f.to_chw().into_iter().map(|v| T::c(v as f64)));
    }
    Ok(Tensor::from_vec(&[frames.len(), c, h, w], data))
}

/// Splits `[N, c, h, w]` into frames.
pub fn tensor_to_frames<T: Real>(t: &Tensor<T>) -> Vec<Frame> {
    let &[n, c, h, w] = t.shape() else {
        panic!("expected a 4-d frame tensor, got {:?}", t.shape());
    };
    (0..n)
        .map(|i| {
            let chw: Vec<f32> = t.row(i).iter().map(|v| v.f64() as f32).collect();
            Frame::from_chw(h, w, c, &chw)
        })
        .collect()
}

/// Luma image `[N, 1, h, w]`, matching [`crate::data::to_grayscale`].
pub fn grayscale<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let &[n, c, h, w] = x.shape() else {
        panic!("expected a 4-d frame tensor, got {:?}", x.shape());
    };
    let hw = h * w;
    if c == 1 {
        return x.clone();
    }
    assert_eq!(c, 3, "grayscale needs 1 or 3 channels");
    let wts = LUMA_WEIGHTS.map(|v| T::c(v as f64));
    let mut out = Vec::with_capacity(n * hw);
    for i in 0..n {
        let row = x.row(i);
        for p in 0..hw {
            let v = row[p] * wts[0] + row[hw + p] * wts[1] + row[2 * hw + p] * wts[2];
            out.push(v.max(T::zero()).min(T::one()));
        }
    }
    Tensor::from_vec(&[n, 1, h, w], out)
}

/// `gray(curr) - gray(prev)` as `[N, 1, h, w]`.
pub fn gray_difference<T: Real>(prev: &Tensor<T>, curr: &Tensor<T>) -> Tensor<T> {
    assert_eq!(prev.shape(), curr.shape(), "frame difference shape mismatch");
    grayscale(curr).zip_map(&grayscale(prev), |a, b| a - b)
}

/// `T` consecutive time steps of `N` clips.
#[derive(Debug, Clone)]
pub struct ClipBatch<T: Real> {
    /// One `[N, c, h, w]` tensor per time step.
    pub frames: Vec<Tensor<T>>,
    /// `diffs[i] = gray(x_i) - gray(x_{i-1})`; `diffs[0]` is zero.
    pub diffs: Vec<Tensor<T>>,
    /// `[N, num_classes]` one-hot rows.
    pub labels: Tensor<T>,
    pub clip_ids: Vec<String>,
    pub keys: Vec<u64>,
}

impl<T: Real> ClipBatch<T> {
    /// The first `len` frames of every clip.
    pub fn from_clips(clips: &[&VideoClip], len: usize, num_classes: usize) -> Result<Self> {
        let windows: Vec<_> = clips.iter().map(|c| (*c, 0)).collect();
        Self::from_windows(&windows, len, num_classes)
    }

    /// Frames `start..start + len` of every `(clip, start)`.
    pub fn from_windows(windows: &[(&VideoClip, usize)], len: usize, num_classes: usize) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::Argument("empty batch".into()));
        }
        if len < 2 {
            return Err(Error::Argument(format!("sequence length {len} is below 2")));
        }
        for (clip, start) in windows {
            if start + len > clip.len() {
                return Err(Error::Argument(format!(
                    "clip {} has {} frames, need {} from offset {start}",
                    clip.clip_id,
                    clip.len(),
                    len
                )));
            }
        }
        let frames = (0..len)
            .map(|t| {
                let fs: Vec<&Frame> = windows.iter().map(|(c, s)| &c.frames[s + t]).collect();
                frames_to_tensor(&fs)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut diffs = Vec::with_capacity(len);
        let &[n, _, h, w] = frames[0].shape() else { unreachable!() };
        diffs.push(Tensor::zeros(&[n, 1, h, w]));
        for t in 1..len {
            diffs.push(gray_difference(&frames[t - 1], &frames[t]));
        }
        let mut labels = Vec::with_capacity(n * num_classes);
        for (clip, _) in windows {
            labels.extend(one_hot_label(clip.gesture, num_classes)?.into_iter().map(|v| T::c(v as f64)));
        }
        Ok(ClipBatch {
            frames,
            diffs,
            labels: Tensor::from_vec(&[n, num_classes], labels),
            clip_ids: windows.iter().map(|(c, _)| c.clip_id.clone()).collect(),
            keys: windows.iter().map(|(c, _)| clip_key(&c.clip_id)).collect(),
        })
    }

    pub fn batch_size(&self) -> usize {
        self.clip_ids.len()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Rows reordered so that row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let pick = |t: &Tensor<T>| {
            let rows: Vec<Tensor<T>> = perm
                .iter()
                .map(|&i| Tensor::from_vec(&t.shape()[1..], t.row(i).to_vec()))
                .collect();
            Tensor::stack(&rows.iter().collect::<Vec<_>>())
        };
        ClipBatch {
            frames: self.frames.iter().map(pick).collect(),
            diffs: self.diffs.iter().map(pick).collect(),
            labels: pick(&self.labels),
            clip_ids: perm.iter().map(|&i| self.clip_ids[i].clone()).collect(),
            keys: perm.iter().map(|&i| self.keys[i]).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> ClipBatch<U> {
        ClipBatch {
            frames: self.frames.iter().map(Tensor::cast).collect(),
            diffs: self.diffs.iter().map(Tensor::cast).collect(),
            labels: self.labels.cast(),
            clip_ids: self.clip_ids.clone(),
            keys: self.keys.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{frame_difference, generate_synthetic_clip, GestureClass};

    #[test]
    fn tensor_roundtrip() {
        let clip = generate_synthetic_clip(GestureClass::new(1, 4).unwrap(), 3, 4).unwrap();
        let refs: Vec<&Frame> = clip.frames.iter().collect();
        let t: Tensor<f32> = frames_to_tensor(&refs).unwrap();
        assert_eq!(t.shape(), &[4, 3, 64, 64]);
        assert_eq!(tensor_to_frames(&t), clip.frames);
    }

    #[test]
    fn difference_matches_frame_path() {
        let clip = generate_synthetic_clip(GestureClass::new(2, 4).unwrap(), 9, 6).unwrap();
        let b = ClipBatch::<f32>::from_clips(&[&clip], 6, 4).unwrap();
        assert!(b.diffs[0].data().iter().all(|&v| v == 0.0));
        for t in 1..6 {
            let want = frame_difference(&clip.frames[t - 1], &clip.frames[t]).unwrap();
            assert_eq!(b.diffs[t].data(), &want.delta[..]);
        }
    }

    #[test]
    fn batch_layout() {
        let a = generate_synthetic_clip(GestureClass::new(0, 4).unwrap(), 1, 8).unwrap();
        let c = generate_synthetic_clip(GestureClass::new(3, 4).unwrap(), 2, 8).unwrap();
        let b = ClipBatch::<f64>::from_windows(&[(&a, 0), (&c, 2)], 5, 4).unwrap();
        assert_eq!(b.len(), 5);
        assert_eq!(b.batch_size(), 2);
        assert_eq!(b.labels.data(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let f: Tensor<f64> = frames_to_tensor(&[&c.frames[4]]).unwrap();
        assert_eq!(b.frames[2].row(1), f.row(0));
        assert!(ClipBatch::<f64>::from_windows(&[(&a, 4)], 5, 4).is_err());

        let p = b.permuted(&[1, 0]);
        assert_eq!(p.frames[3].row(0), b.frames[3].row(1));
        assert_eq!(p.clip_ids, vec![b.clip_ids[1].clone(), b.clip_ids[0].clone()]);
        assert_eq!(p.keys[0], clip_key(&c.clip_id));
    }

    #[test]
    fn keys_are_stable() {
        assert_eq!(clip_key("a"), clip_key("a"));
        assert_ne!(clip_key("a"), clip_key("b"));
    }
}
