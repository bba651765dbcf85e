use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, ParamStore};
use crate::batch::{frames_to_tensor, grayscale};
use crate::data::Frame;
use crate::nn::{Activation, ConvBlock, Linear, ParamBuilder};
use crate::{Error, Result};

/// Maps frames to feature vectors for [`super::feature_cosine`].
pub trait Embedder: Sync {
    fn embed(&self, frames: &[&Frame]) -> Result<Vec<Vec<f64>>>;
}

/// A frozen, randomly initialized conv net on luma input: three conv blocks
/// with 2x pooling, then an affine map. It stands in for a pretrained
/// classifier, so absolute similarities are only comparable between runs
/// that share the seed.
#[derive(Debug, Clone)]
pub struct RandomConvEmbedder {
    params: ParamStore<f32>,
    blocks: Vec<ConvBlock>,
    fc: Linear,
    frame_size: usize,
}

impl RandomConvEmbedder {
    pub const DEFAULT_SEED: u64 = 0x0005_eed0_fea7;
    pub const CHANNELS: [usize; 3] = [8, 16, 32];
    pub const DIM: usize = 64;

    pub fn new(frame_size: usize, seed: u64) -> Result<Self> {
        if frame_size == 0 || !frame_size.is_multiple_of(8) {
            return Err(Error::Argument(format!(
                "embedder needs a frame size divisible by 8, got {frame_size}"
            )));
        }
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pb = ParamBuilder::new(&mut params, &mut rng);
        let mut cin = 1;
        let mut blocks = Vec::new();
        for (i, &c) in Self::CHANNELS.iter().enumerate() {
            blocks.push(ConvBlock::new(&mut pb.sub(&format!("block{i}")), cin, c, Activation::LeakyRelu));
            cin = c;
        }
        let side = frame_size / 8;
        let fc = Linear::new(&mut pb.sub("fc"), cin * side * side, Self::DIM);
        Ok(RandomConvEmbedder {
            params,
            blocks,
            fc,
            frame_size,
        })
    }

    pub fn with_default_seed(frame_size: usize) -> Result<Self> {
        Self::new(frame_size, Self::DEFAULT_SEED)
    }
}

impl Embedder for RandomConvEmbedder {
    fn embed(&self, frames: &[&Frame]) -> Result<Vec<Vec<f64>>> {
        if frames.is_empty() {
            return Ok(Vec::new());
        }
        let s = self.frame_size;
        if let Some(f) = frames.iter().find(|f| f.height != s || f.width != s) {
            return Err(Error::Shape(format!(
                "embedder built for {s}x{s} frames, got {}x{}",
                f.height, f.width
            )));
        }
        let gray = grayscale(&frames_to_tensor::<f32>(frames)?);
        let g = Graph::inference(&self.params);
        let mut x = g.constant(gray);
        for b in &self.blocks {
            x = b.forward(x).avg_pool2();
        }
        let flat = x.reshape(&[frames.len(), self.fc.in_dim]);
        let out = self.fc.forward(flat).value();
        Ok((0..frames.len())
            .map(|i| out.row(i).iter().map(|&v| v as f64).collect())
            .collect())
    }
}
