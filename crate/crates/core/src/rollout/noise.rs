use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Real, Tensor};

/// Which latent a noise draw feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoisePart {
    Content = 0,
    Motion = 1,
}

/// Standard-normal noise for reparameterized sampling.
///
/// Every batch row gets its own stream keyed by `(seed, clip key, step, part)`,
/// so a clip's noise does not depend on which other clips share its batch
/// or on their order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseSource {
    Zero,
    Seeded(u64),
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Order-sensitive hash of a few integers.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5eed_u64, |acc, &p| splitmix(acc ^ splitmix(p)))
}

impl NoiseSource {
    /// `[keys.len(), dim]` draws for one step.
    pub fn draw<T: Real>(&self, keys: &[u64], step: usize, part: NoisePart, dim: usize) -> Tensor<T> {
        match *self {
            NoiseSource::Zero => Tensor::zeros(&[keys.len(), dim]),
            NoiseSource::Seeded(seed) => {
                let mut data = Vec::with_capacity(keys.len() * dim);
                for &key in keys {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, key, step as u64, part as u64]));
                    data.extend((0..dim).map(|_| {
                        let v: f64 = StandardNormal.sample(&mut rng);
                        T::c(v)
                    }));
                }
                Tensor::from_vec(&[keys.len(), dim], data)
            }
        }
    }

    /// Independent source for sample `index` of a best-of-k run.
    pub fn sub_source(&self, index: usize) -> NoiseSource {
        match *self {
            NoiseSource::Zero => NoiseSource::Zero,
            NoiseSource::Seeded(seed) => NoiseSource::Seeded(mix_seed(&[seed, index as u64, 0x5a3])),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_independent_of_batch_composition() {
        let n = NoiseSource::Seeded(4);
        let a: Tensor<f64> = n.draw(&[10, 20, 30], 3, NoisePart::Content, 5);
        let b: Tensor<f64> = n.draw(&[30, 10], 3, NoisePart::Content, 5);
        assert_eq!(a.row(0), b.row(1));
        assert_eq!(a.row(2), b.row(0));
        let c: Tensor<f64> = n.draw(&[10], 3, NoisePart::Motion, 5);
        assert_ne!(a.row(0), c.row(0));
        let d: Tensor<f64> = n.draw(&[10], 4, NoisePart::Content, 5);
        assert_ne!(a.row(0), d.row(0));
    }

    #[test]
    fn zero_source_and_moments() {
        let z: Tensor<f32> = NoiseSource::Zero.draw(&[1, 2], 0, NoisePart::Content, 3);
        assert!(z.data().iter().all(|&v| v == 0.0));
        let keys: Vec<u64> = (0..2000).collect();
        let t: Tensor<f64> = NoiseSource::Seeded(1).draw(&keys, 0, NoisePart::Content, 10);
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.03, "{mean}");
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn sub_sources_differ() {
        let s = NoiseSource::Seeded(9);
        assert_ne!(s.sub_source(0), s.sub_source(1));
        assert_eq!(NoiseSource::Zero.sub_source(3), NoiseSource::Zero);
    }
}
