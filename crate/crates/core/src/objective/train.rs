use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Real};
use crate::batch::ClipBatch;
use crate::data::VideoClip;
use crate::model::TpgModel;
use crate::rollout::{mix_seed, NoiseSource};
use crate::{Error, Result};

use super::{clip_global_norm, sequence_loss_var, AdamState, LossBreakdown, TrainingConfig};

const SHUFFLE_TAG: u64 = 0x5417;
const NOISE_TAG: u64 = 0x0153;

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub recon_l1: f64,
    pub kl_content: f64,
    pub kl_motion: f64,
    pub total: f64,
    pub wall_time_s: f64,
}

/// One Adam step on the batch loss; returns the loss before the update.
pub fn train_step<T: Real>(
    model: &mut TpgModel<T>,
    batch: &ClipBatch<T>,
    config: &TrainingConfig,
    optimizer: &mut AdamState<T>,
    noise: &NoiseSource,
) -> Result<LossBreakdown> {
    let (mut grads, loss) = {
        let graph = Graph::new(model.params());
        let (total, loss) = sequence_loss_var(&graph, model, batch, config, noise)?;
        (graph.backward(total).into_params(), loss)
    };
    if !loss.total.is_finite() {
        return Err(Error::Domain(format!("training loss became {}", loss.total)));
    }
    if let Some(max) = config.grad_clip {
        clip_global_norm(&mut grads, max);
    }
    optimizer.update(model.params_mut(), &grads, config)?;
    Ok(loss)
}

/// One pass over `clips` in a shuffled order, each clip contributing a random
/// window of `T` frames. Shuffling, windows and noise derive from
/// `(config.seed, epoch)` only, so a resumed run repeats an uninterrupted one.
pub fn train_epoch<T: Real>(
    model: &mut TpgModel<T>,
    clips: &[VideoClip],
    config: &TrainingConfig,
    optimizer: &mut AdamState<T>,
    epoch: usize,
) -> Result<EpochLog> {
    config.validate()?;
    if clips.is_empty() {
        return Err(Error::Argument("no training clips".into()));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[config.seed, epoch as u64, SHUFFLE_TAG]));
    let mut order: Vec<usize> = (0..clips.len()).collect();
    order.shuffle(&mut rng);

    let num_classes = model.config().num_classes;
    let mut sums = [0.0f64; 4];
    for (b, chunk) in order.chunks(config.batch_size).enumerate() {
        let windows = chunk
            .iter()
            .map(|&i| {
                let clip = &clips[i];
                if clip.len() < config.seq_len {
                    return Err(Error::Argument(format!(
                        "clip {} has {} frames, training needs T = {}",
                        clip.clip_id,
                        clip.len(),
                        config.seq_len
                    )));
                }
                Ok((clip, rng.random_range(0..=clip.len() - config.seq_len)))
            })
            .collect::<Result<Vec<_>>>()?;
        let batch = ClipBatch::<T>::from_windows(&windows, config.seq_len, num_classes)?;
        let noise = NoiseSource::Seeded(mix_seed(&[config.seed, epoch as u64, b as u64, NOISE_TAG]));
        let loss = train_step(model, &batch, config, optimizer, &noise)?;
        let w = chunk.len() as f64;
        for (s, v) in sums.iter_mut().zip([loss.recon_l1, loss.kl_content, loss.kl_motion, loss.total]) {
            *s += w * v;
        }
    }
    let n = clips.len() as f64;
    Ok(EpochLog {
        epoch,
        recon_l1: sums[0] / n,
        kl_content: sums[1] / n,
        kl_motion: sums[2] / n,
        total: sums[3] / n,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
