//! The learnable model: content and motion encoders, the four Gaussian
//! recurrent heads, the predictor core and the skip-connected decoder.

mod config;
mod latent;
mod modules;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, ParamStore, Real, Var};
use crate::nn::ParamBuilder;
use crate::{Error, Result};

pub use config::{LatentMask, ModelConfig, Variant};
pub use latent::{GaussianVar, LatentGaussian, RecurrentState, StateVar, TernaryLatent, LOG_VAR_CLAMP};
pub use modules::{ConvEncoder, Decoder, GaussianLstm, Predictor, RecurrentCore};

/// The five recurrent cores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Core {
    ContentPosterior,
    MotionPosterior,
    ContentPrior,
    MotionPrior,
    Predictor,
}

impl Core {
    fn is_posterior(self) -> bool {
        matches!(self, Core::ContentPosterior | Core::MotionPosterior)
    }

    fn is_prior(self) -> bool {
        matches!(self, Core::ContentPrior | Core::MotionPrior)
    }

    fn is_motion(self) -> bool {
        matches!(self, Core::MotionPosterior | Core::MotionPrior)
    }
}

/// Content features of one frame batch.
#[derive(Clone)]
pub struct EncoderFeatures<'g, T: Real> {
    /// `[N, content_feature_dim]`.
    pub h: Var<'g, T>,
    /// Pre-pool maps, finest first.
    pub skips: Vec<Var<'g, T>>,
}

#[derive(Debug, Clone)]
struct Layers {
    content_encoder: ConvEncoder,
    motion_encoder: Option<ConvEncoder>,
    content_posterior: Option<GaussianLstm>,
    motion_posterior: Option<GaussianLstm>,
    content_prior: Option<GaussianLstm>,
    motion_prior: Option<GaussianLstm>,
    predictor: Predictor,
    decoder: Decoder,
}

/// Model of one variant. Only the parts the variant uses own parameters.
#[derive(Debug, Clone)]
pub struct TpgModel<T: Real> {
    config: ModelConfig,
    variant: Variant,
    layers: Layers,
    params: ParamStore<T>,
}

fn expect_shape(what: &str, got: &[usize], want: &[usize]) -> Result<()> {
    if got != want {
        return Err(Error::Shape(format!("{what}: expected {want:?}, got {got:?}")));
    }
    Ok(())
}

impl<T: Real> TpgModel<T> {
    /// Randomly initialized model; the same seed always gives the same weights.
    pub fn new(config: ModelConfig, variant: Variant, seed: u64) -> Result<Self> {
        config.validate()?;
        let mask = variant.mask();
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pb = ParamBuilder::new(&mut params, &mut rng);
        let c = &config;
        let content_encoder = ConvEncoder::new(
            &mut pb.sub("content_encoder"),
            c.channels,
            &c.content_channels,
            c.convs_per_block,
            c.frame_size,
            c.content_feature_dim,
            c.activation,
        );
        let motion_encoder = mask.motion.then(|| {
            ConvEncoder::new(
                &mut pb.sub("motion_encoder"),
                1,
                &c.motion_channels,
                1,
                c.frame_size,
                c.motion_feature_dim,
                c.activation,
            )
        });
        let head = |pb: &mut ParamBuilder<'_, T>, name: &str, active: bool, in_dim: usize| {
            active.then(|| GaussianLstm::new(&mut pb.sub(name), in_dim, c.recurrent_width, c.latent_dim))
        };
        let content_posterior = head(&mut pb, "content_posterior", mask.content, c.content_feature_dim);
        let motion_posterior = head(&mut pb, "motion_posterior", mask.motion, c.motion_feature_dim);
        let content_prior = head(&mut pb, "content_prior", mask.content, c.content_feature_dim);
        let motion_prior = head(&mut pb, "motion_prior", mask.motion, c.motion_feature_dim);
        let z_width = mask.width(c.latent_dim, c.num_classes);
        let predictor = Predictor::new(
            &mut pb.sub("predictor"),
            c.content_feature_dim + z_width,
            c.recurrent_width,
            c.predictor_layers,
            c.predictor_feature_dim,
        );
        let decoder = Decoder::new(
            &mut pb.sub("decoder"),
            c.predictor_feature_dim,
            &c.content_channels,
            c.convs_per_block,
            c.frame_size,
            c.channels,
            c.activation,
        );
        Ok(TpgModel {
            layers: Layers {
                content_encoder,
                motion_encoder,
                content_posterior,
                motion_posterior,
                content_prior,
                motion_prior,
                predictor,
                decoder,
            },
            config,
            variant,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn mask(&self) -> LatentMask {
        self.variant.mask()
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Same weights in another float type.
    pub fn cast<U: Real>(&self) -> TpgModel<U> {
        TpgModel {
            config: self.config.clone(),
            variant: self.variant,
            layers: self.layers.clone(),
            params: self.params.cast(),
        }
    }

    pub fn latent_width(&self) -> usize {
        self.mask().width(self.config.latent_dim, self.config.num_classes)
    }

    /// Layer count of a core.
    pub fn core_layers(&self, core: Core) -> usize {
        if core == Core::Predictor {
            self.config.predictor_layers
        } else {
            1
        }
    }

    pub fn has_core(&self, core: Core) -> bool {
        self.head(core).is_some() || core == Core::Predictor
    }

    pub fn initial_state(&self, core: Core, batch: usize) -> RecurrentState<T> {
        RecurrentState::zeros(self.core_layers(core), batch, self.config.recurrent_width)
    }

    /// Zero state placed directly on a graph.
    pub fn initial_state_var<'g>(&self, graph: &'g Graph<T>, core: Core, batch: usize) -> StateVar<'g, T> {
        let w = self.config.recurrent_width;
        let layers = self.core_layers(core);
        StateVar {
            hidden: (0..layers).map(|_| graph.zeros(&[batch, w])).collect(),
            cell: (0..layers).map(|_| graph.zeros(&[batch, w])).collect(),
        }
    }

    fn frame_shape(&self, n: usize, channels: usize) -> [usize; 4] {
        let s = self.config.frame_size;
        [n, channels, s, s]
    }

    /// `h_t = Enc_c(x_t)` for `x: [N, c, H, W]`, with skips.
    pub fn encode_content<'g>(&self, x: Var<'g, T>) -> Result<EncoderFeatures<'g, T>> {
        let shape = x.shape();
        expect_shape(
            "content encoder input",
            &shape,
            &self.frame_shape(shape.first().copied().unwrap_or(0), self.config.channels),
        )?;
        let (h, skips) = self.layers.content_encoder.forward(x);
        Ok(EncoderFeatures { h, skips })
    }

    /// `h'_t = Enc_m(Δx_t)` for `delta: [N, 1, H, W]`.
    pub fn encode_motion<'g>(&self, delta: Var<'g, T>) -> Result<Var<'g, T>> {
        let enc = self.layers.motion_encoder.as_ref().ok_or_else(|| {
            Error::Argument(format!("variant {} has no motion encoder", self.variant))
        })?;
        let shape = delta.shape();
        expect_shape(
            "motion encoder input",
            &shape,
            &self.frame_shape(shape.first().copied().unwrap_or(0), 1),
        )?;
        Ok(enc.forward(delta).0)
    }

    fn head(&self, core: Core) -> Option<&GaussianLstm> {
        let l = &self.layers;
        match core {
            Core::ContentPosterior => l.content_posterior.as_ref(),
            Core::MotionPosterior => l.motion_posterior.as_ref(),
            Core::ContentPrior => l.content_prior.as_ref(),
            Core::MotionPrior => l.motion_prior.as_ref(),
            Core::Predictor => None,
        }
    }

    fn gaussian_step<'g>(
        &self,
        core: Core,
        feature: Var<'g, T>,
        state: &StateVar<'g, T>,
    ) -> Result<(GaussianVar<'g, T>, StateVar<'g, T>)> {
        let head = self
            .head(core)
            .ok_or_else(|| Error::Argument(format!("variant {} has no {core:?} core", self.variant)))?;
        let shape = feature.shape();
        let want = if core.is_motion() {
            self.config.motion_feature_dim
        } else {
            self.config.content_feature_dim
        };
        expect_shape(&format!("{core:?} input"), &shape, &[shape[0], want])?;
        check_state(state, shape[0], 1, self.config.recurrent_width)?;
        Ok(head.forward(feature, state))
    }

    /// Posterior Gaussian for time t from the features of time t.
    pub fn posterior_step<'g>(
        &self,
        core: Core,
        feature: Var<'g, T>,
        state: &StateVar<'g, T>,
    ) -> Result<(GaussianVar<'g, T>, StateVar<'g, T>)> {
        if !core.is_posterior() {
            return Err(Error::Argument(format!("{core:?} is not a posterior core")));
        }
        self.gaussian_step(core, feature, state)
    }

    /// Prior Gaussian for time t from the features of time t - 1.
    pub fn prior_step<'g>(
        &self,
        core: Core,
        feature_prev: Var<'g, T>,
        state: &StateVar<'g, T>,
    ) -> Result<(GaussianVar<'g, T>, StateVar<'g, T>)> {
        if !core.is_prior() {
            return Err(Error::Argument(format!("{core:?} is not a prior core")));
        }
        self.gaussian_step(core, feature_prev, state)
    }

    /// Concatenates the active parts in the order content, motion, label.
    pub fn assemble_latent<'g>(
        &self,
        content: Option<Var<'g, T>>,
        motion: Option<Var<'g, T>>,
        label: Option<Var<'g, T>>,
    ) -> Result<TernaryLatent<'g, T>> {
        let mask = self.mask();
        let c = &self.config;
        let mut parts = Vec::with_capacity(3);
        let mut batch = None;
        for (name, active, part, width) in [
            ("content", mask.content, content, c.latent_dim),
            ("motion", mask.motion, motion, c.latent_dim),
            ("label", mask.label, label, c.num_classes),
        ] {
            if !active {
                continue;
            }
            let v = part.ok_or_else(|| {
                Error::Argument(format!("variant {} needs the {name} latent", self.variant))
            })?;
            let shape = v.shape();
            let n = *batch.get_or_insert(shape[0]);
            expect_shape(&format!("{name} latent"), &shape, &[n, width])?;
            parts.push(v);
        }
        let graph = parts[0].graph();
        Ok(TernaryLatent {
            z: graph.concat(&parts),
            content: if mask.content { content } else { None },
            motion: if mask.motion { motion } else { None },
            label: if mask.label { label } else { None },
            mask,
        })
    }

    /// `g_t = LSTM_θ(h_{t-1}, z_t)` followed by the tanh head.
    pub fn predictor_step<'g>(
        &self,
        h_prev: Var<'g, T>,
        z: &TernaryLatent<'g, T>,
        state: &StateVar<'g, T>,
    ) -> Result<(Var<'g, T>, StateVar<'g, T>)> {
        let n = h_prev.shape()[0];
        expect_shape("predictor h_prev", &h_prev.shape(), &[n, self.config.content_feature_dim])?;
        expect_shape("predictor latent", &z.z.shape(), &[n, self.latent_width()])?;
        check_state(state, n, self.config.predictor_layers, self.config.recurrent_width)?;
        let x = h_prev.graph().concat(&[h_prev, z.z]);
        Ok(self.layers.predictor.forward(x, state))
    }

    /// `x̂_t = Dec(g_t)` with skips from the content encoder.
    pub fn decode<'g>(&self, g: Var<'g, T>, skips: &[Var<'g, T>]) -> Result<Var<'g, T>> {
        let n = g.shape()[0];
        expect_shape("decoder input", &g.shape(), &[n, self.config.predictor_feature_dim])?;
        let widths = &self.config.content_channels;
        if skips.len() != widths.len() {
            return Err(Error::Shape(format!(
                "decoder expects {} skip maps, got {}",
                widths.len(),
                skips.len()
            )));
        }
        for (b, (skip, &w)) in skips.iter().zip(widths).enumerate() {
            let s = self.config.frame_size >> b;
            expect_shape(&format!("skip {b}"), &skip.shape(), &[n, w, s, s])?;
        }
        Ok(self.layers.decoder.forward(g, skips))
    }
}

fn check_state<T: Real>(state: &StateVar<'_, T>, batch: usize, layers: usize, width: usize) -> Result<()> {
    if state.hidden.len() != layers || state.cell.len() != layers {
        return Err(Error::Shape(format!(
            "recurrent state has {} layers, core has {layers}",
            state.hidden.len()
        )));
    }
    for v in state.hidden.iter().chain(&state.cell) {
        expect_shape("recurrent state", &v.shape(), &[batch, width])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
