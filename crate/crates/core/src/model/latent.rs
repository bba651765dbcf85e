use crate::autodiff::{Graph, Real, Tensor, Var};
use crate::{Error, Result};

use super::LatentMask;

/// Bounds applied to every log-variance head.
pub const LOG_VAR_CLAMP: (f64, f64) = (-10.0, 10.0);

/// Diagonal Gaussian for one batch row.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGaussian {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl LatentGaussian {
    pub fn new(mean: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mean.len() != log_var.len() {
            return Err(Error::Shape(format!(
                "gaussian mean has {} dims, log-variance {}",
                mean.len(),
                log_var.len()
            )));
        }
        Ok(LatentGaussian { mean, log_var })
    }

    pub fn standard(dim: usize) -> Self {
        LatentGaussian {
            mean: vec![0.0; dim],
            log_var: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().chain(&self.log_var).all(|v| v.is_finite())
    }
}

/// Batched Gaussian parameters on a graph, each `[N, latent_dim]`.
#[derive(Clone, Copy)]
pub struct GaussianVar<'g, T: Real> {
    pub mean: Var<'g, T>,
    pub log_var: Var<'g, T>,
}

impl<'g, T: Real> GaussianVar<'g, T> {
    /// `mean + exp(log_var / 2) * noise`.
    pub fn sample(&self, noise: Var<'g, T>) -> Var<'g, T> {
        self.mean.add(self.log_var.scale(0.5).exp().mul(noise))
    }

    /// One [`LatentGaussian`] per batch row.
    pub fn rows(&self) -> Vec<LatentGaussian> {
        let (m, lv) = (self.mean.value(), self.log_var.value());
        (0..m.rows())
            .map(|i| LatentGaussian {
                mean: m.row(i).iter().map(|v| v.f64()).collect(),
                log_var: lv.row(i).iter().map(|v| v.f64()).collect(),
            })
            .collect()
    }
}

/// `z_t = [C_t, M_t, L_t]` with masked parts omitted.
#[derive(Clone, Copy)]
pub struct TernaryLatent<'g, T: Real> {
    pub z: Var<'g, T>,
    pub content: Option<Var<'g, T>>,
    pub motion: Option<Var<'g, T>>,
    pub label: Option<Var<'g, T>>,
    pub mask: LatentMask,
}

impl<T: Real> TernaryLatent<'_, T> {
    pub fn width(&self) -> usize {
        self.z.shape()[1]
    }
}

/// Hidden and cell state of one recurrent core, one `[N, width]` pair per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState<T: Real> {
    pub hidden: Vec<Tensor<T>>,
    pub cell: Vec<Tensor<T>>,
}

impl<T: Real> RecurrentState<T> {
    pub fn zeros(layers: usize, batch: usize, width: usize) -> Self {
        RecurrentState {
            hidden: vec![Tensor::zeros(&[batch, width]); layers],
            cell: vec![Tensor::zeros(&[batch, width]); layers],
        }
    }

    pub fn layers(&self) -> usize {
        self.hidden.len()
    }

    pub fn batch(&self) -> usize {
        self.hidden[0].shape()[0]
    }

    /// Places the state on `graph` as constants.
    pub fn attach<'g>(&self, graph: &'g Graph<T>) -> StateVar<'g, T> {
        StateVar {
            hidden: self.hidden.iter().map(|t| graph.constant(t.clone())).collect(),
            cell: self.cell.iter().map(|t| graph.constant(t.clone())).collect(),
        }
    }
}

/// [`RecurrentState`] living on a graph.
#[derive(Clone)]
pub struct StateVar<'g, T: Real> {
    pub hidden: Vec<Var<'g, T>>,
    pub cell: Vec<Var<'g, T>>,
}

impl<'g, T: Real> StateVar<'g, T> {
    pub fn detach(&self) -> RecurrentState<T> {
        RecurrentState {
            hidden: self.hidden.iter().map(|v| (*v.value()).clone()).collect(),
            cell: self.cell.iter().map(|v| (*v.value()).clone()).collect(),
        }
    }

    /// Output of the top layer.
    pub fn top(&self) -> Var<'g, T> {
        *self.hidden.last().expect("state has at least one layer")
    }
}
