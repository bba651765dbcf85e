use crate::autodiff::{ParamStore, Real, Tensor};
use crate::{Error, Result};

use super::TrainingConfig;

/// L2 norm over all present gradients, accumulated in f64.
pub fn global_norm<T: Real>(grads: &[Option<Tensor<T>>]) -> f64 {
    grads
        .iter()
        .flatten()
        .flat_map(|g| g.data().iter())
        .map(|v| v.f64() * v.f64())
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm<T: Real>(grads: &mut [Option<Tensor<T>>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = T::c(max_norm / norm);
        for g in grads.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

/// First and second moment estimates of Adam, one pair per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Real> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros: Vec<Tensor<T>> = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    /// Checks that the buffers line up with `params`.
    pub fn matches(&self, params: &ParamStore<T>) -> bool {
        self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|((_, p), (m, v))| p.shape() == m.shape() && p.shape() == v.shape())
    }

    /// One bias-corrected update. Parameters without a gradient are left alone.
    pub fn update(
        &mut self,
        params: &mut ParamStore<T>,
        grads: &[Option<Tensor<T>>],
        config: &TrainingConfig,
    ) -> Result<()> {
        if !self.matches(params) || grads.len() != params.len() {
            return Err(Error::Shape("optimizer state does not match the model parameters".into()));
        }
        self.step += 1;
        let (b1, b2) = (config.adam_beta1, config.adam_beta2);
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        let lr = T::c(config.learning_rate);
        let (tb1, tb2) = (T::c(b1), T::c(b2));
        let (ob1, ob2) = (T::c(1.0 - b1), T::c(1.0 - b2));
        let (tbc1, tbc2) = (T::c(bc1), T::c(bc2));
        let eps = T::c(config.adam_eps);
        let ids: Vec<_> = params.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let Some(g) = &grads[k] else { continue };
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let p = params.get_mut(id);
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = tb1 * *mv + ob1 * gv;
                *vv = tb2 * *vv + ob2 * gv * gv;
                let mhat = *mv / tbc1;
                let vhat = *vv / tbc2;
                *pv -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
