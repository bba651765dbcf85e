//! Layer building blocks on top of [`crate::autodiff`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, Real, Tensor, Var};

/// Registers parameters under a dotted name prefix and initializes them.
pub struct ParamBuilder<'a, T: Real> {
    store: &'a mut ParamStore<T>,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a, T: Real> ParamBuilder<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, rng: &'a mut ChaCha8Rng) -> Self {
        ParamBuilder {
            store,
            rng,
            prefix: String::new(),
        }
    }

    pub fn sub(&mut self, name: &str) -> ParamBuilder<'_, T> {
        let prefix = self.path(name);
        ParamBuilder {
            store: self.store,
            rng: self.rng,
            prefix,
        }
    }

    fn path(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    /// `U(-bound, bound)` entries.
    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> ParamId {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| T::c(self.rng.random_range(-bound..=bound)))
            .collect();
        let path = self.path(name);
        self.store.insert(path, Tensor::from_vec(shape, data))
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> ParamId {
        let path = self.path(name);
        self.store.insert(path, Tensor::full(shape, T::c(value)))
    }

    pub fn tensor(&mut self, name: &str, value: Tensor<T>) -> ParamId {
        let path = self.path(name);
        self.store.insert(path, value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Silu,
    LeakyRelu,
}

impl Activation {
    pub fn apply<'g, T: Real>(self, x: Var<'g, T>) -> Var<'g, T> {
        match self {
            Activation::Silu => x.silu(),
            Activation::LeakyRelu => x.leaky_relu(0.2),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<T: Real>(pb: &mut ParamBuilder<'_, T>, in_dim: usize, out_dim: usize) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Linear {
            weight: pb.uniform("weight", &[out_dim, in_dim], bound),
            bias: Some(pb.uniform("bias", &[out_dim], bound)),
            in_dim,
            out_dim,
        }
    }

    pub fn forward<'g, T: Real>(&self, x: Var<'g, T>) -> Var<'g, T> {
        let g = x.graph();
        g.linear(x, g.param(self.weight), self.bias.map(|b| g.param(b)))
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl Conv2d {
    pub fn new<T: Real>(pb: &mut ParamBuilder<'_, T>, cin: usize, cout: usize, kernel: usize) -> Self {
        let bound = 1.0 / ((cin * kernel * kernel) as f64).sqrt();
        Conv2d {
            weight: pb.uniform("weight", &[cout, cin, kernel, kernel], bound),
            bias: pb.uniform("bias", &[cout], bound),
            in_channels: cin,
            out_channels: cout,
            kernel,
        }
    }

    pub fn forward<'g, T: Real>(&self, x: Var<'g, T>) -> Var<'g, T> {
        let g = x.graph();
        g.conv2d(x, g.param(self.weight), Some(g.param(self.bias)))
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone)]
pub struct GroupNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub groups: usize,
}

impl GroupNorm {
    /// Uses `gcd(channels, 8)` groups.
    pub fn new<T: Real>(pb: &mut ParamBuilder<'_, T>, channels: usize) -> Self {
        GroupNorm {
            gamma: pb.constant("gamma", &[channels], 1.0),
            beta: pb.constant("beta", &[channels], 0.0),
            groups: gcd(channels, 8),
        }
    }

    pub fn forward<'g, T: Real>(&self, x: Var<'g, T>) -> Var<'g, T> {
        let g = x.graph();
        g.group_norm(x, g.param(self.gamma), g.param(self.beta), self.groups, 1e-5)
    }
}

/// 3x3 conv, group norm, activation.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub conv: Conv2d,
    pub norm: GroupNorm,
    pub activation: Activation,
}

impl ConvBlock {
    pub fn new<T: Real>(pb: &mut ParamBuilder<'_, T>, cin: usize, cout: usize, activation: Activation) -> Self {
        ConvBlock {
            conv: Conv2d::new(&mut pb.sub("conv"), cin, cout, 3),
            norm: GroupNorm::new(&mut pb.sub("norm"), cout),
            activation,
        }
    }

    pub fn forward<'g, T: Real>(&self, x: Var<'g, T>) -> Var<'g, T> {
        self.activation.apply(self.norm.forward(self.conv.forward(x)))
    }
}

/// One LSTM layer; gate order (input, forget, cell, output).
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<T: Real>(pb: &mut ParamBuilder<'_, T>, in_dim: usize, hidden: usize) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let weight = pb.uniform("weight", &[4 * hidden, in_dim + hidden], bound);
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        let bias = pb.tensor("bias", Tensor::from_f64(&[4 * hidden], &b));
        LstmCell {
            weight,
            bias,
            in_dim,
            hidden,
        }
    }

    /// Returns the new `(h, c)`.
    pub fn forward<'g, T: Real>(
        &self,
        x: Var<'g, T>,
        h: Var<'g, T>,
        c: Var<'g, T>,
    ) -> (Var<'g, T>, Var<'g, T>) {
        let g = x.graph();
        let xh = g.concat(&[x, h]);
        let gates = g.linear(xh, g.param(self.weight), Some(g.param(self.bias)));
        let n = self.hidden;
        let i = gates.narrow(0, n).sigmoid();
        let f = gates.narrow(n, n).sigmoid();
        let cand = gates.narrow(2 * n, n).tanh();
        let o = gates.narrow(3 * n, n).sigmoid();
        let c_new = f.mul(c).add(i.mul(cand));
        let h_new = o.mul(c_new.tanh());
        (h_new, c_new)
    }
}
