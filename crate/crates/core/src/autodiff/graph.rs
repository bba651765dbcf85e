use std::cell::RefCell;
use std::sync::Arc;

use super::kernels;
use super::{ParamId, ParamStore, Real, Tensor};

enum Op<T> {
    Leaf,
    Param(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    AddScalar(usize),
    AddBias {
        x: usize,
        bias: usize,
    },
    Linear {
        x: usize,
        w: usize,
        b: Option<usize>,
    },
    Conv2d {
        x: usize,
        w: usize,
        b: Option<usize>,
    },
    AvgPool2(usize),
    Upsample2(usize),
    GroupNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        groups: usize,
        stats: Vec<(T, T)>,
    },
    Concat(Vec<usize>),
    Narrow {
        x: usize,
        start: usize,
    },
    Reshape(usize),
    Sigmoid(usize),
    Tanh(usize),
    Silu(usize),
    LeakyRelu(usize, T),
    Exp(usize),
    Abs(usize),
    Square(usize),
    Clamp {
        x: usize,
        lo: T,
        hi: T,
    },
    SumAll(usize),
}

struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op<T>,
    grad: bool,
}

/// Define-by-run tape. Every operation appends a node; [`Graph::backward`]
/// walks the tape in reverse.
///
/// A graph built with [`Graph::inference`] records values only, so nothing is
/// retained for differentiation.
pub struct Graph<T: Real> {
    nodes: RefCell<Vec<Node<T>>>,
    params: Vec<Arc<Tensor<T>>>,
    param_nodes: RefCell<Vec<Option<usize>>>,
    track: bool,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g, T: Real> {
    graph: &'g Graph<T>,
    id: usize,
}

/// Gradients produced by one backward pass.
pub struct Gradients<T> {
    nodes: Vec<Option<Tensor<T>>>,
    params: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient with respect to a leaf created by [`Graph::leaf`].
    pub fn wrt(&self, var: Var<'_, T>) -> Option<&Tensor<T>> {
        self.nodes.get(var.id).and_then(|g| g.as_ref())
    }

    pub fn into_params(self) -> Vec<Option<Tensor<T>>> {
        self.params
    }
}

impl<T: Real> Graph<T> {
    /// Graph that records the operations needed for backpropagation.
    pub fn new(params: &ParamStore<T>) -> Self {
        Self::build(params, true)
    }

    /// Forward-only graph.
    pub fn inference(params: &ParamStore<T>) -> Self {
        Self::build(params, false)
    }

    /// Graph with no parameters; useful for standalone computations.
    pub fn detached(track: bool) -> Self {
        Self::build(&ParamStore::new(), track)
    }

    fn build(params: &ParamStore<T>, track: bool) -> Self {
        Graph {
            nodes: RefCell::new(Vec::new()),
            params: params.values().to_vec(),
            param_nodes: RefCell::new(vec![None; params.len()]),
            track,
        }
    }

    pub fn is_tracking(&self) -> bool {
        self.track
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, grad: bool) -> Var<'_, T> {
        let (op, grad) = if self.track { (op, grad) } else { (Op::Leaf, false) };
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Arc::new(value),
            op,
            grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Arc<Tensor<T>> {
        self.nodes.borrow()[id].value.clone()
    }

    fn needs_grad(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].grad)
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, false)
    }

    /// Differentiable input whose gradient is readable through [`Gradients::wrt`].
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, true)
    }

    /// The node for a model parameter. Repeated calls share one node.
    pub fn param(&self, id: ParamId) -> Var<'_, T> {
        if let Some(node) = self.param_nodes.borrow()[id.0] {
            return Var {
                graph: self,
                id: node,
            };
        }
        let value = self.params[id.0].clone();
        let var = {
            let (op, grad) = if self.track {
                (Op::Param(id.0), true)
            } else {
                (Op::Leaf, false)
            };
            let mut nodes = self.nodes.borrow_mut();
            nodes.push(Node { value, op, grad });
            Var {
                graph: self,
                id: nodes.len() - 1,
            }
        };
        self.param_nodes.borrow_mut()[id.0] = Some(var.id);
        var
    }

    pub fn zeros(&self, shape: &[usize]) -> Var<'_, T> {
        self.constant(Tensor::zeros(shape))
    }

    /// Concatenate along axis 1; all parts share every other axis.
    pub fn concat<'g>(&'g self, parts: &[Var<'g, T>]) -> Var<'g, T> {
        assert!(!parts.is_empty(), "concat of nothing");
        if parts.len() == 1 {
            return parts[0];
        }
        let values: Vec<_> = parts.iter().map(|p| self.value(p.id)).collect();
        let refs: Vec<&Tensor<T>> = values.iter().map(|v| v.as_ref()).collect();
        let out = kernels::concat1(&refs);
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let grad = self.needs_grad(&ids);
        self.push(out, Op::Concat(ids), grad)
    }

    /// `x * w^T + b` with `x: [N, K]`, `w: [M, K]`, `b: [M]`.
    pub fn linear<'g>(&'g self, x: Var<'g, T>, w: Var<'g, T>, b: Option<Var<'g, T>>) -> Var<'g, T> {
        let (xv, wv) = (self.value(x.id), self.value(w.id));
        let bv = b.map(|b| self.value(b.id));
        let out = kernels::linear(&xv, &wv, bv.as_deref());
        let mut ids = vec![x.id, w.id];
        ids.extend(b.map(|b| b.id));
        let grad = self.needs_grad(&ids);
        self.push(
            out,
            Op::Linear {
                x: x.id,
                w: w.id,
                b: b.map(|b| b.id),
            },
            grad,
        )
    }

    /// Stride-1 "same" convolution, `x: [N, Cin, H, W]`, `w: [Cout, Cin, k, k]`, odd `k`.
    pub fn conv2d<'g>(&'g self, x: Var<'g, T>, w: Var<'g, T>, b: Option<Var<'g, T>>) -> Var<'g, T> {
        let (xv, wv) = (self.value(x.id), self.value(w.id));
        let bv = b.map(|b| self.value(b.id));
        let out = kernels::conv2d(&xv, &wv, bv.as_deref());
        let mut ids = vec![x.id, w.id];
        ids.extend(b.map(|b| b.id));
        let grad = self.needs_grad(&ids);
        self.push(
            out,
            Op::Conv2d {
                x: x.id,
                w: w.id,
                b: b.map(|b| b.id),
            },
            grad,
        )
    }

    /// Per-sample group normalization over `[N, C, ...]` with per-channel affine.
    pub fn group_norm<'g>(
        &'g self,
        x: Var<'g, T>,
        gamma: Var<'g, T>,
        beta: Var<'g, T>,
        groups: usize,
        eps: f64,
    ) -> Var<'g, T> {
        let xv = self.value(x.id);
        let (gv, bv) = (self.value(gamma.id), self.value(beta.id));
        let (out, stats) = kernels::group_norm(&xv, &gv, &bv, groups, T::c(eps));
        let grad = self.needs_grad(&[x.id, gamma.id, beta.id]);
        self.push(
            out,
            Op::GroupNorm {
                x: x.id,
                gamma: gamma.id,
                beta: beta.id,
                groups,
                stats,
            },
            grad,
        )
    }

    /// Reverse-mode sweep from a scalar root.
    pub fn backward(&self, root: Var<'_, T>) -> Gradients<T> {
        assert!(self.track, "backward on an inference graph");
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[root.id].value.len(), 1, "backward root must be scalar");
        let mut grads: Vec<Option<Tensor<T>>> = Vec::new();
        grads.resize_with(nodes.len(), || None);
        let mut params: Vec<Option<Tensor<T>>> = Vec::new();
        params.resize_with(self.params.len(), || None);
        grads[root.id] = Some(Tensor::full(nodes[root.id].value.shape(), T::one()));

        let accum = |grads: &mut Vec<Option<Tensor<T>>>, id: usize, g: Tensor<T>| {
            if !nodes[id].grad {
                return;
            }
            match &mut grads[id] {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        };

        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            if !node.grad {
                continue;
            }
            let g = match &node.op {
                Op::Leaf => continue,
                Op::Param(p) => {
                    if let Some(g) = grads[id].take() {
                        params[*p] = Some(g);
                    }
                    continue;
                }
                _ => match grads[id].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            let val = |i: usize| &nodes[i].value;
            match &node.op {
                Op::Leaf | Op::Param(_) => unreachable!(),
                Op::Add(a, b) => {
                    accum(&mut grads, *b, g.clone());
                    accum(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    accum(&mut grads, *b, g.map(|v| -v));
                    accum(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    if nodes[*a].grad {
                        accum(&mut grads, *a, g.zip_map(val(*b), |g, y| g * y));
                    }
                    if nodes[*b].grad {
                        accum(&mut grads, *b, g.zip_map(val(*a), |g, x| g * x));
                    }
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    accum(&mut grads, *a, g.map(|v| v * s));
                }
                Op::AddScalar(a) => accum(&mut grads, *a, g),
                Op::AddBias { x, bias } => {
                    if nodes[*bias].grad {
                        let c = val(*bias).len();
                        accum(&mut grads, *bias, kernels::sum_over_channels(&g, c));
                    }
                    accum(&mut grads, *x, g);
                }
                Op::Linear { x, w, b } => {
                    let (gx, gw, gb) = kernels::linear_backward(
                        &g,
                        val(*x),
                        val(*w),
                        nodes[*x].grad,
                        b.is_some(),
                    );
                    if let Some(gx) = gx {
                        accum(&mut grads, *x, gx);
                    }
                    accum(&mut grads, *w, gw);
                    if let (Some(b), Some(gb)) = (b, gb) {
                        accum(&mut grads, *b, gb);
                    }
                }
                Op::Conv2d { x, w, b } => {
                    let (gx, gw, gb) = kernels::conv2d_backward(
                        &g,
                        val(*x),
                        val(*w),
                        nodes[*x].grad,
                        b.is_some(),
                    );
                    if let Some(gx) = gx {
                        accum(&mut grads, *x, gx);
                    }
                    accum(&mut grads, *w, gw);
                    if let (Some(b), Some(gb)) = (b, gb) {
                        accum(&mut grads, *b, gb);
                    }
                }
                Op::AvgPool2(x) => accum(&mut grads, *x, kernels::avg_pool2_backward(&g)),
                Op::Upsample2(x) => accum(&mut grads, *x, kernels::upsample2_backward(&g)),
                Op::GroupNorm {
                    x,
                    gamma,
                    beta,
                    groups,
                    stats,
                } => {
                    let (gx, gg, gb) =
                        kernels::group_norm_backward(&g, val(*x), val(*gamma), *groups, stats);
                    accum(&mut grads, *x, gx);
                    accum(&mut grads, *gamma, gg);
                    accum(&mut grads, *beta, gb);
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let width = val(p).shape()[1];
                        if nodes[p].grad {
                            accum(&mut grads, p, kernels::narrow1(&g, start, width));
                        }
                        start += width;
                    }
                }
                Op::Narrow { x, start } => {
                    let full = val(*x).shape().to_vec();
                    accum(&mut grads, *x, kernels::pad1(&g, &full, *start));
                }
                Op::Reshape(x) => {
                    let shape = val(*x).shape().to_vec();
                    accum(&mut grads, *x, g.reshape(&shape));
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    accum(&mut grads, *x, g.zip_map(y, |g, y| g * y * (T::one() - y)));
                }
                Op::Tanh(x) => {
                    let y = &node.value;
                    accum(&mut grads, *x, g.zip_map(y, |g, y| g * (T::one() - y * y)));
                }
                Op::Silu(x) => {
                    let gx = g.zip_map(val(*x), |g, x| {
                        let s = T::one() / (T::one() + (-x).exp());
                        g * s * (T::one() + x * (T::one() - s))
                    });
                    accum(&mut grads, *x, gx);
                }
                Op::LeakyRelu(x, slope) => {
                    let slope = *slope;
                    let gx = g.zip_map(val(*x), |g, x| if x > T::zero() { g } else { g * slope });
                    accum(&mut grads, *x, gx);
                }
                Op::Exp(x) => {
                    let y = &node.value;
                    accum(&mut grads, *x, g.zip_map(y, |g, y| g * y));
                }
                Op::Abs(x) => {
                    let gx = g.zip_map(val(*x), |g, x| {
                        if x > T::zero() {
                            g
                        } else if x < T::zero() {
                            -g
                        } else {
                            T::zero()
                        }
                    });
                    accum(&mut grads, *x, gx);
                }
                Op::Square(x) => {
                    let two = T::c(2.0);
                    accum(&mut grads, *x, g.zip_map(val(*x), |g, x| g * two * x));
                }
                Op::Clamp { x, lo, hi } => {
                    let (lo, hi) = (*lo, *hi);
                    let gx = g.zip_map(val(*x), |g, x| {
                        if x >= lo && x <= hi {
                            g
                        } else {
                            T::zero()
                        }
                    });
                    accum(&mut grads, *x, gx);
                }
                Op::SumAll(x) => {
                    let s = g.data()[0];
                    accum(&mut grads, *x, Tensor::full(val(*x).shape(), s));
                }
            }
        }
        Gradients {
            nodes: grads,
            params,
        }
    }
}

#[allow(clippy::should_implement_trait)]
impl<'g, T: Real> Var<'g, T> {
    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn value(&self) -> Arc<Tensor<T>> {
        self.graph.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    fn unary(self, op: impl FnOnce(usize) -> Op<T>, f: impl Fn(T) -> T) -> Self {
        let out = self.value().map(f);
        let grad = self.graph.needs_grad(&[self.id]);
        self.graph.push(out, op(self.id), grad)
    }

    fn binary(self, other: Self, op: impl FnOnce(usize, usize) -> Op<T>, f: impl Fn(T, T) -> T) -> Self {
        let out = self.value().zip_map(&other.value(), f);
        let grad = self.graph.needs_grad(&[self.id, other.id]);
        self.graph.push(out, op(self.id, other.id), grad)
    }

    pub fn add(self, other: Self) -> Self {
        self.binary(other, Op::Add, |a, b| a + b)
    }

    pub fn sub(self, other: Self) -> Self {
        self.binary(other, Op::Sub, |a, b| a - b)
    }

    pub fn mul(self, other: Self) -> Self {
        self.binary(other, Op::Mul, |a, b| a * b)
    }

    pub fn scale(self, s: f64) -> Self {
        let s = T::c(s);
        self.unary(|x| Op::Scale(x, s), |v| v * s)
    }

    pub fn add_scalar(self, s: f64) -> Self {
        let s = T::c(s);
        self.unary(Op::AddScalar, |v| v + s)
    }

    /// Broadcast-add a `[C]` bias over axis 1 of `[N, C, ...]`.
    pub fn add_bias(self, bias: Self) -> Self {
        let out = kernels::add_bias(&self.value(), &bias.value());
        let grad = self.graph.needs_grad(&[self.id, bias.id]);
        self.graph.push(
            out,
            Op::AddBias {
                x: self.id,
                bias: bias.id,
            },
            grad,
        )
    }

    pub fn sigmoid(self) -> Self {
        self.unary(Op::Sigmoid, |v| T::one() / (T::one() + (-v).exp()))
    }

    pub fn tanh(self) -> Self {
        self.unary(Op::Tanh, |v| v.tanh())
    }

    pub fn silu(self) -> Self {
        self.unary(Op::Silu, |v| v / (T::one() + (-v).exp()))
    }

    pub fn leaky_relu(self, slope: f64) -> Self {
        let s = T::c(slope);
        self.unary(|x| Op::LeakyRelu(x, s), |v| if v > T::zero() { v } else { v * s })
    }

    pub fn exp(self) -> Self {
        self.unary(Op::Exp, |v| v.exp())
    }

    pub fn abs(self) -> Self {
        self.unary(Op::Abs, |v| v.abs())
    }

    pub fn square(self) -> Self {
        self.unary(Op::Square, |v| v * v)
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Self {
        let (lo, hi) = (T::c(lo), T::c(hi));
        self.unary(|x| Op::Clamp { x, lo, hi }, |v| v.max(lo).min(hi))
    }

    pub fn sum_all(self) -> Self {
        let out = Tensor::scalar(self.value().sum());
        let grad = self.graph.needs_grad(&[self.id]);
        self.graph.push(out, Op::SumAll(self.id), grad)
    }

    pub fn reshape(self, shape: &[usize]) -> Self {
        let out = (*self.value()).clone().reshape(shape);
        let grad = self.graph.needs_grad(&[self.id]);
        self.graph.push(out, Op::Reshape(self.id), grad)
    }

    /// Slice `[start, start + len)` of axis 1.
    pub fn narrow(self, start: usize, len: usize) -> Self {
        let out = kernels::narrow1(&self.value(), start, len);
        let grad = self.graph.needs_grad(&[self.id]);
        self.graph.push(out, Op::Narrow { x: self.id, start }, grad)
    }

    /// 2x2 average pooling on `[N, C, H, W]`.
    pub fn avg_pool2(self) -> Self {
        let out = kernels::avg_pool2(&self.value());
        let grad = self.graph.needs_grad(&[self.id]);
        self.graph.push(out, Op::AvgPool2(self.id), grad)
    }

    /// 2x nearest-neighbour upsampling on `[N, C, H, W]`.
    pub fn upsample2(self) -> Self {
        let out = kernels::upsample2(&self.value());
        let grad = self.graph.needs_grad(&[self.id]);
        self.graph.push(out, Op::Upsample2(self.id), grad)
    }

    /// Scalar value of a one-element node.
    pub fn item(&self) -> T {
        let v = self.value();
        assert_eq!(v.len(), 1, "item() on a non-scalar");
        v.data()[0]
    }
}
