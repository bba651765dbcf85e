//! Forward and adjoint kernels behind the graph operations.

use super::{Real, Tensor};

fn split1(shape: &[usize]) -> (usize, usize, usize) {
    assert!(shape.len() >= 2, "expected at least [N, C] layout, got {shape:?}");
    (shape[0], shape[1], shape[2..].iter().product())
}

pub(crate) fn concat1<T: Real>(parts: &[&Tensor<T>]) -> Tensor<T> {
    let (n, _, inner) = split1(parts[0].shape());
    let tail = parts[0].shape()[2..].to_vec();
    let total: usize = parts
        .iter()
        .map(|p| {
            assert_eq!(p.shape()[0], n, "concat batch mismatch");
            assert_eq!(&p.shape()[2..], &tail[..], "concat trailing-shape mismatch");
            p.shape()[1]
        })
        .sum();
    let mut data = Vec::with_capacity(n * total * inner);
    for row in 0..n {
        for p in parts {
            let len = p.shape()[1] * inner;
            data.extend_from_slice(&p.data()[row * len..(row + 1) * len]);
        }
    }
    let mut shape = vec![n, total];
    shape.extend(tail);
    Tensor::from_vec(&shape, data)
}

pub(crate) fn narrow1<T: Real>(x: &Tensor<T>, start: usize, len: usize) -> Tensor<T> {
    let (n, c, inner) = split1(x.shape());
    assert!(start + len <= c, "narrow out of range");
    let mut data = Vec::with_capacity(n * len * inner);
    for row in 0..n {
        let base = row * c * inner + start * inner;
        data.extend_from_slice(&x.data()[base..base + len * inner]);
    }
    let mut shape = x.shape().to_vec();
    shape[1] = len;
    Tensor::from_vec(&shape, data)
}

/// Adjoint of [`narrow1`]: embed `g` into zeros of shape `full` at `start`.
pub(crate) fn pad1<T: Real>(g: &Tensor<T>, full: &[usize], start: usize) -> Tensor<T> {
    let (n, c, inner) = split1(full);
    let len = g.shape()[1];
    let mut out = Tensor::zeros(full);
    for row in 0..n {
        let dst = row * c * inner + start * inner;
        out.data_mut()[dst..dst + len * inner]
            .copy_from_slice(&g.data()[row * len * inner..(row + 1) * len * inner]);
    }
    out
}

pub(crate) fn add_bias<T: Real>(x: &Tensor<T>, bias: &Tensor<T>) -> Tensor<T> {
    let (n, c, inner) = split1(x.shape());
    assert_eq!(bias.len(), c, "bias width mismatch");
    let mut out = x.clone();
    let b = bias.data();
    for (i, chunk) in out.data_mut().chunks_mut(inner).enumerate() {
        let v = b[i % c];
        chunk.iter_mut().for_each(|x| *x += v);
    }
    debug_assert_eq!(out.len(), n * c * inner);
    out
}

pub(crate) fn sum_over_channels<T: Real>(g: &Tensor<T>, c: usize) -> Tensor<T> {
    let (_, gc, inner) = split1(g.shape());
    assert_eq!(gc, c);
    let mut out = vec![T::zero(); c];
    for (i, chunk) in g.data().chunks(inner).enumerate() {
        out[i % c] += chunk.iter().copied().sum::<T>();
    }
    Tensor::from_vec(&[c], out)
}

pub(crate) fn linear<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Tensor<T> {
    assert_eq!(x.shape().len(), 2, "linear input must be [N, K]");
    assert_eq!(w.shape().len(), 2, "linear weight must be [M, K]");
    let (n, k) = (x.shape()[0], x.shape()[1]);
    let m = w.shape()[0];
    assert_eq!(w.shape()[1], k, "linear inner dimension mismatch: {:?} vs {:?}", x.shape(), w.shape());
    let mut out = Tensor::zeros(&[n, m]);
    T::gemm(n, k, m, T::one(), x.data(), (k, 1), w.data(), (1, k), T::zero(), out.data_mut(), (m, 1));
    if let Some(b) = b {
        assert_eq!(b.len(), m);
        for row in out.data_mut().chunks_mut(m) {
            for (o, &bv) in row.iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
    }
    out
}

type Triple<T> = (Option<Tensor<T>>, Tensor<T>, Option<Tensor<T>>);

pub(crate) fn linear_backward<T: Real>(
    g: &Tensor<T>,
    x: &Tensor<T>,
    w: &Tensor<T>,
    want_x: bool,
    want_b: bool,
) -> Triple<T> {
    let (n, k) = (x.shape()[0], x.shape()[1]);
    let m = w.shape()[0];
    let gx = want_x.then(|| {
        let mut gx = Tensor::zeros(&[n, k]);
        T::gemm(n, m, k, T::one(), g.data(), (m, 1), w.data(), (k, 1), T::zero(), gx.data_mut(), (k, 1));
        gx
    });
    let mut gw = Tensor::zeros(&[m, k]);
    T::gemm(m, n, k, T::one(), g.data(), (1, m), x.data(), (k, 1), T::zero(), gw.data_mut(), (k, 1));
    let gb = want_b.then(|| {
        let mut gb = vec![T::zero(); m];
        for row in g.data().chunks(m) {
            for (acc, &v) in gb.iter_mut().zip(row) {
                *acc += v;
            }
        }
        Tensor::from_vec(&[m], gb)
    });
    (gx, gw, gb)
}

fn conv_dims<T: Real>(x: &Tensor<T>, w: &Tensor<T>) -> (usize, usize, usize, usize, usize, usize) {
    let xs = x.shape();
    let ws = w.shape();
    assert_eq!(xs.len(), 4, "conv input must be [N, C, H, W], got {xs:?}");
    assert_eq!(ws.len(), 4, "conv weight must be [Cout, Cin, k, k]");
    assert_eq!(ws[1], xs[1], "conv channel mismatch: input {xs:?}, weight {ws:?}");
    assert_eq!(ws[2], ws[3]);
    assert_eq!(ws[2] % 2, 1, "conv kernel must be odd");
    (xs[0], xs[1], xs[2], xs[3], ws[0], ws[2])
}

/// Unfold one `[C, H, W]` image into `[C*k*k, H*W]` patches with zero padding `k/2`.
fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, k: usize, col: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let base = ((ci * k + ky) * k + kx) * hw;
                let dst_plane = &mut col[base..base + hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let lo = (-dx).max(0) as usize;
                let hi = (w as isize - dx).min(w as isize).max(0) as usize;
                for y in 0..h {
                    let dst = &mut dst_plane[y * w..(y + 1) * w];
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize || lo >= hi {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    dst[..lo].fill(T::zero());
                    dst[hi..].fill(T::zero());
                    let s0 = (lo as isize + dx) as usize;
                    dst[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`], accumulating into `x`.
fn col2im<T: Real>(col: &[T], c: usize, h: usize, w: usize, k: usize, x: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let base = ((ci * k + ky) * k + kx) * hw;
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let lo = (-dx).max(0) as usize;
                let hi = (w as isize - dx).min(w as isize).max(0) as usize;
                if lo >= hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &col[base + y * w + lo..base + y * w + hi];
                    let s0 = ci * hw + sy as usize * w + (lo as isize + dx) as usize;
                    for (d, &v) in x[s0..s0 + (hi - lo)].iter_mut().zip(src) {
                        *d += v;
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Tensor<T> {
    let (n, cin, h, wd, cout, k) = conv_dims(x, w);
    let hw = h * wd;
    let ckk = cin * k * k;
    let mut out = Tensor::zeros(&[n, cout, h, wd]);
    let mut col = if k == 1 { Vec::new() } else { vec![T::zero(); ckk * hw] };
    for row in 0..n {
        let xr = &x.data()[row * cin * hw..(row + 1) * cin * hw];
        let patches: &[T] = if k == 1 {
            xr
        } else {
            im2col(xr, cin, h, wd, k, &mut col);
            &col
        };
        let yr = &mut out.data_mut()[row * cout * hw..(row + 1) * cout * hw];
        T::gemm(cout, ckk, hw, T::one(), w.data(), (ckk, 1), patches, (hw, 1), T::zero(), yr, (hw, 1));
        if let Some(b) = b {
            for (plane, &bv) in yr.chunks_mut(hw).zip(b.data()) {
                plane.iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    out
}

pub(crate) fn conv2d_backward<T: Real>(
    g: &Tensor<T>,
    x: &Tensor<T>,
    w: &Tensor<T>,
    want_x: bool,
    want_b: bool,
) -> Triple<T> {
    let (n, cin, h, wd, cout, k) = conv_dims(x, w);
    let hw = h * wd;
    let ckk = cin * k * k;
    let mut gw = Tensor::zeros(w.shape());
    let mut gx = want_x.then(|| Tensor::zeros(x.shape()));
    let mut gb = want_b.then(|| vec![T::zero(); cout]);
    let mut col = if k == 1 { Vec::new() } else { vec![T::zero(); ckk * hw] };
    let mut gcol = if want_x && k != 1 { vec![T::zero(); ckk * hw] } else { Vec::new() };
    for row in 0..n {
        let xr = &x.data()[row * cin * hw..(row + 1) * cin * hw];
        let gr = &g.data()[row * cout * hw..(row + 1) * cout * hw];
        let patches: &[T] = if k == 1 {
            xr
        } else {
            im2col(xr, cin, h, wd, k, &mut col);
            &col
        };
        T::gemm(cout, hw, ckk, T::one(), gr, (hw, 1), patches, (1, hw), T::one(), gw.data_mut(), (ckk, 1));
        if let Some(gb) = gb.as_mut() {
            for (acc, plane) in gb.iter_mut().zip(gr.chunks(hw)) {
                *acc += plane.iter().copied().sum::<T>();
            }
        }
        if let Some(gx) = gx.as_mut() {
            let gxr = &mut gx.data_mut()[row * cin * hw..(row + 1) * cin * hw];
            if k == 1 {
                T::gemm(cin, cout, hw, T::one(), w.data(), (1, cin), gr, (hw, 1), T::zero(), gxr, (hw, 1));
            } else {
                T::gemm(ckk, cout, hw, T::one(), w.data(), (1, ckk), gr, (hw, 1), T::zero(), &mut gcol, (hw, 1));
                col2im(&gcol, cin, h, wd, k, gxr);
            }
        }
    }
    (gx, gw, gb.map(|v| Tensor::from_vec(&[cout], v)))
}

fn pool_dims(shape: &[usize]) -> (usize, usize, usize) {
    assert_eq!(shape.len(), 4, "expected [N, C, H, W], got {shape:?}");
    (shape[0] * shape[1], shape[2], shape[3])
}

pub(crate) fn avg_pool2<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (planes, h, w) = pool_dims(x.shape());
    assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2 needs even spatial size");
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::c(0.25);
    let mut out = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let src = &x.data()[p * h * w..(p + 1) * h * w];
        for y in 0..oh {
            let r0 = &src[2 * y * w..(2 * y + 1) * w];
            let r1 = &src[(2 * y + 1) * w..(2 * y + 2) * w];
            for xx in 0..ow {
                out.push((r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]) * quarter);
            }
        }
    }
    let s = x.shape();
    Tensor::from_vec(&[s[0], s[1], oh, ow], out)
}

pub(crate) fn avg_pool2_backward<T: Real>(g: &Tensor<T>) -> Tensor<T> {
    let up = upsample2(g);
    up.map(|v| v * T::c(0.25))
}

pub(crate) fn upsample2<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (planes, h, w) = pool_dims(x.shape());
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let src = &x.data()[p * h * w..(p + 1) * h * w];
        for y in 0..oh {
            let row = &src[(y / 2) * w..(y / 2 + 1) * w];
            for &v in row {
                out.push(v);
                out.push(v);
            }
        }
    }
    let s = x.shape();
    Tensor::from_vec(&[s[0], s[1], oh, ow], out)
}

pub(crate) fn upsample2_backward<T: Real>(g: &Tensor<T>) -> Tensor<T> {
    let (planes, h, w) = pool_dims(g.shape());
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![T::zero(); planes * oh * ow];
    for p in 0..planes {
        let src = &g.data()[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for y in 0..h {
            for x in 0..w {
                dst[(y / 2) * ow + x / 2] += src[y * w + x];
            }
        }
    }
    let s = g.shape();
    Tensor::from_vec(&[s[0], s[1], oh, ow], out)
}

/// Returns the output and the per-(sample, group) `(mean, 1/std)`.
pub(crate) fn group_norm<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    groups: usize,
    eps: T,
) -> (Tensor<T>, Vec<(T, T)>) {
    let (n, c, inner) = split1(x.shape());
    assert!(groups > 0 && c % groups == 0, "channels {c} not divisible into {groups} groups");
    assert_eq!(gamma.len(), c);
    assert_eq!(beta.len(), c);
    let per = c / groups;
    let m = T::from_usize(per * inner).unwrap();
    let mut out = x.clone();
    let mut stats = Vec::with_capacity(n * groups);
    for (gi, chunk) in out.data_mut().chunks_mut(per * inner).enumerate() {
        let mean = chunk.iter().copied().sum::<T>() / m;
        let var = chunk.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / m;
        let rstd = T::one() / (var + eps).sqrt();
        let group = gi % groups;
        for (ci, plane) in chunk.chunks_mut(inner).enumerate() {
            let ch = group * per + ci;
            let (ga, be) = (gamma.data()[ch], beta.data()[ch]);
            plane.iter_mut().for_each(|v| *v = (*v - mean) * rstd * ga + be);
        }
        stats.push((mean, rstd));
    }
    (out, stats)
}

pub(crate) fn group_norm_backward<T: Real>(
    g: &Tensor<T>,
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    groups: usize,
    stats: &[(T, T)],
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (_, c, inner) = split1(x.shape());
    let per = c / groups;
    let m = T::from_usize(per * inner).unwrap();
    let mut gx = Tensor::zeros(x.shape());
    let mut gg = vec![T::zero(); c];
    let mut gb = vec![T::zero(); c];
    let chunks = x
        .data()
        .chunks(per * inner)
        .zip(g.data().chunks(per * inner))
        .zip(gx.data_mut().chunks_mut(per * inner));
    for (gi, ((xc, gc), dc)) in chunks.enumerate() {
        let (mean, rstd) = stats[gi];
        let group = gi % groups;
        let mut s1 = T::zero();
        let mut s2 = T::zero();
        for (ci, (xp, gp)) in xc.chunks(inner).zip(gc.chunks(inner)).enumerate() {
            let ch = group * per + ci;
            let ga = gamma.data()[ch];
            for (&xv, &gv) in xp.iter().zip(gp) {
                let xhat = (xv - mean) * rstd;
                gg[ch] += gv * xhat;
                gb[ch] += gv;
                let dxhat = gv * ga;
                s1 += dxhat;
                s2 += dxhat * xhat;
            }
        }
        let (s1, s2) = (s1 / m, s2 / m);
        for (ci, ((xp, gp), dp)) in xc
            .chunks(inner)
            .zip(gc.chunks(inner))
            .zip(dc.chunks_mut(inner))
            .enumerate()
        {
            let ga = gamma.data()[group * per + ci];
            for ((&xv, &gv), d) in xp.iter().zip(gp).zip(dp.iter_mut()) {
                let xhat = (xv - mean) * rstd;
                *d = rstd * (gv * ga - s1 - xhat * s2);
            }
        }
    }
    (gx, Tensor::from_vec(&[c], gg), Tensor::from_vec(&[c], gb))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct 7-loop convolution.
    fn conv_naive(x: &Tensor<f64>, w: &Tensor<f64>) -> Tensor<f64> {
        let (n, cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (cout, k) = (w.shape()[0], w.shape()[2]);
        let p = (k / 2) as isize;
        let mut out = Tensor::zeros(&[n, cout, h, wd]);
        for b in 0..n {
            for o in 0..cout {
                for y in 0..h {
                    for xx in 0..wd {
                        let mut acc = 0.0;
                        for i in 0..cin {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let sy = y as isize + ky as isize - p;
                                    let sx = xx as isize + kx as isize - p;
                                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= wd as isize {
                                        continue;
                                    }
                                    acc += x.data()[((b * cin + i) * h + sy as usize) * wd + sx as usize]
                                        * w.data()[((o * cin + i) * k + ky) * k + kx];
                                }
                            }
                        }
                        out.data_mut()[((b * cout + o) * h + y) * wd + xx] = acc;
                    }
                }
            }
        }
        out
    }

    fn ramp(shape: &[usize], seed: f64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|i| ((i as f64 + seed) * 0.7).sin()).collect())
    }

    #[test]
    fn conv_matches_direct_loop() {
        for &(k, h, w) in &[(3, 5, 6), (1, 4, 4), (5, 4, 3), (3, 1, 1)] {
            let x = ramp(&[2, 3, h, w], 0.3);
            let wt = ramp(&[4, 3, k, k], 1.1);
            let got = conv2d(&x, &wt, None);
            let want = conv_naive(&x, &wt);
            assert!(got.max_abs_diff(&want) < 1e-12, "k={k} h={h} w={w}");
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)>
        let (c, h, w, k) = (2, 5, 4, 3);
        let x = ramp(&[c * h * w], 0.1);
        let cvec = ramp(&[c * k * k * h * w], 2.0);
        let mut col = vec![0.0; c * k * k * h * w];
        im2col(x.data(), c, h, w, k, &mut col);
        let lhs: f64 = col.iter().zip(cvec.data()).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; c * h * w];
        col2im(cvec.data(), c, h, w, k, &mut back);
        let rhs: f64 = back.iter().zip(x.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn pooling_pairs() {
        let x = ramp(&[1, 2, 4, 4], 0.0);
        let p = avg_pool2(&x);
        assert_eq!(p.shape(), &[1, 2, 2, 2]);
        let want = (x.data()[0] + x.data()[1] + x.data()[4] + x.data()[5]) / 4.0;
        assert!((p.data()[0] - want).abs() < 1e-15);
        let u = upsample2(&p);
        assert_eq!(u.shape(), x.shape());
        assert_eq!(u.data()[5], p.data()[0]);
    }

    #[test]
    fn concat_then_narrow_roundtrip() {
        let a = ramp(&[2, 3, 2], 0.0);
        let b = ramp(&[2, 1, 2], 5.0);
        let c = concat1(&[&a, &b]);
        assert_eq!(c.shape(), &[2, 4, 2]);
        assert_eq!(narrow1(&c, 0, 3), a);
        assert_eq!(narrow1(&c, 3, 1), b);
    }

    #[test]
    fn group_norm_normalizes_each_group() {
        let x = ramp(&[2, 4, 3], 0.5);
        let ones = Tensor::full(&[4], 1.0);
        let zeros = Tensor::zeros(&[4]);
        let (y, _) = group_norm(&x, &ones, &zeros, 2, 0.0);
        for chunk in y.data().chunks(6) {
            let mean: f64 = chunk.iter().sum::<f64>() / 6.0;
            let var: f64 = chunk.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }
}
