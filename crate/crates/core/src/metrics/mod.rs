//! Frame-quality metrics, best-of-k selection and per-horizon aggregation.

mod aggregate;
mod embed;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{to_grayscale, Frame};
use crate::rollout::RolloutResult;
use crate::{Error, Result};

pub use aggregate::{
    aggregate, read_series_csv, write_series_csv, AggregateRow, AggregateTable, MetricSeries,
};
pub use embed::{Embedder, RandomConvEmbedder};

/// Returned by [`psnr`] for identical frames.
pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Psnr,
    Ssim,
    FeatCosine,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Psnr, Metric::Ssim, Metric::FeatCosine];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Psnr => "psnr",
            Metric::Ssim => "ssim",
            Metric::FeatCosine => "feat_cosine",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Argument(format!("unknown metric {s:?}")))
    }
}

fn check_pair(a: &Frame, b: &Frame) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "cannot compare frames {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// `10 log10(1 / MSE)` in dB, capped at [`PSNR_CAP`].
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    check_pair(a, b)?;
    let sse: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(psnr_from_mse(sse / a.data.len() as f64))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (-10.0 * mse.log10()).min(PSNR_CAP)
    }
}

/// Normalized 1-d Gaussian taps. Frames smaller than the standard window
/// use the largest odd size that fits.
fn gaussian_taps(h: usize, w: usize) -> Vec<f64> {
    let mut size = SSIM_WINDOW.min(h).min(w);
    if size.is_multiple_of(2) {
        size -= 1;
    }
    let r = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Valid-region separable filtering of an `h x w` image.
fn filter_valid(img: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn luma(frame: &Frame) -> Result<Vec<f64>> {
    Ok(to_grayscale(frame)?.data.iter().map(|&v| v as f64).collect())
}

/// Mean local SSIM over the valid region, on luma for 3-channel frames.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    check_pair(a, b)?;
    let (h, w) = (a.height, a.width);
    let (x, y) = (luma(a)?, luma(b)?);
    let taps = gaussian_taps(h, w);
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(u, v)| u * v).collect() };
    let mu_x = filter_valid(&x, h, w, &taps);
    let mu_y = filter_valid(&y, h, w, &taps);
    let xx = filter_valid(&prod(&x, &x), h, w, &taps);
    let yy = filter_valid(&prod(&y, &y), h, w, &taps);
    let xy = filter_valid(&prod(&x, &y), h, w, &taps);
    let n = mu_x.len();
    let mut total = 0.0;
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = xx[i] - mx * mx;
        let vy = yy[i] - my * my;
        let cov = xy[i] - mx * my;
        let num = (2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2);
        let den = (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2);
        total += num / den;
    }
    Ok(total / n as f64)
}

/// Cosine similarity of two vectors. Zero vectors match only each other.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!("cosine of {} and {} dims", u.len(), v.len())));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let uu: f64 = u.iter().map(|a| a * a).sum();
    let vv: f64 = v.iter().map(|a| a * a).sum();
    Ok(match (uu == 0.0, vv == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (dot / (uu * vv).sqrt()).clamp(-1.0, 1.0),
    })
}

pub fn feature_cosine(a: &Frame, b: &Frame, embedder: &dyn Embedder) -> Result<f64> {
    check_pair(a, b)?;
    let e = embedder.embed(&[a, b])?;
    cosine(&e[0], &e[1])
}

/// Per-step values of `metric` for a predicted sequence.
pub fn metric_curve(
    predicted: &[Frame],
    truth: &[Frame],
    metric: Metric,
    embedder: &dyn Embedder,
) -> Result<Vec<f64>> {
    if predicted.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predicted frames against {} ground-truth frames",
            predicted.len(),
            truth.len()
        )));
    }
    match metric {
        Metric::Psnr => predicted.iter().zip(truth).map(|(p, t)| psnr(p, t)).collect(),
        Metric::Ssim => predicted.iter().zip(truth).map(|(p, t)| ssim(p, t)).collect(),
        Metric::FeatCosine => {
            if predicted.is_empty() {
                return Ok(Vec::new());
            }
            let all: Vec<&Frame> = predicted.iter().chain(truth).collect();
            let e = embedder.embed(&all)?;
            let n = predicted.len();
            (0..n).map(|i| cosine(&e[i], &e[n + i])).collect()
        }
    }
}

/// The sample with the highest horizon-mean `metric` against `truth`, with
/// its index. Ties go to the lowest index.
pub fn best_of_k<'a>(
    samples: &'a [RolloutResult],
    truth: &[Frame],
    metric: Metric,
    embedder: &dyn Embedder,
) -> Result<(usize, &'a RolloutResult)> {
    if samples.is_empty() {
        return Err(Error::Argument("best_of_k needs at least one sample".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in samples.iter().enumerate() {
        let curve = metric_curve(&s.predicted, truth, metric, embedder)?;
        let mut score = curve.iter().sum::<f64>() / curve.len().max(1) as f64;
        if score.is_nan() {
            score = f64::NEG_INFINITY;
        }
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((i, score));
        }
    }
    let (i, _) = best.expect("at least one sample");
    Ok((i, &samples[i]))
}
