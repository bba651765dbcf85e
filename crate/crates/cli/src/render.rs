//! Image outputs: side-by-side frame strips (PNG) and metric curves (SVG).

use std::fmt::Write as _;
use std::path::Path;

use image::{Rgb, RgbImage};
use tpg_core::data::Frame;
use tpg_core::metrics::{AggregateTable, Metric};

use crate::error::{io_err, CliError, CliResult};

pub const BORDER: u32 = 2;
pub const TRUTH_BORDER: Rgb<u8> = Rgb([0, 90, 255]);
pub const PREDICTION_BORDER: Rgb<u8> = Rgb([255, 255, 255]);

fn to_rgb(frame: &Frame, x: usize, y: usize) -> Rgb<u8> {
    let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    if frame.channels >= 3 {
        Rgb([q(frame.pixel(y, x, 0)), q(frame.pixel(y, x, 1)), q(frame.pixel(y, x, 2))])
    } else {
        let g = q(frame.pixel(y, x, 0));
        Rgb([g, g, g])
    }
}

/// Ground truth on the top row and predictions below, one column per step.
/// Ground-truth cells get a blue border.
pub fn frame_strip(truth: &[Frame], predicted: &[Frame]) -> CliResult<RgbImage> {
    if truth.len() != predicted.len() || truth.is_empty() {
        return Err(CliError::Usage(format!(
            "strip needs equally many truth and predicted frames, got {} and {}",
            truth.len(),
            predicted.len()
        )));
    }
    let (h, w) = (truth[0].height as u32, truth[0].width as u32);
    let (cw, ch) = (w + 2 * BORDER, h + 2 * BORDER);
    let mut img = RgbImage::from_pixel(cw * truth.len() as u32, ch * 2, Rgb([0, 0, 0]));
    for (row, (frames, border)) in [(truth, TRUTH_BORDER), (predicted, PREDICTION_BORDER)]
        .into_iter()
        .enumerate()
    {
        for (col, f) in frames.iter().enumerate() {
            let (x0, y0) = (col as u32 * cw, row as u32 * ch);
            for y in 0..ch {
                for x in 0..cw {
                    let inside = (BORDER..BORDER + w).contains(&x) && (BORDER..BORDER + h).contains(&y);
                    let px = if inside {
                        to_rgb(f, (x - BORDER) as usize, (y - BORDER) as usize)
                    } else {
                        border
                    };
                    img.put_pixel(x0 + x, y0 + y, px);
                }
            }
        }
    }
    Ok(img)
}

pub fn save_png(img: &RgbImage, path: &Path) -> CliResult<()> {
    img.save(path).map_err(|source| {
        CliError::Core(tpg_core::Error::Image {
            path: path.to_path_buf(),
            source,
        })
    })
}

const PALETTE: [&str; 8] = [
    "#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Per-variant mean curves of one metric with a dashed vertical line at
/// `marker_t`. Each variant is one `<polyline>` tagged with `data-variant`.
pub fn curve_svg(table: &AggregateTable, metric: Metric, marker_t: usize) -> CliResult<String> {
    let curves: Vec<_> = table
        .variants()
        .into_iter()
        .map(|v| {
            let c = table.curve(&v, metric);
            (v, c)
        })
        .filter(|(_, c)| !c.is_empty())
        .collect();
    if curves.is_empty() {
        return Err(CliError::Usage(format!("no {metric} rows to plot")));
    }
    let ts = curves.iter().flat_map(|(_, c)| c.iter().map(|p| p.0));
    let t_min = ts.clone().min().expect("non-empty").min(marker_t) as f64;
    let t_max = ts.max().expect("non-empty").max(marker_t) as f64;
    let vals = curves.iter().flat_map(|(_, c)| c.iter().map(|p| p.1));
    let mut y_min = vals.clone().fold(f64::INFINITY, f64::min);
    let mut y_max = vals.fold(f64::NEG_INFINITY, f64::max);
    if y_max - y_min < 1e-9 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad = 0.05 * (y_max - y_min);
    let (y_min, y_max) = (y_min - pad, y_max + pad);

    let (width, height) = (720.0, 420.0);
    let (left, right, top, bottom) = (70.0, 170.0, 30.0, 50.0);
    let (pw, ph) = (width - left - right, height - top - bottom);
    let sx = |t: f64| left + if t_max > t_min { (t - t_min) / (t_max - t_min) * pw } else { pw / 2.0 };
    let sy = |v: f64| top + (y_max - v) / (y_max - y_min) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let v = y_min + (y_max - y_min) * i as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            left - 6.0,
            y + 4.0
        );
    }
    let t_step = (((t_max - t_min) / 10.0).ceil() as usize).max(1);
    let mut t = t_min as usize;
    while t as f64 <= t_max {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{t}</text>"#,
            sx(t as f64),
            top + ph + 18.0
        );
        t += t_step;
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{}" text-anchor="middle">t</text>"#,
        left + pw / 2.0,
        height - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" transform="rotate(-90 16 {:.1})" text-anchor="middle">{metric}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    let mx = sx(marker_t as f64);
    let _ = writeln!(
        s,
        r#"<line class="marker" data-t="{marker_t}" x1="{mx:.1}" y1="{top}" x2="{mx:.1}" y2="{}" stroke="gray" stroke-dasharray="4 4"/>"#,
        top + ph
    );
    for (i, (variant, c)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = c
            .iter()
            .map(|&(t, v, _)| format!("{:.1},{:.1}", sx(t as f64), sy(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline data-variant="{variant}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{:.1}" x2="{}" y2="{:.1}" stroke="{color}" stroke-width="2"/><text x="{}" y="{:.1}">{variant}</text>"#,
            ly - 4.0,
            lx + 20.0,
            ly - 4.0,
            lx + 26.0,
            ly
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}
