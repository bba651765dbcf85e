//! Deterministic dual-arm gesture clips.
//!
//! Each arm is a tool shaft entering the scene at a fixed port on the image
//! border, ending in a wrist joint with a short jaw segment. The wrist follows
//! a class-specific path over a static textured background:
//!
//! | class | token | motion                                           |
//! |-------|-------|--------------------------------------------------|
//! | 0     | G2    | left arm approaches the centre                   |
//! | 1     | G3    | right arm pushes inward with a lateral wobble    |
//! | 2     | G4    | hand-off: both arms converge, left arm enters    |
//! | 3     | G6    | left arm pulls away toward its port              |
//!
//! Geometry is laid out on a 64x64 canvas and scaled to the output size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClipSource, Frame, GestureClass, VideoClip, LUMA_WEIGHTS};
use crate::exec::Exec;
use crate::{Error, Result};

const CANVAS: f32 = 64.0;
/// Frames for the wrist to travel from path start to path end at unit speed.
const TRAVEL_FRAMES: f32 = 48.0;
/// Wrist positions are kept inside this box of the 64-px canvas.
const WRIST_BOX: (f32, f32) = (10.0, 54.0);
const SHAFT_RADIUS: f32 = 2.4;
const JAW_RADIUS: f32 = 1.6;
const JOINT_RADIUS: f32 = 2.8;
const JAW_LENGTH: f32 = 7.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub frame_size: usize,
    pub channels: usize,
    pub num_classes: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            frame_size: 64,
            channels: 3,
            num_classes: 4,
        }
    }
}

/// Motion of one arm on the 64-px canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmScript {
    pub port: [f32; 2],
    pub path_start: [f32; 2],
    pub path_end: [f32; 2],
    /// Lateral wobble amplitude (px) and cycles per unit progress.
    pub wobble: (f32, f32),
    /// Wrist bend (radians) at progress 0 and its swing amplitude.
    pub bend: (f32, f32),
    pub color: [f32; 3],
}

#[derive(Debug, Clone, PartialEq)]
struct Blob {
    center: [f32; 2],
    sigma: f32,
    gain: f32,
}

/// Fully sampled per-clip script; rendering is a pure function of it and `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthGestureScript {
    pub class_id: GestureClass,
    pub arms: [ArmScript; 2],
    pub phase: f32,
    pub speed: f32,
    pub amplitude: f32,
    blobs: Vec<Blob>,
    tissue: [f32; 3],
}

fn jitter(rng: &mut ChaCha8Rng, p: [f32; 2], r: f32) -> [f32; 2] {
    [p[0] + rng.random_range(-r..=r), p[1] + rng.random_range(-r..=r)]
}

impl SynthGestureScript {
    pub fn sample(class_id: GestureClass, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(
            seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (class_id.index() as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03),
        );
        let left_port = [3.5, 44.0];
        let right_port = [60.5, 44.0];
        let left_color = [0.82, 0.84, 0.88];
        let right_color = [0.68, 0.70, 0.74];
        // (start, end, wobble, bend) per arm
        type Path = ([f32; 2], [f32; 2], (f32, f32), (f32, f32));
        let (left, right): (Path, Path) = match class_id.index() % 4 {
            0 => (
                ([16.0, 40.0], [32.0, 30.0], (0.0, 0.0), (0.2, 0.3)),
                ([46.0, 36.0], [45.0, 35.0], (1.0, 0.5), (-0.2, 0.1)),
            ),
            1 => (
                ([20.0, 32.0], [21.0, 33.0], (0.5, 0.5), (0.1, 0.1)),
                ([46.0, 38.0], [32.0, 28.0], (2.5, 2.0), (-0.3, 0.4)),
            ),
            2 => (
                ([14.0, 48.0], [29.0, 32.0], (0.0, 0.0), (0.3, 0.4)),
                ([48.0, 24.0], [35.0, 32.0], (0.0, 0.0), (-0.4, 0.3)),
            ),
            _ => (
                ([31.0, 30.0], [15.0, 46.0], (0.0, 0.0), (0.0, -0.4)),
                ([46.0, 34.0], [47.0, 33.0], (0.8, 0.5), (-0.1, 0.1)),
            ),
        };
        let mut arm = |port, color, (s, e, wobble, bend): Path| ArmScript {
            port,
            path_start: jitter(&mut rng, s, 2.0),
            path_end: jitter(&mut rng, e, 2.0),
            wobble,
            bend,
            color,
        };
        let arms = [arm(left_port, left_color, left), arm(right_port, right_color, right)];
        let phase = rng.random_range(0.0..0.3);
        let speed = rng.random_range(0.8..1.2);
        let amplitude = rng.random_range(0.85..1.15);
        let blobs = (0..4)
            .map(|_| Blob {
                center: [rng.random_range(0.0..CANVAS), rng.random_range(0.0..CANVAS)],
                sigma: rng.random_range(5.0..14.0),
                gain: rng.random_range(-0.35..0.35),
            })
            .collect();
        let tissue = [
            rng.random_range(0.50..0.62),
            rng.random_range(0.20..0.28),
            rng.random_range(0.18..0.25),
        ];
        SynthGestureScript {
            class_id,
            arms,
            phase,
            speed,
            amplitude,
            blobs,
            tissue,
        }
    }

    fn progress(&self, t: usize) -> f32 {
        self.phase + self.speed * t as f32 / TRAVEL_FRAMES
    }

    /// Wrist joint and jaw tip of `arm` at frame `t`, on the 64-px canvas.
    pub fn arm_points(&self, arm: usize, t: usize) -> ([f32; 2], [f32; 2]) {
        let a = &self.arms[arm];
        let u = self.progress(t);
        let s = self.amplitude * u;
        let dir = [a.path_end[0] - a.path_start[0], a.path_end[1] - a.path_start[1]];
        let len = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt().max(1e-3);
        let perp = [-dir[1] / len, dir[0] / len];
        let w = a.wobble.0 * (std::f32::consts::TAU * a.wobble.1 * u).sin();
        let (lo, hi) = WRIST_BOX;
        let wrist = [
            (a.path_start[0] + s * dir[0] + w * perp[0]).clamp(lo, hi),
            (a.path_start[1] + s * dir[1] + w * perp[1]).clamp(lo, hi),
        ];
        let shaft = (wrist[1] - a.port[1]).atan2(wrist[0] - a.port[0]);
        let bend = a.bend.0 + a.bend.1 * (std::f32::consts::PI * u).sin();
        let angle = shaft + bend;
        let tip = [wrist[0] + JAW_LENGTH * angle.cos(), wrist[1] + JAW_LENGTH * angle.sin()];
        (wrist, tip)
    }

    pub fn render(&self, t: usize, opts: &SynthOptions) -> Frame {
        let n = opts.frame_size;
        let scale = CANVAS / n as f32;
        let arms: Vec<_> = (0..2).map(|i| self.arm_points(i, t)).collect();
        let mut data = Vec::with_capacity(n * n * opts.channels);
        for y in 0..n {
            for x in 0..n {
                let p = [(x as f32 + 0.5) * scale, (y as f32 + 0.5) * scale];
                let mut rgb = self.background(p);
                for (i, (wrist, tip)) in arms.iter().enumerate() {
                    let arm = &self.arms[i];
                    let shaft = coverage(segment_distance(p, arm.port, *wrist), SHAFT_RADIUS, scale);
                    let jaw = coverage(segment_distance(p, *wrist, *tip), JAW_RADIUS, scale);
                    let body = shaft.max(jaw);
                    blend(&mut rgb, arm.color, body);
                    let joint = coverage(dist(p, *wrist), JOINT_RADIUS, scale);
                    blend(&mut rgb, [0.30, 0.30, 0.33], joint);
                }
                match opts.channels {
                    1 => data.push(
                        (rgb[0] * LUMA_WEIGHTS[0] + rgb[1] * LUMA_WEIGHTS[1] + rgb[2] * LUMA_WEIGHTS[2])
                            .clamp(0.0, 1.0),
                    ),
                    _ => data.extend(rgb.iter().map(|v| v.clamp(0.0, 1.0))),
                }
            }
        }
        Frame {
            height: n,
            width: n,
            channels: opts.channels,
            data,
        }
    }

    fn background(&self, p: [f32; 2]) -> [f32; 3] {
        let mut f = 1.0 + 0.06 * (0.21 * p[0] + 0.13 * p[1]).sin();
        for b in &self.blobs {
            let d2 = (p[0] - b.center[0]).powi(2) + (p[1] - b.center[1]).powi(2);
            f += b.gain * (-d2 / (2.0 * b.sigma * b.sigma)).exp();
        }
        [self.tissue[0] * f, self.tissue[1] * f, self.tissue[2] * f]
    }
}

fn dist(a: [f32; 2], b: [f32; 2]) -> f32 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn segment_distance(p: [f32; 2], a: [f32; 2], b: [f32; 2]) -> f32 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// Anti-aliased coverage of a disc/capsule of `radius` at distance `d`, with
/// a one-pixel ramp measured in canvas units.
fn coverage(d: f32, radius: f32, pixel: f32) -> f32 {
    ((radius + 0.5 * pixel - d) / pixel).clamp(0.0, 1.0)
}

fn blend(rgb: &mut [f32; 3], color: [f32; 3], alpha: f32) {
    for (c, v) in rgb.iter_mut().zip(color) {
        *c = *c * (1.0 - alpha) + v * alpha;
    }
}

/// Clip of `length` frames at the default 64x64x3 output.
pub fn generate_synthetic_clip(class_id: GestureClass, seed: u64, length: usize) -> Result<VideoClip> {
    generate_synthetic_clip_with(class_id, seed, length, &SynthOptions::default())
}

pub fn generate_synthetic_clip_with(
    class_id: GestureClass,
    seed: u64,
    length: usize,
    opts: &SynthOptions,
) -> Result<VideoClip> {
    if class_id.index() >= opts.num_classes {
        return Err(Error::Domain(format!(
            "gesture class {} out of range for {} classes",
            class_id.index(),
            opts.num_classes
        )));
    }
    if length < 2 {
        return Err(Error::Argument(format!("clip length {length} < 2")));
    }
    if !matches!(opts.channels, 1 | 3) {
        return Err(Error::Argument(format!(
            "synthetic clips support 1 or 3 channels, got {}",
            opts.channels
        )));
    }
    let script = SynthGestureScript::sample(class_id, seed);
    let frames = (0..length).map(|t| script.render(t, opts)).collect();
    Ok(VideoClip {
        frames,
        gesture: class_id,
        clip_id: format!("synth_g{}_s{seed}", class_id.index()),
        source: ClipSource::Synthetic,
    })
}

/// `clips_per_class` clips for every class, class-major order. Clip `i` of
/// class `k` uses seed `base_seed * 1_000_003 + k * clips_per_class + i`.
pub fn build_synthetic_dataset(
    clips_per_class: usize,
    length: usize,
    base_seed: u64,
    opts: &SynthOptions,
    exec: Exec,
) -> Result<Vec<VideoClip>> {
    let jobs: Vec<(usize, u64)> = (0..opts.num_classes)
        .flat_map(|k| {
            (0..clips_per_class).map(move |i| {
                let seed = base_seed
                    .wrapping_mul(1_000_003)
                    .wrapping_add((k * clips_per_class + i) as u64);
                (k, seed)
            })
        })
        .collect();
    exec.try_map(&jobs, |&(k, seed)| {
        let class = GestureClass::new(k, opts.num_classes)?;
        let mut clip = generate_synthetic_clip_with(class, seed, length, opts)?;
        clip.clip_id = format!("synth_{}_{seed}", class.display_name());
        Ok(clip)
    })
}
