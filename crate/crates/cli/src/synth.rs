//! Synthetic scenes standing in for real images and CNN outputs.
//!
//! Each scene has ellipse or rectangle objects on a striped, noisy background, a
//! depth map where objects sit closer than the background plane, and two logit
//! maps made from the blurred truth: a scene-level one with heavy boundary blur and
//! low-frequency noise, and a sharper fine-level one.

use mlcrf_core::imagedata::{ColorField, DepthField, LabelField, LogitField};
use mlcrf_core::proposer::RegionProposal;
use mlcrf_core::unary::{resample_bilinear, softmax};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{PipelineError, Result};

pub const DEFAULT_NOISE: f64 = 1.0;
pub const MIN_SIZE: usize = 16;
/// Logit gap of an undegraded pixel.
pub const LOGIT_GAIN: f64 = 6.0;

/// Degradation applied to the truth before it becomes logits, per unit noise level.
#[derive(Debug, Clone, Copy)]
struct Degradation {
    blur_sigma: f64,
    low_freq: f64,
    pixel: f64,
}

const SCENE_LEVEL: Degradation = Degradation {
    blur_sigma: 2.5,
    low_freq: 0.35,
    pixel: 0.25,
};

const FINE_LEVEL: Degradation = Degradation {
    blur_sigma: 0.7,
    low_freq: 0.12,
    pixel: 0.1,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub seed: u64,
    pub count: usize,
    pub size: usize,
    pub noise: f64,
    /// Objects take the background's colour and texture and differ only in depth.
    pub camouflage: bool,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 0,
            count: 20,
            size: 64,
            noise: DEFAULT_NOISE,
            camouflage: false,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.size < MIN_SIZE {
            return Err(PipelineError::Config(format!(
                "synthetic size must be at least {MIN_SIZE}, got {}",
                self.size
            )));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(PipelineError::Config(format!("noise must be >= 0, got {}", self.noise)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub id: String,
    pub color: ColorField,
    pub depth: DepthField,
    pub truth: LabelField,
    pub scene_logits: LogitField,
    /// Full-frame output of the simulated fine model.
    pub fine_logits: LogitField,
}

pub fn scene_id(index: usize) -> String {
    format!("scene_{index:04}")
}

#[derive(Debug, Clone, Copy)]
struct Shape {
    cy: f64,
    cx: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
    ellipse: bool,
}

impl Shape {
    fn contains(&self, row: usize, col: usize) -> bool {
        let (dy, dx) = (row as f64 - self.cy, col as f64 - self.cx);
        let u = (dx * self.cos + dy * self.sin) / self.a;
        let v = (-dx * self.sin + dy * self.cos) / self.b;
        if self.ellipse {
            u * u + v * v <= 1.0
        } else {
            u.abs() <= 1.0 && v.abs() <= 1.0
        }
    }

    /// Radius of a disc that covers the shape.
    fn reach(&self) -> f64 {
        if self.ellipse {
            self.a.max(self.b)
        } else {
            self.a.hypot(self.b)
        }
    }
}

/// Generates scene `index` of the set described by `params`.
pub fn generate(params: &SynthParams, index: usize) -> Result<SyntheticScene> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(index as u64);
    let s = params.size;
    let n = s * s;
    let sf = s as f64;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let shapes = place_shapes(&mut rng, s);
    let mut truth = vec![0u8; n];
    let mut owner = vec![usize::MAX; n];
    for (k, shape) in shapes.iter().enumerate() {
        for row in 0..s {
            for col in 0..s {
                if owner[row * s + col] == usize::MAX && shape.contains(row, col) {
                    owner[row * s + col] = k;
                    truth[row * s + col] = 1;
                }
            }
        }
    }

    // colour
    let bg = random_colour(&mut rng);
    let object_colours: Vec<[f64; 3]> = shapes
        .iter()
        .map(|_| if params.camouflage { bg } else { distinct_colour(&mut rng, bg) })
        .collect();
    let stripes = |rng: &mut ChaCha8Rng| {
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let period: f64 = rng.gen_range(6.0..14.0);
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        (angle.cos(), angle.sin(), std::f64::consts::TAU / period, phase)
    };
    let bg_stripes = stripes(&mut rng);
    let object_stripes: Vec<_> = shapes
        .iter()
        .map(|_| {
            let own = stripes(&mut rng);
            if params.camouflage {
                bg_stripes
            } else {
                own
            }
        })
        .collect();
    let mut color = Vec::with_capacity(n * 3);
    for row in 0..s {
        for col in 0..s {
            let k = owner[row * s + col];
            let (base, (c, si, freq, phase)) = if k == usize::MAX {
                (bg, bg_stripes)
            } else {
                (object_colours[k], object_stripes[k])
            };
            let t = 10.0 * ((col as f64 * c + row as f64 * si) * freq + phase).sin();
            for ch in base {
                let v: f64 = ch + t + 5.0 * unit.sample(&mut rng);
                color.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }

    // depth in millimetres, objects lifted off a tilted plane, with dropout holes
    let d0: f64 = rng.gen_range(1500.0..2500.0);
    let (gx, gy): (f64, f64) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    let lifts: Vec<f64> = shapes.iter().map(|_| rng.gen_range(150.0..400.0)).collect();
    let mut depth: Vec<f64> = (0..n)
        .map(|i| {
            let (row, col) = ((i / s) as f64, (i % s) as f64);
            let lift = lifts.get(owner[i]).copied().unwrap_or(0.0);
            (d0 + gx * (col - sf / 2.0) + gy * (row - sf / 2.0) - lift + 2.0 * unit.sample(&mut rng)).round()
        })
        .collect();
    let holes = rng.gen_range(1..=(n / 256).max(1));
    for _ in 0..holes {
        let (hr, hc) = (rng.gen_range(0..s) as i64, rng.gen_range(0..s) as i64);
        let radius: i64 = rng.gen_range(0..=2);
        for r in hr - radius..=hr + radius {
            for c in hc - radius..=hc + radius {
                if (0..s as i64).contains(&r) && (0..s as i64).contains(&c) {
                    depth[r as usize * s + c as usize] = 0.0;
                }
            }
        }
    }

    let signed: Vec<f64> = truth.iter().map(|&t| if t == 1 { 1.0 } else { -1.0 }).collect();
    let scene_logits = degrade(&mut rng, &signed, s, SCENE_LEVEL, params.noise)?;
    let fine_logits = degrade(&mut rng, &signed, s, FINE_LEVEL, params.noise)?;

    Ok(SyntheticScene {
        id: scene_id(index),
        color: ColorField::new(s, s, color)?,
        depth: DepthField::from_readings(s, s, depth)?,
        truth: LabelField::binary(s, s, truth)?,
        scene_logits,
        fine_logits,
    })
}

fn place_shapes(rng: &mut ChaCha8Rng, s: usize) -> Vec<Shape> {
    let sf = s as f64;
    let wanted = if s >= 48 { rng.gen_range(1..=2) } else { 1 };
    let mut shapes: Vec<Shape> = Vec::new();
    for attempt in 0..200 {
        if shapes.len() == wanted {
            break;
        }
        let a = rng.gen_range(0.14 * sf..0.24 * sf);
        let b = rng.gen_range(0.14 * sf..0.24 * sf);
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let ellipse = rng.gen_bool(0.6);
        let mut shape = Shape {
            cy: 0.0,
            cx: 0.0,
            a,
            b,
            cos: angle.cos(),
            sin: angle.sin(),
            ellipse,
        };
        // keep the extended proposal box inside the frame where the size allows
        let margin = (1.6 * shape.reach()).min(sf / 2.0 - 1.0);
        shape.cy = rng.gen_range(margin..=sf - 1.0 - margin);
        shape.cx = rng.gen_range(margin..=sf - 1.0 - margin);
        let clear = shapes.iter().all(|o| {
            (o.cy - shape.cy).hypot(o.cx - shape.cx) > o.reach() + shape.reach() + 2.0
        });
        if clear || (shapes.is_empty() && attempt > 0) {
            shapes.push(shape);
        }
    }
    shapes
}

fn random_colour(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [0; 3].map(|_| f64::from(rng.gen_range(40u8..=215)))
}

fn distinct_colour(rng: &mut ChaCha8Rng, other: [f64; 3]) -> [f64; 3] {
    loop {
        let c = random_colour(rng);
        if c.iter().zip(other).any(|(a, b)| (a - b).abs() >= 70.0) {
            return c;
        }
    }
}

/// Blurs the signed truth, adds smooth and per-pixel noise, and scales to logits
/// `[0, gain * v]`.
fn degrade(rng: &mut ChaCha8Rng, signed: &[f64], s: usize, d: Degradation, noise: f64) -> Result<LogitField> {
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut v = gaussian_blur(signed, s, s, d.blur_sigma * noise);
    if noise > 0.0 {
        let smooth = low_frequency_field(rng, s, 8);
        for (x, n) in v.iter_mut().zip(smooth) {
            *x += noise * (d.low_freq * n + d.pixel * unit.sample(rng));
        }
    }
    let data = v.iter().flat_map(|&x| [0.0, LOGIT_GAIN * x]).collect();
    Ok(LogitField::new(s, s, 2, data)?)
}

/// Unit-variance noise on a coarse grid with `spacing` pixels, bilinearly interpolated.
fn low_frequency_field(rng: &mut ChaCha8Rng, s: usize, spacing: usize) -> Vec<f64> {
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let nodes = s / spacing + 2;
    let grid: Vec<f64> = (0..nodes * nodes).map(|_| unit.sample(rng)).collect();
    let mut out = Vec::with_capacity(s * s);
    for row in 0..s {
        let gy = row as f64 / spacing as f64;
        let (y0, fy) = (gy.floor() as usize, gy.fract());
        for col in 0..s {
            let gx = col as f64 / spacing as f64;
            let (x0, fx) = (gx.floor() as usize, gx.fract());
            let at = |y: usize, x: usize| grid[y * nodes + x];
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
            let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Separable Gaussian blur with edge clamping; `sigma == 0` returns the input.
pub fn gaussian_blur(values: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return values.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.iter().map(|t| t / total).collect();
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut dst = vec![0.0; src.len()];
        for row in 0..height {
            for col in 0..width {
                let mut acc = 0.0;
                for (t, k) in taps.iter().zip(-radius..=radius) {
                    let (r, c) = if horizontal {
                        (row as i64, (col as i64 + k).clamp(0, width as i64 - 1))
                    } else {
                        ((row as i64 + k).clamp(0, height as i64 - 1), col as i64)
                    };
                    acc += t * src[r as usize * width + c as usize];
                }
                dst[row * width + col] = acc;
            }
        }
        dst
    };
    pass(&pass(values, true), false)
}

/// Stand-in for the fine model run on a proposal: crops the full-frame fine logits
/// and returns them at twice the region's resolution, as a model fed an upsampled
/// crop would.
pub fn fine_model_standin(fine_logits: &LogitField, proposal: &RegionProposal) -> Result<LogitField> {
    let crop = fine_logits.crop(proposal.top, proposal.left, proposal.height, proposal.width)?;
    let up = resample_bilinear(&softmax(&crop)?, 2 * proposal.width, 2 * proposal.height)?;
    let data = up.data().iter().map(|p| p.max(1e-12).ln()).collect();
    Ok(LogitField::new(up.width(), up.height(), up.classes(), data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mlcrf_core::metrics::ConfusionCounts;

    #[test]
    fn same_seed_same_scene() {
        let p = SynthParams::default();
        let a = generate(&p, 3).unwrap();
        let b = generate(&p, 3).unwrap();
        assert_eq!(a.color, b.color);
        assert_eq!(a.depth, b.depth);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.scene_logits, b.scene_logits);
        assert_eq!(a.fine_logits, b.fine_logits);
        let c = generate(&p, 4).unwrap();
        assert_ne!(a.truth, c.truth);
    }

    #[test]
    fn noise_free_logits_reproduce_the_truth() {
        let p = SynthParams {
            noise: 0.0,
            ..SynthParams::default()
        };
        for i in 0..5 {
            let s = generate(&p, i).unwrap();
            assert_eq!(softmax(&s.scene_logits).unwrap().argmax(), s.truth);
            assert_eq!(softmax(&s.fine_logits).unwrap().argmax(), s.truth);
            assert!(s.truth.count(1) > 0);
        }
    }

    #[test]
    fn small_sizes_rejected() {
        let p = SynthParams {
            size: 15,
            ..SynthParams::default()
        };
        assert!(generate(&p, 0).is_err());
        let ok = SynthParams {
            size: 16,
            ..SynthParams::default()
        };
        assert_eq!(generate(&ok, 0).unwrap().truth.width(), 16);
    }

    #[test]
    fn camouflage_hides_objects_in_colour_only() {
        let p = SynthParams {
            camouflage: true,
            ..SynthParams::default()
        };
        let s = generate(&p, 1).unwrap();
        let mean = |label: u8, f: &dyn Fn(usize) -> f64| {
            let idx: Vec<usize> = (0..s.truth.data().len()).filter(|&i| s.truth.data()[i] == label).collect();
            idx.iter().map(|&i| f(i)).sum::<f64>() / idx.len() as f64
        };
        let red = |i: usize| f64::from(s.color.data()[3 * i]);
        assert!((mean(1, &red) - mean(0, &red)).abs() < 8.0);
        let d = |i: usize| s.depth.data()[i];
        assert!(mean(0, &d) - mean(1, &d) > 100.0);
    }

    #[test]
    fn blur_preserves_constants_and_mass() {
        let v = vec![2.5; 12 * 9];
        assert!(gaussian_blur(&v, 12, 9, 1.7).iter().all(|x| (x - 2.5).abs() < 1e-12));
        let mut impulse = vec![0.0; 21 * 21];
        impulse[10 * 21 + 10] = 1.0;
        let out = gaussian_blur(&impulse, 21, 21, 1.5);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((out[10 * 21 + 11] - out[11 * 21 + 10]).abs() < 1e-15);
    }

    #[test]
    fn fine_evidence_is_sharper_than_scene_evidence() {
        let p = SynthParams::default();
        let (mut scene, mut fine) = (ConfusionCounts::new(2), ConfusionCounts::new(2));
        for i in 0..10 {
            let s = generate(&p, i).unwrap();
            scene.accumulate(&softmax(&s.scene_logits).unwrap().argmax(), &s.truth).unwrap();
            fine.accumulate(&softmax(&s.fine_logits).unwrap().argmax(), &s.truth).unwrap();
        }
        assert!(scene.iou(1) < 1.0);
        assert!(scene.iou(1) < fine.iou(1), "{} vs {}", scene.iou(1), fine.iou(1));
    }

    #[test]
    fn standin_output_is_twice_the_region() {
        let s = generate(&SynthParams::default(), 0).unwrap();
        let p = RegionProposal {
            top: 3,
            left: 4,
            height: 10,
            width: 7,
            source_component_ids: vec![],
        };
        let out = fine_model_standin(&s.fine_logits, &p).unwrap();
        assert_eq!((out.width(), out.height()), (14, 20));
        let back = resample_bilinear(&softmax(&out).unwrap(), 7, 10).unwrap().argmax();
        let crop = s.fine_logits.crop(3, 4, 10, 7).unwrap();
        let direct = softmax(&crop).unwrap().argmax();
        let agree = back.data().iter().zip(direct.data()).filter(|(a, b)| a == b).count();
        assert!(agree >= 65, "{agree}/70");
    }
}
