//! Scene-level and object-level unary potentials.

use crate::error::{Error, Result};
use crate::imagedata::{LogitField, ProbabilityField};

/// Probability floor applied before taking logs.
pub const DEFAULT_PROBABILITY_FLOOR: f64 = 1e-8;

/// Per-pixel negative log-probabilities in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryField {
    width: usize,
    height: usize,
    classes: usize,
    data: Vec<f64>,
}

impl UnaryField {
    pub fn new(width: usize, height: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || classes == 0 {
            return Err(Error::InvalidField("empty unary field".into()));
        }
        if data.len() != width * height * classes {
            return Err(Error::DimensionMismatch(format!(
                "unary {width}x{height}x{classes} needs {} values, got {}",
                width * height * classes,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidField(format!("unary entry {v} is not a finite cost")));
        }
        Ok(Self {
            width,
            height,
            classes,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let i = (row * self.width + col) * self.classes;
        &self.data[i..i + self.classes]
    }

    pub fn same_shape(&self, other: &UnaryField) -> bool {
        (self.width, self.height, self.classes) == (other.width, other.height, other.classes)
    }
}

/// Where a proposal region sits inside the full image.
///
/// Maps image coordinates to region coordinates by subtracting the offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RegionTranslation {
    pub offset_row: usize,
    pub offset_col: usize,
    pub region_height: usize,
    pub region_width: usize,
}

impl RegionTranslation {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.offset_row
            && row < self.offset_row + self.region_height
            && col >= self.offset_col
            && col < self.offset_col + self.region_width
    }

    /// Region-local coordinates of an image pixel inside the region.
    pub fn to_region(&self, row: usize, col: usize) -> (usize, usize) {
        (row - self.offset_row, col - self.offset_col)
    }

    pub fn overlaps(&self, other: &RegionTranslation) -> bool {
        self.offset_row < other.offset_row + other.region_height
            && other.offset_row < self.offset_row + self.region_height
            && self.offset_col < other.offset_col + other.region_width
            && other.offset_col < self.offset_col + self.region_width
    }

    fn fits(&self, width: usize, height: usize) -> bool {
        self.region_height > 0
            && self.region_width > 0
            && self.offset_row + self.region_height <= height
            && self.offset_col + self.region_width <= width
    }
}

/// Pixelwise softmax, stabilised by subtracting each pixel's maximum.
pub fn softmax(logits: &LogitField) -> Result<ProbabilityField> {
    let classes = logits.classes();
    let mut data = Vec::with_capacity(logits.data().len());
    for px in logits.data().chunks_exact(classes) {
        let max = px.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = data.len();
        data.extend(px.iter().map(|&v| (v - max).exp()));
        let sum: f64 = data[start..].iter().sum();
        data[start..].iter_mut().for_each(|v| *v /= sum);
    }
    ProbabilityField::new(logits.width(), logits.height(), classes, data)
}

/// Negative log-probabilities with probabilities clamped to at least `floor`.
pub fn to_unary(probs: &ProbabilityField, floor: f64) -> Result<UnaryField> {
    if !(floor > 0.0 && floor < 1.0 / probs.classes() as f64) {
        return Err(Error::InvalidConfig(format!(
            "probability floor {floor} must lie in (0, 1/C)"
        )));
    }
    let data = probs.data().iter().map(|&p| -p.max(floor).ln()).collect();
    UnaryField::new(probs.width(), probs.height(), probs.classes(), data)
}

/// Object-level unary: region potentials inside each region, scene potentials elsewhere.
pub fn fuse_object_unary(
    scene: &UnaryField,
    regions: &[(RegionTranslation, UnaryField)],
) -> Result<UnaryField> {
    for (i, (t, u)) in regions.iter().enumerate() {
        if !t.fits(scene.width, scene.height) {
            return Err(Error::DimensionMismatch(format!(
                "region {i} ({}x{} at {},{}) leaves the {}x{} image",
                t.region_height, t.region_width, t.offset_row, t.offset_col, scene.height, scene.width
            )));
        }
        if (u.height, u.width, u.classes) != (t.region_height, t.region_width, scene.classes) {
            return Err(Error::DimensionMismatch(format!(
                "region {i} unary is {}x{}x{}, expected {}x{}x{}",
                u.height, u.width, u.classes, t.region_height, t.region_width, scene.classes
            )));
        }
        for (j, (other, _)) in regions.iter().enumerate().skip(i + 1) {
            if t.overlaps(other) {
                return Err(Error::Overlap(format!("regions {i} and {j} share pixels")));
            }
        }
    }

    let c = scene.classes;
    let mut data = scene.data.clone();
    for (t, u) in regions {
        for r in 0..t.region_height {
            let dst = ((t.offset_row + r) * scene.width + t.offset_col) * c;
            let src = r * t.region_width * c;
            data[dst..dst + t.region_width * c].copy_from_slice(&u.data[src..src + t.region_width * c]);
        }
    }
    UnaryField::new(scene.width, scene.height, c, data)
}

/// Bilinear resampling with half-pixel centres, renormalised per pixel.
pub fn resample_bilinear(
    field: &ProbabilityField,
    new_width: usize,
    new_height: usize,
) -> Result<ProbabilityField> {
    if new_width == 0 || new_height == 0 {
        return Err(Error::InvalidConfig("resample target must be at least 1x1".into()));
    }
    let (w, h, c) = (field.width(), field.height(), field.classes());
    if (w, h) == (new_width, new_height) {
        return Ok(field.clone());
    }
    let axis = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f64) {
        let pos = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5)
            .clamp(0.0, (src_len - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(src_len - 1);
        (lo, hi, pos - lo as f64)
    };
    let mut data = Vec::with_capacity(new_width * new_height * c);
    let mut px = vec![0.0; c];
    for y in 0..new_height {
        let (y0, y1, fy) = axis(y, h, new_height);
        for x in 0..new_width {
            let (x0, x1, fx) = axis(x, w, new_width);
            let (a, b) = (field.pixel(y0, x0), field.pixel(y0, x1));
            let (d, e) = (field.pixel(y1, x0), field.pixel(y1, x1));
            for k in 0..c {
                let top = a[k] * (1.0 - fx) + b[k] * fx;
                let bottom = d[k] * (1.0 - fx) + e[k] * fx;
                px[k] = top * (1.0 - fy) + bottom * fy;
            }
            let sum: f64 = px.iter().sum();
            data.extend(px.iter().map(|v| v / sum));
        }
    }
    ProbabilityField::new(new_width, new_height, c, data)
}
