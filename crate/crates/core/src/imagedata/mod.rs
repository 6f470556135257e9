//! Raster types shared by every stage of the pipeline.
//!
//! All rasters are row-major with the origin at the top-left pixel. Multi-channel
//! fields store the channels of one pixel contiguously.

mod array;
mod png_io;

pub use array::{decode_array, encode_array, read_array, write_array, ArrayData, Dtype, PortableArray};
pub use png_io::{
    read_color_png, read_depth_png, read_png_mask, write_color_png, write_depth_png, write_mask_png,
};

use crate::error::{Error, Result};

/// Tolerance on the per-pixel sum of a probability vector.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-5;

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidField(format!(
            "dimensions must be at least 1x1, got {width}x{height}"
        )));
    }
    Ok(())
}

fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::DimensionMismatch(format!(
            "{what}: payload holds {got} values, dimensions require {expected}"
        )));
    }
    Ok(())
}

/// 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorField {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ColorField {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        check_len("color field", data.len(), width * height * 3)?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Copies the sub-rectangle starting at (`top`, `left`).
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::DimensionMismatch(format!(
                "crop {height}x{width}+{top}+{left} exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width * 3);
        for row in top..top + height {
            let start = (row * self.width + left) * 3;
            data.extend_from_slice(&self.data[start..start + width * 3]);
        }
        Self::new(width, height, data)
    }
}

/// Depth in millimetres with an explicit missing-value mask.
///
/// Missing pixels hold the sentinel value 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthField {
    width: usize,
    height: usize,
    data: Vec<f64>,
    missing: Vec<bool>,
}

impl DepthField {
    pub fn new(width: usize, height: usize, data: Vec<f64>, missing: Vec<bool>) -> Result<Self> {
        check_dims(width, height)?;
        check_len("depth field", data.len(), width * height)?;
        check_len("depth mask", missing.len(), width * height)?;
        for (i, (&v, &m)) in data.iter().zip(&missing).enumerate() {
            if m {
                if v != 0.0 {
                    return Err(Error::InvalidField(format!(
                        "missing depth pixel {i} must carry the sentinel 0, found {v}"
                    )));
                }
            } else if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidField(format!(
                    "depth pixel {i} is {v}; depth must be finite and non-negative"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            data,
            missing,
        })
    }

    /// Builds a depth field treating every zero reading as missing.
    pub fn from_readings(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        let missing = data.iter().map(|&v| v == 0.0).collect();
        Self::new(width, height, data, missing)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn missing(&self) -> &[bool] {
        &self.missing
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.width + col;
        (!self.missing[i]).then_some(self.data[i])
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::DimensionMismatch(format!(
                "crop {height}x{width}+{top}+{left} exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width);
        let mut missing = Vec::with_capacity(height * width);
        for row in top..top + height {
            let start = row * self.width + left;
            data.extend_from_slice(&self.data[start..start + width]);
            missing.extend_from_slice(&self.missing[start..start + width]);
        }
        Self::new(width, height, data, missing)
    }
}

macro_rules! multichannel_accessors {
    () => {
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

        /// Channel vector of the pixel at (`row`, `col`).
        pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
            let i = (row * self.width + col) * self.classes;
            &self.data[i..i + self.classes]
        }

        pub fn into_data(self) -> Vec<f64> {
            self.data
        }
    };
}

/// Raw per-pixel class scores, such as the output layer of a segmentation network.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitField {
    width: usize,
    height: usize,
    classes: usize,
    data: Vec<f64>,
}

impl LogitField {
    pub fn new(width: usize, height: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if classes == 0 {
            return Err(Error::InvalidField("logit field needs at least one class".into()));
        }
        check_len("logit field", data.len(), width * height * classes)?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("logit entry {i} is not finite")));
        }
        Ok(Self {
            width,
            height,
            classes,
            data,
        })
    }

    multichannel_accessors!();

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        let data = crop_channels(
            &self.data,
            self.width,
            self.height,
            self.classes,
            top,
            left,
            height,
            width,
        )?;
        Self::new(width, height, self.classes, data)
    }
}

/// Per-pixel class distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityField {
    width: usize,
    height: usize,
    classes: usize,
    data: Vec<f64>,
}

impl ProbabilityField {
    /// Validates that every entry lies in [0, 1] and every pixel sums to 1.
    pub fn new(width: usize, height: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if classes < 2 {
            return Err(Error::InvalidField(format!(
                "probability field needs at least 2 classes, got {classes}"
            )));
        }
        check_len("probability field", data.len(), width * height * classes)?;
        for (p, px) in data.chunks_exact(classes).enumerate() {
            if let Some(v) = px.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidField(format!(
                    "pixel {p} has probability {v} outside [0, 1]"
                )));
            }
            let sum: f64 = px.iter().sum();
            if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
                return Err(Error::InvalidField(format!(
                    "pixel {p} probabilities sum to {sum}"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            classes,
            data,
        })
    }

    multichannel_accessors!();

    /// Per-pixel argmax, ties resolved toward the lower class index.
    pub fn argmax(&self) -> LabelField {
        let data = self.data.chunks_exact(self.classes).map(argmax_lowest).collect();
        LabelField {
            width: self.width,
            height: self.height,
            classes: self.classes,
            data,
        }
    }
}

/// Index of the largest entry; the first one wins on ties.
pub(crate) fn argmax_lowest(values: &[f64]) -> u8 {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best as u8
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn crop_channels(
    data: &[f64],
    full_width: usize,
    full_height: usize,
    channels: usize,
    top: usize,
    left: usize,
    height: usize,
    width: usize,
) -> Result<Vec<f64>> {
    if top + height > full_height || left + width > full_width {
        return Err(Error::DimensionMismatch(format!(
            "crop {height}x{width}+{top}+{left} exceeds {full_height}x{full_width}"
        )));
    }
    let mut out = Vec::with_capacity(height * width * channels);
    for row in top..top + height {
        let start = (row * full_width + left) * channels;
        out.extend_from_slice(&data[start..start + width * channels]);
    }
    Ok(out)
}

/// Per-pixel class labels. Class 0 is background, class 1 is waste.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelField {
    width: usize,
    height: usize,
    classes: usize,
    data: Vec<u8>,
}

impl LabelField {
    pub fn new(width: usize, height: usize, classes: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        if !(1..=256).contains(&classes) {
            return Err(Error::InvalidField(format!("unsupported class count {classes}")));
        }
        check_len("label field", data.len(), width * height)?;
        if let Some(v) = data.iter().find(|&&v| usize::from(v) >= classes) {
            return Err(Error::InvalidField(format!(
                "label {v} out of range for {classes} classes"
            )));
        }
        Ok(Self {
            width,
            height,
            classes,
            data,
        })
    }

    /// Binary (background/waste) labelling.
    pub fn binary(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        Self::new(width, height, 2, data)
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

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn count(&self, label: u8) -> usize {
        self.data.iter().filter(|&&v| v == label).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probability_sum_is_checked() {
        assert!(ProbabilityField::new(1, 1, 2, vec![0.5, 0.5]).is_ok());
        assert!(ProbabilityField::new(1, 1, 2, vec![0.5, 0.5 + 2e-5]).is_err());
        assert!(ProbabilityField::new(1, 1, 2, vec![0.5, 0.5 + 5e-6]).is_ok());
        assert!(ProbabilityField::new(1, 1, 2, vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn labels_must_fit_class_count() {
        assert!(LabelField::binary(2, 1, vec![0, 1]).is_ok());
        assert!(LabelField::binary(2, 1, vec![0, 2]).is_err());
        assert!(LabelField::binary(2, 2, vec![0, 1]).is_err());
    }

    #[test]
    fn depth_sentinel_and_mask_agree() {
        assert!(DepthField::new(2, 1, vec![0.0, 5.0], vec![true, false]).is_ok());
        assert!(DepthField::new(2, 1, vec![3.0, 5.0], vec![true, false]).is_err());
        assert!(DepthField::new(2, 1, vec![-1.0, 5.0], vec![false, false]).is_err());
        let d = DepthField::from_readings(3, 1, vec![0.0, 10.0, 0.0]).unwrap();
        assert_eq!(d.missing_count(), 2);
        assert_eq!(d.get(0, 1), Some(10.0));
        assert_eq!(d.get(0, 0), None);
    }

    #[test]
    fn logits_reject_non_finite() {
        assert!(LogitField::new(1, 1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(LogitField::new(1, 1, 2, vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn argmax_prefers_lower_index_on_ties() {
        let p = ProbabilityField::new(2, 1, 2, vec![0.5, 0.5, 0.2, 0.8]).unwrap();
        assert_eq!(p.argmax().data(), &[0, 1]);
    }

    #[test]
    fn crop_copies_the_window() {
        let data: Vec<f64> = (0..12).map(f64::from).collect();
        let f = LogitField::new(3, 2, 2, data).unwrap();
        let c = f.crop(1, 1, 1, 2).unwrap();
        assert_eq!(c.data(), &[8.0, 9.0, 10.0, 11.0]);
        assert!(f.crop(1, 1, 2, 2).is_err());
    }
}
