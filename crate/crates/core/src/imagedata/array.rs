//! Portable array files.
//!
//! Layout: the magic bytes `MLF1`, four little-endian `u32` header fields
//! (dtype code, height, width, channels), then the row-major little-endian payload.
//! Dtype codes: 1 = float32, 2 = uint16, 3 = uint8, 4 = float64.

use std::path::Path;

use super::{DepthField, LogitField, ProbabilityField};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MLF1";
pub const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Dtype {
    F32 = 1,
    U16 = 2,
    U8 = 3,
    F64 = 4,
}

impl Dtype {
    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(Dtype::F32),
            2 => Some(Dtype::U16),
            3 => Some(Dtype::U8),
            4 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::U16 => 2,
            Dtype::U8 => 1,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    U16(Vec<u16>),
    U8(Vec<u8>),
    F64(Vec<f64>),
}

impl ArrayData {
    pub fn dtype(&self) -> Dtype {
        match self {
            ArrayData::F32(_) => Dtype::F32,
            ArrayData::U16(_) => Dtype::U16,
            ArrayData::U8(_) => Dtype::U8,
            ArrayData::F64(_) => Dtype::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::U16(v) => v.len(),
            ArrayData::U8(v) => v.len(),
            ArrayData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            ArrayData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            ArrayData::U16(v) => v.iter().map(|&x| f64::from(x)).collect(),
            ArrayData::U8(v) => v.iter().map(|&x| f64::from(x)).collect(),
            ArrayData::F64(v) => v.clone(),
        }
    }

    /// Stores reals as float32 when every value survives the narrowing bit-exactly,
    /// otherwise as float64.
    pub fn from_f64_lossless(values: &[f64]) -> Self {
        let narrow: Option<Vec<f32>> = values
            .iter()
            .map(|&v| {
                let n = v as f32;
                (f64::from(n).to_bits() == v.to_bits()).then_some(n)
            })
            .collect();
        match narrow {
            Some(v) => ArrayData::F32(v),
            None => ArrayData::F64(values.to_vec()),
        }
    }
}

/// A decoded portable array: shape plus typed payload.
#[derive(Debug, Clone, PartialEq)]
pub struct PortableArray {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: ArrayData,
}

impl PortableArray {
    pub fn new(height: usize, width: usize, channels: usize, data: ArrayData) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Format(format!(
                "zero-sized array {height}x{width}x{channels}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "array {height}x{width}x{channels} needs {expected} values, payload holds {}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn dtype(&self) -> Dtype {
        self.data.dtype()
    }

    pub fn into_logits(self) -> Result<LogitField> {
        LogitField::new(self.width, self.height, self.channels, self.data.to_f64())
    }

    pub fn into_probabilities(self) -> Result<ProbabilityField> {
        ProbabilityField::new(self.width, self.height, self.channels, self.data.to_f64())
    }

    /// Zero readings become missing pixels.
    pub fn into_depth(self) -> Result<DepthField> {
        if self.channels != 1 {
            return Err(Error::DimensionMismatch(format!(
                "depth arrays have 1 channel, found {}",
                self.channels
            )));
        }
        DepthField::from_readings(self.width, self.height, self.data.to_f64())
    }
}

impl From<&LogitField> for PortableArray {
    fn from(f: &LogitField) -> Self {
        PortableArray {
            height: f.height(),
            width: f.width(),
            channels: f.classes(),
            data: ArrayData::from_f64_lossless(f.data()),
        }
    }
}

impl From<&ProbabilityField> for PortableArray {
    fn from(f: &ProbabilityField) -> Self {
        PortableArray {
            height: f.height(),
            width: f.width(),
            channels: f.classes(),
            data: ArrayData::from_f64_lossless(f.data()),
        }
    }
}

impl From<&DepthField> for PortableArray {
    /// Integral millimetre depths are stored as uint16.
    fn from(f: &DepthField) -> Self {
        let integral = f
            .data()
            .iter()
            .all(|&v| v.fract() == 0.0 && v <= f64::from(u16::MAX));
        let data = if integral {
            ArrayData::U16(f.data().iter().map(|&v| v as u16).collect())
        } else {
            ArrayData::from_f64_lossless(f.data())
        };
        PortableArray {
            height: f.height(),
            width: f.width(),
            channels: 1,
            data,
        }
    }
}

pub fn encode_array(array: &PortableArray) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + array.data.len() * array.dtype().size());
    out.extend_from_slice(MAGIC);
    for field in [
        array.dtype().code(),
        array.height as u32,
        array.width as u32,
        array.channels as u32,
    ] {
        out.extend_from_slice(&field.to_le_bytes());
    }
    match &array.data {
        ArrayData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ArrayData::U16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ArrayData::U8(v) => out.extend_from_slice(v),
        ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    out
}

pub fn decode_array(bytes: &[u8]) -> Result<PortableArray> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file of {} bytes is shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic, expected MLF1".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let dtype =
        Dtype::from_code(word(0)).ok_or_else(|| Error::Format(format!("unknown dtype code {}", word(0))))?;
    let (height, width, channels) = (word(1) as usize, word(2) as usize, word(3) as usize);
    let payload = &bytes[HEADER_LEN..];
    let size = dtype.size();
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::Format("header dimensions overflow".into()))?;
    if !payload.len().is_multiple_of(size) || payload.len() / size != expected {
        return Err(Error::DimensionMismatch(format!(
            "header declares {height}x{width}x{channels} {dtype:?} values, payload has {} bytes",
            payload.len()
        )));
    }
    let data = match dtype {
        Dtype::F32 => ArrayData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        Dtype::U16 => ArrayData::U16(
            payload
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        Dtype::U8 => ArrayData::U8(payload.to_vec()),
        Dtype::F64 => ArrayData::F64(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    };
    PortableArray::new(height, width, channels, data)
}

pub fn read_array(path: impl AsRef<Path>) -> Result<PortableArray> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_array(&bytes)
}

pub fn write_array(array: &PortableArray, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if path.as_os_str().is_empty() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty path"),
        ));
    }
    std::fs::write(path, encode_array(array)).map_err(|e| Error::io(path, e))
}
