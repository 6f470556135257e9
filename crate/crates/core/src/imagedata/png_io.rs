use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use super::{ColorField, DepthField, LabelField};
use crate::error::{Error, Result};

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Raw samples of every channel, widened to u16, before any palette expansion.
struct RawImage {
    width: usize,
    height: usize,
    color: ColorType,
    samples: Vec<u16>,
}

impl RawImage {
    fn channels(&self) -> usize {
        self.color.samples()
    }
}

fn decode(path: &Path, transform: Transformations) -> Result<RawImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(file);
    decoder.set_transformations(transform);
    let mut reader = decoder.read_info().map_err(|e| image_err(path, e))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| image_err(path, e))?;
    let (width, height) = (info.width as usize, info.height as usize);
    let per_line = width * info.color_type.samples();
    let mut samples = Vec::with_capacity(per_line * height);
    for line in buf.chunks(info.line_size).take(height) {
        match info.bit_depth {
            BitDepth::Sixteen => samples.extend(
                line.chunks_exact(2)
                    .take(per_line)
                    .map(|c| u16::from_be_bytes([c[0], c[1]])),
            ),
            BitDepth::Eight => samples.extend(line.iter().take(per_line).map(|&b| u16::from(b))),
            packed => {
                let bits = packed as usize;
                let mask = (1u16 << bits) - 1;
                samples.extend((0..per_line).map(|s| {
                    let bit = s * bits;
                    let byte = u16::from(line[bit / 8]);
                    (byte >> (8 - bits - bit % 8)) & mask
                }));
            }
        }
    }
    Ok(RawImage {
        width,
        height,
        color: info.color_type,
        samples,
    })
}

/// Reads a ground-truth mask: sample value 0 is background, anything else waste.
///
/// Indexed images are judged by palette index, not palette colour.
pub fn read_png_mask(path: impl AsRef<Path>) -> Result<LabelField> {
    let path = path.as_ref();
    let raw = decode(path, Transformations::IDENTITY)?;
    let channels = raw.channels();
    let judged = match raw.color {
        ColorType::Rgb | ColorType::Rgba => 3,
        _ => 1,
    };
    let data = raw
        .samples
        .chunks_exact(channels)
        .map(|px| u8::from(px[..judged].iter().any(|&v| v != 0)))
        .collect();
    LabelField::binary(raw.width, raw.height, data)
}

/// Writes a label map as an 8-bit grayscale PNG, waste as 255 and background as 0.
pub fn write_mask_png(labels: &LabelField, path: impl AsRef<Path>) -> Result<()> {
    let data: Vec<u8> = labels
        .data()
        .iter()
        .map(|&v| if v == 0 { 0 } else { 255 })
        .collect();
    encode(
        path.as_ref(),
        labels.width(),
        labels.height(),
        ColorType::Grayscale,
        BitDepth::Eight,
        &data,
    )
}

pub fn read_color_png(path: impl AsRef<Path>) -> Result<ColorField> {
    let path = path.as_ref();
    let raw = decode(path, Transformations::EXPAND | Transformations::STRIP_16)?;
    let channels = raw.channels();
    let mut data = Vec::with_capacity(raw.width * raw.height * 3);
    for px in raw.samples.chunks_exact(channels) {
        let rgb = match raw.color {
            ColorType::Grayscale | ColorType::GrayscaleAlpha => [px[0]; 3],
            _ => [px[0], px[1], px[2]],
        };
        data.extend(rgb.iter().map(|&v| v as u8));
    }
    ColorField::new(raw.width, raw.height, data)
}

pub fn write_color_png(color: &ColorField, path: impl AsRef<Path>) -> Result<()> {
    encode(
        path.as_ref(),
        color.width(),
        color.height(),
        ColorType::Rgb,
        BitDepth::Eight,
        color.data(),
    )
}

/// Reads single-channel depth in millimetres; zero samples are missing.
pub fn read_depth_png(path: impl AsRef<Path>) -> Result<DepthField> {
    let path = path.as_ref();
    let raw = decode(path, Transformations::IDENTITY)?;
    if raw.color != ColorType::Grayscale {
        return Err(image_err(path, "depth PNG must be single-channel grayscale"));
    }
    let data = raw.samples.iter().map(|&v| f64::from(v)).collect();
    DepthField::from_readings(raw.width, raw.height, data)
}

/// Writes depth as a 16-bit grayscale PNG, rounding to whole millimetres.
pub fn write_depth_png(depth: &DepthField, path: impl AsRef<Path>) -> Result<()> {
    let data: Vec<u8> = depth
        .data()
        .iter()
        .zip(depth.missing())
        .flat_map(|(&v, &m)| {
            let mm = if m { 0 } else { v.round().clamp(1.0, 65535.0) as u16 };
            mm.to_be_bytes()
        })
        .collect();
    encode(
        path.as_ref(),
        depth.width(),
        depth.height(),
        ColorType::Grayscale,
        BitDepth::Sixteen,
        &data,
    )
}

fn encode(
    path: &Path,
    width: usize,
    height: usize,
    color: ColorType,
    depth: BitDepth,
    data: &[u8],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(depth);
    let mut writer = encoder.write_header().map_err(|e| image_err(path, e))?;
    writer.write_image_data(data).map_err(|e| image_err(path, e))?;
    writer.finish().map_err(|e| image_err(path, e))
}
