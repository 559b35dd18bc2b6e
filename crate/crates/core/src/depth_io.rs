//! Dense depth and disparity maps, and their on-disk formats.
//!
//! Two encodings are supported: single-channel portable float maps (`Pf`), and
//! 16-bit grayscale PNG holding fixed-point values in units of 1/256. A pixel is
//! valid iff its value is finite and strictly positive. Invalid pixels are stored
//! as 0 both in memory and on disk.

use std::io::Cursor;
use std::path::Path;

use image::{ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

/// Fixed-point steps per unit in the 16-bit PNG encoding.
pub const PNG_FIXED_POINT_SCALE: f64 = 256.0;

/// Largest value representable in the 16-bit PNG encoding.
pub const PNG_MAX_VALUE: f64 = u16::MAX as f64 / PNG_FIXED_POINT_SCALE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthUnit {
    Millimeters,
    /// Depth in the arbitrary units of an up-to-scale reconstruction.
    Unscaled,
    DisparityPixels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthFormat {
    Pfm,
    Png16,
}

impl DepthFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DepthFormat::Pfm => "pfm",
            DepthFormat::Png16 => "png",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DepthIoError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("unsupported depth format: {0}")]
    UnsupportedDepthFormat(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("value {value} at pixel {index} exceeds the PNG-16 range of {PNG_MAX_VALUE}")]
    ValueOutOfRange { index: usize, value: f64 },

    #[error("buffer holds {found} values, {width}x{height} needs {}", width * height)]
    LengthMismatch {
        width: usize,
        height: usize,
        found: usize,
    },
}

/// Row-major dense map; validity is derived from the stored values.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    unit: DepthUnit,
}

#[inline]
fn valid_value(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

impl DepthMap {
    /// Wraps a row-major buffer. Non-finite and non-positive values are canonicalized to 0.
    pub fn new(
        width: usize,
        height: usize,
        mut values: Vec<f64>,
        unit: DepthUnit,
    ) -> Result<Self, DepthIoError> {
        if values.len() != width * height {
            return Err(DepthIoError::LengthMismatch {
                width,
                height,
                found: values.len(),
            });
        }
        for v in &mut values {
            if !valid_value(*v) {
                *v = 0.0;
            }
        }
        Ok(Self {
            width,
            height,
            values,
            unit,
        })
    }

    /// A map with every pixel invalid.
    pub fn invalid(width: usize, height: usize, unit: DepthUnit) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            unit,
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        unit: DepthUnit,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                let d = f(u, v);
                values.push(if valid_value(d) { d } else { 0.0 });
            }
        }
        Self {
            width,
            height,
            values,
            unit,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn unit(&self) -> DepthUnit {
        self.unit
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Same values relabeled with another unit.
    pub fn with_unit(mut self, unit: DepthUnit) -> Self {
        self.unit = unit;
        self
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    /// Value at `(u, v)` if the pixel is valid.
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        if u >= self.width || v >= self.height {
            return None;
        }
        let d = self.values[self.index(u, v)];
        valid_value(d).then_some(d)
    }

    #[inline]
    pub fn is_valid(&self, index: usize) -> bool {
        valid_value(self.values[index])
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| valid_value(**v)).count()
    }

    pub fn valid_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| valid_value(**v))
            .map(|(i, _)| i)
    }

    /// Applies `f` to every valid value; results that are not valid become invalid.
    pub fn map_valid(&self, unit: DepthUnit, f: impl Fn(f64) -> f64) -> Self {
        let values = self
            .values
            .iter()
            .map(|&v| {
                if valid_value(v) {
                    let out = f(v);
                    if valid_value(out) {
                        out
                    } else {
                        0.0
                    }
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            width: self.width,
            height: self.height,
            values,
            unit,
        }
    }
}

/// Pixel indices valid in both maps, in ascending order.
pub fn valid_intersection(a: &DepthMap, b: &DepthMap) -> Result<Vec<usize>, DepthIoError> {
    if a.size() != b.size() {
        return Err(DepthIoError::DimensionMismatch {
            expected: a.size(),
            found: b.size(),
        });
    }
    Ok((0..a.values.len())
        .filter(|&i| a.is_valid(i) && b.is_valid(i))
        .collect())
}

const PNG_SIGNATURE: &[u8] = &[0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

pub fn load_depth(path: impl AsRef<Path>, unit: DepthUnit) -> Result<DepthMap, DepthIoError> {
    decode_depth(&std::fs::read(path)?, unit)
}

/// Loads a map and checks it has the expected `(width, height)`.
pub fn load_depth_sized(
    path: impl AsRef<Path>,
    unit: DepthUnit,
    expected: (usize, usize),
) -> Result<DepthMap, DepthIoError> {
    let map = load_depth(path, unit)?;
    if map.size() != expected {
        return Err(DepthIoError::DimensionMismatch {
            expected,
            found: map.size(),
        });
    }
    Ok(map)
}

/// Decodes either encoding, detected from the leading bytes.
pub fn decode_depth(bytes: &[u8], unit: DepthUnit) -> Result<DepthMap, DepthIoError> {
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png16(bytes, unit)
    } else if bytes.starts_with(b"Pf") {
        decode_pfm(bytes, unit)
    } else if bytes.starts_with(b"PF") {
        Err(DepthIoError::UnsupportedDepthFormat(
            "three-channel PF float map".into(),
        ))
    } else if bytes.is_empty() {
        Err(DepthIoError::UnsupportedDepthFormat("empty file".into()))
    } else {
        Err(DepthIoError::UnsupportedDepthFormat(
            "unrecognized file signature".into(),
        ))
    }
}

pub fn save_depth(
    map: &DepthMap,
    path: impl AsRef<Path>,
    format: DepthFormat,
) -> Result<(), DepthIoError> {
    std::fs::write(path, encode_depth(map, format)?)?;
    Ok(())
}

pub fn encode_depth(map: &DepthMap, format: DepthFormat) -> Result<Vec<u8>, DepthIoError> {
    match format {
        DepthFormat::Pfm => Ok(encode_pfm(map)),
        DepthFormat::Png16 => encode_png16(map),
    }
}

fn decode_pfm(bytes: &[u8], unit: DepthUnit) -> Result<DepthMap, DepthIoError> {
    let bad = |msg: &str| DepthIoError::UnsupportedDepthFormat(format!("Pf header: {msg}"));
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("not ASCII"))?);
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("missing raster"));
    }
    pos += 1;
    if tokens[0] != "Pf" {
        return Err(bad("magic"));
    }
    let width: usize = tokens[1].parse().map_err(|_| bad("width"))?;
    let height: usize = tokens[2].parse().map_err(|_| bad("height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| bad("scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("scale must be non-zero"));
    }
    let little_endian = scale < 0.0;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| bad("dimensions overflow"))?;
    let raster = &bytes[pos..];
    if raster.len() != n * 4 {
        return Err(DepthIoError::UnsupportedDepthFormat(format!(
            "Pf raster holds {} bytes, {width}x{height} needs {}",
            raster.len(),
            n * 4
        )));
    }
    let mut values = vec![0.0; n];
    // Rows are stored bottom-to-top.
    for (file_row, chunk) in raster.chunks_exact(width.max(1) * 4).enumerate().take(height) {
        let row = height - 1 - file_row;
        for (u, px) in chunk.chunks_exact(4).enumerate() {
            let raw = [px[0], px[1], px[2], px[3]];
            let v = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            values[row * width + u] = v as f64;
        }
    }
    DepthMap::new(width, height, values, unit)
}

fn encode_pfm(map: &DepthMap) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1\n", map.width, map.height).into_bytes();
    out.reserve(map.values.len() * 4);
    for row in (0..map.height).rev() {
        for &v in &map.values[row * map.width..(row + 1) * map.width] {
            let v = if valid_value(v) { v as f32 } else { 0.0 };
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn decode_png16(bytes: &[u8], unit: DepthUnit) -> Result<DepthMap, DepthIoError> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| DepthIoError::UnsupportedDepthFormat(format!("PNG: {e}")))?;
    let image::DynamicImage::ImageLuma16(buf) = img else {
        return Err(DepthIoError::UnsupportedDepthFormat(format!(
            "PNG must be 16-bit single channel, found {:?}",
            img.color()
        )));
    };
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let values = buf
        .into_raw()
        .into_iter()
        .map(|raw| raw as f64 / PNG_FIXED_POINT_SCALE)
        .collect();
    DepthMap::new(w, h, values, unit)
}

fn encode_png16(map: &DepthMap) -> Result<Vec<u8>, DepthIoError> {
    let mut raw = Vec::with_capacity(map.values.len());
    for (index, &v) in map.values.iter().enumerate() {
        if !valid_value(v) {
            raw.push(0u16);
            continue;
        }
        if v > PNG_MAX_VALUE {
            return Err(DepthIoError::ValueOutOfRange { index, value: v });
        }
        // Tiny valid values must not round onto the invalid code.
        let q = (v * PNG_FIXED_POINT_SCALE).round().max(1.0);
        raw.push(q as u16);
    }
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(map.width as u32, map.height as u32, raw)
            .expect("buffer length matches dimensions");
    let mut out = Vec::new();
    buf.write_with_encoder(image::codecs::png::PngEncoder::new(Cursor::new(&mut out)))
        .map_err(|e| DepthIoError::Io(std::io::Error::other(e)))?;
    Ok(out)
}
