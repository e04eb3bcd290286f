//! File formats: 8-bit mask and normal images, RGB images, light-direction
//! text records, and float depth maps.
//!
//! - Masks are single-channel 8-bit images storing 0/255; loading binarizes
//!   at the midpoint (value > 127 means set). Save/load round-trips exactly.
//! - Normals map component `v` in [-1,1] to `round((v+1)/2 * 255)` per
//!   channel, order (x, y, z); decoding renormalizes to unit length.
//! - Lights are text records, either one line `x y z` or key-value lines
//!   `x = ...` / `y = ...` / `z = ...`. The writer emits the key-value form
//!   with full-precision floats; loading normalizes.
//! - Depth maps use the PFM grayscale format (`Pf`, little-endian f32,
//!   bottom-to-top rows).

use std::fs;
use std::io::Write as _;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, LightDirection, NormalMap, RasterGrid};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    ImageReader::open(path)
        .map_err(|e| io_err(path, e))?
        .decode()
        .map_err(|e| image_err(path, e))
}

/// Loads a grayscale image as a binary mask (pixel > 127 means set).
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let img = open_image(path)?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(BinaryMask::from_fn(w, h, |x, y| {
        img.get_pixel(x as u32, y as u32).0[0] > 127
    }))
}

/// Writes a mask as an 8-bit grayscale image, 1 -> 255 and 0 -> 0.
pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    let img = GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        image::Luma([if mask.get(x as usize, y as usize) { 255 } else { 0 }])
    });
    img.save(path).map_err(|e| image_err(path, e))
}

/// Quantizes unit normals to the 3x8-bit channel encoding.
pub fn encode_normals(normals: &NormalMap) -> RasterGrid<u8> {
    RasterGrid::from_fn(normals.width(), normals.height(), |x, y| {
        let n = normals.normal(x, y);
        n.map(|v| ((v + 1.0) / 2.0 * 255.0).round().clamp(0.0, 255.0) as u8)
    })
}

/// Inverts [`encode_normals`], renormalizing each pixel to unit length.
pub fn decode_normals(encoded: &RasterGrid<u8>) -> Result<NormalMap> {
    if encoded.channels() != 3 {
        return Err(Error::ChannelMismatch {
            expected: 3,
            actual: encoded.channels(),
        });
    }
    NormalMap::from_fn_normalized(encoded.width(), encoded.height(), |x, y| {
        let p = encoded.pixel(x, y);
        [
            p[0] as f64 / 255.0 * 2.0 - 1.0,
            p[1] as f64 / 255.0 * 2.0 - 1.0,
            p[2] as f64 / 255.0 * 2.0 - 1.0,
        ]
    })
}

pub fn save_normals(normals: &NormalMap, path: &Path) -> Result<()> {
    let encoded = encode_normals(normals);
    let img = RgbImage::from_fn(normals.width() as u32, normals.height() as u32, |x, y| {
        let p = encoded.pixel(x as usize, y as usize);
        image::Rgb([p[0], p[1], p[2]])
    });
    img.save(path).map_err(|e| image_err(path, e))
}

pub fn load_normals(path: &Path) -> Result<NormalMap> {
    let img = open_image(path)?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let encoded = RasterGrid::from_fn(w, h, |x, y| img.get_pixel(x as u32, y as u32).0);
    decode_normals(&encoded)
}

/// Parses a light record; accepts one-line `x y z` or key-value lines.
pub fn load_light(path: &Path) -> Result<LightDirection> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let malformed = |detail: &str| Error::MalformedLight {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };

    let (mut x, mut y, mut z) = (None, None, None);
    if text.contains('=') {
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| malformed(&format!("line without '=': {line}")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| malformed(&format!("non-numeric value in: {line}")))?;
            match key.trim() {
                "x" => x = Some(value),
                "y" => y = Some(value),
                "z" => z = Some(value),
                other => return Err(malformed(&format!("unknown key: {other}"))),
            }
        }
    } else {
        let nums: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| malformed("expected three numbers"))?;
        if nums.len() != 3 {
            return Err(malformed(&format!("expected 3 numbers, got {}", nums.len())));
        }
        (x, y, z) = (Some(nums[0]), Some(nums[1]), Some(nums[2]));
    }

    match (x, y, z) {
        (Some(x), Some(y), Some(z)) => LightDirection::new(x, y, z),
        _ => Err(malformed("missing one of x, y, z")),
    }
}

/// Writes the key-value light record with full-precision components.
pub fn save_light(light: &LightDirection, path: &Path) -> Result<()> {
    let body = format!("x = {}\ny = {}\nz = {}\n", light.x(), light.y(), light.z());
    fs::write(path, body).map_err(|e| io_err(path, e))
}

/// Loads an RGB image as an f64 grid in [0,1].
pub fn load_rgb_image(path: &Path) -> Result<RasterGrid<f64>> {
    let img = open_image(path)?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(RasterGrid::from_fn(w, h, |x, y| {
        img.get_pixel(x as u32, y as u32).0.map(|v| v as f64 / 255.0)
    }))
}

/// Writes an f64 RGB grid in [0,1] as an 8-bit image.
pub fn save_rgb_image(grid: &RasterGrid<f64>, path: &Path) -> Result<()> {
    if grid.channels() != 3 {
        return Err(Error::ChannelMismatch {
            expected: 3,
            actual: grid.channels(),
        });
    }
    let img = RgbImage::from_fn(grid.width() as u32, grid.height() as u32, |x, y| {
        let p = grid.pixel(x as usize, y as usize);
        image::Rgb([quantize_unit(p[0]), quantize_unit(p[1]), quantize_unit(p[2])])
    });
    img.save(path).map_err(|e| image_err(path, e))
}

/// Writes a [0,1] probability field as an 8-bit grayscale image.
pub fn save_probability_image(grid: &RasterGrid<f64>, path: &Path) -> Result<()> {
    if grid.channels() != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            actual: grid.channels(),
        });
    }
    let img = GrayImage::from_fn(grid.width() as u32, grid.height() as u32, |x, y| {
        image::Luma([quantize_unit(grid.get(x as usize, y as usize, 0))])
    });
    img.save(path).map_err(|e| image_err(path, e))
}

fn quantize_unit(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a single-channel f64 grid as a grayscale PFM (stored as f32).
pub fn save_depth_pfm(grid: &RasterGrid<f64>, path: &Path) -> Result<()> {
    if grid.channels() != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            actual: grid.channels(),
        });
    }
    let mut out = Vec::with_capacity(32 + grid.pixel_count() * 4);
    // Scale -1.0 marks little-endian samples.
    write!(out, "Pf\n{} {}\n-1.0\n", grid.width(), grid.height()).expect("vec write");
    // PFM stores rows bottom-to-top.
    for y in (0..grid.height()).rev() {
        for x in 0..grid.width() {
            out.extend_from_slice(&(grid.get(x, y, 0) as f32).to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a grayscale PFM into a single-channel f64 grid.
pub fn load_depth_pfm(path: &Path) -> Result<RasterGrid<f64>> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let malformed = |detail: &str| Error::InvalidParameter(format!("{}: {detail}", path.display()));

    // Header: three whitespace-terminated tokens ("Pf", "W H", scale).
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(malformed("truncated PFM header"));
        }
        let s = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| malformed("non-ascii PFM header"))?
            .to_string();
        pos += 1; // single whitespace after each token
        Ok(s)
    };

    if token()? != "Pf" {
        return Err(malformed("not a grayscale PFM (missing 'Pf' magic)"));
    }
    let width: usize = token()?.parse().map_err(|_| malformed("bad width"))?;
    let height: usize = token()?.parse().map_err(|_| malformed("bad height"))?;
    let scale: f64 = token()?.parse().map_err(|_| malformed("bad scale"))?;
    let little_endian = scale < 0.0;

    let expected = width * height * 4;
    let data = &bytes[pos..];
    if data.len() < expected {
        return Err(malformed("truncated PFM samples"));
    }
    let mut grid = RasterGrid::filled(width, height, 1, 0.0f64);
    for row in 0..height {
        let y = height - 1 - row;
        for x in 0..width {
            let i = (row * width + x) * 4;
            let raw: [u8; 4] = data[i..i + 4].try_into().expect("length checked");
            let v = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            grid.set(x, y, 0, v as f64);
        }
    }
    Ok(grid)
}
