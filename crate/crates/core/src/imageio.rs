//! PNG decoding and encoding for grids, masks and depth maps.

use std::io::Cursor;

use image::{DynamicImage, GrayImage, ImageFormat, ImageReader, Limits, RgbImage};
use thiserror::Error;

use crate::grid::{DepthMap, FeatureGrid, GridError, Mask};

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("decode error: {0}")]
    DecodeError(String),
    #[error("encode error: {0}")]
    EncodeError(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Largest accepted width or height.
pub const MAX_SIDE: u32 = 4096;

fn decode(png: &[u8]) -> Result<DynamicImage, ImageError> {
    let mut reader = ImageReader::with_format(Cursor::new(png), ImageFormat::Png);
    let mut limits = Limits::default();
    limits.max_image_width = Some(MAX_SIDE);
    limits.max_image_height = Some(MAX_SIDE);
    reader.limits(limits);
    let img = reader
        .decode()
        .map_err(|e| ImageError::DecodeError(e.to_string()))?;
    if img.width() == 0 || img.height() == 0 {
        return Err(ImageError::DecodeError("image has no pixels".into()));
    }
    Ok(img)
}

/// Decodes a PNG into an RGB grid with channels in `[0, 1]`. Alpha is dropped.
pub fn image_to_grid(png: &[u8]) -> Result<FeatureGrid, ImageError> {
    let rgb = decode(png)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
    Ok(FeatureGrid::new(h as usize, w as usize, 3, data)?)
}

/// `0.299 R + 0.587 G + 0.114 B` per cell of a 3-channel grid.
pub fn luminance_depth(grid: &FeatureGrid) -> Result<DepthMap, GridError> {
    if grid.channels() != 3 {
        return Err(GridError::DimensionMismatch(format!(
            "luminance needs 3 channels, grid has {}",
            grid.channels()
        )));
    }
    let values = grid
        .data()
        .chunks_exact(3)
        .map(|c| 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2])
        .collect();
    DepthMap::new(grid.height(), grid.width(), values)
}

/// Mask from a PNG: a pixel is selected when any colour channel is nonzero.
pub fn mask_from_png(png: &[u8]) -> Result<Mask, ImageError> {
    let rgb = decode(png)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    let bits = rgb.pixels().map(|p| p.0.iter().any(|&c| c != 0)).collect();
    Ok(Mask::new(h as usize, w as usize, bits)?)
}

pub fn mask_to_png(mask: &Mask) -> Result<Vec<u8>, ImageError> {
    let raw = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let img = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, raw)
        .expect("buffer matches dimensions");
    encode(DynamicImage::ImageLuma8(img))
}

/// Depth from a grayscale (or colour, via luma) PNG, in raw 0..=255 units.
pub fn depth_from_png(png: &[u8]) -> Result<DepthMap, ImageError> {
    let gray = decode(png)?.to_luma8();
    let (w, h) = gray.dimensions();
    let values = gray.as_raw().iter().map(|&b| b as f64).collect();
    Ok(DepthMap::new(h as usize, w as usize, values)?)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn encode(img: DynamicImage) -> Result<Vec<u8>, ImageError> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| ImageError::EncodeError(e.to_string()))?;
    Ok(out.into_inner())
}

/// Renders a grid for inspection. Three-channel grids are written as RGB
/// (values clamped to `[0, 1]`), one-channel grids as grayscale, and any
/// other channel count as a horizontal strip of min-max normalised
/// grayscale tiles, one per channel.
pub fn grid_to_png(grid: &FeatureGrid) -> Result<Vec<u8>, ImageError> {
    let (h, w, d) = (grid.height(), grid.width(), grid.channels());
    match d {
        3 => {
            let raw = grid.data().iter().map(|&v| quantize(v)).collect();
            let img = RgbImage::from_raw(w as u32, h as u32, raw).expect("buffer matches");
            encode(DynamicImage::ImageRgb8(img))
        }
        1 => {
            let raw = grid.data().iter().map(|&v| quantize(v)).collect();
            let img = GrayImage::from_raw(w as u32, h as u32, raw).expect("buffer matches");
            encode(DynamicImage::ImageLuma8(img))
        }
        _ => {
            let mut img = GrayImage::new((w * d) as u32, h as u32);
            for c in 0..d {
                let (lo, hi) = grid
                    .data()
                    .iter()
                    .skip(c)
                    .step_by(d)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    });
                let span = if hi > lo { hi - lo } else { 1.0 };
                for y in 0..h {
                    for x in 0..w {
                        let v = (grid.cell(x, y)[c] - lo) / span;
                        img.put_pixel((c * w + x) as u32, y as u32, image::Luma([quantize(v)]));
                    }
                }
            }
            encode(DynamicImage::ImageLuma8(img))
        }
    }
}

/// Grayscale render of a depth map, min-max normalised.
pub fn depth_to_png(depth: &DepthMap) -> Result<Vec<u8>, ImageError> {
    let (lo, hi) = depth.min_max();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let raw = depth
        .values()
        .iter()
        .map(|&v| quantize((v - lo) / span))
        .collect();
    let img = GrayImage::from_raw(depth.width() as u32, depth.height() as u32, raw)
        .expect("buffer matches");
    encode(DynamicImage::ImageLuma8(img))
}
