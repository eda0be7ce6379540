//! Depth and colour rasters plus their PNG codecs.

use std::path::Path;

use image::{ImageBuffer, Luma, RgbImage};

use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;

/// Row-major depth in mm. `0` or non-finite marks an invalid pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl DepthImage {
    /// All-invalid image.
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width as usize * height as usize],
        }
    }

    pub fn from_vec(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch(format!(
                "{} depth values for {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn is_valid_value(z: f32) -> bool {
        z.is_finite() && z > 0.0
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> f32 {
        self.data[v as usize * self.width as usize + u as usize]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, z: f32) {
        let w = self.width as usize;
        self.data[v as usize * w + u as usize] = z;
    }

    #[inline]
    pub fn is_valid(&self, u: u32, v: u32) -> bool {
        Self::is_valid_value(self.get(u, v))
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&z| Self::is_valid_value(z)).count()
    }

    pub fn validity(&self) -> Vec<bool> {
        self.data.iter().map(|&z| Self::is_valid_value(z)).collect()
    }

    pub fn same_size(&self, width: u32, height: u32) -> bool {
        self.width == width && self.height == height
    }
}

/// Row-major 8-bit sRGB.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<[u8; 3]>,
}

impl ColorImage {
    /// Black image.
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![[0; 3]; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> [u8; 3] {
        self.data[v as usize * self.width as usize + u as usize]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, c: [u8; 3]) {
        let w = self.width as usize;
        self.data[v as usize * w + u as usize] = c;
    }
}

/// Paired colour and depth on one camera.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbdFrame {
    pub color: ColorImage,
    pub depth: DepthImage,
    pub intrinsics: CameraIntrinsics,
}

impl RgbdFrame {
    pub fn new(color: ColorImage, depth: DepthImage, intrinsics: CameraIntrinsics) -> Result<Self> {
        let (w, h) = (intrinsics.width, intrinsics.height);
        if !depth.same_size(w, h) || color.width != w || color.height != h {
            return Err(Error::DimensionMismatch(format!(
                "colour {}x{}, depth {}x{}, intrinsics {w}x{h}",
                color.width, color.height, depth.width, depth.height
            )));
        }
        Ok(Self {
            color,
            depth,
            intrinsics,
        })
    }

    pub fn empty(intrinsics: CameraIntrinsics) -> Self {
        Self {
            color: ColorImage::new(intrinsics.width, intrinsics.height),
            depth: DepthImage::new(intrinsics.width, intrinsics.height),
            intrinsics,
        }
    }
}

pub fn write_color_png(img: &ColorImage, path: &Path) -> Result<()> {
    let raw: Vec<u8> = img.data.iter().flatten().copied().collect();
    let buf = RgbImage::from_raw(img.width, img.height, raw)
        .ok_or_else(|| Error::DimensionMismatch("colour buffer size".into()))?;
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_color_png(path: &Path) -> Result<ColorImage> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .into_rgb8();
    let (width, height) = img.dimensions();
    Ok(ColorImage {
        width,
        height,
        data: img.pixels().map(|p| p.0).collect(),
    })
}

/// Quantises depth to `round(mm / depth_scale)`; invalid pixels become 0.
pub fn quantize_depth(depth: &DepthImage, depth_scale: f64) -> Result<Vec<u16>> {
    if !(depth_scale > 0.0) {
        return Err(Error::InvalidInput(format!("depth_scale {depth_scale} must be > 0")));
    }
    depth
        .data
        .iter()
        .map(|&z| {
            if !DepthImage::is_valid_value(z) {
                return Ok(0);
            }
            let q = (z as f64 / depth_scale).round();
            if q > u16::MAX as f64 {
                Err(Error::DepthRange {
                    value_mm: z as f64,
                    scale: depth_scale,
                })
            } else {
                // a valid depth below half a quantum still has to read back as valid
                Ok((q as u16).max(1))
            }
        })
        .collect()
}

pub fn dequantize_depth(stored: u16, depth_scale: f64) -> f32 {
    (stored as f64 * depth_scale) as f32
}

pub fn write_depth_png(depth: &DepthImage, depth_scale: f64, path: &Path) -> Result<()> {
    let raw = quantize_depth(depth, depth_scale)?;
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width, depth.height, raw)
            .ok_or_else(|| Error::DimensionMismatch("depth buffer size".into()))?;
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_depth_png(path: &Path, depth_scale: f64) -> Result<DepthImage> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .into_luma16();
    let (width, height) = img.dimensions();
    let data = img
        .into_raw()
        .into_iter()
        .map(|q| dequantize_depth(q, depth_scale))
        .collect();
    Ok(DepthImage {
        width,
        height,
        data,
    })
}

/// Writes a boolean raster as 8-bit grayscale (0 / 255).
pub fn write_bool_png(bits: &[bool], width: u32, height: u32, path: &Path) -> Result<()> {
    let raw: Vec<u8> = bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(width, height, raw)
        .ok_or_else(|| Error::DimensionMismatch("mask buffer size".into()))?;
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_bool_png(path: &Path) -> Result<(u32, u32, Vec<bool>)> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .into_luma8();
    let (w, h) = img.dimensions();
    Ok((w, h, img.into_raw().into_iter().map(|v| v >= 128).collect()))
}

/// Writes a 16-bit grayscale PNG from already-quantised values.
pub fn write_u16_png(values: &[u16], width: u32, height: u32, path: &Path) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width, height, values.to_vec())
            .ok_or_else(|| Error::DimensionMismatch("buffer size".into()))?;
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}
