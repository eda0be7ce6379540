//! Per-pixel deviation between the rendered twin and the captured frame:
//! absolute depth difference in mm, and CIE76 ΔE in CIELAB for colour.

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::frame::{write_bool_png, write_u16_png, ColorImage, DepthImage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Depth,
    Color,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Depth => "depth",
            Channel::Color => "color",
        }
    }
}

/// Row-major scalar field with a validity mask. Invalid pixels hold `0`.
#[derive(Clone, Debug, PartialEq)]
pub struct DisparityMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
    pub valid: Vec<bool>,
    pub channel: Channel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisparityStats {
    pub valid_pixels: usize,
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

impl DisparityMap {
    pub fn get(&self, u: u32, v: u32) -> Option<f32> {
        let i = v as usize * self.width as usize + u as usize;
        self.valid[i].then_some(self.values[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Nearest-rank percentiles over the valid pixels.
    pub fn stats(&self) -> DisparityStats {
        let mut v: Vec<f32> = self
            .values
            .iter()
            .zip(&self.valid)
            .filter_map(|(&x, &ok)| ok.then_some(x))
            .collect();
        if v.is_empty() {
            return DisparityStats {
                valid_pixels: 0,
                mean: 0.0,
                p50: 0.0,
                p90: 0.0,
                p99: 0.0,
                max: 0.0,
            };
        }
        v.sort_by(f32::total_cmp);
        let pct = |p: f64| {
            let rank = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
            v[rank - 1] as f64
        };
        DisparityStats {
            valid_pixels: v.len(),
            mean: v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64,
            p50: pct(0.5),
            p90: pct(0.9),
            p99: pct(0.99),
            max: *v.last().unwrap() as f64,
        }
    }

    /// 16-bit PNG of `round(value * scale)` (saturating) plus an 8-bit
    /// validity PNG.
    pub fn write_png(&self, scale: f64, values_path: &Path, valid_path: &Path) -> Result<()> {
        let q: Vec<u16> = self
            .values
            .iter()
            .zip(&self.valid)
            .map(|(&x, &ok)| {
                if ok {
                    (x as f64 * scale).round().clamp(0.0, u16::MAX as f64) as u16
                } else {
                    0
                }
            })
            .collect();
        write_u16_png(&q, self.width, self.height, values_path)?;
        write_bool_png(&self.valid, self.width, self.height, valid_path)
    }
}

/// `|D_render − D_real|` wherever both depths are valid.
pub fn depth_disparity(render: &DepthImage, real: &DepthImage) -> Result<DisparityMap> {
    depth_disparity_with(render, real, Exec::default())
}

pub fn depth_disparity_with(
    render: &DepthImage,
    real: &DepthImage,
    exec: Exec,
) -> Result<DisparityMap> {
    if !render.same_size(real.width, real.height) {
        return Err(Error::DimensionMismatch(format!(
            "render {}x{} vs real {}x{}",
            render.width, render.height, real.width, real.height
        )));
    }
    let per_pixel = exec.map_range(render.data.len(), |i| {
        let (a, b) = (render.data[i], real.data[i]);
        if DepthImage::is_valid_value(a) && DepthImage::is_valid_value(b) {
            ((a as f64 - b as f64).abs() as f32, true)
        } else {
            (0.0, false)
        }
    });
    let (values, valid) = per_pixel.into_iter().unzip();
    Ok(DisparityMap {
        width: render.width,
        height: render.height,
        values,
        valid,
        channel: Channel::Depth,
    })
}

fn srgb_to_linear_table() -> &'static [f64; 256] {
    static TABLE: OnceLock<[f64; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        std::array::from_fn(|i| {
            let c = i as f64 / 255.0;
            if c <= 0.04045 {
                c / 12.92
            } else {
                ((c + 0.055) / 1.055).powf(2.4)
            }
        })
    })
}

/// D65 reference white (2° observer).
const WHITE_D65: [f64; 3] = [0.95047, 1.0, 1.08883];

/// 8-bit sRGB → CIELAB (D65). `L ∈ [0, 100]`.
pub fn rgb_to_lab(c: [u8; 3]) -> [f64; 3] {
    let lut = srgb_to_linear_table();
    let [r, g, b] = c.map(|v| lut[v as usize]);
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    const DELTA: f64 = 6.0 / 29.0;
    let f = |t: f64| {
        if t > DELTA * DELTA * DELTA {
            t.cbrt()
        } else {
            t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
        }
    };
    let (fx, fy, fz) = (f(x / WHITE_D65[0]), f(y / WHITE_D65[1]), f(z / WHITE_D65[2]));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// CIE76 ΔE: Euclidean distance in CIELAB.
pub fn delta_e76(a: [u8; 3], b: [u8; 3]) -> f64 {
    let (la, lb) = (rgb_to_lab(a), rgb_to_lab(b));
    ((la[0] - lb[0]).powi(2) + (la[1] - lb[1]).powi(2) + (la[2] - lb[2]).powi(2)).sqrt()
}

/// ΔE76 per pixel, valid only inside `footprint` (the rendered object's
/// depth validity).
pub fn color_disparity(
    render: &ColorImage,
    real: &ColorImage,
    footprint: &[bool],
) -> Result<DisparityMap> {
    color_disparity_with(render, real, footprint, Exec::default())
}

pub fn color_disparity_with(
    render: &ColorImage,
    real: &ColorImage,
    footprint: &[bool],
    exec: Exec,
) -> Result<DisparityMap> {
    let n = render.data.len();
    if render.width != real.width || render.height != real.height || footprint.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "render {}x{}, real {}x{}, mask of {} pixels",
            render.width,
            render.height,
            real.width,
            real.height,
            footprint.len()
        )));
    }
    let per_pixel = exec.map_range(n, |i| {
        if footprint[i] {
            (delta_e76(render.data[i], real.data[i]) as f32, true)
        } else {
            (0.0, false)
        }
    });
    let (values, valid) = per_pixel.into_iter().unzip();
    Ok(DisparityMap {
        width: render.width,
        height: render.height,
        values,
        valid,
        channel: Channel::Color,
    })
}
