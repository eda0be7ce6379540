//! From disparity maps to defect regions: thresholding, morphological
//! cleaning, 8-connected components and IoU.

use serde::{Deserialize, Serialize};

use crate::annotations::rle::{rle_encode, Rle};
use crate::disparity::{Channel, DisparityMap};
use crate::error::{Error, Result};
use crate::mask::BinaryMask;

/// Depth threshold default, mm.
pub const DEFAULT_DEPTH_TAU: f64 = 2.0;
/// Colour threshold default, ΔE76.
pub const DEFAULT_COLOR_TAU: f64 = 20.0;
pub const DEFAULT_CLEAN_RADIUS: u32 = 1;
pub const DEFAULT_MIN_AREA: usize = 25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectRegion {
    pub channel: Channel,
    /// `(x, y, w, h)` in pixels.
    pub bbox: [u32; 4],
    pub area: usize,
    /// `(x, y)` in pixels.
    pub centroid: [f64; 2],
    /// Mean disparity over the region (mm or ΔE).
    pub score: f64,
    pub rle: Rle,
}

impl DefectRegion {
    pub fn mask(&self) -> Result<BinaryMask> {
        crate::annotations::rle::rle_decode(&self.rle)
    }
}

/// Pixels that are valid and at least `tau`.
pub fn threshold(map: &DisparityMap, tau: f64) -> Result<BinaryMask> {
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("threshold {tau} must be > 0")));
    }
    let bits = map
        .values
        .iter()
        .zip(&map.valid)
        .map(|(&v, &ok)| ok && v as f64 >= tau)
        .collect();
    BinaryMask::from_bits(map.width, map.height, bits)
}

/// Square-window min (erode) or max (dilate) along rows then columns.
/// Out-of-image pixels are ignored rather than treated as background.
fn square_filter(mask: &BinaryMask, radius: u32, erode: bool) -> BinaryMask {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let r = radius as usize;
    let pass = |src: &[bool], len: usize, stride: usize, lines: usize, line_stride: usize| {
        let mut out = vec![false; src.len()];
        let mut prefix = vec![0usize; len + 1];
        for line in 0..lines {
            let base = line * line_stride;
            for i in 0..len {
                prefix[i + 1] = prefix[i] + src[base + i * stride] as usize;
            }
            for i in 0..len {
                let lo = i.saturating_sub(r);
                let hi = (i + r + 1).min(len);
                let ones = prefix[hi] - prefix[lo];
                out[base + i * stride] = if erode { ones == hi - lo } else { ones > 0 };
            }
        }
        out
    };
    let rows = pass(&mask.bits, w, 1, h, w);
    let bits = pass(&rows, h, w, w, 1);
    BinaryMask { bits, ..*mask }
}

/// Opening then closing with a `(2r+1)²` square; radius 0 is the identity.
pub fn morphological_clean(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let opened = square_filter(&square_filter(mask, radius, true), radius, false);
    square_filter(&square_filter(&opened, radius, false), radius, true)
}

/// 8-connected labelling: `labels[i]` is the 1-based component of pixel `i`
/// (0 for background), components numbered in raster order of their first pixel.
pub fn label_components(mask: &BinaryMask) -> (Vec<u32>, u32) {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let mut labels = vec![0u32; mask.bits.len()];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..mask.bits.len() {
        if !mask.bits[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i as i64 % w, i as i64 / w);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let j = (ny * w + nx) as usize;
                    if mask.bits[j] && labels[j] == 0 {
                        labels[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
    }
    (labels, next)
}

/// Components of `mask` with at least `min_area` pixels, largest first, each
/// scored with the mean of `map` over its pixels.
pub fn connected_components(
    mask: &BinaryMask,
    map: &DisparityMap,
    min_area: usize,
) -> Result<Vec<DefectRegion>> {
    if mask.width != map.width || mask.height != map.height {
        return Err(Error::DimensionMismatch("mask and disparity map differ in size".into()));
    }
    let min_area = min_area.max(1);
    let (labels, count) = label_components(mask);
    let w = mask.width as usize;

    struct Acc {
        pixels: Vec<usize>,
        sum: f64,
    }
    let mut acc: Vec<Acc> = (0..count)
        .map(|_| Acc {
            pixels: Vec::new(),
            sum: 0.0,
        })
        .collect();
    for (i, &l) in labels.iter().enumerate() {
        if l > 0 {
            let a = &mut acc[l as usize - 1];
            a.pixels.push(i);
            a.sum += map.values[i] as f64;
        }
    }
    let mut regions: Vec<(usize, DefectRegion)> = acc
        .into_iter()
        .filter(|a| a.pixels.len() >= min_area)
        .map(|a| {
            let mut m = BinaryMask::new(mask.width, mask.height);
            let (mut sx, mut sy) = (0.0, 0.0);
            for &i in &a.pixels {
                m.bits[i] = true;
                sx += (i % w) as f64;
                sy += (i / w) as f64;
            }
            let n = a.pixels.len();
            (
                a.pixels[0],
                DefectRegion {
                    channel: map.channel,
                    bbox: m.bbox().expect("non-empty component"),
                    area: n,
                    centroid: [sx / n as f64, sy / n as f64],
                    score: a.sum / n as f64,
                    rle: rle_encode(&m),
                },
            )
        })
        .collect();
    regions.sort_by(|a, b| b.1.area.cmp(&a.1.area).then(a.0.cmp(&b.0)));
    Ok(regions.into_iter().map(|(_, r)| r).collect())
}

/// `|a ∩ b| / |a ∪ b|`, taken as 0 when both masks are empty.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// Threshold, clean and extract regions from one disparity map.
pub fn detect_regions(
    map: &DisparityMap,
    tau: f64,
    clean_radius: u32,
    min_area: usize,
) -> Result<(BinaryMask, Vec<DefectRegion>)> {
    let mask = morphological_clean(&threshold(map, tau)?, clean_radius);
    let regions = connected_components(&mask, map, min_area)?;
    // the reported mask is the union of the surviving regions
    let mut kept = BinaryMask::new(map.width, map.height);
    for r in &regions {
        for (k, on) in kept.bits.iter_mut().zip(r.mask()?.bits) {
            *k |= on;
        }
    }
    Ok((kept, regions))
}
