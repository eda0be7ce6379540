//! Polygon rasterisation and mask tracing. Pixel `(x, y)` is sampled at its
//! centre, the integer point `(x, y)`; rings are filled with the even-odd
//! rule taken over all rings of a segmentation together, so holes are
//! expressed as extra rings.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

pub(crate) fn shoelace_area(ring: &[[f64; 2]]) -> f64 {
    let n = ring.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    twice.abs() / 2.0
}

fn check_ring(ring: &[[f64; 2]]) -> Result<()> {
    if ring.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "polygon needs at least 3 vertices, got {}",
            ring.len()
        )));
    }
    if ring.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::InvalidInput("polygon vertex is not finite".into()));
    }
    if shoelace_area(ring) == 0.0 {
        return Err(Error::InvalidInput("degenerate polygon with zero area".into()));
    }
    Ok(())
}

/// Even-odd fill of one ring.
pub fn polygon_to_mask(polygon: &[[f64; 2]], width: u32, height: u32) -> Result<BinaryMask> {
    polygons_to_mask(std::slice::from_ref(&polygon.to_vec()), width, height)
}

/// Even-odd fill over the union of the edges of all `rings`.
pub fn polygons_to_mask(rings: &[Vec<[f64; 2]>], width: u32, height: u32) -> Result<BinaryMask> {
    for r in rings {
        check_ring(r)?;
    }
    let mut mask = BinaryMask::new(width, height);
    let w = width as usize;
    let mut xs = Vec::new();
    for row in 0..height {
        let y = row as f64;
        xs.clear();
        for ring in rings {
            let n = ring.len();
            for i in 0..n {
                let (a, b) = (ring[i], ring[(i + n - 1) % n]);
                if (a[1] > y) != (b[1] > y) {
                    xs.push((b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0]);
                }
            }
        }
        if xs.is_empty() {
            continue;
        }
        xs.sort_by(f64::total_cmp);
        // pixel x is inside when an odd number of crossings lie strictly right of it
        let mut k = 0;
        for col in 0..width {
            let x = col as f64;
            while k < xs.len() && xs[k] <= x {
                k += 1;
            }
            if (xs.len() - k) % 2 == 1 {
                mask.bits[row as usize * w + col as usize] = true;
            }
        }
    }
    Ok(mask)
}

/// Rectilinear rings along pixel boundaries whose even-odd fill reproduces
/// `mask` exactly. Vertices sit on pixel corners (half-integers).
pub fn mask_to_polygons(mask: &BinaryMask) -> Vec<Vec<[f64; 2]>> {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let on = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && mask.get(x as u32, y as u32);
    // corner (i, j) is the point (i - 0.5, j - 0.5)
    let mut out: BTreeMap<(i64, i64), Vec<(i64, i64)>> = BTreeMap::new();
    let mut add = |a: (i64, i64), b: (i64, i64)| out.entry(a).or_default().push(b);
    for y in 0..h {
        for x in 0..w {
            if !on(x, y) {
                continue;
            }
            if !on(x, y - 1) {
                add((x, y), (x + 1, y));
            }
            if !on(x + 1, y) {
                add((x + 1, y), (x + 1, y + 1));
            }
            if !on(x, y + 1) {
                add((x + 1, y + 1), (x, y + 1));
            }
            if !on(x - 1, y) {
                add((x, y + 1), (x, y));
            }
        }
    }
    let mut rings = Vec::new();
    while let Some((&start, _)) = out.iter().find(|(_, v)| !v.is_empty()) {
        let mut ring = vec![start];
        let mut cur = start;
        loop {
            let next = out.get_mut(&cur).and_then(|v| v.pop()).expect("balanced boundary");
            if next == start {
                break;
            }
            ring.push(next);
            cur = next;
        }
        out.retain(|_, v| !v.is_empty());
        rings.push(simplify(ring));
    }
    rings
}

fn simplify(ring: Vec<(i64, i64)>) -> Vec<[f64; 2]> {
    let n = ring.len();
    (0..n)
        .filter(|&i| {
            let (p, c, q) = (ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]);
            !((p.0 == c.0 && c.0 == q.0) || (p.1 == c.1 && c.1 == q.1))
        })
        .map(|i| [ring[i].0 as f64 - 0.5, ring[i].1 as f64 - 0.5])
        .collect()
}
