use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

/// Uncompressed COCO run-length encoding: column-major runs that alternate
/// between 0 and 1, starting with a (possibly empty) run of zeros.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    /// `[height, width]`.
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

impl Rle {
    pub fn width(&self) -> u32 {
        self.size[1]
    }

    pub fn height(&self) -> u32 {
        self.size[0]
    }

    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }
}

pub fn rle_encode(mask: &BinaryMask) -> Rle {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for x in 0..w {
        for y in 0..h {
            let b = mask.bits[y * w + x];
            if b != current {
                counts.push(run);
                run = 0;
                current = b;
            }
            run += 1;
        }
    }
    counts.push(run);
    Rle {
        size: [mask.height, mask.width],
        counts,
    }
}

pub fn rle_decode(rle: &Rle) -> Result<BinaryMask> {
    let (w, h) = (rle.width() as usize, rle.height() as usize);
    let total: u64 = rle.counts.iter().map(|&c| c as u64).sum();
    if total != (w * h) as u64 {
        return Err(Error::Validation(format!(
            "RLE runs sum to {total}, expected {w}x{h} = {}",
            w * h
        )));
    }
    let mut mask = BinaryMask::new(rle.width(), rle.height());
    let mut pos = 0usize;
    for (i, &c) in rle.counts.iter().enumerate() {
        if i % 2 == 1 {
            for p in pos..pos + c as usize {
                let (x, y) = (p / h, p % h);
                mask.bits[y * w + x] = true;
            }
        }
        pos += c as usize;
    }
    Ok(mask)
}
