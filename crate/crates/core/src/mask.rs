use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::{read_bool_png, write_bool_png};

/// Row-major boolean raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch(format!(
                "{} bits for a {width}x{height} mask",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> bool {
        self.bits[v as usize * self.width as usize + u as usize]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, on: bool) {
        let w = self.width as usize;
        self.bits[v as usize * w + u as usize] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    fn check_same(&self, other: &BinaryMask) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_same(other)?;
        Ok(BinaryMask {
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
            ..*self
        })
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_same(other)?;
        Ok(BinaryMask {
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect(),
            ..*self
        })
    }

    pub fn difference(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_same(other)?;
        Ok(BinaryMask {
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && !*b).collect(),
            ..*self
        })
    }

    /// Tight `(x, y, w, h)` box of the set pixels, `None` when empty.
    pub fn bbox(&self) -> Option<[u32; 4]> {
        let w = self.width as usize;
        let mut b: Option<[u32; 4]> = None;
        for (i, _) in self.bits.iter().enumerate().filter(|(_, &on)| on) {
            let (x, y) = ((i % w) as u32, (i / w) as u32);
            b = Some(match b {
                None => [x, y, x, y],
                Some([x0, y0, x1, y1]) => [x0.min(x), y0.min(y), x1.max(x), y1.max(y)],
            });
        }
        b.map(|[x0, y0, x1, y1]| [x0, y0, x1 - x0 + 1, y1 - y0 + 1])
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        write_bool_png(&self.bits, self.width, self.height, path)
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let (width, height, bits) = read_bool_png(path)?;
        Ok(Self {
            width,
            height,
            bits,
        })
    }
}
