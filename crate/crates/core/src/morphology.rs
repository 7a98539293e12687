//! Binary morphology on label masks.
//!
//! Weak labels arrive as scattered per-pixel decisions; a
//! morphological opening removes isolated matches and pinched
//! salients so only coherent patches survive. Pixels outside the
//! raster count as false.

use serde::{Deserialize, Serialize};

/// A binary raster in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoolRaster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BoolRaster {
    pub fn filled(width: usize, height: usize, value: bool) -> BoolRaster {
        BoolRaster {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    /// Value at a signed coordinate; anything off the raster is false.
    #[inline]
    fn get_signed(&self, x: isize, y: isize) -> bool {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            false
        } else {
            self.get(x as usize, y as usize)
        }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }
}

/// Neighborhood shape for erosion and dilation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StructuringElement {
    /// Full 3x3 square (8-connected).
    #[default]
    Square3,
    /// Center plus the 4-neighborhood.
    Cross3,
}

impl StructuringElement {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            StructuringElement::Square3 => &[
                (-1, -1),
                (0, -1),
                (1, -1),
                (-1, 0),
                (0, 0),
                (1, 0),
                (-1, 1),
                (0, 1),
                (1, 1),
            ],
            StructuringElement::Cross3 => &[(0, -1), (-1, 0), (0, 0), (1, 0), (0, 1)],
        }
    }
}

/// Erosion: a pixel survives only if the whole element fits inside the
/// mask. Border pixels always lose under the off-raster-is-false rule.
pub fn erode(mask: &BoolRaster, element: StructuringElement) -> BoolRaster {
    let mut out = BoolRaster::filled(mask.width, mask.height, false);
    for y in 0..mask.height {
        for x in 0..mask.width {
            let hit = element
                .offsets()
                .iter()
                .all(|&(dx, dy)| mask.get_signed(x as isize + dx, y as isize + dy));
            if hit {
                out.set(x, y, true);
            }
        }
    }
    out
}

/// Dilation: a pixel turns on if the element touches any mask pixel.
pub fn dilate(mask: &BoolRaster, element: StructuringElement) -> BoolRaster {
    let mut out = BoolRaster::filled(mask.width, mask.height, false);
    for y in 0..mask.height {
        for x in 0..mask.width {
            let hit = element
                .offsets()
                .iter()
                .any(|&(dx, dy)| mask.get_signed(x as isize + dx, y as isize + dy));
            if hit {
                out.set(x, y, true);
            }
        }
    }
    out
}

/// Opening: erosion followed by dilation. Never adds pixels that were
/// not in the input mask.
pub fn open(mask: &BoolRaster, element: StructuringElement) -> BoolRaster {
    dilate(&erode(mask, element), element)
}
