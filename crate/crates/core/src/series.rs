//! Per-pixel time series: the invalid sentinel, gap filling, and
//! validity accounting.

use std::collections::BTreeMap;

use crate::band::{Band, Sensor};
use crate::error::{CoreError, Result};
use crate::grid::TimeGrid;

/// Sentinel marking an invalid (cloudy, missing) observation. Values
/// equal to the sentinel are never read as data.
pub const INVALID: f32 = -9999.0;

/// True when a stored value is a real observation.
#[inline]
pub fn is_valid(v: f32) -> bool {
    v != INVALID
}

/// One pixel's observations across both sensor families. Each band
/// series has the length of its sensor's grid; invalid steps hold
/// [`INVALID`]. Validity is per sensor and per step, so every optical
/// band shares the same gap pattern, as does every radar band.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSet {
    pub optical_grid: TimeGrid,
    pub radar_grid: TimeGrid,
    pub bands: BTreeMap<Band, Vec<f32>>,
}

impl SeriesSet {
    pub fn grid(&self, sensor: Sensor) -> &TimeGrid {
        match sensor {
            Sensor::Optical => &self.optical_grid,
            Sensor::Radar => &self.radar_grid,
        }
    }

    pub fn band(&self, band: Band) -> Option<&[f32]> {
        self.bands.get(&band).map(|v| v.as_slice())
    }

    /// Steps of `sensor` that hold valid data, judged from the first
    /// band of that family present in the set.
    pub fn valid_steps(&self, sensor: Sensor) -> Vec<usize> {
        let probe = self
            .bands
            .iter()
            .find(|(b, _)| b.sensor() == sensor)
            .map(|(_, v)| v.as_slice());
        match probe {
            Some(values) => (0..values.len()).filter(|&k| is_valid(values[k])).collect(),
            None => Vec::new(),
        }
    }

    pub fn valid_count(&self, sensor: Sensor) -> usize {
        self.valid_steps(sensor).len()
    }

    /// Marks the given steps of one sensor family invalid across all
    /// of its bands.
    pub fn invalidate_steps(&mut self, sensor: Sensor, steps: &[usize]) {
        for (band, values) in self.bands.iter_mut() {
            if band.sensor() != sensor {
                continue;
            }
            for &k in steps {
                if k < values.len() {
                    values[k] = INVALID;
                }
            }
        }
    }
}

/// Fraction of steps within the inclusive DOY window that hold valid
/// observations.
///
/// # Errors
/// Fails if the window selects no steps on the grid.
pub fn valid_fraction(values: &[f32], grid: &TimeGrid, lo: i32, hi: i32) -> Result<f64> {
    let steps = grid.window_steps(lo, hi)?;
    let valid = steps.iter().filter(|&&k| is_valid(values[k])).count();
    Ok(valid as f64 / steps.len() as f64)
}

/// Fills invalid steps by linear interpolation between the nearest
/// valid neighbors; runs before the first and after the last valid
/// observation are held at the edge value.
///
/// # Errors
/// Fails if the series has no valid observation at all.
pub fn interpolate_gaps(values: &[f32], context: &str) -> Result<Vec<f32>> {
    let valid: Vec<usize> = (0..values.len()).filter(|&k| is_valid(values[k])).collect();
    if valid.is_empty() {
        return Err(CoreError::AllInvalid {
            context: context.to_string(),
        });
    }
    let mut out = vec![0.0f32; values.len()];
    let first = valid[0];
    let last = *valid.last().unwrap();
    for k in 0..values.len() {
        if is_valid(values[k]) {
            out[k] = values[k];
        } else if k < first {
            out[k] = values[first];
        } else if k > last {
            out[k] = values[last];
        } else {
            let left = *valid.iter().rev().find(|&&v| v < k).unwrap();
            let right = *valid.iter().find(|&&v| v > k).unwrap();
            let t = (k - left) as f32 / (right - left) as f32;
            out[k] = values[left] + (values[right] - values[left]) * t;
        }
    }
    Ok(out)
}
