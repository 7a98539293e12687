//! Regular acquisition time grids and the extended day-of-year axis.
//!
//! All temporal queries use an extended DOY axis: steps in the target
//! year carry their ordinary DOY, steps in the year before carry
//! `doy - 365`, so a window like `[-365, 0]` spans the prior year.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// A regular time grid: `count` steps spaced `step_days` apart,
/// starting at `start_doy`. `year_offset` shifts the whole grid by
/// whole years on the extended DOY axis (`-1` for a prior-year scene).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start_doy: i32,
    pub step_days: u32,
    pub count: usize,
    #[serde(default)]
    pub year_offset: i32,
}

impl TimeGrid {
    pub fn new(start_doy: i32, step_days: u32, count: usize) -> TimeGrid {
        TimeGrid {
            start_doy,
            step_days,
            count,
            year_offset: 0,
        }
    }

    pub fn with_year_offset(mut self, year_offset: i32) -> TimeGrid {
        self.year_offset = year_offset;
        self
    }

    /// Extended DOY of step `k`.
    pub fn doy_at(&self, step: usize) -> i32 {
        debug_assert!(step < self.count);
        self.start_doy + step as i32 * self.step_days as i32 + 365 * self.year_offset
    }

    /// Extended DOYs of every step, in step order.
    pub fn doys(&self) -> Vec<i32> {
        (0..self.count).map(|k| self.doy_at(k)).collect()
    }

    /// Steps whose extended DOY lies in the inclusive window `[lo, hi]`.
    pub fn steps_in_window(&self, lo: i32, hi: i32) -> Vec<usize> {
        (0..self.count)
            .filter(|&k| {
                let d = self.doy_at(k);
                d >= lo && d <= hi
            })
            .collect()
    }

    /// Like [`steps_in_window`](Self::steps_in_window) but an empty
    /// selection is an error; aggregate windows must overlap the grid.
    pub fn window_steps(&self, lo: i32, hi: i32) -> Result<Vec<usize>> {
        let steps = self.steps_in_window(lo, hi);
        if steps.is_empty() {
            return Err(CoreError::EmptyWindow { lo, hi });
        }
        Ok(steps)
    }

    /// Step whose bin `[doy_at(k), doy_at(k) + step_days)` contains the
    /// given extended DOY, if any.
    pub fn bin_of(&self, doy: i32) -> Option<usize> {
        let rel = doy - (self.start_doy + 365 * self.year_offset);
        if rel < 0 {
            return None;
        }
        let k = (rel as u32 / self.step_days) as usize;
        if k < self.count {
            Some(k)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doys_are_regular() {
        let g = TimeGrid::new(105, 10, 4);
        assert_eq!(g.doys(), vec![105, 115, 125, 135]);
    }

    #[test]
    fn prior_year_doys_are_negative() {
        let g = TimeGrid::new(105, 10, 3).with_year_offset(-1);
        assert_eq!(g.doys(), vec![105 - 365, 115 - 365, 125 - 365]);
    }

    #[test]
    fn window_is_inclusive_on_both_ends() {
        let g = TimeGrid::new(100, 10, 5);
        assert_eq!(g.steps_in_window(110, 130), vec![1, 2, 3]);
        assert_eq!(g.steps_in_window(111, 129), vec![2]);
        assert_eq!(g.steps_in_window(200, 300), Vec::<usize>::new());
    }

    #[test]
    fn empty_window_is_an_error() {
        let g = TimeGrid::new(100, 10, 5);
        assert!(matches!(
            g.window_steps(300, 400),
            Err(CoreError::EmptyWindow { lo: 300, hi: 400 })
        ));
    }

    #[test]
    fn bin_lookup_is_half_open() {
        let g = TimeGrid::new(100, 10, 3);
        assert_eq!(g.bin_of(100), Some(0));
        assert_eq!(g.bin_of(109), Some(0));
        assert_eq!(g.bin_of(110), Some(1));
        assert_eq!(g.bin_of(129), Some(2));
        assert_eq!(g.bin_of(130), None);
        assert_eq!(g.bin_of(99), None);
    }
}
