//! Scene stacks: gridded multi-band rasters on two time grids, with
//! per-sensor validity, plus temporal compositing of raw observations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::band::{Band, Sensor};
use crate::error::{CoreError, Result};
use crate::grid::TimeGrid;
use crate::series::{is_valid, SeriesSet, INVALID};
use crate::stats::median;

/// Raster value marking an unlabeled pixel in label and stratum maps.
pub const NO_LABEL: u16 = u16::MAX;

/// A co-registered stack of band time series over a raster.
///
/// Band data is stored step-major: the value of band `b` at step `t`,
/// row `y`, column `x` sits at index `(t * height + y) * width + x`.
/// Validity is tracked per sensor family in the same layout; entries
/// of invalid steps also hold the [`INVALID`] sentinel in every band
/// of that family.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneStack {
    pub width: usize,
    pub height: usize,
    /// Class table; a label raster value is an index into it.
    pub classes: Vec<String>,
    /// Stratum table for the non-crop background, used by stratified
    /// sampling; a stratum raster value is an index into it.
    pub strata: Vec<String>,
    pub optical_grid: TimeGrid,
    pub radar_grid: TimeGrid,
    pub bands: BTreeMap<Band, Vec<f32>>,
    pub optical_valid: Vec<u8>,
    pub radar_valid: Vec<u8>,
    /// Ground-truth class ids, [`NO_LABEL`] where absent.
    pub labels: Option<Vec<u16>>,
    /// Stratum ids for background pixels, [`NO_LABEL`] elsewhere.
    pub strata_map: Option<Vec<u16>>,
}

impl SceneStack {
    /// Allocates a scene with every step invalid and every band at the
    /// sentinel value.
    pub fn new_empty(
        width: usize,
        height: usize,
        optical_grid: TimeGrid,
        radar_grid: TimeGrid,
        bands: &[Band],
    ) -> SceneStack {
        let mut map = BTreeMap::new();
        for &band in bands {
            let steps = match band.sensor() {
                Sensor::Optical => optical_grid.count,
                Sensor::Radar => radar_grid.count,
            };
            map.insert(band, vec![INVALID; steps * width * height]);
        }
        SceneStack {
            width,
            height,
            classes: Vec::new(),
            strata: Vec::new(),
            optical_grid,
            radar_grid,
            bands: map,
            optical_valid: vec![0; optical_grid.count * width * height],
            radar_valid: vec![0; radar_grid.count * width * height],
            labels: None,
            strata_map: None,
        }
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn cell_index(&self, step: usize, x: usize, y: usize) -> usize {
        (step * self.height + y) * self.width + x
    }

    pub fn grid(&self, sensor: Sensor) -> &TimeGrid {
        match sensor {
            Sensor::Optical => &self.optical_grid,
            Sensor::Radar => &self.radar_grid,
        }
    }

    pub fn validity(&self, sensor: Sensor) -> &[u8] {
        match sensor {
            Sensor::Optical => &self.optical_valid,
            Sensor::Radar => &self.radar_valid,
        }
    }

    /// Number of valid steps of one sensor at a pixel.
    pub fn valid_count(&self, sensor: Sensor, x: usize, y: usize) -> usize {
        let grid = self.grid(sensor);
        let mask = self.validity(sensor);
        (0..grid.count)
            .filter(|&t| mask[self.cell_index(t, x, y)] != 0)
            .count()
    }

    /// Extracts one pixel's series across all bands, with the sensor
    /// validity masks applied.
    pub fn pixel_series(&self, x: usize, y: usize) -> SeriesSet {
        let mut bands = BTreeMap::new();
        for (&band, data) in &self.bands {
            let (grid, mask) = match band.sensor() {
                Sensor::Optical => (&self.optical_grid, &self.optical_valid),
                Sensor::Radar => (&self.radar_grid, &self.radar_valid),
            };
            let series = (0..grid.count)
                .map(|t| {
                    let i = self.cell_index(t, x, y);
                    if mask[i] != 0 {
                        data[i]
                    } else {
                        INVALID
                    }
                })
                .collect();
            bands.insert(band, series);
        }
        SeriesSet {
            optical_grid: self.optical_grid,
            radar_grid: self.radar_grid,
            bands,
        }
    }

    /// Histogram of per-pixel valid-step counts for one sensor; bin
    /// `k` counts pixels with exactly `k` valid steps, so the vector
    /// has `steps + 1` bins.
    pub fn valid_count_histogram(&self, sensor: Sensor) -> Vec<usize> {
        let steps = self.grid(sensor).count;
        let mut hist = vec![0usize; steps + 1];
        for y in 0..self.height {
            for x in 0..self.width {
                hist[self.valid_count(sensor, x, y)] += 1;
            }
        }
        hist
    }

    pub fn class_id(&self, name: &str) -> Result<u16> {
        self.classes
            .iter()
            .position(|c| c == name)
            .map(|i| i as u16)
            .ok_or_else(|| CoreError::UnknownClass(name.to_string()))
    }

    /// Checks internal size consistency; bundle I/O runs this on load.
    pub fn validate(&self) -> Result<()> {
        let check = |context: &str, expected: usize, got: usize| -> Result<()> {
            if expected != got {
                return Err(CoreError::DimensionMismatch {
                    context: context.to_string(),
                    expected,
                    got,
                });
            }
            Ok(())
        };
        let px = self.n_pixels();
        for (&band, data) in &self.bands {
            let steps = self.grid(band.sensor()).count;
            check(&format!("band {band}"), steps * px, data.len())?;
        }
        check(
            "optical validity",
            self.optical_grid.count * px,
            self.optical_valid.len(),
        )?;
        check(
            "radar validity",
            self.radar_grid.count * px,
            self.radar_valid.len(),
        )?;
        if let Some(labels) = &self.labels {
            check("labels", px, labels.len())?;
            for &l in labels {
                if l != NO_LABEL && l as usize >= self.classes.len() {
                    return Err(CoreError::UnknownClass(format!("label id {l}")));
                }
            }
        }
        if let Some(strata) = &self.strata_map {
            check("strata", px, strata.len())?;
            for &s in strata {
                if s != NO_LABEL && s as usize >= self.strata.len() {
                    return Err(CoreError::UnknownClass(format!("stratum id {s}")));
                }
            }
        }
        Ok(())
    }
}

/// Reduction applied to the valid observations that fall in one
/// composite bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Reducer {
    #[default]
    Median,
    Mean,
    Max,
}

impl Reducer {
    fn reduce(self, values: &[f64]) -> f64 {
        match self {
            Reducer::Median => median(values),
            Reducer::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Reducer::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// A single raw acquisition: one date, a raster per band, and one
/// per-pixel validity mask shared by all its bands.
#[derive(Debug, Clone)]
pub struct Observation {
    pub doy: i32,
    pub bands: BTreeMap<Band, Vec<f32>>,
    pub valid: Vec<u8>,
}

/// Composites raw observations of one sensor family onto a regular
/// grid. Each observation lands in the bin whose interval
/// `[doy_at(k), doy_at(k) + step_days)` contains its date; the valid
/// values in a bin are reduced per pixel, and bins with none are
/// marked invalid.
///
/// # Errors
/// Fails on an empty observation list, an observation dated outside
/// the grid span, raster size mismatches, or observations that do not
/// all carry the same band set.
pub fn composite_bands(
    observations: &[Observation],
    grid: &TimeGrid,
    width: usize,
    height: usize,
    reducer: Reducer,
) -> Result<(BTreeMap<Band, Vec<f32>>, Vec<u8>)> {
    if observations.is_empty() {
        return Err(CoreError::EmptyInput("no observations to composite".into()));
    }
    let px = width * height;
    let band_set: Vec<Band> = observations[0].bands.keys().copied().collect();
    let mut binned: Vec<Vec<&Observation>> = vec![Vec::new(); grid.count];
    for obs in observations {
        let bin = grid.bin_of(obs.doy).ok_or_else(|| {
            CoreError::RejectedInput(format!(
                "observation at DOY {} falls outside the composite grid",
                obs.doy
            ))
        })?;
        let obs_bands: Vec<Band> = obs.bands.keys().copied().collect();
        if obs_bands != band_set {
            return Err(CoreError::RejectedInput(
                "observations carry differing band sets".into(),
            ));
        }
        if obs.valid.len() != px {
            return Err(CoreError::DimensionMismatch {
                context: "observation validity raster".into(),
                expected: px,
                got: obs.valid.len(),
            });
        }
        for (band, data) in &obs.bands {
            if data.len() != px {
                return Err(CoreError::DimensionMismatch {
                    context: format!("observation band {band} raster"),
                    expected: px,
                    got: data.len(),
                });
            }
        }
        binned[bin].push(obs);
    }

    let mut out_bands: BTreeMap<Band, Vec<f32>> = band_set
        .iter()
        .map(|&b| (b, vec![INVALID; grid.count * px]))
        .collect();
    let mut out_valid = vec![0u8; grid.count * px];
    let mut scratch: Vec<f64> = Vec::new();
    for (t, bin) in binned.iter().enumerate() {
        for p in 0..px {
            let cell = t * px + p;
            let mut any = false;
            for &band in &band_set {
                scratch.clear();
                for obs in bin {
                    if obs.valid[p] != 0 {
                        let v = obs.bands[&band][p];
                        if is_valid(v) {
                            scratch.push(v as f64);
                        }
                    }
                }
                if !scratch.is_empty() {
                    out_bands.get_mut(&band).unwrap()[cell] = reducer.reduce(&scratch) as f32;
                    any = true;
                }
            }
            if any {
                out_valid[cell] = 1;
            }
        }
    }
    Ok((out_bands, out_valid))
}

/// Composites optical and radar observations onto their grids and
/// assembles the result into one scene.
pub fn composite_scene(
    optical: &[Observation],
    optical_grid: TimeGrid,
    radar: &[Observation],
    radar_grid: TimeGrid,
    width: usize,
    height: usize,
    reducer: Reducer,
) -> Result<SceneStack> {
    let (optical_bands, optical_valid) =
        composite_bands(optical, &optical_grid, width, height, reducer)?;
    let (radar_bands, radar_valid) = composite_bands(radar, &radar_grid, width, height, reducer)?;
    let mut bands = optical_bands;
    bands.extend(radar_bands);
    let scene = SceneStack {
        width,
        height,
        classes: Vec::new(),
        strata: Vec::new(),
        optical_grid,
        radar_grid,
        bands,
        optical_valid,
        radar_valid,
        labels: None,
        strata_map: None,
    };
    scene.validate()?;
    Ok(scene)
}
