//! Spectral and radar index definitions.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::band::{Band, Sensor};
use crate::error::{CoreError, Result};
use crate::series::{is_valid, SeriesSet, INVALID};

/// Denominators smaller than this in magnitude make the step invalid
/// rather than producing an unstable ratio.
pub const DENOM_EPS: f64 = 1e-9;

/// Indices derivable from the band set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Ndvi,
    Evi,
    Lswi,
    Mndwi,
    Ndyi,
    Ndpi,
    Rendvi,
    /// Raw second red-edge band passed through as an index.
    Re2,
    Mpdi,
}

/// Tunable index parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndexParams {
    /// Red / SWIR blend weight in the NDPI denominator term.
    pub ndpi_alpha: f64,
}

impl Default for IndexParams {
    fn default() -> Self {
        IndexParams { ndpi_alpha: 0.74 }
    }
}

impl IndexKind {
    pub const ALL: [IndexKind; 9] = [
        IndexKind::Ndvi,
        IndexKind::Evi,
        IndexKind::Lswi,
        IndexKind::Mndwi,
        IndexKind::Ndyi,
        IndexKind::Ndpi,
        IndexKind::Rendvi,
        IndexKind::Re2,
        IndexKind::Mpdi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IndexKind::Ndvi => "NDVI",
            IndexKind::Evi => "EVI",
            IndexKind::Lswi => "LSWI",
            IndexKind::Mndwi => "MNDWI",
            IndexKind::Ndyi => "NDYI",
            IndexKind::Ndpi => "NDPI",
            IndexKind::Rendvi => "RENDVI",
            IndexKind::Re2 => "RE2",
            IndexKind::Mpdi => "MPDI",
        }
    }

    /// Case-insensitive lookup by name.
    pub fn from_name(name: &str) -> Option<IndexKind> {
        IndexKind::ALL
            .iter()
            .copied()
            .find(|k| k.name().eq_ignore_ascii_case(name))
    }

    /// Sensor family whose grid the index lives on.
    pub fn sensor(self) -> Sensor {
        match self {
            IndexKind::Mpdi => Sensor::Radar,
            _ => Sensor::Optical,
        }
    }

    pub fn required_bands(self) -> &'static [Band] {
        match self {
            IndexKind::Ndvi => &[Band::Nir, Band::Red],
            IndexKind::Evi => &[Band::Nir, Band::Red, Band::Blue],
            IndexKind::Lswi => &[Band::Nir, Band::Swir1],
            IndexKind::Mndwi => &[Band::Green, Band::Swir1],
            IndexKind::Ndyi => &[Band::Green, Band::Blue],
            IndexKind::Ndpi => &[Band::Nir, Band::Red, Band::Swir1],
            IndexKind::Rendvi => &[Band::Nir, Band::Re1],
            IndexKind::Re2 => &[Band::Re2],
            IndexKind::Mpdi => &[Band::Vv, Band::Vh],
        }
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn clamped_ratio(num: f64, den: f64) -> f32 {
    if den.abs() < DENOM_EPS {
        INVALID
    } else {
        (num / den).clamp(-1.0, 1.0) as f32
    }
}

/// Index value at one step from that step's band values. Returns
/// [`INVALID`] when any input is invalid or a denominator vanishes.
/// Normalized-difference indices are clamped to [-1, 1]; EVI and the
/// RE2 passthrough are not.
pub fn index_value(kind: IndexKind, params: &IndexParams, get: impl Fn(Band) -> f32) -> f32 {
    for &band in kind.required_bands() {
        if !is_valid(get(band)) {
            return INVALID;
        }
    }
    let v = |band: Band| get(band) as f64;
    match kind {
        IndexKind::Ndvi => clamped_ratio(v(Band::Nir) - v(Band::Red), v(Band::Nir) + v(Band::Red)),
        IndexKind::Evi => {
            let den = v(Band::Nir) + 6.0 * v(Band::Red) - 7.5 * v(Band::Blue) + 1.0;
            if den.abs() < DENOM_EPS {
                INVALID
            } else {
                (2.5 * (v(Band::Nir) - v(Band::Red)) / den) as f32
            }
        }
        IndexKind::Lswi => clamped_ratio(
            v(Band::Nir) - v(Band::Swir1),
            v(Band::Nir) + v(Band::Swir1),
        ),
        IndexKind::Mndwi => clamped_ratio(
            v(Band::Green) - v(Band::Swir1),
            v(Band::Green) + v(Band::Swir1),
        ),
        IndexKind::Ndyi => clamped_ratio(
            v(Band::Green) - v(Band::Blue),
            v(Band::Green) + v(Band::Blue),
        ),
        IndexKind::Ndpi => {
            let blend = params.ndpi_alpha * v(Band::Red) + (1.0 - params.ndpi_alpha) * v(Band::Swir1);
            clamped_ratio(v(Band::Nir) - blend, v(Band::Nir) + blend)
        }
        IndexKind::Rendvi => clamped_ratio(v(Band::Nir) - v(Band::Re1), v(Band::Nir) + v(Band::Re1)),
        IndexKind::Re2 => get(Band::Re2),
        IndexKind::Mpdi => clamped_ratio(v(Band::Vv) - v(Band::Vh), v(Band::Vv) + v(Band::Vh)),
    }
}

/// Computes an index series over the grid of the index's sensor.
///
/// # Errors
/// Fails when a required band is absent from the set, the series are
/// empty, or band lengths disagree with the grid.
pub fn compute_index_series(
    kind: IndexKind,
    params: &IndexParams,
    set: &SeriesSet,
) -> Result<Vec<f32>> {
    let grid = set.grid(kind.sensor());
    if grid.count == 0 {
        return Err(CoreError::EmptyInput(format!(
            "{} grid has zero steps",
            kind
        )));
    }
    let mut sources: Vec<(Band, &[f32])> = Vec::new();
    for &band in kind.required_bands() {
        let series = set.band(band).ok_or_else(|| {
            CoreError::RejectedInput(format!("band {} required by {} is missing", band, kind))
        })?;
        if series.len() != grid.count {
            return Err(CoreError::DimensionMismatch {
                context: format!("band {} series vs {} grid", band, kind),
                expected: grid.count,
                got: series.len(),
            });
        }
        sources.push((band, series));
    }
    let out = (0..grid.count)
        .map(|k| {
            index_value(kind, params, |band| {
                sources
                    .iter()
                    .find(|(b, _)| *b == band)
                    .map(|(_, s)| s[k])
                    .unwrap_or(INVALID)
            })
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use std::collections::BTreeMap;

    fn value(kind: IndexKind, pairs: &[(Band, f32)]) -> f32 {
        index_value(kind, &IndexParams::default(), |band| {
            pairs
                .iter()
                .find(|(b, _)| *b == band)
                .map(|(_, v)| *v)
                .unwrap_or(INVALID)
        })
    }

    #[test]
    fn ndvi_matches_hand_computation() {
        let v = value(IndexKind::Ndvi, &[(Band::Nir, 0.5), (Band::Red, 0.3)]);
        assert!((v - 0.25).abs() < 1e-6);
    }

    #[test]
    fn evi_matches_hand_computation() {
        let v = value(
            IndexKind::Evi,
            &[(Band::Nir, 0.4), (Band::Red, 0.1), (Band::Blue, 0.05)],
        );
        assert!((v as f64 - 2.5 * 0.3 / 1.625).abs() < 1e-6);
    }

    #[test]
    fn equal_polarizations_give_zero_mpdi() {
        let v = value(IndexKind::Mpdi, &[(Band::Vv, 0.2), (Band::Vh, 0.2)]);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn ndpi_blends_red_and_swir() {
        let nir = 0.4;
        let red = 0.2;
        let swir = 0.3;
        let v = value(
            IndexKind::Ndpi,
            &[(Band::Nir, nir), (Band::Red, red), (Band::Swir1, swir)],
        ) as f64;
        let blend = 0.74 * red as f64 + 0.26 * swir as f64;
        let expected = (nir as f64 - blend) / (nir as f64 + blend);
        assert!((v - expected).abs() < 1e-6);
    }

    #[test]
    fn vanishing_denominator_is_invalid_not_an_error() {
        let v = value(IndexKind::Ndvi, &[(Band::Nir, 0.0), (Band::Red, 0.0)]);
        assert_eq!(v, INVALID);
    }

    #[test]
    fn invalid_input_propagates() {
        let v = value(IndexKind::Ndvi, &[(Band::Nir, INVALID), (Band::Red, 0.3)]);
        assert_eq!(v, INVALID);
    }

    #[test]
    fn normalized_indices_are_clamped() {
        let v = value(IndexKind::Ndvi, &[(Band::Nir, 1.0), (Band::Red, -0.4)]);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn re2_is_a_passthrough() {
        let v = value(IndexKind::Re2, &[(Band::Re2, 0.37)]);
        assert_eq!(v, 0.37);
    }

    #[test]
    fn series_follows_the_sensor_grid() {
        let set = SeriesSet {
            optical_grid: TimeGrid::new(100, 10, 3),
            radar_grid: TimeGrid::new(100, 12, 2),
            bands: BTreeMap::from([
                (Band::Nir, vec![0.5, INVALID, 0.6]),
                (Band::Red, vec![0.3, 0.3, 0.2]),
                (Band::Vv, vec![0.2, 0.3]),
                (Band::Vh, vec![0.1, 0.1]),
            ]),
        };
        let ndvi = compute_index_series(IndexKind::Ndvi, &IndexParams::default(), &set).unwrap();
        assert_eq!(ndvi.len(), 3);
        assert!((ndvi[0] - 0.25).abs() < 1e-6);
        assert_eq!(ndvi[1], INVALID);
        let mpdi = compute_index_series(IndexKind::Mpdi, &IndexParams::default(), &set).unwrap();
        assert_eq!(mpdi.len(), 2);
    }

    #[test]
    fn missing_band_is_rejected() {
        let set = SeriesSet {
            optical_grid: TimeGrid::new(100, 10, 2),
            radar_grid: TimeGrid::new(100, 12, 2),
            bands: BTreeMap::from([(Band::Nir, vec![0.5, 0.5])]),
        };
        assert!(matches!(
            compute_index_series(IndexKind::Ndvi, &IndexParams::default(), &set),
            Err(CoreError::RejectedInput(_))
        ));
    }

    #[test]
    fn index_names_round_trip_case_insensitively() {
        for kind in IndexKind::ALL {
            assert_eq!(IndexKind::from_name(kind.name()), Some(kind));
            assert_eq!(
                IndexKind::from_name(&kind.name().to_lowercase()),
                Some(kind)
            );
        }
        assert_eq!(IndexKind::from_name("XYZ"), None);
    }
}
