//! Fixed-length feature vectors for the classifiers.
//!
//! A sample's features are its gap-filled band series in canonical
//! band order, followed by the gap-filled series of each configured
//! spectral index. Gap filling interpolates between valid neighbors
//! and holds the edges, so a vector never contains the invalid
//! sentinel; a series with no valid observation at all contributes
//! zeros.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::index::{compute_index_series, IndexKind, IndexParams};
use crate::series::{interpolate_gaps, SeriesSet};

/// Which series go into the feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Indices appended after the raw bands, in this order.
    pub indices: Vec<IndexKind>,
    pub index_params: IndexParams,
}

impl Default for FeatureConfig {
    fn default() -> FeatureConfig {
        FeatureConfig {
            indices: vec![IndexKind::Ndvi, IndexKind::Lswi],
            index_params: IndexParams::default(),
        }
    }
}

impl FeatureConfig {
    /// Length of the vectors [`extract_features`] produces for series
    /// on these grids.
    pub fn feature_len(&self, set: &SeriesSet) -> usize {
        let bands: usize = set.bands.keys().map(|b| set.grid(b.sensor()).count).sum();
        let indices: usize = self
            .indices
            .iter()
            .map(|k| set.grid(k.sensor()).count)
            .sum();
        bands + indices
    }

    /// Human-readable name of each feature position, for reports.
    pub fn feature_names(&self, set: &SeriesSet) -> Vec<String> {
        let mut names = Vec::new();
        for &band in set.bands.keys() {
            for doy in set.grid(band.sensor()).doys() {
                names.push(format!("{}@{doy}", band.name()));
            }
        }
        for kind in &self.indices {
            for doy in set.grid(kind.sensor()).doys() {
                names.push(format!("{}@{doy}", kind.name()));
            }
        }
        names
    }
}

fn filled_or_zeros(values: &[f32], context: &str) -> Vec<f32> {
    match interpolate_gaps(values, context) {
        Ok(filled) => filled,
        Err(_) => vec![0.0; values.len()],
    }
}

/// Builds the feature vector for one sample's series.
pub fn extract_features(set: &SeriesSet, config: &FeatureConfig) -> Result<Vec<f32>> {
    let mut features = Vec::with_capacity(config.feature_len(set));
    for (&band, values) in &set.bands {
        features.extend(filled_or_zeros(values, band.name()));
    }
    for &kind in &config.indices {
        let series = compute_index_series(kind, &config.index_params, set)?;
        features.extend(filled_or_zeros(&series, kind.name()));
    }
    Ok(features)
}

/// Builds the feature matrix for a whole sample list, enforcing one
/// common length.
pub fn extract_feature_matrix(
    samples: &[crate::sample::Sample],
    config: &FeatureConfig,
) -> Result<Vec<Vec<f32>>> {
    let mut rows = Vec::with_capacity(samples.len());
    let mut expected = None;
    for sample in samples {
        let row = extract_features(&sample.series, config)?;
        match expected {
            None => expected = Some(row.len()),
            Some(n) if n != row.len() => {
                return Err(CoreError::DimensionMismatch {
                    context: "feature vector length across samples".into(),
                    expected: n,
                    got: row.len(),
                })
            }
            _ => {}
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::Band;
    use crate::grid::TimeGrid;
    use crate::series::INVALID;
    use std::collections::BTreeMap;

    fn series() -> SeriesSet {
        SeriesSet {
            optical_grid: TimeGrid::new(100, 10, 4),
            radar_grid: TimeGrid::new(100, 12, 2),
            bands: BTreeMap::from([
                (Band::Red, vec![0.1, INVALID, 0.3, 0.3]),
                (Band::Nir, vec![0.5, 0.5, INVALID, 0.7]),
                (Band::Vv, vec![-11.0, -9.0]),
            ]),
        }
    }

    #[test]
    fn features_concatenate_bands_then_indices() {
        let config = FeatureConfig {
            indices: vec![IndexKind::Ndvi],
            index_params: IndexParams::default(),
        };
        let set = series();
        let features = extract_features(&set, &config).unwrap();
        assert_eq!(features.len(), config.feature_len(&set));
        assert_eq!(features.len(), 4 + 4 + 2 + 4);
        // Bands iterate in canonical order: Red before Nir before Vv.
        assert_eq!(features[0], 0.1);
        assert!((features[1] - 0.2).abs() < 1e-6);
        assert_eq!(features[4], 0.5);
        assert_eq!(features[8], -11.0);
        // Indices are computed on the raw series and gap-filled
        // afterwards. Step 1 is invalid in Red, step 2 in Nir.
        let ndvi0 = (0.5 - 0.1) / (0.5 + 0.1);
        assert!((features[10] - ndvi0).abs() < 1e-6);
        let ndvi3 = (0.7 - 0.3) / (0.7 + 0.3);
        assert!((features[13] - ndvi3).abs() < 1e-6);
        // The two interior gaps interpolate between those ends.
        assert!((features[11] - (ndvi0 + (ndvi3 - ndvi0) / 3.0)).abs() < 1e-6);
        assert!(features.iter().all(|&v| v != INVALID));
    }

    #[test]
    fn all_invalid_series_contribute_zeros() {
        let mut set = series();
        set.bands.insert(Band::Vv, vec![INVALID, INVALID]);
        let config = FeatureConfig {
            indices: vec![],
            index_params: IndexParams::default(),
        };
        let features = extract_features(&set, &config).unwrap();
        assert_eq!(&features[8..10], &[0.0, 0.0]);
    }

    #[test]
    fn names_line_up_with_positions() {
        let config = FeatureConfig {
            indices: vec![IndexKind::Ndvi],
            index_params: IndexParams::default(),
        };
        let set = series();
        let names = config.feature_names(&set);
        assert_eq!(names.len(), config.feature_len(&set));
        assert_eq!(names[0], "red@100");
        assert_eq!(names[8], "vv@100");
        assert_eq!(names[10], "NDVI@100");
    }

    #[test]
    fn missing_band_for_an_index_is_an_error() {
        let mut set = series();
        set.bands.remove(&Band::Red);
        let config = FeatureConfig {
            indices: vec![IndexKind::Ndvi],
            index_params: IndexParams::default(),
        };
        assert!(extract_features(&set, &config).is_err());
    }
}
