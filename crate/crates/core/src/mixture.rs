//! Mixed-pixel synthesis for strip intercropping.
//!
//! Two crops planted in alternating row strips narrower than a pixel
//! never produce pure pixels, so training samples for the mixture
//! class are synthesized instead: a geometric-optical model decides,
//! date by date, how the pixel area splits between the tall crop, the
//! sunlit short crop, and the shadow the tall crop casts across the
//! short rows, and a linear mixing model combines endmember spectra
//! with those fractions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::band::Sensor;
use crate::error::{CoreError, Result};
use crate::sample::{Provenance, Sample, SampleSet};
use crate::series::{SeriesSet, INVALID};
use crate::stats::derive_seed;

/// Observer position for solar geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolarConfig {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub utc_offset_hours: f64,
}

impl Default for SolarConfig {
    fn default() -> SolarConfig {
        SolarConfig {
            latitude_deg: 37.0,
            longitude_deg: 118.0,
            utc_offset_hours: 8.0,
        }
    }
}

/// Solar elevation in degrees at the given day of year and local
/// clock hour, via the NOAA low-accuracy solar position algorithm.
pub fn solar_elevation_deg(config: &SolarConfig, doy: i32, hour: f64) -> f64 {
    let gamma = 2.0 * std::f64::consts::PI / 365.0 * (doy as f64 - 1.0 + (hour - 12.0) / 24.0);
    let eqtime = 229.18
        * (0.000075 + 0.001868 * gamma.cos()
            - 0.032077 * gamma.sin()
            - 0.014615 * (2.0 * gamma).cos()
            - 0.040849 * (2.0 * gamma).sin());
    let decl = 0.006918 - 0.399912 * gamma.cos() + 0.070257 * gamma.sin()
        - 0.006758 * (2.0 * gamma).cos()
        + 0.000907 * (2.0 * gamma).sin()
        - 0.002697 * (3.0 * gamma).cos()
        + 0.00148 * (3.0 * gamma).sin();
    let time_offset = eqtime + 4.0 * config.longitude_deg - 60.0 * config.utc_offset_hours;
    let tst = hour * 60.0 + time_offset;
    let ha = (tst / 4.0 - 180.0).to_radians();
    let lat = config.latitude_deg.to_radians();
    let cos_zenith = lat.sin() * decl.sin() + lat.cos() * decl.cos() * ha.cos();
    90.0 - cos_zenith.clamp(-1.0, 1.0).acos().to_degrees()
}

/// One linear piece of a crop height curve, in meters:
/// `h(t) = base + slope * (t - t_start)` for `t` in
/// `[t_start, t_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeightSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub slope: f64,
    pub base: f64,
}

/// Piecewise-linear crop height over the model's time axis. Before
/// the first segment the crop has no height; past the last segment
/// the height holds its final value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeightModel {
    pub segments: Vec<HeightSegment>,
}

impl HeightModel {
    /// Summer maize: 0.08 m/day to 3.2 m over the first forty days,
    /// then 0.12 m/day.
    pub fn maize() -> HeightModel {
        HeightModel {
            segments: vec![
                HeightSegment {
                    t_start: 183.0,
                    t_end: 223.0,
                    slope: 0.08,
                    base: 0.0,
                },
                HeightSegment {
                    t_start: 223.0,
                    t_end: 283.0,
                    slope: 0.12,
                    base: 3.2,
                },
            ],
        }
    }

    /// Soybean: half the early growth rate of maize, same late rate,
    /// so the height gap is fixed at 1.6 m once both accelerate.
    pub fn soybean() -> HeightModel {
        HeightModel {
            segments: vec![
                HeightSegment {
                    t_start: 183.0,
                    t_end: 223.0,
                    slope: 0.04,
                    base: 0.0,
                },
                HeightSegment {
                    t_start: 223.0,
                    t_end: 283.0,
                    slope: 0.12,
                    base: 1.6,
                },
            ],
        }
    }

    pub fn height_at(&self, t: f64) -> f64 {
        let Some(first) = self.segments.first() else {
            return 0.0;
        };
        if t < first.t_start {
            return 0.0;
        }
        for seg in &self.segments {
            if t < seg.t_end {
                return seg.base + seg.slope * (t - seg.t_start);
            }
        }
        let last = self.segments.last().unwrap();
        last.base + last.slope * (last.t_end - last.t_start)
    }
}

/// Counts how many short-crop rows the tall crop shades. Row `i`
/// stands `i * row_spacing` meters from the tall row and is shaded
/// when the tall crop's shadow is still higher than the short crop
/// there: `h_tall - i * row_spacing * tan(elevation) > h_short`.
pub fn shaded_rows(
    h_tall: f64,
    h_short: f64,
    row_spacing_m: f64,
    n_short: usize,
    elevation_deg: f64,
) -> usize {
    if elevation_deg <= 0.0 {
        return n_short;
    }
    if elevation_deg >= 90.0 {
        return 0;
    }
    let tan_e = elevation_deg.to_radians().tan();
    (1..=n_short)
        .filter(|&i| h_tall - i as f64 * row_spacing_m * tan_e > h_short)
        .count()
}

/// Row layout of the intercrop strip pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntercropPattern {
    pub tall_rows: usize,
    pub short_rows: usize,
    pub row_spacing_m: f64,
}

impl Default for IntercropPattern {
    fn default() -> IntercropPattern {
        IntercropPattern {
            tall_rows: 2,
            short_rows: 3,
            row_spacing_m: 0.6,
        }
    }
}

/// Area fractions of one mixed pixel. Always sums to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureFractions {
    pub tall: f64,
    pub short: f64,
    pub shadow: f64,
}

/// The full geometric-optical model for one intercrop pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntercropModel {
    pub pattern: IntercropPattern,
    pub tall_height: HeightModel,
    pub short_height: HeightModel,
    pub solar: SolarConfig,
    /// Local clock hour of the satellite overpass.
    pub overpass_hour: f64,
    /// Offset from calendar day of year onto the height curves' time
    /// axis.
    pub t_axis_offset: i32,
    /// Optical reflectance of the fully shaded endmember.
    pub shadow_reflectance: f64,
}

impl Default for IntercropModel {
    fn default() -> IntercropModel {
        IntercropModel {
            pattern: IntercropPattern::default(),
            tall_height: HeightModel::maize(),
            short_height: HeightModel::soybean(),
            solar: SolarConfig::default(),
            overpass_hour: 11.0,
            t_axis_offset: 30,
            shadow_reflectance: 0.05,
        }
    }
}

impl IntercropModel {
    /// Area fractions on the given calendar day of year. Each row
    /// contributes an equal share of the pixel; shaded short-crop
    /// rows move their share from the short crop to shadow.
    pub fn fractions_at(&self, doy: i32) -> MixtureFractions {
        let t = doy + self.t_axis_offset;
        let h_tall = self.tall_height.height_at(t as f64);
        let h_short = self.short_height.height_at(t as f64);
        let elevation = solar_elevation_deg(&self.solar, t, self.overpass_hour);
        let shaded = shaded_rows(
            h_tall,
            h_short,
            self.pattern.row_spacing_m,
            self.pattern.short_rows,
            elevation,
        );
        let row = 1.0 / (self.pattern.tall_rows + self.pattern.short_rows) as f64;
        MixtureFractions {
            tall: self.pattern.tall_rows as f64 * row,
            short: (self.pattern.short_rows - shaded) as f64 * row,
            shadow: shaded as f64 * row,
        }
    }
}

fn check_same_shape(a: &SeriesSet, b: &SeriesSet) -> Result<()> {
    if a.optical_grid != b.optical_grid || a.radar_grid != b.radar_grid {
        return Err(CoreError::RejectedInput(
            "mixture endmembers lie on different time grids".into(),
        ));
    }
    if a.bands.keys().ne(b.bands.keys()) {
        return Err(CoreError::RejectedInput(
            "mixture endmembers carry different band sets".into(),
        ));
    }
    Ok(())
}

/// Mixes two endmember series with per-step fractions from
/// `fractions_of`. Optical bands mix tall, sunlit short, and a flat
/// shadow spectrum; radar bands fold the shadow share back into the
/// short crop, since the sensor brings its own illumination. A mixed
/// step is valid only where both endmembers are.
fn mix_series(
    tall: &SeriesSet,
    short: &SeriesSet,
    shadow_reflectance: f64,
    fractions_of: impl Fn(i32) -> MixtureFractions,
    noise_sd: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SeriesSet> {
    check_same_shape(tall, short)?;
    let noise = Normal::new(0.0, noise_sd)
        .map_err(|_| CoreError::RejectedInput(format!("bad mixing noise sd {noise_sd}")))?;
    let mut bands = BTreeMap::new();
    for (&band, tall_values) in &tall.bands {
        let short_values = &short.bands[&band];
        let grid = tall.grid(band.sensor());
        let mut mixed = Vec::with_capacity(tall_values.len());
        for (k, (&xt, &xs)) in tall_values.iter().zip(short_values).enumerate() {
            if xt == INVALID || xs == INVALID {
                mixed.push(INVALID);
                continue;
            }
            let f = fractions_of(grid.doy_at(k));
            let value = match band.sensor() {
                Sensor::Optical => {
                    f.tall * xt as f64 + f.short * xs as f64 + f.shadow * shadow_reflectance
                }
                Sensor::Radar => f.tall * xt as f64 + (f.short + f.shadow) * xs as f64,
            };
            mixed.push((value + noise.sample(rng)) as f32);
        }
        bands.insert(band, mixed);
    }
    Ok(SeriesSet {
        optical_grid: tall.optical_grid,
        radar_grid: tall.radar_grid,
        bands,
    })
}

/// Mixes one tall-crop and one short-crop series under the
/// geometric-optical model.
pub fn mix_intercrop(
    tall: &SeriesSet,
    short: &SeriesSet,
    model: &IntercropModel,
    noise_sd: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SeriesSet> {
    mix_series(
        tall,
        short,
        model.shadow_reflectance,
        |doy| model.fractions_at(doy),
        noise_sd,
        rng,
    )
}

/// Mixes two series with fixed, date-independent fractions and no
/// shadow endmember.
pub fn mix_fixed(
    first: &SeriesSet,
    second: &SeriesSet,
    first_fraction: f64,
    noise_sd: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SeriesSet> {
    if !(0.0..=1.0).contains(&first_fraction) {
        return Err(CoreError::RejectedInput(format!(
            "mixture fraction {first_fraction} is outside [0, 1]"
        )));
    }
    let fractions = MixtureFractions {
        tall: first_fraction,
        short: 1.0 - first_fraction,
        shadow: 0.0,
    };
    mix_series(first, second, 0.0, |_| fractions, noise_sd, rng)
}

/// How to combine two endmember classes into a mixture class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MixturePolicy {
    /// Strip intercropping with shadowing, e.g. maize over soybean.
    /// The first endmember class is the tall crop.
    Intercrop {
        #[serde(default)]
        model: IntercropModel,
    },
    /// Fixed area split with no shadow, e.g. orchard rows with maize
    /// planted between them.
    Fixed { first_fraction: f64 },
}

/// Synthesizes `count` mixture samples by pairing endmember samples
/// of the two source classes, cycling through each class's pool in
/// order and drawing fresh noise per pair. The mixture class must
/// already be in the set's class table.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_mixture_samples(
    set: &SampleSet,
    first_class: &str,
    second_class: &str,
    mixture_class: &str,
    policy: &MixturePolicy,
    count: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<Vec<Sample>> {
    let first_id = set.class_id(first_class)?;
    let second_id = set.class_id(second_class)?;
    let mixture_id = set.class_id(mixture_class)?;
    let firsts: Vec<&Sample> = set
        .samples
        .iter()
        .filter(|s| s.class_id == first_id)
        .collect();
    let seconds: Vec<&Sample> = set
        .samples
        .iter()
        .filter(|s| s.class_id == second_id)
        .collect();
    if firsts.is_empty() || seconds.is_empty() {
        return Err(CoreError::EmptyInput(format!(
            "mixture synthesis needs samples of both {first_class} and {second_class}"
        )));
    }
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        let a = &firsts[i % firsts.len()].series;
        let b = &seconds[i % seconds.len()].series;
        let series = match policy {
            MixturePolicy::Intercrop { model } => mix_intercrop(a, b, model, noise_sd, &mut rng)?,
            MixturePolicy::Fixed { first_fraction } => {
                mix_fixed(a, b, *first_fraction, noise_sd, &mut rng)?
            }
        };
        out.push(Sample {
            location: None,
            class_id: mixture_id,
            provenance: Provenance::Mixture,
            series,
        });
    }
    Ok(out)
}
