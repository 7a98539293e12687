//! Feature weakening: degrading strong samples' time series until
//! their gap statistics match the population they must generalize to.
//!
//! Strong pixels are selected for dense series, so a model trained on
//! them directly would meet a density at prediction time it never saw
//! in training. Weakening removes observations from each training
//! sample so the per-sample valid-count distribution matches a target
//! histogram, typically the whole scene's.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::band::Sensor;
use crate::error::{CoreError, Result};
use crate::sample::SampleSet;
use crate::scene::SceneStack;
use crate::stats::derive_seed;

/// Target distribution of per-sample valid-step counts. Bin `k` is
/// the probability of exactly `k` valid steps; the vector spans
/// `0..=steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetHistogram {
    pub bins: Vec<f64>,
}

impl TargetHistogram {
    /// Normalizes raw counts into a distribution.
    pub fn from_counts(counts: &[usize]) -> Result<TargetHistogram> {
        let total: usize = counts.iter().sum();
        if counts.is_empty() || total == 0 {
            return Err(CoreError::EmptyInput(
                "target histogram has no mass".into(),
            ));
        }
        Ok(TargetHistogram {
            bins: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        })
    }

    /// Normalizes raw nonnegative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<TargetHistogram> {
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(CoreError::RejectedInput(
                "target histogram weights must be nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if weights.is_empty() || total <= 0.0 {
            return Err(CoreError::EmptyInput(
                "target histogram has no mass".into(),
            ));
        }
        Ok(TargetHistogram {
            bins: weights.iter().map(|&w| w / total).collect(),
        })
    }

    /// The scene's own valid-count distribution for one sensor.
    pub fn from_scene(scene: &SceneStack, sensor: Sensor) -> Result<TargetHistogram> {
        TargetHistogram::from_counts(&scene.valid_count_histogram(sensor))
    }

    /// Checks the histogram covers counts `0..=steps`.
    pub fn check_steps(&self, steps: usize) -> Result<()> {
        if self.bins.len() != steps + 1 {
            return Err(CoreError::DimensionMismatch {
                context: "target histogram bins vs grid steps + 1".into(),
                expected: steps + 1,
                got: self.bins.len(),
            });
        }
        Ok(())
    }

    /// Draws a valid-count from the distribution by inverse CDF.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let total: f64 = self.bins.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        for (k, &p) in self.bins.iter().enumerate() {
            u -= p;
            if u < 0.0 {
                return k;
            }
        }
        self.bins.len() - 1
    }
}

/// What weakening did to a sample set.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct WeakenReport {
    /// Histogram of valid counts after weakening.
    pub achieved: Vec<usize>,
    /// Histogram of the drawn targets.
    pub requested: Vec<usize>,
    /// Samples left untouched because they already had no more valid
    /// steps than their drawn target.
    pub kept_sparse: usize,
    /// Samples whose weakening removed every valid step.
    pub degenerate: usize,
}

fn weaken_one(
    sample: &mut crate::sample::Sample,
    sensor: Sensor,
    target_count: usize,
    rng: &mut ChaCha8Rng,
) -> (usize, bool) {
    let valid = sample.series.valid_steps(sensor);
    let n = valid.len();
    if n <= target_count {
        return (n, true);
    }
    // Choose which valid steps to keep; the rest go invalid.
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..target_count.min(n) {
        let j = i + rng.gen_range(0..n - i);
        order.swap(i, j);
    }
    let removed: Vec<usize> = order[target_count..].iter().map(|&i| valid[i]).collect();
    sample.series.invalidate_steps(sensor, &removed);
    (target_count, false)
}

/// Weakens every sample toward a valid-count drawn per sample from
/// the target histogram. Samples already at or below their drawn
/// count stay unchanged. Each sample uses an RNG seeded from the
/// master seed and its position, so results do not depend on
/// processing order.
pub fn weaken_to_histogram(
    set: &mut SampleSet,
    sensor: Sensor,
    target: &TargetHistogram,
    seed: u64,
) -> Result<WeakenReport> {
    let steps = match sensor {
        Sensor::Optical => set.optical_grid.count,
        Sensor::Radar => set.radar_grid.count,
    };
    target.check_steps(steps)?;
    let mut report = WeakenReport {
        achieved: vec![0; steps + 1],
        requested: vec![0; steps + 1],
        ..WeakenReport::default()
    };
    for (i, sample) in set.samples.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        let k = target.sample(&mut rng);
        report.requested[k] += 1;
        let (achieved, kept) = weaken_one(sample, sensor, k, &mut rng);
        report.achieved[achieved] += 1;
        if kept {
            report.kept_sparse += 1;
        }
        if achieved == 0 {
            report.degenerate += 1;
        }
    }
    Ok(report)
}

/// Weakens every sample by removing a fixed fraction of its valid
/// steps (rounded down). A fraction of 0 leaves the set untouched; a
/// fraction of 1 empties every series, which the report flags as
/// degenerate.
pub fn weaken_by_fraction(
    set: &mut SampleSet,
    sensor: Sensor,
    fraction: f64,
    seed: u64,
) -> Result<WeakenReport> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(CoreError::RejectedInput(format!(
            "weakening fraction {fraction} is outside [0, 1]"
        )));
    }
    let steps = match sensor {
        Sensor::Optical => set.optical_grid.count,
        Sensor::Radar => set.radar_grid.count,
    };
    let mut report = WeakenReport {
        achieved: vec![0; steps + 1],
        requested: vec![0; steps + 1],
        ..WeakenReport::default()
    };
    for (i, sample) in set.samples.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        let n = sample.series.valid_count(sensor);
        let remove = (fraction * n as f64).floor() as usize;
        let k = n - remove;
        report.requested[k] += 1;
        let (achieved, kept) = weaken_one(sample, sensor, k, &mut rng);
        report.achieved[achieved] += 1;
        if kept {
            report.kept_sparse += 1;
        }
        if achieved == 0 {
            report.degenerate += 1;
        }
    }
    Ok(report)
}
