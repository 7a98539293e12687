//! Labeled training samples and the sampling policies that build them.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grid::TimeGrid;
use crate::morphology::BoolRaster;
use crate::scene::{SceneStack, NO_LABEL};
use crate::series::SeriesSet;
use crate::stats::derive_seed;

/// Where a sample's label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Labeled by a decision rule on a strong pixel.
    Rule,
    /// Injected from ground-truth reference data.
    Injected,
    /// Synthesized by the mixed-pixel model.
    Mixture,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Rule => "rule",
            Provenance::Injected => "injected",
            Provenance::Mixture => "mixture",
        }
    }

    pub fn from_name(name: &str) -> Option<Provenance> {
        match name {
            "rule" => Some(Provenance::Rule),
            "injected" => Some(Provenance::Injected),
            "mixture" => Some(Provenance::Mixture),
            _ => None,
        }
    }
}

/// One labeled training sample. Synthesized samples have no source
/// pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub location: Option<(u32, u32)>,
    pub class_id: u16,
    pub provenance: Provenance,
    pub series: SeriesSet,
}

/// A set of samples sharing one class table and one pair of grids.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub classes: Vec<String>,
    pub optical_grid: TimeGrid,
    pub radar_grid: TimeGrid,
    pub samples: Vec<Sample>,
}

impl SampleSet {
    pub fn new(classes: Vec<String>, optical_grid: TimeGrid, radar_grid: TimeGrid) -> SampleSet {
        SampleSet {
            classes,
            optical_grid,
            radar_grid,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample counts per class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.classes.len()];
        for s in &self.samples {
            counts[s.class_id as usize] += 1;
        }
        counts
    }

    /// Appends another set's samples; class tables and grids must
    /// match.
    pub fn merge(&mut self, other: SampleSet) -> Result<()> {
        if other.classes != self.classes {
            return Err(CoreError::RejectedInput(
                "cannot merge sample sets with different class tables".into(),
            ));
        }
        if other.optical_grid != self.optical_grid || other.radar_grid != self.radar_grid {
            return Err(CoreError::RejectedInput(
                "cannot merge sample sets with different time grids".into(),
            ));
        }
        self.samples.extend(other.samples);
        Ok(())
    }

    pub fn class_id(&self, name: &str) -> Result<u16> {
        self.classes
            .iter()
            .position(|c| c == name)
            .map(|i| i as u16)
            .ok_or_else(|| CoreError::UnknownClass(name.to_string()))
    }
}

/// Draws `k` distinct elements from `items` uniformly, deterministic
/// in the RNG, returning them in their original relative order.
fn choose_k<T: Copy>(items: &[T], k: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    if k >= items.len() {
        return items.to_vec();
    }
    let mut indices: Vec<usize> = (0..items.len()).collect();
    for i in 0..k {
        let j = i + rng.gen_range(0..indices.len() - i);
        indices.swap(i, j);
    }
    let mut chosen = indices[..k].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| items[i]).collect()
}

/// Per-class sampling quotas and the warnings produced while filling
/// them.
#[derive(Debug, Clone, Default)]
pub struct QuotaReport {
    /// Classes whose labeled population was smaller than the quota,
    /// with (available, requested).
    pub shortfalls: Vec<(String, usize, usize)>,
}

/// Draws up to `quota` samples per class from a label raster, without
/// replacement, uniformly at random. Classes with fewer labeled
/// pixels than their quota contribute everything they have and are
/// reported as shortfalls.
pub fn sample_by_quota(
    scene: &SceneStack,
    labels: &[u16],
    quotas: &[(String, usize)],
    seed: u64,
) -> Result<(SampleSet, QuotaReport)> {
    if labels.len() != scene.n_pixels() {
        return Err(CoreError::DimensionMismatch {
            context: "label raster vs scene".into(),
            expected: scene.n_pixels(),
            got: labels.len(),
        });
    }
    let classes: Vec<String> = quotas.iter().map(|(c, _)| c.clone()).collect();
    let mut set = SampleSet::new(classes.clone(), scene.optical_grid, scene.radar_grid);
    let mut report = QuotaReport::default();
    for (class_id, (class, quota)) in quotas.iter().enumerate() {
        let scene_class = scene.class_id(class)?;
        let coords: Vec<(u32, u32)> = (0..scene.height as u32)
            .flat_map(|y| (0..scene.width as u32).map(move |x| (x, y)))
            .filter(|&(x, y)| labels[y as usize * scene.width + x as usize] == scene_class)
            .collect();
        if coords.len() < *quota {
            report
                .shortfalls
                .push((class.clone(), coords.len(), *quota));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, class_id as u64));
        for (x, y) in choose_k(&coords, *quota, &mut rng) {
            set.samples.push(Sample {
                location: Some((x, y)),
                class_id: class_id as u16,
                provenance: Provenance::Rule,
                series: scene.pixel_series(x as usize, y as usize),
            });
        }
    }
    Ok((set, report))
}

/// Draws a background class of `total` samples split evenly across the
/// scene's strata, restricted to strong pixels. Strata with too few
/// strong pixels contribute what they have; the residual quota
/// redistributes over the remaining strata in stratum order.
pub fn sample_other_stratified(
    scene: &SceneStack,
    strong: &BoolRaster,
    class_id: u16,
    total: usize,
    seed: u64,
) -> Result<Vec<(u32, u32)>> {
    let strata_map = scene.strata_map.as_ref().ok_or_else(|| {
        CoreError::RejectedInput("scene carries no stratum raster for background sampling".into())
    })?;
    if scene.strata.is_empty() {
        return Err(CoreError::RejectedInput(
            "scene declares no strata for background sampling".into(),
        ));
    }
    let mut pools: Vec<Vec<(u32, u32)>> = vec![Vec::new(); scene.strata.len()];
    for y in 0..scene.height {
        for x in 0..scene.width {
            if !strong.get(x, y) {
                continue;
            }
            let s = strata_map[y * scene.width + x];
            if s != NO_LABEL {
                pools[s as usize].push((x as u32, y as u32));
            }
        }
    }
    let mut picked: Vec<(u32, u32)> = Vec::with_capacity(total);
    let mut remaining = total;
    let mut open: Vec<usize> = (0..pools.len()).filter(|&s| !pools[s].is_empty()).collect();
    // Even split, re-spreading the shortfall of exhausted strata.
    while remaining > 0 && !open.is_empty() {
        let share = remaining.div_ceil(open.len());
        let mut next_open = Vec::new();
        for &s in &open {
            let take = share.min(remaining).min(pools[s].len());
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(seed, (class_id as u64) << 32 | s as u64));
            let chosen = choose_k(&pools[s], take, &mut rng);
            for c in &chosen {
                let pos = pools[s].iter().position(|p| p == c).unwrap();
                pools[s].remove(pos);
            }
            picked.extend(chosen);
            remaining -= take;
            if !pools[s].is_empty() {
                next_open.push(s);
            }
            if remaining == 0 {
                break;
            }
        }
        if next_open == open && remaining > 0 {
            // No stratum accepted more; avoid spinning.
            break;
        }
        open = next_open;
    }
    picked.sort_unstable_by_key(|&(x, y)| (y, x));
    Ok(picked)
}

/// Injects samples drawn from the ground-truth raster: up to
/// `per_class` per class, uniform over that class's truth pixels.
pub fn inject_truth_samples(
    scene: &SceneStack,
    set: &mut SampleSet,
    per_class: usize,
    seed: u64,
) -> Result<QuotaReport> {
    let truth = scene.labels.as_ref().ok_or_else(|| {
        CoreError::RejectedInput("scene carries no ground-truth labels to inject from".into())
    })?;
    let mut report = QuotaReport::default();
    for (class_id, class) in set.classes.clone().iter().enumerate() {
        let scene_class = match scene.class_id(class) {
            Ok(id) => id,
            // Classes absent from the scene's table (e.g. synthetic
            // mixtures) have no truth pixels to inject.
            Err(_) => continue,
        };
        let coords: Vec<(u32, u32)> = (0..scene.height as u32)
            .flat_map(|y| (0..scene.width as u32).map(move |x| (x, y)))
            .filter(|&(x, y)| truth[y as usize * scene.width + x as usize] == scene_class)
            .collect();
        if coords.len() < per_class {
            report
                .shortfalls
                .push((class.clone(), coords.len(), per_class));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x1000 + class_id as u64));
        for (x, y) in choose_k(&coords, per_class, &mut rng) {
            set.samples.push(Sample {
                location: Some((x, y)),
                class_id: class_id as u16,
                provenance: Provenance::Injected,
                series: scene.pixel_series(x as usize, y as usize),
            });
        }
    }
    Ok(report)
}

/// Splits a sample set into train and holdout parts per class:
/// `train_ratio` of each class (rounded down, at least one sample in
/// each part when the class has two or more) goes to training.
pub fn split_train_holdout(
    set: &SampleSet,
    train_ratio: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for class_id in 0..set.classes.len() {
        let members: Vec<usize> = (0..set.samples.len())
            .filter(|&i| set.samples[i].class_id == class_id as u16)
            .collect();
        if members.is_empty() {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x2000 + class_id as u64));
        let mut shuffled: Vec<usize> = members.clone();
        for i in 0..shuffled.len() {
            let j = i + rng.gen_range(0..shuffled.len() - i);
            shuffled.swap(i, j);
        }
        let mut n_train = (members.len() as f64 * train_ratio).floor() as usize;
        if members.len() >= 2 {
            n_train = n_train.clamp(1, members.len() - 1);
        } else {
            n_train = members.len();
        }
        train.extend_from_slice(&shuffled[..n_train]);
        holdout.extend_from_slice(&shuffled[n_train..]);
    }
    train.sort_unstable();
    holdout.sort_unstable();
    (train, holdout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::Band;

    fn labeled_scene(width: usize, height: usize) -> (SceneStack, Vec<u16>) {
        let mut scene = SceneStack::new_empty(
            width,
            height,
            TimeGrid::new(100, 10, 2),
            TimeGrid::new(100, 12, 2),
            &[Band::Nir, Band::Vv],
        );
        scene.classes = vec!["a".into(), "b".into()];
        for i in 0..scene.optical_valid.len() {
            scene.optical_valid[i] = 1;
            scene.bands.get_mut(&Band::Nir).unwrap()[i] = 0.5;
        }
        // Left half labeled class a, right half class b.
        let labels: Vec<u16> = (0..height)
            .flat_map(|_| (0..width).map(|x| if x < width / 2 { 0 } else { 1 }))
            .collect();
        (scene, labels)
    }

    #[test]
    fn quota_sampling_honors_quotas_and_reports_shortfalls() {
        let (scene, labels) = labeled_scene(10, 10);
        let quotas = vec![("a".to_string(), 20), ("b".to_string(), 100)];
        let (set, report) = sample_by_quota(&scene, &labels, &quotas, 7).unwrap();
        let counts = set.class_counts();
        assert_eq!(counts, vec![20, 50]);
        assert_eq!(report.shortfalls.len(), 1);
        assert_eq!(report.shortfalls[0], ("b".to_string(), 50, 100));
    }

    #[test]
    fn quota_sampling_is_deterministic_and_seed_sensitive() {
        let (scene, labels) = labeled_scene(10, 10);
        let quotas = vec![("a".to_string(), 10), ("b".to_string(), 10)];
        let (s1, _) = sample_by_quota(&scene, &labels, &quotas, 7).unwrap();
        let (s2, _) = sample_by_quota(&scene, &labels, &quotas, 7).unwrap();
        let (s3, _) = sample_by_quota(&scene, &labels, &quotas, 8).unwrap();
        let locs = |s: &SampleSet| s.samples.iter().map(|x| x.location).collect::<Vec<_>>();
        assert_eq!(locs(&s1), locs(&s2));
        assert_ne!(locs(&s1), locs(&s3));
    }

    #[test]
    fn samples_are_drawn_without_replacement() {
        let (scene, labels) = labeled_scene(10, 10);
        let quotas = vec![("a".to_string(), 50)];
        let (set, _) = sample_by_quota(&scene, &labels, &quotas, 7).unwrap();
        let mut locs: Vec<_> = set.samples.iter().map(|s| s.location).collect();
        let before = locs.len();
        locs.sort_unstable();
        locs.dedup();
        assert_eq!(locs.len(), before);
    }

    #[test]
    fn stratified_sampling_splits_evenly() {
        let (mut scene, _) = labeled_scene(10, 10);
        scene.strata = vec!["s0".into(), "s1".into()];
        // Top half stratum 0, bottom half stratum 1.
        scene.strata_map = Some(
            (0..100)
                .map(|i| if i < 50 { 0u16 } else { 1u16 })
                .collect(),
        );
        let strong = BoolRaster::filled(10, 10, true);
        let picked = sample_other_stratified(&scene, &strong, 9, 40, 11).unwrap();
        assert_eq!(picked.len(), 40);
        let top = picked.iter().filter(|&&(_, y)| y < 5).count();
        assert_eq!(top, 20);
    }

    #[test]
    fn stratified_sampling_redistributes_shortfalls() {
        let (mut scene, _) = labeled_scene(10, 10);
        scene.strata = vec!["tiny".into(), "big".into()];
        // Stratum 0 has only 3 pixels.
        scene.strata_map = Some((0..100).map(|i| if i < 3 { 0u16 } else { 1u16 }).collect());
        let strong = BoolRaster::filled(10, 10, true);
        let picked = sample_other_stratified(&scene, &strong, 9, 40, 11).unwrap();
        assert_eq!(picked.len(), 40);
    }

    #[test]
    fn injection_draws_from_truth() {
        let (mut scene, labels) = labeled_scene(10, 10);
        scene.labels = Some(labels);
        let mut set = SampleSet::new(
            vec!["a".into(), "b".into()],
            scene.optical_grid,
            scene.radar_grid,
        );
        let report = inject_truth_samples(&scene, &mut set, 5, 3).unwrap();
        assert!(report.shortfalls.is_empty());
        assert_eq!(set.len(), 10);
        assert!(set
            .samples
            .iter()
            .all(|s| s.provenance == Provenance::Injected));
    }

    #[test]
    fn split_ratio_partitions_each_class() {
        let (scene, labels) = labeled_scene(10, 10);
        let quotas = vec![("a".to_string(), 50), ("b".to_string(), 50)];
        let (set, _) = sample_by_quota(&scene, &labels, &quotas, 7).unwrap();
        let (train, holdout) = split_train_holdout(&set, 0.7, 5);
        assert_eq!(train.len() + holdout.len(), set.len());
        let train_a = train
            .iter()
            .filter(|&&i| set.samples[i].class_id == 0)
            .count();
        assert_eq!(train_a, 35);
        // Disjoint.
        let mut all: Vec<usize> = train.iter().chain(&holdout).copied().collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), set.len());
    }
}
