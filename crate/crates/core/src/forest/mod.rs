//! Random forests, the tree-count sweep, and positive-unlabeled
//! voting ensembles.

pub mod pul;
pub mod sweep;
pub mod tree;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::features::{extract_feature_matrix, extract_features, FeatureConfig};
use crate::sample::SampleSet;
use crate::scene::SceneStack;
use crate::stats::derive_seed;
use tree::{DecisionTree, TreeParams};

/// Forest hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> ForestParams {
        ForestParams {
            n_trees: 100,
            tree: TreeParams::default(),
        }
    }
}

/// A bagged ensemble over feature rows. Votes are majority with ties
/// to the smallest class index; probabilities are vote shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub n_classes: usize,
    pub params: ForestParams,
    pub seed: u64,
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Trains on the full rows of `x`; each tree sees a bootstrap
    /// resample drawn from a seed derived per tree, so the ensemble
    /// does not depend on thread scheduling.
    pub fn fit(
        x: &[Vec<f32>],
        y: &[u16],
        n_classes: usize,
        params: &ForestParams,
        seed: u64,
    ) -> Result<RandomForest> {
        if x.is_empty() {
            return Err(CoreError::EmptyInput("no training samples".into()));
        }
        if x.len() != y.len() {
            return Err(CoreError::DimensionMismatch {
                context: "training rows vs labels".into(),
                expected: x.len(),
                got: y.len(),
            });
        }
        if params.n_trees == 0 {
            return Err(CoreError::InvalidConfig("forest needs at least one tree".into()));
        }
        let distinct = {
            let mut seen = vec![false; n_classes];
            for &label in y {
                if label as usize >= n_classes {
                    return Err(CoreError::RejectedInput(format!(
                        "label {label} exceeds class count {n_classes}"
                    )));
                }
                seen[label as usize] = true;
            }
            seen.iter().filter(|&&s| s).count()
        };
        if distinct < 2 {
            return Err(CoreError::RejectedInput(
                "training set must contain at least two classes".into(),
            ));
        }
        let n = x.len();
        let trees: Vec<DecisionTree> = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
                let bootstrap: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                DecisionTree::fit(x, y, &bootstrap, n_classes, &params.tree, &mut rng)
            })
            .collect();
        Ok(RandomForest {
            n_classes,
            params: *params,
            seed,
            trees,
        })
    }

    /// Vote counts per class for one row, using the first
    /// `n_trees` trees (callers pass `self.trees.len()` for the
    /// whole ensemble).
    pub fn votes_with(&self, row: &[f32], n_trees: usize) -> Vec<u32> {
        let mut votes = vec![0u32; self.n_classes];
        for tree in &self.trees[..n_trees] {
            votes[tree.predict(row) as usize] += 1;
        }
        votes
    }

    pub fn votes(&self, row: &[f32]) -> Vec<u32> {
        self.votes_with(row, self.trees.len())
    }

    pub fn predict(&self, row: &[f32]) -> u16 {
        argmax_vote(&self.votes(row))
    }

    /// Per-class vote shares; sums to one.
    pub fn predict_proba(&self, row: &[f32]) -> Vec<f64> {
        let votes = self.votes(row);
        let total = self.trees.len() as f64;
        votes.iter().map(|&v| v as f64 / total).collect()
    }
}

/// Majority class, ties to the smallest index.
pub fn argmax_vote(votes: &[u32]) -> u16 {
    let mut best = 0usize;
    for (c, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = c;
        }
    }
    best as u16
}

/// A forest bundled with everything prediction needs: the class
/// table and the feature layout it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub classes: Vec<String>,
    pub features: FeatureConfig,
    pub n_features: usize,
    pub forest: RandomForest,
}

/// Trains a forest on a sample set, embedding the class table and
/// feature layout in the model.
pub fn train_forest(
    set: &SampleSet,
    features: &FeatureConfig,
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel> {
    if set.is_empty() {
        return Err(CoreError::EmptyInput("no training samples".into()));
    }
    for (class_id, count) in set.class_counts().iter().enumerate() {
        if *count == 0 {
            return Err(CoreError::RejectedInput(format!(
                "class {} has no training samples",
                set.classes[class_id]
            )));
        }
    }
    let x = extract_feature_matrix(&set.samples, features)?;
    let y: Vec<u16> = set.samples.iter().map(|s| s.class_id).collect();
    let n_features = x[0].len();
    let forest = RandomForest::fit(&x, &y, set.classes.len(), params, seed)?;
    Ok(ForestModel {
        classes: set.classes.clone(),
        features: features.clone(),
        n_features,
        forest,
    })
}

/// A classified scene: the class raster and per-class vote-share
/// rasters, all row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMap {
    pub labels: Vec<u16>,
    /// Indexed `[class][pixel]`.
    pub probabilities: Vec<Vec<f64>>,
}

/// Classifies every pixel of a scene.
pub fn predict_map(model: &ForestModel, scene: &SceneStack) -> Result<PredictionMap> {
    let rows = scene_feature_rows(scene, &model.features, model.n_features)?;
    let per_pixel: Vec<(u16, Vec<f64>)> = rows
        .par_iter()
        .map(|row| {
            let votes = model.forest.votes(row);
            let total = model.forest.trees.len() as f64;
            let probs = votes.iter().map(|&v| v as f64 / total).collect();
            (argmax_vote(&votes), probs)
        })
        .collect();
    let mut labels = Vec::with_capacity(per_pixel.len());
    let mut probabilities = vec![Vec::with_capacity(per_pixel.len()); model.classes.len()];
    for (label, probs) in per_pixel {
        labels.push(label);
        for (c, p) in probs.into_iter().enumerate() {
            probabilities[c].push(p);
        }
    }
    Ok(PredictionMap {
        labels,
        probabilities,
    })
}

/// Extracts the feature row of every pixel, row-major, checking the
/// layout against what a model expects.
pub fn scene_feature_rows(
    scene: &SceneStack,
    features: &FeatureConfig,
    expected_len: usize,
) -> Result<Vec<Vec<f32>>> {
    let rows: Vec<Vec<f32>> = (0..scene.height)
        .into_par_iter()
        .map(|y| {
            (0..scene.width)
                .map(|x| extract_features(&scene.pixel_series(x, y), features))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    if let Some(row) = rows.first() {
        if row.len() != expected_len {
            return Err(CoreError::DimensionMismatch {
                context: "scene feature vector length vs model".into(),
                expected: expected_len,
                got: row.len(),
            });
        }
    }
    Ok(rows)
}

/// Writes `class` over `base` wherever `mask` is set.
pub fn overlay(base: &[u16], mask: &[bool], class: u16) -> Result<Vec<u16>> {
    if base.len() != mask.len() {
        return Err(CoreError::DimensionMismatch {
            context: "overlay mask vs base raster".into(),
            expected: base.len(),
            got: mask.len(),
        });
    }
    Ok(base
        .iter()
        .zip(mask)
        .map(|(&b, &m)| if m { class } else { b })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::Band;
    use crate::grid::TimeGrid;
    use crate::index::{IndexKind, IndexParams};
    use crate::sample::{Provenance, Sample};

    fn ndvi_features() -> FeatureConfig {
        FeatureConfig {
            indices: vec![IndexKind::Ndvi],
            index_params: IndexParams::default(),
        }
    }

    /// Two classes split cleanly by feature 0 at 5.0, verified
    /// separable by direct scan before any forest sees it.
    fn separable(n_per_class: usize) -> (Vec<Vec<f32>>, Vec<u16>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in 0..n_per_class {
            let jitter = rng.gen_range(-0.5..0.5f32);
            x.push(vec![i as f32 * 4.0 / n_per_class as f32 + jitter, 0.0]);
            y.push(0);
            let jitter = rng.gen_range(-0.5..0.5f32);
            x.push(vec![
                6.0 + i as f32 * 4.0 / n_per_class as f32 + jitter,
                0.0,
            ]);
            y.push(1);
        }
        let max0 = x
            .iter()
            .zip(&y)
            .filter(|(_, &l)| l == 0)
            .map(|(r, _)| r[0])
            .fold(f32::MIN, f32::max);
        let min1 = x
            .iter()
            .zip(&y)
            .filter(|(_, &l)| l == 1)
            .map(|(r, _)| r[0])
            .fold(f32::MAX, f32::min);
        assert!(max0 < min1, "generated data is not separable");
        (x, y)
    }

    #[test]
    fn separable_data_is_learned_perfectly() {
        let (x, y) = separable(50);
        let params = ForestParams {
            n_trees: 50,
            ..ForestParams::default()
        };
        let forest = RandomForest::fit(&x, &y, 2, &params, 3).unwrap();
        let correct = x
            .iter()
            .zip(&y)
            .filter(|(row, &label)| forest.predict(row) == label)
            .count();
        assert_eq!(correct, x.len());
    }

    #[test]
    fn duplicated_dataset_predicts_identically_on_training_points() {
        let (x, y) = separable(30);
        let mut x2 = x.clone();
        x2.extend(x.iter().cloned());
        let mut y2 = y.clone();
        y2.extend(y.iter().cloned());
        let params = ForestParams {
            n_trees: 30,
            ..ForestParams::default()
        };
        let a = RandomForest::fit(&x, &y, 2, &params, 3).unwrap();
        let b = RandomForest::fit(&x2, &y2, 2, &params, 3).unwrap();
        for row in &x {
            assert_eq!(a.predict(row), b.predict(row));
        }
    }

    #[test]
    fn single_class_input_is_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = vec![0, 0];
        assert!(matches!(
            RandomForest::fit(&x, &y, 2, &ForestParams::default(), 1),
            Err(CoreError::RejectedInput(_))
        ));
    }

    #[test]
    fn votes_conserve_tree_count_and_probabilities_sum_to_one() {
        let (x, y) = separable(20);
        let params = ForestParams {
            n_trees: 17,
            ..ForestParams::default()
        };
        let forest = RandomForest::fit(&x, &y, 2, &params, 5).unwrap();
        let votes = forest.votes(&x[0]);
        assert_eq!(votes.iter().sum::<u32>(), 17);
        let proba = forest.predict_proba(&x[0]);
        assert!((proba.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn permuting_tree_order_leaves_predictions_unchanged() {
        let (x, y) = separable(20);
        let params = ForestParams {
            n_trees: 9,
            ..ForestParams::default()
        };
        let forest = RandomForest::fit(&x, &y, 2, &params, 5).unwrap();
        let mut permuted = forest.clone();
        permuted.trees.reverse();
        for row in &x {
            assert_eq!(forest.predict(row), permuted.predict(row));
        }
    }

    #[test]
    fn training_is_deterministic_in_the_seed() {
        let (x, y) = separable(20);
        let params = ForestParams {
            n_trees: 10,
            ..ForestParams::default()
        };
        let a = RandomForest::fit(&x, &y, 2, &params, 11).unwrap();
        let b = RandomForest::fit(&x, &y, 2, &params, 11).unwrap();
        let c = RandomForest::fit(&x, &y, 2, &params, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn serialized_model_round_trips_to_identical_predictions() {
        let (x, y) = separable(20);
        let params = ForestParams {
            n_trees: 10,
            ..ForestParams::default()
        };
        let forest = RandomForest::fit(&x, &y, 2, &params, 11).unwrap();
        let json = serde_json::to_string(&forest).unwrap();
        let back: RandomForest = serde_json::from_str(&json).unwrap();
        assert_eq!(forest, back);
    }

    fn tiny_scene() -> SceneStack {
        let mut scene = SceneStack::new_empty(
            4,
            2,
            TimeGrid::new(100, 10, 2),
            TimeGrid::new(100, 12, 1),
            &[Band::Red, Band::Nir, Band::Vv],
        );
        scene.classes = vec!["low".into(), "high".into()];
        for step in 0..2 {
            for y in 0..2 {
                for x in 0..4 {
                    let i = scene.cell_index(step, x, y);
                    scene.optical_valid[i] = 1;
                    scene.bands.get_mut(&Band::Red).unwrap()[i] = 0.2;
                    let nir = if x < 2 { 0.25 } else { 0.8 };
                    scene.bands.get_mut(&Band::Nir).unwrap()[i] = nir;
                }
            }
        }
        for i in 0..scene.radar_valid.len() {
            scene.radar_valid[i] = 1;
            scene.bands.get_mut(&Band::Vv).unwrap()[i] = -10.0;
        }
        scene
    }

    fn sample_from(scene: &SceneStack, x: usize, y: usize, class_id: u16) -> Sample {
        Sample {
            location: Some((x as u32, y as u32)),
            class_id,
            provenance: Provenance::Rule,
            series: scene.pixel_series(x, y),
        }
    }

    #[test]
    fn scene_prediction_recovers_the_training_classes() {
        let scene = tiny_scene();
        let mut set = SampleSet::new(
            scene.classes.clone(),
            scene.optical_grid,
            scene.radar_grid,
        );
        for (x, class) in [(0, 0), (1, 0), (2, 1), (3, 1)] {
            set.samples.push(sample_from(&scene, x, 0, class));
            set.samples.push(sample_from(&scene, x, 1, class));
        }
        let features = ndvi_features();
        let params = ForestParams {
            n_trees: 15,
            ..ForestParams::default()
        };
        let model = train_forest(&set, &features, &params, 9).unwrap();
        let map = predict_map(&model, &scene).unwrap();
        let expected: Vec<u16> = (0..2)
            .flat_map(|_| [0u16, 0, 1, 1])
            .collect();
        assert_eq!(map.labels, expected);
        for pixel in 0..8 {
            let total: f64 = map.probabilities.iter().map(|p| p[pixel]).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_training_class_is_named_in_the_error() {
        let scene = tiny_scene();
        let mut set = SampleSet::new(
            vec!["low".into(), "high".into(), "ghost".into()],
            scene.optical_grid,
            scene.radar_grid,
        );
        set.samples.push(sample_from(&scene, 0, 0, 0));
        set.samples.push(sample_from(&scene, 3, 0, 1));
        let err = train_forest(&set, &ndvi_features(), &ForestParams::default(), 1).unwrap_err();
        assert!(err.to_string().contains("ghost"));
    }

    #[test]
    fn overlay_writes_only_masked_pixels() {
        let base = vec![0u16, 1, 2, 3];
        let mask = vec![false, true, false, true];
        let out = overlay(&base, &mask, 9).unwrap();
        assert_eq!(out, vec![0, 9, 2, 9]);
        let again = overlay(&out, &mask, 9).unwrap();
        assert_eq!(again, out);
        assert_eq!(overlay(&base, &[false; 4], 9).unwrap(), base);
        assert_eq!(overlay(&base, &[true; 4], 9).unwrap(), vec![9; 4]);
        assert!(overlay(&base, &[true; 3], 9).is_err());
    }
}
