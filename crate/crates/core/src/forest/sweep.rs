//! Tree-count selection by holdout accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::features::{extract_feature_matrix, FeatureConfig};
use crate::sample::{split_train_holdout, SampleSet};

use super::{argmax_vote, ForestParams, RandomForest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n_trees: usize,
    pub holdout_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// The accuracy-maximizing tree count, ties to the smallest.
    pub chosen_n_trees: usize,
    pub train_size: usize,
    pub holdout_size: usize,
}

/// Sweeps forest size over `grid`, training on a stratified 70% of
/// the samples and scoring accuracy on the held-out 30%.
///
/// Per-tree seeds depend only on the tree's index, so the forest at a
/// smaller count is a prefix of the forest at a larger one; the sweep
/// trains once at the largest count and scores each grid value on a
/// prefix of the ensemble.
pub fn sweep_tree_count(
    set: &SampleSet,
    features: &FeatureConfig,
    params: &ForestParams,
    grid: &[usize],
    train_ratio: f64,
    seed: u64,
) -> Result<SweepReport> {
    if grid.is_empty() {
        return Err(CoreError::InvalidConfig("tree-count grid is empty".into()));
    }
    if grid.contains(&0) {
        return Err(CoreError::InvalidConfig(
            "tree-count grid contains zero".into(),
        ));
    }
    for (class_id, count) in set.class_counts().iter().enumerate() {
        if *count < 2 {
            return Err(CoreError::RejectedInput(format!(
                "class {} has {count} samples; stratified splitting needs at least 2",
                set.classes[class_id]
            )));
        }
    }
    let (train_idx, holdout_idx) = split_train_holdout(set, train_ratio, seed);
    let train: Vec<_> = train_idx.iter().map(|&i| set.samples[i].clone()).collect();
    let holdout: Vec<_> = holdout_idx
        .iter()
        .map(|&i| set.samples[i].clone())
        .collect();
    let x_train = extract_feature_matrix(&train, features)?;
    let y_train: Vec<u16> = train.iter().map(|s| s.class_id).collect();
    let x_hold = extract_feature_matrix(&holdout, features)?;
    let y_hold: Vec<u16> = holdout.iter().map(|s| s.class_id).collect();

    let max_n = *grid.iter().max().unwrap();
    let full = RandomForest::fit(
        &x_train,
        &y_train,
        set.classes.len(),
        &ForestParams {
            n_trees: max_n,
            tree: params.tree,
        },
        seed,
    )?;
    let mut sorted_grid: Vec<usize> = grid.to_vec();
    sorted_grid.sort_unstable();
    sorted_grid.dedup();
    let mut points = Vec::with_capacity(sorted_grid.len());
    for &n in &sorted_grid {
        let correct = x_hold
            .iter()
            .zip(&y_hold)
            .filter(|(row, &label)| argmax_vote(&full.votes_with(row, n)) == label)
            .count();
        points.push(SweepPoint {
            n_trees: n,
            holdout_accuracy: correct as f64 / x_hold.len().max(1) as f64,
        });
    }
    let chosen = points
        .iter()
        .fold(None::<&SweepPoint>, |best, p| match best {
            Some(b) if p.holdout_accuracy > b.holdout_accuracy => Some(p),
            None => Some(p),
            _ => best,
        })
        .unwrap()
        .n_trees;
    Ok(SweepReport {
        points,
        chosen_n_trees: chosen,
        train_size: train.len(),
        holdout_size: holdout.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::Band;
    use crate::grid::TimeGrid;
    use crate::index::{IndexKind, IndexParams};
    use crate::sample::{Provenance, Sample};
    use crate::series::SeriesSet;
    use std::collections::BTreeMap;

    fn ndvi_features() -> FeatureConfig {
        FeatureConfig {
            indices: vec![IndexKind::Ndvi],
            index_params: IndexParams::default(),
        }
    }

    fn sample(class_id: u16, level: f32) -> Sample {
        Sample {
            location: None,
            class_id,
            provenance: Provenance::Rule,
            series: SeriesSet {
                optical_grid: TimeGrid::new(100, 10, 3),
                radar_grid: TimeGrid::new(100, 12, 1),
                bands: BTreeMap::from([
                    (Band::Red, vec![0.2, 0.2, 0.2]),
                    (Band::Nir, vec![level, level + 0.05, level]),
                    (Band::Vv, vec![-11.0]),
                ]),
            },
        }
    }

    fn separable_set(n_per_class: usize) -> SampleSet {
        let mut set = SampleSet::new(
            vec!["low".into(), "high".into()],
            TimeGrid::new(100, 10, 3),
            TimeGrid::new(100, 12, 1),
        );
        for i in 0..n_per_class {
            set.samples
                .push(sample(0, 0.25 + (i % 7) as f32 * 0.01));
            set.samples
                .push(sample(1, 0.70 + (i % 7) as f32 * 0.01));
        }
        set
    }

    #[test]
    fn sweep_reports_every_grid_point_and_a_split() {
        let set = separable_set(20);
        let report = sweep_tree_count(
            &set,
            &ndvi_features(),
            &ForestParams::default(),
            &[10, 25, 50],
            0.7,
            13,
        )
        .unwrap();
        assert_eq!(report.points.len(), 3);
        assert_eq!(report.train_size, 28);
        assert_eq!(report.holdout_size, 12);
        let at_10 = report.points[0].holdout_accuracy;
        let chosen_acc = report
            .points
            .iter()
            .find(|p| p.n_trees == report.chosen_n_trees)
            .unwrap()
            .holdout_accuracy;
        assert!(chosen_acc >= at_10);
    }

    #[test]
    fn singleton_grid_is_chosen_outright() {
        let set = separable_set(10);
        let report = sweep_tree_count(
            &set,
            &ndvi_features(),
            &ForestParams::default(),
            &[7],
            0.7,
            13,
        )
        .unwrap();
        assert_eq!(report.chosen_n_trees, 7);
    }

    #[test]
    fn accuracy_ties_choose_the_smaller_count() {
        let set = separable_set(20);
        let report = sweep_tree_count(
            &set,
            &ndvi_features(),
            &ForestParams::default(),
            &[20, 40],
            0.7,
            13,
        )
        .unwrap();
        // Fully separable data saturates at accuracy 1 for both.
        if report.points[0].holdout_accuracy == report.points[1].holdout_accuracy {
            assert_eq!(report.chosen_n_trees, 20);
        }
    }

    #[test]
    fn undersized_classes_are_rejected() {
        let mut set = separable_set(5);
        set.classes.push("rare".into());
        set.samples.push(sample(2, 0.5));
        let err = sweep_tree_count(
            &set,
            &ndvi_features(),
            &ForestParams::default(),
            &[5],
            0.7,
            13,
        )
        .unwrap_err();
        assert!(err.to_string().contains("rare"));
    }

    #[test]
    fn empty_grid_is_rejected() {
        let set = separable_set(5);
        assert!(matches!(
            sweep_tree_count(
                &set,
                &ndvi_features(),
                &ForestParams::default(),
                &[],
                0.7,
                13,
            ),
            Err(CoreError::InvalidConfig(_))
        ));
    }
}
