//! Strong-pixel selection and rule-based weak labeling.
//!
//! The cascade's first stage only trusts pixels whose time series are
//! dense enough for phenological rules to read reliably. Those pixels
//! are selected here, labeled by the decision rules, and cleaned with
//! a per-class morphological opening.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::band::Sensor;
use crate::error::{CoreError, Result};
use crate::index::{IndexKind, IndexParams};
use crate::morphology::{open, BoolRaster, StructuringElement};
use crate::rules::{IndexBundle, Rule};
use crate::scene::{SceneStack, NO_LABEL};

/// How strong pixels are picked from the valid-count distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrongMode {
    /// Keep pixels whose valid count strictly exceeds the given
    /// percentile of the per-pixel valid-count distribution.
    Percentile { p: f64 },
    /// Keep pixels whose fraction of valid steps in the window is at
    /// least the given value.
    Fraction { min_fraction: f64 },
}

impl Default for StrongMode {
    fn default() -> Self {
        StrongMode::Percentile { p: 75.0 }
    }
}

/// Outcome of strong-pixel selection. An empty selection is a valid
/// outcome, reported rather than raised as an error.
#[derive(Debug, Clone)]
pub struct StrongSelection {
    pub mask: BoolRaster,
    pub mode: StrongMode,
    /// Resolved threshold: a valid-count for percentile mode, a
    /// fraction for fraction mode.
    pub threshold: f64,
    pub selected: usize,
}

/// Selects strong pixels from the density of one sensor's valid
/// observations, optionally restricted to a DOY window.
pub fn select_strong_pixels(
    scene: &SceneStack,
    sensor: Sensor,
    window: Option<(i32, i32)>,
    mode: StrongMode,
) -> Result<StrongSelection> {
    let grid = scene.grid(sensor);
    let steps: Vec<usize> = match window {
        Some((lo, hi)) => grid.window_steps(lo, hi)?,
        None => (0..grid.count).collect(),
    };
    let mask_data = scene.validity(sensor);
    let counts: Vec<usize> = (0..scene.height)
        .flat_map(|y| (0..scene.width).map(move |x| (x, y)))
        .map(|(x, y)| {
            steps
                .iter()
                .filter(|&&t| mask_data[scene.cell_index(t, x, y)] != 0)
                .count()
        })
        .collect();

    let mut mask = BoolRaster::filled(scene.width, scene.height, false);
    let threshold = match mode {
        StrongMode::Percentile { p } => {
            let as_f64: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
            let thr = crate::stats::percentile(&as_f64, p);
            for (i, &c) in counts.iter().enumerate() {
                mask.data[i] = (c as f64) > thr;
            }
            thr
        }
        StrongMode::Fraction { min_fraction } => {
            let denom = steps.len() as f64;
            for (i, &c) in counts.iter().enumerate() {
                mask.data[i] = c as f64 / denom >= min_fraction;
            }
            min_fraction
        }
    };
    let selected = mask.count();
    Ok(StrongSelection {
        mask,
        mode,
        threshold,
        selected,
    })
}

/// Result of rule labeling over the strong mask.
#[derive(Debug, Clone)]
pub struct LabelMap {
    /// Class id per pixel, [`NO_LABEL`] where no or multiple rules
    /// matched (or the pixel was not strong).
    pub labels: Vec<u16>,
    /// Pixels matched per rule, in rule order.
    pub matches_per_rule: Vec<usize>,
    /// Strong pixels discarded because rules of different classes
    /// both matched.
    pub multi_class_discards: usize,
    /// Strong pixels evaluated.
    pub evaluated: usize,
}

/// Evaluates the rules on every strong pixel and labels pixels matched
/// by exactly one class. Matches from several rules of the same class
/// agree and count as one; matches from different classes contradict
/// and discard the pixel.
///
/// `prior` supplies the previous year's scene for rules with negative
/// DOY windows. `classes` is the class table label ids point into.
pub fn label_pixels(
    scene: &SceneStack,
    prior: Option<&SceneStack>,
    rules: &[Rule],
    classes: &[String],
    strong: &BoolRaster,
    params: &IndexParams,
) -> Result<LabelMap> {
    if rules.is_empty() {
        return Err(CoreError::EmptyInput("no rules to label with".into()));
    }
    if strong.width != scene.width || strong.height != scene.height {
        return Err(CoreError::DimensionMismatch {
            context: "strong mask vs scene".into(),
            expected: scene.n_pixels(),
            got: strong.width * strong.height,
        });
    }
    let mut class_ids = Vec::with_capacity(rules.len());
    for rule in rules {
        let id = classes
            .iter()
            .position(|c| *c == rule.class)
            .ok_or_else(|| CoreError::UnknownClass(rule.class.clone()))?;
        class_ids.push(id as u16);
    }
    let kinds: Vec<IndexKind> = {
        let mut set = std::collections::BTreeSet::new();
        for rule in rules {
            set.extend(rule.indices());
        }
        set.into_iter().collect()
    };

    let rows: Vec<(Vec<u16>, Vec<usize>, usize, usize)> = (0..scene.height)
        .into_par_iter()
        .map(|y| -> Result<(Vec<u16>, Vec<usize>, usize, usize)> {
            let mut labels = vec![NO_LABEL; scene.width];
            let mut matches = vec![0usize; rules.len()];
            let mut discards = 0usize;
            let mut evaluated = 0usize;
            for x in 0..scene.width {
                if !strong.get(x, y) {
                    continue;
                }
                evaluated += 1;
                let current = scene.pixel_series(x, y);
                let bundle = match prior {
                    Some(p) => {
                        let prior_series = p.pixel_series(x, y);
                        IndexBundle::from_series_sets(
                            &[&prior_series, &current],
                            kinds.iter().copied(),
                            params,
                        )?
                    }
                    None => IndexBundle::from_series_set(&current, kinds.iter().copied(), params)?,
                };
                let mut matched_class: Option<u16> = None;
                let mut conflict = false;
                for (r, rule) in rules.iter().enumerate() {
                    if rule.matches(&bundle)? {
                        matches[r] += 1;
                        match matched_class {
                            None => matched_class = Some(class_ids[r]),
                            Some(prev) if prev != class_ids[r] => conflict = true,
                            Some(_) => {}
                        }
                    }
                }
                if conflict {
                    discards += 1;
                } else if let Some(class) = matched_class {
                    labels[x] = class;
                }
            }
            Ok((labels, matches, discards, evaluated))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut labels = Vec::with_capacity(scene.n_pixels());
    let mut matches_per_rule = vec![0usize; rules.len()];
    let mut multi_class_discards = 0;
    let mut evaluated = 0;
    for (row_labels, row_matches, row_discards, row_evaluated) in rows {
        labels.extend(row_labels);
        for (total, m) in matches_per_rule.iter_mut().zip(row_matches) {
            *total += m;
        }
        multi_class_discards += row_discards;
        evaluated += row_evaluated;
    }
    Ok(LabelMap {
        labels,
        matches_per_rule,
        multi_class_discards,
        evaluated,
    })
}

/// Opens each class's label mask independently; labels eroded away
/// become [`NO_LABEL`]. Opening never relabels a pixel to a different
/// class because it never adds pixels to a class mask.
pub fn open_labels(
    labels: &[u16],
    width: usize,
    height: usize,
    n_classes: usize,
    element: StructuringElement,
) -> Vec<u16> {
    let mut out = vec![NO_LABEL; labels.len()];
    for class in 0..n_classes as u16 {
        let mut mask = BoolRaster::filled(width, height, false);
        for (i, &l) in labels.iter().enumerate() {
            if l == class {
                mask.data[i] = true;
            }
        }
        if mask.count() == 0 {
            continue;
        }
        let opened = open(&mask, element);
        for (i, &keep) in opened.data.iter().enumerate() {
            if keep {
                out[i] = class;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::Band;
    use crate::grid::TimeGrid;
    use crate::scene::SceneStack;

    /// Scene with two pixel populations: left half high NDVI, right
    /// half low, with per-pixel valid counts varying by column.
    fn test_scene(width: usize, height: usize, steps: usize) -> SceneStack {
        let mut scene = SceneStack::new_empty(
            width,
            height,
            TimeGrid::new(100, 10, steps),
            TimeGrid::new(100, 12, 2),
            &[Band::Nir, Band::Red, Band::Vv, Band::Vh],
        );
        for t in 0..steps {
            for y in 0..height {
                for x in 0..width {
                    let i = scene.cell_index(t, x, y);
                    // Column x keeps its first x+1 steps valid.
                    if t <= x {
                        let high = x < width / 2;
                        let (nir, red) = if high { (0.8, 0.1) } else { (0.3, 0.3) };
                        scene.bands.get_mut(&Band::Nir).unwrap()[i] = nir;
                        scene.bands.get_mut(&Band::Red).unwrap()[i] = red;
                        scene.optical_valid[i] = 1;
                    }
                }
            }
        }
        for t in 0..2 {
            for p in 0..width * height {
                let i = t * width * height + p;
                scene.bands.get_mut(&Band::Vv).unwrap()[i] = 0.2;
                scene.bands.get_mut(&Band::Vh).unwrap()[i] = 0.1;
                scene.radar_valid[i] = 1;
            }
        }
        scene
    }

    #[test]
    fn percentile_selection_is_strictly_greater() {
        let scene = test_scene(4, 1, 4);
        // Valid counts by column: 1, 2, 3, 4. The 75th percentile of
        // [1,2,3,4] is 3.25, so only the count-4 pixel is strong.
        let sel = select_strong_pixels(
            &scene,
            Sensor::Optical,
            None,
            StrongMode::Percentile { p: 75.0 },
        )
        .unwrap();
        assert_eq!(sel.selected, 1);
        assert!(sel.mask.get(3, 0));
        assert!((sel.threshold - 3.25).abs() < 1e-12);
    }

    #[test]
    fn fraction_selection_uses_the_window_length() {
        let scene = test_scene(4, 1, 4);
        let sel = select_strong_pixels(
            &scene,
            Sensor::Optical,
            None,
            StrongMode::Fraction { min_fraction: 0.75 },
        )
        .unwrap();
        // Counts 1..4 over 4 steps: fractions 0.25..1.0.
        assert_eq!(sel.selected, 2);
        assert!(sel.mask.get(2, 0) && sel.mask.get(3, 0));
    }

    #[test]
    fn empty_selection_is_reported_not_raised() {
        let scene = test_scene(4, 1, 4);
        let sel = select_strong_pixels(
            &scene,
            Sensor::Optical,
            None,
            StrongMode::Fraction { min_fraction: 2.0 },
        )
        .unwrap();
        assert_eq!(sel.selected, 0);
    }

    #[test]
    fn labeling_respects_the_strong_mask_and_rules() {
        let scene = test_scene(6, 2, 4);
        let classes = vec!["green".to_string(), "bare".to_string()];
        let rules = vec![
            Rule::parse("green", "green", "min(NDVI, 100, 130) > 0.5").unwrap(),
            Rule::parse("bare", "bare", "max(NDVI, 100, 130) < 0.1").unwrap(),
        ];
        let mut strong = BoolRaster::filled(6, 2, true);
        strong.set(0, 0, false);
        let map = label_pixels(
            &scene,
            None,
            &rules,
            &classes,
            &strong,
            &IndexParams::default(),
        )
        .unwrap();
        assert_eq!(map.evaluated, 11);
        // Left half (columns 0..3) is high NDVI; (0,0) was masked out.
        assert_eq!(map.labels[0], NO_LABEL);
        assert_eq!(map.labels[1], 0);
        assert_eq!(map.labels[6], 0);
        // Right half (NDVI = 0) matches the bare rule.
        assert_eq!(map.labels[4], 1);
        assert_eq!(map.multi_class_discards, 0);
    }

    #[test]
    fn conflicting_classes_discard_the_pixel() {
        let scene = test_scene(4, 1, 4);
        let classes = vec!["a".to_string(), "b".to_string()];
        let rules = vec![
            Rule::parse("r1", "a", "max(NDVI, 100, 130) > -1").unwrap(),
            Rule::parse("r2", "b", "max(NDVI, 100, 130) > -1").unwrap(),
        ];
        let strong = BoolRaster::filled(4, 1, true);
        let map = label_pixels(
            &scene,
            None,
            &rules,
            &classes,
            &strong,
            &IndexParams::default(),
        )
        .unwrap();
        assert_eq!(map.multi_class_discards, 4);
        assert!(map.labels.iter().all(|&l| l == NO_LABEL));
    }

    #[test]
    fn same_class_double_match_is_not_a_conflict() {
        let scene = test_scene(4, 1, 4);
        let classes = vec!["a".to_string()];
        let rules = vec![
            Rule::parse("r1", "a", "max(NDVI, 100, 130) > -1").unwrap(),
            Rule::parse("r2", "a", "max(NDVI, 100, 130) > -1").unwrap(),
        ];
        let strong = BoolRaster::filled(4, 1, true);
        let map = label_pixels(
            &scene,
            None,
            &rules,
            &classes,
            &strong,
            &IndexParams::default(),
        )
        .unwrap();
        assert_eq!(map.multi_class_discards, 0);
        assert!(map.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn unknown_rule_class_is_an_error() {
        let scene = test_scene(2, 1, 2);
        let classes = vec!["a".to_string()];
        let rules = vec![Rule::parse("r", "zzz", "max(NDVI, 100, 110) > 0").unwrap()];
        let strong = BoolRaster::filled(2, 1, true);
        assert!(matches!(
            label_pixels(&scene, None, &rules, &classes, &strong, &IndexParams::default()),
            Err(CoreError::UnknownClass(_))
        ));
    }

    #[test]
    fn opening_labels_per_class_clears_isolated_labels() {
        let width = 7;
        let height = 7;
        let mut labels = vec![NO_LABEL; width * height];
        // A 4x4 block of class 0 and one isolated class-1 pixel.
        for y in 0..4 {
            for x in 0..4 {
                labels[y * width + x] = 0;
            }
        }
        labels[6 * width + 6] = 1;
        let opened = open_labels(&labels, width, height, 2, StructuringElement::Square3);
        assert_eq!(opened[width + 1], 0);
        assert_eq!(opened[6 * width + 6], NO_LABEL);
        // Anti-extensive: no pixel gained a label.
        for (before, after) in labels.iter().zip(&opened) {
            assert!(*after == NO_LABEL || after == before);
        }
    }
}
