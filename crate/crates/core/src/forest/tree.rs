//! Single CART-style decision tree with Gini splits.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Hyperparameters shared by every tree in a forest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    /// Maximum depth; `None` grows until leaves are pure or too
    /// small.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features examined per node; `None` means the square root of
    /// the feature count, rounded up.
    pub feature_candidates: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> TreeParams {
        TreeParams {
            max_depth: None,
            min_samples_split: 2,
            feature_candidates: None,
        }
    }
}

impl TreeParams {
    pub fn candidates_for(&self, n_features: usize) -> usize {
        self.feature_candidates
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        /// Training-sample count per class at this leaf.
        counts: Vec<u32>,
    },
    Split {
        feature: usize,
        threshold: f32,
        left: u32,
        right: u32,
    },
}

/// One trained tree. Node 0 is the root; `Split` children index into
/// the same array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

fn gini(counts: &[u32], total: u32) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            p * p
        })
        .sum::<f64>()
}

fn class_counts(y: &[u16], indices: &[usize], n_classes: usize) -> Vec<u32> {
    let mut counts = vec![0u32; n_classes];
    for &i in indices {
        counts[y[i] as usize] += 1;
    }
    counts
}

struct BestSplit {
    feature: usize,
    threshold: f32,
    weighted_gini: f64,
}

/// Scans one feature for the threshold minimizing weighted child
/// Gini. Thresholds are midpoints between consecutive distinct
/// values.
fn best_threshold_for(
    x: &[Vec<f32>],
    y: &[u16],
    indices: &[usize],
    feature: usize,
    n_classes: usize,
) -> Option<(f32, f64)> {
    let mut pairs: Vec<(f32, u16)> = indices.iter().map(|&i| (x[i][feature], y[i])).collect();
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();
    let mut left = vec![0u32; n_classes];
    let mut right = class_counts(y, indices, n_classes);
    let mut best: Option<(f32, f64)> = None;
    for i in 1..n {
        let (v_prev, c_prev) = pairs[i - 1];
        left[c_prev as usize] += 1;
        right[c_prev as usize] -= 1;
        let v = pairs[i].0;
        if v <= v_prev {
            continue;
        }
        let weighted = (i as f64 * gini(&left, i as u32)
            + (n - i) as f64 * gini(&right, (n - i) as u32))
            / n as f64;
        let threshold = (v_prev + v) / 2.0;
        // Midpoints can round onto an endpoint and leave a child
        // empty at partition time; skip those.
        if threshold >= v {
            continue;
        }
        if best.is_none_or(|(_, g)| weighted < g - 1e-12) {
            best = Some((threshold, weighted));
        }
    }
    best
}

fn find_best_split(
    x: &[Vec<f32>],
    y: &[u16],
    indices: &[usize],
    n_classes: usize,
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> Option<BestSplit> {
    let n_features = x[indices[0]].len();
    let m = params.candidates_for(n_features);
    let mut order: Vec<usize> = (0..n_features).collect();
    for i in 0..m {
        let j = i + rng.gen_range(0..n_features - i);
        order.swap(i, j);
    }
    let mut candidates: Vec<usize> = order[..m].to_vec();
    // Ascending candidate order makes Gini ties resolve to the
    // smallest feature index.
    candidates.sort_unstable();
    let mut best: Option<BestSplit> = None;
    for feature in candidates {
        if let Some((threshold, weighted)) = best_threshold_for(x, y, indices, feature, n_classes)
        {
            let better = match &best {
                None => true,
                Some(b) => weighted < b.weighted_gini - 1e-12,
            };
            if better {
                best = Some(BestSplit {
                    feature,
                    threshold,
                    weighted_gini: weighted,
                });
            }
        }
    }
    best
}

impl DecisionTree {
    /// Grows a tree on the rows of `x` selected by `indices` (which
    /// may repeat rows, as bootstrap samples do).
    pub fn fit(
        x: &[Vec<f32>],
        y: &[u16],
        indices: &[usize],
        n_classes: usize,
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> DecisionTree {
        assert!(!indices.is_empty(), "cannot fit a tree on zero samples");
        let mut tree = DecisionTree { nodes: Vec::new() };
        tree.grow(x, y, indices, n_classes, params, rng, 0);
        tree
    }

    #[allow(clippy::too_many_arguments)]
    fn grow(
        &mut self,
        x: &[Vec<f32>],
        y: &[u16],
        indices: &[usize],
        n_classes: usize,
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
        depth: usize,
    ) -> u32 {
        let counts = class_counts(y, indices, n_classes);
        let total = indices.len() as u32;
        let node_gini = gini(&counts, total);
        let depth_capped = params.max_depth.is_some_and(|d| depth >= d);
        if node_gini == 0.0 || indices.len() < params.min_samples_split || depth_capped {
            return self.push(Node::Leaf { counts });
        }
        let Some(split) = find_best_split(x, y, indices, n_classes, params, rng) else {
            return self.push(Node::Leaf { counts });
        };
        if node_gini - split.weighted_gini <= 1e-12 {
            return self.push(Node::Leaf { counts });
        }
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| x[i][split.feature] <= split.threshold);
        if left_idx.is_empty() || right_idx.is_empty() {
            return self.push(Node::Leaf { counts });
        }
        let node = self.push(Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: 0,
            right: 0,
        });
        let left = self.grow(x, y, &left_idx, n_classes, params, rng, depth + 1);
        let right = self.grow(x, y, &right_idx, n_classes, params, rng, depth + 1);
        let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[node as usize]
        else {
            unreachable!()
        };
        *l = left;
        *r = right;
        node
    }

    fn push(&mut self, node: Node) -> u32 {
        self.nodes.push(node);
        (self.nodes.len() - 1) as u32
    }

    /// The leaf's class counts for one feature row.
    pub fn leaf_counts(&self, row: &[f32]) -> &[u32] {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    /// The tree's vote: majority class at the reached leaf, ties to
    /// the smallest class index.
    pub fn predict(&self, row: &[f32]) -> u16 {
        let counts = self.leaf_counts(row);
        let mut best = 0usize;
        for (c, &count) in counts.iter().enumerate() {
            if count > counts[best] {
                best = c;
            }
        }
        best as u16
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 1,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}
