//! Positive-unlabeled learning by repeated provisional relabeling.
//!
//! With reference samples for only one class, each round treats a
//! fresh uniform draw of unlabeled pixels as provisional negatives
//! and trains a binary forest; a pixel joins the class when a strict
//! majority of rounds votes for it. The random draws decorrelate the
//! rounds' label noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::stats::derive_seed;

use super::{ForestParams, RandomForest};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulParams {
    pub rounds: usize,
    pub forest: ForestParams,
}

impl Default for PulParams {
    fn default() -> PulParams {
        PulParams {
            rounds: 11,
            forest: ForestParams::default(),
        }
    }
}

impl PulParams {
    /// Votes needed for a positive call: a strict majority of rounds.
    pub fn majority(&self) -> usize {
        self.rounds / 2 + 1
    }
}

/// The per-round binary forests and the seeds of their unlabeled
/// draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulEnsemble {
    pub params: PulParams,
    pub models: Vec<RandomForest>,
    pub draw_seeds: Vec<u64>,
}

fn draw_indices(n_pool: usize, k: usize, seed: u64) -> Vec<usize> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n_pool).collect();
    for i in 0..k {
        let j = i + rng.gen_range(0..n_pool - i);
        indices.swap(i, j);
    }
    indices.truncate(k);
    indices.sort_unstable();
    indices
}

/// Trains the voting ensemble. `positives` are the known class's
/// feature rows; `pool` holds the feature rows negatives are drawn
/// from, one per scene pixel.
pub fn pul_train(
    positives: &[Vec<f32>],
    pool: &[Vec<f32>],
    params: &PulParams,
    seed: u64,
) -> Result<PulEnsemble> {
    if positives.len() < 10 {
        return Err(CoreError::RejectedInput(format!(
            "positive-unlabeled training needs at least 10 positives, got {}",
            positives.len()
        )));
    }
    if pool.len() < positives.len() {
        return Err(CoreError::RejectedInput(format!(
            "unlabeled pool ({}) is smaller than the positive set ({})",
            pool.len(),
            positives.len()
        )));
    }
    if params.rounds == 0 {
        return Err(CoreError::InvalidConfig(
            "positive-unlabeled voting needs at least one round".into(),
        ));
    }
    let draw_seeds: Vec<u64> = (0..params.rounds)
        .map(|r| derive_seed(seed, r as u64))
        .collect();
    let models: Vec<RandomForest> = draw_seeds
        .par_iter()
        .enumerate()
        .map(|(r, &draw_seed)| {
            let drawn = draw_indices(pool.len(), positives.len(), draw_seed);
            let mut x: Vec<Vec<f32>> = positives.to_vec();
            let mut y: Vec<u16> = vec![1; positives.len()];
            for i in drawn {
                x.push(pool[i].clone());
                y.push(0);
            }
            RandomForest::fit(&x, &y, 2, &params.forest, derive_seed(seed, 0x100 + r as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PulEnsemble {
        params: *params,
        models,
        draw_seeds,
    })
}

/// Positive votes per row, one count in `0..=rounds`.
pub fn pul_votes(ensemble: &PulEnsemble, rows: &[Vec<f32>]) -> Vec<u32> {
    rows.par_iter()
        .map(|row| {
            ensemble
                .models
                .iter()
                .filter(|m| m.predict(row) == 1)
                .count() as u32
        })
        .collect()
}

/// Classifies rows: positive iff a strict majority of rounds votes
/// positive.
pub fn pul_predict(ensemble: &PulEnsemble, rows: &[Vec<f32>]) -> Vec<bool> {
    let majority = ensemble.params.majority() as u32;
    pul_votes(ensemble, rows)
        .into_iter()
        .map(|v| v >= majority)
        .collect()
}
