//! Rule evaluation over per-pixel index bundles.
//!
//! Evaluation is strict about data gaps: an aggregate whose window
//! holds no valid observation is undefined, and any undefined
//! aggregate anywhere in the expression makes the whole rule evaluate
//! to false. A rule therefore only matches when every quantity it
//! tests was actually observable.

use std::collections::BTreeMap;

use crate::error::{CoreError, Result};
use crate::index::{compute_index_series, IndexKind, IndexParams};
use crate::rules::ast::{AggExpr, BoolExpr, PointExpr, ScalarExpr, Window};
use crate::series::{is_valid, SeriesSet};
use crate::stats::percentile;

/// Valid index observations for one pixel as `(extended DOY, value)`
/// pairs in ascending DOY order. Invalid steps are dropped at
/// construction, and observations from several scenes (a prior-year
/// scene and the target year) merge into one axis.
#[derive(Debug, Clone, Default)]
pub struct IndexBundle {
    pub series: BTreeMap<IndexKind, Vec<(i32, f32)>>,
}

impl IndexBundle {
    /// Computes the requested indices from one pixel's band series.
    pub fn from_series_set(
        set: &SeriesSet,
        kinds: impl IntoIterator<Item = IndexKind>,
        params: &IndexParams,
    ) -> Result<IndexBundle> {
        IndexBundle::from_series_sets(&[set], kinds, params)
    }

    /// Computes indices over several series sets for the same pixel
    /// (e.g. prior-year and target-year scenes) and merges them onto
    /// one extended DOY axis.
    pub fn from_series_sets(
        sets: &[&SeriesSet],
        kinds: impl IntoIterator<Item = IndexKind>,
        params: &IndexParams,
    ) -> Result<IndexBundle> {
        let kinds: Vec<IndexKind> = kinds.into_iter().collect();
        let mut series: BTreeMap<IndexKind, Vec<(i32, f32)>> = BTreeMap::new();
        for &kind in &kinds {
            let mut pairs: Vec<(i32, f32)> = Vec::new();
            for set in sets {
                let values = compute_index_series(kind, params, set)?;
                let grid = set.grid(kind.sensor());
                for (k, &v) in values.iter().enumerate() {
                    if is_valid(v) {
                        pairs.push((grid.doy_at(k), v));
                    }
                }
            }
            pairs.sort_by_key(|&(doy, _)| doy);
            series.insert(kind, pairs);
        }
        Ok(IndexBundle { series })
    }

    fn series_for(&self, kind: IndexKind) -> Result<&[(i32, f32)]> {
        self.series
            .get(&kind)
            .map(|v| v.as_slice())
            .ok_or_else(|| CoreError::MissingIndex {
                name: kind.name().to_string(),
            })
    }
}

/// Checks aggregate arguments: each must reference at least one index
/// (otherwise it has no time axis to aggregate over) and must not mix
/// indices from both sensor families, whose grids are incompatible.
pub fn validate_aggregates(expr: &BoolExpr) -> Result<()> {
    for agg in expr.aggregates() {
        let indices = agg.indices();
        if indices.is_empty() {
            return Err(CoreError::RejectedInput(format!(
                "aggregate {agg} references no index"
            )));
        }
        let mut sensors: Vec<_> = indices.iter().map(|k| k.sensor()).collect();
        sensors.dedup();
        if sensors.len() > 1 {
            return Err(CoreError::RejectedInput(format!(
                "aggregate {agg} mixes optical and radar indices"
            )));
        }
    }
    Ok(())
}

/// DOYs within the window at which every referenced index holds a
/// valid value, ascending, paired with per-index values in the order
/// of `kinds`.
fn aligned_window(
    bundle: &IndexBundle,
    kinds: &[IndexKind],
    window: Window,
) -> Result<Vec<(i32, Vec<f64>)>> {
    debug_assert!(!kinds.is_empty());
    let mut slices: Vec<&[(i32, f32)]> = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let pairs = bundle.series_for(kind)?;
        let lo = pairs.partition_point(|&(d, _)| d < window.lo);
        let hi = pairs.partition_point(|&(d, _)| d <= window.hi);
        slices.push(&pairs[lo..hi]);
    }
    // Intersect the sorted DOY lists with one cursor per index.
    let mut out = Vec::new();
    let mut cursors = vec![0usize; slices.len()];
    'outer: loop {
        let mut doy = match slices[0].get(cursors[0]) {
            Some(&(d, _)) => d,
            None => break,
        };
        loop {
            let mut advanced = false;
            for (slice, cursor) in slices.iter().zip(cursors.iter_mut()) {
                while let Some(&(d, _)) = slice.get(*cursor) {
                    if d < doy {
                        *cursor += 1;
                    } else {
                        break;
                    }
                }
                match slice.get(*cursor) {
                    None => break 'outer,
                    Some(&(d, _)) if d > doy => {
                        doy = d;
                        advanced = true;
                    }
                    _ => {}
                }
            }
            if !advanced {
                break;
            }
        }
        let values = slices
            .iter()
            .zip(cursors.iter())
            .map(|(slice, &cursor)| slice[cursor].1 as f64)
            .collect();
        out.push((doy, values));
        for cursor in cursors.iter_mut() {
            *cursor += 1;
        }
    }
    Ok(out)
}

/// Value of a pointwise expression given the aligned per-index values
/// at one DOY.
fn eval_point(expr: &PointExpr, kinds: &[IndexKind], values: &[f64]) -> f64 {
    match expr {
        PointExpr::Number(n) => *n,
        PointExpr::Index(kind) => {
            let i = kinds.iter().position(|k| k == kind).expect("aligned kind");
            values[i]
        }
        PointExpr::Neg(inner) => -eval_point(inner, kinds, values),
        PointExpr::Add(a, b) => eval_point(a, kinds, values) + eval_point(b, kinds, values),
        PointExpr::Sub(a, b) => eval_point(a, kinds, values) - eval_point(b, kinds, values),
        PointExpr::Mul(a, b) => eval_point(a, kinds, values) * eval_point(b, kinds, values),
    }
}

/// Evaluates an aggregate; `None` means no window step had all of its
/// inputs valid.
fn eval_agg(agg: &AggExpr, bundle: &IndexBundle) -> Result<Option<f64>> {
    let kinds: Vec<IndexKind> = agg.indices().into_iter().collect();
    let window = agg.window();
    let aligned = aligned_window(bundle, &kinds, window)?;
    if aligned.is_empty() {
        return Ok(None);
    }
    Ok(Some(match agg {
        AggExpr::Count { pred, .. } => aligned
            .iter()
            .filter(|(_, values)| {
                let l = eval_point(&pred.lhs, &kinds, values);
                let r = eval_point(&pred.rhs, &kinds, values);
                pred.op.apply(l, r)
            })
            .count() as f64,
        AggExpr::Max { arg, .. } => aligned
            .iter()
            .map(|(_, values)| eval_point(arg, &kinds, values))
            .fold(f64::NEG_INFINITY, f64::max),
        AggExpr::Min { arg, .. } => aligned
            .iter()
            .map(|(_, values)| eval_point(arg, &kinds, values))
            .fold(f64::INFINITY, f64::min),
        AggExpr::Pctl { arg, p, .. } => {
            let values: Vec<f64> = aligned
                .iter()
                .map(|(_, values)| eval_point(arg, &kinds, values))
                .collect();
            percentile(&values, *p)
        }
        AggExpr::TMax { arg, .. } | AggExpr::TMin { arg, .. } => {
            let take_max = matches!(agg, AggExpr::TMax { .. });
            let mut best: Option<(i32, f64)> = None;
            for (doy, values) in &aligned {
                let v = eval_point(arg, &kinds, values);
                let better = match best {
                    None => true,
                    Some((_, bv)) => {
                        if take_max {
                            v > bv
                        } else {
                            v < bv
                        }
                    }
                };
                if better {
                    best = Some((*doy, v));
                }
            }
            best.expect("aligned is nonempty").0 as f64
        }
        AggExpr::Tq { arg, p, .. } => {
            let pairs: Vec<(i32, f64)> = aligned
                .iter()
                .map(|(doy, values)| (*doy, eval_point(arg, &kinds, values)))
                .collect();
            let values: Vec<f64> = pairs.iter().map(|&(_, v)| v).collect();
            let q = percentile(&values, *p);
            pairs
                .iter()
                .find(|&&(_, v)| v >= q)
                .expect("threshold never exceeds the window maximum")
                .0 as f64
        }
    }))
}

fn eval_scalar(expr: &ScalarExpr, bundle: &IndexBundle) -> Result<Option<f64>> {
    Ok(match expr {
        ScalarExpr::Number(n) => Some(*n),
        ScalarExpr::Agg(agg) => eval_agg(agg, bundle)?,
        ScalarExpr::Neg(inner) => eval_scalar(inner, bundle)?.map(|v| -v),
        ScalarExpr::Add(a, b) => match (eval_scalar(a, bundle)?, eval_scalar(b, bundle)?) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        },
        ScalarExpr::Sub(a, b) => match (eval_scalar(a, bundle)?, eval_scalar(b, bundle)?) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        },
        ScalarExpr::Mul(a, b) => match (eval_scalar(a, bundle)?, eval_scalar(b, bundle)?) {
            (Some(a), Some(b)) => Some(a * b),
            _ => None,
        },
    })
}

fn eval_bool(expr: &BoolExpr, bundle: &IndexBundle) -> Result<Option<bool>> {
    Ok(match expr {
        BoolExpr::Cmp { lhs, op, rhs } => {
            match (eval_scalar(lhs, bundle)?, eval_scalar(rhs, bundle)?) {
                (Some(l), Some(r)) => Some(op.apply(l, r)),
                _ => None,
            }
        }
        BoolExpr::And(a, b) => match (eval_bool(a, bundle)?, eval_bool(b, bundle)?) {
            (Some(a), Some(b)) => Some(a && b),
            _ => None,
        },
        BoolExpr::Or(a, b) => match (eval_bool(a, bundle)?, eval_bool(b, bundle)?) {
            (Some(a), Some(b)) => Some(a || b),
            _ => None,
        },
        BoolExpr::Not(inner) => eval_bool(inner, bundle)?.map(|v| !v),
    })
}

/// Evaluates a rule expression against one pixel's indices. Undefined
/// aggregates anywhere make the result false.
///
/// # Errors
/// Fails when the expression references an index absent from the
/// bundle.
pub fn eval_rule(expr: &BoolExpr, bundle: &IndexBundle) -> Result<bool> {
    Ok(eval_bool(expr, bundle)?.unwrap_or(false))
}
