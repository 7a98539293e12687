//! Phenological decision rules: a small expression language over
//! windowed aggregates of index time series.
//!
//! A rule file holds one boolean expression plus `#` comments. The
//! expression combines windowed aggregates (`max`, `min`, `count`,
//! `pctl`, `tmax`, `tmin`, `tq`) of spectral and radar indices with
//! arithmetic, comparisons, and `and` / `or` / `not`. Windows are
//! inclusive DOY ranges on the extended axis, where negative days
//! address the year before the mapping season.

mod ast;
mod eval;
mod library;
mod parse;

pub use ast::{AggExpr, BoolExpr, CmpOp, PointExpr, PointPred, ScalarExpr, Window};
pub use eval::{eval_rule, validate_aggregates, IndexBundle};
pub use library::{builtin_rule, builtin_rules, BuiltinRule, BUILTIN_RULES};
pub use parse::{parse_rule_expr, ParseError};

use std::collections::BTreeSet;
use std::path::Path;

use crate::band::Sensor;
use crate::error::{CoreError, Result};
use crate::grid::TimeGrid;
use crate::index::IndexKind;

/// A parsed rule bound to the class it asserts.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub name: String,
    pub class: String,
    pub expr: BoolExpr,
}

impl Rule {
    /// Parses rule source and validates that no aggregate straddles
    /// the two sensor grids.
    pub fn parse(name: &str, class: &str, source: &str) -> Result<Rule> {
        let expr = parse_rule_expr(source)?;
        validate_aggregates(&expr)?;
        Ok(Rule {
            name: name.to_string(),
            class: class.to_string(),
            expr,
        })
    }

    /// Loads a rule from a file; the rule name is the file stem.
    pub fn from_file(path: &Path, class: &str) -> Result<Rule> {
        let source = std::fs::read_to_string(path)?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| {
                CoreError::RejectedInput(format!("rule path {} has no file stem", path.display()))
            })?;
        Rule::parse(name, class, &source)
    }

    /// Indices the rule reads; the labeling stage computes exactly
    /// these per pixel.
    pub fn indices(&self) -> BTreeSet<IndexKind> {
        self.expr.indices()
    }

    /// Evaluates the rule against one pixel's index bundle.
    pub fn matches(&self, bundle: &IndexBundle) -> Result<bool> {
        eval_rule(&self.expr, bundle)
    }

    /// Checks that every aggregate window selects at least one step on
    /// the grid it will be evaluated against. Run at configuration
    /// load so a rule/grid mismatch fails fast instead of silently
    /// evaluating false everywhere.
    pub fn check_windows(&self, optical: &TimeGrid, radar: &TimeGrid) -> Result<()> {
        for agg in self.expr.aggregates() {
            let sensor = agg
                .indices()
                .iter()
                .next()
                .map(|k| k.sensor())
                .unwrap_or(Sensor::Optical);
            let grid = match sensor {
                Sensor::Optical => optical,
                Sensor::Radar => radar,
            };
            let window = agg.window();
            if grid.steps_in_window(window.lo, window.hi).is_empty() {
                return Err(CoreError::RejectedInput(format!(
                    "rule {}: window of {agg} selects no steps on the {} grid",
                    self.name,
                    match sensor {
                        Sensor::Optical => "optical",
                        Sensor::Radar => "radar",
                    }
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_parse_carries_name_and_class() {
        let rule = Rule::parse("r", "maize", "max(NDVI, 0, 100) > 0.5").unwrap();
        assert_eq!(rule.name, "r");
        assert_eq!(rule.class, "maize");
        assert_eq!(rule.indices().len(), 1);
    }

    #[test]
    fn window_check_flags_off_grid_rules() {
        let rule = Rule::parse("r", "maize", "max(NDVI, 0, 50) > 0.5").unwrap();
        let optical = TimeGrid::new(100, 10, 5);
        let radar = TimeGrid::new(100, 12, 5);
        assert!(rule.check_windows(&optical, &radar).is_err());
        let rule = Rule::parse("r", "maize", "max(NDVI, 0, 100) > 0.5").unwrap();
        assert!(rule.check_windows(&optical, &radar).is_ok());
    }

    #[test]
    fn file_loading_uses_the_stem_as_name() {
        let dir = std::env::temp_dir().join("rule_name_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("my_rule.rule");
        std::fs::write(&path, "max(NDVI, 0, 100) > 0.5").unwrap();
        let rule = Rule::from_file(&path, "rice").unwrap();
        assert_eq!(rule.name, "my_rule");
        std::fs::remove_dir_all(&dir).ok();
    }
}
