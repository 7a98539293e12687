//! Abstract syntax for phenological decision rules.
//!
//! A rule is one boolean expression over windowed aggregates of index
//! time series. `Display` renders canonical text that parses back to
//! the same tree.

use std::collections::BTreeSet;
use std::fmt;

use crate::index::IndexKind;

/// Comparison operators usable both between scalars and inside
/// pointwise predicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    pub fn apply(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
        }
    }
}

/// Pointwise expression evaluated per grid step inside an aggregate.
#[derive(Debug, Clone, PartialEq)]
pub enum PointExpr {
    Index(IndexKind),
    Number(f64),
    Neg(Box<PointExpr>),
    Add(Box<PointExpr>, Box<PointExpr>),
    Sub(Box<PointExpr>, Box<PointExpr>),
    Mul(Box<PointExpr>, Box<PointExpr>),
}

/// Pointwise predicate, the argument of `count`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPred {
    pub lhs: PointExpr,
    pub op: CmpOp,
    pub rhs: PointExpr,
}

/// Inclusive DOY window on the extended axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub lo: i32,
    pub hi: i32,
}

/// Windowed aggregates over index series.
///
/// Value aggregates (`max`, `min`, `pctl`) reduce the valid pointwise
/// values in the window; `count` counts steps satisfying a predicate;
/// time aggregates (`tmax`, `tmin`, `tq`) return extended DOYs.
#[derive(Debug, Clone, PartialEq)]
pub enum AggExpr {
    Max { arg: PointExpr, window: Window },
    Min { arg: PointExpr, window: Window },
    Count { pred: PointPred, window: Window },
    Pctl { arg: PointExpr, p: f64, window: Window },
    TMax { arg: PointExpr, window: Window },
    TMin { arg: PointExpr, window: Window },
    /// DOY when the series first reaches its `p`-th percentile over
    /// the window.
    Tq { arg: PointExpr, p: f64, window: Window },
}

/// Scalar expression combining aggregates and constants.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarExpr {
    Number(f64),
    Agg(AggExpr),
    Neg(Box<ScalarExpr>),
    Add(Box<ScalarExpr>, Box<ScalarExpr>),
    Sub(Box<ScalarExpr>, Box<ScalarExpr>),
    Mul(Box<ScalarExpr>, Box<ScalarExpr>),
}

/// Boolean rule expression.
#[derive(Debug, Clone, PartialEq)]
pub enum BoolExpr {
    Cmp {
        lhs: ScalarExpr,
        op: CmpOp,
        rhs: ScalarExpr,
    },
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
    Not(Box<BoolExpr>),
}

impl PointExpr {
    fn collect_indices(&self, out: &mut BTreeSet<IndexKind>) {
        match self {
            PointExpr::Index(kind) => {
                out.insert(*kind);
            }
            PointExpr::Number(_) => {}
            PointExpr::Neg(inner) => inner.collect_indices(out),
            PointExpr::Add(a, b) | PointExpr::Sub(a, b) | PointExpr::Mul(a, b) => {
                a.collect_indices(out);
                b.collect_indices(out);
            }
        }
    }
}

impl AggExpr {
    pub fn window(&self) -> Window {
        match self {
            AggExpr::Max { window, .. }
            | AggExpr::Min { window, .. }
            | AggExpr::Count { window, .. }
            | AggExpr::Pctl { window, .. }
            | AggExpr::TMax { window, .. }
            | AggExpr::TMin { window, .. }
            | AggExpr::Tq { window, .. } => *window,
        }
    }

    /// Indices referenced by this aggregate.
    pub fn indices(&self) -> BTreeSet<IndexKind> {
        let mut out = BTreeSet::new();
        match self {
            AggExpr::Count { pred, .. } => {
                pred.lhs.collect_indices(&mut out);
                pred.rhs.collect_indices(&mut out);
            }
            AggExpr::Max { arg, .. }
            | AggExpr::Min { arg, .. }
            | AggExpr::Pctl { arg, .. }
            | AggExpr::TMax { arg, .. }
            | AggExpr::TMin { arg, .. }
            | AggExpr::Tq { arg, .. } => arg.collect_indices(&mut out),
        }
        out
    }
}

impl ScalarExpr {
    fn visit_aggs<'a>(&'a self, out: &mut Vec<&'a AggExpr>) {
        match self {
            ScalarExpr::Number(_) => {}
            ScalarExpr::Agg(agg) => out.push(agg),
            ScalarExpr::Neg(inner) => inner.visit_aggs(out),
            ScalarExpr::Add(a, b) | ScalarExpr::Sub(a, b) | ScalarExpr::Mul(a, b) => {
                a.visit_aggs(out);
                b.visit_aggs(out);
            }
        }
    }
}

impl BoolExpr {
    /// Every aggregate in the expression, left to right.
    pub fn aggregates(&self) -> Vec<&AggExpr> {
        let mut out = Vec::new();
        self.visit_aggs(&mut out);
        out
    }

    fn visit_aggs<'a>(&'a self, out: &mut Vec<&'a AggExpr>) {
        match self {
            BoolExpr::Cmp { lhs, rhs, .. } => {
                lhs.visit_aggs(out);
                rhs.visit_aggs(out);
            }
            BoolExpr::And(a, b) | BoolExpr::Or(a, b) => {
                a.visit_aggs(out);
                b.visit_aggs(out);
            }
            BoolExpr::Not(inner) => inner.visit_aggs(out),
        }
    }

    /// Every index the expression reads.
    pub fn indices(&self) -> BTreeSet<IndexKind> {
        let mut out = BTreeSet::new();
        for agg in self.aggregates() {
            out.extend(agg.indices());
        }
        out
    }
}

fn fmt_point(expr: &PointExpr, f: &mut fmt::Formatter<'_>, parent: u8) -> fmt::Result {
    let prec = match expr {
        PointExpr::Add(..) | PointExpr::Sub(..) => 1,
        PointExpr::Mul(..) => 2,
        PointExpr::Neg(..) => 3,
        PointExpr::Index(_) | PointExpr::Number(_) => 4,
    };
    let parens = prec < parent;
    if parens {
        f.write_str("(")?;
    }
    match expr {
        PointExpr::Index(kind) => write!(f, "{kind}")?,
        PointExpr::Number(n) => write!(f, "{n}")?,
        PointExpr::Neg(inner) => {
            f.write_str("-")?;
            fmt_point(inner, f, 3)?;
        }
        PointExpr::Add(a, b) => {
            fmt_point(a, f, 1)?;
            f.write_str(" + ")?;
            fmt_point(b, f, 2)?;
        }
        PointExpr::Sub(a, b) => {
            fmt_point(a, f, 1)?;
            f.write_str(" - ")?;
            fmt_point(b, f, 2)?;
        }
        PointExpr::Mul(a, b) => {
            fmt_point(a, f, 2)?;
            f.write_str(" * ")?;
            fmt_point(b, f, 3)?;
        }
    }
    if parens {
        f.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for PointExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_point(self, f, 0)
    }
}

impl fmt::Display for AggExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggExpr::Max { arg, window } => {
                write!(f, "max({arg}, {}, {})", window.lo, window.hi)
            }
            AggExpr::Min { arg, window } => {
                write!(f, "min({arg}, {}, {})", window.lo, window.hi)
            }
            AggExpr::Count { pred, window } => write!(
                f,
                "count({} {} {}, {}, {})",
                pred.lhs,
                pred.op.symbol(),
                pred.rhs,
                window.lo,
                window.hi
            ),
            AggExpr::Pctl { arg, p, window } => {
                write!(f, "pctl({arg}, {p}, {}, {})", window.lo, window.hi)
            }
            AggExpr::TMax { arg, window } => {
                write!(f, "tmax({arg}, {}, {})", window.lo, window.hi)
            }
            AggExpr::TMin { arg, window } => {
                write!(f, "tmin({arg}, {}, {})", window.lo, window.hi)
            }
            AggExpr::Tq { arg, p, window } => {
                write!(f, "tq({arg}, {p}, {}, {})", window.lo, window.hi)
            }
        }
    }
}

fn fmt_scalar(expr: &ScalarExpr, f: &mut fmt::Formatter<'_>, parent: u8) -> fmt::Result {
    let prec = match expr {
        ScalarExpr::Add(..) | ScalarExpr::Sub(..) => 1,
        ScalarExpr::Mul(..) => 2,
        ScalarExpr::Neg(..) => 3,
        ScalarExpr::Number(_) | ScalarExpr::Agg(_) => 4,
    };
    let parens = prec < parent;
    if parens {
        f.write_str("(")?;
    }
    match expr {
        ScalarExpr::Number(n) => write!(f, "{n}")?,
        ScalarExpr::Agg(agg) => write!(f, "{agg}")?,
        ScalarExpr::Neg(inner) => {
            f.write_str("-")?;
            fmt_scalar(inner, f, 3)?;
        }
        ScalarExpr::Add(a, b) => {
            fmt_scalar(a, f, 1)?;
            f.write_str(" + ")?;
            fmt_scalar(b, f, 2)?;
        }
        ScalarExpr::Sub(a, b) => {
            fmt_scalar(a, f, 1)?;
            f.write_str(" - ")?;
            fmt_scalar(b, f, 2)?;
        }
        ScalarExpr::Mul(a, b) => {
            fmt_scalar(a, f, 2)?;
            f.write_str(" * ")?;
            fmt_scalar(b, f, 3)?;
        }
    }
    if parens {
        f.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_scalar(self, f, 0)
    }
}

fn fmt_bool(expr: &BoolExpr, f: &mut fmt::Formatter<'_>, parent: u8) -> fmt::Result {
    let prec = match expr {
        BoolExpr::Or(..) => 1,
        BoolExpr::And(..) => 2,
        BoolExpr::Not(..) => 3,
        BoolExpr::Cmp { .. } => 4,
    };
    let parens = prec < parent;
    if parens {
        f.write_str("(")?;
    }
    match expr {
        BoolExpr::Cmp { lhs, op, rhs } => write!(f, "{lhs} {} {rhs}", op.symbol())?,
        BoolExpr::And(a, b) => {
            fmt_bool(a, f, 2)?;
            f.write_str(" and ")?;
            fmt_bool(b, f, 3)?;
        }
        BoolExpr::Or(a, b) => {
            fmt_bool(a, f, 1)?;
            f.write_str(" or ")?;
            fmt_bool(b, f, 2)?;
        }
        BoolExpr::Not(inner) => {
            f.write_str("not ")?;
            fmt_bool(inner, f, 3)?;
        }
    }
    if parens {
        f.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for BoolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_bool(self, f, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agg_max(kind: IndexKind, lo: i32, hi: i32) -> ScalarExpr {
        ScalarExpr::Agg(AggExpr::Max {
            arg: PointExpr::Index(kind),
            window: Window { lo, hi },
        })
    }

    #[test]
    fn display_is_canonical() {
        let expr = BoolExpr::And(
            Box::new(BoolExpr::Cmp {
                lhs: agg_max(IndexKind::Ndvi, 150, 240),
                op: CmpOp::Gt,
                rhs: ScalarExpr::Number(0.6),
            }),
            Box::new(BoolExpr::Not(Box::new(BoolExpr::Cmp {
                lhs: agg_max(IndexKind::Lswi, 90, 150),
                op: CmpOp::Eq,
                rhs: ScalarExpr::Number(0.0),
            }))),
        );
        assert_eq!(
            expr.to_string(),
            "max(NDVI, 150, 240) > 0.6 and not max(LSWI, 90, 150) == 0"
        );
    }

    #[test]
    fn nested_or_under_and_gets_parens() {
        let cmp = |v: f64| BoolExpr::Cmp {
            lhs: ScalarExpr::Number(v),
            op: CmpOp::Lt,
            rhs: ScalarExpr::Number(1.0),
        };
        let expr = BoolExpr::And(
            Box::new(cmp(0.0)),
            Box::new(BoolExpr::Or(Box::new(cmp(2.0)), Box::new(cmp(3.0)))),
        );
        assert_eq!(expr.to_string(), "0 < 1 and (2 < 1 or 3 < 1)");
    }

    #[test]
    fn indices_are_collected_once() {
        let expr = BoolExpr::Cmp {
            lhs: ScalarExpr::Sub(
                Box::new(agg_max(IndexKind::Ndvi, 0, 100)),
                Box::new(agg_max(IndexKind::Ndvi, 100, 200)),
            ),
            op: CmpOp::Gt,
            rhs: ScalarExpr::Number(0.0),
        };
        assert_eq!(expr.indices().len(), 1);
        assert!(expr.indices().contains(&IndexKind::Ndvi));
    }
}
