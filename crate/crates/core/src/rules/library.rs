//! Rule library shipped with the crate.
//!
//! The sources live under `rules/` at the repository root and are
//! embedded at compile time; loading them by path through
//! [`Rule::from_file`](crate::rules::Rule::from_file) yields the same
//! programs.

use crate::error::{CoreError, Result};
use crate::rules::Rule;

/// Name, target class, and source of one shipped rule.
pub struct BuiltinRule {
    pub name: &'static str,
    pub class: &'static str,
    pub source: &'static str,
}

/// The shipped rule set. Names follow `<crop>_<region>`; several rules
/// may target the same class (regional variants), but a pipeline
/// configuration binds at most one rule per class.
pub const BUILTIN_RULES: [BuiltinRule; 7] = [
    BuiltinRule {
        name: "fallow_zhijiang",
        class: "fallow",
        source: include_str!("../../../../rules/fallow_zhijiang.rule"),
    },
    BuiltinRule {
        name: "summer_maize_zhijiang",
        class: "maize",
        source: include_str!("../../../../rules/summer_maize_zhijiang.rule"),
    },
    BuiltinRule {
        name: "summer_maize_huantai",
        class: "maize",
        source: include_str!("../../../../rules/summer_maize_huantai.rule"),
    },
    BuiltinRule {
        name: "spring_maize_huantai",
        class: "maize",
        source: include_str!("../../../../rules/spring_maize_huantai.rule"),
    },
    BuiltinRule {
        name: "soybean_huantai",
        class: "soybean",
        source: include_str!("../../../../rules/soybean_huantai.rule"),
    },
    BuiltinRule {
        name: "rice_zhijiang",
        class: "rice",
        source: include_str!("../../../../rules/rice_zhijiang.rule"),
    },
    BuiltinRule {
        name: "vegetables_huantai",
        class: "vegetables",
        source: include_str!("../../../../rules/vegetables_huantai.rule"),
    },
];

/// Parses every shipped rule.
pub fn builtin_rules() -> Result<Vec<Rule>> {
    BUILTIN_RULES
        .iter()
        .map(|b| Rule::parse(b.name, b.class, b.source))
        .collect()
}

/// Parses one shipped rule by name.
pub fn builtin_rule(name: &str) -> Result<Rule> {
    let entry = BUILTIN_RULES
        .iter()
        .find(|b| b.name == name)
        .ok_or_else(|| {
            CoreError::RejectedInput(format!(
                "no builtin rule named '{name}' (available: {})",
                BUILTIN_RULES
                    .iter()
                    .map(|b| b.name)
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })?;
    Rule::parse(entry.name, entry.class, entry.source)
}
