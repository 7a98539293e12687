//! Cascaded crop-type mapping from satellite image time series.
//!
//! The crate implements a two-stage cascade. Stage one reads pixels
//! with dense, clean time series ("strong features"), labels them with
//! expert phenological decision rules, and degrades their series to
//! match the gap statistics of ordinary pixels. Stage two trains
//! random forests on those samples and classifies every pixel,
//! optionally adding classes learned from positive-only reference data
//! and mixed-pixel classes synthesized from a canopy geometry model.
//!
//! Modules follow the processing order: [`scene`] and [`series`] hold
//! the data model, [`rules`] the labeling language, [`label`] ->
//! [`weaken`] -> [`mixture`] -> [`forest`] the cascade itself,
//! [`scenegen`] the synthetic-scene source used for testing, and
//! [`pipeline`] the end-to-end driver the CLI wraps.

pub mod band;
pub mod error;
pub mod features;
pub mod forest;
pub mod grid;
pub mod index;
pub mod io;
pub mod label;
pub mod mixture;
pub mod morphology;
pub mod pipeline;
pub mod rules;
pub mod sample;
pub mod scene;
pub mod scenegen;
pub mod series;
pub mod stats;
pub mod weaken;

pub use band::{Band, Sensor};
pub use error::{CoreError, Result};
pub use grid::TimeGrid;
pub use index::{IndexKind, IndexParams};
pub use scene::{SceneStack, NO_LABEL};
pub use series::{SeriesSet, INVALID};
