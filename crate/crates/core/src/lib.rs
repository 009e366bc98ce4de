//! Predicts whether combinations of machine-learning defenses conflict.
//!
//! Defenses are described declaratively ([`catalog`]), combined pairwise or
//! in sets by a rule-based decision procedure ([`engine`]), arranged into
//! conflict-free orderings ([`planner`]) and scored against combinations
//! with known outcomes ([`groundtruth`], [`eval`]).

#[cfg(feature = "arbitrary")]
pub mod arbitrary;
pub mod catalog;
pub mod engine;
pub mod eval;
pub mod groundtruth;
pub mod planner;
#[cfg(feature = "arbitrary")]
pub mod reference;
pub mod text;

pub use catalog::{builtin_catalog, Catalog, DefenseDescriptor, Risk, Stage};
pub use engine::{predict_naive, predict_pair, predict_set, PredictionTrace, SetTrace, Step, Verdict};
pub use groundtruth::builtin_groundtruth;
pub use text::{Diagnostic, ParseMode, Parsed};
