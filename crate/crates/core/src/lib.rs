//! Engine misfire detection from vibration statistics.
//!
//! The pipeline runs from raw (or synthetic) acceleration signals through
//! per-window descriptive statistics, a decision-tree feature ranking and a
//! K* classifier to cross-validated confusion matrices.

pub mod dataset;
pub mod dtree;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod kstar;

pub use dataset::{read_dataset, stratified_folds, write_dataset, Dataset, FoldAssignment, LabelSet};
pub use dtree::{build_tree, rank_features, FeatureRanking, RankedFeature, TreeNode, TreeParams};
pub use error::{Error, Result};
pub use eval::{cross_validate, feature_sweep, ConfusionMatrix, EvalReport, Protocol, SweepResult};
pub use features::{extract_features, FeatureVector, FEATURE_NAMES};
pub use ingest::{
    load_signal, synth_engine_signal, window_signal, Condition, EngineSimConfig, RawSignal,
    SignalWindow,
};
pub use kstar::{KStarModel, QueryEvaluation, ScaleSearch};
