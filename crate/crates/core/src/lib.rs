//! Origin-destination truck flow modelling.
//!
//! The crate covers the whole desk-scale pipeline:
//!
//! * [`ingest`]: loading, filtering and joining OD flow records with zone
//!   attributes (optionally aggregated from county rows),
//! * [`features`]: great-circle distances, log transforms, the model feature
//!   matrix and descriptive statistics,
//! * [`gbt`]: a second-order gradient-boosted regression tree ensemble with
//!   exact greedy split finding,
//! * [`shap`]: exact Shapley values and pairwise interaction values for the
//!   ensemble, with a brute-force enumeration path and a per-leaf fast path,
//! * [`harness`]: train/test splits, k-fold cross-validation, grid search and
//!   metrics,
//! * [`synth`]: a gravity-law synthetic zone and flow generator,
//! * [`plot`]: static SVG charts for importance, beeswarm, dependence and
//!   interaction displays.

pub mod features;
pub mod gbt;
pub mod harness;
pub mod ingest;
pub mod plot;
pub mod rng;
pub mod shap;
pub mod synth;

pub use features::{FeatureMatrix, StatsSummary, FEATURE_NAMES, N_FEATURES};
pub use gbt::{GbtModel, Hyperparams};
pub use ingest::{AugmentedRecord, OdRecord, ZoneAttributes};
pub use shap::{GlobalImportance, InteractionMatrix, ShapExplanation};

