//! Interpretable feature-interaction classifier for sparse binary data.
//!
//! A batch is routed either through a linear-attention path for continuous
//! inputs or through a categorical path that mixes learned products over
//! sampled feature combinations. The categorical path can be read back as
//! conjunctive rules.
#![no_std]

extern crate alloc;

pub mod activation;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod layers;
pub mod matrix;
pub mod rng;
pub mod rules;
pub mod training;

pub use activation::ActivationKind;
pub use datagen::{generate_gate_dataset, Gate, GateSpec};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use eval::{macro_f1, stratified_folds, stratified_holdout, LogisticConfig, LogisticModel};
pub use layers::{cat_router, CombTable, Route};
pub use matrix::Matrix;
pub use rng::RngStream;
pub use rules::{extract_rules, RuleEntry, RuleReport};
pub use training::{fit, predict, HorNetsConfig, HorNetsModel, RoutePolicy, TrainReport};
