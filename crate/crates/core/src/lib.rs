//! Per-drug model selection over algorithms, hyperparameters and gene-set
//! combos under a repeated double-split holdout, and a leave-one-out drug
//! recommender built from the selected models.
//!
//! The modules mirror the pipeline:
//!
//! * [`genomic`]: feature matrices, gene sets, combos and design matrices
//! * [`learners`]: elastic net, RBF SVR and random forest regressors
//! * [`harness`]: repeated outer holdouts with inner tuning splits
//! * [`stats`]: Spearman correlation and the rank-sum test
//! * [`mas`]: per-drug search over algorithms × combos
//! * [`dose`]: dose-response tables and concentration calibration
//! * [`drs`]: leave-one-out recommendation, policies, baselines, evaluation
//! * [`synthetic`]: seeded worlds with planted ground truth
//! * [`cli`]: config files, run manifests and the `synth`/`mas`/`drs`/`report` commands

pub mod cli;
pub mod dose;
pub mod drs;
pub mod error;
pub mod genomic;
pub mod harness;
pub mod learners;
pub mod mas;
pub mod seed;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
