//! Factorization of non-negative learner-behavior matrices into common
//! learning patterns and individual affinities, with bootstrap inference
//! on the result.
//!
//! The pipeline: ingest a features x learners matrix ([`data_io`]), scale
//! rows to [0, 1], factorize X ~ P A^T by alternating non-negative least
//! squares ([`nmf`], inner solver in [`nnls`]), then quantify stability
//! with learner-level bootstrap confidence intervals and a two-group
//! mean-difference test ([`stats`]). [`synth`] generates ground-truth
//! fixtures for end-to-end verification.

pub mod assignment;
pub mod data_io;
pub mod matrix;
pub mod nmf;
pub mod nnls;
pub mod seeding;
pub mod stats;
pub mod synth;

pub use data_io::{FeatureSchema, GroupLabeling, Orientation, ScalingRecord};
pub use matrix::Matrix;
pub use nmf::{Alignment, FactorPair, FitConfig, RescaleMode};
pub use nnls::{NnlsOptions, NnlsSolution};
pub use stats::{AffinitySummary, BootstrapConfig, CoefficientCI, TestReport};
pub use synth::{SynthConfig, SynthData};
