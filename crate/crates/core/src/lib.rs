//! Explainable tabular regression.
//!
//! - [`dataset`]: CSV ingestion, preprocessing chain, density weighting, temporal splits
//! - [`models`]: weighted linear, CART, random forest, gradient-boosted trees, MLP
//! - [`metrics`]: MAE / RMSE / R² and Spearman rank correlation
//! - [`dml`]: cross-fitted double machine learning effect estimates
//! - [`attribution`]: RFE, exact and kernel SHAP, Sobol indices, rank comparison
//! - [`synth`]: synthetic generators with planted ground truth
//! - [`pipeline`]: config-driven end-to-end runner and report writer

pub mod attribution;
pub mod dataset;
pub mod dml;
pub mod error;
pub mod frame;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod stats;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
pub use frame::FeatureMatrix;
