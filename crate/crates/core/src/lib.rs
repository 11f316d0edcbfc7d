//! Information bounds, local likelihood ratios and rank-based estimators
//! for Gaussian copula models with structured correlation matrices.
//!
//! The modules build on each other: [`corrmodels`] defines the correlation
//! families, [`infobounds`] the Fisher information and its nuisance-adjusted
//! forms, [`sampling`] the simulated data and normal scores, [`lanlab`] the
//! exact and rank-based local log-likelihood ratios, and [`estimators`] the
//! rank-based estimators together with a benchmark harness.

pub mod corrmodels;
pub mod error;
pub mod estimators;
mod fmt;
pub mod infobounds;
pub mod lanlab;
pub mod linalg;
pub mod sampling;
mod stats;

pub use corrmodels::{
    CorrelationMatrix, CorrelationModel, Family, GradientStack, ModelPoint, PrecisionMatrix,
};
pub use error::{Error, Result};
pub use estimators::{BenchConfig, BenchReport, EstimateResult, Estimator};
pub use infobounds::{BoundCurve, BoundPoint, EfficientInfo, InfoDecomposition, Regime};
pub use lanlab::{
    AMatrixStack, HVector, LanConfig, LocalPerturbation, McReport, Precisions, QuadStats,
};
pub use sampling::{DataMatrix, Margin, MarginSpec, RankMatrix, ScoreMatrix};
