//! Reconstruction of joint probability densities of multivariate time-series
//! residuals as high-degree polynomials on the unit hypercube.
//!
//! The pipeline has three stages:
//!
//! 1. [`normalize`] — difference each raw series against its previous value,
//!    fit a Laplace (or Gaussian) distribution to the residuals, and map them
//!    through the fitted CDF to nearly uniform variables on `[0, 1]`.
//! 2. [`basis`] / [`density`] — model the joint density of the normalized
//!    vectors as a linear combination of orthonormal polynomial products;
//!    the mean-square-optimal coefficient for each product is simply its
//!    sample average, so estimation is a single pass over the data.
//! 3. [`model`] / [`report`] — assemble context windows (previous time steps
//!    as extra coordinates), fit and persist models, predict densities at
//!    observed points, and evaluate generalization on randomized train/test
//!    splits with plot-ready tabular output.
//!
//! Estimated densities are signed polynomials: small negative excursions are
//! an artifact of the series truncation and are reported as a statistic, not
//! treated as an error.

pub mod basis;
pub mod density;
pub mod error;
pub mod model;
pub mod normalize;
pub mod report;
mod special;

pub use basis::{poly_1d, product_eval, BasisSpec, MultiIndex};
pub use density::{
    CoefficientReport, CoefficientTensor, EstimateOptions, RankedCoefficient, RegionMethod,
    RegionStats, Sigmas, SummationMode,
};
pub use error::{HcrError, Result};
pub use model::{
    build_vectors, default_thresholds, evaluate, evaluate_matrix, fit, holdout_evaluate,
    split_indices, EvaluationReport, MatrixEntry, Model, ModelConfig,
};
pub use normalize::{
    difference_series, empirical_cdf, fit_gaussian, fit_laplace, normalize_series,
    unnormalize_density, NormalizerKind, NormalizerParams, RawSeries, ResidualSeries,
    UniformSeries,
};
pub use report::GridSheet;
