//! Defect-count estimation models for software projects.
//!
//! The crate implements a complete model-building procedure over tabular
//! project records:
//!
//! - [`dataset`]: typed CSV loading, selection filters, listwise deletion, summaries
//! - [`transform`]: log transforms, VAF from GSC ratings, QQ diagnostics, ranking
//! - [`numerics`]: least squares, distribution functions, quadrature, seeded PRNG
//! - [`screening`]: Spearman correlation, one-way ANOVA, Tukey HSD, category merging
//! - [`modeltree`]: M5-style model trees used to corroborate screening
//! - [`regression`]: OLS, stepwise selection, CATREG optimal scaling, prediction
//! - [`recalibration`]: single-input neuro-fuzzy agencies that retune quantifications
//! - [`evaluation`]: MMRE / Pred(m), k-fold and random-split experiments, synthetic data
//! - [`pipeline`]: config-driven orchestration used by the `defectcal` binary
//! - [`goldens`]: golden-fixture verification
//!
//! The numerical kernels are generic over the scalar type through [`Scalar`]
//! (any `num_traits::Float`); the `*64` aliases below fix the scalar to `f64`,
//! which is what the dataset-level code uses. The evaluation metrics accept
//! exact rationals as well.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod goldens;
pub mod modeltree;
pub mod numerics;
pub mod pipeline;
pub mod recalibration;
pub mod regression;
pub mod screening;
pub mod transform;

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive};

pub use error::{Error, ErrorClass, Result};

/// Floating-point scalar accepted by the numerical kernels.
pub trait Scalar: Float + FloatConst + FromPrimitive + Debug + Display + Send + Sync + 'static {
    /// Converts a literal; panics only if the target type cannot hold it.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl<T> Scalar for T where T: Float + FloatConst + FromPrimitive + Debug + Display + Send + Sync + 'static {}

pub type Matrix64 = numerics::linalg::Matrix<f64>;
pub type LeastSquares64 = numerics::linalg::LeastSquaresSolution<f64>;
pub type QqResult64 = transform::QqResult<f64>;
pub type CorrelationResult64 = screening::CorrelationResult<f64>;
pub type AnovaResult64 = screening::AnovaResult<f64>;
pub type TukeyPair64 = screening::TukeyPair<f64>;
pub type Nfa64 = recalibration::Nfa<f64>;
pub type Nfa32 = recalibration::Nfa<f32>;

pub use dataset::{Column, Dataset, FilterRule, Kind, Predicate, Role, Row, Value, VariableSpec};
pub use evaluation::{ExperimentReport, FoldPlan};
pub use recalibration::RecalibrationConfig;
pub use regression::{LinearModel, Quantification, QuantificationSet};
