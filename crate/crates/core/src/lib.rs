//! Linear price-impact models: the stationary Kyle equilibrium and the
//! propagator model, with estimators, synthetic markets, multi-scale
//! coarse-graining and de-trending.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod error;
pub mod kyle;
mod nnls;
mod numeric;
pub mod propagator;
pub mod scale;
pub mod series;
pub mod stats;
pub mod synth;
pub mod toeplitz;

pub use error::{Error, ErrorClass, Result};
pub use series::{
    AcfCurve, FitParams, FitResult, ImpactKernel, KernelNormalization, LagCurve, LagWindow,
    ResponseCurve, ResponseKind, SampledSeries, SamplingScale, SeriesKind, TimeUnit, Unit,
    Variogram,
};
