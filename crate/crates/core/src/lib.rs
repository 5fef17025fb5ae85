//! Manifold-regularised large-margin ℓp-SVDD for multivariate time series.
//!
//! Windows of a series are compared with a PDE-computed signature kernel, the
//! training windows are connected by a k-nearest-neighbour graph, and the
//! graph Laplacian is absorbed into an effective kernel
//! `Q = (4 c3 K L + I)⁻¹ K` on which the one-class dual problem is solved.

// `!(x > 0.0)` is how NaN gets rejected alongside nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod linalg;
pub mod manifold;
pub mod pipeline;
pub mod sigkernel;
pub mod svdd;
pub mod timeseries;

pub use error::{Error, Result};
pub use eval::{ConfusionMatrix, Metrics, MetricsReport};
pub use linalg::{Matrix, Vector};
pub use manifold::{AdjacencyGraph, EffectiveKernel, Laplacian};
pub use pipeline::{ModelArtifact, RunConfig, ScoreReport, WidthRule};
pub use sigkernel::{
    GramMatrix, Path, SigKernelConfig, SignatureKernel, StaticKernel, StaticKernelConfig,
};
pub use svdd::{DualSolution, HyperParams, Model, SolverOptions};
pub use timeseries::{AnomalyInjectionConfig, AnomalyKind, RawSeries, WindowSet};
