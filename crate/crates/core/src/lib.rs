//! Overlap splines on scattered nodes, meshless finite differences and
//! discrete least squares for linear boundary value problems.
//!
//! The pipeline runs bottom-up: a [`NodeSet`] is covered by influence sets,
//! each carrying a patch space ([`spaces`]); together they form an
//! [`OverlapSplineSpace`] ([`spline`]). Stencil weights come either from the
//! Lagrange basis of a patch or from exactness conditions ([`ndf`]), and
//! [`solve`] assembles and solves the global collocation or least-squares system.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod linalg;
pub mod ndf;
pub mod operator;
pub mod pipeline;
pub mod problems;
pub mod pum;
pub mod solve;
pub mod spaces;
pub mod spline;

pub use error::{Error, Result};
pub use geometry::{generate_grid, generate_scattered, Bounds, InfluenceSet, NodeSet, Point, PointSource};
pub use ndf::{verify_exactness, weights_kernel, weights_poly, StencilWeights};
pub use operator::{Jet, Operator, OperatorKind, SecondOrderCoefficients};
pub use pipeline::{Mode, PumOutput, RunConfig, RunOutput, Sampling, StencilOutput};
pub use problems::{convergence_study, ConvergenceRow, Manufactured, OperatorSpec, Preset, Problem};
pub use pum::{blend, blend_disconnected, pick_first, LocalFit, PartitionOfUnity, Profile};
pub use solve::{
    assemble, build_sigma, row_weights, solve_least_squares, solve_square, GlobalSystem, LsqOptions, Route, SigmaMap,
    SigmaStrategy, Solution,
};
pub use spaces::{Kernel, KernelSpace, PatchSpace, PolySpace, SpaceSpec};
pub use spline::{
    build_space, dimension_analysis, lagrange_row, Centers, DimensionReport, OverlapSpline, OverlapSplineSpace,
    Selector,
};
