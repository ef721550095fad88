//! Depth reconstruction from sparse samples by minimizing the ℓ1 norm of
//! second-order differences.
//!
//! The numeric core ([`DiffOperator`], [`nesta_solve`], the reference LP)
//! is generic over [`Scalar`] (`f32` or `f64`). Analysis, recovery
//! pipelines, sampling and data generation work in `f64`; the aliases
//! below name the concrete types they use.

// `!(x > 0.0)` style guards are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod datagen;
pub mod error;
mod interp;
pub mod io;
pub mod model;
pub mod operators;
pub mod recovery;
pub mod sampling;
pub mod scalar;
pub mod solver;

pub use datagen::{add_noise, gen_depth_3d, gen_profile_1d, measure, metrics, GenSpec1D, GenSpec3D, MetricsReport};
pub use error::{Error, Result};
pub use model::{devectorize, subsample, vectorize, AsProfile, DepthImage, Measurements, Profile1D, SampleSet, Shape};
pub use operators::{count_nonzero, DiffOperator, OperatorKind, Stencil, DEFAULT_SPACING_GUARD, DEFAULT_ZERO_TOL};
pub use recovery::{
    algorithm1, multiframe_accumulate, naive_interpolation, reconstruct, superresolve, Algorithm1Output,
    CameraIntrinsics, Objective, Pose, SegmentChoice,
};
pub use sampling::{add_neighbors, draw_samples, SamplingSpec, Source, Strategy};
pub use scalar::Scalar;
pub use solver::{
    merge_duplicates, nesta_solve, project_linf_box, reference_lp_solve, smoothed_objective_gradient, Init, SolveResult,
    SolverConfig,
};

pub type Profile = Profile1D<f64>;
pub type Image = DepthImage<f64>;
pub type Meas = Measurements<f64>;
pub type Operator = DiffOperator<f64>;
