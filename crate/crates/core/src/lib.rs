//! Lowest-order virtual element discretization of the time-dependent Maxwell
//! equations on general polyhedral meshes.
//!
//! The electric field lives in the edge space (one tangential DOF per edge),
//! the magnetic induction in the face space (one normal-flux DOF per face).
//! Backward Euler stepping is done on the reduced electric-only system and the
//! induction is updated with the discrete curl, so `div B_h` stays zero up to
//! round-off and solver residual.
//!
//! Everything numerical is generic over [`Real`] (`f32`/`f64`); the `f64`
//! aliases below are what the CLI and the tests use.

// `!(x > 0)` is used on purpose so NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cases;
pub mod cli;
pub mod derham;
pub mod error;
pub mod forms;
pub mod geometry;
pub mod linalg;
pub mod meshio;
pub mod scalar;
pub mod stepper;

pub use error::{Error, MeshError, Result, SolveError};
pub use scalar::{Real, Vec3};

pub type Point = scalar::Vec3<f64>;
pub type Mesh = meshio::PolyMesh<f64>;
pub type Geometry = geometry::MeshGeometry<f64>;
pub type Sparse = linalg::SparseMatrix<f64>;
pub type Dense = linalg::DenseMatrix<f64>;
pub type Elements = derham::ElementOperators<f64>;
pub type Operators = stepper::StepOperators<f64>;
pub type State = stepper::SimulationState<f64>;
pub type Disc = stepper::Discretization<f64>;
