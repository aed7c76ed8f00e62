//! Numerical laboratory for the eps-scaled grey radiative transfer system
//! coupled to a temperature equation, its equilibrium-diffusion limit, the
//! initial layers, and convergence studies between the two.
//!
//! The kernels are generic over [`Real`]; the aliases below fix `f64`.

// Negated comparisons reject NaN along with out-of-range values; stencil
// loops index several arrays by cell.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod error;
pub mod expansion;
pub mod field;
pub mod grid;
pub mod harness;
pub mod io;
pub mod kinetic;
pub mod layers;
pub mod limit;
pub mod linsolve;
pub mod norms;
pub mod ops;
pub mod oracle;
pub mod quadrature;
pub mod real;
pub mod velocity;

pub use error::{Error, Result};
pub use real::Real;
pub use velocity::VelocityField;

pub type Grid = grid::PeriodicGrid<f64>;
pub type Quadrature = quadrature::AngularQuadrature<f64>;
pub type Scalar = field::ScalarField<f64>;
pub type Directional = field::DirectionalField<f64>;
pub type KineticState = kinetic::KineticState<f64>;
pub type KineticParams = kinetic::KineticParams<f64>;
