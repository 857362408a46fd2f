//! Numerical toolkit for almost contact metric structures, their canonical
//! metric deformations, and cohomogeneity-one soliton profiles built from a
//! first-order warping ODE. Frame-algebraic computations are certified
//! against a finite-difference curvature oracle throughout.

pub mod chart;
pub mod cli;
pub mod contact;
pub mod error;
pub mod frame;
pub mod identities;
pub mod models;
pub mod numerics;
pub mod tube;

pub use error::{GeomError, Result};
