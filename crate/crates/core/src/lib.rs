//! Numerical tools for the monopolist screening problem on the square of
//! agent types `[a, a+1]^2` with quadratic production cost.

pub mod banded;
pub mod bvp;
pub mod closed_form;
pub mod direct;
pub mod error;
pub mod euler_lagrange;
pub mod grid;
pub mod interp;
pub mod par;
pub mod params;
pub mod pricing;
pub mod pipeline;
pub mod regions;
pub mod svg;

pub use error::{Error, Result};
pub use grid::{ScalarField, VectorField};
pub use params::ModelParams;
