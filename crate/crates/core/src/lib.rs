//! Numerical toolkit for multilinear fractional integrals on weighted Hardy
//! spaces: grids and cubes, Muckenhoupt-type weight constants, maximal
//! operators, fractional kernels, atoms, and variable-exponent norms.

pub mod atoms;
pub mod error;
pub mod grid;
pub mod jet;
pub mod kernels;
pub mod maximal;
pub mod quadrature;
pub mod varexp;
pub mod weights;

pub use error::{Error, Result};
pub use grid::{integrate, weighted_lp_quasinorm, BoxDomain, Cube, DyadicFamily, Grid, GridFunction};
