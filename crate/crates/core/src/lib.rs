//! Matrix-free, rank-parallel finite-difference Poisson solver on a uniform
//! 3D Cartesian grid: preconditioned Bi-CGSTAB with Chebyshev and
//! block-Jacobi preconditioners, halo-exchange domain decomposition, and a
//! dense Kronecker oracle for verification.

pub mod chebyshev;
pub mod config;
pub mod comm;
pub mod error;
pub mod grid;
pub mod krylov;
pub mod operator;
pub mod precond;
pub mod problem;
pub mod report;
pub mod runner;

pub use error::{CommError, Error, Result};
