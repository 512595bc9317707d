//! One-way marching of semi-discrete linear hyperbolic systems with the
//! OWNS-P and OWNS-R recursive filters, plus greedy recursion-parameter
//! selection and tracking.
//!
//! Convention used throughout: the marching equation is `dφ/dx = M φ + ĝ`
//! and eigenpairs satisfy `M v = iα v`, so a mode varies as `exp(iαx)` and
//! is downstream-going when `Im α → +∞` as the Laplace growth rate grows.

pub mod band;
pub mod diagnostics;
pub mod filters;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod marching;
pub mod operator;
pub mod param_select;
pub mod spectral;
pub mod system;
pub mod testbeds;

pub use faer::c64;
