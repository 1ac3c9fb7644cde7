//! Numerical laboratory for parameter-elliptic boundary-value problems on
//! the extended Sobolev scale.
//!
//! * [`rofunc`]: RO-varying smoothness parameters, Matuszewska indices and
//!   the interpolation parameter built from them.
//! * [`spaces`]: Hörmander norms on 1D/2D tori through a unitary DFT.
//! * [`interpolation`]: interpolation with a function parameter for
//!   finite-dimensional Hilbert couples.
//! * [`symbols`]: boundary-value problem data and the parameter-ellipticity
//!   checker.
//! * [`strip`]: constant-coefficient problems on the periodic strip and the
//!   λ-scans of the weighted operator.

pub mod rofunc;
pub mod spaces;
pub mod interpolation;
pub mod symbols;
pub mod strip;
