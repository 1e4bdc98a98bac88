//! Nonparametric least-squares fitting of smooth strongly convex functions.
//!
//! Fitted values and gradients at the observation sites are constrained to be interpolable
//! by an `L`-smooth, `mu`-strongly convex function. The resulting QCQP is split over the
//! directed pairs of sites and solved by consensus ADMM, each edge subproblem through its
//! one-dimensional dual. [`interpolant`] turns fitted triplets into a function defined
//! everywhere.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod admm;
pub mod constraints;
pub mod harness;
pub mod interpolant;
pub mod linalg;
pub mod local_qcqp;
pub mod model;
pub mod warmstart;

pub use admm::{fit, fit_with, AdmmConfig, AdmmError, AdmmFit, AdmmState, ZUpdate};
pub use constraints::{certify, constraint_residual, Certification, PairResidual};
pub use model::{
    validate_observations, CertifiedModel, FunctionClass, ModelError, ObservationSet,
    Smoothness, Triplets,
};
