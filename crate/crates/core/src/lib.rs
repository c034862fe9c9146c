//! Finite-window laboratory for lattice spin systems: Gibbs specifications,
//! block-spin transformations, relative entropy and pressure functionals,
//! and quasilocality diagnostics.

pub mod engines;
pub mod error;
pub mod lattice;
pub mod par;
pub mod quasilocality;
pub mod renormalization;
pub mod specification;
pub mod thermo;

pub use error::{Error, Result};
