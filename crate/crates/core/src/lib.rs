// Range checks are written negated so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dense;
pub mod error;
pub mod hamiltonian;
pub mod lattice;
pub mod rng;
pub mod sparse;
pub mod spectral;
pub mod dynamics;
pub mod analysis;

pub use error::{Error, Result};
