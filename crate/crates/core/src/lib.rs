//! Discrete phase-space lattices, Weyl quantization, Wigner and eta densities, truncated Moyal dynamics
//! and plant/controller coupling analysis.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate blas_src;

pub mod error;
pub mod feedback;
pub mod field;
pub mod fourier;
pub mod hilbert;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod moyal;
pub mod states;
pub mod symbol;
pub mod weyl;
pub mod wigner;
