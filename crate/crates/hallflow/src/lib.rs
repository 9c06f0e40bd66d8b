//! Finite magnetic-torus realization of the NEASS approach to Hall response.
//!
//! Operators live on the fermionic Fock space of an `L x L` torus in the
//! Jordan-Wigner representation. Everything downstream (filter maps, the
//! NEASS recursion, the Hall conductivity) is an exact matrix computation.

pub mod error;
pub mod filter;
pub mod fit;
pub mod fock;
pub mod hofstadter;
pub mod interactions;
pub mod lattice;
pub mod linalg;
pub mod matrix_io;
pub mod neass;
pub mod quasi_free;
pub mod response;
pub mod state;

pub use error::{Error, Result};
pub use faer::complex_native::c64;
pub use faer::Mat;
pub use filter::{FilterKernel, FlowSpec, InsideProfile};
pub use fock::FockOperator;
pub use lattice::{Flux, Site, TorusLattice};
pub use state::State;
