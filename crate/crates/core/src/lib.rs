//! Mean field game equilibria for first-order non-coercive systems on the Heisenberg
//! group and on Heisenberg-type structures.

pub mod corpus;
pub mod couplings;
pub mod error;
pub mod geometry;
pub mod hamiltonian;
pub mod hjb_grid;
pub mod mfg;
pub mod numerics;
pub mod ocp;
pub mod transport;
pub mod validate;

pub use error::{Error, Result};
