//! The Heisenberg group and general Heisenberg-type matrix structures.

pub mod cutoff;
pub mod hypotheses;
pub mod operators;
pub mod point;
pub mod structure;

pub use cutoff::Cutoff;
pub use hypotheses::{check_hypotheses, HypothesisReport, SampleBox};
pub use point::HeisenbergPoint;
pub use structure::{Coefficient, CoefficientFn, Entry, HTypeStructure, Jet, MAX_DIM};
