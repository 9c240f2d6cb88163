//! Particle measures, their Lagrangian transport, densities and `d₁` distances.

pub mod initial;
pub mod kde;
pub mod measure;
pub mod pushforward;
pub mod wasserstein;

pub use initial::{sample_initial, InitialDensity};
pub use kde::Kde;
pub use measure::{MeasurePath, ParticleMeasure, MASS_TOL};
pub use wasserstein::{matched_cost, sup_distance, wasserstein1, Distance, SupDistance};
pub use pushforward::{pushforward, pushforward_with};
