use rayon::prelude::*;

use super::measure::{MeasurePath, ParticleMeasure};
use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianSpec;
use crate::ocp::{feedback_flow, ControlledPath, FeedbackField};

/// Transports every particle of `m` along the feedback flow of one gradient field.
pub fn pushforward(
    m: &ParticleMeasure,
    field: &dyn FeedbackField,
    spec: &HamiltonianSpec,
    t0: f64,
    horizon: f64,
    steps: usize,
) -> Result<MeasurePath> {
    pushforward_with(m, |_| field, spec, t0, horizon, steps)
}

/// Like [`pushforward`] with a separate field for each particle.
pub fn pushforward_with<'f, F>(
    m: &ParticleMeasure,
    field_of: F,
    spec: &HamiltonianSpec,
    t0: f64,
    horizon: f64,
    steps: usize,
) -> Result<MeasurePath>
where
    F: Fn(usize) -> &'f (dyn FeedbackField + 'f) + Sync,
{
    Error::check_dim(spec.n(), m.dim())?;
    let arcs = (0..m.len())
        .into_par_iter()
        .map(|i| {
            feedback_flow(spec, m.point(i), field_of(i), t0, horizon, steps).map_err(|e| Error::Particle {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<ControlledPath>>>()?;
    MeasurePath::from_arcs(m.weights().to_vec(), arcs)
}
