//! Equilibrium iteration for the ε-regularized system: the best-response map 𝒯,
//! arc-level fictitious play, ε continuation and the mild-solution certificate.

use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::couplings::{CostField, CouplingSpec, FrozenMeasureCost, FrozenPathCost};
use crate::error::{Error, Result};
use crate::geometry::{check_hypotheses, HypothesisReport, SampleBox};
use crate::hamiltonian::HamiltonianSpec;
use crate::ocp::{
    cost, shoot, solve_pmp_shooting, value, ArcCostateField, CostateSolution, FeedbackField, FnField, OcpProblem,
    Shot, ShootingOptions, ValueOptions, DEFAULT_STEPS,
};
use crate::transport::{pushforward_with, sample_initial, sup_distance, InitialDensity, MeasurePath, ParticleMeasure};

/// Starting arcs of the first ε level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum InitialGuess {
    /// Every particle at rest.
    Rest,
    /// Each particle follows the feedback flow of a constant gradient drawn
    /// uniformly from `[-amplitude, amplitude]^n`.
    RandomGradient { seed: u64, amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MfgOptions {
    pub particles: usize,
    pub steps: usize,
    /// Strictly decreasing, positive.
    pub epsilons: Vec<f64>,
    /// Stopping level of `sup_t d₁(m_t, 𝒯(m)_t)`.
    pub tol: f64,
    /// Evaluations of 𝒯 per ε level.
    pub max_iterations: usize,
    /// Seed of the initial particle sample.
    pub seed: u64,
    pub initial_guess: InitialGuess,
    pub shooting: ShootingOptions,
}

impl Default for MfgOptions {
    fn default() -> Self {
        Self {
            particles: 500,
            steps: DEFAULT_STEPS,
            epsilons: vec![0.5, 0.25, 0.1, 0.05],
            tol: 1e-3,
            max_iterations: 50,
            seed: 0,
            initial_guess: InitialGuess::Rest,
            shooting: ShootingOptions {
                polish_steps: 0,
                ..ShootingOptions::default()
            },
        }
    }
}

/// Data of the equilibrium problem together with the sampled initial measure.
#[derive(Debug, Clone)]
pub struct MfgProblem {
    hamiltonian: HamiltonianSpec,
    running: CouplingSpec,
    terminal: CouplingSpec,
    m0: InitialDensity,
    horizon: f64,
    options: MfgOptions,
    initial: ParticleMeasure,
    hypotheses: HypothesisReport,
}

const HYPOTHESIS_SAMPLES: usize = 2000;

impl MfgProblem {
    pub fn new(
        hamiltonian: HamiltonianSpec,
        running: CouplingSpec,
        terminal: CouplingSpec,
        m0: InitialDensity,
        horizon: f64,
        options: MfgOptions,
    ) -> Result<Self> {
        let n = hamiltonian.n();
        Error::check_dim(n, m0.dim())?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid("horizon", "must be positive and finite"));
        }
        if options.steps == 0 || options.max_iterations == 0 {
            return Err(Error::invalid("steps", "steps and max_iterations must be positive"));
        }
        if !(options.tol > 0.0) {
            return Err(Error::invalid("tol", "must be positive"));
        }
        if options.epsilons.is_empty() {
            return Err(Error::invalid("epsilons", "schedule is empty"));
        }
        if options.epsilons.iter().any(|e| !(*e > 0.0) || *e > 1.0) {
            return Err(Error::invalid("epsilons", "every level must lie in (0, 1]"));
        }
        if options.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("epsilons", "schedule must be strictly decreasing"));
        }
        let (lo, hi) = m0.support_box();
        let widen: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 2.0 * (b - a)).collect();
        let sample_box = SampleBox {
            lo: lo.iter().zip(&widen).map(|(a, w)| a - w).collect(),
            hi: hi.iter().zip(&widen).map(|(b, w)| b + w).collect(),
        };
        let hypotheses = check_hypotheses(hamiltonian.structure(), &sample_box, HYPOTHESIS_SAMPLES, options.seed)?;
        if !hypotheses.linear_growth {
            return Err(Error::Precondition("structure coefficients fail the linear growth check".into()));
        }
        let initial = sample_initial(&m0, options.particles, options.seed)?;
        Ok(Self {
            hamiltonian,
            running,
            terminal,
            m0,
            horizon,
            options,
            initial,
            hypotheses,
        })
    }

    pub fn hamiltonian(&self) -> &HamiltonianSpec {
        &self.hamiltonian
    }

    pub fn running(&self) -> &CouplingSpec {
        &self.running
    }

    pub fn terminal(&self) -> &CouplingSpec {
        &self.terminal
    }

    pub fn m0(&self) -> &InitialDensity {
        &self.m0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn options(&self) -> &MfgOptions {
        &self.options
    }

    pub fn initial(&self) -> &ParticleMeasure {
        &self.initial
    }

    pub fn hypotheses(&self) -> &HypothesisReport {
        &self.hypotheses
    }

    /// Same data with particles drawn from another sample.
    pub fn with_initial(&self, initial: ParticleMeasure) -> Result<Self> {
        Error::check_dim(self.hamiltonian.n(), initial.dim())?;
        Ok(Self {
            initial,
            ..self.clone()
        })
    }

    pub fn spec_at(&self, epsilon: f64) -> Result<HamiltonianSpec> {
        Ok(self.hamiltonian.with_structure(self.hamiltonian.structure().clone().with_epsilon(epsilon)?))
    }

    /// Control problem with `f = F[m_t]`, `g = G[m_T]` frozen along `path`.
    pub fn frozen_problem(&self, path: &MeasurePath, epsilon: f64) -> Result<OcpProblem> {
        if path.len() != self.options.steps + 1 {
            return Err(Error::invalid("measure path", "must live on the problem's time grid"));
        }
        let f: Arc<dyn CostField> = Arc::new(FrozenPathCost::new(self.running.clone(), path)?);
        let last = Arc::new(path.measure(path.len() - 1).clone());
        let g: Arc<dyn CostField> = Arc::new(FrozenMeasureCost::new(self.terminal.clone(), last));
        OcpProblem::new(self.spec_at(epsilon)?, f, g, self.horizon, self.options.steps)
    }

    /// `|u| ≤ C (T + 1)` with `C` bounding `|F|` and `|G|`; `None` for unbounded couplings.
    pub fn value_bound(&self) -> Option<f64> {
        let c = self.running.sup_bound()?.max(self.terminal.sup_bound()?);
        Some(c * (self.horizon + 1.0))
    }

    fn initial_path(&self, epsilon: f64) -> Result<MeasurePath> {
        let spec = self.spec_at(epsilon)?;
        let n = spec.n();
        let steps = self.options.steps;
        match self.options.initial_guess {
            InitialGuess::Rest => MeasurePath::stationary(&self.initial, 0.0, self.horizon, steps, spec.control_dim()),
            InitialGuess::RandomGradient { seed, amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let fields: Vec<_> = (0..self.initial.len())
                    .map(|_| {
                        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-amplitude..=amplitude)).collect();
                        FnField(move |_: &[f64], _: f64, out: &mut [f64]| {
                            out[..c.len()].copy_from_slice(&c);
                            Ok(())
                        })
                    })
                    .collect();
                pushforward_with(&self.initial, |i| &fields[i] as &dyn FeedbackField, &spec, 0.0, self.horizon, steps)
            }
        }
    }
}

/// Output of one application of 𝒯.
#[derive(Debug, Clone)]
pub struct BestResponse {
    pub path: MeasurePath,
    /// Pontryagin arc of every particle against the frozen input path.
    pub solutions: Vec<Arc<CostateSolution>>,
}

impl BestResponse {
    fn initial_costates(&self) -> Vec<Vec<f64>> {
        self.solutions.iter().map(|s| s.initial_costate.clone()).collect()
    }
}

/// `𝒯(m)`: freeze the costs along `path`, solve every particle's control problem
/// by shooting and push `m0` forward along the feedback flow.
///
/// Each particle shoots from `-Dg(x)` (or from its previous costate inside
/// [`solve_equilibrium`]) and falls back to the default multi-start set.
pub fn apply_t(problem: &MfgProblem, path: &MeasurePath, epsilon: f64) -> Result<BestResponse> {
    best_response(problem, path, epsilon, None)
}

fn best_response(problem: &MfgProblem, path: &MeasurePath, epsilon: f64, warm: Option<&[Vec<f64>]>) -> Result<BestResponse> {
    if path.particle_count() != problem.initial.len() {
        return Err(Error::invalid("measure path", "particle count differs from the initial sample"));
    }
    let ocp = problem.frozen_problem(path, epsilon)?;
    let opts = &problem.options.shooting;
    let m0 = &problem.initial;
    let solutions = (0..m0.len())
        .into_par_iter()
        .map(|i| {
            let x = m0.point(i);
            let start = match warm {
                Some(w) => w[i].clone(),
                None => ocp.terminal_gradient(x).1.iter().map(|g| -g).collect(),
            };
            let warm_shot = match shoot(&ocp, x, 0.0, &start, opts)? {
                Shot::Converged(s) => Some(s),
                Shot::Failed { .. } => None,
            };
            let sol = match warm_shot {
                Some(s) => s,
                None => solve_pmp_shooting(&ocp, x, 0.0, &[], opts)?.best,
            };
            Ok(Arc::new(sol))
        })
        .enumerate()
        .map(|(i, r): (usize, Result<Arc<CostateSolution>>)| {
            r.map_err(|e| Error::Particle {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fields: Vec<ArcCostateField> = solutions.iter().map(|s| ArcCostateField::new(s.clone())).collect();
    let out = pushforward_with(
        m0,
        |i| &fields[i] as &dyn FeedbackField,
        ocp.spec(),
        0.0,
        problem.horizon,
        problem.options.steps,
    )?;
    Ok(BestResponse { path: out, solutions })
}

/// `sup_t d₁(a_t, b_t)` over the nodes of two paths on one grid.
pub fn path_distance(a: &MeasurePath, b: &MeasurePath) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("measure path", "paths must share their time grid"));
    }
    let pairs: Vec<_> = a.measures().iter().zip(b.measures()).collect();
    Ok(sup_distance(&pairs)?.value)
}

fn arc_deviation(a: &crate::ocp::ControlledPath, b: &crate::ocp::ControlledPath) -> f64 {
    a.states()
        .chunks(a.dim())
        .zip(b.states().chunks(b.dim()))
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>())
        .fold(0.0, f64::max)
        .sqrt()
}

/// Replaces the `⌈θ N⌉` arcs of `current` that deviate most from `response`.
fn mix(current: &MeasurePath, response: &MeasurePath, theta: f64) -> Result<MeasurePath> {
    let n = current.particle_count();
    let count = ((theta * n as f64).ceil() as usize).min(n);
    let mut order: Vec<(usize, f64)> = current
        .arcs()
        .iter()
        .zip(response.arcs())
        .map(|(a, b)| arc_deviation(a, b))
        .enumerate()
        .collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let mut arcs = current.arcs().to_vec();
    for &(i, _) in order.iter().take(count) {
        arcs[i] = response.arcs()[i].clone();
    }
    MeasurePath::from_arcs(current.weights().to_vec(), arcs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MfgStatus {
    Converged,
    NotConverged,
}

/// Outcome of the iteration at one ε.
#[derive(Debug, Clone)]
pub struct LevelResult {
    pub epsilon: f64,
    pub status: MfgStatus,
    /// `sup_t d₁(m^k_t, 𝒯(m^k)_t)` for every evaluation of 𝒯.
    pub residual_history: Vec<f64>,
    /// Lowest residual reached; belongs to `path`.
    pub residual: f64,
    pub path: MeasurePath,
    pub solutions: Vec<Arc<CostateSolution>>,
    /// `sup_t d₁` to the equilibrium of the previous level.
    pub distance_to_previous: Option<f64>,
}

impl LevelResult {
    pub fn iterations(&self) -> usize {
        self.residual_history.len()
    }

    /// `max_t Σ w |ξ|²` along the path.
    pub fn max_second_moment(&self) -> f64 {
        self.path.measures().iter().map(|m| m.moments().1).fold(0.0, f64::max)
    }
}

/// Result of [`solve_equilibrium`], carried by the smallest ε of the schedule.
#[derive(Debug, Clone)]
pub struct MfgSolution {
    pub epsilon: f64,
    pub status: MfgStatus,
    pub measure_path: MeasurePath,
    pub residual_history: Vec<f64>,
    /// Arcs of the best response to `measure_path`.
    pub solutions: Vec<Arc<CostateSolution>>,
    pub levels: Vec<LevelResult>,
    ocp: OcpProblem,
}

impl MfgSolution {
    /// The control problem frozen at the equilibrium.
    pub fn frozen_problem(&self) -> &OcpProblem {
        &self.ocp
    }

    pub fn residual(&self) -> f64 {
        self.residual_history.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `u(x, t)` against the frozen equilibrium costs.
    pub fn value(&self, x: &[f64], t: f64, opts: &ValueOptions) -> Result<f64> {
        Ok(value(&self.ocp, x, t, opts)?.value)
    }
}

/// Damped fixed-point iteration with ε continuation; see [`MfgOptions`].
pub fn solve_equilibrium(problem: &MfgProblem) -> Result<MfgSolution> {
    let opts = &problem.options;
    let mut levels: Vec<LevelResult> = Vec::with_capacity(opts.epsilons.len());
    let mut carry: Option<(MeasurePath, Vec<Vec<f64>>)> = None;
    for &eps in &opts.epsilons {
        let (mut eta, mut warm) = match carry.take() {
            Some((p, w)) => (p, Some(w)),
            None => (problem.initial_path(eps)?, None),
        };
        let mut history = Vec::new();
        let mut best: Option<(f64, MeasurePath, Vec<Arc<CostateSolution>>)> = None;
        let mut status = MfgStatus::NotConverged;
        for k in 0..opts.max_iterations {
            let response = best_response(problem, &eta, eps, warm.as_deref())?;
            let residual = path_distance(&eta, &response.path)?;
            history.push(residual);
            warm = Some(response.initial_costates());
            if best.as_ref().is_none_or(|b| residual < b.0) {
                best = Some((residual, eta.clone(), response.solutions.clone()));
            }
            if residual < opts.tol {
                status = MfgStatus::Converged;
                break;
            }
            if k + 1 < opts.max_iterations {
                eta = mix(&eta, &response.path, 2.0 / (k as f64 + 2.0))?;
            }
        }
        let (residual, path, solutions) = best.expect("at least one iteration");
        let distance_to_previous = match levels.last() {
            Some(prev) => Some(path_distance(&prev.path, &path)?),
            None => None,
        };
        let warm_next = solutions.iter().map(|s| s.initial_costate.clone()).collect();
        carry = Some((path.clone(), warm_next));
        levels.push(LevelResult {
            epsilon: eps,
            status,
            residual_history: history,
            residual,
            path,
            solutions,
            distance_to_previous,
        });
    }
    let last = levels.last().expect("non-empty schedule");
    let ocp = problem.frozen_problem(&last.path, last.epsilon)?;
    Ok(MfgSolution {
        epsilon: last.epsilon,
        status: last.status,
        measure_path: last.path.clone(),
        residual_history: last.residual_history.clone(),
        solutions: last.solutions.clone(),
        levels: levels.clone(),
        ocp,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub probes: Vec<usize>,
    /// `J^η_{x,0}(arc) - u(x, 0)` per probe.
    pub gaps: Vec<f64>,
    pub max_gap: f64,
    pub mean_gap: f64,
    pub min_gap: f64,
    pub tolerance: f64,
    /// Largest admissible negative gap.
    pub floor: f64,
    pub holds: bool,
    pub warning: Option<String>,
}

/// Certificate floor: arcs may beat the computed value only by this much.
pub const CERTIFICATE_FLOOR: f64 = 1e-4;

/// Optimality gap of the equilibrium arcs of the probed particles against the value
/// of the frozen problem.
pub fn mild_certificate(sol: &MfgSolution, probes: &[usize], tolerance: f64, opts: &ValueOptions) -> Result<CertificateReport> {
    let arcs = sol.measure_path.arcs();
    if let Some(&bad) = probes.iter().find(|&&i| i >= arcs.len()) {
        return Err(Error::invalid("probes", format!("particle {bad} does not exist")));
    }
    if probes.is_empty() {
        return Ok(CertificateReport {
            probes: vec![],
            gaps: vec![],
            max_gap: 0.0,
            mean_gap: 0.0,
            min_gap: 0.0,
            tolerance,
            floor: CERTIFICATE_FLOOR,
            holds: true,
            warning: Some("empty probe set".into()),
        });
    }
    let ocp = &sol.ocp;
    let gaps = probes
        .par_iter()
        .map(|&i| {
            let arc = &arcs[i];
            let j = cost(arc, ocp.spec(), ocp.running(), ocp.terminal());
            let u = value(ocp, arc.start(), 0.0, opts)?.value;
            Ok(j - u)
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_gap = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    Ok(CertificateReport {
        probes: probes.to_vec(),
        gaps,
        max_gap,
        mean_gap,
        min_gap,
        tolerance,
        floor: CERTIFICATE_FLOOR,
        holds: max_gap <= tolerance && min_gap >= -CERTIFICATE_FLOOR,
        warning: None,
    })
}

/// `count` distinct particle indices spread evenly over `0..n`.
pub fn spread_probes(n: usize, count: usize) -> Vec<usize> {
    let count = count.min(n);
    (0..count).map(|k| k * n / count).collect()
}
