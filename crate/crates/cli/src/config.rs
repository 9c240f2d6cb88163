//! Experiment configuration: a TOML document with one table per pipeline stage.
//!
//! Every field has a default, so an empty file is a valid Heisenberg experiment.
//! Unknown keys are rejected and listed.

use std::path::{Path, PathBuf};

use hmfg_core::couplings::{CouplingSpec, ExplicitFunction};
use hmfg_core::geometry::{Coefficient, HTypeStructure};
use hmfg_core::hamiltonian::HamiltonianSpec;
use hmfg_core::hjb_grid::GridSpec;
use hmfg_core::mfg::{InitialGuess, MfgOptions};
use hmfg_core::ocp::DEFAULT_STEPS;
use hmfg_core::transport::InitialDensity;
use hmfg_core::validate::Mutation;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("unknown config keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

impl From<hmfg_core::Error> for ConfigError {
    fn from(e: hmfg_core::Error) -> Self {
        match e {
            hmfg_core::Error::InvalidParameter { name, reason } => ConfigError::Invalid { field: name, reason },
            other => ConfigError::Invalid {
                field: "structure".into(),
                reason: other.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
    pub structure: StructureConfig,
    pub hamiltonian: HamiltonianConfig,
    pub ocp: OcpConfig,
    pub hjb: HjbConfig,
    pub mfg: MfgConfig,
    pub validate: ValidateConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output: None,
            threads: None,
            structure: StructureConfig::default(),
            hamiltonian: HamiltonianConfig::default(),
            ocp: OcpConfig::default(),
            hjb: HjbConfig::default(),
            mfg: MfgConfig::default(),
            validate: ValidateConfig::default(),
        }
    }
}

/// A named preset, or an explicit table of 1-based entries `h_ij`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StructureConfig {
    pub preset: Option<String>,
    /// Block count of `heisenberg-d`.
    pub d: Option<usize>,
    pub epsilon: f64,
    /// Truncation level `N` of the transport drift.
    pub truncation: Option<f64>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub entries: Vec<EntryConfig>,
}

impl Default for StructureConfig {
    fn default() -> Self {
        Self {
            preset: None,
            d: None,
            epsilon: 0.0,
            truncation: None,
            n: None,
            m: None,
            entries: Vec::new(),
        }
    }
}

/// `h_ij(x) = offset + Σ slopes[k] x_k`; `value` is shorthand for a constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryConfig {
    pub row: usize,
    pub col: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slopes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HamiltonianConfig {
    pub gamma: f64,
    pub horizon: f64,
    pub steps: usize,
}

impl Default for HamiltonianConfig {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            horizon: 1.0,
            steps: DEFAULT_STEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcpConfig {
    /// Defaults to the origin.
    pub x0: Vec<f64>,
    pub t0: f64,
    pub running: ExplicitFunction,
    pub terminal: ExplicitFunction,
    /// Also run the direct-transcription oracle.
    pub direct: bool,
    pub restarts: usize,
}

impl Default for OcpConfig {
    fn default() -> Self {
        Self {
            x0: Vec::new(),
            t0: 0.0,
            running: ExplicitFunction::Zero,
            terminal: ExplicitFunction::linear(&[1.0, 1.0]),
            direct: false,
            restarts: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HjbConfig {
    pub half_width: f64,
    pub resolution: usize,
    pub time_steps: usize,
    pub control_points: usize,
    pub running: ExplicitFunction,
    pub terminal: ExplicitFunction,
    /// Time levels written as `(x1, x2, u)` slices.
    pub slice_levels: Vec<usize>,
    /// Coordinates `x3, …` fixed on every slice.
    pub slice_rest: Vec<f64>,
    /// Points compared against the control-problem value at `t = 0`.
    pub compare_points: Vec<Vec<f64>>,
}

impl Default for HjbConfig {
    fn default() -> Self {
        let g = GridSpec::default();
        Self {
            half_width: g.half_width,
            resolution: g.resolution,
            time_steps: g.time_steps,
            control_points: g.control_points,
            running: ExplicitFunction::Zero,
            terminal: ExplicitFunction::linear(&[1.0, 1.0]),
            slice_levels: vec![0],
            slice_rest: vec![0.0],
            compare_points: Vec::new(),
        }
    }
}

impl HjbConfig {
    pub fn grid(&self) -> Result<GridSpec, ConfigError> {
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(invalid("hjb.half_width", "must be positive"));
        }
        if self.resolution < 2 || self.time_steps == 0 || self.control_points < 2 {
            return Err(invalid("hjb.resolution", "need resolution, control_points ≥ 2 and time_steps ≥ 1"));
        }
        if let Some(&k) = self.slice_levels.iter().find(|&&k| k > self.time_steps) {
            return Err(invalid("hjb.slice_levels", format!("level {k} exceeds time_steps")));
        }
        Ok(GridSpec {
            half_width: self.half_width,
            resolution: self.resolution,
            time_steps: self.time_steps,
            control_points: self.control_points,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CouplingConfig {
    Zero,
    /// `κ (φ * m)`, or `κ (φ * φ̌ * m)` when monotone.
    Convolution {
        #[serde(default = "unit")]
        radius: f64,
        strength: f64,
        #[serde(default)]
        monotone: bool,
    },
    Explicit {
        #[serde(default = "unit")]
        strength: f64,
        function: ExplicitFunction,
    },
}

fn unit() -> f64 {
    1.0
}

impl CouplingConfig {
    pub fn build(&self, dim: usize) -> Result<CouplingSpec, ConfigError> {
        Ok(match self {
            CouplingConfig::Zero => CouplingSpec::zero(),
            CouplingConfig::Convolution {
                radius,
                strength,
                monotone: true,
            } => CouplingSpec::monotone(dim, *radius, *strength)?,
            CouplingConfig::Convolution { radius, strength, .. } => CouplingSpec::convolution(dim, *radius, *strength)?,
            CouplingConfig::Explicit { strength, function } => CouplingSpec::explicit(function.clone(), *strength)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    UniformBox {
        #[serde(default = "unit")]
        half_width: f64,
    },
    /// Centered at the origin unless `center` is given.
    Bump {
        #[serde(default)]
        center: Vec<f64>,
        #[serde(default = "unit")]
        radius: f64,
    },
}

impl InitialConfig {
    pub fn build(&self, dim: usize) -> Result<InitialDensity, ConfigError> {
        match self {
            InitialConfig::UniformBox { half_width } => Ok(InitialDensity::UniformBox { dim, half_width: *half_width }),
            InitialConfig::Bump { center, radius } => {
                let center = if center.is_empty() { vec![0.0; dim] } else { center.clone() };
                if center.len() != dim {
                    return Err(invalid("mfg.m0.center", format!("expected {dim} coordinates")));
                }
                Ok(InitialDensity::Bump { center, radius: *radius })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GuessConfig {
    Rest,
    RandomGradient {
        seed: u64,
        #[serde(default = "half")]
        amplitude: f64,
    },
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfgConfig {
    pub particles: usize,
    pub steps: usize,
    pub epsilons: Vec<f64>,
    pub tol: f64,
    pub max_iterations: usize,
    pub initial_guess: GuessConfig,
    pub running: CouplingConfig,
    pub terminal: CouplingConfig,
    pub m0: InitialConfig,
    pub certificate_probes: usize,
    pub certificate_tolerance: f64,
}

impl Default for MfgConfig {
    fn default() -> Self {
        let o = MfgOptions::default();
        Self {
            particles: o.particles,
            steps: o.steps,
            epsilons: o.epsilons,
            tol: o.tol,
            max_iterations: o.max_iterations,
            initial_guess: GuessConfig::Rest,
            running: CouplingConfig::Convolution {
                radius: 1.0,
                strength: 0.2,
                monotone: true,
            },
            terminal: CouplingConfig::Zero,
            m0: InitialConfig::UniformBox { half_width: 1.0 },
            certificate_probes: 50,
            certificate_tolerance: 1e-2,
        }
    }
}

impl MfgConfig {
    pub fn options(&self, seed: u64) -> MfgOptions {
        MfgOptions {
            particles: self.particles,
            steps: self.steps,
            epsilons: self.epsilons.clone(),
            tol: self.tol,
            max_iterations: self.max_iterations,
            seed,
            initial_guess: match self.initial_guess {
                GuessConfig::Rest => InitialGuess::Rest,
                GuessConfig::RandomGradient { seed, amplitude } => InitialGuess::RandomGradient { seed, amplitude },
            },
            ..MfgOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationConfig {
    #[default]
    None,
    GroupLawSignFlip,
    DropEpsilonDrift,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidateConfig {
    pub mutation: MutationConfig,
}

impl ValidateConfig {
    pub fn mutation(&self) -> Option<Mutation> {
        match self.mutation {
            MutationConfig::None => None,
            MutationConfig::GroupLawSignFlip => Some(Mutation::GroupLawSignFlip),
            MutationConfig::DropEpsilonDrift => Some(Mutation::DropEpsilonDrift),
        }
    }
}

impl ExperimentConfig {
    /// Parses `text`, rejecting unknown keys.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut unknown = Vec::new();
        let cfg: Self = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
            .map_err(|e| ConfigError::Parse(e.to_string()))?;
        if !unknown.is_empty() {
            return Err(ConfigError::UnknownKeys(unknown));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn structure(&self) -> Result<HTypeStructure, ConfigError> {
        let s = &self.structure;
        let base = if s.entries.is_empty() {
            if s.n.is_some() || s.m.is_some() {
                return Err(invalid("structure.entries", "an explicit table needs entries"));
            }
            HTypeStructure::from_preset(s.preset.as_deref().unwrap_or("heisenberg"), s.d)?
        } else {
            if s.preset.is_some() {
                return Err(invalid("structure.preset", "give either a preset or an entry table"));
            }
            let (Some(n), Some(m)) = (s.n, s.m) else {
                return Err(invalid("structure.n", "an explicit table needs n and m"));
            };
            let mut entries = Vec::with_capacity(s.entries.len());
            for e in &s.entries {
                if e.row == 0 || e.col == 0 || e.row > n || e.col > m {
                    return Err(invalid("structure.entries", format!("entry ({}, {}) lies outside the {n}×{m} table", e.row, e.col)));
                }
                let c = match (e.value, e.offset, e.slopes.is_empty()) {
                    (Some(v), None, true) => Coefficient::Constant(v),
                    (None, offset, _) => Coefficient::affine(offset.unwrap_or(0.0), &e.slopes),
                    _ => return Err(invalid("structure.entries", "use either `value` or `offset`/`slopes`")),
                };
                entries.push((e.row - 1, e.col - 1, c));
            }
            HTypeStructure::new("explicit", n, m, entries)?
        };
        Ok(base.with_epsilon(s.epsilon)?.with_truncation(s.truncation)?)
    }

    pub fn hamiltonian(&self) -> Result<HamiltonianSpec, ConfigError> {
        let s = self.structure()?;
        let h = &self.hamiltonian;
        if !(h.horizon > 0.0 && h.horizon.is_finite()) {
            return Err(invalid("hamiltonian.horizon", "must be positive"));
        }
        if h.steps == 0 {
            return Err(invalid("hamiltonian.steps", "must be at least 1"));
        }
        Ok(if h.gamma == 2.0 {
            HamiltonianSpec::quadratic(s)
        } else {
            HamiltonianSpec::power(s, h.gamma).map_err(|e| match ConfigError::from(e) {
                ConfigError::Invalid { reason, .. } => invalid("hamiltonian.gamma", reason),
                other => other,
            })?
        })
    }

    /// Fills dimension-dependent defaults so that the echo is self-contained.
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        let s = self.structure()?;
        let n = s.n();
        if self.structure.entries.is_empty() && self.structure.preset.is_none() {
            self.structure.preset = Some("heisenberg".into());
        }
        if self.ocp.x0.is_empty() {
            self.ocp.x0 = vec![0.0; n];
        }
        if self.ocp.x0.len() != n {
            return Err(invalid("ocp.x0", format!("expected {n} coordinates")));
        }
        if let Some(p) = self.hjb.compare_points.iter().find(|p| p.len() != n) {
            return Err(invalid("hjb.compare_points", format!("point {p:?} does not have {n} coordinates")));
        }
        if let InitialConfig::Bump { center, .. } = &mut self.mfg.m0 {
            if center.is_empty() {
                *center = vec![0.0; n];
            }
        }
        if self.threads == Some(0) {
            return Err(invalid("threads", "must be at least 1"));
        }
        Ok(self)
    }
}
