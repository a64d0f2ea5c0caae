use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::attractors::{duffing_van_der_pol_system, DuffingParams, DuffingSystem};
use crate::conjugacy_ito::AnchorLattice;
use crate::error::{Error, Result};
use crate::flows::{Affine, Field, FnField, SystemSpec};
use crate::levy_paths::{JumpLaw, LevyTriplet};
use crate::linalg::{Matrix, Vector};
use crate::linearization::ScalarExample;
use crate::marcus::{FlowMap, MarcusSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SimulateLevy,
    ItoConjugacy,
    MarcusConjugacy,
    Attractor,
    Linearize,
    VerifyAll,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        Self::SimulateLevy,
        Self::ItoConjugacy,
        Self::MarcusConjugacy,
        Self::Attractor,
        Self::Linearize,
        Self::VerifyAll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SimulateLevy => "simulate-levy",
            Self::ItoConjugacy => "ito-conjugacy",
            Self::MarcusConjugacy => "marcus-conjugacy",
            Self::Attractor => "attractor",
            Self::Linearize => "linearize",
            Self::VerifyAll => "verify-all",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment kind `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub triplet: TripletConfig,
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TripletConfig {
    pub drift: Vec<f64>,
    /// Rows of the diffusion matrix `A`, covariance `AAᵀ`.
    pub diffusion: Vec<Vec<f64>>,
    pub jump_rate: f64,
    pub jumps: JumpConfig,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self { drift: vec![0.0], diffusion: vec![vec![0.3]], jump_rate: 0.5, jumps: JumpConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JumpConfig {
    /// `none`, `uniform-ball`, `two-point` or `truncated-gaussian`.
    pub law: String,
    pub radius: f64,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub p_first: f64,
    pub std: f64,
    pub bound: f64,
}

impl Default for JumpConfig {
    fn default() -> Self {
        Self {
            law: "uniform-ball".into(),
            radius: 0.2,
            first: vec![0.5],
            second: vec![-0.25],
            p_first: 0.5,
            std: 0.2,
            bound: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinSystem {
    /// `a(x) = βx`, `σ(x) = x`.
    #[serde(rename = "linear-1d")]
    Linear1d,
    /// Marcus equation with drift `−x³` and affine flow map `Φ(z,x) = e^{sz}x + b(e^{sz} − 1)/s`.
    AffineMarcus,
    DuffingVanDerPol,
    /// `a(x) = βx − x^l`, `σ(x) = x`, `β = α + σ²/2`.
    ScalarHartman,
    /// Affine coefficients from the `drift_matrix`, `drift_offset`, `noise_matrices`,
    /// `noise_offsets` tables.
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub builtin: Option<BuiltinSystem>,
    pub beta: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub l: u32,
    pub marcus_s: f64,
    pub marcus_b: f64,
    /// `(γ_1, γ_2)`.
    pub gamma: Vec<f64>,
    /// `(σ_1, σ_2)` of the Duffing–van der Pol noise.
    pub noise: Vec<f64>,
    pub drift_matrix: Vec<Vec<f64>>,
    pub drift_offset: Vec<f64>,
    pub noise_matrices: Vec<Vec<Vec<f64>>>,
    pub noise_offsets: Vec<Vec<f64>>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            builtin: None,
            beta: -0.5,
            alpha: -0.5,
            sigma: 0.3,
            l: 3,
            marcus_s: 1.0,
            marcus_b: 0.0,
            gamma: vec![1.0, 1.0],
            noise: vec![0.5, 0.5],
            drift_matrix: vec![],
            drift_offset: vec![],
            noise_matrices: vec![],
            noise_offsets: vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    pub dt: f64,
    /// Truncation horizon `T_h` of the stationary integrals.
    pub tail: f64,
    pub mu: f64,
    pub horizon: f64,
    /// Length of the sampled path before 0 for `simulate-levy`.
    pub past: f64,
    pub x0: Vec<f64>,
    /// Anchor coordinates, used on every axis; sorted and deduplicated on load.
    pub anchors: Vec<f64>,
    pub tolerance: f64,
    pub n_points: usize,
    pub n_samples: usize,
    pub ball_radius: f64,
    pub pullback_time: f64,
    pub pullback_step: f64,
    pub lyapunov_horizon: f64,
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
    /// `verify-all` repeats its run and compares the CSV bytes.
    pub determinism_rerun: bool,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            tail: 20.0,
            mu: 1.0,
            horizon: 1.0,
            past: 1.0,
            x0: vec![0.8],
            anchors: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            tolerance: 5e-2,
            n_points: 256,
            n_samples: 100,
            ball_radius: 2.0,
            pullback_time: 20.0,
            pullback_step: 0.01,
            lyapunov_horizon: 200.0,
            workers: 0,
            determinism_rerun: true,
        }
    }
}

/// Parses and validates a config. Syntax and type errors carry the line and column, unknown keys
/// are named.
pub fn load_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.numerics.anchors.sort_by(f64::total_cmp);
    cfg.numerics.anchors.dedup();
    cfg.validate()?;
    Ok(cfg)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("`{name}` must be positive, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            out: None,
            triplet: TripletConfig::default(),
            system: SystemConfig::default(),
            numerics: NumericsConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = &self.numerics;
        for (name, v) in [
            ("numerics.dt", n.dt),
            ("numerics.tail", n.tail),
            ("numerics.mu", n.mu),
            ("numerics.horizon", n.horizon),
            ("numerics.tolerance", n.tolerance),
            ("numerics.ball_radius", n.ball_radius),
            ("numerics.pullback_time", n.pullback_time),
            ("numerics.pullback_step", n.pullback_step),
            ("numerics.lyapunov_horizon", n.lyapunov_horizon),
        ] {
            positive(name, v)?;
        }
        if n.past < 0.0 {
            return Err(Error::Config(format!("`numerics.past` must be non-negative, got {}", n.past)));
        }
        if n.n_points == 0 || n.n_samples < 2 {
            return Err(Error::Config("`numerics.n_points` must be ≥ 1 and `numerics.n_samples` ≥ 2".into()));
        }
        if n.anchors.len() < 2 || n.anchors.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config("`numerics.anchors` needs at least two finite values".into()));
        }
        if !(self.triplet.jump_rate >= 0.0) {
            return Err(Error::Config(format!(
                "`triplet.jump_rate` must be non-negative, got {}",
                self.triplet.jump_rate
            )));
        }
        if self.system.l < 2 {
            return Err(Error::Config(format!("`system.l` must be an integer > 1, got {}", self.system.l)));
        }
        self.levy_triplet()?;
        Ok(())
    }

    pub fn levy_triplet(&self) -> Result<LevyTriplet> {
        let t = &self.triplet;
        let m = t.drift.len();
        if m == 0 {
            return Err(Error::Config("`triplet.drift` must not be empty".into()));
        }
        let a = if t.diffusion.is_empty() {
            Matrix::zeros(m, 0)
        } else {
            let cols = t.diffusion[0].len();
            let a = rows_to_matrix("triplet.diffusion", &t.diffusion, cols)?;
            if a.nrows() != m {
                return Err(Error::Config(format!("`triplet.diffusion` needs {m} rows, one per drift entry")));
            }
            a
        };
        let j = &t.jumps;
        let law = match j.law.as_str() {
            "none" => JumpLaw::None,
            "uniform-ball" => JumpLaw::UniformBall { radius: j.radius },
            "two-point" => JumpLaw::TwoPoint { first: j.first.clone(), second: j.second.clone(), p_first: j.p_first },
            "truncated-gaussian" => JumpLaw::TruncatedGaussian { std: j.std, bound: j.bound },
            other => return Err(Error::Config(format!("unknown jump law `{other}` in `triplet.jumps.law`"))),
        };
        let mut triplet = LevyTriplet::drift_only(Vector::from_column_slice(&t.drift)).with_diffusion(a);
        if t.jump_rate > 0.0 && !matches!(law, JumpLaw::None) {
            triplet = triplet.with_jumps(t.jump_rate, law);
        }
        triplet.validate().map_err(|e| Error::Config(format!("triplet: {e}")))?;
        Ok(triplet)
    }

    pub fn anchor_lattice(&self, d: usize) -> Result<AnchorLattice> {
        AnchorLattice::new(vec![self.numerics.anchors.clone(); d])
    }

    pub fn x0(&self, d: usize) -> Result<Vector> {
        let x = &self.numerics.x0;
        if x.len() != d {
            return Err(Error::Config(format!("`numerics.x0` has {} entries, the system has dimension {d}", x.len())));
        }
        Ok(Vector::from_column_slice(x))
    }

    fn builtin_or(&self, default: BuiltinSystem) -> BuiltinSystem {
        self.system.builtin.unwrap_or(default)
    }

    /// Itô system for the conjugacy and linearization experiments.
    pub fn ito_system(&self, default: BuiltinSystem) -> Result<SystemSpec> {
        let s = &self.system;
        match self.builtin_or(default) {
            BuiltinSystem::Linear1d => {
                SystemSpec::linear(Matrix::from_element(1, 1, s.beta), vec![Matrix::identity(1, 1)])
            }
            BuiltinSystem::ScalarHartman => self.scalar_example().system(),
            BuiltinSystem::Custom => {
                let (drift, noise) = self.custom_tables()?;
                SystemSpec::new(drift, noise)
            }
            other => Err(Error::Config(format!("system `{other:?}` is not an Itô system"))),
        }
    }

    pub fn scalar_example(&self) -> ScalarExample {
        ScalarExample { alpha: self.system.alpha, sigma: self.system.sigma, l: self.system.l }
    }

    pub fn duffing_params(&self) -> Result<DuffingParams> {
        let s = &self.system;
        if s.gamma.len() != 2 || s.noise.len() != 2 {
            return Err(Error::Config("`system.gamma` and `system.noise` need two entries each".into()));
        }
        Ok(DuffingParams::new(s.gamma[0], s.gamma[1], s.noise[0], s.noise[1]))
    }

    pub fn duffing_system(&self) -> Result<DuffingSystem> {
        duffing_van_der_pol_system(self.duffing_params()?)
    }

    /// Marcus system for the Marcus conjugacy and attractor experiments.
    pub fn marcus_system(&self, default: BuiltinSystem) -> Result<MarcusSystem> {
        let s = &self.system;
        match self.builtin_or(default) {
            BuiltinSystem::AffineMarcus => {
                let drift: Field = Arc::new(FnField::scalar(|x| -x * x * x, |x| -3.0 * x * x));
                let map = FlowMap::affine(
                    vec![Matrix::from_element(1, 1, s.marcus_s)],
                    vec![Vector::from_element(1, s.marcus_b)],
                )?;
                MarcusSystem::new(drift, map)
            }
            BuiltinSystem::DuffingVanDerPol => Ok(self.duffing_system()?.system),
            BuiltinSystem::Custom => {
                let (drift, _) = self.custom_tables()?;
                let d = drift.dim();
                let matrices = s
                    .noise_matrices
                    .iter()
                    .enumerate()
                    .map(|(i, rows)| rows_to_matrix(&format!("system.noise_matrices[{i}]"), rows, d))
                    .collect::<Result<Vec<_>>>()?;
                let offsets = self.custom_offsets(d, matrices.len())?;
                MarcusSystem::new(drift, FlowMap::affine(matrices, offsets)?)
            }
            other => Err(Error::Config(format!("system `{other:?}` is not a Marcus system"))),
        }
    }

    fn custom_offsets(&self, d: usize, m: usize) -> Result<Vec<Vector>> {
        let s = &self.system;
        if s.noise_offsets.is_empty() {
            return Ok(vec![Vector::zeros(d); m]);
        }
        if s.noise_offsets.len() != m || s.noise_offsets.iter().any(|o| o.len() != d) {
            return Err(Error::Config(format!("`system.noise_offsets` must hold {m} vectors of length {d}")));
        }
        Ok(s.noise_offsets.iter().map(|o| Vector::from_column_slice(o)).collect())
    }

    fn custom_tables(&self) -> Result<(Field, Vec<Field>)> {
        let s = &self.system;
        let d = s.drift_matrix.len();
        if d == 0 {
            return Err(Error::Config("custom system needs `system.drift_matrix`".into()));
        }
        let b = rows_to_matrix("system.drift_matrix", &s.drift_matrix, d)?;
        let offset = if s.drift_offset.is_empty() {
            Vector::zeros(d)
        } else if s.drift_offset.len() == d {
            Vector::from_column_slice(&s.drift_offset)
        } else {
            return Err(Error::Config(format!("`system.drift_offset` must have length {d}")));
        };
        if s.noise_matrices.is_empty() {
            return Err(Error::Config("custom system needs `system.noise_matrices`".into()));
        }
        let offsets = self.custom_offsets(d, s.noise_matrices.len())?;
        let noise = s
            .noise_matrices
            .iter()
            .zip(offsets)
            .enumerate()
            .map(|(i, (rows, o))| {
                let m = rows_to_matrix(&format!("system.noise_matrices[{i}]"), rows, d)?;
                Ok(Arc::new(Affine::new(m, o)) as Field)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((Arc::new(Affine::new(b, offset)), noise))
    }
}

fn rows_to_matrix(name: &str, rows: &[Vec<f64>], cols: usize) -> Result<Matrix> {
    if rows.is_empty() || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Config(format!("`{name}` must be a matrix with {cols} columns")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Matrix::from_row_slice(rows.len(), cols, &flat))
}
