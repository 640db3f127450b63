//! Low- and high-fidelity ground-truth systems with query access `g(x, φ)`
//! and parameter priors `p(φ)`.
//!
//! Each system doubles as a regression function: the input row is the
//! concatenated state and action `x = [s, u]` (just `x` for the sinusoid)
//! and the output is the next state after one integration step (the
//! function value for the sinusoid).

mod bicycle;
mod integrate;
mod pendulum;
mod sinusoid;

pub use bicycle::{bicycle_derivative, BicycleParams};
pub use integrate::integrate_step;
pub use pendulum::{pendulum_derivative, pendulum_high_fidelity_derivative, PendulumParams};
pub use sinusoid::{sinusoid_function, SinusoidParams};

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.81;

/// State magnitude beyond which integration is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error("non-finite input to {0}")]
    InvalidInput(&'static str),
    #[error("state diverged beyond {DIVERGENCE_LIMIT:e} during integration")]
    Divergence,
    #[error("parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("steering angle {0} outside [-pi/3, pi/3]")]
    SteeringOutOfRange(f64),
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },
}

/// Named scalar simulator parameters φ.
///
/// Parameters are kept in a sorted map so iteration order (and thus the
/// dense-vector layout used by optimizers) is deterministic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimParams {
    values: BTreeMap<String, f64>,
}

impl SimParams {
    pub fn new(pairs: &[(&str, f64)]) -> Self {
        Self {
            values: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<f64, SimulatorError> {
        self.values
            .get(name)
            .copied()
            .ok_or_else(|| SimulatorError::MissingParam(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    /// Dense value vector in sorted-name order.
    pub fn to_vec(&self) -> Vec<f64> {
        self.values.values().copied().collect()
    }

    /// Rebuild from a dense vector laid out in sorted-name order.
    pub fn from_vec(names: &[String], values: &[f64]) -> Self {
        assert_eq!(names.len(), values.len());
        Self {
            values: names.iter().cloned().zip(values.iter().copied()).collect(),
        }
    }
}

/// Independent per-parameter prior distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "kebab-case")]
pub enum ParamDist {
    Uniform { lower: f64, upper: f64 },
    LogUniform { lower: f64, upper: f64 },
}

impl ParamDist {
    fn bounds(&self) -> (f64, f64) {
        match *self {
            ParamDist::Uniform { lower, upper } | ParamDist::LogUniform { lower, upper } => {
                (lower, upper)
            }
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            ParamDist::Uniform { lower, upper } => {
                if lower == upper {
                    lower
                } else {
                    rng.gen_range(lower..upper)
                }
            }
            ParamDist::LogUniform { lower, upper } => {
                if lower == upper {
                    lower
                } else {
                    let (a, b) = (lower.ln(), upper.ln());
                    rng.gen_range(a..b).exp()
                }
            }
        }
    }
}

/// Independent prior `p(φ)` over named simulator parameters.
///
/// Degenerate entries (`lower == upper`) are allowed and always yield the
/// common value; `lower > upper` is rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamPrior {
    entries: BTreeMap<String, ParamDist>,
}

impl ParamPrior {
    pub fn new(entries: &[(&str, ParamDist)]) -> Result<Self, SimulatorError> {
        let prior = Self {
            entries: entries
                .iter()
                .map(|(k, d)| (k.to_string(), *d))
                .collect(),
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<(), SimulatorError> {
        for (name, dist) in &self.entries {
            let (lower, upper) = dist.bounds();
            if !(lower.is_finite() && upper.is_finite()) || lower > upper {
                return Err(SimulatorError::InvalidParam {
                    name: name.clone(),
                    reason: format!("invalid bounds [{lower}, {upper}]"),
                });
            }
            if let ParamDist::LogUniform { lower, .. } = dist {
                if *lower <= 0.0 {
                    return Err(SimulatorError::InvalidParam {
                        name: name.clone(),
                        reason: "log-uniform lower bound must be > 0".to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    /// Bounds in sorted-name order.
    pub fn bounds_vec(&self) -> Vec<(f64, f64)> {
        self.entries.values().map(ParamDist::bounds).collect()
    }

    /// Whether `params` lies inside the prior box (inclusive).
    pub fn contains(&self, params: &SimParams) -> bool {
        self.entries.iter().all(|(name, dist)| {
            let (lo, hi) = dist.bounds();
            params.get(name).map(|v| v >= lo && v <= hi).unwrap_or(false)
        })
    }

    /// Midpoint of the prior box (geometric midpoint for log-uniform entries).
    pub fn midpoint(&self) -> SimParams {
        let values = self
            .entries
            .iter()
            .map(|(name, dist)| {
                let v = match dist {
                    ParamDist::Uniform { lower, upper } => 0.5 * (lower + upper),
                    ParamDist::LogUniform { lower, upper } => {
                        (0.5 * (lower.ln() + upper.ln())).exp()
                    }
                };
                (name.clone(), v)
            })
            .collect();
        SimParams { values }
    }
}

/// One i.i.d. draw per parameter; deterministic under a fixed RNG stream.
pub fn sample_params(prior: &ParamPrior, rng: &mut ChaCha8Rng) -> SimParams {
    SimParams {
        values: prior
            .entries
            .iter()
            .map(|(name, dist)| (name.clone(), dist.sample(rng)))
            .collect(),
    }
}

/// State/action pair of one of the supported systems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
}

impl SystemState {
    pub fn new(state: Vec<f64>, action: Vec<f64>) -> Self {
        Self { state, action }
    }

    pub fn is_finite(&self) -> bool {
        self.state.iter().chain(self.action.iter()).all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    Sinusoid,
    Pendulum,
    Bicycle,
}

impl SystemKind {
    pub fn state_dim(self) -> usize {
        match self {
            SystemKind::Sinusoid => 1,
            SystemKind::Pendulum => 2,
            SystemKind::Bicycle => 4,
        }
    }

    pub fn action_dim(self) -> usize {
        match self {
            SystemKind::Sinusoid => 0,
            SystemKind::Pendulum => 1,
            SystemKind::Bicycle => 2,
        }
    }

    /// Regression input dimension (state ++ action).
    pub fn input_dim(self) -> usize {
        self.state_dim() + self.action_dim()
    }

    /// Regression output dimension (next state).
    pub fn output_dim(self) -> usize {
        self.state_dim()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fidelity {
    Low,
    High,
}

/// Fixed parameters or a prior to draw them from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamSpec {
    Fixed(SimParams),
    Prior(ParamPrior),
}

/// Query-access dynamics `g(x, φ)`: a system, its fidelity, the integration
/// step, and either fixed parameters or a parameter prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulatorModel {
    pub system: SystemKind,
    pub fidelity: Fidelity,
    /// Integration step, seconds. Unused by the sinusoid.
    pub dt: f64,
    pub params: ParamSpec,
    /// Viscous damping of the high-fidelity variant. Ignored at low fidelity.
    #[serde(default = "SimulatorModel::default_damping")]
    pub damping: f64,
}

impl SimulatorModel {
    fn default_damping() -> f64 {
        0.3
    }

    pub fn new(system: SystemKind, fidelity: Fidelity, dt: f64, params: ParamSpec) -> Self {
        let damping = match system {
            SystemKind::Bicycle => 0.1,
            _ => Self::default_damping(),
        };
        Self {
            system,
            fidelity,
            dt,
            params,
            damping,
        }
    }

    pub fn validate(&self) -> Result<(), SimulatorError> {
        if !(self.dt > 0.0) {
            return Err(SimulatorError::InvalidParam {
                name: "dt".to_string(),
                reason: format!("must be > 0, got {}", self.dt),
            });
        }
        if self.damping < 0.0 {
            return Err(SimulatorError::InvalidParam {
                name: "damping".to_string(),
                reason: "must be >= 0".to_string(),
            });
        }
        if let ParamSpec::Prior(prior) = &self.params {
            prior.validate()?;
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.system.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.system.output_dim()
    }

    pub fn fixed_params(&self) -> Option<&SimParams> {
        match &self.params {
            ParamSpec::Fixed(p) => Some(p),
            ParamSpec::Prior(_) => None,
        }
    }

    pub fn param_prior(&self) -> Option<&ParamPrior> {
        match &self.params {
            ParamSpec::Prior(p) => Some(p),
            ParamSpec::Fixed(_) => None,
        }
    }

    /// Time derivative of the state under this model.
    pub fn derivative(
        &self,
        state: &[f64],
        action: &[f64],
        params: &SimParams,
    ) -> Result<Vec<f64>, SimulatorError> {
        match self.system {
            SystemKind::Sinusoid => Err(SimulatorError::InvalidInput(
                "sinusoid has no time derivative",
            )),
            SystemKind::Pendulum => {
                let p = PendulumParams::from_params(params)?;
                let s: [f64; 2] = [state[0], state[1]];
                let d = match self.fidelity {
                    Fidelity::Low => pendulum_derivative(&s, action[0], &p)?,
                    Fidelity::High => {
                        pendulum_high_fidelity_derivative(&s, action[0], &p, self.damping)?
                    }
                };
                Ok(d.to_vec())
            }
            SystemKind::Bicycle => {
                let p = BicycleParams::from_params(params)?;
                let s: [f64; 4] = [state[0], state[1], state[2], state[3]];
                let a: [f64; 2] = [action[0], action[1]];
                let mut d = bicycle_derivative(&s, &a, &p)?;
                if self.fidelity == Fidelity::High {
                    // Quadratic drag stands in for unmodeled tyre/chassis losses.
                    d[3] -= self.damping * s[3] * s[3].abs();
                }
                Ok(d.to_vec())
            }
        }
    }

    /// Evaluate the model as a regression function on one input row
    /// `x = [s, u]` (sinusoid: `x` scalar): one integration step, or the
    /// sinusoid value.
    pub fn evaluate_row(&self, params: &SimParams, x: &[f64]) -> Result<Vec<f64>, SimulatorError> {
        if x.len() != self.input_dim() {
            return Err(SimulatorError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
                context: "evaluate_row input",
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SimulatorError::InvalidInput("evaluate_row"));
        }
        match self.system {
            SystemKind::Sinusoid => {
                let p = SinusoidParams::from_params(params)?;
                Ok(vec![sinusoid_function(&p, x[0])])
            }
            _ => {
                let sd = self.system.state_dim();
                integrate_step(self, params, &x[..sd], &x[sd..], self.dt)
            }
        }
    }

    /// Evaluate on every row of `x` (rows × input_dim), returning
    /// rows × output_dim.
    pub fn evaluate_matrix(
        &self,
        params: &SimParams,
        x: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>, SimulatorError> {
        let mut out = DMatrix::zeros(x.nrows(), self.output_dim());
        let mut row = vec![0.0; x.ncols()];
        for r in 0..x.nrows() {
            for c in 0..x.ncols() {
                row[c] = x[(r, c)];
            }
            let y = self.evaluate_row(params, &row)?;
            for (c, v) in y.iter().enumerate() {
                out[(r, c)] = *v;
            }
        }
        Ok(out)
    }

    /// Uniform input box `[lower, upper]` per input dimension, used as the
    /// default measurement distribution and dataset-sampling domain.
    pub fn default_input_box(&self) -> (Vec<f64>, Vec<f64>) {
        default_input_box(self.system)
    }
}

/// Default input box per system, in regression-input layout `[s, u]`.
pub fn default_input_box(system: SystemKind) -> (Vec<f64>, Vec<f64>) {
    use std::f64::consts::PI;
    match system {
        SystemKind::Sinusoid => (vec![-5.0], vec![5.0]),
        SystemKind::Pendulum => (vec![-PI, -5.0, -1.0], vec![PI, 5.0, 1.0]),
        SystemKind::Bicycle => (
            vec![-3.0, -3.0, -PI, -2.0, -PI / 3.0, -1.0],
            vec![3.0, 3.0, PI, 2.0, PI / 3.0, 1.0],
        ),
    }
}

/// Conventional default parameter priors (the ranges are not dictated by
/// any reference system; experiment configs override them).
pub fn default_param_prior(system: SystemKind) -> ParamPrior {
    let u = |lower, upper| ParamDist::Uniform { lower, upper };
    match system {
        SystemKind::Sinusoid => ParamPrior::new(&[
            ("amplitude", u(0.5, 2.0)),
            ("frequency", u(1.0, 3.0)),
            ("slope", u(-1.0, 1.0)),
        ])
        .expect("static prior"),
        SystemKind::Pendulum => ParamPrior::new(&[
            ("m", u(0.7, 1.3)),
            ("l", u(0.7, 1.3)),
            ("c_m", u(1.0, 3.0)),
            ("i", u(0.7, 1.3)),
        ])
        .expect("static prior"),
        SystemKind::Bicycle => ParamPrior::new(&[
            ("wheelbase", u(0.2, 0.4)),
            ("motor_gain", u(2.0, 6.0)),
        ])
        .expect("static prior"),
    }
}

/// Canonical "true" parameters of the high-fidelity systems used when
/// generating ground-truth data.
pub fn true_params(system: SystemKind) -> SimParams {
    match system {
        SystemKind::Sinusoid => SimParams::new(&[
            ("amplitude", 1.2),
            ("frequency", 2.0),
            ("slope", 0.3),
        ]),
        SystemKind::Pendulum => {
            SimParams::new(&[("m", 1.0), ("l", 1.0), ("c_m", 2.0), ("i", 1.0)])
        }
        SystemKind::Bicycle => SimParams::new(&[("wheelbase", 0.3), ("motor_gain", 4.0)]),
    }
}
