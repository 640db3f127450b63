//! Offline and episodic model-based RL with trajectory-sampling rollouts
//! and a receding-horizon cross-entropy planner.

mod cem;
mod rollout;
mod runner;

pub use cem::{cem_plan, CemResult, PlannerConfig, Propagation};
pub use rollout::{trajectory_sampling_rollout, ActionSource, Trajectory};
pub use runner::{
    collect_offline_buffer, fit_dynamics, read_buffer_csv, run_episodic_rl, run_offline_rl,
    write_buffer_csv, write_episode_csv, write_trajectory_csv, EpisodeRecord, OfflineOutcome,
    RlMethod,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bnn::{mlp_forward, BnnError, ParticleEnsemble};
use crate::eval::EvalError;
use crate::prior::PriorError;
use crate::simulators::{
    integrate_step, ParamPrior, SimParams, SimulatorError, SimulatorModel, SystemKind,
};

#[derive(Debug, Error)]
pub enum RlError {
    #[error("invalid RL config: {0}")]
    InvalidConfig(String),
    #[error("unknown method id `{0}`")]
    UnknownMethod(String),
    #[error(transparent)]
    Simulator(#[from] SimulatorError),
    #[error(transparent)]
    Bnn(#[from] BnnError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One environment transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub episode: usize,
    pub step: usize,
}

/// Quadratic reward to a target state, with wrapped angle dimensions and an
/// action penalty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub target: Vec<f64>,
    /// Diagonal state weights.
    pub state_weights: Vec<f64>,
    pub action_weight: f64,
    /// Indices of state dimensions treated as angles (differences wrapped
    /// to [-π, π)).
    pub angle_dims: Vec<usize>,
}

pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut x = (a + std::f64::consts::PI) % two_pi;
    if x < 0.0 {
        x += two_pi;
    }
    x - std::f64::consts::PI
}

impl RewardConfig {
    /// Swing-up to the upright equilibrium: `-(angle to upright)² - 0.1·φ̇²
    /// - 0.01·u²`.
    pub fn pendulum_swing_up() -> Self {
        Self {
            target: vec![0.0, 0.0],
            state_weights: vec![1.0, 0.1],
            action_weight: 0.01,
            angle_dims: vec![0],
        }
    }

    /// Reverse parking ~2 m behind the start with the heading rotated 180°.
    pub fn bicycle_parking() -> Self {
        Self {
            target: vec![-2.0, 0.0, std::f64::consts::PI, 0.0],
            state_weights: vec![1.0, 1.0, 1.0, 0.1],
            action_weight: 0.01,
            angle_dims: vec![2],
        }
    }

    pub fn evaluate(&self, state: &[f64], action: &[f64]) -> f64 {
        let mut cost = 0.0;
        for (i, (&s, &t)) in state.iter().zip(&self.target).enumerate() {
            let mut d = s - t;
            if self.angle_dims.contains(&i) {
                d = wrap_angle(d);
            }
            cost += self.state_weights[i] * d * d;
        }
        for a in action {
            cost += self.action_weight * a * a;
        }
        -cost
    }
}

/// The true system: closed-loop evaluation steps only ever go through this
/// type, never through a learned model.
#[derive(Clone, Debug)]
pub struct Environment {
    pub model: SimulatorModel,
    pub params: SimParams,
}

impl Environment {
    pub fn step(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>, RlError> {
        Ok(integrate_step(
            &self.model,
            &self.params,
            state,
            action,
            self.model.dt,
        )?)
    }
}

/// A branchable one-step dynamics model for trajectory sampling. Each
/// rollout pins one branch (one particle) for its whole horizon.
pub trait DynamicsModel: Sync {
    fn n_branches(&self) -> usize;
    fn step(&self, branch: usize, state: &[f64], action: &[f64]) -> Result<Vec<f64>, RlError>;
}

/// Learned dynamics: branch = particle index; the next state is that
/// particle's deterministic prediction.
pub struct EnsembleDynamics<'a> {
    pub ensemble: &'a ParticleEnsemble,
}

impl DynamicsModel for EnsembleDynamics<'_> {
    fn n_branches(&self) -> usize {
        self.ensemble.len()
    }

    fn step(&self, branch: usize, state: &[f64], action: &[f64]) -> Result<Vec<f64>, RlError> {
        let d_x = state.len() + action.len();
        let mut x = DMatrix::zeros(1, d_x);
        for (c, v) in state.iter().chain(action.iter()).enumerate() {
            x[(0, c)] = *v;
        }
        let out = mlp_forward(
            &self.ensemble.architecture,
            &self.ensemble.particles[branch],
            &x,
        )?;
        Ok((0..out.ncols()).map(|c| out[(0, c)]).collect())
    }
}

/// Reference dynamics: the true simulator in place of a learned model.
pub struct OracleDynamics<'a> {
    pub env: &'a Environment,
}

impl DynamicsModel for OracleDynamics<'_> {
    fn n_branches(&self) -> usize {
        1
    }

    fn step(&self, _branch: usize, state: &[f64], action: &[f64]) -> Result<Vec<f64>, RlError> {
        self.env.step(state, action)
    }
}

/// A model-based RL task: the true environment, the low-fidelity prior
/// simulator with its parameter prior, the reward, and the domains used for
/// measurement sampling and planning.
#[derive(Clone, Debug)]
pub struct RlTask {
    pub env: Environment,
    pub low_fidelity: SimulatorModel,
    pub param_prior: ParamPrior,
    pub reward: RewardConfig,
    /// Episode length H.
    pub horizon: usize,
    pub start_state: Vec<f64>,
    pub action_lower: Vec<f64>,
    pub action_upper: Vec<f64>,
    /// State box of the measurement distribution used for model learning.
    pub state_lower: Vec<f64>,
    pub state_upper: Vec<f64>,
    /// Observation noise assumed by the dynamics model.
    pub noise_sigma: f64,
}

impl RlTask {
    /// Pendulum swing-up from hanging, 30 Hz, strong-but-bounded motor.
    pub fn pendulum_swing_up() -> Self {
        use crate::simulators::{Fidelity, ParamDist, ParamSpec};
        use std::f64::consts::PI;
        let dt = 1.0 / 30.0;
        let true_params = SimParams::new(&[("m", 1.0), ("l", 1.0), ("c_m", 12.0), ("i", 1.0)]);
        let u = |lower, upper| ParamDist::Uniform { lower, upper };
        let prior = ParamPrior::new(&[
            ("m", u(0.7, 1.3)),
            ("l", u(0.7, 1.3)),
            ("c_m", u(8.0, 16.0)),
            ("i", u(0.7, 1.3)),
        ])
        .expect("static prior");
        let env_model = SimulatorModel::new(
            SystemKind::Pendulum,
            Fidelity::High,
            dt,
            ParamSpec::Fixed(true_params.clone()),
        );
        let low = SimulatorModel::new(
            SystemKind::Pendulum,
            Fidelity::Low,
            dt,
            ParamSpec::Prior(prior.clone()),
        );
        Self {
            env: Environment {
                model: env_model,
                params: true_params,
            },
            low_fidelity: low,
            param_prior: prior,
            reward: RewardConfig::pendulum_swing_up(),
            horizon: 100,
            start_state: vec![PI, 0.0],
            action_lower: vec![-1.0],
            action_upper: vec![1.0],
            state_lower: vec![-1.5 * PI, -8.0],
            state_upper: vec![1.5 * PI, 8.0],
            noise_sigma: 0.01,
        }
    }

    /// Kinematic-bicycle reverse parking: rotate 180° and stop ~2 m behind.
    pub fn bicycle_parking() -> Self {
        use crate::simulators::{Fidelity, ParamDist, ParamSpec};
        use std::f64::consts::PI;
        let dt = 1.0 / 30.0;
        let true_params = SimParams::new(&[("wheelbase", 0.3), ("motor_gain", 4.0)]);
        let u = |lower, upper| ParamDist::Uniform { lower, upper };
        let prior =
            ParamPrior::new(&[("wheelbase", u(0.2, 0.4)), ("motor_gain", u(2.0, 6.0))])
                .expect("static prior");
        let env_model = SimulatorModel::new(
            SystemKind::Bicycle,
            Fidelity::High,
            dt,
            ParamSpec::Fixed(true_params.clone()),
        );
        let low = SimulatorModel::new(
            SystemKind::Bicycle,
            Fidelity::Low,
            dt,
            ParamSpec::Prior(prior.clone()),
        );
        Self {
            env: Environment {
                model: env_model,
                params: true_params,
            },
            low_fidelity: low,
            param_prior: prior,
            reward: RewardConfig::bicycle_parking(),
            horizon: 100,
            start_state: vec![0.0, 0.0, 0.0, 0.0],
            action_lower: vec![-PI / 3.0, -1.0],
            action_upper: vec![PI / 3.0, 1.0],
            state_lower: vec![-4.0, -4.0, -PI, -2.5],
            state_upper: vec![4.0, 4.0, PI, 2.5],
            noise_sigma: 0.01,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.start_state.len()
    }

    pub fn action_dim(&self) -> usize {
        self.action_lower.len()
    }

    /// Regression-input box [state, action] for the measurement
    /// distribution.
    pub fn input_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = self.state_lower.clone();
        lo.extend_from_slice(&self.action_lower);
        let mut hi = self.state_upper.clone();
        hi.extend_from_slice(&self.action_upper);
        (lo, hi)
    }
}
