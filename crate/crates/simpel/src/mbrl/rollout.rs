//! Trajectory-sampling rollouts: each rollout is pinned to one model branch
//! (particle) for its whole horizon, separating epistemic from aleatoric
//! uncertainty.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DynamicsModel, Propagation, RewardConfig, RlError};

const STATE_LIMIT: f64 = 1e6;

/// Either an open-loop action sequence (rows = steps) or a policy closure.
pub enum ActionSource<'a> {
    Sequence(&'a nalgebra::DMatrix<f64>),
    Policy(&'a (dyn Fn(usize, &[f64]) -> Vec<f64> + Sync)),
}

impl ActionSource<'_> {
    fn action(&self, step: usize, state: &[f64]) -> Vec<f64> {
        match self {
            ActionSource::Sequence(seq) => {
                (0..seq.ncols()).map(|c| seq[(step, c)]).collect()
            }
            ActionSource::Policy(p) => p(step, state),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Visited states including the start (horizon+1 entries when not
    /// truncated).
    pub states: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub total_reward: f64,
    pub truncated: bool,
}

/// Roll `n_rollouts` trajectories of length `horizon` from `start`, rollout
/// j pinned to branch `j % n_branches` (TS-∞) or resampled per step. The
/// per-step next state is the pinned branch's prediction plus optional
/// Gaussian noise (seeded deterministically from `noise_seed`). Divergent
/// trajectories are truncated and the remaining steps receive
/// `penalty_reward`.
#[allow(clippy::too_many_arguments)]
pub fn trajectory_sampling_rollout(
    model: &dyn DynamicsModel,
    reward: &RewardConfig,
    start: &[f64],
    actions: &ActionSource,
    horizon: usize,
    n_rollouts: usize,
    propagation: Propagation,
    noise_sigma: Option<f64>,
    penalty_reward: f64,
    noise_seed: u64,
) -> Result<Vec<Trajectory>, RlError> {
    if horizon < 1 {
        return Err(RlError::InvalidConfig("horizon must be >= 1".to_string()));
    }
    if n_rollouts < 1 {
        return Err(RlError::InvalidConfig("need at least one rollout".to_string()));
    }
    let branches = model.n_branches();
    let mut out = Vec::with_capacity(n_rollouts);
    for j in 0..n_rollouts {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed.wrapping_add(j as u64));
        let pinned = j % branches;
        let mut state = start.to_vec();
        let mut states = vec![state.clone()];
        let mut rewards = Vec::with_capacity(horizon);
        let mut total = 0.0;
        let mut truncated = false;
        for step in 0..horizon {
            let action = actions.action(step, &state);
            let branch = match propagation {
                Propagation::TsInf => pinned,
                Propagation::TsResample => rng.gen_range(0..branches),
            };
            let next = match model.step(branch, &state, &action) {
                Ok(mut next) => {
                    if let Some(sigma) = noise_sigma {
                        for v in next.iter_mut() {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            *v += sigma * z;
                        }
                    }
                    next
                }
                Err(_) => {
                    truncated = true;
                    for _ in step..horizon {
                        rewards.push(penalty_reward);
                        total += penalty_reward;
                    }
                    break;
                }
            };
            if next.iter().any(|v| !v.is_finite() || v.abs() > STATE_LIMIT) {
                truncated = true;
                for _ in step..horizon {
                    rewards.push(penalty_reward);
                    total += penalty_reward;
                }
                break;
            }
            let r = reward.evaluate(&next, &action);
            rewards.push(r);
            total += r;
            state = next;
            states.push(state.clone());
        }
        out.push(Trajectory {
            states,
            rewards,
            total_reward: total,
            truncated,
        });
    }
    Ok(out)
}
