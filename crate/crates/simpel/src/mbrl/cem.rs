//! Receding-horizon cross-entropy planning over action sequences.
//!
//! Candidates are scored by mean trajectory-sampling return; each iteration
//! refits the sampling distribution to the elite pool. Elites are retained
//! across iterations, so the elite mean return is monotonically
//! nondecreasing by construction.

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rollout::{trajectory_sampling_rollout, ActionSource};
use super::{DynamicsModel, RewardConfig, RlError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Propagation {
    /// Pin one particle per trajectory for the whole horizon.
    TsInf,
    /// Resample the particle at every step.
    TsResample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Planning horizon (≤ the episode length).
    pub horizon: usize,
    pub population: usize,
    pub elite_fraction: f64,
    pub iterations: usize,
    pub action_lower: Vec<f64>,
    pub action_upper: Vec<f64>,
    pub propagation: Propagation,
    /// Trajectories per candidate (pinned round-robin over particles).
    pub rollouts: usize,
    /// Optional Gaussian noise on model next-states.
    pub noise_sigma: Option<f64>,
    /// Initial action-distribution standard deviation.
    pub init_std: f64,
    /// Reward assigned to the remaining steps of a diverged trajectory.
    pub penalty_reward: f64,
}

impl PlannerConfig {
    pub fn new(horizon: usize, action_lower: Vec<f64>, action_upper: Vec<f64>) -> Self {
        Self {
            horizon,
            population: 64,
            elite_fraction: 0.15,
            iterations: 4,
            action_lower,
            action_upper,
            propagation: Propagation::TsInf,
            rollouts: 5,
            noise_sigma: None,
            init_std: 0.5,
            penalty_reward: -20.0,
        }
    }

    pub fn n_elites(&self) -> usize {
        ((self.population as f64 * self.elite_fraction).round() as usize)
            .clamp(1, self.population)
    }

    pub fn validate(&self) -> Result<(), RlError> {
        if self.horizon < 1 || self.population < 1 || self.iterations < 1 || self.rollouts < 1 {
            return Err(RlError::InvalidConfig(
                "horizon, population, iterations, rollouts must be >= 1".to_string(),
            ));
        }
        if self.action_lower.len() != self.action_upper.len() {
            return Err(RlError::InvalidConfig("action bound dims differ".to_string()));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(RlError::InvalidConfig(
                "elite_fraction must be in (0, 1]".to_string(),
            ));
        }
        if !(self.init_std > 0.0) {
            return Err(RlError::InvalidConfig("init_std must be > 0".to_string()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CemResult {
    /// First action of the final elite-mean sequence, clipped to bounds.
    pub action: Vec<f64>,
    /// Full elite-mean sequence (for warm starts).
    pub mean_sequence: DMatrix<f64>,
    /// Mean return of the elite pool after each iteration (monotone
    /// nondecreasing).
    pub elite_mean_trace: Vec<f64>,
    /// Every rollout of every candidate diverged; `action` is zero.
    pub all_diverged: bool,
}

fn mean_return(
    model: &dyn DynamicsModel,
    reward: &RewardConfig,
    state: &[f64],
    seq: &DMatrix<f64>,
    config: &PlannerConfig,
    noise_seed: u64,
) -> Result<(f64, bool), RlError> {
    let trajs = trajectory_sampling_rollout(
        model,
        reward,
        state,
        &ActionSource::Sequence(seq),
        config.horizon,
        config.rollouts,
        config.propagation,
        config.noise_sigma,
        config.penalty_reward,
        noise_seed,
    )?;
    let mean = trajs.iter().map(|t| t.total_reward).sum::<f64>() / trajs.len() as f64;
    let all_truncated = trajs.iter().all(|t| t.truncated);
    Ok((mean, all_truncated))
}

/// Plan from `state`; returns the first action of the refined mean
/// sequence. `init_mean` warm-starts the distribution (receding horizon).
pub fn cem_plan(
    model: &dyn DynamicsModel,
    reward: &RewardConfig,
    state: &[f64],
    config: &PlannerConfig,
    init_mean: Option<&DMatrix<f64>>,
    rng: &mut ChaCha8Rng,
) -> Result<CemResult, RlError> {
    config.validate()?;
    let h = config.horizon;
    let a_dim = config.action_lower.len();
    let clip = |j: usize, v: f64| v.clamp(config.action_lower[j], config.action_upper[j]);

    let mut mean = match init_mean {
        Some(m) if m.nrows() == h && m.ncols() == a_dim => m.clone(),
        _ => DMatrix::zeros(h, a_dim),
    };
    for r in 0..h {
        for c in 0..a_dim {
            mean[(r, c)] = clip(c, mean[(r, c)]);
        }
    }
    let mut std = DMatrix::from_element(h, a_dim, config.init_std);

    // Elite pool retained across iterations: (return, sequence, diverged).
    let mut elites: Vec<(f64, DMatrix<f64>, bool)> = Vec::new();
    let mut trace = Vec::with_capacity(config.iterations);

    for _iter in 0..config.iterations {
        // Draw candidates sequentially (deterministic), evaluate in
        // parallel on per-candidate noise streams.
        let mut candidates = Vec::with_capacity(config.population);
        for _ in 0..config.population {
            let seq = DMatrix::from_fn(h, a_dim, |r, c| {
                let z: f64 = StandardNormal.sample(rng);
                clip(c, mean[(r, c)] + std[(r, c)] * z)
            });
            candidates.push(seq);
        }
        let noise_base: u64 = rand::Rng::gen(rng);
        let scored: Vec<(f64, bool)> = candidates
            .par_iter()
            .enumerate()
            .map(|(i, seq)| {
                mean_return(
                    model,
                    reward,
                    state,
                    seq,
                    config,
                    noise_base.wrapping_add((i as u64) << 20),
                )
            })
            .collect::<Result<_, _>>()?;

        for (seq, (ret, diverged)) in candidates.into_iter().zip(scored) {
            elites.push((ret, seq, diverged));
        }
        elites.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        elites.truncate(config.n_elites());

        let elite_mean_return =
            elites.iter().map(|(r, _, _)| r).sum::<f64>() / elites.len() as f64;
        trace.push(elite_mean_return);

        // Refit the sampling distribution to the elite pool.
        for r in 0..h {
            for c in 0..a_dim {
                let m: f64 =
                    elites.iter().map(|(_, s, _)| s[(r, c)]).sum::<f64>() / elites.len() as f64;
                let v: f64 = elites
                    .iter()
                    .map(|(_, s, _)| (s[(r, c)] - m) * (s[(r, c)] - m))
                    .sum::<f64>()
                    / elites.len() as f64;
                mean[(r, c)] = m;
                std[(r, c)] = v.sqrt().max(1e-3);
            }
        }
    }

    debug_assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-12));

    let all_diverged = elites.iter().all(|(_, _, d)| *d);
    let action = if all_diverged {
        vec![0.0; a_dim]
    } else {
        (0..a_dim).map(|c| clip(c, mean[(0, c)])).collect()
    };
    Ok(CemResult {
        action,
        mean_sequence: mean,
        elite_mean_trace: trace,
        all_diverged,
    })
}
