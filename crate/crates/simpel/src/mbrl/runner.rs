//! Offline and episodic model-based RL loops.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::cem::{cem_plan, PlannerConfig};
use super::{
    wrap_angle, DynamicsModel, EnsembleDynamics, OracleDynamics, RlError, RlTask, Transition,
};
use crate::bnn::{fsvgd_train, Dataset, ParticleEnsemble};
use crate::eval::ModelSettings;
use crate::prior::{CombinedPrior, GapSpec};
use crate::simulators::SystemKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RlMethod {
    Simpel,
    SimpelOnlySim,
    Fsvgd,
    /// The true simulator in place of a learned model (reference).
    Oracle,
}

impl RlMethod {
    pub const ALL: [RlMethod; 4] = [
        RlMethod::Simpel,
        RlMethod::SimpelOnlySim,
        RlMethod::Fsvgd,
        RlMethod::Oracle,
    ];

    pub fn id(self) -> &'static str {
        match self {
            RlMethod::Simpel => "simpel",
            RlMethod::SimpelOnlySim => "simpel-only-sim",
            RlMethod::Fsvgd => "fsvgd",
            RlMethod::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Result<RlMethod, RlError> {
        RlMethod::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| RlError::UnknownMethod(s.to_string()))
    }
}

fn buffer_to_dataset(task: &RlTask, buffer: &[Transition]) -> Result<Dataset, RlError> {
    let (d_s, d_a) = (task.state_dim(), task.action_dim());
    let x = DMatrix::from_fn(buffer.len(), d_s + d_a, |r, c| {
        if c < d_s {
            buffer[r].state[c]
        } else {
            buffer[r].action[c - d_s]
        }
    });
    let y = DMatrix::from_fn(buffer.len(), d_s, |r, c| buffer[r].next_state[c]);
    Ok(Dataset::new(x, y)?)
}

/// Fit the dynamics model of `method` on the buffer. Oracle returns `None`
/// (the planner uses the true simulator). The second value is the final
/// training NLL (NaN when there is no data or no training).
pub fn fit_dynamics(
    task: &RlTask,
    method: RlMethod,
    settings: &ModelSettings,
    buffer: &[Transition],
    rng: &mut ChaCha8Rng,
) -> Result<(Option<ParticleEnsemble>, f64), RlError> {
    if method == RlMethod::Oracle {
        return Ok((None, f64::NAN));
    }
    let dataset = buffer_to_dataset(task, buffer)?;
    let (d_s, d_a) = (task.state_dim(), task.action_dim());
    let arch = settings.architecture_for(d_s + d_a, d_s)?;
    let (lo, hi) = task.input_box();
    let cfg = settings.fsvgd_config_for(lo, hi)?;
    let prior = match method {
        RlMethod::Simpel => CombinedPrior::new(
            Some((task.low_fidelity.clone(), task.param_prior.clone())),
            Some(GapSpec::Shared(settings.gap())),
            d_s,
        )?,
        RlMethod::SimpelOnlySim => CombinedPrior::new(
            Some((task.low_fidelity.clone(), task.param_prior.clone())),
            None,
            d_s,
        )?,
        RlMethod::Fsvgd => {
            CombinedPrior::new(None, Some(GapSpec::Shared(settings.generic_gp())), d_s)?
        }
        RlMethod::Oracle => unreachable!(),
    };
    let noise = vec![task.noise_sigma * task.noise_sigma; d_s];
    let (ensemble, log) = fsvgd_train(
        arch,
        settings.particles,
        noise,
        &dataset,
        &prior,
        &cfg,
        rng,
    )?;
    let train_nll = if dataset.is_empty() {
        f64::NAN
    } else {
        log.last().map_or(f64::NAN, |l| l.train_nll)
    };
    Ok((Some(ensemble), train_nll))
}

/// One closed-loop episode on the true environment with receding-horizon
/// CEM planning on `model`. The environment step never touches the learned
/// model; the planner never touches the environment.
fn closed_loop_episode(
    task: &RlTask,
    model: &dyn DynamicsModel,
    planner: &PlannerConfig,
    episode: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<Transition>, Vec<Vec<f64>>), RlError> {
    let mut state = task.start_state.clone();
    let mut states = vec![state.clone()];
    let mut transitions = Vec::with_capacity(task.horizon);
    let mut total = 0.0;
    let mut warm: Option<DMatrix<f64>> = None;

    for step in 0..task.horizon {
        let result = cem_plan(model, &task.reward, &state, planner, warm.as_ref(), rng)?;
        let action = result.action;
        // Receding horizon: shift the refined mean one step forward.
        let mut shifted = DMatrix::zeros(planner.horizon, task.action_dim());
        for r in 1..planner.horizon {
            for c in 0..task.action_dim() {
                shifted[(r - 1, c)] = result.mean_sequence[(r, c)];
            }
        }
        warm = Some(shifted);

        let next = task.env.step(&state, &action)?;
        let reward = task.reward.evaluate(&next, &action);
        total += reward;
        transitions.push(Transition {
            state: state.clone(),
            action,
            next_state: next.clone(),
            reward,
            episode,
            step,
        });
        state = next;
        states.push(state.clone());
    }
    Ok((total, transitions, states))
}

#[derive(Clone, Debug)]
pub struct OfflineOutcome {
    pub eval_return: f64,
    /// Realized closed-loop states of the evaluation episode.
    pub trajectory: Vec<Vec<f64>>,
    pub train_nll: f64,
    pub wall_time_s: f64,
    /// The fitted dynamics ensemble (None for the oracle method).
    pub ensemble: Option<ParticleEnsemble>,
}

/// Fit dynamics on an offline buffer, then evaluate one closed-loop episode
/// on the true environment.
pub fn run_offline_rl(
    buffer: &[Transition],
    method: RlMethod,
    task: &RlTask,
    settings: &ModelSettings,
    planner: &PlannerConfig,
    rng: &mut ChaCha8Rng,
    real_timing: bool,
) -> Result<OfflineOutcome, RlError> {
    if buffer.is_empty() && method != RlMethod::Oracle {
        return Err(RlError::InvalidConfig(
            "offline RL needs a nonempty buffer".to_string(),
        ));
    }
    let started = Instant::now();
    let (ensemble, train_nll) = fit_dynamics(task, method, settings, buffer, rng)?;
    let (eval_return, _, trajectory) = match &ensemble {
        Some(e) => {
            let model = EnsembleDynamics { ensemble: e };
            closed_loop_episode(task, &model, planner, 0, rng)?
        }
        None => {
            let model = OracleDynamics { env: &task.env };
            closed_loop_episode(task, &model, planner, 0, rng)?
        }
    };
    Ok(OfflineOutcome {
        eval_return,
        trajectory,
        train_nll,
        wall_time_s: if real_timing {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        },
        ensemble,
    })
}

#[derive(Clone, Debug)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub eval_return: f64,
    pub buffer_size: usize,
    pub train_nll: f64,
    pub wall_time_s: f64,
}

/// Episodic loop: refit the model on the buffer, run one closed-loop
/// episode, append its transitions, record the return. A failed episode
/// records `horizon × penalty_reward` and continues.
#[allow(clippy::too_many_arguments)]
pub fn run_episodic_rl(
    task: &RlTask,
    method: RlMethod,
    episodes: usize,
    settings: &ModelSettings,
    planner: &PlannerConfig,
    rng: &mut ChaCha8Rng,
    real_timing: bool,
) -> Result<(Vec<EpisodeRecord>, Vec<Vec<Vec<f64>>>, Option<ParticleEnsemble>), RlError> {
    if episodes < 1 {
        return Err(RlError::InvalidConfig("episodes must be >= 1".to_string()));
    }
    let mut buffer: Vec<Transition> = Vec::new();
    let mut records = Vec::with_capacity(episodes);
    let mut trajectories = Vec::with_capacity(episodes);
    let mut last_ensemble = None;
    for episode in 0..episodes {
        let started = Instant::now();
        let buffer_before = buffer.len();
        let outcome = (|| -> Result<(f64, Vec<Transition>, Vec<Vec<f64>>, f64), RlError> {
            let (ensemble, train_nll) = fit_dynamics(task, method, settings, &buffer, rng)?;
            let (ret, transitions, states) = match &ensemble {
                Some(e) => {
                    let model = EnsembleDynamics { ensemble: e };
                    closed_loop_episode(task, &model, planner, episode, rng)?
                }
                None => {
                    let model = OracleDynamics { env: &task.env };
                    closed_loop_episode(task, &model, planner, episode, rng)?
                }
            };
            if let Some(e) = ensemble {
                last_ensemble = Some(e);
            }
            Ok((ret, transitions, states, train_nll))
        })();
        let wall_time_s = if real_timing {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        };
        match outcome {
            Ok((eval_return, transitions, states, train_nll)) => {
                buffer.extend(transitions);
                trajectories.push(states);
                records.push(EpisodeRecord {
                    episode,
                    eval_return,
                    buffer_size: buffer.len(),
                    train_nll,
                    wall_time_s,
                });
            }
            Err(_) => {
                trajectories.push(Vec::new());
                records.push(EpisodeRecord {
                    episode,
                    eval_return: planner.penalty_reward * task.horizon as f64,
                    buffer_size: buffer_before,
                    train_nll: f64::NAN,
                    wall_time_s,
                });
            }
        }
    }
    Ok((records, trajectories, last_ensemble))
}

/// Offline data: alternating episodes of a noisy scripted controller and
/// uniform random actions (50/50), truncated to `n` transitions.
pub fn collect_offline_buffer(
    task: &RlTask,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Transition>, RlError> {
    let mut buffer = Vec::with_capacity(n);
    let mut episode = 0usize;
    let a_dim = task.action_dim();
    while buffer.len() < n {
        let scripted = episode % 2 == 0;
        let mut state = task.start_state.clone();
        let mut held: Vec<f64> = vec![0.0; a_dim];
        for step in 0..task.horizon {
            if buffer.len() >= n {
                break;
            }
            let mut action: Vec<f64> = if scripted {
                scripted_action(task, &state, rng)
            } else {
                // Piecewise-held uniform random actions.
                if step % 10 == 0 {
                    for (c, h) in held.iter_mut().enumerate() {
                        *h = rng.gen_range(task.action_lower[c]..task.action_upper[c]);
                    }
                }
                held.clone()
            };
            for (c, a) in action.iter_mut().enumerate() {
                *a = a.clamp(task.action_lower[c], task.action_upper[c]);
            }
            let next = task.env.step(&state, &action)?;
            let reward = task.reward.evaluate(&next, &action);
            buffer.push(Transition {
                state: state.clone(),
                action,
                next_state: next.clone(),
                reward,
                episode,
                step,
            });
            state = next;
        }
        episode += 1;
    }
    Ok(buffer)
}

/// Heuristic exploration controller. For the pendulum: energy pumping plus
/// a stabilizing PD near the top, with exploration noise. Other systems
/// fall back to held-random actions via the caller.
fn scripted_action(task: &RlTask, state: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    match task.env.model.system {
        SystemKind::Pendulum => {
            let (phi, phi_dot) = (state[0], state[1]);
            let m = task.env.params.get("m").unwrap_or(1.0.into());
            let l = task.env.params.get("l").unwrap_or(1.0.into());
            let i = task.env.params.get("i").unwrap_or(1.0.into());
            let mgl = m * crate::simulators::GRAVITY * l;
            let energy = 0.5 * i * phi_dot * phi_dot + mgl * phi.cos();
            let u = if phi.cos() > 0.9 {
                -4.0 * wrap_angle(phi) - 1.0 * phi_dot
            } else {
                let pump = 0.5 * (mgl - energy);
                pump * if phi_dot >= 0.0 { 1.0 } else { -1.0 }
            };
            let z: f64 = StandardNormal.sample(rng);
            vec![u + 0.3 * z]
        }
        _ => (0..task.action_dim())
            .map(|c| rng.gen_range(task.action_lower[c]..task.action_upper[c]))
            .collect(),
    }
}

fn fmt_metric(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6e}")
    } else {
        "nan".to_string()
    }
}

/// `episode,return,buffer_size,train_nll,wall_time_s`
pub fn write_episode_csv(path: &Path, records: &[EpisodeRecord]) -> Result<(), RlError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "episode,return,buffer_size,train_nll,wall_time_s")?;
    for r in records {
        writeln!(
            f,
            "{},{},{},{},{:.3}",
            r.episode,
            fmt_metric(r.eval_return),
            r.buffer_size,
            fmt_metric(r.train_nll),
            r.wall_time_s
        )?;
    }
    Ok(())
}

/// Transition buffer as CSV:
/// `episode,step,s0…,a0…,ns0…,reward` (float fields in full precision).
pub fn write_buffer_csv(path: &Path, buffer: &[Transition]) -> Result<(), RlError> {
    let mut f = std::fs::File::create(path)?;
    let (d_s, d_a) = match buffer.first() {
        Some(t) => (t.state.len(), t.action.len()),
        None => (0, 0),
    };
    let header: Vec<String> = ["episode".to_string(), "step".to_string()]
        .into_iter()
        .chain((0..d_s).map(|c| format!("s{c}")))
        .chain((0..d_a).map(|c| format!("a{c}")))
        .chain((0..d_s).map(|c| format!("ns{c}")))
        .chain(std::iter::once("reward".to_string()))
        .collect();
    writeln!(f, "{}", header.join(","))?;
    for t in buffer {
        let cells: Vec<String> = [t.episode.to_string(), t.step.to_string()]
            .into_iter()
            .chain(t.state.iter().map(|v| format!("{v:e}")))
            .chain(t.action.iter().map(|v| format!("{v:e}")))
            .chain(t.next_state.iter().map(|v| format!("{v:e}")))
            .chain(std::iter::once(format!("{:e}", t.reward)))
            .collect();
        writeln!(f, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Read a transition buffer written by [`write_buffer_csv`]. State/action
/// dimensions come from the task.
pub fn read_buffer_csv(path: &Path, task: &RlTask) -> Result<Vec<Transition>, RlError> {
    let text = std::fs::read_to_string(path)?;
    let (d_s, d_a) = (task.state_dim(), task.action_dim());
    let expected = 2 + 2 * d_s + d_a + 1;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != expected {
            return Err(RlError::InvalidConfig(format!(
                "buffer row {i} has {} fields, expected {expected}",
                parts.len()
            )));
        }
        let parse = |s: &str| -> Result<f64, RlError> {
            s.parse()
                .map_err(|_| RlError::InvalidConfig(format!("bad float `{s}` in buffer row {i}")))
        };
        let episode: usize = parts[0]
            .parse()
            .map_err(|_| RlError::InvalidConfig(format!("bad episode in buffer row {i}")))?;
        let step: usize = parts[1]
            .parse()
            .map_err(|_| RlError::InvalidConfig(format!("bad step in buffer row {i}")))?;
        let mut fields = Vec::with_capacity(expected - 2);
        for p in &parts[2..] {
            fields.push(parse(p)?);
        }
        out.push(Transition {
            state: fields[0..d_s].to_vec(),
            action: fields[d_s..d_s + d_a].to_vec(),
            next_state: fields[d_s + d_a..2 * d_s + d_a].to_vec(),
            reward: fields[2 * d_s + d_a],
            episode,
            step,
        });
    }
    Ok(out)
}

/// Per-step states of one realized trajectory: `step,s0,s1,…`.
pub fn write_trajectory_csv(path: &Path, states: &[Vec<f64>]) -> Result<(), RlError> {
    let mut f = std::fs::File::create(path)?;
    let dim = states.first().map_or(0, Vec::len);
    let header: Vec<String> = std::iter::once("step".to_string())
        .chain((0..dim).map(|c| format!("s{c}")))
        .collect();
    writeln!(f, "{}", header.join(","))?;
    for (step, s) in states.iter().enumerate() {
        let cells: Vec<String> = std::iter::once(step.to_string())
            .chain(s.iter().map(|v| fmt_metric(*v)))
            .collect();
        writeln!(f, "{}", cells.join(","))?;
    }
    Ok(())
}
