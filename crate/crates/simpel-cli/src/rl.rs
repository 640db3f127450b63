//! `rl`: offline or episodic model-based RL from a TOML config.

use std::path::PathBuf;

use serde::Deserialize;
use simpel::bnn::save_ensemble;
use simpel::eval::ModelSettings;
use simpel::mbrl::{
    collect_offline_buffer, read_buffer_csv, run_episodic_rl, run_offline_rl, write_buffer_csv,
    write_episode_csv, write_trajectory_csv, EpisodeRecord, PlannerConfig, Propagation,
    RlMethod, RlTask,
};
use simpel::rng::stream;

use crate::config::{apply_overrides, load_toml, section};
use crate::regression::TimingMode;
use crate::{Failure, RunArgs};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RlMode {
    Offline,
    Episodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RlTaskName {
    PendulumSwingUp,
    BicycleParking,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default)]
struct PlannerSettings {
    horizon: usize,
    population: usize,
    elite_fraction: f64,
    iterations: usize,
    rollouts: usize,
    init_std: f64,
    penalty_reward: f64,
    propagation: Propagation,
    noise_sigma: Option<f64>,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        Self {
            horizon: 25,
            population: 64,
            elite_fraction: 0.15,
            iterations: 4,
            rollouts: 5,
            init_std: 0.5,
            penalty_reward: -20.0,
            propagation: Propagation::TsInf,
            noise_sigma: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
struct RlConfig {
    mode: RlMode,
    task: RlTaskName,
    method: String,
    #[serde(default = "RlConfig::default_episodes")]
    episodes: usize,
    #[serde(default)]
    buffer_size: Option<usize>,
    #[serde(default)]
    buffer_path: Option<PathBuf>,
    /// Episode length override (H).
    #[serde(default)]
    horizon: Option<usize>,
    #[serde(default)]
    model: ModelSettings,
    #[serde(default)]
    planner: PlannerSettings,
    #[serde(default)]
    timing: TimingMode,
}

impl RlConfig {
    fn default_episodes() -> usize {
        15
    }
}

pub fn run(args: &RunArgs) -> Result<(), Failure> {
    let mut root = load_toml(&args.config)?;
    apply_overrides(&mut root, &args.set)?;
    let cfg: RlConfig = section(&root, "rl")?;
    let method = RlMethod::parse(&cfg.method).map_err(Failure::from)?;

    let mut task = match cfg.task {
        RlTaskName::PendulumSwingUp => RlTask::pendulum_swing_up(),
        RlTaskName::BicycleParking => RlTask::bicycle_parking(),
    };
    if let Some(h) = cfg.horizon {
        task.horizon = h;
    }
    let mut planner = PlannerConfig::new(
        cfg.planner.horizon.min(task.horizon),
        task.action_lower.clone(),
        task.action_upper.clone(),
    );
    planner.population = cfg.planner.population;
    planner.elite_fraction = cfg.planner.elite_fraction;
    planner.iterations = cfg.planner.iterations;
    planner.rollouts = cfg.planner.rollouts;
    planner.init_std = cfg.planner.init_std;
    planner.penalty_reward = cfg.planner.penalty_reward;
    planner.propagation = cfg.planner.propagation;
    planner.noise_sigma = cfg.planner.noise_sigma;

    std::fs::create_dir_all(&args.out)?;
    let real_timing = cfg.timing == TimingMode::Real;

    match cfg.mode {
        RlMode::Offline => {
            let buffer = match (&cfg.buffer_path, cfg.buffer_size) {
                (Some(path), _) => read_buffer_csv(path, &task).map_err(Failure::from)?,
                (None, Some(n)) => {
                    let mut rng = stream(args.seed, "rl/collect", 0);
                    let buffer = collect_offline_buffer(&task, n, &mut rng)
                        .map_err(Failure::from)?;
                    write_buffer_csv(&args.out.join("buffer.csv"), &buffer)
                        .map_err(Failure::from)?;
                    buffer
                }
                (None, None) => {
                    return Err(Failure::Config(
                        "offline mode needs buffer_path or buffer_size".to_string(),
                    ))
                }
            };
            let mut rng = stream(args.seed, "rl/offline", 0);
            let outcome = run_offline_rl(
                &buffer,
                method,
                &task,
                &cfg.model,
                &planner,
                &mut rng,
                real_timing,
            )
            .map_err(Failure::from)?;
            let record = EpisodeRecord {
                episode: 0,
                eval_return: outcome.eval_return,
                buffer_size: buffer.len(),
                train_nll: outcome.train_nll,
                wall_time_s: outcome.wall_time_s,
            };
            write_episode_csv(&args.out.join("episodes.csv"), &[record])
                .map_err(Failure::from)?;
            write_trajectory_csv(&args.out.join("trajectory.csv"), &outcome.trajectory)
                .map_err(Failure::from)?;
            if let Some(ensemble) = &outcome.ensemble {
                save_ensemble(&args.out.join("model.ckpt"), ensemble)
                    .map_err(Failure::from)?;
            }
            println!(
                "rl offline [{}]: return {:.3} over {} transitions",
                method.id(),
                outcome.eval_return,
                buffer.len()
            );
        }
        RlMode::Episodic => {
            let mut rng = stream(args.seed, "rl/episodic", 0);
            let (records, trajectories, ensemble) = run_episodic_rl(
                &task,
                method,
                cfg.episodes,
                &cfg.model,
                &planner,
                &mut rng,
                real_timing,
            )
            .map_err(Failure::from)?;
            write_episode_csv(&args.out.join("episodes.csv"), &records)
                .map_err(Failure::from)?;
            if let Some(ensemble) = &ensemble {
                save_ensemble(&args.out.join("model.ckpt"), ensemble)
                    .map_err(Failure::from)?;
            }
            for (e, states) in trajectories.iter().enumerate() {
                write_trajectory_csv(
                    &args.out.join(format!("trajectory_ep{e:03}.csv")),
                    states,
                )
                .map_err(Failure::from)?;
            }
            let best = records
                .iter()
                .map(|r| r.eval_return)
                .fold(f64::NEG_INFINITY, f64::max);
            println!(
                "rl episodic [{}]: {} episodes, best return {best:.3}",
                method.id(),
                records.len()
            );
        }
    }
    Ok(())
}
