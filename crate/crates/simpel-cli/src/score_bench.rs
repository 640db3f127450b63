//! `score-bench`: run the estimators over a prior-sample file or a named
//! synthetic density and write per-query scores, oracle scores, and
//! wall times.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::Deserialize;
use simpel::prior::read_prior_matrix;
use simpel::rng::stream;
use simpel::score::{estimate_score, EstimatorConfig, EstimatorVariant};

use crate::config::{apply_overrides, load_toml, section};
use crate::regression::TimingMode;
use crate::{Failure, RunArgs};

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum SourceSpec {
    Named(String),
    File { file: PathBuf },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default)]
struct ScoreBenchConfig {
    source: SourceSpec,
    /// Synthetic sample count.
    samples: usize,
    /// Synthetic dimension (the mixture source is 1-D).
    dimension: usize,
    grid_lower: f64,
    grid_upper: f64,
    grid_points: usize,
    estimators: Vec<EstimatorVariant>,
    /// Shared estimator knobs (`variant` is overridden per estimator).
    settings: EstimatorConfig,
    timing: TimingMode,
}

impl Default for ScoreBenchConfig {
    fn default() -> Self {
        Self {
            source: SourceSpec::Named("synthetic-normal".to_string()),
            samples: 2000,
            dimension: 1,
            grid_lower: -3.0,
            grid_upper: 3.0,
            grid_points: 61,
            estimators: vec![
                EstimatorVariant::Gaussian,
                EstimatorVariant::Kde,
                EstimatorVariant::Ssge,
                EstimatorVariant::NuMethod,
            ],
            settings: EstimatorConfig::default(),
            timing: TimingMode::Zero,
        }
    }
}

fn mixture_score(x: f64) -> f64 {
    let var = 0.25;
    let comp = |mu: f64| (-(x - mu) * (x - mu) / (2.0 * var)).exp();
    let (a, b) = (comp(-2.0), comp(2.0));
    (a * (-2.0 - x) + b * (2.0 - x)) / (var * (a + b))
}

struct Bench {
    samples: DMatrix<f64>,
    /// Oracle score at a query row, when the density is known.
    oracle: Option<Box<dyn Fn(&[f64], usize) -> f64>>,
}

fn build_source(cfg: &ScoreBenchConfig, seed: u64) -> Result<Bench, Failure> {
    match &cfg.source {
        SourceSpec::File { file } => {
            let matrix = read_prior_matrix(file).map_err(Failure::from)?;
            // Scores are estimated per output dimension; dimension 0 is
            // benchmarked.
            Ok(Bench {
                samples: matrix.per_dim[0].clone(),
                oracle: None,
            })
        }
        SourceSpec::Named(name) => match name.as_str() {
            "synthetic-normal" => {
                use rand_distr::{Distribution, StandardNormal};
                let mut rng = stream(seed, "score-bench/normal", 0);
                let samples =
                    DMatrix::from_fn(cfg.samples, cfg.dimension, |_, _| {
                        StandardNormal.sample(&mut rng)
                    });
                Ok(Bench {
                    samples,
                    oracle: Some(Box::new(|q, dim| -q[dim])),
                })
            }
            "synthetic-mixture" => {
                use rand::Rng;
                use rand_distr::{Distribution, StandardNormal};
                let mut rng = stream(seed, "score-bench/mixture", 0);
                let samples = DMatrix::from_fn(cfg.samples, 1, |_, _| {
                    let mu = if rng.gen_bool(0.5) { -2.0 } else { 2.0 };
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mu + 0.5 * z
                });
                Ok(Bench {
                    samples,
                    oracle: Some(Box::new(|q, _| mixture_score(q[0]))),
                })
            }
            other => Err(Failure::Config(format!(
                "unknown score-bench source `{other}` (synthetic-normal, synthetic-mixture, or {{ file = … }})"
            ))),
        },
    }
}

pub fn run(args: &RunArgs) -> Result<(), Failure> {
    let mut root = load_toml(&args.config)?;
    apply_overrides(&mut root, &args.set)?;
    let cfg: ScoreBenchConfig = section(&root, "score_bench")?;
    if cfg.grid_points < 1 {
        return Err(Failure::Config("grid_points must be >= 1".to_string()));
    }

    let bench = build_source(&cfg, args.seed)?;
    let k = bench.samples.ncols();

    // Queries: dimension 0 sweeps the grid, remaining dimensions sit at the
    // sample mean.
    let mean: Vec<f64> = (0..k).map(|c| bench.samples.column(c).mean()).collect();
    let grid: Vec<f64> = (0..cfg.grid_points)
        .map(|i| {
            cfg.grid_lower
                + (cfg.grid_upper - cfg.grid_lower) * i as f64
                    / (cfg.grid_points - 1).max(1) as f64
        })
        .collect();
    let query = DMatrix::from_fn(cfg.grid_points, k, |r, c| {
        if c == 0 {
            grid[r]
        } else {
            mean[c]
        }
    });

    std::fs::create_dir_all(&args.out)?;
    let out_path = args.out.join("score_bench.csv");
    let mut file = std::fs::File::create(&out_path)?;
    writeln!(file, "estimator,query_index,dim,x,score,oracle,wall_time_s")?;

    for variant in &cfg.estimators {
        let mut estimator_cfg = cfg.settings;
        estimator_cfg.variant = *variant;
        let started = Instant::now();
        let scores = estimate_score(&estimator_cfg, &bench.samples, &query)
            .map_err(Failure::from)?;
        let wall = match cfg.timing {
            TimingMode::Real => started.elapsed().as_secs_f64(),
            TimingMode::Zero => 0.0,
        };
        for r in 0..cfg.grid_points {
            let q_row: Vec<f64> = (0..k).map(|c| query[(r, c)]).collect();
            for dim in 0..k {
                let oracle = match &bench.oracle {
                    Some(f) => format!("{:.6e}", f(&q_row, dim)),
                    None => "nan".to_string(),
                };
                writeln!(
                    file,
                    "{},{},{},{:.6e},{:.6e},{},{:.3}",
                    variant,
                    r,
                    dim,
                    query[(r, 0)],
                    scores[(r, dim)],
                    oracle,
                    wall
                )?;
            }
        }
    }
    println!(
        "score-bench: {} estimators x {} queries -> {}",
        cfg.estimators.len(),
        cfg.grid_points,
        out_path.display()
    );
    Ok(())
}
