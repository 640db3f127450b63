//! Function-space SVGD over particle ensembles.
//!
//! Each step: draw a fresh measurement set, join it with the (mini)batch
//! inputs, compute every particle's function values there, estimate the
//! prior score from combined-process samples, add the zero-padded Gaussian
//! likelihood score, kernel-average the posterior scores with a repulsion
//! term across particles, and project the function-space update into
//! parameter space through the network Jacobian.

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    mlp_forward, mlp_vjp, BnnError, Dataset, OptimizerConfig, OptimizerState, ParticleEnsemble,
};
use crate::kernels::median_heuristic;
use crate::prior::{sample_measurement_set, FunctionPrior, MeasurementDistribution};
use crate::score::{estimate_score, EstimatorConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthRule {
    /// Median pairwise distance between particle function-value vectors,
    /// recomputed every step.
    MedianHeuristic,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FsvgdConfig {
    /// Learning rate γ of the parameter update.
    pub learning_rate: f64,
    pub iterations: usize,
    /// Measurement distribution ζ; its `size` is the per-step measurement
    /// count k̂ appended to the data inputs.
    pub measurement: MeasurementDistribution,
    pub bandwidth: BandwidthRule,
    /// Prior-score estimator configuration.
    pub estimator: EstimatorConfig,
    /// Prior sample count N per iteration.
    pub prior_samples: usize,
    /// Rows of the dataset used per step; `None` uses the full dataset.
    /// The likelihood score is rescaled by m/b to keep the posterior
    /// balance.
    pub minibatch: Option<usize>,
    /// Momentum coefficient of the γ-step (0 = plain).
    pub momentum: f64,
    /// RMS-style adaptive scaling of the γ-step.
    pub rms: bool,
}

impl FsvgdConfig {
    pub fn new(measurement: MeasurementDistribution) -> Self {
        Self {
            learning_rate: 5e-3,
            iterations: 1000,
            measurement,
            bandwidth: BandwidthRule::MedianHeuristic,
            estimator: EstimatorConfig::default(),
            prior_samples: 64,
            minibatch: None,
            momentum: 0.9,
            rms: true,
        }
    }

    pub fn validate(&self) -> Result<(), BnnError> {
        if !(self.learning_rate > 0.0) && self.learning_rate != 0.0 {
            return Err(BnnError::InvalidArchitecture(format!(
                "learning rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.iterations < 1 {
            return Err(BnnError::InvalidArchitecture(
                "iterations must be >= 1".to_string(),
            ));
        }
        if self.prior_samples < 2 {
            return Err(BnnError::InvalidArchitecture(
                "prior_samples must be >= 2".to_string(),
            ));
        }
        self.measurement.validate()?;
        self.estimator.validate()?;
        Ok(())
    }

    fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            rms: self.rms,
            epsilon: 1e-8,
        }
    }
}

/// Gradient of the Gaussian data log-likelihood w.r.t. the function values,
/// zero-padded over measurement-only rows: `(y − h)/σ²` on the first
/// `y.nrows()` rows, exact zeros elsewhere.
pub fn likelihood_score(
    h_data: &DMatrix<f64>,
    y: &DMatrix<f64>,
    noise_variance: &[f64],
    total_rows: usize,
) -> Result<DMatrix<f64>, BnnError> {
    if h_data.nrows() != y.nrows() || h_data.ncols() != y.ncols() {
        return Err(BnnError::ShapeMismatch {
            expected: y.nrows() * y.ncols(),
            got: h_data.nrows() * h_data.ncols(),
            context: "likelihood function values",
        });
    }
    if noise_variance.len() != y.ncols() || !noise_variance.iter().all(|v| *v > 0.0) {
        return Err(BnnError::InvalidNoise);
    }
    let mut out = DMatrix::zeros(total_rows, y.ncols());
    for r in 0..y.nrows() {
        for c in 0..y.ncols() {
            out[(r, c)] = (y[(r, c)] - h_data[(r, c)]) / noise_variance[c];
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct StepStats {
    /// Mean Gaussian NLL over particles and batch rows (nats, averaged per
    /// output dimension).
    pub train_nll: f64,
    /// Mean parameter-update norm across particles (after the γ-step).
    pub mean_update_norm: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct IterationLog {
    pub iteration: usize,
    pub train_nll: f64,
    pub mean_update_norm: f64,
}

/// One FSVGD update of every particle in place.
pub fn fsvgd_step(
    ensemble: &mut ParticleEnsemble,
    dataset: &Dataset,
    prior: &dyn FunctionPrior,
    config: &FsvgdConfig,
    opt_states: &mut [OptimizerState],
    rng: &mut ChaCha8Rng,
    iteration: usize,
) -> Result<StepStats, BnnError> {
    ensemble.validate()?;
    let l = ensemble.len();
    let d_y = ensemble.architecture.output_dim;
    let m = dataset.len();

    // Minibatch rows and likelihood rescale.
    let (batch_idx, lik_scale): (Vec<usize>, f64) = match config.minibatch {
        Some(b) if m > b => {
            let idx = rand::seq::index::sample(rng, m, b).into_vec();
            (idx, m as f64 / b as f64)
        }
        _ => ((0..m).collect(), 1.0),
    };
    let b = batch_idx.len();

    // X = [X_batch; X_hat]
    let x_hat = sample_measurement_set(&config.measurement, rng);
    let n = b + x_hat.nrows();
    let d_x = ensemble.architecture.input_dim;
    let x = DMatrix::from_fn(n, d_x, |r, c| {
        if r < b {
            dataset.x[(batch_idx[r], c)]
        } else {
            x_hat[(r - b, c)]
        }
    });
    let y_batch = DMatrix::from_fn(b, d_y, |r, c| dataset.y[(batch_idx[r], c)]);

    // Function values per particle.
    let function_values: Vec<DMatrix<f64>> = ensemble
        .particles
        .par_iter()
        .map(|theta| mlp_forward(&ensemble.architecture, theta, &x))
        .collect::<Result<_, _>>()?;

    // Prior score per output dimension, queried at every particle's values.
    let prior_matrix = prior.sample_function_values(&x, config.prior_samples, rng)?;
    let mut prior_scores: Vec<DMatrix<f64>> = Vec::with_capacity(d_y);
    for dim in 0..d_y {
        let query = DMatrix::from_fn(l, n, |i, r| function_values[i][(r, dim)]);
        prior_scores.push(estimate_score(
            &config.estimator,
            &prior_matrix.per_dim[dim],
            &query,
        )?);
    }

    // Posterior score ψ_i = likelihood score + prior score, per particle.
    let mut psi: Vec<DMatrix<f64>> = Vec::with_capacity(l);
    let mut train_nll = 0.0;
    for (i, h) in function_values.iter().enumerate() {
        let h_batch = h.rows(0, b).into_owned();
        let mut score = likelihood_score(&h_batch, &y_batch, &ensemble.noise_variance, n)?;
        if lik_scale != 1.0 {
            score *= lik_scale;
        }
        for r in 0..n {
            for c in 0..d_y {
                score[(r, c)] += prior_scores[c][(i, r)];
            }
        }
        psi.push(score);
        for r in 0..b {
            for c in 0..d_y {
                let d = y_batch[(r, c)] - h_batch[(r, c)];
                train_nll += d * d / (2.0 * ensemble.noise_variance[c])
                    + 0.5 * (2.0 * std::f64::consts::PI * ensemble.noise_variance[c]).ln();
            }
        }
    }
    train_nll /= (l * b.max(1) * d_y) as f64;

    // Kernel over flattened function values.
    let flat = DMatrix::from_fn(l, n * d_y, |i, j| {
        let (r, c) = (j % n, j / n);
        function_values[i][(r, c)]
    });
    let bw = match config.bandwidth {
        BandwidthRule::MedianHeuristic => median_heuristic(&flat),
        BandwidthRule::Fixed(v) => v,
    };
    let bw_sq = bw * bw;
    let mut kernel = DMatrix::zeros(l, l);
    for a in 0..l {
        for bb in 0..l {
            let mut sq = 0.0;
            for j in 0..n * d_y {
                let d = flat[(a, j)] - flat[(bb, j)];
                sq += d * d;
            }
            kernel[(a, bb)] = (-sq / (2.0 * bw_sq)).exp();
        }
    }

    // SVGD velocity in function space, then the Jacobian projection.
    let velocities: Vec<DMatrix<f64>> = (0..l)
        .map(|i| {
            let mut v = DMatrix::zeros(n, d_y);
            for ll in 0..l {
                let k_li = kernel[(ll, i)];
                // ∇_{h_l} K_li = -(h_l - h_i)/bw² · K_li
                for r in 0..n {
                    for c in 0..d_y {
                        let repulsion = -(function_values[ll][(r, c)]
                            - function_values[i][(r, c)])
                            / bw_sq
                            * k_li;
                        v[(r, c)] += k_li * psi[ll][(r, c)] + repulsion;
                    }
                }
            }
            v / l as f64
        })
        .collect();

    let opt_cfg = config.optimizer();
    let arch = ensemble.architecture.clone();
    let updates: Vec<nalgebra::DVector<f64>> = ensemble
        .particles
        .par_iter()
        .zip(velocities.par_iter())
        .map(|(theta, v)| mlp_vjp(&arch, theta, &x, v).map(|(_, grad)| grad))
        .collect::<Result<_, _>>()?;

    let mut mean_update_norm = 0.0;
    for ((theta, grad), opt) in ensemble
        .particles
        .iter_mut()
        .zip(updates.iter())
        .zip(opt_states.iter_mut())
    {
        let delta = opt.ascent_step(&opt_cfg, grad);
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(BnnError::TrainingDiverged { iteration });
        }
        mean_update_norm += delta.norm();
        *theta += delta;
    }
    mean_update_norm /= l as f64;

    Ok(StepStats {
        train_nll,
        mean_update_norm,
    })
}

/// Initialize an ensemble and run `config.iterations` FSVGD steps.
pub fn fsvgd_train(
    arch: super::MlpArchitecture,
    n_particles: usize,
    noise_variance: Vec<f64>,
    dataset: &Dataset,
    prior: &dyn FunctionPrior,
    config: &FsvgdConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(ParticleEnsemble, Vec<IterationLog>), BnnError> {
    config.validate()?;
    let mut ensemble = ParticleEnsemble::init(arch, n_particles, noise_variance, rng)?;
    let mut opt_states = vec![OptimizerState::new(ensemble.particles[0].len()); n_particles];
    let mut log = Vec::with_capacity(config.iterations);
    for iteration in 0..config.iterations {
        let stats = fsvgd_step(
            &mut ensemble,
            dataset,
            prior,
            config,
            &mut opt_states,
            rng,
            iteration,
        )?;
        log.push(IterationLog {
            iteration,
            train_nll: stats.train_nll,
            mean_update_norm: stats.mean_update_norm,
        });
    }
    Ok((ensemble, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnn::{nn_jacobian, Activation, MlpArchitecture};
    use crate::prior::{GapKernelConfig, GapSpec, PriorError, PriorSampleMatrix};
    use crate::rng::stream;
    use crate::score::EstimatorVariant;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    struct GpPrior(GapKernelConfig, usize);

    impl FunctionPrior for GpPrior {
        fn output_dim(&self) -> usize {
            self.1
        }
        fn sample_function_values(
            &self,
            x: &DMatrix<f64>,
            n: usize,
            rng: &mut ChaCha8Rng,
        ) -> Result<PriorSampleMatrix, PriorError> {
            crate::prior::sample_prior_matrix(
                x,
                None,
                Some(&GapSpec::Shared(self.0)),
                self.1,
                n,
                rng,
            )
        }
    }

    fn toy_dataset() -> Dataset {
        let x = DMatrix::from_row_slice(3, 1, &[-1.0, 0.0, 1.0]);
        let y = DMatrix::from_row_slice(3, 1, &[-0.8, 0.1, 1.2]);
        Dataset::new(x, y).unwrap()
    }

    fn measurement_1d(k: usize) -> MeasurementDistribution {
        MeasurementDistribution::new(vec![-2.0], vec![2.0], k).unwrap()
    }

    #[test]
    fn likelihood_score_is_zero_at_perfect_fit() {
        let y = DMatrix::from_row_slice(2, 1, &[0.5, -0.5]);
        let s = likelihood_score(&y.clone(), &y, &[0.1], 4).unwrap();
        assert!(s.iter().all(|v| *v == 0.0));
        assert_eq!(s.nrows(), 4);
    }

    #[test]
    fn likelihood_score_scalar_case() {
        // h = 0, y = 1, σ² = 0.5 -> gradient 2.
        let h = DMatrix::from_row_slice(1, 1, &[0.0]);
        let y = DMatrix::from_row_slice(1, 1, &[1.0]);
        let s = likelihood_score(&h, &y, &[0.5], 3).unwrap();
        assert_eq!(s[(0, 0)], 2.0);
        assert_eq!(s[(1, 0)], 0.0);
        assert_eq!(s[(2, 0)], 0.0);
    }

    #[test]
    fn likelihood_score_matches_finite_differences() {
        // Central differences of the explicit Gaussian log-likelihood.
        let h = DMatrix::from_row_slice(2, 2, &[0.3, -0.2, 1.0, 0.4]);
        let y = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.9, -0.4]);
        let nv = [0.3, 0.7];
        let ll = |h: &DMatrix<f64>| -> f64 {
            let mut acc = 0.0;
            for r in 0..2 {
                for c in 0..2 {
                    let d = y[(r, c)] - h[(r, c)];
                    acc -= d * d / (2.0 * nv[c])
                        + 0.5 * (2.0 * std::f64::consts::PI * nv[c]).ln();
                }
            }
            acc
        };
        let s = likelihood_score(&h, &y, &nv, 2).unwrap();
        let eps = 1e-6;
        for r in 0..2 {
            for c in 0..2 {
                let mut hp = h.clone();
                hp[(r, c)] += eps;
                let mut hm = h.clone();
                hm[(r, c)] -= eps;
                let fd = (ll(&hp) - ll(&hm)) / (2.0 * eps);
                assert!((fd - s[(r, c)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_learning_rate_leaves_ensemble_unchanged() {
        let arch = MlpArchitecture::new(1, 1, vec![8], Activation::Tanh).unwrap();
        let mut rng = stream(0, "fsvgd", 0);
        let mut ensemble = ParticleEnsemble::init(arch, 3, vec![0.01], &mut rng).unwrap();
        let before = ensemble.clone();
        let mut cfg = FsvgdConfig::new(measurement_1d(4));
        cfg.learning_rate = 0.0;
        cfg.momentum = 0.0;
        cfg.rms = false;
        cfg.prior_samples = 16;
        let prior = GpPrior(GapKernelConfig::new(1.0, 1.0), 1);
        let mut opt = vec![OptimizerState::new(ensemble.particles[0].len()); 3];
        fsvgd_step(
            &mut ensemble,
            &toy_dataset(),
            &prior,
            &cfg,
            &mut opt,
            &mut rng,
            0,
        )
        .unwrap();
        assert_eq!(ensemble, before);
    }

    #[test]
    fn single_particle_reduces_to_functional_map_ascent() {
        // With L = 1 the repulsion vanishes and K = [1]; the update must
        // equal γ·Jᵀ(likelihood + prior score) computed independently
        // through the full Jacobian, to 1e-10.
        let arch = MlpArchitecture::new(1, 1, vec![6], Activation::Tanh).unwrap();
        let mut init_rng = stream(1, "fsvgd", 1);
        let mut ensemble = ParticleEnsemble::init(arch.clone(), 1, vec![0.05], &mut init_rng)
            .unwrap();
        let theta0 = ensemble.particles[0].clone();

        let gamma = 1e-3;
        let mut cfg = FsvgdConfig::new(measurement_1d(5));
        cfg.learning_rate = gamma;
        cfg.momentum = 0.0;
        cfg.rms = false;
        cfg.prior_samples = 32;
        cfg.estimator = EstimatorConfig::new(EstimatorVariant::Gaussian);
        let prior = GpPrior(GapKernelConfig::new(0.7, 1.0), 1);
        let data = toy_dataset();

        // Replay the step's RNG consumption to reconstruct X and the prior
        // samples: the step draws the measurement set first, then the prior.
        let mut replay = stream(2, "fsvgd", 2);
        let x_hat = sample_measurement_set(&cfg.measurement, &mut replay);
        let n = data.len() + x_hat.nrows();
        let x = DMatrix::from_fn(n, 1, |r, _| {
            if r < data.len() {
                data.x[(r, 0)]
            } else {
                x_hat[(r - data.len(), 0)]
            }
        });
        let prior_matrix = prior.sample_function_values(&x, 32, &mut replay).unwrap();
        let h = mlp_forward(&arch, &theta0, &x).unwrap();
        let query = DMatrix::from_fn(1, n, |_, r| h[(r, 0)]);
        let prior_score =
            estimate_score(&cfg.estimator, &prior_matrix.per_dim[0], &query).unwrap();
        let h_batch = h.rows(0, data.len()).into_owned();
        let mut psi = likelihood_score(&h_batch, &data.y, &[0.05], n).unwrap();
        for r in 0..n {
            psi[(r, 0)] += prior_score[(0, r)];
        }
        let jac = nn_jacobian(&arch, &theta0, &x).unwrap();
        let mut expect = theta0.clone();
        for p in 0..arch.param_count() {
            let mut acc = 0.0;
            for r in 0..n {
                acc += jac[(r, p)] * psi[(r, 0)];
            }
            expect[p] += gamma * acc;
        }

        let mut opt = vec![OptimizerState::new(theta0.len())];
        let mut step_rng = stream(2, "fsvgd", 2);
        fsvgd_step(
            &mut ensemble,
            &data,
            &prior,
            &cfg,
            &mut opt,
            &mut step_rng,
            0,
        )
        .unwrap();
        for p in 0..arch.param_count() {
            assert_relative_eq!(
                ensemble.particles[0][p],
                expect[p],
                epsilon = 1e-10,
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn update_is_equivariant_under_particle_permutation() {
        let arch = MlpArchitecture::new(1, 1, vec![5], Activation::Tanh).unwrap();
        let mut rng = stream(3, "fsvgd", 3);
        let base = ParticleEnsemble::init(arch.clone(), 3, vec![0.02], &mut rng).unwrap();

        let mut cfg = FsvgdConfig::new(measurement_1d(4));
        cfg.momentum = 0.0;
        cfg.rms = false;
        cfg.prior_samples = 16;
        let prior = GpPrior(GapKernelConfig::new(0.5, 1.0), 1);
        let data = toy_dataset();

        let run = |order: [usize; 3]| -> Vec<DVector<f64>> {
            let mut e = base.clone();
            e.particles = order.iter().map(|&i| base.particles[i].clone()).collect();
            let mut opt = vec![OptimizerState::new(e.particles[0].len()); 3];
            let mut r = stream(4, "fsvgd", 4);
            fsvgd_step(&mut e, &data, &prior, &cfg, &mut opt, &mut r, 0).unwrap();
            e.particles
        };
        let identity = run([0, 1, 2]);
        let permuted = run([2, 0, 1]);
        for (a, b) in [(0usize, 1usize), (1, 2), (2, 0)] {
            assert!(
                (&identity[a] - &permuted[b]).norm() < 1e-12,
                "particle {a} vs permuted {b}"
            );
        }
    }

    #[test]
    fn empty_dataset_trains_on_prior_alone() {
        let arch = MlpArchitecture::new(1, 1, vec![6], Activation::Tanh).unwrap();
        let data = Dataset::new(DMatrix::zeros(0, 1), DMatrix::zeros(0, 1)).unwrap();
        let mut cfg = FsvgdConfig::new(measurement_1d(8));
        cfg.iterations = 5;
        cfg.prior_samples = 16;
        let prior = GpPrior(GapKernelConfig::new(1.0, 1.0), 1);
        let mut rng = stream(5, "fsvgd", 5);
        let (ensemble, log) =
            fsvgd_train(arch, 2, vec![0.01], &data, &prior, &cfg, &mut rng).unwrap();
        assert_eq!(log.len(), 5);
        ensemble.validate().unwrap();
    }
}
