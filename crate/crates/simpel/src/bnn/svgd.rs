//! Classic weight-space SVGD with a Gaussian prior on the parameters.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    mlp_forward, mlp_vjp, BandwidthRule, BnnError, Dataset, OptimizerConfig, OptimizerState,
    ParticleEnsemble,
};
use crate::kernels::median_heuristic;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvgdConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    /// Weight prior scale λ: p(θ) = N(0, λ²I).
    pub weight_prior_std: f64,
    pub bandwidth: BandwidthRule,
    pub minibatch: Option<usize>,
    pub momentum: f64,
    pub rms: bool,
}

impl Default for SvgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-3,
            iterations: 1000,
            weight_prior_std: 1.0,
            bandwidth: BandwidthRule::MedianHeuristic,
            minibatch: None,
            momentum: 0.9,
            rms: true,
        }
    }
}

impl SvgdConfig {
    fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            rms: self.rms,
            epsilon: 1e-8,
        }
    }
}

/// One weight-space SVGD update of every particle in place: kernelized
/// posterior-score average plus repulsion, kernel over the θ vectors.
pub fn svgd_step(
    ensemble: &mut ParticleEnsemble,
    dataset: &Dataset,
    config: &SvgdConfig,
    opt_states: &mut [OptimizerState],
    rng: &mut ChaCha8Rng,
    iteration: usize,
) -> Result<super::StepStats, BnnError> {
    ensemble.validate()?;
    let l = ensemble.len();
    let m = dataset.len();
    let d_y = ensemble.architecture.output_dim;

    let (batch_idx, lik_scale): (Vec<usize>, f64) = match config.minibatch {
        Some(b) if m > b => {
            let idx = rand::seq::index::sample(rng, m, b).into_vec();
            (idx, m as f64 / b as f64)
        }
        _ => ((0..m).collect(), 1.0),
    };
    let b = batch_idx.len();
    let d_x = ensemble.architecture.input_dim;
    let x = DMatrix::from_fn(b, d_x, |r, c| dataset.x[(batch_idx[r], c)]);
    let y = DMatrix::from_fn(b, d_y, |r, c| dataset.y[(batch_idx[r], c)]);

    // Posterior score in weight space per particle:
    // Jᵀ(y − h)/σ²·scale − θ/λ².
    let arch = ensemble.architecture.clone();
    let noise = ensemble.noise_variance.clone();
    let inv_lambda_sq = 1.0 / (config.weight_prior_std * config.weight_prior_std);
    let results: Vec<(DVector<f64>, f64)> = ensemble
        .particles
        .par_iter()
        .map(|theta| -> Result<(DVector<f64>, f64), BnnError> {
            let (mut grad, nll) = if b > 0 {
                let h = mlp_forward(&arch, theta, &x)?;
                let seed = DMatrix::from_fn(b, d_y, |r, c| {
                    lik_scale * (y[(r, c)] - h[(r, c)]) / noise[c]
                });
                let (_, grad) = mlp_vjp(&arch, theta, &x, &seed)?;
                let mut nll = 0.0;
                for r in 0..b {
                    for c in 0..d_y {
                        let d = y[(r, c)] - h[(r, c)];
                        nll += d * d / (2.0 * noise[c])
                            + 0.5 * (2.0 * std::f64::consts::PI * noise[c]).ln();
                    }
                }
                (grad, nll / (b * d_y) as f64)
            } else {
                (DVector::zeros(theta.len()), 0.0)
            };
            grad -= theta * inv_lambda_sq;
            Ok((grad, nll))
        })
        .collect::<Result<_, _>>()?;
    let scores: Vec<&DVector<f64>> = results.iter().map(|(g, _)| g).collect();
    let train_nll = results.iter().map(|(_, nll)| nll).sum::<f64>() / l as f64;

    // Kernel over parameter vectors.
    let theta_rows = DMatrix::from_fn(l, ensemble.particles[0].len(), |i, j| {
        ensemble.particles[i][j]
    });
    let bw = match config.bandwidth {
        BandwidthRule::MedianHeuristic => median_heuristic(&theta_rows),
        BandwidthRule::Fixed(v) => v,
    };
    let bw_sq = bw * bw;
    let mut kernel = DMatrix::zeros(l, l);
    for a in 0..l {
        for bb in 0..l {
            let mut sq = 0.0;
            for j in 0..ensemble.particles[0].len() {
                let d = ensemble.particles[a][j] - ensemble.particles[bb][j];
                sq += d * d;
            }
            kernel[(a, bb)] = (-sq / (2.0 * bw_sq)).exp();
        }
    }

    let opt_cfg = config.optimizer();
    let mut mean_update_norm = 0.0;
    let mut deltas = Vec::with_capacity(l);
    for i in 0..l {
        let mut v = DVector::zeros(ensemble.particles[0].len());
        for ll in 0..l {
            let k_li = kernel[(ll, i)];
            v += scores[ll] * k_li;
            // ∇_{θ_l} K_li = -(θ_l - θ_i)/bw² · K_li
            v -= (&ensemble.particles[ll] - &ensemble.particles[i]) * (k_li / bw_sq);
        }
        v /= l as f64;
        deltas.push(v);
    }
    for ((theta, v), opt) in ensemble
        .particles
        .iter_mut()
        .zip(deltas.iter())
        .zip(opt_states.iter_mut())
    {
        let delta = opt.ascent_step(&opt_cfg, v);
        if delta.iter().any(|x| !x.is_finite()) {
            return Err(BnnError::TrainingDiverged { iteration });
        }
        mean_update_norm += delta.norm();
        *theta += delta;
    }
    mean_update_norm /= l as f64;

    Ok(super::StepStats {
        train_nll,
        mean_update_norm,
    })
}

/// Initialize an ensemble and run `config.iterations` SVGD steps.
pub fn svgd_train(
    arch: super::MlpArchitecture,
    n_particles: usize,
    noise_variance: Vec<f64>,
    dataset: &Dataset,
    config: &SvgdConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(ParticleEnsemble, Vec<super::IterationLog>), BnnError> {
    let mut ensemble = ParticleEnsemble::init(arch, n_particles, noise_variance, rng)?;
    let mut opt_states = vec![OptimizerState::new(ensemble.particles[0].len()); n_particles];
    let mut log = Vec::with_capacity(config.iterations);
    for iteration in 0..config.iterations {
        let stats = svgd_step(&mut ensemble, dataset, config, &mut opt_states, rng, iteration)?;
        log.push(super::IterationLog {
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
    use crate::bnn::{map_fit, Activation, MlpArchitecture, OptimizerConfig};
    use crate::rng::stream;
    use approx::assert_relative_eq;

    fn toy_dataset() -> Dataset {
        let x = DMatrix::from_row_slice(4, 1, &[-1.0, -0.2, 0.4, 1.0]);
        let y = DMatrix::from_row_slice(4, 1, &[-0.9, -0.1, 0.5, 1.1]);
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn single_particle_is_map_gradient_ascent() {
        // L = 1: kernel 1, repulsion 0; one step must equal one plain MAP
        // ascent step γ·[Jᵀ(y−h)/σ² − θ/λ²] to 1e-10.
        let arch = MlpArchitecture::new(1, 1, vec![5], Activation::Tanh).unwrap();
        let mut rng = stream(0, "svgd", 0);
        let mut ensemble = ParticleEnsemble::init(arch.clone(), 1, vec![0.04], &mut rng).unwrap();
        let theta0 = ensemble.particles[0].clone();
        let data = toy_dataset();
        let lambda = 0.8;
        let gamma = 1e-3;

        let h = mlp_forward(&arch, &theta0, &data.x).unwrap();
        let seed = DMatrix::from_fn(4, 1, |r, c| (data.y[(r, c)] - h[(r, c)]) / 0.04);
        let (_, mut grad) = crate::bnn::mlp_vjp(&arch, &theta0, &data.x, &seed).unwrap();
        grad -= &theta0 / (lambda * lambda);
        let expect = &theta0 + grad * gamma;

        let cfg = SvgdConfig {
            learning_rate: gamma,
            weight_prior_std: lambda,
            momentum: 0.0,
            rms: false,
            ..SvgdConfig::default()
        };
        let mut opt = vec![OptimizerState::new(theta0.len())];
        svgd_step(&mut ensemble, &data, &cfg, &mut opt, &mut rng, 0).unwrap();
        for p in 0..theta0.len() {
            assert_relative_eq!(ensemble.particles[0][p], expect[p], epsilon = 1e-10);
        }
    }

    #[test]
    fn prior_only_dynamics_shrink_the_particles() {
        // With no data the particles drift toward the weight-prior mode:
        // ‖θ‖ decreases monotonically under a small plain step.
        let arch = MlpArchitecture::new(1, 1, vec![4], Activation::Tanh).unwrap();
        let mut rng = stream(1, "svgd", 1);
        let mut ensemble = ParticleEnsemble::init(arch, 2, vec![0.01], &mut rng).unwrap();
        let data = Dataset::new(DMatrix::zeros(0, 1), DMatrix::zeros(0, 1)).unwrap();
        let cfg = SvgdConfig {
            learning_rate: 1e-3,
            weight_prior_std: 0.5,
            momentum: 0.0,
            rms: false,
            // Wide fixed bandwidth keeps the repulsion term negligible
            // relative to the prior pull for this monotonicity check.
            bandwidth: BandwidthRule::Fixed(50.0),
            ..SvgdConfig::default()
        };
        let mut opt = vec![OptimizerState::new(ensemble.particles[0].len()); 2];
        let mut prev: Vec<f64> = ensemble.particles.iter().map(|t| t.norm()).collect();
        for it in 0..50 {
            svgd_step(&mut ensemble, &data, &cfg, &mut opt, &mut rng, it).unwrap();
            let now: Vec<f64> = ensemble.particles.iter().map(|t| t.norm()).collect();
            for (a, b) in prev.iter().zip(&now) {
                assert!(b < a, "norm should shrink: {a} -> {b}");
            }
            prev = now;
        }
    }

    #[test]
    fn conjugate_scalar_posterior_moments() {
        // Identity "network" (linear arch, weight-only via x ≡ 1 acting on
        // the bias…): simplest conjugate check uses h(x) = w·x on x = 1, so
        // the posterior over (w, b) with y ~ N(w + b, σ²) is Gaussian. To
        // keep it scalar, pin the model to one parameter by using input 1
        // and a weight-only read-out: h = w·1 + b has two symmetric
        // parameters, so instead fit y ~ N(h(1), σ²) where the analytic
        // posterior of f = w + b (the function value) is conjugate:
        //   prior f ~ N(0, 2λ²), likelihood N(y | f, σ²/m_eff).
        // Particle function values at x = 1 must match that posterior.
        let arch = MlpArchitecture::linear(1, 1);
        let sigma_sq = 0.09;
        let lambda = 0.7;
        let ys = [0.9, 1.1, 1.0, 0.95, 1.05];
        let m = ys.len();
        let x = DMatrix::from_fn(m, 1, |_, _| 1.0);
        let y = DMatrix::from_fn(m, 1, |r, _| ys[r]);
        let data = Dataset::new(x.clone(), y).unwrap();

        // Analytic posterior of f = w + b at x = 1:
        let prior_var = 2.0 * lambda * lambda;
        let post_var = 1.0 / (1.0 / prior_var + m as f64 / sigma_sq);
        let post_mean = post_var * ys.iter().sum::<f64>() / sigma_sq;

        let cfg = SvgdConfig {
            learning_rate: 2e-3,
            iterations: 4000,
            weight_prior_std: lambda,
            momentum: 0.0,
            rms: false,
            ..SvgdConfig::default()
        };
        let mut rng = stream(2, "svgd", 2);
        let (ensemble, _) = svgd_train(arch.clone(), 100, vec![sigma_sq], &data, &cfg, &mut rng)
            .unwrap();
        let probe = DMatrix::from_row_slice(1, 1, &[1.0]);
        let values: Vec<f64> = ensemble
            .particles
            .iter()
            .map(|t| mlp_forward(&arch, t, &probe).unwrap()[(0, 0)])
            .collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (values.len() - 1) as f64;
        assert!(
            (mean - post_mean).abs() / post_mean.abs() < 0.05,
            "mean {mean} vs analytic {post_mean}"
        );
        assert!(
            (var - post_var).abs() / post_var < 0.05 + 0.15,
            "var {var} vs analytic {post_var}"
        );
    }

    #[test]
    fn map_fit_reference_agrees_on_linear_toy() {
        // svgd with L = 1 after many steps lands near the MAP fit.
        let arch = MlpArchitecture::linear(1, 1);
        let data = toy_dataset();
        let lambda = 1.0;
        let mut rng = stream(3, "svgd", 3);
        let map_theta = map_fit(
            &data,
            &arch,
            &[0.04],
            lambda,
            &OptimizerConfig::adaptive(0.02),
            4000,
            &mut stream(4, "svgd", 4),
        )
        .unwrap();
        let cfg = SvgdConfig {
            learning_rate: 0.02,
            iterations: 4000,
            weight_prior_std: lambda,
            momentum: 0.9,
            rms: true,
            ..SvgdConfig::default()
        };
        let (ensemble, _) = svgd_train(arch, 1, vec![0.04], &data, &cfg, &mut rng).unwrap();
        assert!(
            (&ensemble.particles[0] - &map_theta).norm() < 0.05,
            "svgd L=1 {} vs map {}",
            ensemble.particles[0],
            map_theta
        );
    }
}
