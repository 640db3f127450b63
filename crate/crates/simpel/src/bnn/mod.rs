//! Neural-network particle ensembles: the function-space SVGD update,
//! weight-space SVGD, MLE/MAP point estimates, and predictive moments.

mod checkpoint;
mod fit;
mod fsvgd;
mod mlp;
mod svgd;

pub use checkpoint::{load_ensemble, save_ensemble};
pub use fit::{map_fit, mle_fit, OptimizerConfig, OptimizerState};
pub use fsvgd::{
    fsvgd_step, fsvgd_train, likelihood_score, BandwidthRule, FsvgdConfig, IterationLog,
    StepStats,
};
pub use mlp::{init_params, mlp_forward, mlp_vjp, nn_jacobian};
pub use svgd::{svgd_step, svgd_train, SvgdConfig};

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prior::PriorError;
use crate::score::ScoreError;

#[derive(Debug, Error)]
pub enum BnnError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("shape mismatch: expected {expected}, got {got} ({context})")]
    ShapeMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },
    #[error("observation noise variance must be > 0")]
    InvalidNoise,
    #[error("training diverged (non-finite update) at iteration {iteration}")]
    TrainingDiverged { iteration: usize },
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Swish,
    /// Identity activation; only valid for the zero-hidden-layer diagnostic
    /// architecture where the network is an exact affine map.
    Linear,
}

/// Fully-connected architecture: input → hidden widths → output. The output
/// layer is affine (no activation).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl MlpArchitecture {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        hidden: Vec<usize>,
        activation: Activation,
    ) -> Result<Self, BnnError> {
        let arch = Self {
            input_dim,
            output_dim,
            hidden,
            activation,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Diagnostic mode: a single affine layer `W·x + b`, linear in the
    /// parameters. Used by conjugate-posterior oracles.
    pub fn linear(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            hidden: Vec::new(),
            activation: Activation::Linear,
        }
    }

    pub fn validate(&self) -> Result<(), BnnError> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(BnnError::InvalidArchitecture(
                "zero input or output dimension".to_string(),
            ));
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(BnnError::InvalidArchitecture(
                "hidden widths must be >= 1".to_string(),
            ));
        }
        if self.hidden.is_empty() && self.activation != Activation::Linear {
            return Err(BnnError::InvalidArchitecture(
                "at least one hidden layer (or the linear diagnostic mode)".to_string(),
            ));
        }
        Ok(())
    }

    /// Layer widths including input and output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.output_dim);
        w
    }

    /// Total flat parameter count.
    pub fn param_count(&self) -> usize {
        let w = self.widths();
        (1..w.len()).map(|l| w[l] * w[l - 1] + w[l]).sum()
    }
}

/// Inputs `X` (m × d_x) and targets `y` (m × d_y).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self, BnnError> {
        if x.nrows() != y.nrows() {
            return Err(BnnError::ShapeMismatch {
                expected: x.nrows(),
                got: y.nrows(),
                context: "dataset rows",
            });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(BnnError::InvalidArchitecture(
                "non-finite dataset values".to_string(),
            ));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }
}

/// Predictive moments at a batch of inputs. `variance` is the total
/// predictive variance: particle variance plus observation noise.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub mean: DMatrix<f64>,
    pub epistemic_variance: DMatrix<f64>,
    pub variance: DMatrix<f64>,
}

/// L flat parameter vectors sharing one architecture, with a per-output
/// observation noise variance σ².
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    pub architecture: MlpArchitecture,
    pub particles: Vec<DVector<f64>>,
    /// Observation noise variance per output dimension.
    pub noise_variance: Vec<f64>,
}

impl ParticleEnsemble {
    /// Fan-in-scaled random initialization with one distinct stream per
    /// particle, split from `rng`.
    pub fn init(
        architecture: MlpArchitecture,
        n_particles: usize,
        noise_variance: Vec<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, BnnError> {
        architecture.validate()?;
        let particles = (0..n_particles)
            .map(|_| init_params(&architecture, rng))
            .collect();
        let ensemble = Self {
            architecture,
            particles,
            noise_variance,
        };
        ensemble.validate()?;
        Ok(ensemble)
    }

    pub fn validate(&self) -> Result<(), BnnError> {
        self.architecture.validate()?;
        if self.particles.is_empty() {
            return Err(BnnError::InvalidArchitecture(
                "ensemble needs at least one particle".to_string(),
            ));
        }
        let p = self.architecture.param_count();
        for theta in &self.particles {
            if theta.len() != p {
                return Err(BnnError::ShapeMismatch {
                    expected: p,
                    got: theta.len(),
                    context: "particle length",
                });
            }
        }
        if self.noise_variance.len() != self.architecture.output_dim
            || !self.noise_variance.iter().all(|v| *v > 0.0)
        {
            return Err(BnnError::InvalidNoise);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Predictive mean and variance: the particle average, the unbiased
    /// particle variance (zero for L = 1), and their sum with σ².
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Prediction, BnnError> {
        let l = self.len();
        let d_y = self.architecture.output_dim;
        let outputs: Vec<DMatrix<f64>> = self
            .particles
            .iter()
            .map(|theta| mlp_forward(&self.architecture, theta, x))
            .collect::<Result<_, _>>()?;
        // Moments of the values shifted by the first particle's output:
        // identical particles give an exact zero variance.
        let shift = &outputs[0];
        let mut shifted_mean = DMatrix::zeros(x.nrows(), d_y);
        for out in &outputs {
            shifted_mean += out;
            shifted_mean -= shift;
        }
        shifted_mean /= l as f64;
        let mut m2 = DMatrix::zeros(x.nrows(), d_y);
        for out in &outputs {
            for r in 0..x.nrows() {
                for c in 0..d_y {
                    let d = (out[(r, c)] - shift[(r, c)]) - shifted_mean[(r, c)];
                    m2[(r, c)] += d * d;
                }
            }
        }
        let mut mean = shifted_mean;
        mean += shift;
        let epistemic_variance = if l > 1 {
            m2 / (l as f64 - 1.0)
        } else {
            DMatrix::zeros(x.nrows(), d_y)
        };
        let mut variance = epistemic_variance.clone();
        for r in 0..x.nrows() {
            for c in 0..d_y {
                variance[(r, c)] += self.noise_variance[c];
            }
        }
        Ok(Prediction {
            mean,
            epistemic_variance,
            variance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn param_count_matches_layout() {
        let arch = MlpArchitecture::new(3, 2, vec![8, 4], Activation::Tanh).unwrap();
        // (3*8+8) + (8*4+4) + (4*2+2) = 32 + 36 + 10
        assert_eq!(arch.param_count(), 78);
        assert_eq!(MlpArchitecture::linear(3, 2).param_count(), 8);
    }

    #[test]
    fn hidden_layer_required_outside_linear_mode() {
        assert!(MlpArchitecture::new(3, 2, vec![], Activation::Tanh).is_err());
        assert!(MlpArchitecture::new(3, 2, vec![0], Activation::Tanh).is_err());
        MlpArchitecture::linear(3, 2).validate().unwrap();
    }

    #[test]
    fn identical_particles_have_zero_epistemic_variance() {
        let arch = MlpArchitecture::new(2, 1, vec![4], Activation::Tanh).unwrap();
        let mut rng = stream(0, "bnn", 0);
        let theta = init_params(&arch, &mut rng);
        let ensemble = ParticleEnsemble {
            architecture: arch,
            particles: vec![theta.clone(), theta.clone(), theta],
            noise_variance: vec![0.01],
        };
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, -0.5, 0.2, 2.0, -1.0]);
        let p = ensemble.predict(&x).unwrap();
        for v in p.epistemic_variance.iter() {
            assert_eq!(*v, 0.0);
        }
        for v in p.variance.iter() {
            assert!((v - 0.01).abs() < 1e-15);
        }
    }

    #[test]
    fn two_particle_variance_uses_unbiased_divisor() {
        // Particles outputting 0 and 2: mean 1, unbiased variance 2.
        let arch = MlpArchitecture::linear(1, 1);
        // Linear layer params: [w, b]; w = 0 for both, b = 0 and 2.
        let ensemble = ParticleEnsemble {
            architecture: arch,
            particles: vec![
                DVector::from_vec(vec![0.0, 0.0]),
                DVector::from_vec(vec![0.0, 2.0]),
            ],
            noise_variance: vec![0.5],
        };
        let x = DMatrix::from_row_slice(1, 1, &[3.0]);
        let p = ensemble.predict(&x).unwrap();
        assert_eq!(p.mean[(0, 0)], 1.0);
        assert_eq!(p.epistemic_variance[(0, 0)], 2.0);
        assert_eq!(p.variance[(0, 0)], 2.5);
    }

    #[test]
    fn total_variance_is_at_least_noise() {
        let arch = MlpArchitecture::new(1, 1, vec![6], Activation::Swish).unwrap();
        let mut rng = stream(1, "bnn", 1);
        let ensemble = ParticleEnsemble::init(arch, 5, vec![0.04], &mut rng).unwrap();
        let x = DMatrix::from_fn(20, 1, |r, _| r as f64 / 5.0 - 2.0);
        let p = ensemble.predict(&x).unwrap();
        for v in p.variance.iter() {
            assert!(*v >= 0.04);
        }
    }
}
