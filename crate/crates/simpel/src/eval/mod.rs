//! Dataset generation, NLL/RMSE metrics, and learning-curve experiments.

mod curve;

pub use curve::{
    median_nll, run_learning_curve, summarize, CurveOptions, MetricRow, RunStatus, Summary,
    CSV_HEADER,
};

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{greybox_fit, sysid_fit, BaselineError, GreyBoxModel, SysIdModel};
use crate::bnn::{
    fsvgd_train, svgd_train, Activation, BandwidthRule, BnnError, Dataset, FsvgdConfig,
    MlpArchitecture, ParticleEnsemble, Prediction, SvgdConfig,
};
use crate::prior::{
    sample_measurement_set, CombinedPrior, GapKernelConfig, GapSpec, MeasurementDistribution,
    PriorError,
};
use crate::rng::{derive_seed, stream};
use crate::score::EstimatorConfig;
use crate::simulators::{
    default_input_box, default_param_prior, true_params, Fidelity, ParamPrior, ParamSpec,
    SimulatorError, SimulatorModel, SystemKind,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("nonpositive predictive variance in nll")]
    NonPositiveVariance,
    #[error("shape mismatch in metric inputs")]
    MetricShape,
    #[error(transparent)]
    Bnn(#[from] BnnError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Simulator(#[from] SimulatorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("output file: {0}")]
    BadOutput(String),
}

/// Mean over test points of `-ln N(y | mean, var)`, averaged per output
/// dimension (nats).
pub fn nll(prediction: &Prediction, targets: &DMatrix<f64>) -> Result<f64, EvalError> {
    if prediction.mean.nrows() != targets.nrows() || prediction.mean.ncols() != targets.ncols() {
        return Err(EvalError::MetricShape);
    }
    let mut acc = 0.0;
    for r in 0..targets.nrows() {
        for c in 0..targets.ncols() {
            let v = prediction.variance[(r, c)];
            if !(v > 0.0) {
                return Err(EvalError::NonPositiveVariance);
            }
            let d = targets[(r, c)] - prediction.mean[(r, c)];
            acc += 0.5 * (2.0 * std::f64::consts::PI * v).ln() + d * d / (2.0 * v);
        }
    }
    Ok(acc / (targets.nrows() * targets.ncols()) as f64)
}

/// Root mean squared error over all test entries.
pub fn rmse(mean: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<f64, EvalError> {
    if mean.nrows() != targets.nrows() || mean.ncols() != targets.ncols() {
        return Err(EvalError::MetricShape);
    }
    Ok(((mean - targets).norm_squared() / (targets.nrows() * targets.ncols()) as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Simpel,
    SimpelOnlySim,
    Fsvgd,
    Svgd,
    Greybox,
    Sysid,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Simpel,
        Method::SimpelOnlySim,
        Method::Fsvgd,
        Method::Svgd,
        Method::Greybox,
        Method::Sysid,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::Simpel => "simpel",
            Method::SimpelOnlySim => "simpel-only-sim",
            Method::Fsvgd => "fsvgd",
            Method::Svgd => "svgd",
            Method::Greybox => "greybox",
            Method::Sysid => "sysid",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.id() == s)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// A benchmark task: a low-fidelity simulator with a parameter prior, the
/// high-fidelity ground truth, and the input domain.
#[derive(Clone, Debug)]
pub struct Task {
    pub system: SystemKind,
    pub low_fidelity: SimulatorModel,
    pub high_fidelity: SimulatorModel,
    pub param_prior: ParamPrior,
    pub input_box: (Vec<f64>, Vec<f64>),
    /// Observation noise standard deviation per output dimension.
    pub noise_sigma: f64,
}

impl Task {
    pub fn new(system: SystemKind) -> Self {
        let prior = default_param_prior(system);
        let dt = 1.0 / 30.0;
        let low = SimulatorModel::new(system, Fidelity::Low, dt, ParamSpec::Prior(prior.clone()));
        let high = SimulatorModel::new(
            system,
            Fidelity::High,
            dt,
            ParamSpec::Fixed(true_params(system)),
        );
        let noise_sigma = match system {
            SystemKind::Sinusoid => 0.1,
            _ => 0.01,
        };
        Self {
            system,
            low_fidelity: low,
            high_fidelity: high,
            param_prior: prior,
            input_box: default_input_box(system),
            noise_sigma,
        }
    }

    pub fn id(&self) -> &'static str {
        match self.system {
            SystemKind::Sinusoid => "sinusoid",
            SystemKind::Pendulum => "pendulum",
            SystemKind::Bicycle => "bicycle",
        }
    }

    pub fn input_dim(&self) -> usize {
        self.system.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.system.output_dim()
    }

    pub fn noise_variance(&self) -> Vec<f64> {
        vec![self.noise_sigma * self.noise_sigma; self.output_dim()]
    }

    fn true_function(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, EvalError> {
        let params = self
            .high_fidelity
            .fixed_params()
            .expect("high-fidelity simulators carry fixed parameters");
        Ok(self.high_fidelity.evaluate_matrix(params, x)?)
    }

    /// The oracle predictor: true function values with the true noise
    /// variance (and zero epistemic uncertainty).
    pub fn oracle_prediction(&self, x: &DMatrix<f64>) -> Result<Prediction, EvalError> {
        let mean = self.true_function(x)?;
        let epistemic_variance = DMatrix::zeros(mean.nrows(), mean.ncols());
        let variance =
            DMatrix::from_element(mean.nrows(), mean.ncols(), self.noise_sigma * self.noise_sigma);
        Ok(Prediction {
            mean,
            epistemic_variance,
            variance,
        })
    }
}

fn add_noise(y: &mut DMatrix<f64>, sigma: f64, rng: &mut ChaCha8Rng) {
    use rand_distr::{Distribution, StandardNormal};
    if sigma == 0.0 {
        return;
    }
    for v in y.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v += sigma * z;
    }
}

/// Training inputs drawn from the task box; targets from the high-fidelity
/// system plus Gaussian noise. The test set (inputs and noisy targets) is a
/// fixed per-task grid shared across methods and seeds: a linspace for the
/// sinusoid, a task-seeded uniform design otherwise.
pub fn make_dataset(
    task: &Task,
    train_size: usize,
    test_size: usize,
    noise_sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Dataset, Dataset), EvalError> {
    if train_size < 1 {
        return Err(EvalError::InvalidSpec("train size must be >= 1".to_string()));
    }
    let (lo, hi) = task.input_box.clone();
    let zeta = MeasurementDistribution::new(lo.clone(), hi.clone(), train_size)?;
    let x_train = sample_measurement_set(&zeta, rng);
    let mut y_train = task.true_function(&x_train)?;
    add_noise(&mut y_train, noise_sigma, rng);
    let train = Dataset::new(x_train, y_train)?;

    let x_test = if task.system == SystemKind::Sinusoid {
        DMatrix::from_fn(test_size, 1, |r, _| {
            lo[0] + (hi[0] - lo[0]) * r as f64 / (test_size - 1).max(1) as f64
        })
    } else {
        let test_zeta = MeasurementDistribution::new(lo, hi, test_size)?;
        let mut test_rng = stream(derive_seed(0, task.id(), 0xEA7), "test-inputs", 0);
        sample_measurement_set(&test_zeta, &mut test_rng)
    };
    let mut y_test = task.true_function(&x_test)?;
    let mut test_noise_rng = stream(derive_seed(0, task.id(), 0xEA7), "test-noise", 0);
    add_noise(&mut y_test, noise_sigma, &mut test_noise_rng);
    let test = Dataset::new(x_test, y_test)?;
    Ok((train, test))
}

/// Everything needed to fit one method on one task; field defaults are the
/// desk-scale settings of the shipped experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub particles: usize,
    /// FSVGD-family learning rate.
    pub learning_rate: f64,
    pub iterations: usize,
    pub prior_samples: usize,
    /// Measurement points appended per step.
    pub measurement_size: usize,
    pub minibatch: Option<usize>,
    pub estimator: EstimatorConfig,
    /// SimPEL's sim-to-real gap GP.
    pub gap_variance: f64,
    pub gap_lengthscale: f64,
    /// Generic GP prior of the FSVGD baseline (and the GreyBox residual).
    pub gp_variance: f64,
    pub gp_lengthscale: f64,
    /// Weight-space SVGD settings.
    pub svgd_weight_prior_std: f64,
    pub svgd_learning_rate: f64,
    pub svgd_iterations: usize,
    /// Nelder–Mead objective evaluations per start.
    pub sysid_budget: usize,
    /// GreyBox residual prior: the FSVGD baseline GP by default; set true
    /// to reuse SimPEL's gap kernel instead (controlled comparison).
    pub greybox_uses_gap: bool,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            activation: Activation::Tanh,
            particles: 10,
            learning_rate: 5e-3,
            iterations: 1500,
            prior_samples: 64,
            measurement_size: 16,
            minibatch: None,
            estimator: EstimatorConfig::default(),
            gap_variance: 0.01,
            gap_lengthscale: 2.0,
            gp_variance: 4.0,
            gp_lengthscale: 1.0,
            svgd_weight_prior_std: 1.0,
            svgd_learning_rate: 5e-3,
            svgd_iterations: 2000,
            sysid_budget: 600,
            greybox_uses_gap: false,
        }
    }
}

impl ModelSettings {
    pub fn architecture_for(
        &self,
        input_dim: usize,
        output_dim: usize,
    ) -> Result<MlpArchitecture, BnnError> {
        MlpArchitecture::new(input_dim, output_dim, self.hidden.clone(), self.activation)
    }

    pub fn fsvgd_config_for(
        &self,
        input_lower: Vec<f64>,
        input_upper: Vec<f64>,
    ) -> Result<FsvgdConfig, PriorError> {
        let measurement =
            MeasurementDistribution::new(input_lower, input_upper, self.measurement_size)?;
        let mut cfg = FsvgdConfig::new(measurement);
        cfg.learning_rate = self.learning_rate;
        cfg.iterations = self.iterations;
        cfg.prior_samples = self.prior_samples;
        cfg.minibatch = self.minibatch;
        cfg.estimator = self.estimator;
        cfg.bandwidth = BandwidthRule::MedianHeuristic;
        Ok(cfg)
    }

    pub fn architecture(&self, task: &Task) -> Result<MlpArchitecture, EvalError> {
        Ok(self.architecture_for(task.input_dim(), task.output_dim())?)
    }

    pub fn fsvgd_config(&self, task: &Task) -> Result<FsvgdConfig, EvalError> {
        let (lo, hi) = task.input_box.clone();
        Ok(self.fsvgd_config_for(lo, hi)?)
    }

    pub fn gap(&self) -> GapKernelConfig {
        GapKernelConfig::new(self.gap_variance, self.gap_lengthscale)
    }

    pub fn generic_gp(&self) -> GapKernelConfig {
        GapKernelConfig::new(self.gp_variance, self.gp_lengthscale)
    }
}

/// A trained model of any method, with a unified prediction surface.
#[derive(Clone, Debug)]
pub enum FittedModel {
    Ensemble(ParticleEnsemble),
    SysId(SysIdModel),
    GreyBox(GreyBoxModel),
}

impl FittedModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Prediction, EvalError> {
        match self {
            FittedModel::Ensemble(e) => Ok(e.predict(x)?),
            FittedModel::SysId(m) => Ok(m.predict(x)?),
            FittedModel::GreyBox(m) => Ok(m.predict(x)?),
        }
    }
}

/// Fit one method on one training set. All stochastic choices run on the
/// supplied stream.
pub fn fit_method(
    task: &Task,
    method: Method,
    settings: &ModelSettings,
    train: &Dataset,
    rng: &mut ChaCha8Rng,
) -> Result<FittedModel, EvalError> {
    let noise = task.noise_variance();
    match method {
        Method::Simpel | Method::SimpelOnlySim | Method::Fsvgd => {
            let arch = settings.architecture(task)?;
            let cfg = settings.fsvgd_config(task)?;
            let prior = match method {
                Method::Simpel => CombinedPrior::new(
                    Some((task.low_fidelity.clone(), task.param_prior.clone())),
                    Some(GapSpec::Shared(settings.gap())),
                    task.output_dim(),
                )?,
                Method::SimpelOnlySim => CombinedPrior::new(
                    Some((task.low_fidelity.clone(), task.param_prior.clone())),
                    None,
                    task.output_dim(),
                )?,
                _ => CombinedPrior::new(
                    None,
                    Some(GapSpec::Shared(settings.generic_gp())),
                    task.output_dim(),
                )?,
            };
            let (ensemble, _) = fsvgd_train(
                arch,
                settings.particles,
                noise,
                train,
                &prior,
                &cfg,
                rng,
            )?;
            Ok(FittedModel::Ensemble(ensemble))
        }
        Method::Svgd => {
            let arch = settings.architecture(task)?;
            let cfg = SvgdConfig {
                learning_rate: settings.svgd_learning_rate,
                iterations: settings.svgd_iterations,
                weight_prior_std: settings.svgd_weight_prior_std,
                bandwidth: BandwidthRule::MedianHeuristic,
                minibatch: settings.minibatch,
                momentum: 0.9,
                rms: true,
            };
            let (ensemble, _) = svgd_train(arch, settings.particles, noise, train, &cfg, rng)?;
            Ok(FittedModel::Ensemble(ensemble))
        }
        Method::Sysid => {
            let model = sysid_fit(
                train,
                &task.low_fidelity,
                &task.param_prior,
                &noise,
                settings.sysid_budget,
                rng,
            )?;
            Ok(FittedModel::SysId(model))
        }
        Method::Greybox => {
            let arch = settings.architecture(task)?;
            let cfg = settings.fsvgd_config(task)?;
            let residual_gp = if settings.greybox_uses_gap {
                GapSpec::Shared(settings.gap())
            } else {
                GapSpec::Shared(settings.generic_gp())
            };
            let model = greybox_fit(
                train,
                &task.low_fidelity,
                &task.param_prior,
                residual_gp,
                arch,
                settings.particles,
                &cfg,
                &noise,
                settings.sysid_budget,
                rng,
            )?;
            Ok(FittedModel::GreyBox(model))
        }
    }
}

/// One learning-curve experiment: task, methods, train sizes, seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub task: SystemKind,
    pub methods: Vec<Method>,
    pub train_sizes: Vec<usize>,
    pub test_size: usize,
    pub seeds: Vec<u64>,
    /// Overrides the task's default observation noise when set.
    #[serde(default)]
    pub noise_sigma: Option<f64>,
    #[serde(default)]
    pub model: ModelSettings,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.seeds.is_empty() {
            return Err(EvalError::InvalidSpec("seeds must be nonempty".to_string()));
        }
        if self.train_sizes.is_empty() {
            return Err(EvalError::InvalidSpec(
                "train_sizes must be nonempty".to_string(),
            ));
        }
        if !self.train_sizes.windows(2).all(|w| w[0] < w[1]) {
            return Err(EvalError::InvalidSpec(
                "train_sizes must be strictly increasing".to_string(),
            ));
        }
        if self.test_size < 1 {
            return Err(EvalError::InvalidSpec("test_size must be >= 1".to_string()));
        }
        Ok(())
    }

    pub fn task(&self) -> Task {
        let mut task = Task::new(self.task);
        if let Some(sigma) = self.noise_sigma {
            task.noise_sigma = sigma;
        }
        task
    }
}
