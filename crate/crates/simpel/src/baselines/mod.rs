//! GreyBox and system-identification reference methods.

mod nelder_mead;

pub use nelder_mead::nelder_mead_box;

use nalgebra::DMatrix;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bnn::{
    fsvgd_train, BnnError, Dataset, FsvgdConfig, MlpArchitecture, ParticleEnsemble, Prediction,
};
use crate::prior::{CombinedPrior, GapSpec, PriorError};
use crate::rng::derive_seed;
use crate::simulators::{sample_params, ParamPrior, SimParams, SimulatorError, SimulatorModel};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("every optimization start diverged (non-finite objective)")]
    AllStartsDiverged,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Bnn(#[from] BnnError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Simulator(#[from] SimulatorError),
}

/// Simulator with parameters fitted to data by maximum likelihood.
#[derive(Clone, Debug)]
pub struct SysIdModel {
    pub params: SimParams,
    pub simulator: SimulatorModel,
    pub noise_variance: Vec<f64>,
    /// Best-so-far data log-likelihood after each objective evaluation,
    /// concatenated over the multi-start schedule (monotone nondecreasing).
    pub best_trace: Vec<f64>,
}

impl SysIdModel {
    /// Mean prediction `g(x, φ*)`; aleatoric-only variance σ².
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Prediction, BaselineError> {
        let mean = self.simulator.evaluate_matrix(&self.params, x)?;
        let epistemic_variance = DMatrix::zeros(x.nrows(), mean.ncols());
        let variance = DMatrix::from_fn(x.nrows(), mean.ncols(), |_, c| self.noise_variance[c]);
        Ok(Prediction {
            mean,
            epistemic_variance,
            variance,
        })
    }
}

/// Weighted squared-error loss (the negative log-likelihood up to an
/// additive constant): `Σ (y − g(x, φ))² / (2σ²)`.
fn sysid_loss(
    sim: &SimulatorModel,
    params: &SimParams,
    dataset: &Dataset,
    noise_variance: &[f64],
) -> f64 {
    match sim.evaluate_matrix(params, &dataset.x) {
        Err(_) => f64::INFINITY,
        Ok(g) => {
            let mut loss = 0.0;
            for r in 0..dataset.len() {
                for c in 0..g.ncols() {
                    let d = dataset.y[(r, c)] - g[(r, c)];
                    loss += d * d / (2.0 * noise_variance[c]);
                }
            }
            loss
        }
    }
}

pub const SYSID_STARTS: usize = 8;

/// Maximize the Gaussian one-step data likelihood over φ within the prior
/// box via multi-start Nelder–Mead (starts run in parallel, each on its own
/// RNG stream). `budget` is the objective-evaluation budget per start.
pub fn sysid_fit(
    dataset: &Dataset,
    sim: &SimulatorModel,
    prior: &ParamPrior,
    noise_variance: &[f64],
    budget: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SysIdModel, BaselineError> {
    if dataset.is_empty() {
        return Err(BaselineError::InvalidConfig(
            "sysid_fit needs a nonempty dataset".to_string(),
        ));
    }
    prior.validate()?;
    let names = prior.names();
    let bounds = prior.bounds_vec();

    // Start points: the prior midpoint, then prior draws.
    let mut starts: Vec<SimParams> = vec![prior.midpoint()];
    let seed_base: u64 = rand::Rng::gen(rng);
    for i in 1..SYSID_STARTS {
        let mut start_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed_base, "sysid-start", i as u64));
        starts.push(sample_params(prior, &mut start_rng));
    }

    let runs: Vec<(Vec<f64>, f64, Vec<f64>)> = starts
        .par_iter()
        .map(|start| {
            let x0 = start.to_vec();
            let f = |v: &[f64]| {
                let params = SimParams::from_vec(&names, v);
                sysid_loss(sim, &params, dataset, noise_variance)
            };
            let mut trace = Vec::new();
            let (x, value) = nelder_mead_box(&f, &bounds, &x0, budget, &mut trace);
            (x, value, trace)
        })
        .collect();

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut best_trace = Vec::new();
    let mut running = f64::INFINITY;
    for (x, value, trace) in runs {
        for loss in trace {
            running = running.min(loss);
            // Report the trace as a log-likelihood (drop the constant):
            // nondecreasing by construction.
            best_trace.push(-running);
        }
        if value.is_finite() && best.as_ref().map_or(true, |(_, bv)| value < *bv) {
            best = Some((x, value));
        }
    }
    let (x, _) = best.ok_or(BaselineError::AllStartsDiverged)?;
    let params = SimParams::from_vec(&names, &x);

    let mut fitted_sim = sim.clone();
    fitted_sim.params = crate::simulators::ParamSpec::Fixed(params.clone());
    Ok(SysIdModel {
        params,
        simulator: fitted_sim,
        noise_variance: noise_variance.to_vec(),
        best_trace,
    })
}

/// SysID plus a BNN residual model trained with a zero-mean GP prior on
/// `y − g(X, φ*)`.
#[derive(Clone, Debug)]
pub struct GreyBoxModel {
    pub sysid: SysIdModel,
    pub residual: ParticleEnsemble,
}

impl GreyBoxModel {
    /// `g(x, φ*) + residual mean`; variance from the residual ensemble
    /// (particle variance plus σ²).
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Prediction, BaselineError> {
        let base = self.sysid.simulator.evaluate_matrix(&self.sysid.params, x)?;
        let mut res = self.residual.predict(x)?;
        res.mean += base;
        Ok(res)
    }
}

/// Fit φ* by SysID, then train an FSVGD ensemble with the given residual GP
/// prior on the residual targets.
#[allow(clippy::too_many_arguments)]
pub fn greybox_fit(
    dataset: &Dataset,
    sim: &SimulatorModel,
    prior: &ParamPrior,
    residual_gp: GapSpec,
    arch: MlpArchitecture,
    n_particles: usize,
    fsvgd: &FsvgdConfig,
    noise_variance: &[f64],
    sysid_budget: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GreyBoxModel, BaselineError> {
    let sysid = sysid_fit(dataset, sim, prior, noise_variance, sysid_budget, rng)?;
    let g = sysid.simulator.evaluate_matrix(&sysid.params, &dataset.x)?;
    let residual_targets = &dataset.y - &g;
    let residual_data = Dataset::new(dataset.x.clone(), residual_targets)?;
    let gp_prior = CombinedPrior::new(None, Some(residual_gp), arch.output_dim)?;
    let (residual, _) = fsvgd_train(
        arch,
        n_particles,
        noise_variance.to_vec(),
        &residual_data,
        &gp_prior,
        fsvgd,
        rng,
    )?;
    Ok(GreyBoxModel { sysid, residual })
}
