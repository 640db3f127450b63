//! The implicit stochastic-process prior: measurement-set sampling, the
//! GP sim-to-real gap, and the combined simulator+GP sample matrix.
//!
//! A prior over functions is represented only through samples of its
//! finite-dimensional marginals: given a measurement set `X` (k rows), a
//! draw is the simulator output `g(X, φ)` under `φ ~ p(φ)` plus an
//! independent zero-mean GP draw per output dimension.

mod file;

pub use file::{read_prior_matrix, write_prior_matrix};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulators::{sample_params, ParamPrior, SimulatorError, SimulatorModel};

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("kernel matrix is not positive definite even after jitter; raise the jitter epsilon")]
    NotPositiveDefinite,
    #[error("invalid measurement distribution: {0}")]
    InvalidMeasurement(String),
    #[error("invalid kernel config: {0}")]
    InvalidKernel(String),
    #[error("simulator rejected a prior sample row {retries} times: {source}")]
    RowRejected {
        retries: usize,
        source: SimulatorError,
    },
    #[error(transparent)]
    Simulator(#[from] SimulatorError),
    #[error("prior sample file: {0}")]
    BadFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform box measurement distribution ζ over the input space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementDistribution {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Measurement-set size k.
    pub size: usize,
}

impl MeasurementDistribution {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, size: usize) -> Result<Self, PriorError> {
        let m = Self { lower, upper, size };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), PriorError> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(PriorError::InvalidMeasurement(
                "lower/upper bound dimension mismatch".to_string(),
            ));
        }
        if self.size < 1 {
            return Err(PriorError::InvalidMeasurement("size must be >= 1".to_string()));
        }
        for (lo, hi) in self.lower.iter().zip(&self.upper) {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(PriorError::InvalidMeasurement(format!(
                    "invalid box [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.lower.len()
    }
}

/// k i.i.d. uniform draws from the box; deterministic under a fixed stream.
pub fn sample_measurement_set(
    zeta: &MeasurementDistribution,
    rng: &mut ChaCha8Rng,
) -> DMatrix<f64> {
    let (k, d) = (zeta.size, zeta.input_dim());
    let mut x = DMatrix::zeros(k, d);
    for r in 0..k {
        for c in 0..d {
            let (lo, hi) = (zeta.lower[c], zeta.upper[c]);
            x[(r, c)] = if lo == hi { lo } else { rng.gen_range(lo..hi) };
        }
    }
    x
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationFamily {
    SquaredExponential,
    Matern52,
}

impl CorrelationFamily {
    /// ρ(r) for the scaled distance r = ||x - x'|| / ℓ; ρ(0) = 1.
    pub fn rho(self, r: f64) -> f64 {
        match self {
            CorrelationFamily::SquaredExponential => (-0.5 * r * r).exp(),
            CorrelationFamily::Matern52 => {
                let s = 5.0_f64.sqrt() * r;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }
}

/// Isotropic kernel of the sim-to-real gap GP:
/// `k(x, x') = κ²·ρ(||x − x'||/ℓ)` plus diagonal jitter ε.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapKernelConfig {
    /// Variance κ², output units².
    pub variance: f64,
    /// Lengthscale ℓ, input units.
    pub lengthscale: f64,
    #[serde(default = "GapKernelConfig::default_family")]
    pub family: CorrelationFamily,
    /// Diagonal jitter ε; defaults to 1e-6·κ².
    #[serde(default)]
    pub jitter: Option<f64>,
}

impl GapKernelConfig {
    fn default_family() -> CorrelationFamily {
        CorrelationFamily::SquaredExponential
    }

    pub fn new(variance: f64, lengthscale: f64) -> Self {
        Self {
            variance,
            lengthscale,
            family: Self::default_family(),
            jitter: None,
        }
    }

    pub fn validate(&self) -> Result<(), PriorError> {
        if !(self.variance > 0.0) {
            return Err(PriorError::InvalidKernel(format!(
                "variance must be > 0, got {}",
                self.variance
            )));
        }
        if !(self.lengthscale > 0.0) {
            return Err(PriorError::InvalidKernel(format!(
                "lengthscale must be > 0, got {}",
                self.lengthscale
            )));
        }
        if let Some(j) = self.jitter {
            if j < 0.0 {
                return Err(PriorError::InvalidKernel("jitter must be >= 0".to_string()));
            }
        }
        Ok(())
    }

    pub fn effective_jitter(&self) -> f64 {
        self.jitter.unwrap_or(1e-6 * self.variance)
    }
}

/// Kernel matrix `K_ab = κ²·ρ(||x_a − x_b||/ℓ) + ε·1[a=b]`; exactly symmetric.
pub fn gap_kernel_matrix(x: &DMatrix<f64>, config: &GapKernelConfig) -> DMatrix<f64> {
    let k = x.nrows();
    let eps = config.effective_jitter();
    let mut out = DMatrix::zeros(k, k);
    for a in 0..k {
        out[(a, a)] = config.variance + eps;
        for b in (a + 1)..k {
            let mut sq = 0.0;
            for c in 0..x.ncols() {
                let d = x[(a, c)] - x[(b, c)];
                sq += d * d;
            }
            let v = config.variance * config.family.rho(sq.sqrt() / config.lengthscale);
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    out
}

fn cholesky_with_guard(k: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>, PriorError> {
    if let Some(ch) = Cholesky::new(k.clone()) {
        return Ok(ch);
    }
    // One guarded retry with a tiny diagonal bump relative to the scale.
    let max_diag = (0..k.nrows()).map(|i| k[(i, i)]).fold(0.0, f64::max);
    let bump = if max_diag > 0.0 { 1e-10 * max_diag } else { 1e-12 };
    let mut kk = k.clone();
    for i in 0..k.nrows() {
        kk[(i, i)] += bump;
    }
    Cholesky::new(kk).ok_or(PriorError::NotPositiveDefinite)
}

/// N i.i.d. zero-mean rows with covariance K, via Cholesky.
pub fn sample_gap_functions(
    k: &DMatrix<f64>,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>, PriorError> {
    let chol = cholesky_with_guard(k)?;
    let l = chol.l();
    let dim = k.nrows();
    let mut out = DMatrix::zeros(n, dim);
    for r in 0..n {
        let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let row = &l * z;
        for c in 0..dim {
            out[(r, c)] = row[c];
        }
    }
    Ok(out)
}

/// N sampled function-value vectors per output dimension over a measurement
/// set: the empirical finite-dimensional marginal of the prior process.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorSampleMatrix {
    /// Measurement set X, k × d_x.
    pub measurement_set: DMatrix<f64>,
    /// One N × k sample matrix per output dimension.
    pub per_dim: Vec<DMatrix<f64>>,
}

impl PriorSampleMatrix {
    pub fn n_samples(&self) -> usize {
        self.per_dim.first().map_or(0, DMatrix::nrows)
    }

    pub fn measurement_size(&self) -> usize {
        self.measurement_set.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.per_dim.len()
    }

    pub fn validate(&self) -> Result<(), PriorError> {
        let k = self.measurement_size();
        if self.n_samples() < 2 {
            return Err(PriorError::BadFile("sample count N must be >= 2".to_string()));
        }
        for m in &self.per_dim {
            if m.nrows() != self.n_samples() || m.ncols() != k {
                return Err(PriorError::BadFile(
                    "inconsistent sample matrix shape".to_string(),
                ));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(PriorError::BadFile("non-finite sample values".to_string()));
            }
        }
        Ok(())
    }
}

/// Per-output-dimension gap kernels: one shared config, or one per dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GapSpec {
    Shared(GapKernelConfig),
    PerDim(Vec<GapKernelConfig>),
}

impl GapSpec {
    pub fn config_for(&self, dim: usize) -> &GapKernelConfig {
        match self {
            GapSpec::Shared(c) => c,
            GapSpec::PerDim(v) => &v[dim],
        }
    }
}

/// A sampler of finite-dimensional prior marginals over function values.
pub trait FunctionPrior: Sync {
    fn output_dim(&self) -> usize;

    /// Draw N function-value samples at the rows of `x`.
    fn sample_function_values(
        &self,
        x: &DMatrix<f64>,
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<PriorSampleMatrix, PriorError>;
}

/// The combined simulator + GP-gap process. Either component may be absent:
/// no simulator gives a pure GP prior, no gap gives a simulator-only prior.
#[derive(Clone, Debug)]
pub struct CombinedPrior {
    pub simulator: Option<(SimulatorModel, ParamPrior)>,
    pub gap: Option<GapSpec>,
    output_dim: usize,
}

impl CombinedPrior {
    pub fn new(
        simulator: Option<(SimulatorModel, ParamPrior)>,
        gap: Option<GapSpec>,
        output_dim: usize,
    ) -> Result<Self, PriorError> {
        if simulator.is_none() && gap.is_none() {
            return Err(PriorError::InvalidKernel(
                "prior needs a simulator, a gap GP, or both".to_string(),
            ));
        }
        if let Some((sim, prior)) = &simulator {
            sim.validate()?;
            prior.validate()?;
            if sim.output_dim() != output_dim {
                return Err(PriorError::InvalidKernel(format!(
                    "simulator output dim {} != prior output dim {}",
                    sim.output_dim(),
                    output_dim
                )));
            }
        }
        if let Some(GapSpec::PerDim(v)) = &gap {
            if v.len() != output_dim {
                return Err(PriorError::InvalidKernel(
                    "per-dimension gap config count != output dim".to_string(),
                ));
            }
        }
        Ok(Self {
            simulator,
            gap,
            output_dim,
        })
    }
}

impl FunctionPrior for CombinedPrior {
    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn sample_function_values(
        &self,
        x: &DMatrix<f64>,
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<PriorSampleMatrix, PriorError> {
        sample_prior_matrix(
            x,
            self.simulator.as_ref().map(|(s, p)| (s, p)),
            self.gap.as_ref(),
            self.output_dim,
            n,
            rng,
        )
    }
}

const MAX_ROW_RETRIES: usize = 10;

/// Sample the combined prior at the measurement set `x`: per sample draw
/// `φ ~ p(φ)`, evaluate the simulator on every row, and add an independent
/// GP gap draw per output dimension. Rows are generated on parallel
/// per-row RNG streams split deterministically from `rng`.
pub fn sample_prior_matrix(
    x: &DMatrix<f64>,
    simulator: Option<(&SimulatorModel, &ParamPrior)>,
    gap: Option<&GapSpec>,
    output_dim: usize,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PriorSampleMatrix, PriorError> {
    let k = x.nrows();
    if let Some((sim, _)) = simulator {
        if sim.input_dim() != x.ncols() {
            return Err(SimulatorError::DimensionMismatch {
                expected: sim.input_dim(),
                got: x.ncols(),
                context: "measurement set columns",
            }
            .into());
        }
    }

    // Per-dimension Cholesky factors of the gap kernel, computed once.
    let gap_factors: Option<Vec<DMatrix<f64>>> = match gap {
        None => None,
        Some(spec) => {
            let mut factors = Vec::with_capacity(output_dim);
            for dim in 0..output_dim {
                let cfg = spec.config_for(dim);
                cfg.validate()?;
                let kmat = gap_kernel_matrix(x, cfg);
                factors.push(cholesky_with_guard(&kmat)?.l());
            }
            Some(factors)
        }
    };

    let row_seeds: Vec<u64> = (0..n).map(|_| rng.gen()).collect();

    let rows: Result<Vec<Vec<Vec<f64>>>, PriorError> = row_seeds
        .par_iter()
        .map(|&seed| {
            let mut row_rng = ChaCha8Rng::seed_from_u64(seed);
            // Simulator part: one φ per function draw, retried on divergence.
            let sim_values: Option<DMatrix<f64>> = match simulator {
                None => None,
                Some((sim, prior)) => {
                    let mut last_err = None;
                    let mut values = None;
                    for _ in 0..MAX_ROW_RETRIES {
                        let phi = sample_params(prior, &mut row_rng);
                        match sim.evaluate_matrix(&phi, x) {
                            Ok(v) => {
                                values = Some(v);
                                break;
                            }
                            Err(e) => last_err = Some(e),
                        }
                    }
                    match values {
                        Some(v) => Some(v),
                        None => {
                            return Err(PriorError::RowRejected {
                                retries: MAX_ROW_RETRIES,
                                source: last_err.expect("retry loop ran"),
                            })
                        }
                    }
                }
            };
            // Gap part: independent draw per output dimension.
            let mut per_dim_rows = Vec::with_capacity(output_dim);
            for dim in 0..output_dim {
                let mut row = vec![0.0; k];
                if let Some(sv) = &sim_values {
                    for (a, value) in row.iter_mut().enumerate() {
                        *value = sv[(a, dim)];
                    }
                }
                if let Some(factors) = &gap_factors {
                    let z = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut row_rng));
                    let g = &factors[dim] * z;
                    for (a, value) in row.iter_mut().enumerate() {
                        *value += g[a];
                    }
                }
                per_dim_rows.push(row);
            }
            Ok(per_dim_rows)
        })
        .collect();
    let rows = rows?;

    let per_dim = (0..output_dim)
        .map(|dim| DMatrix::from_fn(n, k, |r, c| rows[r][dim][c]))
        .collect();

    Ok(PriorSampleMatrix {
        measurement_set: x.clone(),
        per_dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::simulators::{
        default_param_prior, true_params, Fidelity, ParamDist, ParamSpec, SystemKind,
    };
    use approx::assert_relative_eq;

    fn grid_1d(n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
        DMatrix::from_fn(n, 1, |r, _| lo + (hi - lo) * r as f64 / (n - 1) as f64)
    }

    #[test]
    fn degenerate_box_gives_equal_rows() {
        let zeta = MeasurementDistribution::new(vec![2.0, -1.0], vec![2.0, -1.0], 5).unwrap();
        let x = sample_measurement_set(&zeta, &mut stream(0, "m", 0));
        for r in 0..5 {
            assert_eq!(x[(r, 0)], 2.0);
            assert_eq!(x[(r, 1)], -1.0);
        }
    }

    #[test]
    fn single_point_measurement_set() {
        let zeta = MeasurementDistribution::new(vec![0.0], vec![1.0], 1).unwrap();
        let x = sample_measurement_set(&zeta, &mut stream(0, "m", 1));
        assert_eq!((x.nrows(), x.ncols()), (1, 1));
    }

    #[test]
    fn box_mean_matches_clt_bound() {
        // box [0,1], 1e4 draws: empirical mean 0.5 ± 0.015 (3σ).
        let zeta = MeasurementDistribution::new(vec![0.0], vec![1.0], 10_000).unwrap();
        let x = sample_measurement_set(&zeta, &mut stream(5, "m", 2));
        let mean = x.column(0).mean();
        assert!((mean - 0.5).abs() < 0.015, "mean {mean}");
    }

    #[test]
    fn kernel_diagonal_is_variance_plus_jitter() {
        let cfg = GapKernelConfig {
            variance: 2.0,
            lengthscale: 1.0,
            family: CorrelationFamily::SquaredExponential,
            jitter: Some(0.25),
        };
        let x = DMatrix::from_row_slice(3, 1, &[-1.0, 0.3, 2.0]);
        let k = gap_kernel_matrix(&x, &cfg);
        for i in 0..3 {
            assert_relative_eq!(k[(i, i)], 2.25);
        }
    }

    #[test]
    fn identical_points_give_rank_one_block() {
        let cfg = GapKernelConfig {
            variance: 1.7,
            lengthscale: 0.5,
            family: CorrelationFamily::SquaredExponential,
            jitter: Some(0.0),
        };
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        let k = gap_kernel_matrix(&x, &cfg);
        for v in k.iter() {
            assert_relative_eq!(*v, 1.7);
        }
    }

    #[test]
    fn squared_exponential_off_diagonal_value() {
        // κ² = 1, ℓ = 1, ||x − x'|| = 1 -> e^{-1/2} = 0.6065306597126334.
        let cfg = GapKernelConfig {
            variance: 1.0,
            lengthscale: 1.0,
            family: CorrelationFamily::SquaredExponential,
            jitter: Some(0.0),
        };
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let k = gap_kernel_matrix(&x, &cfg);
        assert_relative_eq!(k[(0, 1)], 0.606_530_659_712_633_4, epsilon = 1e-15);
    }

    #[test]
    fn kernel_is_symmetric_with_bounded_negative_eigenvalue() {
        let cfg = GapKernelConfig::new(1.3, 0.8);
        let x = sample_measurement_set(
            &MeasurementDistribution::new(vec![-2.0, -2.0], vec![2.0, 2.0], 24).unwrap(),
            &mut stream(9, "m", 3),
        );
        let k = gap_kernel_matrix(&x, &cfg);
        assert_eq!(k.transpose(), k);
        let eig = k.symmetric_eigenvalues();
        assert!(eig.min() >= -1e-10, "min eigenvalue {}", eig.min());
    }

    #[test]
    fn matern52_at_zero_is_one() {
        assert_relative_eq!(CorrelationFamily::Matern52.rho(0.0), 1.0);
        assert!(CorrelationFamily::Matern52.rho(2.0) < 1.0);
    }

    #[test]
    fn near_zero_kernel_gives_near_zero_draws() {
        let k = DMatrix::zeros(4, 4);
        let rows = sample_gap_functions(&k, 8, &mut stream(1, "gap", 0)).unwrap();
        for v in rows.iter() {
            assert!(v.abs() < 1e-4, "draw {v} not ~0");
        }
    }

    #[test]
    fn identity_kernel_column_variance() {
        // K = I, N = 1e5: per-column variance within 1 ± 0.02.
        let k = DMatrix::identity(3, 3);
        let rows = sample_gap_functions(&k, 100_000, &mut stream(2, "gap", 1)).unwrap();
        for c in 0..3 {
            let col = rows.column(c);
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (rows.nrows() - 1) as f64;
            assert!((var - 1.0).abs() < 0.02, "column {c} variance {var}");
        }
    }

    #[test]
    fn gap_sampling_is_reproducible() {
        let cfg = GapKernelConfig::new(1.0, 1.0);
        let x = grid_1d(6, -1.0, 1.0);
        let k = gap_kernel_matrix(&x, &cfg);
        let a = sample_gap_functions(&k, 5, &mut stream(3, "gap", 2)).unwrap();
        let b = sample_gap_functions(&k, 5, &mut stream(3, "gap", 2)).unwrap();
        assert_eq!(a, b);
    }

    fn sinusoid_model_with_prior() -> (SimulatorModel, ParamPrior) {
        let prior = default_param_prior(SystemKind::Sinusoid);
        let model = SimulatorModel::new(
            SystemKind::Sinusoid,
            Fidelity::Low,
            1.0,
            ParamSpec::Prior(prior.clone()),
        );
        (model, prior)
    }

    #[test]
    fn both_noise_sources_off_gives_identical_rows() {
        let params = true_params(SystemKind::Sinusoid);
        let degenerate = ParamPrior::new(&[
            ("amplitude", ParamDist::Uniform { lower: 1.2, upper: 1.2 }),
            ("frequency", ParamDist::Uniform { lower: 2.0, upper: 2.0 }),
            ("slope", ParamDist::Uniform { lower: 0.3, upper: 0.3 }),
        ])
        .unwrap();
        let (model, _) = sinusoid_model_with_prior();
        let x = grid_1d(7, -2.0, 2.0);
        let out = sample_prior_matrix(
            &x,
            Some((&model, &degenerate)),
            None,
            1,
            4,
            &mut stream(4, "prior", 0),
        )
        .unwrap();
        let expect = model.evaluate_matrix(&params, &x).unwrap();
        for r in 0..4 {
            for c in 0..7 {
                assert_relative_eq!(out.per_dim[0][(r, c)], expect[(c, 0)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gap_only_prior_matches_gp_column_variance() {
        // sim absent: combined samples are pure GP draws, so per-column
        // variance ≈ diag(K).
        let cfg = GapKernelConfig::new(0.8, 1.0);
        let x = grid_1d(5, -1.0, 1.0);
        let out = sample_prior_matrix(
            &x,
            None,
            Some(&GapSpec::Shared(cfg)),
            1,
            40_000,
            &mut stream(6, "prior", 1),
        )
        .unwrap();
        let m = &out.per_dim[0];
        for c in 0..5 {
            let col = m.column(c);
            let mean = col.mean();
            let var =
                col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m.nrows() - 1) as f64;
            assert!((var - 0.8).abs() < 0.03, "col {c} var {var}");
        }
    }

    #[test]
    fn combined_covariance_is_additive() {
        // Empirical covariance of sim+gap ≈ empirical covariance of
        // sim-only + K (independence of the two processes).
        let (model, prior) = sinusoid_model_with_prior();
        let cfg = GapKernelConfig::new(0.5, 1.0);
        let x = grid_1d(6, -2.0, 2.0);
        let kmat = gap_kernel_matrix(&x, &cfg);

        let cov_of = |m: &DMatrix<f64>| -> DMatrix<f64> {
            let n = m.nrows();
            let mean = DVector::from_fn(m.ncols(), |c, _| m.column(c).mean());
            let mut cov = DMatrix::zeros(m.ncols(), m.ncols());
            for r in 0..n {
                let d = DVector::from_fn(m.ncols(), |c, _| m[(r, c)] - mean[c]);
                cov += &d * d.transpose();
            }
            cov / (n - 1) as f64
        };

        let sim_only = sample_prior_matrix(
            &x,
            Some((&model, &prior)),
            None,
            1,
            100_000,
            &mut stream(7, "prior", 2),
        )
        .unwrap();
        let cov_sim = cov_of(&sim_only.per_dim[0]);

        let mut frob_err_avg = 0.0;
        let n_seeds = 5;
        for s in 0..n_seeds {
            let combined = sample_prior_matrix(
                &x,
                Some((&model, &prior)),
                Some(&GapSpec::Shared(cfg)),
                1,
                1000,
                &mut stream(8, "prior", s),
            )
            .unwrap();
            let cov_combined = cov_of(&combined.per_dim[0]);
            let target = &cov_sim + &kmat;
            frob_err_avg += (cov_combined - &target).norm() / target.norm();
        }
        frob_err_avg /= n_seeds as f64;
        assert!(frob_err_avg < 0.10, "relative Frobenius error {frob_err_avg}");
    }

    #[test]
    fn gap_draws_are_independent_across_output_dims() {
        // Cross-dimension correlation of gap samples < 0.05 at N = 1e4.
        let cfg = GapKernelConfig::new(1.0, 1.5);
        let x = grid_1d(4, -1.0, 1.0);
        let out = sample_prior_matrix(
            &x,
            None,
            Some(&GapSpec::Shared(cfg)),
            2,
            10_000,
            &mut stream(9, "prior", 3),
        )
        .unwrap();
        let (a, b) = (&out.per_dim[0], &out.per_dim[1]);
        for c in 0..4 {
            let (ca, cb) = (a.column(c), b.column(c));
            let (ma, mb) = (ca.mean(), cb.mean());
            let mut num = 0.0;
            let mut va = 0.0;
            let mut vb = 0.0;
            for r in 0..a.nrows() {
                num += (ca[r] - ma) * (cb[r] - mb);
                va += (ca[r] - ma).powi(2);
                vb += (cb[r] - mb).powi(2);
            }
            let corr = num / (va.sqrt() * vb.sqrt());
            assert!(corr.abs() < 0.05, "column {c} cross-dim correlation {corr}");
        }
    }

    #[test]
    fn output_dims_match_simulator() {
        let prior = default_param_prior(SystemKind::Pendulum);
        let model = SimulatorModel::new(
            SystemKind::Pendulum,
            Fidelity::Low,
            1.0 / 30.0,
            ParamSpec::Prior(prior.clone()),
        );
        let zeta = {
            let (lo, hi) = model.default_input_box();
            MeasurementDistribution::new(lo, hi, 8).unwrap()
        };
        let x = sample_measurement_set(&zeta, &mut stream(10, "m", 4));
        let out = sample_prior_matrix(
            &x,
            Some((&model, &prior)),
            Some(&GapSpec::Shared(GapKernelConfig::new(0.01, 2.0))),
            model.output_dim(),
            16,
            &mut stream(10, "prior", 5),
        )
        .unwrap();
        assert_eq!(out.output_dim(), 2);
        out.validate().unwrap();
    }
}
