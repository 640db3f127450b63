//! Prior-score estimation: `∇_{h^X} ln p(h^X)` from prior samples.
//!
//! Four interchangeable estimators: a Gaussian moment fit, kernel density
//! estimation, the spectral Stein gradient estimator (SSGE), and the
//! nu-method (iterative spectral regularization with a curl-free matrix
//! kernel). All estimators are deterministic given (samples, query, config).

mod gaussian;
mod kde;
mod nu;
mod ssge;

pub use gaussian::gaussian_score;
pub use kde::{kde_score, scott_bandwidth};
pub use nu::nu_method_score;
pub use ssge::{ssge_score, SsgeCutoff};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Estimated gradients `∇ ln p(h)` — one row per query row.
pub type ScoreEstimate = DMatrix<f64>;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("shape mismatch: samples have {samples} columns, query has {query}")]
    ShapeMismatch { samples: usize, query: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("covariance plus nugget is singular; increase the nugget eta (currently {nugget:e})")]
    SingularCovariance { nugget: f64 },
    #[error("degenerate kernel Gram matrix (are all samples identical?)")]
    DegenerateGram,
    #[error("nu-method iterate norm grew beyond {limit:e}; use a smaller step")]
    IterationDiverged { limit: f64 },
    #[error("invalid estimator config: {0}")]
    InvalidConfig(String),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorVariant {
    Gaussian,
    Kde,
    Ssge,
    NuMethod,
}

impl std::fmt::Display for EstimatorVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EstimatorVariant::Gaussian => "gaussian",
            EstimatorVariant::Kde => "kde",
            EstimatorVariant::Ssge => "ssge",
            EstimatorVariant::NuMethod => "nu-method",
        };
        f.write_str(s)
    }
}

/// Configuration of a prior-score estimator.
///
/// Optional bandwidths fall back to data-driven rules: Scott's rule for the
/// KDE bandwidth, the median heuristic for the SSGE/nu-method base kernel,
/// and `1e-4·trace(Σ)/k` for the Gaussian nugget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub variant: EstimatorVariant,
    /// Covariance nugget η of the Gaussian estimator.
    pub nugget: Option<f64>,
    /// KDE bandwidth γ_kde.
    pub kde_bandwidth: Option<f64>,
    /// Base Gaussian-kernel bandwidth of SSGE and the nu-method.
    pub kernel_bandwidth: Option<f64>,
    /// SSGE eigenfunction count J (kept by count). Default 0.9·N.
    pub eigen_count: Option<usize>,
    /// SSGE eigenvalue threshold λ (alternative to `eigen_count`).
    pub eigen_threshold: Option<f64>,
    /// Nu-method iteration count T.
    pub iterations: usize,
    /// Nu-method parameter ν of the canonical step schedule.
    pub step: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            variant: EstimatorVariant::Gaussian,
            nugget: None,
            kde_bandwidth: None,
            kernel_bandwidth: None,
            eigen_count: None,
            eigen_threshold: None,
            iterations: 100,
            step: 1.0,
        }
    }
}

impl EstimatorConfig {
    pub fn new(variant: EstimatorVariant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ScoreError> {
        for (name, v) in [
            ("nugget", self.nugget),
            ("kde_bandwidth", self.kde_bandwidth),
            ("kernel_bandwidth", self.kernel_bandwidth),
        ] {
            if let Some(v) = v {
                let ok = if name == "nugget" { v >= 0.0 } else { v > 0.0 };
                if !ok || !v.is_finite() {
                    return Err(ScoreError::InvalidConfig(format!("{name} = {v}")));
                }
            }
        }
        if self.eigen_count == Some(0) {
            return Err(ScoreError::InvalidConfig("eigen_count must be >= 1".to_string()));
        }
        if self.iterations < 1 {
            return Err(ScoreError::InvalidConfig("iterations must be >= 1".to_string()));
        }
        if !(self.step > 0.0) {
            return Err(ScoreError::InvalidConfig(format!("step = {}", self.step)));
        }
        Ok(())
    }
}

pub(crate) fn check_shapes(
    samples: &DMatrix<f64>,
    query: &DMatrix<f64>,
) -> Result<(), ScoreError> {
    if samples.ncols() != query.ncols() {
        return Err(ScoreError::ShapeMismatch {
            samples: samples.ncols(),
            query: query.ncols(),
        });
    }
    if samples.nrows() < 2 {
        return Err(ScoreError::TooFewSamples {
            needed: 2,
            got: samples.nrows(),
        });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(ScoreError::NonFinite("samples"));
    }
    if query.iter().any(|v| !v.is_finite()) {
        return Err(ScoreError::NonFinite("query"));
    }
    Ok(())
}

/// Dispatch to the configured estimator. Scoring is per output dimension;
/// callers pass the sample/query matrices of one dimension at a time (the
/// prior factorizes over outputs).
pub fn estimate_score(
    config: &EstimatorConfig,
    samples: &DMatrix<f64>,
    query: &DMatrix<f64>,
) -> Result<ScoreEstimate, ScoreError> {
    config.validate()?;
    match config.variant {
        EstimatorVariant::Gaussian => gaussian_score(samples, query, config.nugget),
        EstimatorVariant::Kde => {
            let bw = match config.kde_bandwidth {
                Some(b) => b,
                None => scott_bandwidth(samples),
            };
            kde_score(samples, query, bw)
        }
        EstimatorVariant::Ssge => {
            let cutoff = match (config.eigen_count, config.eigen_threshold) {
                (Some(j), None) => SsgeCutoff::Count(j),
                (None, Some(l)) => SsgeCutoff::Threshold(l),
                (None, None) => SsgeCutoff::EnergyFraction(0.95),
                (Some(_), Some(_)) => {
                    return Err(ScoreError::InvalidConfig(
                        "set either eigen_count or eigen_threshold, not both".to_string(),
                    ))
                }
            };
            ssge_score(samples, query, cutoff, config.kernel_bandwidth)
        }
        EstimatorVariant::NuMethod => nu_method_score(
            samples,
            query,
            config.iterations,
            config.step,
            config.kernel_bandwidth,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand_distr::{Distribution, StandardNormal};

    fn standard_normal_samples(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = stream(seed, "score-tests", 0);
        DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let samples = standard_normal_samples(10, 3, 0);
        let query = standard_normal_samples(2, 2, 1);
        let cfg = EstimatorConfig::new(EstimatorVariant::Gaussian);
        assert!(matches!(
            estimate_score(&cfg, &samples, &query),
            Err(ScoreError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn dispatch_is_deterministic() {
        let samples = standard_normal_samples(50, 2, 2);
        let query = standard_normal_samples(4, 2, 3);
        for variant in [
            EstimatorVariant::Gaussian,
            EstimatorVariant::Kde,
            EstimatorVariant::Ssge,
            EstimatorVariant::NuMethod,
        ] {
            let mut cfg = EstimatorConfig::new(variant);
            cfg.iterations = 20;
            let a = estimate_score(&cfg, &samples, &query).unwrap();
            let b = estimate_score(&cfg, &samples, &query).unwrap();
            assert_eq!(a, b, "{variant} not deterministic");
        }
    }

    #[test]
    fn all_estimators_vanish_near_the_mode() {
        // On standard-normal samples the score at the sample mean has norm
        // well below 0.1·sqrt(k) for N = 2000. The KDE bandwidth is pinned
        // at 0.5: Scott's rule gives a locally wiggly density whose score
        // at one point reflects sample clustering noise rather than the
        // smooth mode.
        let n = 2000;
        for d in [1usize, 3] {
            let samples = standard_normal_samples(n, d, 4);
            let mean = DMatrix::from_fn(1, d, |_, c| samples.column(c).mean());
            for variant in [
                EstimatorVariant::Gaussian,
                EstimatorVariant::Kde,
                EstimatorVariant::Ssge,
                EstimatorVariant::NuMethod,
            ] {
                let mut cfg = EstimatorConfig::new(variant);
                cfg.iterations = 50;
                cfg.kde_bandwidth = Some(0.5);
                let s = estimate_score(&cfg, &samples, &mean).unwrap();
                let norm = s.row(0).norm();
                assert!(
                    norm < 0.1 * (d as f64).sqrt(),
                    "{variant} at mode in d={d}: |s| = {norm}"
                );
            }
        }
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut cfg = EstimatorConfig::new(EstimatorVariant::Kde);
        cfg.kde_bandwidth = Some(0.0);
        assert!(cfg.validate().is_err());
        let mut cfg = EstimatorConfig::new(EstimatorVariant::NuMethod);
        cfg.step = -1.0;
        assert!(cfg.validate().is_err());
    }
}
