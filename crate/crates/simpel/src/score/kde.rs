//! Kernel-density-estimation score with an isotropic Gaussian kernel.

use nalgebra::DMatrix;

use super::{ScoreError, ScoreEstimate};

/// Scott's-rule bandwidth, averaged over dimensions to fit the isotropic
/// kernel: `mean_d(σ_d) · N^(-1/(d+4))`.
pub fn scott_bandwidth(samples: &DMatrix<f64>) -> f64 {
    let (n, d) = (samples.nrows(), samples.ncols());
    let mut sigma_sum = 0.0;
    for c in 0..d {
        let col = samples.column(c);
        let mean = col.mean();
        let var =
            col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n.max(2) - 1) as f64;
        sigma_sum += var.sqrt();
    }
    let sigma = (sigma_sum / d as f64).max(1e-12);
    sigma * (n as f64).powf(-1.0 / (d as f64 + 4.0))
}

/// Gradient of `ln[(1/N) Σ_j N(h | h_j, γ²I)]`, evaluated with log-sum-exp
/// weighting: `score(h) = Σ_j w_j (h_j − h) / γ²` with
/// `w_j = softmax_j(-||h − h_j||² / (2γ²))`.
pub fn kde_score(
    samples: &DMatrix<f64>,
    query: &DMatrix<f64>,
    bandwidth: f64,
) -> Result<ScoreEstimate, ScoreError> {
    if samples.ncols() != query.ncols() {
        return Err(ScoreError::ShapeMismatch {
            samples: samples.ncols(),
            query: query.ncols(),
        });
    }
    if samples.nrows() < 1 {
        return Err(ScoreError::TooFewSamples {
            needed: 1,
            got: 0,
        });
    }
    if !(bandwidth > 0.0) {
        return Err(ScoreError::InvalidConfig(format!(
            "kde bandwidth must be > 0, got {bandwidth}"
        )));
    }
    if samples.iter().chain(query.iter()).any(|v| !v.is_finite()) {
        return Err(ScoreError::NonFinite("kde inputs"));
    }

    let (n, k) = (samples.nrows(), samples.ncols());
    let gamma_sq = bandwidth * bandwidth;
    let mut out = DMatrix::zeros(query.nrows(), k);
    let mut logits = vec![0.0; n];

    for r in 0..query.nrows() {
        for (j, logit) in logits.iter_mut().enumerate() {
            let mut sq = 0.0;
            for c in 0..k {
                let d = query[(r, c)] - samples[(j, c)];
                sq += d * d;
            }
            *logit = -sq / (2.0 * gamma_sq);
        }
        let max_logit = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for logit in logits.iter_mut() {
            *logit = (*logit - max_logit).exp();
            total += *logit;
        }
        for (j, weight) in logits.iter().enumerate() {
            let w = weight / total;
            for c in 0..k {
                out[(r, c)] += w * (samples[(j, c)] - query[(r, c)]) / gamma_sq;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = stream(seed, "kde-score", 0);
        DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn single_sample_is_a_gaussian_score() {
        // N = 1: score(h) = -(h - h_1) / γ².
        let samples = DMatrix::from_row_slice(1, 2, &[0.5, -1.0]);
        let query = DMatrix::from_row_slice(1, 2, &[2.0, 1.0]);
        let gamma = 0.7;
        let s = kde_score(&samples, &query, gamma).unwrap();
        assert_relative_eq!(s[(0, 0)], -(2.0 - 0.5) / (gamma * gamma), epsilon = 1e-14);
        assert_relative_eq!(s[(0, 1)], -(1.0 + 1.0) / (gamma * gamma), epsilon = 1e-14);
    }

    #[test]
    fn midpoint_of_symmetric_pair_has_zero_score() {
        let samples = DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]);
        let query = DMatrix::from_row_slice(1, 1, &[0.0]);
        let s = kde_score(&samples, &query, 0.5).unwrap();
        assert_relative_eq!(s[(0, 0)], 0.0, epsilon = 1e-13);
    }

    /// Explicit mixture log-density, independent of the score path.
    fn mixture_log_density(h: &[f64], samples: &DMatrix<f64>, gamma: f64) -> f64 {
        let (n, k) = (samples.nrows(), samples.ncols());
        let norm = -(k as f64) * (gamma * (2.0 * std::f64::consts::PI).sqrt()).ln();
        let mut terms: Vec<f64> = Vec::with_capacity(n);
        for j in 0..n {
            let sq: f64 = (0..k)
                .map(|c| (h[c] - samples[(j, c)]).powi(2))
                .sum();
            terms.push(-sq / (2.0 * gamma * gamma) + norm);
        }
        let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln();
        lse - (n as f64).ln()
    }

    #[test]
    fn matches_finite_difference_gradient_of_the_mixture() {
        let samples = randn(5, 2, 1);
        let query = randn(3, 2, 2);
        let gamma = 0.8;
        let s = kde_score(&samples, &query, gamma).unwrap();
        let h = 1e-6;
        for r in 0..query.nrows() {
            for c in 0..2 {
                let mut plus = [query[(r, 0)], query[(r, 1)]];
                let mut minus = plus;
                plus[c] += h;
                minus[c] -= h;
                let fd = (mixture_log_density(&plus, &samples, gamma)
                    - mixture_log_density(&minus, &samples, gamma))
                    / (2.0 * h);
                assert!(
                    (fd - s[(r, c)]).abs() < 1e-5,
                    "fd {fd} vs {} at ({r},{c})",
                    s[(r, c)]
                );
            }
        }
    }

    #[test]
    fn stable_for_distant_queries() {
        // Without log-sum-exp these weights underflow to 0/0.
        let samples = randn(10, 1, 3);
        let query = DMatrix::from_row_slice(1, 1, &[500.0]);
        let s = kde_score(&samples, &query, 0.1).unwrap();
        assert!(s[(0, 0)].is_finite());
        assert!(s[(0, 0)] < 0.0);
    }

    #[test]
    fn scott_bandwidth_shrinks_with_n() {
        let a = scott_bandwidth(&randn(50, 2, 4));
        let b = scott_bandwidth(&randn(5000, 2, 4));
        assert!(b < a);
    }
}
