//! Gaussian moment-matching score: fit mean and covariance, score the
//! closed-form normal density.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{check_shapes, ScoreError, ScoreEstimate};

/// Unbiased sample mean and covariance of the rows.
pub(crate) fn fit_moments(samples: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (n, k) = (samples.nrows(), samples.ncols());
    let mean = DVector::from_fn(k, |c, _| samples.column(c).mean());
    let mut cov = DMatrix::zeros(k, k);
    for r in 0..n {
        let d = DVector::from_fn(k, |c, _| samples[(r, c)] - mean[c]);
        cov.syger(1.0, &d, &d, 1.0);
    }
    cov /= (n - 1) as f64;
    cov.fill_upper_triangle_with_lower_triangle();
    (mean, cov)
}

/// Score of the fitted normal: `-(Σ + ηI)⁻¹ (h − μ)` per query row.
///
/// `nugget = None` uses the default `η = 1e-4·trace(Σ)/k`, which keeps the
/// estimator well-defined in the common N < k regime where Σ is singular.
pub fn gaussian_score(
    samples: &DMatrix<f64>,
    query: &DMatrix<f64>,
    nugget: Option<f64>,
) -> Result<ScoreEstimate, ScoreError> {
    check_shapes(samples, query)?;
    let k = samples.ncols();
    let (mean, mut cov) = fit_moments(samples);
    let eta = nugget.unwrap_or_else(|| 1e-4 * cov.trace() / k as f64);
    for i in 0..k {
        cov[(i, i)] += eta;
    }
    let chol = Cholesky::new(cov).ok_or(ScoreError::SingularCovariance { nugget: eta })?;

    let mut out = DMatrix::zeros(query.nrows(), k);
    for r in 0..query.nrows() {
        let centered = DVector::from_fn(k, |c, _| query[(r, c)] - mean[c]);
        let solved = chol.solve(&centered);
        for c in 0..k {
            out[(r, c)] = -solved[c];
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
        let mut rng = stream(seed, "gaussian-score", 0);
        DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
    }

    /// Independent oracle: log N(h | μ, Σ+ηI) via a fresh Cholesky solve.
    fn log_density(h: &DVector<f64>, mean: &DVector<f64>, cov_eta: &DMatrix<f64>) -> f64 {
        let chol = Cholesky::new(cov_eta.clone()).unwrap();
        let d = h - mean;
        let solved = chol.solve(&d);
        let log_det: f64 = (0..cov_eta.nrows())
            .map(|i| chol.l()[(i, i)].ln())
            .sum::<f64>()
            * 2.0;
        -0.5 * d.dot(&solved)
            - 0.5 * log_det
            - 0.5 * cov_eta.nrows() as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    #[test]
    fn score_at_the_fitted_mean_is_zero() {
        let samples = randn(64, 4, 1);
        let (mean, _) = fit_moments(&samples);
        let query = DMatrix::from_fn(1, 4, |_, c| mean[c]);
        let s = gaussian_score(&samples, &query, None).unwrap();
        for v in s.iter() {
            assert_relative_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn standard_normal_fit_scores_minus_h() {
        // Construct samples whose fitted moments are exactly μ=0, Σ=I by
        // symmetrizing: for each z include -z, then whiten.
        let half = randn(128, 2, 2);
        let mut rows = Vec::new();
        for r in 0..half.nrows() {
            rows.push([half[(r, 0)], half[(r, 1)]]);
            rows.push([-half[(r, 0)], -half[(r, 1)]]);
        }
        let raw = DMatrix::from_fn(rows.len(), 2, |r, c| rows[r][c]);
        let (_, cov) = fit_moments(&raw);
        let inv_l = Cholesky::new(cov).unwrap().l().try_inverse().unwrap();
        let whitened = &raw * inv_l.transpose();
        let (mean_w, cov_w) = fit_moments(&whitened);
        assert!(mean_w.norm() < 1e-12);
        assert!((cov_w - DMatrix::identity(2, 2)).norm() < 1e-10);

        let query = DMatrix::from_row_slice(2, 2, &[0.7, -1.1, 0.0, 2.0]);
        let s = gaussian_score(&whitened, &query, Some(0.0)).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert_relative_eq!(s[(r, c)], -query[(r, c)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn matches_finite_difference_gradient_of_the_log_density() {
        let samples = randn(40, 3, 3);
        let query = randn(5, 3, 4);
        let s = gaussian_score(&samples, &query, None).unwrap();

        let (mean, mut cov) = fit_moments(&samples);
        let eta = 1e-4 * cov.trace() / 3.0;
        for i in 0..3 {
            cov[(i, i)] += eta;
        }
        let h = 1e-6;
        for r in 0..query.nrows() {
            let q = DVector::from_fn(3, |c, _| query[(r, c)]);
            for c in 0..3 {
                let mut plus = q.clone();
                plus[c] += h;
                let mut minus = q.clone();
                minus[c] -= h;
                let fd = (log_density(&plus, &mean, &cov) - log_density(&minus, &mean, &cov))
                    / (2.0 * h);
                assert!(
                    (fd - s[(r, c)]).abs() < 1e-5,
                    "fd {fd} vs score {} at ({r},{c})",
                    s[(r, c)]
                );
            }
        }
    }

    #[test]
    fn scale_consistency_with_default_nugget() {
        // Rescaling samples and queries by c rescales the score by 1/c
        // exactly: μ, Σ, and the default nugget all transform covariantly.
        let samples = randn(30, 3, 5);
        let query = randn(4, 3, 6);
        let c = 3.7;
        let s1 = gaussian_score(&samples, &query, None).unwrap();
        let s2 = gaussian_score(&(&samples * c), &(&query * c), None).unwrap();
        for (a, b) in s1.iter().zip(s2.iter()) {
            assert_relative_eq!(*a / c, *b, epsilon = 1e-10, max_relative = 1e-8);
        }
    }

    #[test]
    fn singular_covariance_reports_nugget_advice() {
        // Identical samples with a zero nugget cannot be inverted.
        let samples = DMatrix::from_fn(5, 2, |_, _| 1.0);
        let query = DMatrix::zeros(1, 2);
        let err = gaussian_score(&samples, &query, Some(0.0)).unwrap_err();
        assert!(matches!(err, ScoreError::SingularCovariance { .. }));
    }
}
