//! Scalar kernels and bandwidth heuristics shared by the prior process,
//! the score estimators, and the SVGD updates.

use nalgebra::DMatrix;

/// Gaussian kernel value `exp(-||a - b||^2 / (2 bw^2))` between two rows.
pub fn gaussian_rbf(a: &[f64], b: &[f64], bandwidth: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-sq / (2.0 * bandwidth * bandwidth)).exp()
}

/// Squared Euclidean distances between all row pairs of `a` (n×d) and `b` (m×d).
pub fn pairwise_sq_dists(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.nrows();
    let mut out = DMatrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for c in 0..a.ncols() {
                let d = a[(i, c)] - b[(j, c)];
                s += d * d;
            }
            out[(i, j)] = s;
        }
    }
    out
}

/// Median heuristic bandwidth: the median of nonzero pairwise Euclidean
/// distances between rows. Falls back to 1.0 when all rows coincide.
pub fn median_heuristic(rows: &DMatrix<f64>) -> f64 {
    let n = rows.nrows();
    if n < 2 {
        return 1.0;
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut s = 0.0;
            for c in 0..rows.ncols() {
                let d = rows[(i, c)] - rows[(j, c)];
                s += d * d;
            }
            if s > 0.0 {
                dists.push(s.sqrt());
            }
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = dists.len() / 2;
    if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        0.5 * (dists[mid - 1] + dists[mid])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rbf_at_zero_distance_is_one() {
        assert_relative_eq!(gaussian_rbf(&[1.0, 2.0], &[1.0, 2.0], 0.7), 1.0);
    }

    #[test]
    fn median_of_three_collinear_points() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 3.0]);
        // pairwise distances 1, 2, 3 -> median 2
        assert_relative_eq!(median_heuristic(&x), 2.0);
    }

    #[test]
    fn median_falls_back_on_identical_rows() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_relative_eq!(median_heuristic(&x), 1.0);
    }
}
