//! Spectral Stein gradient estimator.
//!
//! Nyström eigendecomposition of the Gaussian-kernel Gram matrix over the
//! samples, score expansion in the leading eigenfunctions with spectral
//! cut-off regularization `g_λ(σ) = 1[σ ≥ λ]·σ⁻¹`, and Nyström extension
//! for out-of-sample queries.

use nalgebra::{DMatrix, DVector};

use super::{check_shapes, ScoreError, ScoreEstimate};
use crate::kernels::{median_heuristic, pairwise_sq_dists};

/// Which Gram eigenpairs to keep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SsgeCutoff {
    /// Keep the top-J eigenvalues by count.
    Count(usize),
    /// Keep eigenvalues `σ ≥ λ`.
    Threshold(f64),
    /// Keep the smallest leading set capturing this fraction of the
    /// eigenvalue mass. Inverting eigenvalues below the mass shoulder
    /// amplifies sampling noise through `1/λ²`, so this is the default
    /// (at 0.95) rather than a count rule.
    EnergyFraction(f64),
}

pub fn ssge_score(
    samples: &DMatrix<f64>,
    query: &DMatrix<f64>,
    cutoff: SsgeCutoff,
    bandwidth: Option<f64>,
) -> Result<ScoreEstimate, ScoreError> {
    check_shapes(samples, query)?;
    let (n, k) = (samples.nrows(), samples.ncols());
    match cutoff {
        SsgeCutoff::Count(j) if j > n => {
            return Err(ScoreError::InvalidConfig(format!(
                "eigen_count {j} exceeds sample count {n}"
            )));
        }
        SsgeCutoff::EnergyFraction(f) if !(f > 0.0 && f <= 1.0) => {
            return Err(ScoreError::InvalidConfig(format!(
                "energy fraction must be in (0, 1], got {f}"
            )));
        }
        _ => {}
    }
    let sigma = match bandwidth {
        Some(b) => b,
        None => median_heuristic(samples),
    };
    let sigma_sq = sigma * sigma;

    let mut gram = pairwise_sq_dists(samples, samples);
    gram.apply(|v| *v = (-*v / (2.0 * sigma_sq)).exp());

    let eig = gram.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let lambda_max = eig.eigenvalues[order[0]];
    if !(lambda_max > 0.0) {
        return Err(ScoreError::DegenerateGram);
    }
    // Floor below which eigendirections are numerically unresolved.
    let tiny = 1e-12 * lambda_max;
    let kept: Vec<usize> = match cutoff {
        SsgeCutoff::Count(j) => order
            .iter()
            .take(j)
            .copied()
            .filter(|&i| eig.eigenvalues[i] > tiny)
            .collect(),
        SsgeCutoff::Threshold(l) => order
            .iter()
            .copied()
            .filter(|&i| eig.eigenvalues[i] >= l && eig.eigenvalues[i] > tiny)
            .collect(),
        SsgeCutoff::EnergyFraction(f) => {
            let total: f64 = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).sum();
            let mut mass = 0.0;
            let mut kept = Vec::new();
            for &i in &order {
                if eig.eigenvalues[i] <= tiny || mass >= f * total {
                    break;
                }
                mass += eig.eigenvalues[i];
                kept.push(i);
            }
            kept
        }
    };
    if kept.is_empty() {
        return Err(ScoreError::DegenerateGram);
    }

    // β_{jd} = -(1/(√N λ_j)) Σ_m (G_d u_j)_m with
    // G_d[m,m'] = -(x_{m,d} - x_{m',d})/σ² · K[m,m'];
    // Σ_m G_d[m,m'] reduces to a column sum v_d, so β_{jd} = -(v_d·u_j)/(√N λ_j).
    let mut col_sums: DMatrix<f64> = DMatrix::zeros(n, k);
    for mp in 0..n {
        for m in 0..n {
            let kv = gram[(m, mp)];
            for d in 0..k {
                col_sums[(mp, d)] -= (samples[(m, d)] - samples[(mp, d)]) / sigma_sq * kv;
            }
        }
    }
    let sqrt_n = (n as f64).sqrt();
    let mut beta = DMatrix::zeros(kept.len(), k);
    for (row, &j) in kept.iter().enumerate() {
        let u_j = eig.eigenvectors.column(j);
        let lambda_j = eig.eigenvalues[j];
        for d in 0..k {
            let dot: f64 = (0..n).map(|m| col_sums[(m, d)] * u_j[m]).sum();
            beta[(row, d)] = -dot / (sqrt_n * lambda_j);
        }
    }

    // Nyström extension: ψ_j(q) = (√N/λ_j) Σ_m k(q, x_m) u_{jm}.
    let mut k_qs = pairwise_sq_dists(query, samples);
    k_qs.apply(|v| *v = (-*v / (2.0 * sigma_sq)).exp());
    let mut psi_q = DMatrix::zeros(query.nrows(), kept.len());
    for (col, &j) in kept.iter().enumerate() {
        let u_j: DVector<f64> = eig.eigenvectors.column(j).into();
        let proj = &k_qs * &u_j;
        let scale = sqrt_n / eig.eigenvalues[j];
        for r in 0..query.nrows() {
            psi_q[(r, col)] = scale * proj[r];
        }
    }

    Ok(&psi_q * &beta)
}
