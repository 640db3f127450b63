//! Nu-method score estimation with a curl-free matrix kernel.
//!
//! The matrix kernel is `K(x, y) = -∇²φ(x - y)` for a Gaussian `φ`, so every
//! function in its RKHS is a gradient field. The regularized inverse of the
//! empirical kernel integral operator is approximated by the accelerated
//! Landweber (nu-method) polynomial recursion applied to the divergence term
//! `-(1/N) Σ_j div K(h_j, ·)`.

use nalgebra::DMatrix;

use super::{check_shapes, ScoreError, ScoreEstimate};
use crate::kernels::median_heuristic;

const DIVERGENCE_LIMIT: f64 = 1e6;

/// The empirical operator `(L f)(y) = (1/N) Σ_j K(h_j, y) f(h_j)` evaluated
/// on the joint point set (samples stacked above queries). Points are held
/// as flat row-major slices and the kernel values are cached sample-fastest
/// so the inner loop walks contiguous memory.
struct CurlFreeOp {
    n: usize,
    p: usize,
    d: usize,
    /// Row-major n×d sample coordinates.
    samples: Vec<f64>,
    /// Row-major p×d joint coordinates: samples then queries.
    joint: Vec<f64>,
    /// φ(x_r − h_j)/N, laid out per joint row r: `phi[r*n + j]`.
    phi: Vec<f64>,
    sigma_sq: f64,
}

impl CurlFreeOp {
    fn new(samples: &DMatrix<f64>, query: &DMatrix<f64>, sigma: f64) -> Self {
        let (n, d) = (samples.nrows(), samples.ncols());
        let p = n + query.nrows();
        let mut s = vec![0.0; n * d];
        for r in 0..n {
            for c in 0..d {
                s[r * d + c] = samples[(r, c)];
            }
        }
        let mut joint = vec![0.0; p * d];
        joint[..n * d].copy_from_slice(&s);
        for r in 0..query.nrows() {
            for c in 0..d {
                joint[(n + r) * d + c] = query[(r, c)];
            }
        }
        let sigma_sq = sigma * sigma;
        let inv_n = 1.0 / n as f64;
        let mut phi = vec![0.0; p * n];
        for r in 0..p {
            let xr = &joint[r * d..(r + 1) * d];
            for j in 0..n {
                let hj = &s[j * d..(j + 1) * d];
                let mut sq = 0.0;
                for c in 0..d {
                    let dv = xr[c] - hj[c];
                    sq += dv * dv;
                }
                phi[r * n + j] = (-sq / (2.0 * sigma_sq)).exp() * inv_n;
            }
        }
        Self {
            n,
            p,
            d,
            samples: s,
            joint,
            phi,
            sigma_sq,
        }
    }

    /// Apply L to values `v` at the samples (row-major n×d), producing
    /// values at the first `rows` joint points.
    fn apply(&self, v: &[f64], rows: usize) -> Vec<f64> {
        let (n, d) = (self.n, self.d);
        let s2 = self.sigma_sq;
        let s4 = s2 * s2;
        let mut out = vec![0.0; rows * d];
        let mut acc = vec![0.0; d];
        for r in 0..rows {
            let xr = &self.joint[r * d..(r + 1) * d];
            let phi_r = &self.phi[r * n..(r + 1) * n];
            acc.iter_mut().for_each(|a| *a = 0.0);
            for j in 0..n {
                let w = phi_r[j];
                let hj = &self.samples[j * d..(j + 1) * d];
                let vj = &v[j * d..(j + 1) * d];
                // δ = x_r − h_j
                let mut dot = 0.0;
                for c in 0..d {
                    dot += (xr[c] - hj[c]) * vj[c];
                }
                let wd = w * dot / s4;
                let ws = w / s2;
                for c in 0..d {
                    acc[c] += ws * vj[c] - wd * (xr[c] - hj[c]);
                }
            }
            out[r * d..(r + 1) * d].copy_from_slice(&acc);
        }
        out
    }

    /// `ξ(y) = (1/N) Σ_j (h_j − y)·[(d+2) − r²/σ²]·φ/σ⁴` at all joint points.
    fn divergence_target(&self) -> Vec<f64> {
        let (n, d, p) = (self.n, self.d, self.p);
        let s2 = self.sigma_sq;
        let s4 = s2 * s2;
        let mut out = vec![0.0; p * d];
        for r in 0..p {
            let xr = &self.joint[r * d..(r + 1) * d];
            let phi_r = &self.phi[r * n..(r + 1) * n];
            for j in 0..n {
                let hj = &self.samples[j * d..(j + 1) * d];
                let mut sq = 0.0;
                for c in 0..d {
                    let dv = hj[c] - xr[c];
                    sq += dv * dv;
                }
                let w = phi_r[j] * ((d as f64 + 2.0) - sq / s2) / s4;
                for c in 0..d {
                    out[r * d + c] += w * (hj[c] - xr[c]);
                }
            }
        }
        out
    }

    /// Largest eigenvalue of the sample-block operator via power iteration
    /// (deterministic all-ones start).
    fn operator_norm(&self) -> f64 {
        let (n, d) = (self.n, self.d);
        let mut v = vec![1.0; n * d];
        let mut lambda = 0.0;
        for _ in 0..30 {
            let w = self.apply(&v, n);
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-300 {
                return 0.0;
            }
            let vw: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
            let vv: f64 = v.iter().map(|x| x * x).sum();
            lambda = vw / vv;
            v = w;
            v.iter_mut().for_each(|x| *x /= norm);
        }
        lambda.abs()
    }
}

/// Nu-method score estimate at the query rows. `t = 0` is defined as the
/// zero score (the base case of the iteration).
pub fn nu_method_score(
    samples: &DMatrix<f64>,
    query: &DMatrix<f64>,
    t: usize,
    nu: f64,
    bandwidth: Option<f64>,
) -> Result<ScoreEstimate, ScoreError> {
    check_shapes(samples, query)?;
    if !(nu > 0.0) {
        return Err(ScoreError::InvalidConfig(format!("nu must be > 0, got {nu}")));
    }
    let (m, d) = (query.nrows(), query.ncols());
    if t == 0 {
        return Ok(DMatrix::zeros(m, d));
    }
    let sigma = match bandwidth {
        Some(b) => b,
        None => median_heuristic(samples),
    };

    let op = CurlFreeOp::new(samples, query, sigma);
    let n = op.n;
    let p = n + m;

    let rho = op.operator_norm();
    if rho <= 0.0 {
        return Err(ScoreError::DegenerateGram);
    }
    let scale = 1.05 * rho;

    let mut target = op.divergence_target();
    target.iter_mut().for_each(|v| *v /= scale);

    // Accelerated Landweber with the canonical nu-method schedule:
    //   s_1 = ω₁·b,  ω₁ = (4ν+2)/(4ν+1)
    //   s_t = s_{t−1} + u_t (s_{t−1} − s_{t−2}) + ω_t (b − A s_{t−1})
    let omega1 = (4.0 * nu + 2.0) / (4.0 * nu + 1.0);
    let mut prev = vec![0.0; p * d];
    let mut current: Vec<f64> = target.iter().map(|v| v * omega1).collect();

    for step in 2..=t {
        let tt = step as f64;
        let u = ((tt - 1.0) * (2.0 * tt - 3.0) * (2.0 * tt + 2.0 * nu - 1.0))
            / ((tt + 2.0 * nu - 1.0) * (2.0 * tt + 4.0 * nu - 1.0) * (2.0 * tt + 2.0 * nu - 3.0));
        let omega = 4.0 * (2.0 * tt + 2.0 * nu - 1.0) * (tt + nu - 1.0)
            / ((tt + 2.0 * nu - 1.0) * (2.0 * tt + 4.0 * nu - 1.0));

        let applied = op.apply(&current[..n * d], p);
        let mut next = vec![0.0; p * d];
        let mut max_abs = 0.0f64;
        for i in 0..p * d {
            let v = current[i]
                + u * (current[i] - prev[i])
                + omega * (target[i] - applied[i] / scale);
            max_abs = max_abs.max(v.abs());
            next[i] = v;
        }
        if !max_abs.is_finite() || max_abs > DIVERGENCE_LIMIT {
            return Err(ScoreError::IterationDiverged {
                limit: DIVERGENCE_LIMIT,
            });
        }
        prev = current;
        current = next;
    }

    Ok(DMatrix::from_fn(m, d, |r, c| current[(n + r) * d + c]))
}
