//! Flat-parameter MLP: forward pass, vector-Jacobian products, and the
//! exact reverse-mode Jacobian.
//!
//! Parameter layout: layers in order, each as a row-major `(out × in)`
//! weight block followed by the bias.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Activation, BnnError, MlpArchitecture};

fn activate(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Tanh => z.tanh(),
        Activation::Swish => z / (1.0 + (-z).exp()),
        Activation::Linear => z,
    }
}

fn activate_grad(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Tanh => {
            let t = z.tanh();
            1.0 - t * t
        }
        Activation::Swish => {
            let s = 1.0 / (1.0 + (-z).exp());
            s + z * s * (1.0 - s)
        }
        Activation::Linear => 1.0,
    }
}

/// Fan-in-scaled init: `W ~ N(0, 1/fan_in)`, biases zero.
pub fn init_params(arch: &MlpArchitecture, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let widths = arch.widths();
    let mut theta = DVector::zeros(arch.param_count());
    let mut offset = 0;
    for l in 1..widths.len() {
        let (fan_in, fan_out) = (widths[l - 1], widths[l]);
        let scale = 1.0 / (fan_in as f64).sqrt();
        for i in 0..fan_out * fan_in {
            let z: f64 = StandardNormal.sample(rng);
            theta[offset + i] = scale * z;
        }
        offset += fan_out * fan_in + fan_out;
    }
    theta
}

fn check_theta(arch: &MlpArchitecture, theta: &DVector<f64>) -> Result<(), BnnError> {
    if theta.len() != arch.param_count() {
        return Err(BnnError::ShapeMismatch {
            expected: arch.param_count(),
            got: theta.len(),
            context: "parameter vector",
        });
    }
    Ok(())
}

fn check_inputs(arch: &MlpArchitecture, x: &DMatrix<f64>) -> Result<(), BnnError> {
    if x.ncols() != arch.input_dim {
        return Err(BnnError::ShapeMismatch {
            expected: arch.input_dim,
            got: x.ncols(),
            context: "input columns",
        });
    }
    Ok(())
}

/// Forward pass of one input row; pre-activations are written per layer when
/// a scratch buffer is supplied (needed for backprop).
fn forward_row(
    arch: &MlpArchitecture,
    theta: &DVector<f64>,
    row: &[f64],
    pre_acts: Option<&mut Vec<Vec<f64>>>,
    post_acts: Option<&mut Vec<Vec<f64>>>,
) -> Vec<f64> {
    let widths = arch.widths();
    let n_layers = widths.len() - 1;
    let mut a: Vec<f64> = row.to_vec();
    let mut pre_store = pre_acts;
    let mut post_store = post_acts;
    if let Some(store) = post_store.as_mut() {
        store.clear();
        store.push(a.clone());
    }
    let mut offset = 0;
    for l in 0..n_layers {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let w = &theta.as_slice()[offset..offset + fan_out * fan_in];
        let b = &theta.as_slice()[offset + fan_out * fan_in..offset + fan_out * fan_in + fan_out];
        let mut z = vec![0.0; fan_out];
        for o in 0..fan_out {
            let wrow = &w[o * fan_in..(o + 1) * fan_in];
            let mut acc = b[o];
            for (wi, ai) in wrow.iter().zip(&a) {
                acc += wi * ai;
            }
            z[o] = acc;
        }
        if let Some(store) = pre_store.as_mut() {
            store.push(z.clone());
        }
        let last = l == n_layers - 1;
        a = if last {
            z
        } else {
            z.iter().map(|&v| activate(arch.activation, v)).collect()
        };
        if let Some(store) = post_store.as_mut() {
            if !last {
                store.push(a.clone());
            }
        }
        offset += fan_out * fan_in + fan_out;
    }
    a
}

/// Deterministic forward pass over all rows of `x` (rows × d_y output).
pub fn mlp_forward(
    arch: &MlpArchitecture,
    theta: &DVector<f64>,
    x: &DMatrix<f64>,
) -> Result<DMatrix<f64>, BnnError> {
    check_theta(arch, theta)?;
    check_inputs(arch, x)?;
    let mut out = DMatrix::zeros(x.nrows(), arch.output_dim);
    let mut row = vec![0.0; x.ncols()];
    for r in 0..x.nrows() {
        for c in 0..x.ncols() {
            row[c] = x[(r, c)];
        }
        let y = forward_row(arch, theta, &row, None, None);
        for (c, v) in y.iter().enumerate() {
            out[(r, c)] = *v;
        }
    }
    Ok(out)
}

/// Backprop one row's output seed into the parameter-gradient accumulator.
fn backprop_row(
    arch: &MlpArchitecture,
    theta: &DVector<f64>,
    pre_acts: &[Vec<f64>],
    post_acts: &[Vec<f64>],
    seed: &[f64],
    grad: &mut DVector<f64>,
) {
    let widths = arch.widths();
    let n_layers = widths.len() - 1;
    // Offsets of each layer's parameter block.
    let mut offsets = Vec::with_capacity(n_layers);
    let mut off = 0;
    for l in 0..n_layers {
        offsets.push(off);
        off += widths[l + 1] * widths[l] + widths[l + 1];
    }

    let mut delta: Vec<f64> = seed.to_vec();
    for l in (0..n_layers).rev() {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let offset = offsets[l];
        let input = &post_acts[l];
        // dW[o][i] += delta[o] * input[i]; db[o] += delta[o]
        for o in 0..fan_out {
            let d = delta[o];
            let wslice = offset + o * fan_in;
            for i in 0..fan_in {
                grad[wslice + i] += d * input[i];
            }
            grad[offset + fan_out * fan_in + o] += d;
        }
        if l > 0 {
            // Propagate through W and the previous layer's activation.
            let w = &theta.as_slice()[offset..offset + fan_out * fan_in];
            let mut prev = vec![0.0; fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                let wrow = &w[o * fan_in..(o + 1) * fan_in];
                for i in 0..fan_in {
                    prev[i] += d * wrow[i];
                }
            }
            let z_prev = &pre_acts[l - 1];
            for i in 0..fan_in {
                prev[i] *= activate_grad(arch.activation, z_prev[i]);
            }
            delta = prev;
        }
    }
}

/// Vector-Jacobian product: outputs plus `Jᵀ·vec(seed)` where `seed` has one
/// row per input row. This is the workhorse of every gradient in training.
pub fn mlp_vjp(
    arch: &MlpArchitecture,
    theta: &DVector<f64>,
    x: &DMatrix<f64>,
    seed: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>), BnnError> {
    check_theta(arch, theta)?;
    check_inputs(arch, x)?;
    if seed.nrows() != x.nrows() || seed.ncols() != arch.output_dim {
        return Err(BnnError::ShapeMismatch {
            expected: x.nrows() * arch.output_dim,
            got: seed.nrows() * seed.ncols(),
            context: "vjp seed",
        });
    }
    let mut out = DMatrix::zeros(x.nrows(), arch.output_dim);
    let mut grad = DVector::zeros(arch.param_count());
    let mut row = vec![0.0; x.ncols()];
    let mut seed_row = vec![0.0; arch.output_dim];
    let mut pre = Vec::new();
    let mut post = Vec::new();
    for r in 0..x.nrows() {
        for c in 0..x.ncols() {
            row[c] = x[(r, c)];
        }
        for c in 0..arch.output_dim {
            seed_row[c] = seed[(r, c)];
        }
        pre.clear();
        let y = forward_row(arch, theta, &row, Some(&mut pre), Some(&mut post));
        for (c, v) in y.iter().enumerate() {
            out[(r, c)] = *v;
        }
        backprop_row(arch, theta, &pre, &post, &seed_row, &mut grad);
    }
    Ok((out, grad))
}

/// Exact reverse-mode Jacobian of the stacked outputs w.r.t. θ, shape
/// `(rows·d_y) × |θ|`; output (r, o) maps to Jacobian row `r·d_y + o`.
pub fn nn_jacobian(
    arch: &MlpArchitecture,
    theta: &DVector<f64>,
    x: &DMatrix<f64>,
) -> Result<DMatrix<f64>, BnnError> {
    check_theta(arch, theta)?;
    check_inputs(arch, x)?;
    let d_y = arch.output_dim;
    let p = arch.param_count();
    let mut jac = DMatrix::zeros(x.nrows() * d_y, p);
    let mut row = vec![0.0; x.ncols()];
    let mut pre = Vec::new();
    let mut post = Vec::new();
    let mut grad = DVector::zeros(p);
    for r in 0..x.nrows() {
        for c in 0..x.ncols() {
            row[c] = x[(r, c)];
        }
        pre.clear();
        forward_row(arch, theta, &row, Some(&mut pre), Some(&mut post));
        for o in 0..d_y {
            let mut seed = vec![0.0; d_y];
            seed[o] = 1.0;
            grad.fill(0.0);
            backprop_row(arch, theta, &pre, &post, &seed, &mut grad);
            for c in 0..p {
                jac[(r * d_y + o, c)] = grad[c];
            }
        }
    }
    Ok(jac)
}
