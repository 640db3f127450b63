//! Box-constrained Nelder–Mead via a sigmoid reparameterization.
//!
//! The simplex runs in an unconstrained space and every candidate maps into
//! the box through `lo + (hi − lo)·sigmoid(z)`, so iterates always satisfy
//! the bounds. Degenerate dimensions (lo == hi) are pinned and excluded
//! from the search space.

/// Minimizes `f` over the box, starting from `start` (inside the box).
/// Returns the best point and its value; `trace` receives the best-so-far
/// objective after every function evaluation.
pub fn nelder_mead_box(
    f: &dyn Fn(&[f64]) -> f64,
    bounds: &[(f64, f64)],
    start: &[f64],
    max_evals: usize,
    trace: &mut Vec<f64>,
) -> (Vec<f64>, f64) {
    let free: Vec<usize> = bounds
        .iter()
        .enumerate()
        .filter(|(_, (lo, hi))| hi > lo)
        .map(|(i, _)| i)
        .collect();
    let n = free.len();

    let decode = |z: &[f64]| -> Vec<f64> {
        let mut x: Vec<f64> = bounds.iter().map(|(lo, _)| *lo).collect();
        for (zi, &i) in z.iter().zip(&free) {
            let (lo, hi) = bounds[i];
            x[i] = lo + (hi - lo) / (1.0 + (-zi).exp());
        }
        x
    };
    let encode_start = || -> Vec<f64> {
        free.iter()
            .map(|&i| {
                let (lo, hi) = bounds[i];
                let frac = ((start[i] - lo) / (hi - lo)).clamp(1e-6, 1.0 - 1e-6);
                (frac / (1.0 - frac)).ln()
            })
            .collect()
    };

    let mut evals = 0usize;
    let mut best_value = f64::INFINITY;
    let mut best_point = decode(&encode_start());
    let eval = |z: &[f64],
                    evals: &mut usize,
                    best_value: &mut f64,
                    best_point: &mut Vec<f64>,
                    trace: &mut Vec<f64>|
     -> f64 {
        let x = decode(z);
        let v = f(&x);
        *evals += 1;
        if v < *best_value {
            *best_value = v;
            *best_point = x;
        }
        trace.push(*best_value);
        v
    };

    if n == 0 {
        let v = eval(&[], &mut evals, &mut best_value, &mut best_point, trace);
        return (best_point, v);
    }

    // Initial simplex: start plus one perturbed vertex per free dimension.
    let z0 = encode_start();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(&z0, &mut evals, &mut best_value, &mut best_point, trace);
    simplex.push((z0.clone(), v0));
    for i in 0..n {
        let mut z = z0.clone();
        z[i] += 0.75;
        let v = eval(&z, &mut evals, &mut best_value, &mut best_point, trace);
        simplex.push((z, v));
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let spread = simplex[n].1 - simplex[0].1;
        if spread.abs() < 1e-12 && spread.is_finite() {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(z, _)| z[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].0.clone();

        let reflect: Vec<f64> = (0..n)
            .map(|j| centroid[j] + alpha * (centroid[j] - worst[j]))
            .collect();
        let fr = eval(&reflect, &mut evals, &mut best_value, &mut best_point, trace);

        if fr < simplex[0].1 {
            let expand: Vec<f64> = (0..n)
                .map(|j| centroid[j] + gamma * (centroid[j] - worst[j]))
                .collect();
            let fe = eval(&expand, &mut evals, &mut best_value, &mut best_point, trace);
            simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflect, fr);
        } else {
            let contract: Vec<f64> = (0..n)
                .map(|j| centroid[j] + rho * (worst[j] - centroid[j]))
                .collect();
            let fc = eval(&contract, &mut evals, &mut best_value, &mut best_point, trace);
            if fc < simplex[n].1 {
                simplex[n] = (contract, fc);
            } else {
                // Shrink toward the best vertex.
                let best_z = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    for j in 0..n {
                        vertex.0[j] = best_z[j] + sigma * (vertex.0[j] - best_z[j]);
                    }
                    vertex.1 =
                        eval(&vertex.0, &mut evals, &mut best_value, &mut best_point, trace);
                    if evals >= max_evals {
                        break;
                    }
                }
            }
        }
    }
    (best_point, best_value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_a_bounded_quadratic() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + (x[1] + 0.7).powi(2);
        let mut trace = Vec::new();
        let (x, v) = nelder_mead_box(
            &f,
            &[(-2.0, 2.0), (-2.0, 2.0)],
            &[1.0, 1.0],
            400,
            &mut trace,
        );
        assert!(v < 1e-8, "value {v}");
        assert!((x[0] - 0.3).abs() < 1e-3 && (x[1] + 0.7).abs() < 1e-3);
    }

    #[test]
    fn optimum_on_the_boundary_is_approached() {
        // Unconstrained minimum at 3.0, box caps at 1.0.
        let f = |x: &[f64]| (x[0] - 3.0).powi(2);
        let mut trace = Vec::new();
        let (x, _) = nelder_mead_box(&f, &[(-1.0, 1.0)], &[0.0], 300, &mut trace);
        assert!(x[0] > 0.99, "x {}", x[0]);
    }

    #[test]
    fn degenerate_box_evaluates_once() {
        let f = |x: &[f64]| x[0] * x[0];
        let mut trace = Vec::new();
        let (x, v) = nelder_mead_box(&f, &[(2.0, 2.0)], &[2.0], 100, &mut trace);
        assert_eq!(x, vec![2.0]);
        assert_eq!(v, 4.0);
        assert_eq!(trace.len(), 1);
    }

    #[test]
    fn trace_is_monotonically_nonincreasing() {
        let f = |x: &[f64]| x[0].sin() + x[1].powi(2);
        let mut trace = Vec::new();
        nelder_mead_box(
            &f,
            &[(-3.0, 3.0), (-3.0, 3.0)],
            &[2.5, -2.0],
            250,
            &mut trace,
        );
        for w in trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn iterates_respect_bounds() {
        let f = |x: &[f64]| {
            assert!((0.5..=1.5).contains(&x[0]), "out of bounds: {}", x[0]);
            (x[0] - 1.1).powi(2)
        };
        let mut trace = Vec::new();
        nelder_mead_box(&f, &[(0.5, 1.5)], &[0.6], 200, &mut trace);
    }
}
