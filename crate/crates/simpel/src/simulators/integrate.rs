//! Classical fixed-step RK4 integration of the simulator derivative fields.

use super::{SimParams, SimulatorError, SimulatorModel, DIVERGENCE_LIMIT};

/// One classical RK4 step of the model's derivative field. Deterministic;
/// errors if the resulting state leaves the divergence envelope.
pub fn integrate_step(
    model: &SimulatorModel,
    params: &SimParams,
    state: &[f64],
    action: &[f64],
    dt: f64,
) -> Result<Vec<f64>, SimulatorError> {
    if !(dt > 0.0) {
        return Err(SimulatorError::InvalidParam {
            name: "dt".to_string(),
            reason: format!("must be > 0, got {dt}"),
        });
    }
    let n = state.len();
    let k1 = model.derivative(state, action, params)?;

    let mut tmp = vec![0.0; n];
    for i in 0..n {
        tmp[i] = state[i] + 0.5 * dt * k1[i];
    }
    let k2 = model.derivative(&tmp, action, params)?;

    for i in 0..n {
        tmp[i] = state[i] + 0.5 * dt * k2[i];
    }
    let k3 = model.derivative(&tmp, action, params)?;

    for i in 0..n {
        tmp[i] = state[i] + dt * k3[i];
    }
    let k4 = model.derivative(&tmp, action, params)?;

    let mut next = vec![0.0; n];
    for i in 0..n {
        next[i] = state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if !next[i].is_finite() || next[i].abs() > DIVERGENCE_LIMIT {
            return Err(SimulatorError::Divergence);
        }
    }
    Ok(next)
}
