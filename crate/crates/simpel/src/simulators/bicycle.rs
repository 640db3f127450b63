//! Single-track kinematic bicycle with slip angle.
//!
//! State `[x, y, heading, v]`, action `[steering, throttle]`. The slip
//! angle `β = arctan(tan(steering)/2)` places the reference point at the
//! geometric center of the wheelbase.

use super::{SimParams, SimulatorError};

/// Linear drag coefficient bounding the attainable speed.
pub const BICYCLE_DRAG: f64 = 0.1;

/// Steering command magnitude limit, rad.
pub const MAX_STEERING: f64 = std::f64::consts::FRAC_PI_3;

#[derive(Clone, Copy, Debug)]
pub struct BicycleParams {
    pub wheelbase: f64,
    pub motor_gain: f64,
}

impl BicycleParams {
    pub fn from_params(p: &SimParams) -> Result<Self, SimulatorError> {
        let out = Self {
            wheelbase: p.get("wheelbase")?,
            motor_gain: p.get("motor_gain")?,
        };
        for (name, v) in [("wheelbase", out.wheelbase), ("motor_gain", out.motor_gain)] {
            if !(v > 0.0) {
                return Err(SimulatorError::InvalidParam {
                    name: name.to_string(),
                    reason: format!("must be strictly positive, got {v}"),
                });
            }
        }
        Ok(out)
    }
}

/// `[v·cos(θ+β), v·sin(θ+β), (v/ℓ)·sin(β), gain·throttle − drag·v]`.
pub fn bicycle_derivative(
    state: &[f64; 4],
    action: &[f64; 2],
    params: &BicycleParams,
) -> Result<[f64; 4], SimulatorError> {
    if state.iter().chain(action.iter()).any(|v| !v.is_finite()) {
        return Err(SimulatorError::InvalidInput("bicycle_derivative"));
    }
    let steering = action[0];
    if steering.abs() > MAX_STEERING + 1e-12 {
        return Err(SimulatorError::SteeringOutOfRange(steering));
    }
    let (heading, v) = (state[2], state[3]);
    let beta = (steering.tan() / 2.0).atan();
    Ok([
        v * (heading + beta).cos(),
        v * (heading + beta).sin(),
        v / params.wheelbase * beta.sin(),
        params.motor_gain * action[1] - BICYCLE_DRAG * v,
    ])
}
