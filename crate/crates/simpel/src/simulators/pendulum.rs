//! Torque-driven pendulum dynamics.
//!
//! State `[φ, φ̇]` with `φ = 0` the upright (unstable) equilibrium; the
//! motor applies torque `C_m · u`.

use super::{SimParams, SimulatorError, GRAVITY};

#[derive(Clone, Copy, Debug)]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    pub motor_gain: f64,
    pub inertia: f64,
}

impl PendulumParams {
    pub fn from_params(p: &SimParams) -> Result<Self, SimulatorError> {
        let out = Self {
            mass: p.get("m")?,
            length: p.get("l")?,
            motor_gain: p.get("c_m")?,
            inertia: p.get("i")?,
        };
        for (name, v) in [
            ("m", out.mass),
            ("l", out.length),
            ("c_m", out.motor_gain),
            ("i", out.inertia),
        ] {
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

/// `[φ̇, (m g l sin φ + C_m u) / I]`.
pub fn pendulum_derivative(
    state: &[f64; 2],
    u: f64,
    params: &PendulumParams,
) -> Result<[f64; 2], SimulatorError> {
    if !(state[0].is_finite() && state[1].is_finite() && u.is_finite()) {
        return Err(SimulatorError::InvalidInput("pendulum_derivative"));
    }
    let torque = params.mass * GRAVITY * params.length * state[0].sin() + params.motor_gain * u;
    Ok([state[1], torque / params.inertia])
}

/// Low-fidelity derivative with a viscous damping term `-b·φ̇` on the
/// angular acceleration.
pub fn pendulum_high_fidelity_derivative(
    state: &[f64; 2],
    u: f64,
    params: &PendulumParams,
    damping: f64,
) -> Result<[f64; 2], SimulatorError> {
    if damping < 0.0 {
        return Err(SimulatorError::InvalidParam {
            name: "damping".to_string(),
            reason: format!("must be >= 0, got {damping}"),
        });
    }
    let mut d = pendulum_derivative(state, u, params)?;
    d[1] -= damping * state[1];
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_params() -> PendulumParams {
        PendulumParams {
            mass: 1.0,
            length: 1.0,
            motor_gain: 2.0,
            inertia: 1.0,
        }
    }

    #[test]
    fn rest_at_origin_with_zero_input() {
        let d = pendulum_derivative(&[0.0, 0.0], 0.0, &unit_params()).unwrap();
        assert_eq!(d, [0.0, 0.0]);
    }

    #[test]
    fn horizontal_pendulum_unit_mgl() {
        // φ = π/2, u = 0, m·g·l = 1, I = 1 -> [0, 1].
        let p = PendulumParams {
            mass: 1.0 / GRAVITY,
            length: 1.0,
            motor_gain: 1.0,
            inertia: 1.0,
        };
        let d = pendulum_derivative(&[std::f64::consts::FRAC_PI_2, 0.0], 0.0, &p).unwrap();
        assert_relative_eq!(d[0], 0.0);
        assert_relative_eq!(d[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn hand_evaluated_case() {
        // state [0.3, 0.5], u = 0.2, m=1, l=1, C_m=2, I=1:
        // acceleration 9.81·sin(0.3) + 0.4 = 3.2990532273477413.
        let d = pendulum_derivative(&[0.3, 0.5], 0.2, &unit_params()).unwrap();
        assert_relative_eq!(d[0], 0.5);
        assert_relative_eq!(d[1], 3.299_053_227_347_741_3, epsilon = 1e-12);
    }

    #[test]
    fn zero_damping_reduces_to_low_fidelity() {
        let lo = pendulum_derivative(&[0.4, -1.2], 0.7, &unit_params()).unwrap();
        let hi =
            pendulum_high_fidelity_derivative(&[0.4, -1.2], 0.7, &unit_params(), 0.0).unwrap();
        assert_eq!(lo, hi);
    }

    #[test]
    fn damping_only_term_at_origin() {
        // state [0, 1], u = 0, damping 0.1, I = 1 -> angular acceleration -0.1.
        let d =
            pendulum_high_fidelity_derivative(&[0.0, 1.0], 0.0, &unit_params(), 0.1).unwrap();
        assert_relative_eq!(d[1], -0.1, epsilon = 1e-14);
    }

    #[test]
    fn hand_evaluated_high_fidelity_case() {
        // Low-fidelity value minus 0.1·0.5 = 3.2490532273477413.
        let d =
            pendulum_high_fidelity_derivative(&[0.3, 0.5], 0.2, &unit_params(), 0.1).unwrap();
        assert_relative_eq!(d[1], 3.249_053_227_347_741_3, epsilon = 1e-12);
    }

    #[test]
    fn odd_symmetry_about_origin() {
        // f([-φ, 0], -u) = -f([φ, 0], u)
        let p = unit_params();
        for (phi, u) in [(0.3, 0.2), (1.1, -0.6), (2.9, 0.0)] {
            let a = pendulum_derivative(&[phi, 0.0], u, &p).unwrap();
            let b = pendulum_derivative(&[-phi, 0.0], -u, &p).unwrap();
            assert_relative_eq!(a[0], -b[0]);
            assert_relative_eq!(a[1], -b[1], epsilon = 1e-14);
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        assert!(pendulum_derivative(&[f64::NAN, 0.0], 0.0, &unit_params()).is_err());
        assert!(pendulum_derivative(&[0.0, 0.0], f64::INFINITY, &unit_params()).is_err());
    }

    #[test]
    fn nonpositive_params_rejected() {
        let p = SimParams::new(&[("m", 0.0), ("l", 1.0), ("c_m", 1.0), ("i", 1.0)]);
        assert!(PendulumParams::from_params(&p).is_err());
    }
}
