//! Parametric sinusoid family used as a one-dimensional regression prior.

use super::{SimParams, SimulatorError};

#[derive(Clone, Copy, Debug)]
pub struct SinusoidParams {
    pub amplitude: f64,
    pub frequency: f64,
    pub slope: f64,
}

impl SinusoidParams {
    pub fn from_params(p: &SimParams) -> Result<Self, SimulatorError> {
        Ok(Self {
            amplitude: p.get("amplitude")?,
            frequency: p.get("frequency")?,
            slope: p.get("slope")?,
        })
    }
}

/// `amplitude·sin(frequency·x) + slope·x`.
pub fn sinusoid_function(params: &SinusoidParams, x: f64) -> f64 {
    params.amplitude * (params.frequency * x).sin() + params.slope * x
}
