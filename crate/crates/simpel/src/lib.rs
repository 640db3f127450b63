//! Particle-based Bayesian neural network inference in function space,
//! with stochastic-process priors built from low-fidelity simulators plus
//! a Gaussian-process sim-to-real gap.
//!
//! The crate is organized around the training pipeline:
//!
//! - [`simulators`] — query-access dynamics `g(x, φ)` with parameter priors:
//!   sinusoid, pendulum (low/high fidelity), kinematic bicycle.
//! - [`prior`] — measurement-set sampling, the GP gap process, and the
//!   combined simulator+GP prior sample matrix.
//! - [`score`] — four interchangeable prior-score estimators (Gaussian,
//!   KDE, SSGE, nu-method).
//! - [`bnn`] — MLP particle ensembles, the function-space SVGD update,
//!   weight-space SVGD, MLE/MAP point estimates, and predictive moments.
//! - [`baselines`] — grey-box and system-identification reference methods.
//! - [`eval`] — dataset generation, NLL/RMSE metrics, and learning-curve
//!   experiments.
//! - [`mbrl`] — trajectory-sampling rollouts, a cross-entropy planner, and
//!   offline/episodic model-based RL loops.

pub mod baselines;
pub mod bnn;
pub mod eval;
pub mod kernels;
pub mod mbrl;
pub mod prior;
pub mod rng;
pub mod score;
pub mod simulators;
