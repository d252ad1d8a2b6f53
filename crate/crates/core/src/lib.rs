//! Numerical laboratory for finite-time aggregation in a radially symmetric
//! chemotaxis model with flux-limited diffusion and drift.
//!
//! The workflow mirrors the analysis it implements:
//!
//! 1. [`params`] — problem data, root finders (profile root, critical mass,
//!    sensitivity threshold) and deterministic selection of every constant
//!    the comparison construction needs, with per-inequality slack reports.
//! 2. [`subsolution`] — the pieced analytic comparison profile, its time
//!    coefficients, the collapse function and generated initial data.
//! 3. [`operator`] — the scalar parabolic operator on the mass-accumulation
//!    variable, and grid sign certificates for the comparison profile.
//! 4. [`solver`] — method-of-lines integration of the transformed problem
//!    with adaptive explicit and semi-implicit steppers and threshold-based
//!    blow-up detection.
//! 5. [`comparison`] — runtime ordering checks `w ≥ w̲` and the gradient
//!    lower-bound series `λA(t)/B(t)`.
//! 6. [`cli`] + [`config`] — the batch front end and its file formats.

pub mod comparison;
pub mod config;
pub mod interp;
pub mod operator;
pub mod params;
pub mod solver;
pub mod subsolution;
pub mod cli;
