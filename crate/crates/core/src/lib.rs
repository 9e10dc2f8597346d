//! Average age of information for G/G/1/1 systems.
//!
//! Three independent routes to the same number:
//!
//! * [`sim`]: a discrete-event simulation of the sawtooth age process;
//! * [`analytic`]: exact expressions for the dropping and preemption-in-service
//!   disciplines, evaluated by Rao–Blackwellised Monte Carlo and quadrature;
//! * [`bounds`]: closed-form and semi-analytic upper bounds.
//!
//! [`experiments`] sweeps a parameter grid through any subset of these and
//! writes CSV tables and SVG charts.

pub mod analytic;
pub mod bounds;
pub mod distributions;
pub mod error;
pub mod experiments;
pub mod quadrature;
pub mod rng;
pub mod sim;

pub use distributions::{DistributionSpec, GridSpec, Law, MrlClassification, MrlVerdict};
pub use error::{AoiError, Result};
