//! Numerical laboratory for the global arrow of time.
//!
//! The crate demonstrates, at desk scale, that time-symmetric cosmological
//! solutions form a measure-zero set, and translates the global asymmetry
//! into local energy-flux terms:
//!
//! - [`odecore`]: adaptive integration, events, flow-reversal defects;
//! - [`pendulum`]: reversible vs irreversible solutions of a time-reversal
//!   invariant equation;
//! - [`cosmo`]: closed FLRW universe with a massive scalar field, symmetry
//!   detection and the Monte Carlo measure-zero surrogate;
//! - [`geometry`]: curvature from a metric, stress-energy, Type I tetrad
//!   decomposition, energy conditions and the pseudo-tensor conservation law;
//! - [`orientation`]: discrete temporal orientability over cell complexes;
//! - [`taub`]: the two-sheet factorized Hamiltonian and its twin map;
//! - [`scenario`]: scenario files, dispatch and data-file output.

pub mod cosmo;
pub mod geometry;
pub mod odecore;
pub mod orientation;
pub mod pendulum;
pub mod scenario;
pub mod taub;
