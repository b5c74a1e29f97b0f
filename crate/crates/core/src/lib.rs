//! Scan tests for a rectangle of elevated mean in a d-dimensional Gaussian grid.
//!
//! A field `y = x + ξ` lives on `[n]^d` with i.i.d. standard normal noise `ξ`.
//! Under the alternative, `x` is `μ / √|R|` on an unknown axis-parallel
//! rectangle `R` and zero elsewhere. The scanners compute the maximum Z-score
//! `y[R] / √|R|` over a rectangle family, centre and scale it per shape, and
//! report a Gumbel-type asymptotic P-value:
//!
//! * [`scan::oracle_scan`] for a known shape,
//! * [`scan::multiscale_scan`] and [`scan::adaptive_scan`] over a shape range,
//! * [`eps::epsilon_adaptive_scan`], a near-linear-time approximation on a
//!   dyadic ε-covering.
//!
//! [`harness`] runs Monte Carlo size, power and timing experiments.

pub mod eps;
pub mod error;
pub mod field;
pub mod harness;
pub mod io;
pub mod prefix;
pub mod rng;
pub mod scan;
pub mod threshold;

pub use error::{Result, ScanError};
pub use field::{inject_signal, white_noise, GridField, Rect, SignalSpec};
pub use prefix::{prefix_sums, rect_sum, zscore, zscore_field, PrefixSumTable, ShapeMax};
pub use scan::{
    adaptive_scan, modified_adaptive_stat, multiscale_scan, oracle_scan, ScanKind, ScanOutcome,
};
pub use threshold::{
    alpha_from_tau, critical_value, pvalue, tau_from_alpha, tau_hat, CriticalParams, FamilyKind,
    ScanFamily, ShapeRange,
};
