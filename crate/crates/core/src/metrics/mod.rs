//! Distances between probability measures on ℝ^d.

mod battery;
mod fourier;
mod ot;

use serde::{Deserialize, Serialize};

pub use battery::{gaussian_pairs, inequality_battery, BatteryConfig, BatteryReport, BatteryRow, Inequality, InequalitySummary, PairGenerator};
pub use fourier::{
    fourier_diff, riesz_constant, sobolev_neg_norm, sobolev_neg_norm_atomic, sobolev_neg_norms, toscani_norm, CharFn, Directions, FourierGrid, GaussianLaw, MomentPolicy,
    SobolevQuadrature,
};
pub use ot::{dual_lipschitz, transport_cost, wasserstein, Solver, MAX_ASSIGNMENT, MAX_TRANSPORT};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricKind {
    Wasserstein { q: f64 },
    TransportCost { p: f64 },
    Toscani { s: f64 },
    NegativeSobolev { s: f64 },
}

/// Solver and truncation details attached to a metric value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<Solver>,
    /// Optimal transport cost `∫ |x - y|^q dπ` (no root).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radii: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    /// Frequency radius where the sup was attained.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub argmax_radius: Option<f64>,
    /// Analytic correction added for `|ξ| < r_min`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub low_correction: Option<f64>,
    /// Expected-value correction added for `|ξ| > r_max`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_correction: Option<f64>,
    /// Bound on the neglected `|ξ| > r_max` contribution.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_bound: Option<f64>,
    /// Highest moment order subtracted by the Taylor-compensated variant.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub taylor_order: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub kind: MetricKind,
    pub value: f64,
    pub diagnostics: Diagnostics,
}
