//! Randomized checks of the comparison inequalities between distances.
//!
//! Inequalities with explicit constants are checked pair by pair. For the
//! ones whose constants are only known to exist, a constant is fitted on a
//! separate calibration set and then held fixed; additionally the trend of
//! `log(lhs / base)` against `log(base)` is reported, a negative slope
//! meaning the bound decays faster than the left side (wrong exponent).

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fourier::{sobolev_neg_norm_atomic, toscani_norm, FourierGrid, MomentPolicy};
use super::ot::{transport_cost, wasserstein};
use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;
use crate::rng::{stage, substream, SimRng};
use crate::stats::linear_fit;

/// Exponent error below which a fitted bound counts as consistent.
pub const EXPONENT_TOL: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inequality {
    /// `W₁ ≤ W_q`.
    W1LeWq,
    /// `W_q ≤ M_{k+1}^{1-α} W₁^α`, `α = 1 - (q-1)/k`.
    WqInterpolation,
    /// `|f - g|_s ≤ 2^{1-s} ∫ |x - y|^s dπ` for `s ∈ (0, 1]`.
    ToscaniLeCost,
    /// `∫ |x - y|^s dπ ≤ W₁^s` for `s ∈ (0, 1]`.
    CostLeW1Pow,
    /// `‖f - g‖²_{Ḣ^{-s}} ≤ C |f - g|₁^{2s-d}`.
    SobolevToscani,
    /// `W₁ ≤ C M_{k+1}^{α₁} |f - g|_s^{γ₁}`.
    DualToscani,
    /// `W₁ ≤ C M_{k+1}^{α₂} ‖f - g‖_{Ḣ^{-s}}^{γ₂}`.
    DualSobolev,
}

impl Inequality {
    pub const ALL: [Inequality; 7] = [
        Inequality::W1LeWq,
        Inequality::WqInterpolation,
        Inequality::ToscaniLeCost,
        Inequality::CostLeW1Pow,
        Inequality::SobolevToscani,
        Inequality::DualToscani,
        Inequality::DualSobolev,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Inequality::W1LeWq => "w1_le_wq",
            Inequality::WqInterpolation => "wq_interpolation",
            Inequality::ToscaniLeCost => "toscani_le_cost",
            Inequality::CostLeW1Pow => "cost_le_w1_pow",
            Inequality::SobolevToscani => "sobolev_toscani",
            Inequality::DualToscani => "dual_toscani",
            Inequality::DualSobolev => "dual_sobolev",
        }
    }

    /// Whether the constant is explicit (otherwise fitted).
    pub fn explicit(self) -> bool {
        matches!(
            self,
            Inequality::W1LeWq | Inequality::WqInterpolation | Inequality::ToscaniLeCost | Inequality::CostLeW1Pow
        )
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatteryConfig {
    pub dim: usize,
    pub trials: usize,
    pub calibration_trials: usize,
    pub q: f64,
    pub k: f64,
    /// Exponent for the Toscani/transport-cost pair, in `(0, 1]`.
    pub s_cost: f64,
    /// Toscani exponent in the dual bound.
    pub s_toscani: f64,
    /// Negative Sobolev exponent, in `(d/2, d/2 + 1)` and `≥ 1`.
    pub s_sobolev: f64,
    pub seed: u64,
    pub grid: FourierGrid,
}

impl BatteryConfig {
    pub fn new(dim: usize, trials: usize, seed: u64) -> Self {
        BatteryConfig {
            dim,
            trials,
            calibration_trials: (trials / 4).max(20),
            q: 2.0,
            k: 4.0,
            s_cost: 0.5,
            s_toscani: 1.0,
            s_sobolev: (dim as f64 / 2.0 + 0.6).max(1.2),
            seed,
            grid: FourierGrid::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim as f64;
        if self.trials == 0 || !(self.q > 1.0) || !(self.k > 1.0) {
            return Err(Error::Invalid("battery needs trials > 0, q > 1, k > 1".into()));
        }
        if !(self.s_cost > 0.0 && self.s_cost <= 1.0) {
            return Err(Error::Invalid(format!("s_cost must lie in (0, 1], got {}", self.s_cost)));
        }
        if !(self.s_sobolev > d / 2.0 && self.s_sobolev < d / 2.0 + 1.0 && self.s_sobolev >= 1.0) {
            return Err(Error::SobolevWindow { s: self.s_sobolev, lo: (d / 2.0).max(1.0), hi: d / 2.0 + 1.0 });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatteryRow {
    pub trial: usize,
    pub inequality: Inequality,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub violated: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InequalitySummary {
    pub inequality: Inequality,
    pub violations: usize,
    /// Fitted constant (1 for explicit inequalities).
    pub constant: f64,
    /// Slope of `log(lhs/base)` against `log(base)`; `None` for explicit ones.
    pub ratio_slope: Option<f64>,
    pub ratio_slope_ci95: Option<f64>,
    /// No evidence that the bound decays faster than the left side.
    pub exponent_consistent: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatteryReport {
    pub rows: Vec<BatteryRow>,
    pub summary: Vec<InequalitySummary>,
}

impl BatteryReport {
    pub fn violations(&self, which: Inequality) -> usize {
        self.summary.iter().find(|s| s.inequality == which).map_or(0, |s| s.violations)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "trial,inequality_id,lhs,rhs,margin,violated")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{},{}", r.trial, r.inequality.id(), r.lhs, r.rhs, r.margin, r.violated)?;
        }
        Ok(())
    }
}

/// Generator of measure pairs: `(trial, rng) -> (f, g)`.
pub type PairGenerator<'a> = dyn Fn(usize, &mut SimRng) -> (EmpiricalMeasure<f64>, EmpiricalMeasure<f64>) + Sync + 'a;

/// Random pairs: `f` uniform on `points` Gaussian draws, `g` the same
/// points moved by `ε · N(0, Id)` with `ε` log-uniform in `[1e-3, 1]`, so
/// the pairs span three decades of closeness.
pub fn gaussian_pairs(dim: usize, points: usize) -> impl Fn(usize, &mut SimRng) -> (EmpiricalMeasure<f64>, EmpiricalMeasure<f64>) + Sync {
    move |_, rng| {
        let a: Vec<f64> = (0..dim * points).map(|_| StandardNormal.sample(rng)).collect();
        let eps = 10f64.powf(rng.random_range(-3.0..0.0));
        let b: Vec<f64> = a
            .iter()
            .map(|x| {
                let z: f64 = StandardNormal.sample(rng);
                x + eps * z
            })
            .collect();
        (EmpiricalMeasure::uniform(dim, a).unwrap(), EmpiricalMeasure::uniform(dim, b).unwrap())
    }
}

struct Quantities {
    w1: f64,
    wq: f64,
    cost_s: f64,
    toscani_s: f64,
    toscani_1: f64,
    toscani_dual: f64,
    sobolev: f64,
    m_k1: f64,
}

fn quantities(f: &EmpiricalMeasure<f64>, g: &EmpiricalMeasure<f64>, cfg: &BatteryConfig) -> Result<Quantities> {
    let m = |mu: &EmpiricalMeasure<f64>| mu.integrate(|x| 1.0 + x.iter().map(|c| c * c).sum::<f64>().sqrt().powf(cfg.k + 1.0));
    Ok(Quantities {
        w1: wasserstein(f, g, 1.0)?.value,
        wq: wasserstein(f, g, cfg.q)?.value,
        cost_s: transport_cost(f, g, cfg.s_cost)?.value,
        toscani_s: toscani_norm(f, g, cfg.s_cost, &cfg.grid, MomentPolicy::Ignore)?.value,
        toscani_1: toscani_norm(f, g, 1.0, &cfg.grid, MomentPolicy::Ignore)?.value,
        toscani_dual: toscani_norm(f, g, cfg.s_toscani, &cfg.grid, MomentPolicy::Taylor)?.value,
        sobolev: sobolev_neg_norm_atomic(f, g, cfg.s_sobolev)?.value,
        m_k1: m(f).max(m(g)),
    })
}

/// `(lhs, base)` of a fitted-constant inequality `lhs ≤ C base`.
fn fitted_sides(which: Inequality, q: &Quantities, cfg: &BatteryConfig) -> (f64, f64) {
    let d = cfg.dim as f64;
    let k = cfg.k;
    match which {
        Inequality::SobolevToscani => (q.sobolev.powi(2), q.toscani_1.powf(2.0 * cfg.s_sobolev - d)),
        Inequality::DualToscani => {
            let s = cfg.s_toscani;
            let den = d + k + k * (d + s - 1.0);
            (q.w1, q.m_k1.powf(d / den) * q.toscani_dual.powf(k / den))
        }
        Inequality::DualSobolev => {
            let s = cfg.s_sobolev;
            let den = d / 2.0 + k + k * (s - 1.0);
            (q.w1, q.m_k1.powf(d / 2.0 / den) * q.sobolev.powf(k / den))
        }
        _ => unreachable!(),
    }
}

/// Run every inequality on `cfg.trials` generated pairs.
pub fn inequality_battery(pairs: &PairGenerator<'_>, cfg: &BatteryConfig) -> Result<BatteryReport> {
    cfg.validate()?;
    let compute = |offset: u64, n: usize| -> Result<Vec<Quantities>> {
        (0..n)
            .into_par_iter()
            .map(|t| {
                let mut rng = substream(cfg.seed, stage::BATTERY, offset + t as u64);
                let (f, g) = pairs(t, &mut rng);
                quantities(&f, &g, cfg)
            })
            .collect()
    };
    let calibration = compute(1 << 40, cfg.calibration_trials)?;
    let trials = compute(0, cfg.trials)?;

    let mut constants = std::collections::HashMap::new();
    for which in Inequality::ALL.iter().copied().filter(|w| !w.explicit()) {
        let c = calibration
            .iter()
            .map(|q| fitted_sides(which, q, cfg))
            .filter(|(l, b)| *b > 0.0 && l.is_finite())
            .map(|(l, b)| l / b)
            .fold(0.0, f64::max);
        constants.insert(which, c);
    }

    let alpha = 1.0 - (cfg.q - 1.0) / cfg.k;
    let rel = 1e-9;
    let mut rows = Vec::with_capacity(trials.len() * Inequality::ALL.len());
    for (t, q) in trials.iter().enumerate() {
        for which in Inequality::ALL {
            let (lhs, rhs) = match which {
                Inequality::W1LeWq => (q.w1, q.wq),
                Inequality::WqInterpolation => (q.wq, q.m_k1.powf(1.0 - alpha) * q.w1.powf(alpha)),
                Inequality::ToscaniLeCost => (q.toscani_s, 2f64.powf(1.0 - cfg.s_cost) * q.cost_s),
                Inequality::CostLeW1Pow => (q.cost_s, q.w1.powf(cfg.s_cost)),
                _ => {
                    let (l, b) = fitted_sides(which, q, cfg);
                    (l, constants[&which] * b)
                }
            };
            let violated = lhs > rhs * (1.0 + rel) + 1e-15;
            rows.push(BatteryRow { trial: t, inequality: which, lhs, rhs, margin: rhs - lhs, violated });
        }
    }

    let summary = Inequality::ALL
        .iter()
        .map(|&which| {
            let violations = rows.iter().filter(|r| r.inequality == which && r.violated).count();
            if which.explicit() {
                return InequalitySummary {
                    inequality: which,
                    violations,
                    constant: 1.0,
                    ratio_slope: None,
                    ratio_slope_ci95: None,
                    exponent_consistent: true,
                };
            }
            let (xs, ys): (Vec<f64>, Vec<f64>) = trials
                .iter()
                .map(|q| fitted_sides(which, q, cfg))
                .filter(|(l, b)| *l > 0.0 && *b > 0.0)
                .map(|(l, b)| (b.ln(), (l / b).ln()))
                .unzip();
            let (slope, ci) = if xs.len() >= 3 {
                let fit = linear_fit(&xs, &ys);
                (Some(fit.slope), Some(fit.slope_ci95))
            } else {
                (None, None)
            };
            // too large an exponent makes lhs/base grow as base -> 0,
            // which shows up as a clearly negative slope
            let consistent = match (slope, ci) {
                (Some(s), Some(c)) => s + c >= -EXPONENT_TOL,
                _ => true,
            };
            InequalitySummary {
                inequality: which,
                violations,
                constant: constants[&which],
                ratio_slope: slope,
                ratio_slope_ci95: ci,
                exponent_consistent: consistent,
            }
        })
        .collect();
    Ok(BatteryReport { rows, summary })
}
