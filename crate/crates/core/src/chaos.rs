//! Chaotic initial data, law-of-large-numbers functionals of empirical
//! measures, chaos-gap estimators and the Kac-sphere marginal experiment.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{sym_observable, CosineTerm, EmpiricalMeasure, NormKind, TensorObservable, TestFunction};
use crate::metrics::{
    riesz_constant, sobolev_neg_norms, transport_cost, wasserstein, GaussianLaw, MomentPolicy,
    SobolevQuadrature,
};
use crate::rng::{stage, substream, SimRng};
use crate::scalar::sphere_area;
use crate::stats::{split_rhat, weighted_linear_fit, Estimate};

/// One-particle law `f₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseLaw {
    /// `N(mean, θ Id)`.
    Gaussian { mean: Vec<f64>, theta: f64 },
    /// Uniform on the centered ball of the given radius.
    UniformBall { dim: usize, radius: f64 },
    /// Uniform on the centered sphere of the given radius.
    Shell { dim: usize, radius: f64 },
    /// `½ δ_a + ½ δ_b`.
    TwoPoint { a: Vec<f64>, b: Vec<f64> },
    /// Uniform over a fixed list of points (flat, `dim` per point).
    Samples { dim: usize, points: Vec<f64> },
}

impl BaseLaw {
    pub fn gaussian(dim: usize, theta: f64) -> Self {
        BaseLaw::Gaussian { mean: vec![0.0; dim], theta }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(m.to_string()));
        match self {
            BaseLaw::Gaussian { mean, theta } if mean.is_empty() || !(*theta > 0.0) => {
                bad("gaussian law needs a mean vector and theta > 0")
            }
            BaseLaw::UniformBall { dim, radius } | BaseLaw::Shell { dim, radius } if *dim == 0 || !(*radius > 0.0) => {
                bad("ball and shell laws need dim >= 1 and radius > 0")
            }
            BaseLaw::TwoPoint { a, b } if a.is_empty() || a.len() != b.len() => bad("two-point law needs two points of equal dimension"),
            BaseLaw::Samples { dim, points } if *dim == 0 || points.is_empty() || points.len() % dim != 0 => {
                bad("sample law needs a nonempty point list of matching dimension")
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BaseLaw::Gaussian { mean, .. } => mean.len(),
            BaseLaw::UniformBall { dim, .. } | BaseLaw::Shell { dim, .. } | BaseLaw::Samples { dim, .. } => *dim,
            BaseLaw::TwoPoint { a, .. } => a.len(),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            BaseLaw::Gaussian { mean, .. } => mean.clone(),
            BaseLaw::UniformBall { dim, .. } | BaseLaw::Shell { dim, .. } => vec![0.0; *dim],
            BaseLaw::TwoPoint { a, b } => a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect(),
            BaseLaw::Samples { .. } => self.exact_measure().unwrap().mean(),
        }
    }

    /// `∫ |v|² f₀(dv)`.
    pub fn second_moment(&self) -> f64 {
        match self {
            BaseLaw::Gaussian { mean, theta } => mean.iter().map(|x| x * x).sum::<f64>() + theta * mean.len() as f64,
            BaseLaw::UniformBall { dim, radius } => radius * radius * *dim as f64 / (*dim as f64 + 2.0),
            BaseLaw::Shell { radius, .. } => radius * radius,
            _ => self.exact_measure().unwrap().moment(2.0),
        }
    }

    /// Radius of a centered ball containing the support, if bounded.
    pub fn support_radius(&self) -> Option<f64> {
        match self {
            BaseLaw::Gaussian { .. } => None,
            BaseLaw::UniformBall { radius, .. } | BaseLaw::Shell { radius, .. } => Some(*radius),
            _ => {
                let m = self.exact_measure().unwrap();
                Some((0..m.len()).map(|i| m.point(i).iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max))
            }
        }
    }

    /// The law itself as a finite measure, when it is atomic.
    pub fn exact_measure(&self) -> Option<EmpiricalMeasure<f64>> {
        match self {
            BaseLaw::TwoPoint { a, b } => {
                Some(EmpiricalMeasure::weighted(a.len(), a.iter().chain(b).copied().collect(), vec![0.5, 0.5]).unwrap())
            }
            BaseLaw::Samples { dim, points } => Some(EmpiricalMeasure::uniform(*dim, points.clone()).unwrap()),
            _ => None,
        }
    }

    /// Gaussian laws as a [`GaussianLaw`] (exact characteristic function).
    pub fn gaussian_law(&self) -> Option<GaussianLaw> {
        match self {
            BaseLaw::Gaussian { mean, theta } => Some(GaussianLaw { mean: mean.clone(), theta: *theta }),
            _ => None,
        }
    }

    /// Log-density up to a constant (`-∞` outside the support), for laws
    /// with a density.
    pub fn log_density(&self, v: &[f64]) -> Option<f64> {
        match self {
            BaseLaw::Gaussian { mean, theta } => {
                Some(-v.iter().zip(mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (2.0 * theta))
            }
            BaseLaw::UniformBall { radius, .. } => {
                let r2: f64 = v.iter().map(|x| x * x).sum();
                Some(if r2 <= radius * radius { 0.0 } else { f64::NEG_INFINITY })
            }
            _ => None,
        }
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            BaseLaw::Gaussian { mean, theta } => {
                let sd = theta.sqrt();
                for (o, m) in out.iter_mut().zip(mean) {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = m + sd * z;
                }
            }
            BaseLaw::UniformBall { dim, radius } => {
                let mut n2 = 0.0;
                for o in out.iter_mut() {
                    *o = StandardNormal.sample(rng);
                    n2 += *o * *o;
                }
                let u: f64 = rng.random();
                let r = radius * u.powf(1.0 / *dim as f64) / n2.sqrt();
                out.iter_mut().for_each(|x| *x *= r);
            }
            BaseLaw::Shell { radius, .. } => {
                let mut n2 = 0.0;
                for o in out.iter_mut() {
                    *o = StandardNormal.sample(rng);
                    n2 += *o * *o;
                }
                let r = radius / n2.sqrt();
                out.iter_mut().for_each(|x| *x *= r);
            }
            BaseLaw::TwoPoint { a, b } => {
                let src = if rng.random::<bool>() { a } else { b };
                out.copy_from_slice(src);
            }
            BaseLaw::Samples { dim, points } => {
                let k = rng.random_range(0..points.len() / dim);
                out.copy_from_slice(&points[k * dim..(k + 1) * dim]);
            }
        }
    }

    /// `n` independent draws, flat.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let mut v = vec![0.0; n * d];
        for chunk in v.chunks_exact_mut(d) {
            self.sample_into(rng, chunk);
        }
        v
    }
}

/// How the N-particle initial law is built from `f₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InitMode {
    /// `f₀^{⊗N}`.
    Tensor,
    /// Uniform on the sphere `Σ|v_j|² = N E`.
    KacSphere { energy: f64 },
    /// `f₀^{⊗N}` conditioned on `Σ|v_j|² = N E`, sampled by Metropolis with
    /// pairwise great-circle rotations. `burn_in` and `thin` count sweeps
    /// (`Nd/2` proposals each); `trace` samples of `M₄` feed the R̂ check.
    ConditionedTensor {
        energy: f64,
        #[serde(default = "default_burn_in")]
        burn_in: usize,
        #[serde(default = "default_thin")]
        thin: usize,
        #[serde(default = "default_trace")]
        trace: usize,
        #[serde(default = "default_step")]
        step: f64,
    },
}

fn default_burn_in() -> usize {
    200
}
fn default_thin() -> usize {
    5
}
fn default_trace() -> usize {
    40
}
fn default_step() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialDataSpec {
    pub base: BaseLaw,
    pub mode: InitMode,
    /// Remove the total momentum (then restore the energy on the sphere).
    #[serde(default)]
    pub project_momentum: bool,
}

impl InitialDataSpec {
    pub fn tensor(base: BaseLaw) -> Self {
        InitialDataSpec { base, mode: InitMode::Tensor, project_momentum: false }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        match &self.mode {
            InitMode::Tensor => Ok(()),
            InitMode::KacSphere { energy } if !(*energy > 0.0) => {
                Err(Error::Invalid(format!("Kac sphere energy must be positive, got {energy}")))
            }
            InitMode::ConditionedTensor { energy, step, trace, .. } => {
                if !(*energy > 0.0) || !(*step > 0.0) || *trace < 4 {
                    return Err(Error::Invalid("conditioned tensor needs energy > 0, step > 0, trace >= 4".into()));
                }
                if self.base.log_density(&vec![0.0; self.base.dim()]).is_none() {
                    return Err(Error::Invalid("conditioned tensor needs a base law with a density".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Output of [`sample_initial`].
#[derive(Clone, Debug)]
pub struct InitialSample {
    pub velocities: Vec<f64>,
    /// Split-chain R̂ of `M₄` (conditioned mode only).
    pub rhat: Option<f64>,
    pub warning: Option<String>,
}

fn kac_sphere<R: Rng + ?Sized>(n: usize, d: usize, energy: f64, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = (n as f64 * energy).sqrt() / norm;
    v.iter_mut().for_each(|x| *x *= scale);
    v
}

fn project_to_zero_momentum(v: &mut [f64], d: usize, radius: Option<f64>) {
    let n = v.len() / d;
    let mut mean = vec![0.0; d];
    for c in v.chunks_exact(d) {
        for (m, x) in mean.iter_mut().zip(c) {
            *m += x / n as f64;
        }
    }
    for c in v.chunks_exact_mut(d) {
        for (x, m) in c.iter_mut().zip(&mean) {
            *x -= m;
        }
    }
    if let Some(r) = radius {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x *= r / norm);
        }
    }
}

/// Draw one N-particle initial configuration.
pub fn sample_initial<R: Rng + ?Sized>(spec: &InitialDataSpec, n: usize, rng: &mut R) -> Result<InitialSample> {
    spec.validate()?;
    let d = spec.base.dim();
    let mut out = match &spec.mode {
        InitMode::Tensor => InitialSample { velocities: spec.base.sample(n, rng), rhat: None, warning: None },
        InitMode::KacSphere { energy } => {
            InitialSample { velocities: kac_sphere(n, d, *energy, rng), rhat: None, warning: None }
        }
        InitMode::ConditionedTensor { energy, burn_in, thin, trace, step } => {
            conditioned_tensor(&spec.base, n, *energy, *burn_in, *thin, *trace, *step, rng)?
        }
    };
    if spec.project_momentum {
        let radius = match &spec.mode {
            InitMode::Tensor => None,
            InitMode::KacSphere { energy } | InitMode::ConditionedTensor { energy, .. } => Some((n as f64 * energy).sqrt()),
        };
        project_to_zero_momentum(&mut out.velocities, d, radius);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn conditioned_tensor<R: Rng + ?Sized>(
    base: &BaseLaw,
    n: usize,
    energy: f64,
    burn_in: usize,
    thin: usize,
    trace_len: usize,
    step: f64,
    rng: &mut R,
) -> Result<InitialSample> {
    let d = base.dim();
    let logp = |x: &[f64]| base.log_density(x).unwrap();
    let mut v = kac_sphere(n, d, energy, rng);
    if v.chunks_exact(d).any(|x| logp(x) == f64::NEG_INFINITY) {
        // uniform sphere point outside the support: start from equal speeds
        let r = energy.sqrt();
        for c in v.chunks_exact_mut(d) {
            let mut n2 = 0.0;
            for x in c.iter_mut() {
                *x = StandardNormal.sample(rng);
                n2 += *x * *x;
            }
            let s = r / n2.sqrt();
            c.iter_mut().for_each(|x| *x *= s);
        }
        if v.chunks_exact(d).any(|x| logp(x) == f64::NEG_INFINITY) {
            return Err(Error::Invalid(format!(
                "energy {energy} is incompatible with the support of the base law"
            )));
        }
    }
    let coords = n * d;
    if coords < 2 {
        return Err(Error::TooFewParticles { need: 2, got: n });
    }
    let sweep = (coords / 2).max(1);
    let m4 = |v: &[f64]| v.chunks_exact(d).map(|c| c.iter().map(|x| x * x).sum::<f64>().powi(2)).sum::<f64>() / n as f64;
    let mut buf_a = vec![0.0; d];
    let mut buf_b = vec![0.0; d];
    let mut trace = Vec::with_capacity(trace_len);
    let mut accepted = 0usize;
    let total_sweeps = burn_in + thin * trace_len;
    for s in 0..total_sweeps {
        for _ in 0..sweep {
            let a = rng.random_range(0..coords);
            let mut b = rng.random_range(0..coords - 1);
            if b >= a {
                b += 1;
            }
            let phi = step * (2.0 * rng.random::<f64>() - 1.0);
            let (sn, cs) = phi.sin_cos();
            let (pa, pb) = (a / d, b / d);
            let (xa, xb) = (v[a], v[b]);
            let na = cs * xa - sn * xb;
            let nb = sn * xa + cs * xb;
            let old = if pa == pb {
                logp(&v[pa * d..(pa + 1) * d])
            } else {
                logp(&v[pa * d..(pa + 1) * d]) + logp(&v[pb * d..(pb + 1) * d])
            };
            let new = if pa == pb {
                buf_a.copy_from_slice(&v[pa * d..(pa + 1) * d]);
                buf_a[a % d] = na;
                buf_a[b % d] = nb;
                logp(&buf_a)
            } else {
                buf_a.copy_from_slice(&v[pa * d..(pa + 1) * d]);
                buf_b.copy_from_slice(&v[pb * d..(pb + 1) * d]);
                buf_a[a % d] = na;
                buf_b[b % d] = nb;
                logp(&buf_a) + logp(&buf_b)
            };
            let u: f64 = rng.random();
            if new > f64::NEG_INFINITY && (new >= old || u.ln() < new - old) {
                v[a] = na;
                v[b] = nb;
                accepted += 1;
            }
        }
        if s >= burn_in && (s - burn_in + 1) % thin == 0 {
            trace.push(m4(&v));
        }
    }
    // remove rounding drift off the sphere
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = (n as f64 * energy).sqrt();
    v.iter_mut().for_each(|x| *x *= target / norm);
    let rhat = split_rhat(&trace);
    let warning = if !(rhat <= 1.1) {
        Some(format!(
            "MCMC not converged: split R-hat of M4 is {rhat:.3} (acceptance {:.2})",
            accepted as f64 / (total_sweeps * sweep) as f64
        ))
    } else {
        None
    };
    Ok(InitialSample { velocities: v, rhat: Some(rhat), warning })
}

/// Distance `D` in the law-of-large-numbers functional `E D(μ^N_V, f₀)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LlnDistance {
    W1,
    W2Squared,
    NegSobolevSquared { s: f64 },
}

impl LlnDistance {
    pub fn label(&self) -> String {
        match self {
            LlnDistance::W1 => "w1".into(),
            LlnDistance::W2Squared => "w2_squared".into(),
            LlnDistance::NegSobolevSquared { s } => format!("hneg_squared_s{s}"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LlnOptions {
    pub reps: usize,
    pub seed: u64,
    /// Size of the independent reference sample standing in for `f₀`, as a
    /// multiple of N (used when `f₀` has no exact representation).
    pub ref_factor: usize,
    pub quadrature: SobolevQuadrature,
}

impl LlnOptions {
    pub fn new(reps: usize, seed: u64) -> Self {
        LlnOptions {
            reps,
            seed,
            ref_factor: 50,
            quadrature: SobolevQuadrature {
                r_min: 1e-3,
                r_max: 12.0,
                panels: 8,
                nodes_per_panel: 6,
                directions: crate::metrics::Directions::Default(12),
            },
        }
    }
}

/// One row of an LLN scan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LlnEntry {
    pub n: usize,
    pub distance: LlnDistance,
    pub mean: f64,
    pub stderr: f64,
    pub reps: usize,
    /// `(1/N) ∫ (1 - |f̂₀|²) |ξ|^{-2s} dξ`, when computable in closed form.
    pub exact: Option<f64>,
}

/// `∫ (1 - |f̂₀(ξ)|²) |ξ|^{-2s} dξ = A E|X - X'|^{2s-d}` (X, X' iid f₀).
pub fn lln_identity(law: &BaseLaw, s: f64) -> Option<f64> {
    let d = law.dim();
    let alpha = 2.0 * s - d as f64;
    if !(alpha > 0.0 && alpha < 2.0) {
        return None;
    }
    let moment = match law {
        BaseLaw::Gaussian { theta, .. } => {
            use statrs::function::gamma::gamma;
            // X - X' ~ N(0, 2θ Id)
            (2.0 * theta).powf(alpha / 2.0) * 2f64.powf(alpha / 2.0) * gamma((d as f64 + alpha) / 2.0)
                / gamma(d as f64 / 2.0)
        }
        BaseLaw::UniformBall { .. } | BaseLaw::Shell { .. } => return None,
        _ => {
            let m = law.exact_measure()?;
            let mut acc = 0.0;
            for a in 0..m.len() {
                for b in 0..m.len() {
                    let r2: f64 = m.point(a).iter().zip(m.point(b)).map(|(x, y)| (x - y).powi(2)).sum();
                    acc += m.weights()[a] * m.weights()[b] * r2.powf(alpha / 2.0);
                }
            }
            acc
        }
    };
    Some(riesz_constant(d, alpha) * moment)
}

/// Monte Carlo estimate of `E D(μ^N_V, f₀)` over `opts.reps` samples.
pub fn wn_functional(law: &BaseLaw, distance: LlnDistance, n: usize, opts: &LlnOptions) -> Result<LlnEntry> {
    match distance {
        LlnDistance::NegSobolevSquared { s } => Ok(wn_sobolev(law, &[s], n, opts)?.remove(0)),
        _ => wn_transport(law, distance, n, opts),
    }
}

fn check_reps(law: &BaseLaw, n: usize, opts: &LlnOptions) -> Result<()> {
    law.validate()?;
    if n == 0 || opts.reps < 2 {
        return Err(Error::Invalid("need N >= 1 and at least two repetitions".into()));
    }
    Ok(())
}

fn wn_transport(law: &BaseLaw, distance: LlnDistance, n: usize, opts: &LlnOptions) -> Result<LlnEntry> {
    check_reps(law, n, opts)?;
    let d = law.dim();
    let exact = law.exact_measure();
    let m = (opts.ref_factor * n).max(1);
    if exact.is_none() && d > 1 && m > crate::metrics::MAX_TRANSPORT {
        return Err(Error::SolverBudget { points: m, budget: crate::metrics::MAX_TRANSPORT });
    }
    let values: Vec<f64> = (0..opts.reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(opts.seed, stage::INITIAL, r as u64);
            let mu = EmpiricalMeasure::uniform(d, law.sample(n, &mut rng))?;
            let reference = match &exact {
                Some(e) => e.clone(),
                None => {
                    let mut rr = substream(opts.seed, stage::REFERENCE_SAMPLE, r as u64);
                    EmpiricalMeasure::uniform(d, law.sample(m, &mut rr))?
                }
            };
            Ok(match distance {
                LlnDistance::W1 => wasserstein(&mu, &reference, 1.0)?.value,
                _ => transport_cost(&mu, &reference, 2.0)?.value,
            })
        })
        .collect::<Result<_>>()?;
    let est = Estimate::from_samples(&values);
    Ok(LlnEntry { n, distance, mean: est.mean, stderr: est.stderr, reps: opts.reps, exact: None })
}

/// `E ‖μ^N_V - f₀‖²_{Ḣ^{-s}}` for several exponents sharing the samples.
///
/// Gaussian and atomic `f₀` enter through their exact transforms; other
/// laws through a reference sample of `ref_factor · N` points. The moment
/// constraint is not imposed: the integral is finite for every `s` in the
/// window.
pub fn wn_sobolev(law: &BaseLaw, exponents: &[f64], n: usize, opts: &LlnOptions) -> Result<Vec<LlnEntry>> {
    check_reps(law, n, opts)?;
    let d = law.dim();
    let gaussian = law.gaussian_law();
    let exact = law.exact_measure();
    let values: Vec<Vec<f64>> = (0..opts.reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(opts.seed, stage::INITIAL, r as u64);
            let mu = EmpiricalMeasure::uniform(d, law.sample(n, &mut rng))?;
            let res = if let Some(g) = &gaussian {
                sobolev_neg_norms(&mu, g, exponents, &opts.quadrature, MomentPolicy::Ignore)?
            } else if let Some(e) = &exact {
                sobolev_neg_norms(&mu, e, exponents, &opts.quadrature, MomentPolicy::Ignore)?
            } else {
                let mut rr = substream(opts.seed, stage::REFERENCE_SAMPLE, r as u64);
                let reference = EmpiricalMeasure::uniform(d, law.sample(opts.ref_factor * n, &mut rr))?;
                sobolev_neg_norms(&mu, &reference, exponents, &opts.quadrature, MomentPolicy::Ignore)?
            };
            Ok(res.iter().map(|m| m.value * m.value).collect())
        })
        .collect::<Result<_>>()?;
    Ok(exponents
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let col: Vec<f64> = values.iter().map(|v| v[k]).collect();
            let est = Estimate::from_samples(&col);
            LlnEntry {
                n,
                distance: LlnDistance::NegSobolevSquared { s },
                mean: est.mean,
                stderr: est.stderr,
                reps: opts.reps,
                exact: lln_identity(law, s).map(|v| v / n as f64),
            }
        })
        .collect())
}

/// LLN entries over an N grid with the fitted log-log slope.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LlnResult {
    pub entries: Vec<LlnEntry>,
    pub slope: f64,
    pub slope_ci95: f64,
    pub intercept: f64,
}

/// Weighted fit of `log mean` against `log N` (weights from the delta method).
pub fn fit_lln_slope(entries: &[LlnEntry]) -> Result<(f64, f64, f64)> {
    if entries.len() < 2 || entries.iter().any(|e| !(e.mean > 0.0)) {
        return Err(Error::Invalid("slope fit needs at least two positive means".into()));
    }
    let x: Vec<f64> = entries.iter().map(|e| (e.n as f64).ln()).collect();
    let y: Vec<f64> = entries.iter().map(|e| e.mean.ln()).collect();
    let w: Vec<f64> = entries.iter().map(|e| (e.mean / e.stderr.max(1e-300)).powi(2)).collect();
    let fit = weighted_linear_fit(&x, &y, &w);
    Ok((fit.slope, fit.slope_ci95, fit.intercept))
}

/// Scan `E D(μ^N, f₀)` over a geometric N grid (at least four points).
pub fn lln_rate_scan(law: &BaseLaw, distance: LlnDistance, n_grid: &[usize], opts: &LlnOptions) -> Result<LlnResult> {
    if n_grid.len() < 4 {
        return Err(Error::Invalid(format!("N grid needs at least 4 points, got {}", n_grid.len())));
    }
    let ratios: Vec<f64> = n_grid.windows(2).map(|w| w[1] as f64 / w[0] as f64).collect();
    if ratios.iter().any(|r| !(*r > 1.0) || (r / ratios[0] - 1.0).abs() > 0.05) {
        return Err(Error::Invalid("N grid must be geometric and increasing".into()));
    }
    let entries: Vec<LlnEntry> = n_grid
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let o = LlnOptions { seed: crate::rng::child_seed(opts.seed, stage::INITIAL, k as u64), ..opts.clone() };
            wn_functional(law, distance, n, &o)
        })
        .collect::<Result<_>>()?;
    let (slope, slope_ci95, intercept) = fit_lln_slope(&entries)?;
    Ok(LlnResult { entries, slope, slope_ci95, intercept })
}

/// Named test functions of unit declared norm.
#[derive(Clone, Debug)]
pub struct Dictionary {
    pub entries: Vec<(String, TestFunction)>,
}

impl Dictionary {
    /// 32 cosine packets `cos(ξ·v + θ)` with `|ξ|` log-spaced in
    /// `[0.25, 4]`, plus (for the `W^{1,∞}` norm only) 16 ramps
    /// `tanh((ω·v - c)/w)`; all normalized to unit norm of `kind`.
    /// Ramps have no finite `ℱ` norm and are left out in that case.
    pub fn standard(dim: usize, kind: NormKind, seed: u64) -> Self {
        let mut rng = substream(seed, stage::DICTIONARY, dim as u64);
        let mut entries = Vec::new();
        let unit = |rng: &mut SimRng| {
            let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            g.into_iter().map(|x| x / n).collect::<Vec<f64>>()
        };
        for k in 0..32 {
            let r = 0.25 * 16f64.powf(k as f64 / 31.0);
            let freq: Vec<f64> = unit(&mut rng).into_iter().map(|x| x * r).collect();
            let phase = 2.0 * std::f64::consts::PI * rng.random::<f64>();
            let term = vec![CosineTerm { amplitude: 1.0, frequency: freq, phase }];
            let f = match kind {
                NormKind::FourierF => TestFunction::cosine_packet(term).unwrap().normalized(),
                NormKind::Lipschitz => TestFunction::cosine_packet_lipschitz(term).unwrap().normalized(),
                NormKind::Sup => {
                    let (freq, phase) = (term[0].frequency.clone(), term[0].phase);
                    TestFunction::custom(
                        move |v| (freq.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() + phase).cos(),
                        NormKind::Sup,
                        1.0,
                        1.0,
                    )
                }
            };
            entries.push((format!("cos{k:02}"), f));
        }
        if kind != NormKind::FourierF {
            for k in 0..16 {
                let w = 0.5 + 1.5 * k as f64 / 15.0;
                let c = rng.random_range(-1.0..1.0);
                let f = TestFunction::ramp(unit(&mut rng), c, w).unwrap();
                let f = if kind == NormKind::Lipschitz { f.normalized() } else { f };
                entries.push((format!("ramp{k:02}"), f));
            }
        }
        Dictionary { entries }
    }

    pub fn tensor_powers(&self, ell: usize) -> Vec<(String, TensorObservable)> {
        self.entries
            .iter()
            .map(|(id, f)| (id.clone(), TensorObservable::power(f.clone(), ell).unwrap()))
            .collect()
    }
}

/// Chaos gap estimate with its bootstrap error.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChaosGap {
    pub ell: usize,
    /// `max_φ |Ê[(φ ⊗ 1)_sym] - R^ℓ_φ(f_t)|` over the dictionary; a lower
    /// bound for the supremum over all unit-norm observables.
    pub value: f64,
    /// Bootstrap RMS of the largest centered deviation over the dictionary
    /// (a simultaneous standard error for the supremum).
    pub stderr: f64,
    pub argmax: String,
    pub per_entry: Vec<(String, f64)>,
}

/// Largest dictionary discrepancy between the replica average of the
/// symmetrized observable and the product of reference averages.
///
/// The bootstrap resamples both the replicas and the reference points.
pub fn chaos_gap(
    replicas: &[Vec<f64>],
    dim: usize,
    reference: &EmpiricalMeasure<f64>,
    dictionary: &Dictionary,
    ell: usize,
    bootstrap: usize,
    seed: u64,
) -> Result<ChaosGap> {
    if dictionary.entries.is_empty() {
        return Err(Error::Invalid("empty dictionary".into()));
    }
    if replicas.is_empty() {
        return Err(Error::Invalid("no replicas".into()));
    }
    let n = replicas[0].len() / dim;
    if n < 2 * ell {
        return Err(Error::TooFewParticles { need: 2 * ell, got: n });
    }
    let tensors = dictionary.tensor_powers(ell);
    // sym[k][r]
    let sym: Vec<Vec<f64>> = tensors
        .par_iter()
        .map(|(_, phi)| replicas.iter().map(|v| sym_observable(v, dim, phi)).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    // per-point reference values of the single factor
    let ref_vals: Vec<Vec<f64>> = dictionary
        .entries
        .par_iter()
        .map(|(_, f)| (0..reference.len()).map(|i| f.eval(reference.point(i))).collect())
        .collect();
    let w = reference.weights();
    // signed discrepancy of entry k under optional resampling
    let delta = |k: usize, rep_idx: Option<&[usize]>, ref_idx: Option<&[usize]>| -> f64 {
        let e = match rep_idx {
            None => sym[k].iter().sum::<f64>() / sym[k].len() as f64,
            Some(idx) => idx.iter().map(|&r| sym[k][r]).sum::<f64>() / idx.len() as f64,
        };
        let m = match ref_idx {
            None => ref_vals[k].iter().zip(w).map(|(v, w)| v * w).sum::<f64>(),
            Some(idx) => idx.iter().map(|&i| ref_vals[k][i]).sum::<f64>() / idx.len() as f64,
        };
        e - m.powi(ell as i32)
    };
    let point: Vec<f64> = (0..tensors.len()).map(|k| delta(k, None, None)).collect();
    let per_entry: Vec<(String, f64)> =
        tensors.iter().zip(&point).map(|((id, _), d)| (id.clone(), d.abs())).collect();
    let (argmax, value) = per_entry
        .iter()
        .fold((String::new(), -1.0), |a, (id, g)| if *g > a.1 { (id.clone(), *g) } else { a });
    let uniform_ref = reference.is_uniform();
    // simultaneous error: RMS over resamples of max_k |Δ*_k - Δ_k|
    let sq: Vec<f64> = (0..bootstrap)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, stage::BOOTSTRAP, b as u64);
            let ri: Vec<usize> = (0..replicas.len()).map(|_| rng.random_range(0..replicas.len())).collect();
            let pi: Option<Vec<usize>> =
                uniform_ref.then(|| (0..reference.len()).map(|_| rng.random_range(0..reference.len())).collect());
            let dev = (0..tensors.len()).map(|k| (delta(k, Some(&ri), pi.as_deref()) - point[k]).abs()).fold(0.0, f64::max);
            dev * dev
        })
        .collect();
    let stderr = if sq.is_empty() { 0.0 } else { (sq.iter().sum::<f64>() / sq.len() as f64).sqrt() };
    Ok(ChaosGap { ell, value, stderr, argmax, per_entry })
}

/// One row of the Kac-sphere marginal table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MehlerRow {
    pub n: usize,
    pub w1: f64,
    pub stderr: f64,
    pub batches: usize,
}

/// `W₁` between the ℓ-particle marginal of the uniform law on
/// `S^{Nd-1}(√N)` and the Gaussian of the same energy per particle
/// (`N(0, Id/d)`, the standard Gaussian for d = 1).
///
/// Each batch draws `points` sphere samples `√N g/|g|` and compares their
/// first ℓ particles with the coupled Gaussian points `g/√d` built from the
/// same normal vectors; the table reports the batch mean and its standard
/// error.
pub fn mehler_marginal_check(
    n_grid: &[usize],
    dim: usize,
    ell: usize,
    points: usize,
    batches: usize,
    seed: u64,
) -> Result<Vec<MehlerRow>> {
    if ell * dim > 3 {
        return Err(Error::Invalid(format!("marginal dimension ell*d = {} exceeds 3", ell * dim)));
    }
    if batches < 2 || points == 0 {
        return Err(Error::Invalid("need at least two batches and one point".into()));
    }
    let k = ell * dim;
    n_grid
        .iter()
        .map(|&n| {
            if n < ell {
                return Err(Error::TooFewParticles { need: ell, got: n });
            }
            let vals: Vec<f64> = (0..batches)
                .into_par_iter()
                .map(|b| {
                    let mut rng = substream(seed, stage::INITIAL, ((n as u64) << 20) + b as u64);
                    let mut sphere = Vec::with_capacity(points * k);
                    let mut gauss = Vec::with_capacity(points * k);
                    let mut g = vec![0.0; n * dim];
                    for _ in 0..points {
                        for x in g.iter_mut() {
                            *x = StandardNormal.sample(&mut rng);
                        }
                        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                        let scale = (n as f64).sqrt() / norm;
                        sphere.extend(g[..k].iter().map(|x| x * scale));
                        gauss.extend(g[..k].iter().map(|x| x / (dim as f64).sqrt()));
                    }
                    let a = EmpiricalMeasure::uniform(k, sphere)?;
                    let b = EmpiricalMeasure::uniform(k, gauss)?;
                    Ok(wasserstein(&a, &b, 1.0)?.value)
                })
                .collect::<Result<_>>()?;
            let est = Estimate::from_samples(&vals);
            Ok(MehlerRow { n, w1: est.mean, stderr: est.stderr, batches })
        })
        .collect()
}

/// `|S^{d-1}|`-weighted closed form of `∫ (1 - e^{-θ|ξ|²}) |ξ|^{-2s} dξ`.
pub fn gaussian_identity_closed_form(d: usize, theta: f64, s: f64) -> f64 {
    use statrs::function::gamma::gamma;
    let a = d as f64 - 2.0 * s;
    sphere_area(d) * (-0.5) * theta.powf(-a / 2.0) * gamma(a / 2.0)
}
