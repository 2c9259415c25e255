//! Large-N reference solutions of the limit equation, the equilibrium
//! Maxwellian, and the contraction and relaxation checks built on them.
//!
//! The reference is produced by the particle simulator itself at large
//! `N_ref`; the checks here validate it against quantities the simulator
//! does not know about (conserved moments, the equilibrium, contraction).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::{sample_initial, BaseLaw, InitialDataSpec};
use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, Potential};
use crate::measures::EmpiricalMeasure;
use crate::metrics::{toscani_norm, wasserstein, FourierGrid, GaussianLaw, MomentPolicy};
use crate::particle::{simulate, Selection, SimulationPlan, Trajectory};
use crate::rng::{stage, substream};
use crate::stats::linear_fit;

/// `N(u, θ Id)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Maxwellian {
    pub mean: Vec<f64>,
    pub theta: f64,
}

impl Maxwellian {
    pub fn law(&self) -> GaussianLaw {
        GaussianLaw { mean: self.mean.clone(), theta: self.theta }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        BaseLaw::Gaussian { mean: self.mean.clone(), theta: self.theta }.sample(n, rng)
    }
}

/// Maxwellian with the same mean and energy: `θ = (M₂ - |u|²)/d`.
pub fn equilibrium(mean: &[f64], second_moment: f64) -> Result<Maxwellian> {
    let d = mean.len();
    if d == 0 {
        return Err(Error::Invalid("empty mean vector".into()));
    }
    let u2: f64 = mean.iter().map(|x| x * x).sum();
    let theta = (second_moment - u2) / d as f64;
    if !(theta > 1e-14 * second_moment.max(1e-300)) {
        return Err(Error::Invalid(format!("zero temperature: M2 = {second_moment}, |u|^2 = {u2}")));
    }
    Ok(Maxwellian { mean: mean.to_vec(), theta })
}

pub fn equilibrium_of(measure: &EmpiricalMeasure<f64>) -> Result<Maxwellian> {
    equilibrium(&measure.mean(), measure.moment(2.0))
}

/// How a reference solution is generated.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReferenceConfig {
    pub times: Vec<f64>,
    pub n_ref: usize,
    pub replicas: usize,
    pub seed: u64,
    #[serde(default)]
    pub selection: Selection,
    /// Shift each replica's initial sample so its mean is exactly the
    /// mean of `f₀` (variance reduction; only the center moves).
    #[serde(default)]
    pub center: bool,
}

/// Pooled large-N snapshots standing in for `f_t`.
#[derive(Clone, Debug)]
pub struct ReferenceSolution {
    pub dim: usize,
    pub times: Vec<f64>,
    pub n_ref: usize,
    pub seed: u64,
    pub role: String,
    pub trajectories: Vec<Trajectory<f64>>,
}

impl ReferenceSolution {
    pub fn replicas(&self) -> usize {
        self.trajectories.len()
    }

    fn pooled(&self, k: usize, pick: impl Fn(usize) -> bool) -> EmpiricalMeasure<f64> {
        let mut pts = Vec::new();
        for (r, tr) in self.trajectories.iter().enumerate() {
            if pick(r) {
                pts.extend_from_slice(&tr.snapshots[k]);
            }
        }
        EmpiricalMeasure::uniform(self.dim, pts).expect("nonempty pooled snapshot")
    }

    /// All replicas pooled at the `k`-th time.
    pub fn snapshot(&self, k: usize) -> EmpiricalMeasure<f64> {
        self.pooled(k, |_| true)
    }

    /// Two disjoint halves of the replicas at the `k`-th time (needs an
    /// even replica count of at least two).
    pub fn halves(&self, k: usize) -> Result<(EmpiricalMeasure<f64>, EmpiricalMeasure<f64>)> {
        if self.replicas() < 2 {
            return Err(Error::Invalid("noise floor needs at least two replicas".into()));
        }
        Ok((self.pooled(k, |r| r % 2 == 0), self.pooled(k, |r| r % 2 == 1)))
    }

    /// Largest relative drift of per-replica momentum and energy over all
    /// snapshots. Momentum drift is measured relative to `Σ|v_i|`.
    pub fn conservation_drift(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for tr in &self.trajectories {
            let stats = |v: &[f64]| {
                let mut p = vec![0.0; d];
                let (mut e, mut scale) = (0.0, 0.0);
                for c in v.chunks_exact(d) {
                    let n2: f64 = c.iter().map(|x| x * x).sum();
                    e += n2;
                    scale += n2.sqrt();
                    p.iter_mut().zip(c).for_each(|(a, b)| *a += b);
                }
                (p, e, scale)
            };
            let (p0, e0, s0) = stats(&tr.snapshots[0]);
            for snap in &tr.snapshots[1..] {
                let (p, e, _) = stats(snap);
                let dp = p.iter().zip(&p0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / s0.max(1e-300);
                worst = worst.max(dp).max((e - e0).abs() / e0.max(1e-300));
            }
        }
        worst
    }
}

/// Run `replicas` independent `N_ref`-particle systems from `f₀^{⊗N_ref}`
/// (or the sphere modes of `initial`) and keep their snapshots.
pub fn mean_field_reference(
    initial: &InitialDataSpec,
    kernel: &KernelSpec<f64>,
    cfg: &ReferenceConfig,
) -> Result<ReferenceSolution> {
    initial.validate()?;
    if cfg.n_ref < 1000 {
        return Err(Error::Invalid(format!("reference needs N_ref >= 1000, got {}", cfg.n_ref)));
    }
    if initial.base.dim() != kernel.dim() {
        return Err(Error::Dimension { expected: kernel.dim(), got: initial.base.dim() });
    }
    let d = kernel.dim();
    let target_mean = initial.base.mean();
    let plan = SimulationPlan { times: cfg.times.clone(), replicas: cfg.replicas, seed: cfg.seed, selection: cfg.selection };
    let trajectories = simulate(
        |_, rng| {
            let mut v = sample_initial(initial, cfg.n_ref, rng).map(|s| s.velocities).unwrap_or_default();
            if cfg.center && !v.is_empty() {
                let n = cfg.n_ref as f64;
                let mut m = vec![0.0; d];
                for c in v.chunks_exact(d) {
                    m.iter_mut().zip(c).for_each(|(a, b)| *a += b / n);
                }
                for c in v.chunks_exact_mut(d) {
                    for k in 0..d {
                        c[k] += target_mean[k] - m[k];
                    }
                }
            }
            v
        },
        kernel,
        &plan,
    )?;
    Ok(ReferenceSolution {
        dim: d,
        times: cfg.times.clone(),
        n_ref: cfg.n_ref,
        seed: cfg.seed,
        role: "reference".into(),
        trajectories,
    })
}

/// Parameters of [`contraction_check`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContractionConfig {
    pub times: Vec<f64>,
    pub n_ref: usize,
    /// Replicas per law; the noise floor compares disjoint halves.
    pub replicas: usize,
    pub seed: u64,
    /// Toscani exponent (the contracting `|·|₂` by default).
    pub s: f64,
    pub grid: FourierGrid,
    /// `W₂` is computed between random subsamples of this size.
    pub w2_points: usize,
}

impl ContractionConfig {
    pub fn new(times: Vec<f64>, seed: u64) -> Self {
        ContractionConfig {
            times,
            n_ref: 10_000,
            replicas: 2,
            seed,
            s: 2.0,
            grid: FourierGrid { r_min: 0.05, r_max: 20.0, radii: 32, directions: crate::metrics::Directions::Default(16) },
            w2_points: 512,
        }
    }
}

/// Time series of a contraction check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContractionReport {
    pub times: Vec<f64>,
    pub toscani: Vec<f64>,
    pub toscani_floor: Vec<f64>,
    pub w2: Vec<f64>,
    pub w2_floor: Vec<f64>,
    /// `(i, j)` with `i < j` and `D_j > D_i + 2·floor`.
    pub toscani_violations: Vec<(usize, usize)>,
    /// `(i, j)` with `i < j` and `W₂(t_j) > W₂(t_i) + 2·floor`.
    pub w2_violations: Vec<(usize, usize)>,
    pub max_drift: f64,
}

impl ContractionReport {
    pub fn is_clean(&self) -> bool {
        self.toscani_violations.is_empty() && self.w2_violations.is_empty()
    }
}

fn subsample<R: Rng + ?Sized>(m: &EmpiricalMeasure<f64>, k: usize, rng: &mut R) -> EmpiricalMeasure<f64> {
    if k >= m.len() {
        return m.clone();
    }
    let idx = rand::seq::index::sample(rng, m.len(), k);
    let mut pts = Vec::with_capacity(k * m.dim());
    for i in idx.iter() {
        pts.extend_from_slice(m.point(i));
    }
    EmpiricalMeasure::uniform(m.dim(), pts).unwrap()
}

/// Evolve two mean- and energy-matched laws under a Maxwell kernel and
/// track `|f_t - g_t|_s` and `W₂(f_t, g_t)` against split-replica noise.
pub fn contraction_check(
    f0: &BaseLaw,
    g0: &BaseLaw,
    kernel: &KernelSpec<f64>,
    cfg: &ContractionConfig,
) -> Result<ContractionReport> {
    if kernel.potential() != Potential::Maxwell {
        return Err(Error::Kernel("contraction check is defined for Maxwell kernels only".into()));
    }
    f0.validate()?;
    g0.validate()?;
    let (mf, mg) = (f0.mean(), g0.mean());
    let tol = 1e-9 * (1.0 + f0.second_moment());
    if mf.len() != mg.len()
        || mf.iter().zip(&mg).any(|(a, b)| (a - b).abs() > tol)
        || (f0.second_moment() - g0.second_moment()).abs() > tol
    {
        return Err(Error::Invalid("mismatched constraints: f0 and g0 must share mean and energy".into()));
    }
    if cfg.replicas < 2 || cfg.replicas % 2 != 0 {
        return Err(Error::Invalid("contraction check needs an even number (>= 2) of replicas".into()));
    }
    let rc = |seed| ReferenceConfig {
        times: cfg.times.clone(),
        n_ref: cfg.n_ref,
        replicas: cfg.replicas,
        seed,
        selection: Selection::Auto,
        center: true,
    };
    let rf = mean_field_reference(&InitialDataSpec::tensor(f0.clone()), kernel, &rc(crate::rng::child_seed(cfg.seed, stage::REFERENCE_SAMPLE, 0)))?;
    let rg = mean_field_reference(&InitialDataSpec::tensor(g0.clone()), kernel, &rc(crate::rng::child_seed(cfg.seed, stage::REFERENCE_SAMPLE, 1)))?;
    let per_time: Vec<(f64, f64, f64, f64)> = (0..cfg.times.len())
        .map(|k| {
            let (f, g) = (rf.snapshot(k), rg.snapshot(k));
            let (fa, fb) = rf.halves(k)?;
            let (ga, gb) = rg.halves(k)?;
            let ts = |a: &EmpiricalMeasure<f64>, b: &EmpiricalMeasure<f64>| {
                toscani_norm(a, b, cfg.s, &cfg.grid, MomentPolicy::Require).map(|m| m.value)
            };
            let tos = ts(&f, &g)?;
            let tos_floor = ts(&fa, &fb)?.max(ts(&ga, &gb)?);
            let mut rng = substream(cfg.seed, stage::SUBSAMPLE, k as u64);
            let w = |a: &EmpiricalMeasure<f64>, b: &EmpiricalMeasure<f64>, rng: &mut crate::rng::SimRng| {
                let (a, b) = (subsample(a, cfg.w2_points, rng), subsample(b, cfg.w2_points, rng));
                wasserstein(&a, &b, 2.0).map(|m| m.value)
            };
            let w2 = w(&f, &g, &mut rng)?;
            let w2_floor = w(&fa, &fb, &mut rng)?.max(w(&ga, &gb, &mut rng)?);
            Ok((tos, tos_floor, w2, w2_floor))
        })
        .collect::<Result<_>>()?;
    let toscani: Vec<f64> = per_time.iter().map(|x| x.0).collect();
    let toscani_floor: Vec<f64> = per_time.iter().map(|x| x.1).collect();
    let w2: Vec<f64> = per_time.iter().map(|x| x.2).collect();
    let w2_floor: Vec<f64> = per_time.iter().map(|x| x.3).collect();
    let mut toscani_violations = Vec::new();
    for j in 0..toscani.len() {
        for i in 0..j {
            let floor = toscani_floor[i].max(toscani_floor[j]);
            if toscani[j] > toscani[i] + 2.0 * floor {
                toscani_violations.push((i, j));
            }
        }
    }
    let mut w2_violations = Vec::new();
    for j in 0..w2.len() {
        for i in 0..j {
            if w2[j] > w2[i] + 2.0 * w2_floor[i].max(w2_floor[j]) {
                w2_violations.push((i, j));
            }
        }
    }
    Ok(ContractionReport {
        times: cfg.times.clone(),
        toscani,
        toscani_floor,
        w2,
        w2_floor,
        toscani_violations,
        w2_violations,
        max_drift: rf.conservation_drift().max(rg.conservation_drift()),
    })
}

/// Distance used by [`relaxation_fit`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RelaxationMetric {
    Toscani { s: f64, grid: FourierGrid },
    /// `W₁` between a subsample of the reference and an equal-size
    /// Maxwellian sample.
    W1 { points: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelaxationFit {
    pub equilibrium: Maxwellian,
    pub distances: Vec<f64>,
    pub floor: f64,
    /// Fitted `λ̂ = -d log(dist)/dt` over the points above `3·floor`.
    pub rate: f64,
    pub r_squared: f64,
    pub fitted_points: usize,
    /// Closed-form `λ̄` of the kernel.
    pub lambda_bar: f64,
    pub no_decay: bool,
}

/// Distance from each reference snapshot to `equilibrium(f₀)`.
pub fn distances_to_equilibrium(
    reference: &ReferenceSolution,
    eq: &Maxwellian,
    metric: &RelaxationMetric,
) -> Result<Vec<f64>> {
    (0..reference.times.len())
        .into_par_iter()
        .map(|k| distance_to(&reference.snapshot(k), eq, metric, reference.seed, k as u64))
        .collect()
}

fn distance_to(m: &EmpiricalMeasure<f64>, eq: &Maxwellian, metric: &RelaxationMetric, seed: u64, key: u64) -> Result<f64> {
    match metric {
        RelaxationMetric::Toscani { s, grid } => Ok(toscani_norm(m, &eq.law(), *s, grid, MomentPolicy::Require)?.value),
        RelaxationMetric::W1 { points } => {
            let mut rng = substream(seed, stage::SUBSAMPLE, key);
            let a = subsample(m, *points, &mut rng);
            let b = EmpiricalMeasure::uniform(m.dim(), eq.sample(a.len(), &mut rng))?;
            Ok(wasserstein(&a, &b, 1.0)?.value)
        }
    }
}

/// Fit the exponential approach to equilibrium of a reference solution.
pub fn relaxation_fit(
    reference: &ReferenceSolution,
    kernel: &KernelSpec<f64>,
    metric: &RelaxationMetric,
) -> Result<RelaxationFit> {
    let eq = equilibrium_of(&reference.snapshot(0))?;
    let distances = distances_to_equilibrium(reference, &eq, metric)?;
    let last = reference.times.len() - 1;
    let floor = match reference.halves(last) {
        Ok((a, b)) => match metric {
            RelaxationMetric::Toscani { s, grid } => toscani_norm(&a, &b, *s, grid, MomentPolicy::Taylor)?.value,
            RelaxationMetric::W1 { .. } => distance_to(&a, &eq, metric, reference.seed ^ 1, u64::MAX)?,
        },
        Err(_) => 0.0,
    };
    let keep: Vec<usize> = (0..distances.len()).take_while(|&k| distances[k] > 3.0 * floor && distances[k] > 0.0).collect();
    let lambda_bar = kernel.lambda_bar();
    if keep.len() < 3 {
        return Ok(RelaxationFit {
            equilibrium: eq,
            distances,
            floor,
            rate: 0.0,
            r_squared: 0.0,
            fitted_points: keep.len(),
            lambda_bar,
            no_decay: true,
        });
    }
    let x: Vec<f64> = keep.iter().map(|&k| reference.times[k]).collect();
    let y: Vec<f64> = keep.iter().map(|&k| distances[k].ln()).collect();
    let fit = linear_fit(&x, &y);
    let rate = -fit.slope;
    Ok(RelaxationFit {
        equilibrium: eq,
        distances,
        floor,
        rate,
        r_squared: fit.r_squared,
        fitted_points: keep.len(),
        lambda_bar,
        no_decay: fit.r_squared < 0.9 || !(rate > 0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibrium_examples() {
        let m = equilibrium(&[0.0, 0.0, 0.0], 3.0).unwrap();
        assert_eq!(m.theta, 1.0);
        let two = EmpiricalMeasure::uniform(3, vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0]).unwrap();
        let m = equilibrium_of(&two).unwrap();
        assert!((m.theta - 1.0 / 3.0).abs() < 1e-15);
        assert!(m.mean.iter().all(|x| x.abs() < 1e-15));
        let shifted = EmpiricalMeasure::uniform(3, vec![3.0, -1.0, 2.0, 1.0, -1.0, 2.0]).unwrap();
        let m2 = equilibrium_of(&shifted).unwrap();
        assert!((m2.theta - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(m2.mean, vec![2.0, -1.0, 2.0]);
    }

    #[test]
    fn zero_temperature_is_an_error() {
        assert!(equilibrium(&[1.0, 0.0], 1.0).is_err());
        let dirac = EmpiricalMeasure::uniform(2, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!(equilibrium_of(&dirac).is_err());
    }

    #[test]
    fn reference_needs_large_n() {
        let spec = InitialDataSpec::tensor(BaseLaw::gaussian(3, 1.0));
        let cfg = ReferenceConfig { times: vec![0.0, 1.0], n_ref: 100, replicas: 1, seed: 1, selection: Selection::Auto, center: false };
        assert!(mean_field_reference(&spec, &KernelSpec::maxwell(3, 1.0).unwrap(), &cfg).is_err());
    }

    #[test]
    fn contraction_rejects_mismatched_laws() {
        let k = KernelSpec::maxwell(3, 1.0).unwrap();
        let cfg = ContractionConfig::new(vec![0.0, 1.0], 3);
        let err = contraction_check(&BaseLaw::gaussian(3, 1.0), &BaseLaw::gaussian(3, 2.0), &k, &cfg).unwrap_err();
        assert!(err.to_string().contains("mismatched"));
        let hs = KernelSpec::hard_spheres(3, 1.0).unwrap();
        assert!(contraction_check(&BaseLaw::gaussian(3, 1.0), &BaseLaw::gaussian(3, 1.0), &hs, &cfg).is_err());
    }

    #[test]
    fn centered_reference_conserves() {
        let spec = InitialDataSpec::tensor(BaseLaw::UniformBall { dim: 3, radius: 5f64.sqrt() });
        let cfg = ReferenceConfig { times: vec![0.0, 0.5, 1.0], n_ref: 1000, replicas: 2, seed: 9, selection: Selection::Auto, center: true };
        let r = mean_field_reference(&spec, &KernelSpec::hard_spheres(3, 1.0).unwrap(), &cfg).unwrap();
        assert!(r.conservation_drift() < 1e-10);
        assert_eq!(r.role, "reference");
        for k in 0..3 {
            assert!(r.snapshot(k).mean().iter().all(|m| m.abs() < 1e-12));
        }
    }
}
