//! Event-driven simulation of the N-particle Kac collision process.
//!
//! Time is the scaled clock of the master equation: the total jump intensity
//! is `Λ(V) = (2/N) Σ_{i<j} Γ(|v_i - v_j|) ‖b‖₁`, and the colliding pair is
//! chosen with probability proportional to `Γ(|v_i - v_j|)`. This aggregated
//! form is equivalent in law to racing one exponential clock per pair.
//!
//! Hard spheres use an exact implicit rate table (per-particle row sums with
//! O(N) incremental updates) below [`MAJORANT_THRESHOLD`] particles, and a
//! fictitious-collision scheme with majorant `2 max_j |v_j - ū|` above it.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{collide, KernelSpec, Potential};
use crate::quadrature::gauss_legendre_on;
use crate::rng::{stage, substream, SimRng};
use crate::scalar::{dist, Real};

/// Above this many particles hard-sphere pair selection switches to the
/// majorant (thinning) scheme.
pub const MAJORANT_THRESHOLD: usize = 4096;

/// How hard-sphere collision pairs are selected.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    #[default]
    Auto,
    Exact,
    Majorant,
}

#[derive(Clone, Debug)]
enum RateCache<T: Real> {
    Constant,
    Exact { row_sums: Vec<T>, since_refresh: usize },
    Majorant { center: Vec<T>, max_dev: T, since_refresh: usize },
}

/// The N-particle velocity vector with its clock and event counter.
#[derive(Clone, Debug)]
pub struct SystemState<T: Real = f64> {
    dim: usize,
    velocities: Vec<T>,
    time: T,
    n_events: u64,
    selection: Selection,
    cache: Option<RateCache<T>>,
}

/// A collision scheduled but not yet applied.
#[derive(Clone, Copy, Debug)]
pub struct PendingEvent<T> {
    pub time: T,
    pub i: usize,
    pub j: usize,
}

impl<T: Real> SystemState<T> {
    pub fn new(dim: usize, velocities: Vec<T>) -> Result<Self> {
        if dim == 0 || velocities.len() % dim != 0 {
            return Err(Error::Dimension { expected: dim, got: velocities.len() });
        }
        let n = velocities.len() / dim;
        if n < 2 {
            return Err(Error::TooFewParticles { need: 2, got: n });
        }
        Ok(SystemState {
            dim,
            velocities,
            time: T::zero(),
            n_events: 0,
            selection: Selection::Auto,
            cache: None,
        })
    }

    pub fn with_selection(mut self, selection: Selection) -> Self {
        self.selection = selection;
        self.cache = None;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.velocities.len() / self.dim
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn n_events(&self) -> u64 {
        self.n_events
    }

    pub fn velocities(&self) -> &[T] {
        &self.velocities
    }

    pub fn velocity(&self, i: usize) -> &[T] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }

    /// Mutable access; drops any cached rates.
    pub fn velocities_mut(&mut self) -> &mut [T] {
        self.cache = None;
        &mut self.velocities
    }

    pub fn momentum(&self) -> Vec<T> {
        let mut p = vec![T::zero(); self.dim];
        for v in self.velocities.chunks_exact(self.dim) {
            for (a, &b) in p.iter_mut().zip(v) {
                *a += b;
            }
        }
        p
    }

    /// `Σ_j |v_j|²`.
    pub fn energy(&self) -> T {
        self.velocities.iter().map(|&x| x * x).sum()
    }

    /// `M_k^N(V) = (1/N) Σ_j |v_j|^k`.
    pub fn moment(&self, k: f64) -> T {
        let k = T::of(k);
        let s: T = self
            .velocities
            .chunks_exact(self.dim)
            .map(|v| crate::scalar::norm_sq(v).sqrt().powf(k))
            .sum();
        s / T::of_usize(self.n())
    }

    fn use_majorant(&self) -> bool {
        match self.selection {
            Selection::Exact => false,
            Selection::Majorant => true,
            Selection::Auto => self.n() > MAJORANT_THRESHOLD,
        }
    }

    fn build_cache(&self, spec: &KernelSpec<T>) -> RateCache<T> {
        match spec.potential() {
            Potential::Maxwell => RateCache::Constant,
            Potential::HardSpheres if self.use_majorant() => {
                let n = self.n();
                let mut center = self.momentum();
                for c in center.iter_mut() {
                    *c /= T::of_usize(n);
                }
                let max_dev = self
                    .velocities
                    .chunks_exact(self.dim)
                    .map(|v| dist(v, &center))
                    .fold(T::zero(), T::max);
                RateCache::Majorant { center, max_dev, since_refresh: 0 }
            }
            Potential::HardSpheres => RateCache::Exact { row_sums: self.row_sums(), since_refresh: 0 },
        }
    }

    fn row_sums(&self) -> Vec<T> {
        let n = self.n();
        let mut rows = vec![T::zero(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                let r = dist(self.velocity(i), self.velocity(j));
                rows[i] += r;
                rows[j] += r;
            }
        }
        rows
    }

    /// Schedule the next real collision without modifying velocities.
    ///
    /// Returns `None` when the total rate vanishes (hard spheres with all
    /// velocities equal).
    pub fn propose<R: Rng + ?Sized>(&mut self, spec: &KernelSpec<T>, rng: &mut R) -> Option<PendingEvent<T>> {
        if self.cache.is_none() {
            self.cache = Some(self.build_cache(spec));
        }
        let n = self.n();
        let dim = self.dim;
        let nf = T::of_usize(n);
        let mass = spec.angular_mass();
        let vel = &self.velocities;
        match self.cache.as_mut().unwrap() {
            RateCache::Constant => {
                let lambda = T::of_usize(n - 1) * mass;
                let e: f64 = rng.sample(Exp1);
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                Some(PendingEvent { time: self.time + T::of(e) / lambda, i, j })
            }
            RateCache::Exact { row_sums, .. } => {
                let total: T = row_sums.iter().copied().sum();
                if total <= T::zero() {
                    return None;
                }
                // Λ = (2/N) Σ_{i<j} Γ ‖b‖ = (1/N) Σ_i row_i ‖b‖
                let lambda = total / nf * mass;
                let e: f64 = rng.sample(Exp1);
                let time = self.time + T::of(e) / lambda;
                let mut target = T::of(rng.random::<f64>()) * total;
                let mut i = n - 1;
                for (k, &r) in row_sums.iter().enumerate() {
                    if target < r {
                        i = k;
                        break;
                    }
                    target -= r;
                }
                while row_sums[i] <= T::zero() {
                    i = (i + n - 1) % n;
                }
                let vi = &vel[i * dim..(i + 1) * dim];
                let fresh: T = (0..n)
                    .filter(|&k| k != i)
                    .map(|k| dist(vi, &vel[k * dim..(k + 1) * dim]))
                    .sum();
                let mut target = T::of(rng.random::<f64>()) * fresh;
                let mut j = usize::MAX;
                let mut last_positive = usize::MAX;
                for k in 0..n {
                    if k == i {
                        continue;
                    }
                    let r = dist(vi, &vel[k * dim..(k + 1) * dim]);
                    if r > T::zero() {
                        last_positive = k;
                    }
                    if target < r {
                        j = k;
                        break;
                    }
                    target -= r;
                }
                if j == usize::MAX {
                    j = last_positive;
                }
                if j == usize::MAX {
                    // row i is degenerate; fall back to a full rebuild
                    *row_sums = self_row_sums(vel, dim);
                    return self.propose(spec, rng);
                }
                Some(PendingEvent { time, i, j })
            }
            RateCache::Majorant { max_dev, .. } => {
                let gmax = T::of(2.0) * *max_dev;
                if gmax <= T::zero() {
                    return None;
                }
                let lambda_bar = T::of_usize(n - 1) * gmax * mass;
                let mut time = self.time;
                loop {
                    let e: f64 = rng.sample(Exp1);
                    time += T::of(e) / lambda_bar;
                    let i = rng.random_range(0..n);
                    let mut j = rng.random_range(0..n - 1);
                    if j >= i {
                        j += 1;
                    }
                    let g = dist(&vel[i * dim..(i + 1) * dim], &vel[j * dim..(j + 1) * dim]);
                    if T::of(rng.random::<f64>()) * gmax < g {
                        return Some(PendingEvent { time, i, j });
                    }
                }
            }
        }
    }

    /// Apply a scheduled collision: draw σ and update the pair.
    pub fn apply<R: Rng + ?Sized>(&mut self, ev: PendingEvent<T>, spec: &KernelSpec<T>, rng: &mut R) {
        let dim = self.dim;
        let n = self.n();
        let (i, j) = (ev.i, ev.j);
        let mut scratch = [T::zero(); 16];
        let mut scratch_vec;
        let scratch: &mut [T] = if dim <= 16 {
            &mut scratch[..]
        } else {
            scratch_vec = vec![T::zero(); dim];
            &mut scratch_vec
        };
        let mut old_i = [T::zero(); 16];
        let mut old_j = [T::zero(); 16];
        let track_rows = dim <= 16 && matches!(self.cache, Some(RateCache::Exact { .. }));
        if track_rows {
            old_i[..dim].copy_from_slice(self.velocity(i));
            old_j[..dim].copy_from_slice(self.velocity(j));
        }
        {
            let (lo, hi) = (i.min(j), i.max(j));
            let (left, right) = self.velocities.split_at_mut(hi * dim);
            let a = &mut left[lo * dim..(lo + 1) * dim];
            let b = &mut right[..dim];
            if i < j {
                collide(spec, a, b, rng, scratch);
            } else {
                collide(spec, b, a, rng, scratch);
            }
        }
        self.time = ev.time;
        self.n_events += 1;
        let vel = &self.velocities;
        match &mut self.cache {
            Some(RateCache::Exact { row_sums, since_refresh }) => {
                *since_refresh += 1;
                if !track_rows || *since_refresh >= n {
                    *row_sums = self_row_sums(vel, dim);
                    *since_refresh = 0;
                } else {
                    let vi = &vel[i * dim..(i + 1) * dim];
                    let vj = &vel[j * dim..(j + 1) * dim];
                    let mut ri = T::zero();
                    let mut rj = T::zero();
                    for k in 0..n {
                        if k == i || k == j {
                            continue;
                        }
                        let vk = &vel[k * dim..(k + 1) * dim];
                        let ni = dist(vk, vi);
                        let nj = dist(vk, vj);
                        row_sums[k] += (ni - dist(vk, &old_i[..dim])) + (nj - dist(vk, &old_j[..dim]));
                        ri += ni;
                        rj += nj;
                    }
                    let rij = dist(vi, vj);
                    row_sums[i] = ri + rij;
                    row_sums[j] = rj + rij;
                }
            }
            Some(RateCache::Majorant { center, max_dev, since_refresh }) => {
                *since_refresh += 1;
                if *since_refresh >= n {
                    *max_dev = vel
                        .chunks_exact(dim)
                        .map(|v| dist(v, center))
                        .fold(T::zero(), T::max);
                    *since_refresh = 0;
                } else {
                    let di = dist(&vel[i * dim..(i + 1) * dim], center);
                    let dj = dist(&vel[j * dim..(j + 1) * dim], center);
                    *max_dev = max_dev.max(di).max(dj);
                }
            }
            _ => {}
        }
    }

    /// Advance by one collision. Returns `false` (and sets the clock to
    /// `+∞`) when no collision can ever happen.
    pub fn step<R: Rng + ?Sized>(&mut self, spec: &KernelSpec<T>, rng: &mut R) -> bool {
        match self.propose(spec, rng) {
            Some(ev) => {
                self.apply(ev, spec, rng);
                true
            }
            None => {
                self.time = T::infinity();
                false
            }
        }
    }
}

fn self_row_sums<T: Real>(vel: &[T], dim: usize) -> Vec<T> {
    let n = vel.len() / dim;
    let mut rows = vec![T::zero(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let r = dist(&vel[i * dim..(i + 1) * dim], &vel[j * dim..(j + 1) * dim]);
            rows[i] += r;
            rows[j] += r;
        }
    }
    rows
}

/// `Λ(V) = (2/N) Σ_{i<j} Γ(|v_i - v_j|) ‖b‖₁`, computed directly.
pub fn total_rate<T: Real>(state: &SystemState<T>, spec: &KernelSpec<T>) -> T {
    let n = state.n();
    let mut s = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            s += spec.gamma(dist(state.velocity(i), state.velocity(j)));
        }
    }
    T::of(2.0) / T::of_usize(n) * s * spec.angular_mass()
}

/// Snapshots of one replica.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T: Real = f64> {
    pub replica: usize,
    pub seed: u64,
    pub dim: usize,
    pub n: usize,
    pub times: Vec<T>,
    /// One flat velocity array per snapshot time.
    pub snapshots: Vec<Vec<T>>,
    /// Collision count at each snapshot.
    pub events: Vec<u64>,
}

/// Parameters for [`simulate`].
#[derive(Clone, Debug)]
pub struct SimulationPlan<T: Real> {
    pub times: Vec<T>,
    pub replicas: usize,
    pub seed: u64,
    pub selection: Selection,
}

/// Run `replicas` independent trajectories and record velocities at every
/// snapshot time.
///
/// `initial(replica, rng)` produces the flat initial velocity array. Replica
/// `r` uses RNG substreams keyed by `(seed, r)` only, and results come back
/// in replica order, so the output is independent of the worker count.
pub fn simulate<T, F>(initial: F, spec: &KernelSpec<T>, plan: &SimulationPlan<T>) -> Result<Vec<Trajectory<T>>>
where
    T: Real,
    F: Fn(usize, &mut SimRng) -> Vec<T> + Sync,
{
    if plan.replicas == 0 {
        return Err(Error::Invalid("need at least one replica".into()));
    }
    if plan.times.iter().any(|t| !(*t >= T::zero())) || plan.times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("snapshot times must be nonnegative and strictly increasing".into()));
    }
    (0..plan.replicas)
        .into_par_iter()
        .map(|r| {
            let mut init_rng = substream(plan.seed, stage::INITIAL, r as u64);
            let v0 = initial(r, &mut init_rng);
            if v0.len() % spec.dim() != 0 {
                return Err(Error::Dimension { expected: spec.dim(), got: v0.len() % spec.dim() });
            }
            let state = SystemState::new(spec.dim(), v0)?.with_selection(plan.selection);
            let mut rng = substream(plan.seed, stage::TRAJECTORY, r as u64);
            Ok(run_trajectory(state, spec, &plan.times, &mut rng, r, plan.seed))
        })
        .collect()
}

/// Drive a single state through the snapshot times.
pub fn run_trajectory<T: Real, R: Rng + ?Sized>(
    mut state: SystemState<T>,
    spec: &KernelSpec<T>,
    times: &[T],
    rng: &mut R,
    replica: usize,
    seed: u64,
) -> Trajectory<T> {
    let mut traj = Trajectory {
        replica,
        seed,
        dim: state.dim(),
        n: state.n(),
        times: times.to_vec(),
        snapshots: Vec::with_capacity(times.len()),
        events: Vec::with_capacity(times.len()),
    };
    if times.is_empty() {
        return traj;
    }
    let mut pending = state.propose(spec, rng);
    for &t in times {
        while let Some(ev) = pending {
            if ev.time > t {
                break;
            }
            state.apply(ev, spec, rng);
            pending = state.propose(spec, rng);
        }
        traj.snapshots.push(state.velocities().to_vec());
        traj.events.push(state.n_events());
    }
    traj
}

/// Result of a quadrature evaluation of the generator.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorValue {
    pub value: f64,
    /// Relative change between orders Q and 2Q.
    pub rel_change: f64,
    /// `rel_change <= 1e-6`.
    pub converged: bool,
}

/// `(G^N φ)(V) = (1/N) Σ_{i≠j} Γ_ij ∫ b(cos θ_ij) [φ(V*_ij) - φ(V)] dσ` by
/// product quadrature on the sphere (Gauss-Legendre in cos θ times a
/// uniform azimuth for d = 3, uniform angle for d = 2).
pub fn apply_generator<T: Real>(
    phi: &dyn Fn(&[T]) -> f64,
    state: &SystemState<T>,
    spec: &KernelSpec<T>,
    order: usize,
) -> Result<GeneratorValue> {
    if order < 8 {
        return Err(Error::Invalid(format!("quadrature order must be >= 8, got {order}")));
    }
    let coarse = generator_at_order(phi, state, spec, order)?;
    let fine = generator_at_order(phi, state, spec, 2 * order)?;
    let scale = fine.abs().max(coarse.abs()).max(1e-300);
    let rel_change = if fine == coarse { 0.0 } else { (fine - coarse).abs() / scale };
    Ok(GeneratorValue { value: fine, rel_change, converged: rel_change <= 1e-6 })
}

/// Quadrature nodes `(σ expressed as (cos θ, sin θ, azimuth), weight)` with the
/// angular density folded into the weight.
fn sphere_rule<T: Real>(spec: &KernelSpec<T>, order: usize) -> Result<Vec<(f64, f64, f64)>> {
    use std::f64::consts::PI;
    match spec.dim() {
        2 => {
            let mut nodes = Vec::new();
            let m = 2 * order;
            for k in 0..m {
                let phi = 2.0 * PI * (k as f64 + 0.5) / m as f64;
                let theta = if phi <= PI { phi } else { 2.0 * PI - phi };
                nodes.push((phi.cos(), phi.sin(), 2.0 * PI / m as f64 * spec.b(theta)));
            }
            Ok(nodes)
        }
        3 => {
            // split at the cutoff so the integrand is smooth on each piece
            let mut breaks = vec![-1.0];
            if let crate::kernels::AngularLaw::PowerLaw { eps_cut, .. } = spec.law() {
                breaks.push(eps_cut.cos());
            } else {
                breaks.push(1.0);
            }
            let (cs, ws) = gauss_legendre_on(order, breaks[0], breaks[1]);
            let m = 2 * order;
            let mut out = Vec::with_capacity(order * m);
            for (&c, &w) in cs.iter().zip(&ws) {
                let theta = c.clamp(-1.0, 1.0).acos();
                let bw = w * spec.b(theta) * 2.0 * PI / m as f64;
                for k in 0..m {
                    let az = 2.0 * PI * (k as f64 + 0.5) / m as f64;
                    out.push((c, az, bw));
                }
            }
            Ok(out)
        }
        d => Err(Error::Invalid(format!("generator quadrature implemented for d in {{2, 3}}, got {d}"))),
    }
}

fn generator_at_order<T: Real>(
    phi: &dyn Fn(&[T]) -> f64,
    state: &SystemState<T>,
    spec: &KernelSpec<T>,
    order: usize,
) -> Result<f64> {
    let rule = sphere_rule(spec, order)?;
    let d = state.dim();
    let n = state.n();
    let base = phi(state.velocities());
    let mut work = state.velocities().to_vec();
    let mut total = 0.0;
    let mut sigma = vec![0.0f64; d];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let vi: Vec<f64> = state.velocity(i).iter().map(|x| x.as_f64()).collect();
            let vj: Vec<f64> = state.velocity(j).iter().map(|x| x.as_f64()).collect();
            let speed: f64 = vi.iter().zip(&vj).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if speed == 0.0 {
                continue;
            }
            let gamma = spec.gamma(T::of(speed)).as_f64();
            let u: Vec<f64> = vi.iter().zip(&vj).map(|(a, b)| (a - b) / speed).collect();
            let (e1, e2) = orthonormal_frame(&u);
            let mut acc = 0.0;
            for &(a, b, w) in &rule {
                if w == 0.0 {
                    continue;
                }
                if d == 2 {
                    // (a, b) = (cos θ, sin θ)
                    for k in 0..2 {
                        sigma[k] = a * u[k] + b * e1[k];
                    }
                } else {
                    let (c, az) = (a, b);
                    let s = (1.0 - c * c).max(0.0).sqrt();
                    let (sa, ca) = az.sin_cos();
                    for k in 0..3 {
                        sigma[k] = c * u[k] + s * (ca * e1[k] + sa * e2[k]);
                    }
                }
                for k in 0..d {
                    let mid = 0.5 * (vi[k] + vj[k]);
                    work[i * d + k] = T::of(mid + 0.5 * speed * sigma[k]);
                    work[j * d + k] = T::of(mid - 0.5 * speed * sigma[k]);
                }
                acc += w * (phi(&work) - base);
            }
            work[i * d..(i + 1) * d].copy_from_slice(state.velocity(i));
            work[j * d..(j + 1) * d].copy_from_slice(state.velocity(j));
            total += gamma * acc;
        }
    }
    Ok(total / n as f64)
}

/// Two unit vectors completing `u` to an orthonormal frame (second one is
/// unused in d = 2).
fn orthonormal_frame(u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = u.len();
    if d == 2 {
        return (vec![-u[1], u[0]], vec![0.0, 0.0]);
    }
    let k = (0..d).min_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs())).unwrap();
    let mut e = vec![0.0; d];
    e[k] = 1.0;
    let p: f64 = e.iter().zip(u).map(|(a, b)| a * b).sum();
    let mut e1: Vec<f64> = e.iter().zip(u).map(|(a, b)| a - p * b).collect();
    let n1 = e1.iter().map(|x| x * x).sum::<f64>().sqrt();
    e1.iter_mut().for_each(|x| *x /= n1);
    let e2 = vec![u[1] * e1[2] - u[2] * e1[1], u[2] * e1[0] - u[0] * e1[2], u[0] * e1[1] - u[1] * e1[0]];
    (e1, e2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_state(n: usize, d: usize, seed: u64) -> SystemState<f64> {
        let mut rng = substream(seed, 99, 0);
        let v: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        SystemState::new(d, v).unwrap()
    }

    #[test]
    fn total_rate_examples() {
        let mm = KernelSpec::<f64>::maxwell(3, 1.0).unwrap();
        let s = gaussian_state(4, 3, 1);
        assert!((total_rate(&s, &mm) - 3.0).abs() < 1e-14);
        for n in [2usize, 5, 17, 64] {
            let s = gaussian_state(n, 3, n as u64);
            assert!((total_rate(&s, &mm) - (n - 1) as f64).abs() < 1e-12);
        }
        let hs = KernelSpec::<f64>::hard_spheres(3, 1.0).unwrap();
        let s = SystemState::new(3, vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0]).unwrap();
        assert!((total_rate(&s, &hs) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_degenerate_states() {
        assert!(SystemState::<f64>::new(3, vec![0.0; 3]).is_err());
        assert!(SystemState::<f64>::new(3, vec![0.0; 7]).is_err());
    }

    #[test]
    fn hard_spheres_with_equal_velocities_stop() {
        let hs = KernelSpec::<f64>::hard_spheres(3, 1.0).unwrap();
        let mut s = SystemState::new(3, vec![0.5; 12]).unwrap();
        let mut rng = substream(0, 0, 0);
        assert!(!s.step(&hs, &mut rng));
        assert!(s.time().is_infinite());
        let mut s = SystemState::new(3, vec![0.5; 12]).unwrap().with_selection(Selection::Majorant);
        assert!(!s.step(&hs, &mut rng));
    }

    #[test]
    fn cached_rows_track_direct_sums() {
        let hs = KernelSpec::<f64>::hard_spheres(3, 1.0).unwrap();
        let mut s = gaussian_state(40, 3, 5);
        let mut rng = substream(5, 0, 0);
        for _ in 0..25 {
            s.step(&hs, &mut rng);
        }
        if let Some(RateCache::Exact { row_sums, .. }) = &s.cache {
            let direct = s.row_sums();
            for (a, b) in row_sums.iter().zip(&direct) {
                assert!((a - b).abs() < 1e-10);
            }
        } else {
            panic!("expected exact cache");
        }
    }

    #[test]
    fn step_conserves() {
        for spec in [KernelSpec::<f64>::maxwell(3, 1.0).unwrap(), KernelSpec::hard_spheres(3, 1.0).unwrap()] {
            let mut s = gaussian_state(16, 3, 8);
            let mut rng = substream(8, 0, 0);
            let p0 = s.momentum();
            let e0 = s.energy();
            for _ in 0..1000 {
                s.step(&spec, &mut rng);
            }
            let p1 = s.momentum();
            for (a, b) in p0.iter().zip(&p1) {
                assert!((a - b).abs() < 1e-12 * e0);
            }
            assert!((s.energy() - e0).abs() < 1e-12 * e0);
            assert_eq!(s.n_events(), 1000);
        }
    }

    #[test]
    fn empty_snapshot_list_runs_nothing() {
        let mm = KernelSpec::<f64>::maxwell(3, 1.0).unwrap();
        let plan = SimulationPlan { times: vec![], replicas: 2, seed: 3, selection: Selection::Auto };
        let out = simulate(|_, _| vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0], &mm, &plan).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|t| t.snapshots.is_empty()));
    }

    #[test]
    fn rejects_unsorted_times_and_bad_dimension() {
        let mm = KernelSpec::<f64>::maxwell(3, 1.0).unwrap();
        let plan = SimulationPlan { times: vec![1.0, 0.5], replicas: 1, seed: 3, selection: Selection::Auto };
        assert!(simulate(|_, _| vec![0.0; 6], &mm, &plan).is_err());
        let plan = SimulationPlan { times: vec![1.0], replicas: 1, seed: 3, selection: Selection::Auto };
        assert!(simulate(|_, _| vec![0.0; 7], &mm, &plan).is_err());
    }

    #[test]
    fn generator_kills_invariants() {
        for spec in [KernelSpec::<f64>::maxwell(3, 1.0).unwrap(), KernelSpec::hard_spheres(3, 1.0).unwrap()] {
            let s = gaussian_state(5, 3, 11);
            let energy = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
            let mom = |v: &[f64]| v.chunks(3).map(|c| c[0]).sum::<f64>();
            let g = apply_generator(&energy, &s, &spec, 8).unwrap();
            assert!(g.value.abs() < 1e-10, "{}", g.value);
            let g = apply_generator(&mom, &s, &spec, 8).unwrap();
            assert!(g.value.abs() < 1e-10);
        }
        let s2 = gaussian_state(3, 2, 12);
        let spec2 = KernelSpec::<f64>::maxwell(2, 1.0).unwrap();
        let energy = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        assert!(apply_generator(&energy, &s2, &spec2, 8).unwrap().value.abs() < 1e-10);
    }

    #[test]
    fn generator_rejects_low_order() {
        let s = gaussian_state(3, 3, 1);
        let spec = KernelSpec::<f64>::maxwell(3, 1.0).unwrap();
        assert!(apply_generator(&|_: &[f64]| 0.0, &s, &spec, 4).is_err());
    }
}
