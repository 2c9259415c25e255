//! Collision kernels `B = Γ(|v - v_*|) b(cos θ)`, the post-collision map and
//! angular scattering.
//!
//! The deviation angle θ is drawn from an inverse-CDF lookup table built once
//! per [`KernelSpec`]; the azimuth around the relative velocity is uniform.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::scalar::{sphere_area, Real};

/// Number of nodes in the inverse-CDF table for θ.
pub const THETA_TABLE_NODES: usize = 1 << 14;

const FINE_GRID: usize = 1 << 16;

/// Kinetic factor Γ of the kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Potential {
    /// Γ ≡ 1 (γ = 0).
    Maxwell,
    /// Γ(z) = z (γ = 1).
    HardSpheres,
}

impl Potential {
    pub fn gamma_exponent(self) -> u32 {
        match self {
            Potential::Maxwell => 0,
            Potential::HardSpheres => 1,
        }
    }
}

/// Angular part `b(cos θ)` of the kernel, θ ∈ [0, π].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AngularLaw {
    /// `b ≡ b_const`.
    GradCutoff { b_const: f64 },
    /// `b = c_b θ^{-(d-1)-ν}` for θ ≥ `eps_cut`, zero below: a truncation of
    /// the grazing singularity of inverse-power potentials.
    PowerLaw { nu: f64, eps_cut: f64, c_b: f64 },
    /// Piecewise linear `b(θ)` through the given `(θ, b)` nodes, zero outside.
    Tabulated { theta: Vec<f64>, b: Vec<f64> },
}

impl AngularLaw {
    /// `b` as a function of the deviation angle.
    pub fn density(&self, dim: usize, theta: f64) -> f64 {
        match self {
            AngularLaw::GradCutoff { b_const } => *b_const,
            AngularLaw::PowerLaw { nu, eps_cut, c_b } => {
                if theta < *eps_cut {
                    0.0
                } else {
                    c_b * theta.powf(-((dim as f64 - 1.0) + nu))
                }
            }
            AngularLaw::Tabulated { theta: ts, b } => {
                if theta < ts[0] || theta > ts[ts.len() - 1] {
                    return 0.0;
                }
                let k = ts.partition_point(|&t| t <= theta).clamp(1, ts.len() - 1);
                let (t0, t1) = (ts[k - 1], ts[k]);
                let w = if t1 > t0 { (theta - t0) / (t1 - t0) } else { 0.0 };
                b[k - 1] * (1.0 - w) + b[k] * w
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            AngularLaw::GradCutoff { b_const } => {
                if !(b_const.is_finite() && *b_const > 0.0) {
                    return Err(Error::Kernel(format!("b_const must be positive, got {b_const}")));
                }
            }
            AngularLaw::PowerLaw { nu, eps_cut, c_b } => {
                if !(*nu > 0.0 && *nu < 2.0) {
                    return Err(Error::Kernel(format!("nu must lie in (0, 2), got {nu}")));
                }
                if !(*eps_cut > 0.0 && *eps_cut < PI) {
                    return Err(Error::Kernel(format!(
                        "power-law angular kernel needs eps_cut in (0, pi), got {eps_cut}"
                    )));
                }
                if !(c_b.is_finite() && *c_b > 0.0) {
                    return Err(Error::Kernel(format!("c_b must be positive, got {c_b}")));
                }
            }
            AngularLaw::Tabulated { theta, b } => {
                if theta.len() < 2 || theta.len() != b.len() {
                    return Err(Error::Kernel("tabulated law needs >= 2 matching (theta, b) nodes".into()));
                }
                if theta.windows(2).any(|w| w[1] <= w[0]) || theta[0] < 0.0 || theta[theta.len() - 1] > PI {
                    return Err(Error::Kernel("tabulated theta grid must be increasing within [0, pi]".into()));
                }
                if b.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || b.iter().all(|&x| x == 0.0) {
                    return Err(Error::Kernel("tabulated b must be nonnegative, finite and not identically 0".into()));
                }
            }
        }
        Ok(())
    }

    /// Support of the θ density, and whether the fine grid should be
    /// geometric (strongly peaked at the lower end).
    fn support(&self) -> (f64, f64, bool) {
        match self {
            AngularLaw::GradCutoff { .. } => (0.0, PI, false),
            AngularLaw::PowerLaw { eps_cut, .. } => (*eps_cut, PI, true),
            AngularLaw::Tabulated { theta, .. } => (theta[0], theta[theta.len() - 1], false),
        }
    }
}

/// A collision kernel family in dimension `d ≥ 2`, with its precomputed
/// angular mass `‖b‖_{L¹(S^{d-1})}` and θ sampling table.
#[derive(Clone, Debug)]
pub struct KernelSpec<T: Real = f64> {
    dim: usize,
    potential: Potential,
    law: AngularLaw,
    angular_mass: T,
    theta_table: Arc<[T]>,
}

impl<T: Real> KernelSpec<T> {
    pub fn new(dim: usize, potential: Potential, law: AngularLaw) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Kernel(format!("dimension must be >= 2, got {dim}")));
        }
        law.validate()?;
        let mass = angular_mass_of(dim, &law);
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::Kernel(format!("angular mass must be positive and finite, got {mass}")));
        }
        let table = build_theta_table(dim, &law)
            .into_iter()
            .map(T::of)
            .collect::<Vec<_>>()
            .into();
        Ok(KernelSpec { dim, potential, law, angular_mass: T::of(mass), theta_table: table })
    }

    /// Grad cutoff Maxwell molecules with the given angular mass.
    pub fn maxwell(dim: usize, angular_mass: f64) -> Result<Self> {
        let b_const = angular_mass / sphere_area(dim);
        Self::new(dim, Potential::Maxwell, AngularLaw::GradCutoff { b_const })
    }

    /// Hard spheres with constant angular law of the given mass.
    pub fn hard_spheres(dim: usize, angular_mass: f64) -> Result<Self> {
        let b_const = angular_mass / sphere_area(dim);
        Self::new(dim, Potential::HardSpheres, AngularLaw::GradCutoff { b_const })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn potential(&self) -> Potential {
        self.potential
    }

    pub fn law(&self) -> &AngularLaw {
        &self.law
    }

    pub fn angular_mass(&self) -> T {
        self.angular_mass
    }

    /// `b(cos θ)` evaluated at angle θ.
    pub fn b(&self, theta: f64) -> f64 {
        self.law.density(self.dim, theta)
    }

    /// Γ(z).
    #[inline]
    pub fn gamma(&self, z: T) -> T {
        match self.potential {
            Potential::Maxwell => T::one(),
            Potential::HardSpheres => z,
        }
    }

    /// `Γ(|v_i - v_j|) ‖b‖₁`.
    pub fn pair_rate(&self, vi: &[T], vj: &[T]) -> T {
        match self.potential {
            Potential::Maxwell => self.angular_mass,
            Potential::HardSpheres => crate::scalar::dist(vi, vj) * self.angular_mass,
        }
    }

    /// Deviation angle drawn with density ∝ `b(cos θ) sin^{d-2} θ`.
    #[inline]
    pub fn sample_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let u: f64 = rng.random();
        let x = u * (THETA_TABLE_NODES - 1) as f64;
        let i = (x as usize).min(THETA_TABLE_NODES - 2);
        let frac = T::of(x - i as f64);
        let t = &self.theta_table;
        t[i] + frac * (t[i + 1] - t[i])
    }

    /// Draw σ ∈ S^{d-1} with density `b(σ·û)/‖b‖₁` around the unit vector `u_hat`.
    ///
    /// `u_hat` must be a unit vector; callers handle coincident velocities
    /// themselves (see [`collide`]).
    pub fn sample_sigma<R: Rng + ?Sized>(&self, u_hat: &[T], rng: &mut R, sigma: &mut [T]) {
        debug_assert_eq!(u_hat.len(), self.dim);
        let theta = self.sample_theta(rng);
        orthogonal_unit(u_hat, rng, sigma);
        let (s, c) = theta.sin_cos();
        for (o, &u) in sigma.iter_mut().zip(u_hat) {
            *o = c * u + s * *o;
        }
    }

    /// `λ̄ = ∫ b(σ·ξ̂) (1 - (σ·ξ̂)²)/2 dσ`, the spectral rate appearing in
    /// the Fourier-metric contraction for Maxwell molecules.
    pub fn lambda_bar(&self) -> f64 {
        angular_integral(self.dim, &self.law, |theta| 0.5 * theta.sin().powi(2))
    }
}

/// Uniform unit vector orthogonal to `u_hat`, written into `out`.
fn orthogonal_unit<T: Real, R: Rng + ?Sized>(u_hat: &[T], rng: &mut R, out: &mut [T]) {
    loop {
        for o in out.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *o = T::of(g);
        }
        let proj = crate::scalar::dot(out, u_hat);
        for (o, &u) in out.iter_mut().zip(u_hat) {
            *o -= proj * u;
        }
        let n = crate::scalar::norm_sq(out).sqrt();
        if n > T::of(1e-8) {
            for o in out.iter_mut() {
                *o /= n;
            }
            return;
        }
    }
}

/// `|S^{d-2}| ∫_0^π b(θ) w(θ) sin^{d-2}θ dθ`.
fn angular_integral(dim: usize, law: &AngularLaw, w: impl Fn(f64) -> f64) -> f64 {
    let (lo, hi, geometric) = law.support();
    let shell = sphere_area(dim - 1);
    let f = |theta: f64| law.density(dim, theta) * w(theta) * theta.sin().powi(dim as i32 - 2);
    let mut breaks = Vec::new();
    let panels = 256;
    if geometric {
        for k in 0..=panels {
            breaks.push(lo * (hi / lo).powf(k as f64 / panels as f64));
        }
    } else if let AngularLaw::Tabulated { theta, .. } = law {
        // integrate exactly piece by piece
        for win in theta.windows(2) {
            for k in 0..8 {
                breaks.push(win[0] + (win[1] - win[0]) * k as f64 / 8.0);
            }
        }
        breaks.push(hi);
    } else {
        for k in 0..=panels {
            breaks.push(lo + (hi - lo) * k as f64 / panels as f64);
        }
    }
    let (x, wt) = quadrature::composite(&breaks, 8);
    shell * x.iter().zip(&wt).map(|(&t, &wi)| wi * f(t)).sum::<f64>()
}

fn angular_mass_of(dim: usize, law: &AngularLaw) -> f64 {
    match law {
        AngularLaw::GradCutoff { b_const } => b_const * sphere_area(dim),
        _ => angular_integral(dim, law, |_| 1.0),
    }
}

/// Inverse CDF of θ on `THETA_TABLE_NODES` equispaced probability levels.
fn build_theta_table(dim: usize, law: &AngularLaw) -> Vec<f64> {
    let (lo, hi, geometric) = law.support();
    let grid: Vec<f64> = (0..=FINE_GRID)
        .map(|k| {
            let x = k as f64 / FINE_GRID as f64;
            if geometric {
                lo * (hi / lo).powf(x)
            } else {
                lo + (hi - lo) * x
            }
        })
        .collect();
    let dens: Vec<f64> = grid
        .iter()
        .map(|&t| law.density(dim, t) * t.sin().max(0.0).powi(dim as i32 - 2))
        .collect();
    let mut cdf = vec![0.0; grid.len()];
    for k in 1..grid.len() {
        cdf[k] = cdf[k - 1] + 0.5 * (dens[k] + dens[k - 1]) * (grid[k] - grid[k - 1]);
    }
    let total = cdf[cdf.len() - 1];
    for c in cdf.iter_mut() {
        *c /= total;
    }
    let mut table = Vec::with_capacity(THETA_TABLE_NODES);
    let mut j = 1;
    for k in 0..THETA_TABLE_NODES {
        let u = k as f64 / (THETA_TABLE_NODES - 1) as f64;
        if k == 0 {
            // first point of positive mass
            let first = cdf.iter().position(|&c| c > 0.0).unwrap_or(1);
            table.push(grid[first - 1]);
            continue;
        }
        if k == THETA_TABLE_NODES - 1 {
            let last = cdf.iter().position(|&c| c >= 1.0).unwrap_or(grid.len() - 1);
            table.push(grid[last]);
            continue;
        }
        while j < cdf.len() - 1 && cdf[j] < u {
            j += 1;
        }
        let (c0, c1) = (cdf[j - 1], cdf[j]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        table.push(grid[j - 1] + w * (grid[j] - grid[j - 1]));
    }
    table
}

/// Post-collision velocities
/// `v' = (v+v_*)/2 + |v-v_*| σ/2`, `v'_* = (v+v_*)/2 - |v-v_*| σ/2`.
pub fn post_collision<T: Real>(v: &[T], v_star: &[T], sigma: &[T], out: &mut [T], out_star: &mut [T]) {
    let half = T::of(0.5);
    let r = crate::scalar::dist(v, v_star) * half;
    for k in 0..v.len() {
        let mid = (v[k] + v_star[k]) * half;
        out[k] = mid + r * sigma[k];
        out_star[k] = mid - r * sigma[k];
    }
}

/// Draw σ for the pair `(a, b)` and replace both velocities in place.
///
/// Coincident velocities are left untouched (the midpoint formula maps them
/// to themselves for every σ), but σ is still drawn about a fixed axis so
/// the RNG stream advances identically.
pub fn collide<T: Real, R: Rng + ?Sized>(
    spec: &KernelSpec<T>,
    a: &mut [T],
    b: &mut [T],
    rng: &mut R,
    scratch: &mut [T],
) {
    let d = a.len();
    let mut u_hat = [T::zero(); 16];
    let mut u_hat_vec;
    let u_hat: &mut [T] = if d <= 16 {
        &mut u_hat[..d]
    } else {
        u_hat_vec = vec![T::zero(); d];
        &mut u_hat_vec
    };
    let speed = crate::scalar::dist(a, b);
    if speed > T::zero() {
        for k in 0..d {
            u_hat[k] = (a[k] - b[k]) / speed;
        }
    } else {
        u_hat[0] = T::one();
    }
    let sigma = &mut scratch[..d];
    spec.sample_sigma(u_hat, rng, sigma);
    if speed == T::zero() {
        return;
    }
    let half = T::of(0.5);
    let r = speed * half;
    for k in 0..d {
        let mid = (a[k] + b[k]) * half;
        a[k] = mid + r * sigma[k];
        b[k] = mid - r * sigma[k];
    }
}
