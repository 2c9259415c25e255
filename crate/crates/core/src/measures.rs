//! Empirical measures, tensor test functions and the symmetrized
//! observables that relate functions on velocity space to functions on
//! the N-particle phase space.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Finite weighted point set on ℝ^d. Points are stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure<T: Real = f64> {
    dim: usize,
    points: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> EmpiricalMeasure<T> {
    /// μ^N_V: uniform weights on the velocities of `v`.
    pub fn empirical(dim: usize, v: &[T]) -> Result<Self> {
        Self::uniform(dim, v.to_vec())
    }

    pub fn uniform(dim: usize, points: Vec<T>) -> Result<Self> {
        if dim == 0 || points.len() % dim != 0 {
            return Err(Error::Dimension { expected: dim, got: points.len() });
        }
        let n = points.len() / dim;
        if n == 0 {
            return Err(Error::TooFewParticles { need: 1, got: 0 });
        }
        let w = T::one() / T::of_usize(n);
        Ok(EmpiricalMeasure { dim, points, weights: vec![w; n] })
    }

    pub fn weighted(dim: usize, points: Vec<T>, weights: Vec<T>) -> Result<Self> {
        if dim == 0 || points.len() % dim != 0 || points.len() / dim != weights.len() {
            return Err(Error::Dimension { expected: dim, got: points.len() });
        }
        if weights.is_empty() {
            return Err(Error::TooFewParticles { need: 1, got: 0 });
        }
        if weights.iter().any(|w| !(*w >= T::zero())) {
            return Err(Error::Invalid("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().map(|w| w.as_f64()).sum();
        let tol = if std::mem::size_of::<T>() == 4 { 1e-5 } else { 1e-12 };
        if (total - 1.0).abs() > tol {
            return Err(Error::Invalid(format!("weights sum to {total}, expected 1")));
        }
        Ok(EmpiricalMeasure { dim, points, weights })
    }

    pub fn dirac(x: &[T]) -> Self {
        EmpiricalMeasure { dim: x.len(), points: x.to_vec(), weights: vec![T::one()] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_uniform(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|&w| w == w0)
    }

    /// `Σ w_i f(x_i)`.
    pub fn integrate(&self, f: impl Fn(&[T]) -> f64) -> f64 {
        self.points
            .chunks_exact(self.dim)
            .zip(&self.weights)
            .map(|(x, w)| w.as_f64() * f(x))
            .sum()
    }

    /// `Σ w_i |x_i|^k`.
    pub fn moment(&self, k: f64) -> f64 {
        self.integrate(|x| {
            let r = x.iter().map(|c| c.as_f64().powi(2)).sum::<f64>().sqrt();
            if k == 0.0 {
                1.0
            } else {
                r.powf(k)
            }
        })
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (x, w) in self.points.chunks_exact(self.dim).zip(&self.weights) {
            for (a, c) in m.iter_mut().zip(x) {
                *a += w.as_f64() * c.as_f64();
            }
        }
        m
    }

    /// Image under `x ↦ λ x`.
    pub fn dilate(&self, lambda: T) -> Self {
        EmpiricalMeasure {
            dim: self.dim,
            points: self.points.iter().map(|&x| x * lambda).collect(),
            weights: self.weights.clone(),
        }
    }

    /// Same points and weights in double precision.
    pub fn to_f64(&self) -> EmpiricalMeasure<f64> {
        EmpiricalMeasure {
            dim: self.dim,
            points: self.points.iter().map(|x| x.as_f64()).collect(),
            weights: self.weights.iter().map(|x| x.as_f64()).collect(),
        }
    }
}

/// Which norm a [`TestFunction`]'s declared bound refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// `‖φ‖_∞`.
    Sup,
    /// `‖φ‖_∞ + Lip(φ)`.
    Lipschitz,
    /// `∫ (1 + |ξ|⁴) |φ̂(ξ)| dξ`.
    FourierF,
}

/// One term `a cos(ξ·v + phase)` of a cosine packet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineTerm {
    pub amplitude: f64,
    pub frequency: Vec<f64>,
    pub phase: f64,
}

#[derive(Clone)]
enum Shape {
    Constant(f64),
    Cosine(Vec<CosineTerm>),
    /// `scale · tanh((ω·v - center)/width)`
    Ramp { direction: Vec<f64>, center: f64, width: f64, scale: f64 },
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

/// Observable on ℝ^d together with an upper bound for one of its norms.
#[derive(Clone)]
pub struct TestFunction {
    shape: Shape,
    norm_kind: NormKind,
    declared_norm: f64,
    sup_bound: f64,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let shape = match &self.shape {
            Shape::Constant(c) => format!("Constant({c})"),
            Shape::Cosine(t) => format!("Cosine({} terms)", t.len()),
            Shape::Ramp { width, .. } => format!("Ramp(width={width})"),
            Shape::Custom(_) => "Custom".to_string(),
        };
        f.debug_struct("TestFunction")
            .field("shape", &shape)
            .field("norm_kind", &self.norm_kind)
            .field("declared_norm", &self.declared_norm)
            .finish()
    }
}

impl TestFunction {
    pub fn constant(c: f64) -> Self {
        TestFunction { shape: Shape::Constant(c), norm_kind: NormKind::Sup, declared_norm: c.abs(), sup_bound: c.abs() }
    }

    /// `Σ a_m cos(ξ_m·v + θ_m)` with `‖φ‖_ℱ = Σ |a_m| (1 + |ξ_m|⁴)`.
    pub fn cosine_packet(terms: Vec<CosineTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Invalid("cosine packet needs at least one term".into()));
        }
        let d = terms[0].frequency.len();
        if terms.iter().any(|t| t.frequency.len() != d) {
            return Err(Error::Invalid("cosine packet frequencies differ in dimension".into()));
        }
        let norm = terms
            .iter()
            .map(|t| t.amplitude.abs() * (1.0 + t.frequency.iter().map(|x| x * x).sum::<f64>().powi(2)))
            .sum();
        let sup = terms.iter().map(|t| t.amplitude.abs()).sum();
        Ok(TestFunction { shape: Shape::Cosine(terms), norm_kind: NormKind::FourierF, declared_norm: norm, sup_bound: sup })
    }

    /// The same packet measured in `W^{1,∞}`: `Σ |a_m| (1 + |ξ_m|)`.
    pub fn cosine_packet_lipschitz(terms: Vec<CosineTerm>) -> Result<Self> {
        let mut f = Self::cosine_packet(terms)?;
        if let Shape::Cosine(terms) = &f.shape {
            f.declared_norm = terms
                .iter()
                .map(|t| t.amplitude.abs() * (1.0 + t.frequency.iter().map(|x| x * x).sum::<f64>().sqrt()))
                .sum();
        }
        f.norm_kind = NormKind::Lipschitz;
        Ok(f)
    }

    /// `tanh((ω·v - c)/w)` with `‖φ‖_{W^{1,∞}} ≤ 1 + 1/w`; `ω` is normalized.
    pub fn ramp(direction: Vec<f64>, center: f64, width: f64) -> Result<Self> {
        let n = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(n > 0.0) || !(width > 0.0) {
            return Err(Error::Invalid("ramp needs a nonzero direction and positive width".into()));
        }
        let direction = direction.into_iter().map(|x| x / n).collect();
        Ok(TestFunction {
            shape: Shape::Ramp { direction, center, width, scale: 1.0 },
            norm_kind: NormKind::Lipschitz,
            declared_norm: 1.0 + 1.0 / width,
            sup_bound: 1.0,
        })
    }

    /// Arbitrary closure; the caller vouches for `declared_norm` and `sup_bound`.
    pub fn custom(
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        norm_kind: NormKind,
        declared_norm: f64,
        sup_bound: f64,
    ) -> Self {
        TestFunction { shape: Shape::Custom(Arc::new(f)), norm_kind, declared_norm, sup_bound }
    }

    pub fn norm_kind(&self) -> NormKind {
        self.norm_kind
    }

    pub fn declared_norm(&self) -> f64 {
        self.declared_norm
    }

    /// Upper bound on `‖φ‖_∞`.
    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Constant(c) => *c,
            Shape::Cosine(terms) => terms
                .iter()
                .map(|t| t.amplitude * (t.frequency.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + t.phase).cos())
                .sum(),
            Shape::Ramp { direction, center, width, scale } => {
                scale * ((direction.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - center) / width).tanh()
            }
            Shape::Custom(f) => f(x),
        }
    }

    pub fn eval_real<T: Real>(&self, x: &[T]) -> f64 {
        let mut buf = [0.0f64; 8];
        if x.len() <= 8 {
            for (b, v) in buf.iter_mut().zip(x) {
                *b = v.as_f64();
            }
            self.eval(&buf[..x.len()])
        } else {
            let v: Vec<f64> = x.iter().map(|c| c.as_f64()).collect();
            self.eval(&v)
        }
    }

    /// Multiply by `c`; declared norm and sup bound scale by `|c|`.
    pub fn scaled(&self, c: f64) -> Self {
        let shape = match &self.shape {
            Shape::Constant(k) => Shape::Constant(k * c),
            Shape::Cosine(terms) => Shape::Cosine(
                terms
                    .iter()
                    .map(|t| CosineTerm { amplitude: t.amplitude * c, ..t.clone() })
                    .collect(),
            ),
            Shape::Ramp { direction, center, width, scale } => {
                Shape::Ramp { direction: direction.clone(), center: *center, width: *width, scale: scale * c }
            }
            Shape::Custom(f) => {
                let f = f.clone();
                Shape::Custom(Arc::new(move |x| c * f(x)))
            }
        };
        TestFunction {
            shape,
            norm_kind: self.norm_kind,
            declared_norm: self.declared_norm * c.abs(),
            sup_bound: self.sup_bound * c.abs(),
        }
    }

    /// Rescaled to declared norm 1.
    pub fn normalized(&self) -> Self {
        if self.declared_norm > 0.0 {
            self.scaled(1.0 / self.declared_norm)
        } else {
            self.clone()
        }
    }

    /// Lower estimate of the declared norm from a probe grid: sup of `|φ|`
    /// plus (for non-sup norms) the largest finite-difference slope.
    pub fn probe_norm(&self, dim: usize) -> f64 {
        let pts = probe_grid(dim);
        let h = 1e-4;
        let mut sup = 0.0f64;
        let mut lip = 0.0f64;
        let mut y = vec![0.0; dim];
        for x in pts.chunks_exact(dim) {
            let f0 = self.eval(x);
            sup = sup.max(f0.abs());
            if self.norm_kind != NormKind::Sup {
                for k in 0..dim {
                    y.copy_from_slice(x);
                    y[k] += h;
                    lip = lip.max((self.eval(&y) - f0).abs() / h);
                }
            }
        }
        sup + lip * (self.norm_kind != NormKind::Sup) as u8 as f64
    }
}

/// Points of `[-4, 4]^d` on a regular grid (17 per axis for d ≤ 2, 9 above).
fn probe_grid(dim: usize) -> Vec<f64> {
    let m: usize = if dim <= 2 { 17 } else { 9 };
    let total = m.pow(dim as u32);
    let mut out = Vec::with_capacity(total * dim);
    for idx in 0..total {
        let mut r = idx;
        for _ in 0..dim {
            out.push(-4.0 + 8.0 * (r % m) as f64 / (m - 1) as f64);
            r /= m;
        }
    }
    out
}

/// `φ₁ ⊗ … ⊗ φ_ℓ`.
#[derive(Clone, Debug)]
pub struct TensorObservable {
    factors: Vec<TestFunction>,
}

impl TensorObservable {
    pub fn new(factors: Vec<TestFunction>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Invalid("tensor observable needs at least one factor".into()));
        }
        Ok(TensorObservable { factors })
    }

    /// `φ^{⊗ℓ}`.
    pub fn power(phi: TestFunction, ell: usize) -> Result<Self> {
        Self::new(vec![phi; ell])
    }

    pub fn ell(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[TestFunction] {
        &self.factors
    }

    pub fn norm(&self) -> f64 {
        self.factors.iter().map(|f| f.declared_norm()).product()
    }

    pub fn sup_bound(&self) -> f64 {
        self.factors.iter().map(|f| f.sup_bound()).product()
    }

    pub fn concat(&self, other: &TensorObservable) -> TensorObservable {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        TensorObservable { factors }
    }

    /// `Π_k φ_k(x_k)` for `x` the concatenation of ℓ points of ℝ^d.
    pub fn eval<T: Real>(&self, x: &[T]) -> f64 {
        let d = x.len() / self.ell();
        self.factors
            .iter()
            .enumerate()
            .map(|(k, f)| f.eval_real(&x[k * d..(k + 1) * d]))
            .product()
    }
}

/// `R^ℓ_φ(ρ) = Π_i ⟨ρ, φ_i⟩`.
pub fn poly_observable<T: Real>(rho: &EmpiricalMeasure<T>, phi: &TensorObservable) -> f64 {
    phi.factors().iter().map(|f| rho.integrate(|x| f.eval_real(x))).product()
}

/// `Π_k φ_k(v_k)`: the observable evaluated on the first ℓ particles.
pub fn first_coordinates_observable<T: Real>(v: &[T], dim: usize, phi: &TensorObservable) -> Result<f64> {
    let n = v.len() / dim;
    if n < phi.ell() {
        return Err(Error::TooFewParticles { need: phi.ell(), got: n });
    }
    Ok(phi.eval(&v[..phi.ell() * dim]))
}

/// Average of `φ(v_{i₁}, …, v_{i_ℓ})` over all injective index tuples.
///
/// Computed by Möbius inversion over set partitions of the ℓ slots: the
/// injective sum equals `Σ_π μ(π) Π_{B∈π} Σ_j Π_{k∈B} φ_k(v_j)` with
/// `μ(π) = Π_B (-1)^{|B|-1} (|B|-1)!`. Cost is `O(2^ℓ N + Bell(ℓ) ℓ)`.
pub fn sym_observable<T: Real>(v: &[T], dim: usize, phi: &TensorObservable) -> Result<f64> {
    let n = v.len() / dim;
    let ell = phi.ell();
    if n < ell {
        return Err(Error::TooFewParticles { need: ell, got: n });
    }
    if ell > 12 {
        return Err(Error::Invalid(format!("symmetrized observable supports ell <= 12, got {ell}")));
    }
    let vals: Vec<Vec<f64>> = phi
        .factors()
        .iter()
        .map(|f| v.chunks_exact(dim).map(|x| f.eval_real(x)).collect())
        .collect();
    // S[B] = Σ_j Π_{k∈B} φ_k(v_j)
    let subsets = 1usize << ell;
    let mut s = vec![0.0; subsets];
    let mut prod = vec![0.0; subsets];
    for j in 0..n {
        prod[0] = 1.0;
        for mask in 1..subsets {
            let low = mask.trailing_zeros() as usize;
            prod[mask] = prod[mask & (mask - 1)] * vals[low][j];
            s[mask] += prod[mask];
        }
    }
    let mut total = 0.0;
    for_each_partition(subsets - 1, &mut |blocks: &[usize]| {
        let mut term = 1.0;
        for &b in blocks {
            let size = b.count_ones() as usize;
            let mu = (1..size).fold(1.0, |acc, k| acc * k as f64) * if size % 2 == 0 { -1.0 } else { 1.0 };
            term *= mu * s[b];
        }
        total += term;
    });
    let falling: f64 = (0..ell).map(|k| (n - k) as f64).product();
    Ok(total / falling)
}

/// Visit all set partitions of the bitmask `rest` (blocks as bitmasks).
fn for_each_partition(rest: usize, f: &mut dyn FnMut(&[usize])) {
    fn go(rest: usize, blocks: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if rest == 0 {
            f(blocks);
            return;
        }
        // the block containing the lowest remaining element
        let low = rest & rest.wrapping_neg();
        let others = rest & !low;
        let mut sub = others;
        loop {
            blocks.push(low | sub);
            go(others & !sub, blocks, f);
            blocks.pop();
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & others;
        }
    }
    go(rest, &mut Vec::new(), f);
}

/// `|R^ℓ_φ(μ^N_V) - (φ ⊗ 1^{N-ℓ})_sym(V)|`, at most `2ℓ² ‖φ‖_∞ / N`.
pub fn symmetrization_gap<T: Real>(v: &[T], dim: usize, phi: &TensorObservable) -> Result<f64> {
    let n = v.len() / dim;
    if n < 2 * phi.ell() {
        return Err(Error::TooFewParticles { need: 2 * phi.ell(), got: n });
    }
    let mu = EmpiricalMeasure::empirical(dim, v)?;
    Ok((poly_observable(&mu, phi) - sym_observable(v, dim, phi)?).abs())
}
