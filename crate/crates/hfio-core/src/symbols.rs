//! Amplitudes a(x,θ) and sampled checks of membership in Γ_ρ^m:
//! |∂_x^α ∂_θ^β a| ≤ C_{α,β} λ(x,θ)^{m − ρ(|α|+|β|)}.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{
    fd_partial, halton_points, multi_indices, weight_power_derivative, weight_unchecked, Grid, MAX_DERIVATIVE_ORDER,
};
use crate::prelude::*;

/// Default number of low-discrepancy interior samples added to a sample box.
pub const DEFAULT_INTERIOR_SAMPLES: usize = 200;

/// Evaluator of a(x,θ) with optional exact partial derivatives.
pub trait Amplitude: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], theta: &[f64]) -> Complex64;
    /// ∂_x^α ∂_θ^β a(x,θ), if known in closed form.
    fn derivative(&self, _x: &[f64], _theta: &[f64], _alpha: &[usize], _beta: &[usize]) -> Option<Complex64> {
        None
    }
}

/// An amplitude together with its claimed class Γ_ρ^m.
#[derive(Clone)]
pub struct AmplitudeSpec {
    pub name: String,
    pub dim: usize,
    pub claimed_order: f64,
    pub claimed_rho: u8,
    inner: Arc<dyn Amplitude>,
}

impl core::fmt::Debug for AmplitudeSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("AmplitudeSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("claimed_order", &self.claimed_order)
            .field("claimed_rho", &self.claimed_rho)
            .finish()
    }
}

fn cplx(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn all_zero(v: &[usize]) -> bool {
    v.iter().all(|&o| o == 0)
}

struct One(usize);

impl Amplitude for One {
    fn dim(&self) -> usize {
        self.0
    }
    fn eval(&self, _: &[f64], _: &[f64]) -> Complex64 {
        cplx(1.0)
    }
    fn derivative(&self, _: &[f64], _: &[f64], alpha: &[usize], beta: &[usize]) -> Option<Complex64> {
        Some(cplx(if all_zero(alpha) && all_zero(beta) { 1.0 } else { 0.0 }))
    }
}

struct LambdaPower {
    dim: usize,
    m: f64,
}

impl Amplitude for LambdaPower {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64], theta: &[f64]) -> Complex64 {
        let mut v = [0.0; 4];
        let n = self.dim;
        v[..n].copy_from_slice(x);
        v[n..2 * n].copy_from_slice(theta);
        cplx(weight_unchecked(&v[..2 * n]).powf(self.m))
    }
    fn derivative(&self, x: &[f64], theta: &[f64], alpha: &[usize], beta: &[usize]) -> Option<Complex64> {
        let v: Vec<f64> = x.iter().chain(theta).copied().collect();
        let g: Vec<usize> = alpha.iter().chain(beta).copied().collect();
        Some(cplx(weight_power_derivative(self.m, &v, &g)))
    }
}

/// Physicists' Hermite polynomial Hₙ; ∂ⁿ e^{−t²} = (−1)ⁿ Hₙ(t) e^{−t²}.
pub fn hermite(n: usize, t: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, 2.0 * t);
    if n == 0 {
        return h0;
    }
    for k in 1..n {
        let h2 = 2.0 * t * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

struct GaussianTheta(usize);

impl Amplitude for GaussianTheta {
    fn dim(&self) -> usize {
        self.0
    }
    fn eval(&self, _: &[f64], theta: &[f64]) -> Complex64 {
        cplx((-theta.iter().map(|t| t * t).sum::<f64>()).exp())
    }
    fn derivative(&self, _: &[f64], theta: &[f64], alpha: &[usize], beta: &[usize]) -> Option<Complex64> {
        if !all_zero(alpha) {
            return Some(cplx(0.0));
        }
        let mut v = 1.0;
        for (t, &b) in theta.iter().zip(beta) {
            let sign = if b % 2 == 0 { 1.0 } else { -1.0 };
            v *= sign * hermite(b, *t) * (-t * t).exp();
        }
        Some(cplx(v))
    }
}

struct CoordinateX(usize);

impl Amplitude for CoordinateX {
    fn dim(&self) -> usize {
        self.0
    }
    fn eval(&self, x: &[f64], _: &[f64]) -> Complex64 {
        cplx(x[0])
    }
    fn derivative(&self, x: &[f64], _: &[f64], alpha: &[usize], beta: &[usize]) -> Option<Complex64> {
        let order: usize = alpha.iter().chain(beta).sum();
        Some(cplx(match order {
            0 => x[0],
            1 if alpha[0] == 1 => 1.0,
            _ => 0.0,
        }))
    }
}

struct ExpX(usize);

impl Amplitude for ExpX {
    fn dim(&self) -> usize {
        self.0
    }
    fn eval(&self, x: &[f64], _: &[f64]) -> Complex64 {
        cplx(x[0].exp())
    }
    fn derivative(&self, x: &[f64], _: &[f64], alpha: &[usize], beta: &[usize]) -> Option<Complex64> {
        let only_x0 = alpha.iter().skip(1).all(|&o| o == 0) && all_zero(beta);
        Some(cplx(if only_x0 { x[0].exp() } else { 0.0 }))
    }
}

struct FnAmplitude<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &[f64]) -> Complex64 + Send + Sync> Amplitude for FnAmplitude<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64], theta: &[f64]) -> Complex64 {
        (self.f)(x, theta)
    }
}

struct Scaled {
    c: Complex64,
    inner: Arc<dyn Amplitude>,
}

impl Amplitude for Scaled {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval(&self, x: &[f64], theta: &[f64]) -> Complex64 {
        self.c * self.inner.eval(x, theta)
    }
    fn derivative(&self, x: &[f64], theta: &[f64], alpha: &[usize], beta: &[usize]) -> Option<Complex64> {
        self.inner.derivative(x, theta, alpha, beta).map(|d| self.c * d)
    }
}

impl AmplitudeSpec {
    pub fn new(name: impl Into<String>, claimed_order: f64, claimed_rho: u8, inner: Arc<dyn Amplitude>) -> Result<Self> {
        let dim = inner.dim();
        if dim != 1 && dim != 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if claimed_rho > 1 {
            return Err(Error::InvalidArgument(format!("ρ must be 0 or 1, got {claimed_rho}")));
        }
        if !claimed_order.is_finite() {
            return Err(Error::InvalidArgument("claimed order must be finite".into()));
        }
        Ok(Self { name: name.into(), dim, claimed_order, claimed_rho, inner })
    }

    /// a ≡ 1, claimed Γ_0^0.
    pub fn one(dim: usize) -> Result<Self> {
        Self::new("one", 0.0, 0, Arc::new(One(dim)))
    }

    /// a = λ(x,θ)^m, claimed Γ_1^m.
    pub fn lambda_power(dim: usize, m: f64) -> Result<Self> {
        Self::new(format!("lambda_m({m})"), m, 1, Arc::new(LambdaPower { dim, m }))
    }

    /// a = e^{−|θ|²}, claimed Γ_0^0.
    pub fn gaussian_theta(dim: usize) -> Result<Self> {
        Self::new("gaussian_theta", 0.0, 0, Arc::new(GaussianTheta(dim)))
    }

    /// a = x₁, claimed Γ_1^1.
    pub fn coordinate_x(dim: usize) -> Result<Self> {
        Self::new("coordinate_x", 1.0, 1, Arc::new(CoordinateX(dim)))
    }

    /// a = e^{x₁}, claimed Γ_0^0 (a deliberate false claim for tests).
    pub fn exp_x(dim: usize) -> Result<Self> {
        Self::new("exp_x", 0.0, 0, Arc::new(ExpX(dim)))
    }

    /// Black-box amplitude; derivatives fall back to finite differences.
    pub fn from_fn<F>(name: impl Into<String>, dim: usize, claimed_order: f64, claimed_rho: u8, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> Complex64 + Send + Sync + 'static,
    {
        Self::new(name, claimed_order, claimed_rho, Arc::new(FnAmplitude { dim, f }))
    }

    /// c·a with the same claimed class.
    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            name: format!("{}*({}{:+}i)", self.name, c.re, c.im),
            dim: self.dim,
            claimed_order: self.claimed_order,
            claimed_rho: self.claimed_rho,
            inner: Arc::new(Scaled { c, inner: self.inner.clone() }),
        }
    }

    /// Same evaluator under a different claimed class.
    pub fn with_claim(&self, claimed_order: f64, claimed_rho: u8) -> Result<Self> {
        Self::new(self.name.clone(), claimed_order, claimed_rho, self.inner.clone())
    }

    #[inline]
    pub fn eval(&self, x: &[f64], theta: &[f64]) -> Complex64 {
        self.inner.eval(x, theta)
    }

    pub fn has_oracle(&self) -> bool {
        let z = [0.0; 2];
        let zi = [0usize; 2];
        self.inner.derivative(&z[..self.dim], &z[..self.dim], &zi[..self.dim], &zi[..self.dim]).is_some()
    }

    /// ∂_x^α ∂_θ^β a(x,θ): the exact oracle when present, else finite differences.
    pub fn partial(&self, x: &[f64], theta: &[f64], alpha: &[usize], beta: &[usize]) -> Result<Complex64> {
        if let Some(d) = self.inner.derivative(x, theta, alpha, beta) {
            return Ok(d);
        }
        self.partial_fd(x, theta, alpha, beta)
    }

    /// ∂_x^α ∂_θ^β a(x,θ) by finite differences only.
    pub fn partial_fd(&self, x: &[f64], theta: &[f64], alpha: &[usize], beta: &[usize]) -> Result<Complex64> {
        let n = self.dim;
        let point: Vec<f64> = x.iter().chain(theta).copied().collect();
        let orders: Vec<usize> = alpha.iter().chain(beta).copied().collect();
        let f = |v: &[f64]| self.inner.eval(&v[..n], &v[n..]);
        fd_partial(&f, &point, &orders)
    }
}

/// One entry C_{α,β} of a seminorm table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeminormEntry {
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
    #[serde(rename = "C")]
    pub c: f64,
    pub witness: Vec<f64>,
}

/// Sampled seminorm constants of an amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeminormTable {
    pub k: usize,
    pub entries: Vec<SeminormEntry>,
}

impl SeminormTable {
    pub fn get(&self, alpha: &[usize], beta: &[usize]) -> Option<&SeminormEntry> {
        self.entries.iter().find(|e| e.alpha == alpha && e.beta == beta)
    }

    pub fn max_constant(&self) -> f64 {
        self.entries.iter().map(|e| e.c).fold(0.0, f64::max)
    }
}

/// Sample points (x,θ) of a box: the product grid × grid plus Halton points.
pub fn box_samples(grid: &Grid, interior: usize) -> Vec<Vec<f64>> {
    let n = grid.dim;
    let nodes = grid.nodes();
    let mut pts = Vec::with_capacity(nodes.len() * nodes.len() + interior);
    for px in &nodes {
        for pt in &nodes {
            let mut v = Vec::with_capacity(2 * n);
            v.extend_from_slice(&px[..n]);
            v.extend_from_slice(&pt[..n]);
            pts.push(v);
        }
    }
    pts.extend(halton_points(2 * n, interior, grid.half_width));
    pts
}

/// Seminorms on `box_grid` (used for both x and θ) plus the default Halton samples.
pub fn estimate_seminorms(a: &AmplitudeSpec, box_grid: &Grid, k: usize) -> Result<SeminormTable> {
    if box_grid.dim != a.dim {
        return Err(Error::InvalidArgument("box dimension differs from amplitude dimension".into()));
    }
    estimate_seminorms_on(a, &box_samples(box_grid, DEFAULT_INTERIOR_SAMPLES), k)
}

/// Seminorms over an explicit list of (x,θ) sample points.
pub fn estimate_seminorms_on(a: &AmplitudeSpec, points: &[Vec<f64>], k: usize) -> Result<SeminormTable> {
    if k > MAX_DERIVATIVE_ORDER {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds {MAX_DERIVATIVE_ORDER}")));
    }
    let n = a.dim;
    let mut entries = Vec::new();
    for (alpha, beta) in multi_indices(n, k) {
        let order = (alpha.iter().sum::<usize>() + beta.iter().sum::<usize>()) as f64;
        let exponent = a.claimed_order - a.claimed_rho as f64 * order;
        let mut best = (0.0f64, points.first().cloned().unwrap_or_default());
        for p in points {
            let d = a.partial(&p[..n], &p[n..], &alpha, &beta)?;
            let c = d.norm() * weight_unchecked(p).powf(-exponent);
            if !c.is_finite() {
                return Err(Error::EvaluationFailure { point: p.clone() });
            }
            if c > best.0 {
                best = (c, p.clone());
            }
        }
        entries.push(SeminormEntry { alpha, beta, c: best.0, witness: best.1 });
    }
    Ok(SeminormTable { k, entries })
}

/// Membership verdict; valid on the sampled box only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Membership {
    MemberOnBox { max_constant: f64 },
    NotMember { alpha: Vec<usize>, beta: Vec<usize>, constant: f64, witness: Vec<f64> },
}

impl Membership {
    pub fn is_member(&self) -> bool {
        matches!(self, Membership::MemberOnBox { .. })
    }
}

/// Member iff every sampled C_{α,β} ≤ `c_max`; otherwise the largest violation.
pub fn check_membership(a: &AmplitudeSpec, box_grid: &Grid, k: usize, c_max: f64) -> Result<Membership> {
    let table = estimate_seminorms(a, box_grid, k)?;
    Ok(membership_from_table(&table, c_max))
}

pub fn membership_from_table(table: &SeminormTable, c_max: f64) -> Membership {
    let worst = table.entries.iter().filter(|e| e.c > c_max).max_by(|a, b| a.c.total_cmp(&b.c));
    match worst {
        None => Membership::MemberOnBox { max_constant: table.max_constant() },
        Some(e) => Membership::NotMember {
            alpha: e.alpha.clone(),
            beta: e.beta.clone(),
            constant: e.c,
            witness: e.witness.clone(),
        },
    }
}

/// Outcome of comparing exact derivative oracles with finite differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSelfTest {
    pub samples: usize,
    pub max_relative_error: f64,
    pub pass: bool,
}

/// Oracle vs. finite differences for all orders ≤ 2 at `samples` random points.
pub fn self_test_oracles(a: &AmplitudeSpec, half_width: f64, samples: usize, seed: u64) -> Result<OracleSelfTest> {
    let n = a.dim;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let p: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-half_width..half_width)).collect();
        for (alpha, beta) in multi_indices(n, 2) {
            let exact = a.partial(&p[..n], &p[n..], &alpha, &beta)?;
            let fd = a.partial_fd(&p[..n], &p[n..], &alpha, &beta)?;
            let scale = exact.norm().max(a.eval(&p[..n], &p[n..]).norm()).max(1e-300);
            worst = worst.max((exact - fd).norm() / scale);
        }
    }
    Ok(OracleSelfTest { samples, max_relative_error: worst, pass: worst <= 1e-4 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::make_grid;

    fn default_box() -> Grid {
        make_grid(1, 10.0, 41).unwrap()
    }

    #[test]
    fn constant_amplitude_table() {
        let t = estimate_seminorms(&AmplitudeSpec::one(1).unwrap(), &default_box(), 2).unwrap();
        assert_eq!(t.entries.len(), 6);
        assert_eq!(t.get(&[0], &[0]).unwrap().c, 1.0);
        assert!(t.entries[1..].iter().all(|e| e.c == 0.0));
    }

    #[test]
    fn inverse_weight_constants_are_at_most_three() {
        let t = estimate_seminorms(&AmplitudeSpec::lambda_power(1, -1.0).unwrap(), &default_box(), 2).unwrap();
        assert!(t.entries.iter().all(|e| e.c <= 3.0), "{t:?}");
    }

    #[test]
    fn coordinate_amplitude_constants() {
        let t = estimate_seminorms(&AmplitudeSpec::coordinate_x(1).unwrap(), &default_box(), 1).unwrap();
        assert!(t.get(&[0], &[0]).unwrap().c <= 1.0);
        assert!(t.get(&[1], &[0]).unwrap().c <= 1.0);
    }

    #[test]
    fn membership_verdicts() {
        let b = default_box();
        assert!(check_membership(&AmplitudeSpec::one(1).unwrap(), &b, 2, 10.0).unwrap().is_member());
        assert!(check_membership(&AmplitudeSpec::lambda_power(1, -1.0).unwrap(), &b, 2, 10.0).unwrap().is_member());
        match check_membership(&AmplitudeSpec::exp_x(1).unwrap(), &b, 2, 1e3).unwrap() {
            Membership::NotMember { witness, constant, .. } => {
                assert!(witness[0] > 9.0, "{witness:?}");
                assert!(constant > 1e4);
            }
            m => panic!("expected violation, got {m:?}"),
        }
    }

    #[test]
    fn oracles_agree_with_finite_differences() {
        for a in [
            AmplitudeSpec::lambda_power(1, -1.0).unwrap(),
            AmplitudeSpec::lambda_power(2, -0.5).unwrap(),
            AmplitudeSpec::gaussian_theta(1).unwrap(),
            AmplitudeSpec::coordinate_x(2).unwrap(),
            AmplitudeSpec::exp_x(1).unwrap(),
        ] {
            let r = self_test_oracles(&a, 3.0, 100, 11).unwrap();
            assert!(r.pass, "{}: {}", a.name, r.max_relative_error);
        }
    }

    #[test]
    fn black_box_amplitude_uses_finite_differences() {
        let a = AmplitudeSpec::from_fn("x*theta", 1, 2.0, 1, |x, t| Complex64::new(x[0] * t[0], 0.0)).unwrap();
        assert!(!a.has_oracle());
        let d = a.partial(&[2.0], &[7.0], &[1], &[1]).unwrap();
        assert!((d.re - 1.0).abs() < 1e-8);
    }

    #[test]
    fn hermite_recurrence() {
        assert_eq!(hermite(2, 1.5), 4.0 * 2.25 - 2.0);
        assert_eq!(hermite(4, 1.0), 16.0 - 48.0 + 12.0);
    }
}
