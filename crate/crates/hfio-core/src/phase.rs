//! Phase functions S(x,θ): the preset catalog, sampled checks of the growth,
//! nondegeneracy and separation hypotheses, the region Ω_{φ,ε₀}, and Newton
//! inversion of θ ↦ ∂_xS(x,θ) and x ↦ ∂_θS(x,θ).

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{fd_partial, multi_indices, weight_power_derivative, weight_unchecked, Grid, MAX_DERIVATIVE_ORDER};
use crate::prelude::*;
use crate::symbols::{box_samples, DEFAULT_INTERIOR_SAMPLES};

pub type Vec2 = [f64; 2];
/// `h[i][j]` = ∂²S/∂x_i∂θ_j; only the leading n×n block is meaningful.
pub type Mat2 = [[f64; 2]; 2];

/// Default seed for every sampled check.
pub const DEFAULT_SEED: u64 = 0x05ee_df10;
/// A growth constant is accepted when the full box raises it by at most this factor over the half box.
pub const GROWTH_TREND_LIMIT: f64 = 1.25;
const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 50;

/// Evaluator of a real phase with optional exact derivatives.
pub trait PhaseFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64], theta: &[f64]) -> f64;
    fn grad_x(&self, _x: &[f64], _theta: &[f64]) -> Option<Vec2> {
        None
    }
    fn grad_theta(&self, _x: &[f64], _theta: &[f64]) -> Option<Vec2> {
        None
    }
    fn mixed_hessian(&self, _x: &[f64], _theta: &[f64]) -> Option<Mat2> {
        None
    }
    /// ∂_x^α ∂_θ^β S(x,θ), if known in closed form.
    fn derivative(&self, _x: &[f64], _theta: &[f64], _alpha: &[usize], _beta: &[usize]) -> Option<f64> {
        None
    }
}

/// S(x,θ) = ½xᵀAx + xᵀBθ + ½θᵀCθ with A, C symmetric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticPhase {
    pub dim: usize,
    pub a: Mat2,
    pub b: Mat2,
    pub c: Mat2,
}

fn mat_vec(m: &Mat2, v: &[f64], n: usize) -> Vec2 {
    let mut out = [0.0; 2];
    for i in 0..n {
        for j in 0..n {
            out[i] += m[i][j] * v[j];
        }
    }
    out
}

fn mat_t_vec(m: &Mat2, v: &[f64], n: usize) -> Vec2 {
    let mut out = [0.0; 2];
    for j in 0..n {
        for i in 0..n {
            out[j] += m[i][j] * v[i];
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn det(m: &Mat2, n: usize) -> f64 {
    if n == 1 {
        m[0][0]
    } else {
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }
}

/// Positions of the nonzero orders in a multi-index, repeated by multiplicity.
fn expand(orders: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, &o) in orders.iter().enumerate() {
        for _ in 0..o {
            out.push(i);
        }
    }
    out
}

impl QuadraticPhase {
    pub fn new(dim: usize, a: Mat2, b: Mat2, c: Mat2) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if dim == 2 && ((a[0][1] - a[1][0]).abs() > 1e-14 || (c[0][1] - c[1][0]).abs() > 1e-14) {
            return Err(Error::InvalidArgument("A and C must be symmetric".into()));
        }
        let all = a.iter().chain(&b).chain(&c).flatten();
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite quadratic coefficient".into()));
        }
        Ok(Self { dim, a, b, c })
    }

    /// S = x·Bθ with the other blocks zero.
    pub fn bilinear(dim: usize, b: Mat2) -> Result<Self> {
        Self::new(dim, [[0.0; 2]; 2], b, [[0.0; 2]; 2])
    }

    pub fn det_b(&self) -> f64 {
        det(&self.b, self.dim)
    }

    /// Operator norm of the n×n block B.
    pub fn b_norm(&self) -> f64 {
        let n = self.dim;
        if n == 1 {
            return self.b[0][0].abs();
        }
        let b = &self.b;
        let fro2 = b.iter().flatten().map(|v| v * v).sum::<f64>();
        let d = det(b, 2);
        (0.5 * (fro2 + (fro2 * fro2 - 4.0 * d * d).max(0.0).sqrt())).sqrt()
    }
}

impl PhaseFunction for QuadraticPhase {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64], theta: &[f64]) -> f64 {
        let n = self.dim;
        0.5 * dot(x, &mat_vec(&self.a, x, n)[..n])
            + dot(x, &mat_vec(&self.b, theta, n)[..n])
            + 0.5 * dot(theta, &mat_vec(&self.c, theta, n)[..n])
    }
    fn grad_x(&self, x: &[f64], theta: &[f64]) -> Option<Vec2> {
        let n = self.dim;
        let (p, q) = (mat_vec(&self.a, x, n), mat_vec(&self.b, theta, n));
        Some([p[0] + q[0], p[1] + q[1]])
    }
    fn grad_theta(&self, x: &[f64], theta: &[f64]) -> Option<Vec2> {
        let n = self.dim;
        let (p, q) = (mat_t_vec(&self.b, x, n), mat_vec(&self.c, theta, n));
        Some([p[0] + q[0], p[1] + q[1]])
    }
    fn mixed_hessian(&self, _: &[f64], _: &[f64]) -> Option<Mat2> {
        Some(self.b)
    }
    fn derivative(&self, x: &[f64], theta: &[f64], alpha: &[usize], beta: &[usize]) -> Option<f64> {
        let (ia, ib) = (expand(alpha), expand(beta));
        Some(match (ia.len(), ib.len()) {
            (0, 0) => self.value(x, theta),
            (1, 0) => self.grad_x(x, theta).unwrap()[ia[0]],
            (0, 1) => self.grad_theta(x, theta).unwrap()[ib[0]],
            (2, 0) => self.a[ia[0]][ia[1]],
            (1, 1) => self.b[ia[0]][ib[0]],
            (0, 2) => self.c[ib[0]][ib[1]],
            _ => 0.0,
        })
    }
}

/// S = x·θ + √(1+|θ|²).
struct Kinetic(usize);

impl PhaseFunction for Kinetic {
    fn dim(&self) -> usize {
        self.0
    }
    fn value(&self, x: &[f64], theta: &[f64]) -> f64 {
        dot(x, theta) + weight_unchecked(theta)
    }
    fn grad_x(&self, _: &[f64], theta: &[f64]) -> Option<Vec2> {
        Some([theta[0], if self.0 == 2 { theta[1] } else { 0.0 }])
    }
    fn grad_theta(&self, x: &[f64], theta: &[f64]) -> Option<Vec2> {
        let l = weight_unchecked(theta);
        let mut g = [0.0; 2];
        for i in 0..self.0 {
            g[i] = x[i] + theta[i] / l;
        }
        Some(g)
    }
    fn mixed_hessian(&self, _: &[f64], _: &[f64]) -> Option<Mat2> {
        Some([[1.0, 0.0], [0.0, 1.0]])
    }
    fn derivative(&self, x: &[f64], theta: &[f64], alpha: &[usize], beta: &[usize]) -> Option<f64> {
        let n = self.0;
        let bilinear = QuadraticPhase::bilinear(n, [[1.0, 0.0], [0.0, 1.0]]).ok()?;
        let base = bilinear.derivative(x, theta, alpha, beta)?;
        let extra = if alpha.iter().all(|&o| o == 0) { weight_power_derivative(1.0, theta, beta) } else { 0.0 };
        Some(base + extra)
    }
}

struct FnPhase<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &[f64]) -> f64 + Send + Sync> PhaseFunction for FnPhase<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64], theta: &[f64]) -> f64 {
        (self.f)(x, theta)
    }
}

/// A phase with its claimed nondegeneracy constant δ₀.
#[derive(Clone)]
pub struct PhaseSpec {
    pub name: String,
    pub dim: usize,
    pub claimed_delta0: f64,
    quadratic: Option<QuadraticPhase>,
    inner: Arc<dyn PhaseFunction>,
}

impl core::fmt::Debug for PhaseSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("PhaseSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("claimed_delta0", &self.claimed_delta0)
            .field("quadratic", &self.quadratic)
            .finish()
    }
}

const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];
const ZERO: Mat2 = [[0.0; 2]; 2];

impl PhaseSpec {
    pub fn new(name: impl Into<String>, claimed_delta0: f64, inner: Arc<dyn PhaseFunction>) -> Result<Self> {
        let dim = inner.dim();
        if dim != 1 && dim != 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if !(claimed_delta0 > 0.0 && claimed_delta0.is_finite()) {
            return Err(Error::InvalidArgument(format!("claimed δ₀ must be positive, got {claimed_delta0}")));
        }
        Ok(Self { name: name.into(), dim, claimed_delta0, quadratic: None, inner })
    }

    /// Quadratic family; `claimed_delta0` defaults to |det B| (or 10⁻⁸ when B is singular).
    pub fn quadratic(name: impl Into<String>, q: QuadraticPhase, claimed_delta0: Option<f64>) -> Result<Self> {
        let d = claimed_delta0.unwrap_or_else(|| {
            let db = q.det_b().abs();
            if db > 0.0 {
                db
            } else {
                1e-8
            }
        });
        let mut spec = Self::new(name, d, Arc::new(q))?;
        spec.quadratic = Some(q);
        Ok(spec)
    }

    /// S = x·θ.
    pub fn identity(dim: usize) -> Result<Self> {
        Self::quadratic("identity", QuadraticPhase::new(dim, ZERO, IDENTITY, ZERO)?, Some(1.0))
    }

    /// S = x·θ + ½|x|².
    pub fn chirp(dim: usize) -> Result<Self> {
        Self::quadratic("chirp", QuadraticPhase::new(dim, IDENTITY, IDENTITY, ZERO)?, Some(1.0))
    }

    /// S = x·θ + ½|θ|².
    pub fn fresnel(dim: usize) -> Result<Self> {
        Self::quadratic("fresnel", QuadraticPhase::new(dim, ZERO, IDENTITY, IDENTITY)?, Some(1.0))
    }

    /// S = x·θ + √(1+|θ|²).
    pub fn kinetic(dim: usize) -> Result<Self> {
        Self::new("kinetic", 1.0, Arc::new(Kinetic(dim)))
    }

    /// S = c·x·θ.
    pub fn scaled_identity(dim: usize, c: f64) -> Result<Self> {
        let b = [[c, 0.0], [0.0, c]];
        Self::quadratic(format!("scaled_identity({c})"), QuadraticPhase::bilinear(dim, b)?, None)
    }

    /// Black-box phase; every derivative comes from finite differences.
    pub fn from_fn<F>(name: impl Into<String>, dim: usize, claimed_delta0: f64, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::new(name, claimed_delta0, Arc::new(FnPhase { dim, f }))
    }

    pub fn as_quadratic(&self) -> Option<&QuadraticPhase> {
        self.quadratic.as_ref()
    }

    #[inline]
    pub fn value(&self, x: &[f64], theta: &[f64]) -> f64 {
        self.inner.value(x, theta)
    }

    fn fd(&self, x: &[f64], theta: &[f64], alpha: &[usize], beta: &[usize]) -> Result<f64> {
        let n = self.dim;
        let point: Vec<f64> = x.iter().chain(theta).copied().collect();
        let orders: Vec<usize> = alpha.iter().chain(beta).copied().collect();
        let f = |v: &[f64]| self.inner.value(&v[..n], &v[n..]);
        fd_partial(&f, &point, &orders)
    }

    fn unit(&self, i: usize) -> Vec<usize> {
        let mut e = vec![0; self.dim];
        e[i] = 1;
        e
    }

    /// ∂_x^α ∂_θ^β S: the exact oracle when present, else finite differences.
    pub fn partial(&self, x: &[f64], theta: &[f64], alpha: &[usize], beta: &[usize]) -> Result<f64> {
        match self.inner.derivative(x, theta, alpha, beta) {
            Some(d) => Ok(d),
            None => self.fd(x, theta, alpha, beta),
        }
    }

    pub fn grad_x(&self, x: &[f64], theta: &[f64]) -> Result<Vec2> {
        if let Some(g) = self.inner.grad_x(x, theta) {
            return Ok(g);
        }
        let z = vec![0; self.dim];
        let mut g = [0.0; 2];
        for (i, gi) in g.iter_mut().enumerate().take(self.dim) {
            *gi = self.fd(x, theta, &self.unit(i), &z)?;
        }
        Ok(g)
    }

    pub fn grad_theta(&self, x: &[f64], theta: &[f64]) -> Result<Vec2> {
        if let Some(g) = self.inner.grad_theta(x, theta) {
            return Ok(g);
        }
        let z = vec![0; self.dim];
        let mut g = [0.0; 2];
        for (i, gi) in g.iter_mut().enumerate().take(self.dim) {
            *gi = self.fd(x, theta, &z, &self.unit(i))?;
        }
        Ok(g)
    }

    pub fn mixed_hessian(&self, x: &[f64], theta: &[f64]) -> Result<Mat2> {
        if let Some(h) = self.inner.mixed_hessian(x, theta) {
            return Ok(h);
        }
        let mut h = [[0.0; 2]; 2];
        for (i, row) in h.iter_mut().enumerate().take(self.dim) {
            for (j, hij) in row.iter_mut().enumerate().take(self.dim) {
                *hij = self.fd(x, theta, &self.unit(i), &self.unit(j))?;
            }
        }
        Ok(h)
    }

    /// det ∂²S/∂x∂θ (equal to det ∂²S/∂θ∂x).
    pub fn det_mixed(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        Ok(det(&self.mixed_hessian(x, theta)?, self.dim))
    }
}

/// Pass or fail of a single hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

/// One hypothesis check: passes carry the extremal constant, failures a witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub hypothesis: String,
    pub verdict: Verdict,
    pub constant: f64,
    pub witness: Option<Vec<f64>>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multi_index: Option<(Vec<usize>, Vec<usize>)>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

/// Growth constant C_{α,β} of S on the full and the half box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstant {
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
    pub constant: f64,
    pub half_box_constant: f64,
    pub witness: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub phase: String,
    pub seed: u64,
    pub checks: Vec<HypothesisCheck>,
    #[serde(default)]
    pub growth_constants: Vec<GrowthConstant>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn check(&self, hypothesis: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.hypothesis == hypothesis)
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.verdict.passed())
    }
}

fn within(p: &[f64], limit: f64) -> bool {
    p.iter().all(|c| c.abs() <= limit + 1e-12)
}

fn g3_check(s: &PhaseSpec, points: &[Vec<f64>]) -> Result<HypothesisCheck> {
    let n = s.dim;
    let mut min = (f64::INFINITY, Vec::new());
    for p in points {
        let d = s.det_mixed(&p[..n], &p[n..])?.abs();
        if d < min.0 {
            min = (d, p.clone());
        }
    }
    let ok = min.0 > 0.0 && min.0 >= s.claimed_delta0 * (1.0 - 1e-12);
    Ok(HypothesisCheck {
        hypothesis: "G3".into(),
        verdict: Verdict::from_bool(ok),
        constant: min.0,
        witness: Some(min.1),
        seed: DEFAULT_SEED,
        multi_index: None,
        detail: format!("min |det ∂²S/∂x∂θ| over the box; claimed δ₀ = {}", s.claimed_delta0),
    })
}

/// Sampled check of reality, growth |∂^α_x∂^β_θ S| ≤ C λ^{2−|α|−|β|} and
/// nondegeneracy |det ∂²S/∂x∂θ| ≥ δ₀.
///
/// Growth is judged by trend: a constant that grows by more than
/// [`GROWTH_TREND_LIMIT`] from the half box to the full box fails.
pub fn validate_g(s: &PhaseSpec, box_grid: &Grid, k: usize) -> Result<ValidationReport> {
    if k > MAX_DERIVATIVE_ORDER {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds {MAX_DERIVATIVE_ORDER}")));
    }
    if box_grid.dim != s.dim {
        return Err(Error::InvalidArgument("box dimension differs from phase dimension".into()));
    }
    let n = s.dim;
    let points = box_samples(box_grid, DEFAULT_INTERIOR_SAMPLES);
    let half = 0.5 * box_grid.half_width;
    let mut checks = Vec::new();
    let mut notes = Vec::new();

    let non_finite = points.iter().find(|p| !s.value(&p[..n], &p[n..]).is_finite());
    checks.push(HypothesisCheck {
        hypothesis: "G1".into(),
        verdict: Verdict::from_bool(non_finite.is_none()),
        constant: 0.0,
        witness: non_finite.cloned(),
        seed: DEFAULT_SEED,
        multi_index: None,
        detail: "S is real-valued and finite on the box".into(),
    });

    let mut growth = Vec::new();
    let mut first_failure: Option<usize> = None;
    for (alpha, beta) in multi_indices(n, k) {
        let order = alpha.iter().sum::<usize>() + beta.iter().sum::<usize>();
        let (mut full, mut half_c, mut witness) = (0.0f64, 0.0f64, points[0].clone());
        for p in &points {
            let d = s.partial(&p[..n], &p[n..], &alpha, &beta)?;
            let c = d.abs() * weight_unchecked(p).powf(order as f64 - 2.0);
            if !c.is_finite() {
                return Err(Error::EvaluationFailure { point: p.clone() });
            }
            if c > full {
                full = c;
                witness = p.clone();
            }
            if within(p, half) {
                half_c = half_c.max(c);
            }
        }
        let grows = full > GROWTH_TREND_LIMIT * half_c + 1e-9 * (1.0 + half_c);
        if grows && first_failure.is_none() {
            first_failure = Some(growth.len());
        }
        growth.push(GrowthConstant { alpha, beta, constant: full, half_box_constant: half_c, witness });
    }
    let g2 = match first_failure {
        None => HypothesisCheck {
            hypothesis: "G2".into(),
            verdict: Verdict::Pass,
            constant: growth.iter().map(|g| g.constant).fold(0.0, f64::max),
            witness: None,
            seed: DEFAULT_SEED,
            multi_index: None,
            detail: format!("all growth constants up to order {k} stable from half box to full box"),
        },
        Some(i) => {
            let g = &growth[i];
            HypothesisCheck {
                hypothesis: "G2".into(),
                verdict: Verdict::Fail,
                constant: g.constant,
                witness: Some(g.witness.clone()),
                seed: DEFAULT_SEED,
                multi_index: Some((g.alpha.clone(), g.beta.clone())),
                detail: format!("constant grows from {} (half box) to {} (full box)", g.half_box_constant, g.constant),
            }
        }
    };
    checks.push(g2);

    let g3 = g3_check(s, &points)?;
    if !g3.verdict.passed() && s.as_quadratic().is_some() {
        notes.push(
            "quadratic phase with degenerate B: the quadratic family does not satisfy the nondegeneracy hypothesis here".into(),
        );
    }
    checks.push(g3);
    Ok(ValidationReport { phase: s.name.clone(), seed: DEFAULT_SEED, checks, growth_constants: growth, notes })
}

/// Triples (x,θ,y) from the product of three copies of the box grid.
fn triple_samples(grid: &Grid) -> Vec<Vec<f64>> {
    let n = grid.dim;
    let nodes = grid.nodes();
    let mut out = Vec::with_capacity(nodes.len().pow(3));
    for px in &nodes {
        for pt in &nodes {
            for py in &nodes {
                let mut v = Vec::with_capacity(3 * n);
                v.extend_from_slice(&px[..n]);
                v.extend_from_slice(&pt[..n]);
                v.extend_from_slice(&py[..n]);
                out.push(v);
            }
        }
    }
    out
}

#[derive(Default)]
struct Extremes {
    min: f64,
    max: f64,
    half_min: f64,
    argmin: Vec<f64>,
}

impl Extremes {
    fn new() -> Self {
        Self { min: f64::INFINITY, max: 0.0, half_min: f64::INFINITY, argmin: Vec::new() }
    }
    fn push(&mut self, r: f64, p: &[f64], in_half: bool) {
        if r < self.min {
            self.min = r;
            self.argmin = p.to_vec();
        }
        self.max = self.max.max(r);
        if in_half {
            self.half_min = self.half_min.min(r);
        }
    }
    fn stable(&self) -> bool {
        self.min > 0.0 && self.min * GROWTH_TREND_LIMIT >= self.half_min
    }
}

/// Lower/upper constants K₁, K₂ of λ(−θ, ∂_θS−y, y) / λ(x,θ,y) and K₁*, K₂*
/// of λ(x, ∂_θS−y, ∂_xS) / λ(x,θ,y) over box triples.
///
/// Passes when the nondegeneracy check passes and both lower constants are
/// positive and stable from the half box to the full box.
pub fn validate_h_via_lemma(s: &PhaseSpec, box_grid: &Grid) -> Result<ValidationReport> {
    if box_grid.dim != s.dim {
        return Err(Error::InvalidArgument("box dimension differs from phase dimension".into()));
    }
    let n = s.dim;
    let half = 0.5 * box_grid.half_width;
    let g3 = g3_check(s, &box_samples(box_grid, DEFAULT_INTERIOR_SAMPLES))?;
    let (mut h3, mut h3s) = (Extremes::new(), Extremes::new());
    let mut buf_num = [0.0; 6];
    let mut buf_den = [0.0; 6];
    for p in triple_samples(box_grid) {
        let (x, t, y) = (&p[..n], &p[n..2 * n], &p[2 * n..]);
        let gt = s.grad_theta(x, t)?;
        let gx = s.grad_x(x, t)?;
        for i in 0..n {
            buf_den[i] = x[i];
            buf_den[n + i] = t[i];
            buf_den[2 * n + i] = y[i];
        }
        let den = weight_unchecked(&buf_den[..3 * n]);
        for i in 0..n {
            buf_num[i] = -t[i];
            buf_num[n + i] = gt[i] - y[i];
            buf_num[2 * n + i] = y[i];
        }
        let r = weight_unchecked(&buf_num[..3 * n]) / den;
        for i in 0..n {
            buf_num[i] = x[i];
            buf_num[n + i] = gt[i] - y[i];
            buf_num[2 * n + i] = gx[i];
        }
        let rs = weight_unchecked(&buf_num[..3 * n]) / den;
        if !(r.is_finite() && rs.is_finite()) {
            return Err(Error::EvaluationFailure { point: p });
        }
        let in_half = within(&p, half);
        h3.push(r, &p, in_half);
        h3s.push(rs, &p, in_half);
    }
    let mk = |name: &str, e: &Extremes| HypothesisCheck {
        hypothesis: name.into(),
        verdict: Verdict::from_bool(e.stable()),
        constant: e.min,
        witness: Some(e.argmin.clone()),
        seed: DEFAULT_SEED,
        multi_index: None,
        detail: format!("lower constant {} (half box {}), upper constant {}", e.min, e.half_min, e.max),
    };
    let c_h3 = mk("H3", &h3);
    let c_h3s = mk("H3*", &h3s);
    let ok = g3.verdict.passed() && c_h3.verdict.passed() && c_h3s.verdict.passed();
    let overall = HypothesisCheck {
        hypothesis: "H-via-lemma".into(),
        verdict: Verdict::from_bool(ok),
        constant: h3.min.min(h3s.min),
        witness: if ok {
            None
        } else if !c_h3s.verdict.passed() {
            c_h3s.witness.clone()
        } else if !c_h3.verdict.passed() {
            c_h3.witness.clone()
        } else {
            g3.witness.clone()
        },
        seed: DEFAULT_SEED,
        multi_index: None,
        detail: format!("K1 = {}, K2 = {}, K1* = {}, K2* = {}", h3.min, h3.max, h3s.min, h3s.max),
    };
    Ok(ValidationReport {
        phase: s.name.clone(),
        seed: DEFAULT_SEED,
        checks: vec![g3, c_h3, c_h3s, overall],
        growth_constants: Vec::new(),
        notes: Vec::new(),
    })
}

/// Empirical C₂ = max |x−x′| / |∂_θS(x,θ) − ∂_θS(x′,θ)|.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub c2: f64,
    /// (x, x′, θ) attaining the maximum.
    pub witness: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub fn check_separation(s: &PhaseSpec, box_grid: &Grid, samples: usize, seed: u64) -> Result<SeparationReport> {
    let n = s.dim;
    let l = box_grid.half_width;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut best = (0.0f64, Vec::new());
    for _ in 0..samples {
        let p: Vec<f64> = (0..3 * n).map(|_| rng.random_range(-l..l)).collect();
        let (x, xp, t) = (&p[..n], &p[n..2 * n], &p[2 * n..]);
        let (g, gp) = (s.grad_theta(x, t)?, s.grad_theta(xp, t)?);
        let dx: Vec<f64> = (0..n).map(|i| x[i] - xp[i]).collect();
        let dg: Vec<f64> = (0..n).map(|i| g[i] - gp[i]).collect();
        let (num, den) = (norm(&dx), norm(&dg));
        if num == 0.0 {
            continue;
        }
        if den == 0.0 {
            return Err(Error::LemmaViolated { witness: p });
        }
        let r = num / den;
        if r > best.0 {
            best = (r, p);
        }
    }
    Ok(SeparationReport { c2: best.0, witness: best.1, samples, seed })
}

/// Sampled description of Ω_{φ,ε₀} = {|∂_θS − y|² < ε₀(|x|²+|y|²+|θ|²)}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaReport {
    pub eps0: f64,
    pub samples: usize,
    pub members: usize,
    pub empty: bool,
    /// max |y| / λ(x,θ) over members.
    pub c4: Option<f64>,
    pub c4_witness: Option<Vec<f64>>,
    /// min and max of λ(x,θ,y) / λ(x,θ) over members.
    pub ratio_min: Option<f64>,
    pub ratio_max: Option<f64>,
    pub seed: u64,
}

pub fn omega_region_check(s: &PhaseSpec, eps0: f64, box_grid: &Grid, samples: usize, seed: u64) -> Result<OmegaReport> {
    let n = s.dim;
    let l = box_grid.half_width;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut members = 0;
    let mut c4: Option<(f64, Vec<f64>)> = None;
    let (mut rmin, mut rmax) = (f64::INFINITY, 0.0f64);
    for _ in 0..samples {
        let p: Vec<f64> = (0..3 * n).map(|_| rng.random_range(-l..l)).collect();
        let (x, t, y) = (&p[..n], &p[n..2 * n], &p[2 * n..]);
        let g = s.grad_theta(x, t)?;
        let lhs: f64 = (0..n).map(|i| (g[i] - y[i]).powi(2)).sum();
        let rhs = eps0 * p.iter().map(|c| c * c).sum::<f64>();
        if lhs < rhs {
            members += 1;
            let lxt = weight_unchecked(&p[..2 * n]);
            let r4 = norm(y) / lxt;
            if c4.as_ref().is_none_or(|c| r4 > c.0) {
                c4 = Some((r4, p.clone()));
            }
            let ratio = weight_unchecked(&p) / lxt;
            rmin = rmin.min(ratio);
            rmax = rmax.max(ratio);
        }
    }
    let empty = members == 0;
    Ok(OmegaReport {
        eps0,
        samples,
        members,
        empty,
        c4: c4.as_ref().map(|c| c.0),
        c4_witness: c4.map(|c| c.1),
        ratio_min: (!empty).then_some(rmin),
        ratio_max: (!empty).then_some(rmax),
        seed,
    })
}

fn solve(m: &Mat2, rhs: &Vec2, n: usize, point: &[f64]) -> Result<Vec2> {
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let d = det(m, n);
    if scale == 0.0 || d.abs() <= 1e-14 * scale.powi(n as i32) {
        return Err(Error::JacobianSingular { point: point.to_vec() });
    }
    Ok(if n == 1 {
        [rhs[0] / d, 0.0]
    } else {
        [(m[1][1] * rhs[0] - m[0][1] * rhs[1]) / d, (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / d]
    })
}

fn transpose(m: &Mat2) -> Mat2 {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

/// θ with ∂_xS(x,θ) = ξ by Newton iteration from `theta_init`.
pub fn invert_dx_s(s: &PhaseSpec, x: &[f64], xi: &[f64], theta_init: &[f64]) -> Result<Vec2> {
    let n = s.dim;
    let tol = NEWTON_TOL * (1.0 + norm(xi));
    let mut t = [0.0; 2];
    t[..n].copy_from_slice(theta_init);
    for _ in 0..NEWTON_MAX_ITER {
        let g = s.grad_x(x, &t[..n])?;
        let r = [g[0] - xi[0], if n == 2 { g[1] - xi[1] } else { 0.0 }];
        if norm(&r[..n]) <= tol {
            return Ok(t);
        }
        let step = solve(&s.mixed_hessian(x, &t[..n])?, &r, n, &t[..n])?;
        for i in 0..n {
            t[i] -= step[i];
        }
    }
    let g = s.grad_x(x, &t[..n])?;
    let r: Vec<f64> = (0..n).map(|i| g[i] - xi[i]).collect();
    if norm(&r) <= tol {
        return Ok(t);
    }
    Err(Error::SolverFailure { last: t[..n].to_vec(), iterations: NEWTON_MAX_ITER })
}

/// x with ∂_θS(x,θ) = y by Newton iteration from `x_init`.
pub fn invert_dtheta_s(s: &PhaseSpec, theta: &[f64], y: &[f64], x_init: &[f64]) -> Result<Vec2> {
    let n = s.dim;
    let tol = NEWTON_TOL * (1.0 + norm(y));
    let mut x = [0.0; 2];
    x[..n].copy_from_slice(x_init);
    for _ in 0..NEWTON_MAX_ITER {
        let g = s.grad_theta(&x[..n], theta)?;
        let r = [g[0] - y[0], if n == 2 { g[1] - y[1] } else { 0.0 }];
        if norm(&r[..n]) <= tol {
            return Ok(x);
        }
        let step = solve(&transpose(&s.mixed_hessian(&x[..n], theta)?), &r, n, &x[..n])?;
        for i in 0..n {
            x[i] -= step[i];
        }
    }
    let g = s.grad_theta(&x[..n], theta)?;
    let r: Vec<f64> = (0..n).map(|i| g[i] - y[i]).collect();
    if norm(&r) <= tol {
        return Ok(x);
    }
    Err(Error::SolverFailure { last: x[..n].to_vec(), iterations: NEWTON_MAX_ITER })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::make_grid;

    fn default_box() -> Grid {
        make_grid(1, 10.0, 41).unwrap()
    }

    #[test]
    fn identity_passes_growth_and_nondegeneracy() {
        let r = validate_g(&PhaseSpec::identity(1).unwrap(), &default_box(), 2).unwrap();
        assert!(r.all_pass(), "{r:?}");
        assert_eq!(r.check("G3").unwrap().constant, 1.0);
        let c11 = r.growth_constants.iter().find(|g| g.alpha == [1] && g.beta == [1]).unwrap();
        assert_eq!(c11.constant, 1.0);
    }

    #[test]
    fn degenerate_quadratic_fails_nondegeneracy() {
        let q = QuadraticPhase::new(1, [[1.0, 0.0], [0.0, 0.0]], ZERO, ZERO).unwrap();
        let s = PhaseSpec::quadratic("half_x_squared", q, None).unwrap();
        let r = validate_g(&s, &default_box(), 2).unwrap();
        let g3 = r.check("G3").unwrap();
        assert_eq!(g3.verdict, Verdict::Fail);
        assert_eq!(g3.constant, 0.0);
        assert!(g3.witness.is_some());
        assert!(!r.notes.is_empty());
    }

    #[test]
    fn quartic_phase_fails_growth_at_order_zero() {
        let s = PhaseSpec::from_fn("x2t2", 1, 1e-8, |x, t| x[0] * x[0] * t[0] * t[0]).unwrap();
        let r = validate_g(&s, &default_box(), 2).unwrap();
        let g2 = r.check("G2").unwrap();
        assert_eq!(g2.verdict, Verdict::Fail);
        assert_eq!(g2.multi_index, Some((vec![0], vec![0])));
        let w = g2.witness.as_ref().unwrap();
        assert!(w[0].abs() > 9.0 && w[1].abs() > 9.0, "{w:?}");
    }

    #[test]
    fn lemma_constants_for_identity_and_chirp() {
        let r = validate_h_via_lemma(&PhaseSpec::identity(1).unwrap(), &default_box()).unwrap();
        assert!(r.all_pass(), "{r:?}");
        let k1 = r.check("H3").unwrap().constant;
        assert!(k1 >= 1.0 / 3f64.sqrt() - 1e-12 && k1 <= 1.0, "{k1}");
        let r = validate_h_via_lemma(&PhaseSpec::chirp(1).unwrap(), &default_box()).unwrap();
        assert!(r.check("H3").unwrap().constant > 0.0);
        assert!(r.all_pass(), "{r:?}");
    }

    #[test]
    fn lemma_check_fails_for_degenerate_phase() {
        let q = QuadraticPhase::new(1, [[1.0, 0.0], [0.0, 0.0]], ZERO, ZERO).unwrap();
        let s = PhaseSpec::quadratic("half_x_squared", q, None).unwrap();
        let r = validate_h_via_lemma(&s, &default_box()).unwrap();
        assert_eq!(r.check("H-via-lemma").unwrap().verdict, Verdict::Fail);
        let w = r.check("H3*").unwrap().witness.clone().unwrap();
        assert_eq!(w[0], 0.0);
        assert_eq!(w[2], 0.0);
        assert_eq!(w[1].abs(), 10.0);
    }

    #[test]
    fn separation_constants_for_linear_cases() {
        let b = default_box();
        let c = check_separation(&PhaseSpec::identity(1).unwrap(), &b, 1000, 1).unwrap().c2;
        assert_eq!(c, 1.0);
        let c = check_separation(&PhaseSpec::scaled_identity(1, 2.0).unwrap(), &b, 1000, 1).unwrap().c2;
        assert_eq!(c, 0.5);
        let c = check_separation(&PhaseSpec::fresnel(1).unwrap(), &b, 1000, 1).unwrap().c2;
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separation_reports_violation() {
        let q = QuadraticPhase::new(1, ZERO, ZERO, IDENTITY).unwrap();
        let s = PhaseSpec::quadratic("half_theta_squared", q, None).unwrap();
        assert!(matches!(check_separation(&s, &default_box(), 10, 1), Err(Error::LemmaViolated { .. })));
    }

    #[test]
    fn omega_region() {
        let s = PhaseSpec::identity(1).unwrap();
        let r = omega_region_check(&s, 0.01, &default_box(), 100_000, 7).unwrap();
        assert!(!r.empty);
        let c4 = r.c4.unwrap();
        assert!(c4 <= 1.2, "{c4}");
        assert!(r.ratio_min.unwrap() >= 1.0);
        assert!(r.ratio_max.unwrap() <= (1.0 + c4 * c4).sqrt() + 0.1);
        let r = omega_region_check(&s, 0.0, &default_box(), 1000, 7).unwrap();
        assert!(r.empty);
    }

    #[test]
    fn newton_examples() {
        let id = PhaseSpec::identity(1).unwrap();
        assert_eq!(invert_dx_s(&id, &[3.0], &[1.7], &[0.0]).unwrap()[0], 1.7);
        let chirp = PhaseSpec::chirp(1).unwrap();
        assert!((invert_dx_s(&chirp, &[2.0], &[5.0], &[0.0]).unwrap()[0] - 3.0).abs() < 1e-12);
        let two = PhaseSpec::scaled_identity(1, 2.0).unwrap();
        assert!((invert_dx_s(&two, &[0.3], &[3.0], &[0.0]).unwrap()[0] - 1.5).abs() < 1e-12);
        assert!((invert_dtheta_s(&id, &[0.4], &[2.5], &[0.0]).unwrap()[0] - 2.5).abs() < 1e-12);
        let fr = PhaseSpec::fresnel(1).unwrap();
        assert!((invert_dtheta_s(&fr, &[1.0], &[4.0], &[0.0]).unwrap()[0] - 3.0).abs() < 1e-12);
        assert!((invert_dtheta_s(&two, &[1.0], &[3.0], &[0.0]).unwrap()[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn newton_detects_singular_jacobian() {
        let q = QuadraticPhase::new(1, [[1.0, 0.0], [0.0, 0.0]], ZERO, ZERO).unwrap();
        let s = PhaseSpec::quadratic("degenerate", q, None).unwrap();
        assert!(matches!(invert_dx_s(&s, &[1.0], &[5.0], &[0.0]), Err(Error::JacobianSingular { .. })));
    }

    #[test]
    fn kinetic_newton_in_two_dimensions() {
        let s = PhaseSpec::kinetic(2).unwrap();
        let x = [0.3, -1.2];
        let t = [2.0, 0.5];
        let y = s.grad_theta(&x, &t).unwrap();
        let back = invert_dtheta_s(&s, &t, &y, &[0.0, 0.0]).unwrap();
        assert!((back[0] - x[0]).abs() < 1e-9 && (back[1] - x[1]).abs() < 1e-9);
    }

    #[test]
    fn oracles_agree_with_finite_differences() {
        let q = QuadraticPhase::new(2, [[1.0, 0.3], [0.3, -2.0]], [[1.0, 0.5], [-0.2, 2.0]], [[0.5, 0.1], [0.1, 1.0]])
            .unwrap();
        for s in [PhaseSpec::quadratic("q", q, None).unwrap(), PhaseSpec::kinetic(2).unwrap()] {
            let (x, t) = ([0.7, -1.1], [0.4, 2.3]);
            for (a, b) in multi_indices(2, 3) {
                let exact = s.partial(&x, &t, &a, &b).unwrap();
                let fd = s.fd(&x, &t, &a, &b).unwrap();
                assert!((exact - fd).abs() < 1e-4 * (1.0 + exact.abs()), "{} {a:?} {b:?}: {exact} {fd}", s.name);
            }
        }
    }
}
