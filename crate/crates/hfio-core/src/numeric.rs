//! Shared numeric substrate: the weight λ, uniform grids, sampled fields,
//! the semiclassical parameter and tensor-product finite differences.

use core::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prelude::*;

/// Highest total derivative order accepted by [`DerivativeRequest`].
pub const MAX_DERIVATIVE_ORDER: usize = 4;

/// λ(v) = (1 + |v|²)^{1/2}.
pub fn weight(v: &[f64]) -> Result<f64> {
    if v.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite weight argument {v:?}")));
    }
    Ok(weight_unchecked(v))
}

/// λ(v) without the finiteness check, for inner loops.
#[inline]
pub fn weight_unchecked(v: &[f64]) -> f64 {
    (1.0 + v.iter().map(|c| c * c).sum::<f64>()).sqrt()
}

/// Exact partial derivative ∂^γ λ(v)^m.
///
/// Uses λ^m = G(Σ v_i²) with G(s) = (1+s)^{m/2} and the one-variable rule
/// dⁿ/dvⁿ G(v²) = Σ_k n!/((2k−n)!(n−k)!) (2v)^{2k−n} G^{(k)}(v²), applied
/// coordinate by coordinate.
pub fn weight_power_derivative(m: f64, v: &[f64], gamma: &[usize]) -> f64 {
    assert_eq!(v.len(), gamma.len(), "multi-index length must match the point");
    let s: f64 = v.iter().map(|c| c * c).sum();
    let mut total = 0.0;
    let mut ks = vec![0usize; v.len()];
    accumulate_weight_terms(m, s, v, gamma, 0, &mut ks, &mut total);
    total
}

fn accumulate_weight_terms(
    m: f64,
    s: f64,
    v: &[f64],
    gamma: &[usize],
    axis: usize,
    ks: &mut [usize],
    total: &mut f64,
) {
    if axis == v.len() {
        let k: usize = ks.iter().sum();
        let mut g = (1.0 + s).powf(0.5 * m - k as f64);
        for j in 0..k {
            g *= 0.5 * m - j as f64;
        }
        let mut prod = g;
        for i in 0..v.len() {
            prod *= one_variable_coefficient(gamma[i], ks[i], v[i]);
        }
        *total += prod;
        return;
    }
    let n = gamma[axis];
    for k in n.div_ceil(2)..=n {
        ks[axis] = k;
        accumulate_weight_terms(m, s, v, gamma, axis + 1, ks, total);
    }
}

fn one_variable_coefficient(n: usize, k: usize, v: f64) -> f64 {
    let c = factorial(n) / (factorial(2 * k - n) * factorial(n - k));
    c * (2.0 * v).powi((2 * k - n) as i32)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// C^∞ step: 0 for s ≤ 0, 1 for s ≥ 1, e^{-1/s}/(e^{-1/s}+e^{-1/(1-s)}) between.
pub fn smoothstep(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / s).exp();
        let b = (-1.0 / (1.0 - s)).exp();
        a / (a + b)
    }
}

/// Fixed-order pairwise summation; the result does not depend on how the
/// caller schedules the work that produced `values`.
pub fn pairwise_sum(values: &[Complex64]) -> Complex64 {
    if values.len() <= 16 {
        return values.iter().fold(Complex64::new(0.0, 0.0), |acc, v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Radical inverse of `index` in `base` (one coordinate of a Halton point).
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut out = 0.0;
    let mut scale = inv;
    while index > 0 {
        out += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    out
}

const HALTON_BASES: [u64; 6] = [2, 3, 5, 7, 11, 13];

/// `count` Halton points in the cube [−half_width, half_width]^dim (dim ≤ 6).
pub fn halton_points(dim: usize, count: usize, half_width: f64) -> Vec<Vec<f64>> {
    assert!(dim <= HALTON_BASES.len());
    (1..=count as u64)
        .map(|i| {
            (0..dim)
                .map(|d| (2.0 * radical_inverse(i, HALTON_BASES[d]) - 1.0) * half_width)
                .collect()
        })
        .collect()
}

/// `(0..n).map(f)`, evaluated in parallel when the `parallel` feature is on.
/// Output order never depends on scheduling.
pub(crate) fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Uniform tensor grid on [−L, L]^dim with N nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub half_width: f64,
    pub points_per_axis: usize,
}

/// Grid nodes carry up to two coordinates; only the first `dim` are used.
pub type Point = [f64; 2];

impl Grid {
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points_per_axis - 1) as f64
    }

    /// Quadrature weight of every node, spacing^dim.
    pub fn weight(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// i-th coordinate along one axis, exactly symmetric and hitting ±L.
    pub fn axis_value(&self, i: usize) -> f64 {
        let n1 = (self.points_per_axis - 1) as f64;
        self.half_width * (2.0 * i as f64 - n1) / n1
    }

    pub fn axis(&self) -> Vec<f64> {
        (0..self.points_per_axis).map(|i| self.axis_value(i)).collect()
    }

    /// Node with flat index `idx` (last axis fastest).
    pub fn node(&self, idx: usize) -> Point {
        let n = self.points_per_axis;
        match self.dim {
            1 => [self.axis_value(idx), 0.0],
            _ => [self.axis_value(idx / n), self.axis_value(idx % n)],
        }
    }

    pub fn nodes(&self) -> Vec<Point> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Grid {k·spacing : |k| ≤ half_count} per axis.
    pub fn centered(dim: usize, spacing: f64, half_count: usize) -> Result<Grid> {
        if half_count == 0 {
            return Err(Error::InvalidArgument("centered grid needs half_count ≥ 1".into()));
        }
        make_grid(dim, spacing * half_count as f64, 2 * half_count + 1)
    }

    /// Sub-grid restricted to |coordinate| ≤ limit on every axis, as node indices.
    pub fn indices_within(&self, limit: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| {
                let p = self.node(i);
                p[..self.dim].iter().all(|c| c.abs() <= limit + 1e-12)
            })
            .collect()
    }
}

/// Build a grid after checking dim ∈ {1,2}, N ≥ 2, L > 0.
pub fn make_grid(dim: usize, half_width: f64, points_per_axis: usize) -> Result<Grid> {
    if dim != 1 && dim != 2 {
        return Err(Error::UnsupportedDimension(dim));
    }
    if points_per_axis < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 points per axis, got {points_per_axis}")));
    }
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::InvalidArgument(format!("half width must be positive, got {half_width}")));
    }
    Ok(Grid { dim, half_width, points_per_axis })
}

/// Complex samples of a function on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<Complex64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let values = grid.nodes().iter().map(|p| f(&p[..grid.dim])).collect();
        Self { grid, values }
    }

    /// Discrete L² norm with the grid quadrature weight.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.weight()).sqrt()
    }
}

/// Semiclassical parameter h > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HValue(f64);

impl HValue {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h.is_finite() {
            Ok(Self(h))
        } else {
            Err(Error::InvalidArgument(format!("h must be positive and finite, got {h}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Multi-index (α, β, γ) over the blocks (x, θ, y).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivativeRequest {
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
    pub gamma: Vec<usize>,
}

impl DerivativeRequest {
    pub fn new(alpha: Vec<usize>, beta: Vec<usize>) -> Self {
        Self { alpha, beta, gamma: Vec::new() }
    }

    /// Single-block request, e.g. a plain function of one vector.
    pub fn single(orders: Vec<usize>) -> Self {
        Self::new(orders, Vec::new())
    }

    pub fn order(&self) -> usize {
        self.alpha.iter().chain(&self.beta).chain(&self.gamma).sum()
    }

    /// Orders per coordinate of the concatenated point (x, θ, y).
    pub fn flattened(&self) -> Vec<usize> {
        self.alpha.iter().chain(&self.beta).chain(&self.gamma).copied().collect()
    }

    pub fn validate(&self, max_order: usize) -> Result<()> {
        if self.order() > max_order {
            return Err(Error::InvalidArgument(format!(
                "derivative order {} exceeds the maximum {max_order}",
                self.order()
            )));
        }
        Ok(())
    }
}

/// All multi-indices (α, β) ∈ ℕⁿ × ℕⁿ with |α|+|β| ≤ k, ordered by total order.
pub fn multi_indices(n: usize, k: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut all = Vec::new();
    let mut cur = vec![0usize; 2 * n];
    fn rec(pos: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos == cur.len() {
            out.push(cur.clone());
            return;
        }
        for o in 0..=left {
            cur[pos] = o;
            rec(pos + 1, left - o, cur, out);
        }
        cur[pos] = 0;
    }
    let mut flat = Vec::new();
    rec(0, k, &mut cur, &mut flat);
    flat.sort_by_key(|v| (v.iter().sum::<usize>(), core::cmp::Reverse(v.clone())));
    for v in flat {
        all.push((v[..n].to_vec(), v[n..].to_vec()));
    }
    all
}

/// Values that finite differences can combine.
pub trait FdValue: Copy + Add<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn finite(&self) -> bool;
}

impl FdValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn finite(&self) -> bool {
        self.is_finite()
    }
}

impl FdValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Base step max(10⁻³, 10⁻³·λ(point)).
pub fn fd_base_step(point: &[f64]) -> f64 {
    (1e-3 * weight_unchecked(point)).max(1e-3)
}

/// Step multiplier by total order; keeps round-off below truncation for
/// third and fourth derivatives.
fn order_scale(order: usize) -> f64 {
    match order {
        0..=2 => 1.0,
        3 => 5.0,
        _ => 10.0,
    }
}

fn stencil(order: usize) -> (&'static [f64], &'static [f64]) {
    match order {
        1 => (&[-1.0, 1.0], &[-0.5, 0.5]),
        2 => (&[-1.0, 0.0, 1.0], &[1.0, -2.0, 1.0]),
        3 => (&[-2.0, -1.0, 1.0, 2.0], &[-0.5, 1.0, -1.0, 0.5]),
        4 => (&[-2.0, -1.0, 0.0, 1.0, 2.0], &[1.0, -4.0, 6.0, -4.0, 1.0]),
        _ => unreachable!("order capped at {MAX_DERIVATIVE_ORDER}"),
    }
}

/// Central finite difference of a real function with one Richardson step.
///
/// `point` concatenates the blocks named by `req`; the step is
/// max(10⁻³, 10⁻³·λ(point)), enlarged by 5 and 10 for total order 3 and 4.
pub fn fd_derivative<F: Fn(&[f64]) -> f64>(f: F, point: &[f64], req: &DerivativeRequest) -> Result<f64> {
    req.validate(MAX_DERIVATIVE_ORDER)?;
    let orders = req.flattened();
    if orders.len() != point.len() {
        return Err(Error::InvalidArgument(format!(
            "multi-index has {} entries, point has {}",
            orders.len(),
            point.len()
        )));
    }
    fd_partial(&f, point, &orders)
}

/// Finite-difference partial ∂^{orders} f(point) for real or complex `f`.
pub fn fd_partial<T: FdValue, F: Fn(&[f64]) -> T + ?Sized>(f: &F, point: &[f64], orders: &[usize]) -> Result<T> {
    let total: usize = orders.iter().sum();
    if total > MAX_DERIVATIVE_ORDER {
        return Err(Error::InvalidArgument(format!("derivative order {total} exceeds {MAX_DERIVATIVE_ORDER}")));
    }
    let mut scratch = point.to_vec();
    if total == 0 {
        let v = f(point);
        return if v.finite() { Ok(v) } else { Err(Error::EvaluationFailure { point: point.to_vec() }) };
    }
    let s = fd_base_step(point) * order_scale(total);
    let coarse = fd_tensor(f, point, orders, s, &mut scratch)?;
    let fine = fd_tensor(f, point, orders, 0.5 * s, &mut scratch)?;
    Ok(fine * (4.0 / 3.0) + coarse * (-1.0 / 3.0))
}

fn fd_tensor<T: FdValue, F: Fn(&[f64]) -> T + ?Sized>(
    f: &F,
    point: &[f64],
    orders: &[usize],
    s: f64,
    scratch: &mut [f64],
) -> Result<T> {
    let active: Vec<usize> = (0..orders.len()).filter(|&i| orders[i] > 0).collect();
    let total: usize = orders.iter().sum();
    let mut acc = T::zero();
    let mut bad = None;
    tensor_rec(f, point, orders, &active, 0, s, 1.0, scratch, &mut acc, &mut bad);
    if let Some(p) = bad {
        return Err(Error::EvaluationFailure { point: p });
    }
    Ok(acc * (1.0 / s.powi(total as i32)))
}

#[allow(clippy::too_many_arguments)]
fn tensor_rec<T: FdValue, F: Fn(&[f64]) -> T + ?Sized>(
    f: &F,
    point: &[f64],
    orders: &[usize],
    active: &[usize],
    depth: usize,
    s: f64,
    coef: f64,
    scratch: &mut [f64],
    acc: &mut T,
    bad: &mut Option<Vec<f64>>,
) {
    if bad.is_some() {
        return;
    }
    if depth == active.len() {
        let v = f(scratch);
        if !v.finite() {
            *bad = Some(scratch.to_vec());
            return;
        }
        *acc = *acc + v * coef;
        return;
    }
    let axis = active[depth];
    let (offsets, coefs) = stencil(orders[axis]);
    for (o, c) in offsets.iter().zip(coefs) {
        scratch[axis] = point[axis] + o * s;
        tensor_rec(f, point, orders, active, depth + 1, s, coef * c, scratch, acc, bad);
    }
    scratch[axis] = point[axis];
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_examples() {
        assert_eq!(weight(&[0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert!((weight(&[1.0, 0.0, 0.0]).unwrap() - core::f64::consts::SQRT_2).abs() < 1e-15);
        assert!((weight(&[1.0, 2.0, 2.0]).unwrap() - 3.16227766).abs() < 1e-8);
        assert!(weight(&[f64::NAN]).is_err());
    }

    #[test]
    fn grid_examples() {
        let g = make_grid(1, 10.0, 5).unwrap();
        assert_eq!(g.axis(), vec![-10.0, -5.0, 0.0, 5.0, 10.0]);
        assert_eq!(g.weight(), 5.0);
        let g = make_grid(1, 1.0, 3).unwrap();
        assert_eq!(g.axis(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(g.weight(), 1.0);
        let g = make_grid(2, 1.0, 3).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.weight(), 1.0);
        assert_eq!(make_grid(3, 1.0, 3), Err(Error::UnsupportedDimension(3)));
    }

    #[test]
    fn fd_examples() {
        let d = fd_derivative(|v| v[0] * v[0], &[3.0], &DerivativeRequest::single(vec![2])).unwrap();
        assert!((d - 2.0).abs() <= 1e-6);
        let d = fd_derivative(|v| v[0], &[5.0], &DerivativeRequest::single(vec![1])).unwrap();
        assert!((d - 1.0).abs() <= 1e-10);
        let d = fd_derivative(|v| v[0] * v[1], &[2.0, 7.0], &DerivativeRequest::new(vec![1], vec![1])).unwrap();
        assert!((d - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn fd_reports_offending_point() {
        let err = fd_derivative(|v| v[0].ln(), &[0.0], &DerivativeRequest::single(vec![1])).unwrap_err();
        assert!(matches!(err, Error::EvaluationFailure { .. }));
    }

    #[test]
    fn weight_power_derivative_matches_closed_forms() {
        let (x, t) = (0.7, -1.3);
        let l2 = 1.0 + x * x + t * t;
        // ∂_x λ^{-1} = −x λ^{-3}
        let d = weight_power_derivative(-1.0, &[x, t], &[1, 0]);
        assert!((d + x * l2.powf(-1.5)).abs() < 1e-14);
        // ∂_x∂_θ λ^{-2} = 8xθ λ^{-6}
        let d = weight_power_derivative(-2.0, &[x, t], &[1, 1]);
        assert!((d - 8.0 * x * t / (l2 * l2 * l2)).abs() < 1e-14);
        // ∂_x² λ² = 2
        let d = weight_power_derivative(2.0, &[x, t], &[2, 0]);
        assert!((d - 2.0).abs() < 1e-14);
    }

    #[test]
    fn weight_power_derivative_matches_fd_up_to_order_four() {
        let p = [0.4, -0.9];
        for (a, b) in multi_indices(1, 4) {
            let g = [a[0], b[0]];
            let exact = weight_power_derivative(-1.0, &p, &g);
            let fd = fd_partial(&|v: &[f64]| weight_unchecked(v).recip(), &p, &g).unwrap();
            assert!((exact - fd).abs() < 2e-5 * (1.0 + exact.abs()), "{g:?}: {exact} vs {fd}");
        }
    }

    #[test]
    fn multi_index_enumeration() {
        let idx = multi_indices(1, 2);
        assert_eq!(idx.len(), 6);
        assert_eq!(idx[0], (vec![0], vec![0]));
        assert_eq!(multi_indices(2, 3).len(), 35);
    }

    #[test]
    fn smoothstep_is_a_monotone_transition() {
        assert_eq!(smoothstep(-0.1), 0.0);
        assert_eq!(smoothstep(1.2), 1.0);
        assert!((smoothstep(0.5) - 0.5).abs() < 1e-15);
        assert!(smoothstep(0.3) < smoothstep(0.31));
    }

    #[test]
    fn halton_points_stay_in_the_box() {
        let pts = halton_points(3, 200, 10.0);
        assert_eq!(pts.len(), 200);
        assert!(pts.iter().flatten().all(|c| c.abs() < 10.0));
        assert!((radical_inverse(1, 2) - 0.5).abs() < 1e-15);
        assert!((radical_inverse(5, 3) - (2.0 / 3.0 + 1.0 / 9.0)).abs() < 1e-15);
    }
}
