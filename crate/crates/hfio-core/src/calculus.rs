//! Symbol calculus for F_hF_h* and F_h*F_h
//!
//! Extraction inverts the left h-quantization,
//! σ(x,ξ) = ∫ K(x, x−z) e^{−iz·ξ/h} dz, on a windowed row of the composition
//! matrix. The predicted leading symbol is |a(x,θ)|²·|det ∂²S/∂θ∂x(x,θ)|⁻¹,
//! read at (x, ∂_xS(x,θ)) for F_hF_h* and at (∂_θS(x,θ), θ) for F_h*F_h.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{fd_partial, make_grid, multi_indices, par_map, smoothstep, Grid, HValue, MAX_DERIVATIVE_ORDER};
use crate::operator::{compose_ff_star, compose_fstar_f, AssemblyOptions, FioSpec, KernelMatrix};
use crate::phase::{invert_dtheta_s, invert_dx_s, PhaseSpec, GROWTH_TREND_LIMIT};
use crate::prelude::*;
use crate::symbols::{box_samples, AmplitudeSpec, DEFAULT_INTERIOR_SAMPLES};

pub const DEFAULT_WINDOW: f64 = 4.0;
pub const TRUSTED_FRACTION: f64 = 0.6;
/// Fraction of row L² mass lost to the window above which extraction warns.
pub const WINDOW_LOSS_LIMIT: f64 = 0.01;
pub const EXACT_ERROR_LIMIT: f64 = 1e-3;
pub const SLOPE_THRESHOLD: f64 = 0.8;

/// Which composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "FF*")]
    FfStar,
    #[serde(rename = "F*F")]
    FStarF,
}

/// How |det ∂²S/∂θ∂x| enters the predicted symbol. `Direct` is wrong on
/// purpose and exists so that test harnesses can inject a fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetConvention {
    #[default]
    Inverse,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    /// Samples on a product (x, ξ) grid.
    XiGrid,
    /// Samples indexed by (x, θ) and carried to symbol coordinates through the phase.
    ThetaPullback,
}

/// One symbol value at symbol coordinates (`x`, `xi`); for F*F these are (y, θ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSample {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    /// The (x, θ) point the sample came from, for pulled-back samples.
    pub source: Option<Vec<f64>>,
    pub value: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSamples {
    pub representation: Representation,
    pub side: Side,
    pub h: Option<f64>,
    pub samples: Vec<SymbolSample>,
    /// Largest fraction of row mass outside the window (extracted symbols only).
    pub window_loss: f64,
    pub window_warning: bool,
}

/// w(z) = 1 − smoothstep(|z|/W): equal to 1 to infinite order at z = 0, vanishing for |z| ≥ W.
pub fn window(z_norm: f64, width: f64) -> f64 {
    1.0 - smoothstep(z_norm / width)
}

/// Windowed row of a composition matrix, ready for evaluation at any ξ.
#[derive(Debug, Clone)]
pub struct WindowedRow {
    pub x: Vec<f64>,
    offsets: Vec<[f64; 2]>,
    coefficients: Vec<Complex64>,
    pub loss: f64,
}

impl WindowedRow {
    pub fn new(m: &KernelMatrix, i: usize, width: f64) -> Result<Self> {
        if m.target != m.source {
            return Err(Error::InvalidArgument("symbol extraction needs equal target and source grids".into()));
        }
        if !(width > 0.0) {
            return Err(Error::InvalidArgument(format!("window width must be positive, got {width}")));
        }
        let n = m.target.dim;
        let xi = m.target.node(i);
        let (mut offsets, mut coefficients) = (Vec::new(), Vec::new());
        let (mut total, mut kept) = (0.0, 0.0);
        for j in 0..m.ncols() {
            let y = m.source.node(j);
            let z = [xi[0] - y[0], if n == 2 { xi[1] - y[1] } else { 0.0 }];
            let v = m.entries[(i, j)];
            let w = window((z[0] * z[0] + z[1] * z[1]).sqrt(), width);
            total += v.norm_sqr();
            kept += v.norm_sqr() * w * w;
            if w > 0.0 {
                offsets.push(z);
                coefficients.push(v * w);
            }
        }
        let loss = if total > 0.0 { 1.0 - kept / total } else { 0.0 };
        Ok(Self { x: xi[..n].to_vec(), offsets, coefficients, loss })
    }

    /// σ(x_i, ξ) = Σ_j M_ij w(z_j) e^{−i z_j·ξ/h}.
    pub fn eval(&self, xi: &[f64], h: f64) -> Complex64 {
        let xi2 = [xi[0], if xi.len() == 2 { xi[1] } else { 0.0 }];
        self.offsets
            .iter()
            .zip(&self.coefficients)
            .map(|(z, c)| c * Complex64::from_polar(1.0, -(z[0] * xi2[0] + z[1] * xi2[1]) / h))
            .sum()
    }
}

/// Extraction knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    pub window: f64,
    /// ξ nodes per axis spanning the Nyquist range [−πh/Δ, πh/Δ].
    pub xi_points: usize,
    /// Rows to extract; all rows when absent.
    pub rows: Option<Vec<usize>>,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self { window: DEFAULT_WINDOW, xi_points: 65, rows: None }
    }
}

/// Symbol of a composition matrix on the (x, ξ) grid.
pub fn extract_symbol(m: &KernelMatrix, side: Side, opts: &ExtractOptions) -> Result<SymbolSamples> {
    if m.target != m.source {
        return Err(Error::InvalidArgument("symbol extraction needs equal target and source grids".into()));
    }
    let n = m.target.dim;
    let h = m.h;
    let nyquist = core::f64::consts::PI * h / m.target.spacing();
    let xi_grid = make_grid(n, nyquist, opts.xi_points)?;
    let xis = xi_grid.nodes();
    let rows: Vec<usize> = opts.rows.clone().unwrap_or_else(|| (0..m.nrows()).collect());
    if let Some(&bad) = rows.iter().find(|&&i| i >= m.nrows()) {
        return Err(Error::InvalidArgument(format!("row {bad} out of range")));
    }
    let per_row: Vec<Result<(f64, Vec<SymbolSample>)>> = par_map(rows.len(), |r| {
        let row = WindowedRow::new(m, rows[r], opts.window)?;
        let samples = xis
            .iter()
            .map(|xi| SymbolSample { x: row.x.clone(), xi: xi[..n].to_vec(), source: None, value: row.eval(&xi[..n], h) })
            .collect();
        Ok((row.loss, samples))
    });
    let mut samples = Vec::with_capacity(rows.len() * xis.len());
    let mut loss = 0.0f64;
    for r in per_row {
        let (l, s) = r?;
        loss = loss.max(l);
        samples.extend(s);
    }
    Ok(SymbolSamples {
        representation: Representation::XiGrid,
        side,
        h: Some(h),
        samples,
        window_loss: loss,
        window_warning: loss > WINDOW_LOSS_LIMIT,
    })
}

fn det_factor(s: &PhaseSpec, x: &[f64], theta: &[f64], det: DetConvention) -> Result<f64> {
    let d = s.det_mixed(x, theta)?.abs();
    if d == 0.0 {
        return Err(Error::JacobianSingular { point: x.iter().chain(theta).copied().collect() });
    }
    Ok(match det {
        DetConvention::Inverse => 1.0 / d,
        DetConvention::Direct => d,
    })
}

/// |a(x,θ)|²·|det ∂²S/∂θ∂x(x,θ)|⁻¹ at one (x, θ).
pub fn leading_symbol(s: &PhaseSpec, a: &AmplitudeSpec, x: &[f64], theta: &[f64], det: DetConvention) -> Result<f64> {
    Ok(a.eval(x, theta).norm_sqr() * det_factor(s, x, theta, det)?)
}

fn check_dims(s: &PhaseSpec, a: &AmplitudeSpec) -> Result<()> {
    if s.dim != a.dim {
        return Err(Error::InvalidArgument(format!("phase dimension {} differs from amplitude dimension {}", s.dim, a.dim)));
    }
    Ok(())
}

/// Predicted symbol at symbol coordinates (u, v) = (x, ξ) for FF* or (y, θ) for F*F,
/// inverting ξ = ∂_xS(x,θ) or y = ∂_θS(x,θ) by Newton from `init`.
pub fn predicted_symbol_at(
    s: &PhaseSpec,
    a: &AmplitudeSpec,
    side: Side,
    u: &[f64],
    v: &[f64],
    init: &[f64],
    det: DetConvention,
) -> Result<f64> {
    check_dims(s, a)?;
    let n = s.dim;
    match side {
        Side::FfStar => {
            let theta = invert_dx_s(s, u, v, init)?;
            leading_symbol(s, a, u, &theta[..n], det)
        }
        Side::FStarF => {
            let x = invert_dtheta_s(s, v, u, init)?;
            leading_symbol(s, a, &x[..n], v, det)
        }
    }
}

/// Predicted symbol on the product grid `grid` × `grid` of symbol coordinates, via Newton inversion.
pub fn predicted_symbol(
    s: &PhaseSpec,
    a: &AmplitudeSpec,
    side: Side,
    grid: &Grid,
    det: DetConvention,
) -> Result<SymbolSamples> {
    check_dims(s, a)?;
    let n = s.dim;
    let nodes = grid.nodes();
    let mut samples = Vec::with_capacity(nodes.len() * nodes.len());
    for u in &nodes {
        for v in &nodes {
            // ∂_xS = ξ and ∂_θS = y are solved from the unknown's value at the identity phase.
            let init = match side {
                Side::FfStar => &v[..n],
                Side::FStarF => &u[..n],
            };
            let value = predicted_symbol_at(s, a, side, &u[..n], &v[..n], init, det)?;
            samples.push(SymbolSample {
                x: u[..n].to_vec(),
                xi: v[..n].to_vec(),
                source: None,
                value: Complex64::new(value, 0.0),
            });
        }
    }
    Ok(SymbolSamples {
        representation: Representation::XiGrid,
        side,
        h: None,
        samples,
        window_loss: 0.0,
        window_warning: false,
    })
}

/// Predicted symbol from (x, θ) points carried forward through the phase, no inversion needed.
pub fn predicted_symbol_pullback(
    s: &PhaseSpec,
    a: &AmplitudeSpec,
    side: Side,
    points: &[(Vec<f64>, Vec<f64>)],
    det: DetConvention,
) -> Result<SymbolSamples> {
    check_dims(s, a)?;
    let n = s.dim;
    let mut samples = Vec::with_capacity(points.len());
    for (x, theta) in points {
        let value = leading_symbol(s, a, x, theta, det)?;
        let (u, v) = match side {
            Side::FfStar => (x.clone(), s.grad_x(x, theta)?[..n].to_vec()),
            Side::FStarF => (s.grad_theta(x, theta)?[..n].to_vec(), theta.clone()),
        };
        samples.push(SymbolSample {
            x: u,
            xi: v,
            source: Some(x.iter().chain(theta).copied().collect()),
            value: Complex64::new(value, 0.0),
        });
    }
    Ok(SymbolSamples {
        representation: Representation::ThetaPullback,
        side,
        h: None,
        samples,
        window_loss: 0.0,
        window_warning: false,
    })
}

/// Settings of the symbol comparison pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    pub points_per_axis: usize,
    pub half_width: f64,
    pub window: f64,
    pub trusted_fraction: f64,
    /// Use every `row_stride`-th trusted grid row.
    pub row_stride: usize,
    pub det: DetConvention,
    pub k: usize,
    pub gamma: f64,
    pub max_entries: usize,
}

impl CompareOptions {
    pub fn for_dim(dim: usize) -> Self {
        let (points_per_axis, row_stride) = if dim == 2 { (32, 1) } else { (1024, 4) };
        Self {
            points_per_axis,
            half_width: 12.0,
            window: DEFAULT_WINDOW,
            trusted_fraction: TRUSTED_FRACTION,
            row_stride,
            det: DetConvention::Inverse,
            k: default_k(dim),
            gamma: default_gamma(dim),
            max_entries: AssemblyOptions::default().max_entries,
        }
    }
}

/// k(n) = 2n + 1.
pub fn default_k(dim: usize) -> usize {
    2 * dim + 1
}

/// γ(n) = 2ⁿ.
pub fn default_gamma(dim: usize) -> f64 {
    (1u32 << dim) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustedBox {
    pub fraction: f64,
    pub x_half_width: f64,
    /// θ half-width of the trusted box at each h.
    pub theta_half_width: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub phase: String,
    pub amplitude: String,
    pub side: Side,
    pub h: Vec<f64>,
    pub max_error: Vec<f64>,
    /// Witness (symbol coordinates) of each max error.
    pub witness: Vec<Vec<f64>>,
    pub samples: Vec<usize>,
    /// Slope of log e against log h; absent when every error is below the exact-case limit.
    pub slope: Option<f64>,
    pub slope_residual: Option<f64>,
    pub trusted_box: TrustedBox,
    pub window: f64,
    pub window_warning: bool,
    pub det_convention: DetConvention,
    pub k: usize,
    pub gamma: f64,
    pub pass: bool,
}

/// Least-squares slope and RMS residual of log e against log h.
pub fn fit_log_slope(h: &[f64], e: &[f64]) -> Option<(f64, f64)> {
    if h.len() < 2 || e.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx;
    let rms = (xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum::<f64>() / m).sqrt();
    Some((slope, rms))
}

/// Outcome of one h in the comparison pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolError {
    pub max_error: f64,
    pub witness: Vec<f64>,
    pub samples: usize,
    pub theta_half_width: f64,
    pub window_loss: f64,
}

/// Assemble, compose and extract at one h; compare against the predicted symbol on the trusted box.
pub fn symbol_error_at(
    s: &PhaseSpec,
    a: &AmplitudeSpec,
    side: Side,
    h: HValue,
    opts: &CompareOptions,
) -> Result<SymbolError> {
    check_dims(s, a)?;
    let n = s.dim;
    let g = make_grid(n, opts.half_width, opts.points_per_axis)?;
    let spec = FioSpec::matched(s.clone(), a.clone(), h, &g)?;
    let asm = AssemblyOptions { max_entries: opts.max_entries };
    let m = match side {
        Side::FfStar => compose_ff_star(&spec, &g, &g, &asm)?,
        Side::FStarF => compose_fstar_f(&spec, &g, &g, &asm)?,
    };
    let theta_limit = opts.trusted_fraction * spec.theta.half_width;
    let thetas: Vec<Vec<f64>> =
        spec.theta.indices_within(theta_limit).into_iter().map(|t| spec.theta.node(t)[..n].to_vec()).collect();
    let rows: Vec<usize> = g.indices_within(opts.trusted_fraction * opts.half_width).into_iter().step_by(opts.row_stride.max(1)).collect();
    let hv = h.get();
    let per_row: Vec<Result<(f64, Vec<f64>, usize, f64)>> = par_map(rows.len(), |r| {
        let row = WindowedRow::new(&m, rows[r], opts.window)?;
        let mut worst = (0.0f64, Vec::new(), 0usize);
        for theta in &thetas {
            // Row coordinate is x for FF* and y for F*F.
            let (xi, predicted) = match side {
                Side::FfStar => {
                    let xi = s.grad_x(&row.x, theta)?;
                    (xi[..n].to_vec(), leading_symbol(s, a, &row.x, theta, opts.det)?)
                }
                Side::FStarF => {
                    let x = invert_dtheta_s(s, theta, &row.x, &row.x)?;
                    (theta.clone(), leading_symbol(s, a, &x[..n], theta, opts.det)?)
                }
            };
            let err = (row.eval(&xi, hv) - predicted).norm();
            if !err.is_finite() {
                return Err(Error::EvaluationFailure { point: row.x.iter().chain(&xi).copied().collect() });
            }
            worst.2 += 1;
            if err > worst.0 || worst.1.is_empty() {
                worst.0 = err.max(worst.0);
                worst.1 = row.x.iter().chain(&xi).copied().collect();
            }
        }
        Ok((worst.0, worst.1, worst.2, row.loss))
    });
    let mut out = SymbolError {
        max_error: 0.0,
        witness: Vec::new(),
        samples: 0,
        theta_half_width: theta_limit,
        window_loss: 0.0,
    };
    for r in per_row {
        let (e, w, c, l) = r?;
        out.samples += c;
        out.window_loss = out.window_loss.max(l);
        if e > out.max_error || out.witness.is_empty() {
            out.max_error = e.max(out.max_error);
            out.witness = w;
        }
    }
    if out.samples == 0 {
        return Err(Error::InvalidArgument("trusted box contains no samples".into()));
    }
    Ok(out)
}

/// Symbol comparison across a decreasing list of h.
pub fn compare_symbols(
    s: &PhaseSpec,
    a: &AmplitudeSpec,
    side: Side,
    h_list: &[f64],
    opts: &CompareOptions,
) -> Result<ComparisonReport> {
    if h_list.is_empty() {
        return Err(Error::InvalidArgument("empty h list".into()));
    }
    if h_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("h list must be strictly decreasing".into()));
    }
    let mut errors = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let hv = HValue::new(h).map_err(|e| e.at_h(h))?;
        errors.push(symbol_error_at(s, a, side, hv, opts).map_err(|e| e.at_h(h))?);
    }
    let max_error: Vec<f64> = errors.iter().map(|e| e.max_error).collect();
    let exact = max_error.iter().all(|&e| e <= EXACT_ERROR_LIMIT);
    let fit = if exact { None } else { fit_log_slope(h_list, &max_error) };
    let pass = exact || fit.is_some_and(|(slope, _)| slope >= SLOPE_THRESHOLD);
    Ok(ComparisonReport {
        phase: s.name.clone(),
        amplitude: a.name.clone(),
        side,
        h: h_list.to_vec(),
        witness: errors.iter().map(|e| e.witness.clone()).collect(),
        samples: errors.iter().map(|e| e.samples).collect(),
        max_error,
        slope: fit.map(|f| f.0),
        slope_residual: fit.map(|f| f.1),
        trusted_box: TrustedBox {
            fraction: opts.trusted_fraction,
            x_half_width: opts.trusted_fraction * opts.half_width,
            theta_half_width: errors.iter().map(|e| e.theta_half_width).collect(),
        },
        window: opts.window,
        window_warning: errors.iter().any(|e| e.window_loss > WINDOW_LOSS_LIMIT),
        det_convention: opts.det,
        k: opts.k,
        gamma: opts.gamma,
        pass,
    })
}

/// One term sup |∂_x^α ∂_θ^β σ| of Q_k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvTerm {
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
    pub sup: f64,
    pub witness: Vec<f64>,
}

/// Q_k(σ) = Σ_{|α|+|β|≤k} sup |∂_x^α ∂_θ^β σ| over a sampled box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSeminorm {
    pub k: usize,
    pub half_width: f64,
    pub q: f64,
    pub terms: Vec<CvTerm>,
}

/// Q_k of a callable symbol σ(u, v), derivatives by finite differences, over
/// `box_grid` × `box_grid` plus Halton interior points.
pub fn cv_seminorm<F>(sigma: &F, dim: usize, k: usize, box_grid: &Grid) -> Result<CvSeminorm>
where
    F: Fn(&[f64], &[f64]) -> Complex64 + Sync + ?Sized,
{
    if k > MAX_DERIVATIVE_ORDER {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds {MAX_DERIVATIVE_ORDER}")));
    }
    if box_grid.dim != dim {
        return Err(Error::InvalidArgument("box dimension differs from symbol dimension".into()));
    }
    let points = box_samples(box_grid, DEFAULT_INTERIOR_SAMPLES);
    let f = |v: &[f64]| sigma(&v[..dim], &v[dim..]);
    let indices = multi_indices(dim, k);
    let results: Vec<Result<CvTerm>> = par_map(indices.len(), |m| {
        let (alpha, beta) = &indices[m];
        let orders: Vec<usize> = alpha.iter().chain(beta).copied().collect();
        let mut term = CvTerm { alpha: alpha.clone(), beta: beta.clone(), sup: 0.0, witness: points[0].clone() };
        for p in &points {
            let d = fd_partial(&f, p, &orders)?.norm();
            if d > term.sup {
                term.sup = d;
                term.witness = p.clone();
            }
        }
        Ok(term)
    });
    let terms = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(CvSeminorm { k, half_width: box_grid.half_width, q: terms.iter().map(|t| t.sup).sum(), terms })
}

/// Q_k on a box and on the box of twice the half-width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvTrend {
    pub q_box: f64,
    pub q_doubled: f64,
    pub ratio: f64,
    pub unbounded_trend: bool,
}

/// Doubling test: growth of Q_k beyond the trend limit flags an unbounded symbol.
pub fn cv_trend<F>(sigma: &F, dim: usize, k: usize, box_grid: &Grid) -> Result<CvTrend>
where
    F: Fn(&[f64], &[f64]) -> Complex64 + Sync + ?Sized,
{
    let q_box = cv_seminorm(sigma, dim, k, box_grid)?.q;
    let doubled = make_grid(dim, 2.0 * box_grid.half_width, box_grid.points_per_axis)?;
    let q_doubled = cv_seminorm(sigma, dim, k, &doubled)?.q;
    let ratio = if q_box > 0.0 { q_doubled / q_box } else if q_doubled > 0.0 { f64::INFINITY } else { 1.0 };
    Ok(CvTrend { q_box, q_doubled, ratio, unbounded_trend: ratio > GROWTH_TREND_LIMIT })
}

/// Predicted symbol of one side as a callable of its own coordinates.
pub fn predicted_callable<'a>(
    s: &'a PhaseSpec,
    a: &'a AmplitudeSpec,
    side: Side,
    det: DetConvention,
) -> impl Fn(&[f64], &[f64]) -> Complex64 + Sync + 'a {
    move |u: &[f64], v: &[f64]| {
        let init = match side {
            Side::FfStar => v,
            Side::FStarF => u,
        };
        match predicted_symbol_at(s, a, side, u, v, init, det) {
            Ok(p) => Complex64::new(p, 0.0),
            Err(_) => Complex64::new(f64::NAN, 0.0),
        }
    }
}

/// Settings of the Calderón–Vaillancourt bound check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvBoundOptions {
    pub k: usize,
    pub gamma: f64,
    pub points_per_axis: usize,
    pub half_width: f64,
    /// Box on which Q_k of the predicted F*F symbol is sampled.
    pub q_box: Grid,
    pub max_entries: usize,
}

impl CvBoundOptions {
    pub fn for_dim(dim: usize) -> Result<Self> {
        Ok(Self {
            k: default_k(dim),
            gamma: default_gamma(dim),
            points_per_axis: if dim == 2 { 32 } else { 512 },
            half_width: 12.0,
            q_box: make_grid(dim, 10.0, 21)?,
            max_entries: AssemblyOptions::default().max_entries,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvBoundReport {
    pub phase: String,
    pub amplitude: String,
    pub k: usize,
    pub gamma: f64,
    pub q: f64,
    pub bound: f64,
    pub h: Vec<f64>,
    pub norms: Vec<f64>,
    pub pass: bool,
}

/// ‖F_h‖ ≤ (γ·Q_k(σ(F_h*F_h)))^{1/2} for every h in the list.
pub fn cv_bound_check(s: &PhaseSpec, a: &AmplitudeSpec, h_list: &[f64], opts: &CvBoundOptions) -> Result<CvBoundReport> {
    check_dims(s, a)?;
    if a.claimed_order > 0.0 {
        return Err(Error::InvalidArgument(format!("amplitude order {} > 0", a.claimed_order)));
    }
    let sigma = predicted_callable(s, a, Side::FStarF, DetConvention::Inverse);
    let q = cv_seminorm(&sigma, s.dim, opts.k, &opts.q_box)?.q;
    let bound = (opts.gamma * q).sqrt();
    let g = make_grid(s.dim, opts.half_width, opts.points_per_axis)?;
    let mut norms = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let run = || -> Result<f64> {
            let spec = FioSpec::matched(s.clone(), a.clone(), HValue::new(h)?, &g)?;
            let m = crate::operator::assemble(&spec, &g, &g, &AssemblyOptions { max_entries: opts.max_entries })?;
            crate::spectral::operator_norm(&m)
        };
        norms.push(run().map_err(|e| e.at_h(h))?);
    }
    let pass = norms.iter().all(|&v| v <= bound);
    Ok(CvBoundReport {
        phase: s.name.clone(),
        amplitude: a.name.clone(),
        k: opts.k,
        gamma: opts.gamma,
        q,
        bound,
        h: h_list.to_vec(),
        norms,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::weight_power_derivative;

    fn lam_inv() -> AmplitudeSpec {
        AmplitudeSpec::lambda_power(1, -1.0).unwrap()
    }

    #[test]
    fn window_is_one_at_origin_and_vanishes_outside() {
        assert_eq!(window(0.0, 4.0), 1.0);
        assert_eq!(window(4.0, 4.0), 0.0);
        assert!((window(2.0, 4.0) - 0.5).abs() < 1e-15);
        assert!(window(1e-3, 4.0) == 1.0);
    }

    #[test]
    fn predicted_symbol_examples() {
        let one = AmplitudeSpec::one(1).unwrap();
        let g = make_grid(1, 5.0, 11).unwrap();
        let r = predicted_symbol(&PhaseSpec::identity(1).unwrap(), &one, Side::FfStar, &g, DetConvention::Inverse).unwrap();
        assert!(r.samples.iter().all(|s| (s.value.re - 1.0).abs() < 1e-14));
        let r = predicted_symbol(&PhaseSpec::scaled_identity(1, 2.0).unwrap(), &one, Side::FfStar, &g, DetConvention::Inverse)
            .unwrap();
        assert!(r.samples.iter().all(|s| (s.value.re - 0.5).abs() < 1e-14));
        let r = predicted_symbol(&PhaseSpec::identity(1).unwrap(), &lam_inv(), Side::FfStar, &g, DetConvention::Inverse).unwrap();
        for s in &r.samples {
            let exact = 1.0 / (1.0 + s.x[0] * s.x[0] + s.xi[0] * s.xi[0]);
            assert!((s.value.re - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn newton_and_pullback_agree_for_the_chirp() {
        let s = PhaseSpec::chirp(1).unwrap();
        let a = lam_inv();
        let pts: Vec<(Vec<f64>, Vec<f64>)> = vec![(vec![1.0], vec![0.5]), (vec![-2.0], vec![3.0])];
        let pb = predicted_symbol_pullback(&s, &a, Side::FfStar, &pts, DetConvention::Inverse).unwrap();
        for smp in &pb.samples {
            let v = predicted_symbol_at(&s, &a, Side::FfStar, &smp.x, &smp.xi, &[0.0], DetConvention::Inverse).unwrap();
            assert!((v - smp.value.re).abs() < 1e-12);
        }
    }

    #[test]
    fn both_sides_coincide_for_the_identity_phase() {
        let s = PhaseSpec::identity(1).unwrap();
        let a = lam_inv();
        for (u, v) in [(0.3, -1.2), (2.0, 4.0), (-5.0, 0.0)] {
            let ff = predicted_symbol_at(&s, &a, Side::FfStar, &[u], &[v], &[0.0], DetConvention::Inverse).unwrap();
            let ff2 = predicted_symbol_at(&s, &a, Side::FStarF, &[u], &[v], &[0.0], DetConvention::Inverse).unwrap();
            assert!((ff - ff2).abs() < 1e-14);
        }
    }

    #[test]
    fn fit_slope_recovers_power_law() {
        let h = [0.4, 0.2, 0.1];
        let e: Vec<f64> = h.iter().map(|v: &f64| 3.0 * v.powf(1.3)).collect();
        let (s, r) = fit_log_slope(&h, &e).unwrap();
        assert!((s - 1.3).abs() < 1e-12 && r < 1e-12);
    }

    #[test]
    fn identity_extracts_to_one() {
        let opts = CompareOptions { row_stride: 16, ..CompareOptions::for_dim(1) };
        let r = compare_symbols(
            &PhaseSpec::identity(1).unwrap(),
            &AmplitudeSpec::one(1).unwrap(),
            Side::FfStar,
            &[0.4, 0.2, 0.1],
            &opts,
        )
        .unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.max_error.iter().all(|&e| e <= 1e-3));
        assert!(r.slope.is_none());
    }

    #[test]
    fn rejects_increasing_h() {
        let r = compare_symbols(
            &PhaseSpec::identity(1).unwrap(),
            &AmplitudeSpec::one(1).unwrap(),
            Side::FfStar,
            &[0.1, 0.2],
            &CompareOptions::for_dim(1),
        );
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn extracted_symbol_scales_quadratically() {
        let g = make_grid(1, 12.0, 256).unwrap();
        let h = HValue::new(0.5).unwrap();
        let c = Complex64::new(1.5, -0.5);
        let a = lam_inv();
        let asm = AssemblyOptions::default();
        let m1 = compose_ff_star(&FioSpec::matched(PhaseSpec::identity(1).unwrap(), a.clone(), h, &g).unwrap(), &g, &g, &asm)
            .unwrap();
        let m2 = compose_ff_star(&FioSpec::matched(PhaseSpec::identity(1).unwrap(), a.scaled(c), h, &g).unwrap(), &g, &g, &asm)
            .unwrap();
        let opts = ExtractOptions { rows: Some(vec![100, 128, 150]), xi_points: 9, ..ExtractOptions::default() };
        let s1 = extract_symbol(&m1, Side::FfStar, &opts).unwrap();
        let s2 = extract_symbol(&m2, Side::FfStar, &opts).unwrap();
        let scale = s1.samples.iter().map(|p| p.value.norm()).fold(0.0, f64::max) * c.norm_sqr();
        for (p, q) in s1.samples.iter().zip(&s2.samples) {
            let e = (q.value - p.value * c.norm_sqr()).norm();
            assert!(e <= 1e-10 * scale, "{e} {scale} {:?}", p);
        }
    }

    #[test]
    fn cv_seminorm_examples() {
        let g = make_grid(1, 10.0, 21).unwrap();
        let one = |_: &[f64], _: &[f64]| Complex64::new(1.0, 0.0);
        assert!((cv_seminorm(&one, 1, 3, &g).unwrap().q - 1.0).abs() < 1e-12);

        let lam2 = |x: &[f64], t: &[f64]| Complex64::new(1.0 / (1.0 + x[0] * x[0] + t[0] * t[0]), 0.0);
        let q2 = cv_seminorm(&lam2, 1, 2, &g).unwrap();
        assert!((1.0..=10.0).contains(&q2.q));
        assert_eq!(q2.terms[0].sup, 1.0);
        // analytic derivatives on the same samples, and on a fine grid as an upper reference
        let sup_on = |pts: &[Vec<f64>]| -> f64 {
            multi_indices(1, 2)
                .iter()
                .map(|(al, be)| {
                    pts.iter().map(|p| weight_power_derivative(-2.0, p, &[al[0], be[0]]).abs()).fold(0.0, f64::max)
                })
                .sum()
        };
        let same = sup_on(&box_samples(&g, DEFAULT_INTERIOR_SAMPLES));
        assert!((q2.q - same).abs() <= 1e-5 * same, "{} vs {same}", q2.q);
        let fine = sup_on(&box_samples(&make_grid(1, 10.0, 401).unwrap(), 0));
        assert!(q2.q <= fine * (1.0 + 1e-9) && q2.q >= 0.9 * fine);

        let x = |x: &[f64], _: &[f64]| Complex64::new(x[0], 0.0);
        let qx = cv_seminorm(&x, 1, 0, &g).unwrap();
        assert!((qx.q - 10.0).abs() < 1e-12);
        let t = cv_trend(&x, 1, 0, &g).unwrap();
        assert!(t.unbounded_trend && (t.ratio - 2.0).abs() < 1e-12);
        assert!(!cv_trend(&lam2, 1, 2, &g).unwrap().unbounded_trend);
    }

    #[test]
    fn cv_seminorm_monotone_in_k() {
        let g = make_grid(1, 6.0, 13).unwrap();
        let lam2 = |x: &[f64], t: &[f64]| Complex64::new(1.0 / (1.0 + x[0] * x[0] + t[0] * t[0]), 0.0);
        let qs: Vec<f64> = (0..4).map(|k| cv_seminorm(&lam2, 1, k, &g).unwrap().q).collect();
        assert!(qs.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn cv_bound_rejects_positive_order() {
        let opts = CvBoundOptions::for_dim(1).unwrap();
        let r = cv_bound_check(&PhaseSpec::identity(1).unwrap(), &AmplitudeSpec::coordinate_x(1).unwrap(), &[0.5], &opts);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }
}
