//! Discretized F_h: kernel values
//!
//! K(x,y;h) = ∫ e^{i(S(x,θ) − y·θ)/h} a(x,θ) d̂_hθ,
//!
//! dense assembly between two grids, application, adjoint, and the
//! composition kernels of F_hF_h* and F_h*F_h.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dense::{matmul, CMatrix};
use crate::error::{Error, Result};
use crate::numeric::{par_map, Grid, HValue, ScalarField};
use crate::oscillatory::{
    is_converged, osc_integral_with_gradient, CutoffShape, CutoffSpec, IbpSpec, OscillatoryResult,
};
use crate::phase::PhaseSpec;
use crate::prelude::*;
use crate::symbols::AmplitudeSpec;

/// Default cap on the number of matrix entries: 4096² (n=1) = (64²)² (n=2).
pub const DEFAULT_MAX_ENTRIES: usize = 4096 * 4096;

/// Everything needed to evaluate F_h at one value of h.
#[derive(Debug, Clone)]
pub struct FioSpec {
    pub phase: PhaseSpec,
    pub amplitude: AmplitudeSpec,
    pub h: HValue,
    pub theta: Grid,
    pub cutoff: CutoffSpec,
    pub ibp: IbpSpec,
}

impl FioSpec {
    /// Cosine-bump cutoff starting at σ₀ = θ-box half-width, so the regularized sum
    /// reaches the plain θ-quadrature at a finite level; integration by parts off.
    pub fn new(phase: PhaseSpec, amplitude: AmplitudeSpec, h: HValue, theta: Grid) -> Result<Self> {
        if phase.dim != amplitude.dim || phase.dim != theta.dim {
            return Err(Error::InvalidArgument(format!(
                "dimension mismatch: phase {}, amplitude {}, θ grid {}",
                phase.dim, amplitude.dim, theta.dim
            )));
        }
        let cutoff = CutoffSpec { sigma0: theta.half_width, ..CutoffSpec::with_shape(CutoffShape::CosineBump) };
        Ok(Self { phase, amplitude, h, theta, cutoff, ibp: IbpSpec::default() })
    }

    /// As [`FioSpec::new`] with the θ grid matched to `source` (see [`matched_theta_grid`]).
    pub fn matched(phase: PhaseSpec, amplitude: AmplitudeSpec, h: HValue, source: &Grid) -> Result<Self> {
        let theta = matched_theta_grid(h, source)?;
        Self::new(phase, amplitude, h, theta)
    }

    pub fn dim(&self) -> usize {
        self.phase.dim
    }

    /// (2πh)^{-n}.
    pub fn prefactor(&self) -> f64 {
        (2.0 * core::f64::consts::PI * self.h.get()).powi(-(self.dim() as i32))
    }
}

/// θ grid with spacing 2πh/(N·Δ) and half-width ≤ 0.5·h/Δ for a source grid
/// of N points per axis and spacing Δ.
///
/// The spacing makes the y-sum Σ_j e^{−i y_j(θ−θ′)/h} Δ vanish exactly for
/// θ ≠ θ′ on the grid, so the discrete composition M·M† is itself a θ-quadrature
/// of the composition kernel. The half-width keeps e^{iyθ/h} resolved.
pub fn matched_theta_grid(h: HValue, source: &Grid) -> Result<Grid> {
    let d = source.spacing();
    let dtheta = 2.0 * core::f64::consts::PI * h.get() / (source.points_per_axis as f64 * d);
    let half = ((0.5 * h.get() / d) / dtheta).floor() as usize;
    if half == 0 {
        return Err(Error::InvalidArgument("source grid too short for a matched θ grid".into()));
    }
    Grid::centered(source.dim, dtheta, half)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub value: Complex64,
    pub result: OscillatoryResult,
}

impl KernelValue {
    pub fn converged(&self) -> bool {
        self.result.converged
    }
}

/// K(x,y;h) as (2πh)^{-n} times the regularized θ-integral; unconverged values are flagged, not dropped.
pub fn kernel_value(spec: &FioSpec, x: &[f64], y: &[f64]) -> Result<KernelValue> {
    let n = spec.dim();
    let phase = |t: &[f64]| spec.phase.value(x, t) - (0..n).map(|i| y[i] * t[i]).sum::<f64>();
    let gradient = |t: &[f64]| match spec.phase.grad_theta(x, t) {
        Ok(mut g) => {
            for i in 0..n {
                g[i] -= y[i];
            }
            g
        }
        Err(_) => [f64::NAN; 2],
    };
    let amplitude = |t: &[f64]| spec.amplitude.eval(x, t);
    let result = osc_integral_with_gradient(&phase, &gradient, &amplitude, spec.h, &spec.theta, &spec.cutoff, &spec.ibp)?;
    Ok(KernelValue { value: result.value * spec.prefactor(), result })
}

/// What a kernel matrix represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    #[serde(rename = "F")]
    Forward,
    #[serde(rename = "F*")]
    Adjoint,
    #[serde(rename = "FF*")]
    ForwardAdjoint,
    #[serde(rename = "F*F")]
    AdjointForward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMeta {
    pub kind: KernelKind,
    pub phase: String,
    pub amplitude: String,
    pub theta_half_width: f64,
    pub theta_points: usize,
    /// Largest cutoff level used.
    pub k_used: usize,
    pub unconverged_entries: usize,
    pub unconverged_rows: Vec<usize>,
    pub resolution_warning: bool,
}

/// Dense discretization with quadrature-weighted columns: entries[i,j] = K(x_i, y_j)·w_j.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub target: Grid,
    pub source: Grid,
    pub h: f64,
    pub entries: CMatrix,
    pub meta: KernelMeta,
}

impl KernelMatrix {
    /// Unweighted kernel sample K(x_i, y_j).
    pub fn kernel(&self, i: usize, j: usize) -> Complex64 {
        self.entries[(i, j)] / self.source.weight()
    }

    /// D_x^{1/2} K D_y^{1/2}, whose singular values approximate the L² ones.
    pub fn l2_faithful(&self) -> CMatrix {
        let s = (self.target.weight() / self.source.weight()).sqrt();
        self.entries.map(|z| z * s)
    }

    /// Matrix of F* between the swapped grids: conj(K(x_i,y_j))·w_i at (j,i).
    pub fn adjoint(&self) -> KernelMatrix {
        let s = self.target.weight() / self.source.weight();
        let kind = match self.meta.kind {
            KernelKind::Forward => KernelKind::Adjoint,
            KernelKind::Adjoint => KernelKind::Forward,
            k => k,
        };
        KernelMatrix {
            target: self.source,
            source: self.target,
            h: self.h,
            entries: self.entries.adjoint().map(|z| z * s),
            meta: KernelMeta { kind, ..self.meta.clone() },
        }
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }
}

/// Assembly knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssemblyOptions {
    pub max_entries: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { max_entries: DEFAULT_MAX_ENTRIES }
    }
}

fn check_size(rows: usize, cols: usize, opts: &AssemblyOptions) -> Result<()> {
    let entries = rows.saturating_mul(cols);
    if entries > opts.max_entries {
        return Err(Error::TooLarge { entries, cap: opts.max_entries });
    }
    Ok(())
}

fn check_grids(spec: &FioSpec, target: &Grid, source: &Grid) -> Result<()> {
    if target.dim != spec.dim() || source.dim != spec.dim() {
        return Err(Error::InvalidArgument("grid dimension differs from the operator dimension".into()));
    }
    Ok(())
}

/// Dense matrix of F_h from `source` (y) to `target` (x).
///
/// Without integration by parts the θ-sum factorizes as A·diag(g_σ)·B with
/// A[i,t] = e^{iS(x_i,θ_t)/h} a(x_i,θ_t) w_θ (2πh)^{-n} and B[t,j] = e^{−i y_j·θ_t/h};
/// every entry follows the same σ-sequence and convergence rule as
/// [`kernel_value`]. With integration by parts each entry is evaluated separately.
pub fn assemble(spec: &FioSpec, target: &Grid, source: &Grid, opts: &AssemblyOptions) -> Result<KernelMatrix> {
    check_grids(spec, target, source)?;
    check_size(target.len(), source.len(), opts)?;
    if spec.ibp.enabled {
        return assemble_entrywise(spec, target, source);
    }
    let n = spec.dim();
    let hv = spec.h.get();
    let thetas = spec.theta.nodes();
    let xs = target.nodes();
    let ys = source.nodes();
    let (nx, ny, nt) = (xs.len(), ys.len(), thetas.len());
    let scale = spec.theta.weight() * spec.prefactor();

    let rows: Vec<Result<Vec<Complex64>>> = par_map(nx, |i| {
        let x = &xs[i][..n];
        let mut row = Vec::with_capacity(nt);
        for t in &thetas {
            let th = &t[..n];
            let s = spec.phase.value(x, th);
            let a = spec.amplitude.eval(x, th);
            if !s.is_finite() || !(a.re.is_finite() && a.im.is_finite()) {
                return Err(Error::EvaluationFailure { point: x.iter().chain(th).copied().collect() });
            }
            row.push(Complex64::from_polar(1.0, s / hv) * a * scale);
        }
        Ok(row)
    });
    let mut a_mat = CMatrix::zeros(nx, nt);
    for (i, row) in rows.into_iter().enumerate() {
        for (t, v) in row?.into_iter().enumerate() {
            a_mat[(i, t)] = v;
        }
    }
    let b_mat = CMatrix::from_fn(nt, ny, |t, j| {
        let phase: f64 = (0..n).map(|l| ys[j][l] * thetas[t][l]).sum();
        Complex64::from_polar(1.0, -phase / hv)
    });

    let slope_bound = max_theta_slope(spec, &xs, &thetas)? + ys.iter().map(|y| norm(&y[..n])).fold(0.0, f64::max);
    let resolution_warning = spec.theta.spacing() > 0.25 * hv / slope_bound.max(1e-300);

    // |B| = 1, so Σ_t |A_it|·|g_k(θ_t) − g_{k−1}(θ_t)| bounds the change of every
    // entry in row i between levels; the product is formed only once that bound
    // certifies convergence for all rows.
    let cutoff = &spec.cutoff;
    let abs_a = a_mat.map(|z| z.norm());
    let gains = |k: usize| -> Vec<f64> { thetas.iter().map(|t| cutoff.eval(&t[..n], cutoff.sigma(k))).collect() };
    let scaled = |g: &[f64]| {
        let mut ag = a_mat.clone();
        for (t, &gt) in g.iter().enumerate() {
            ag.column_mut(t).scale_mut(gt);
        }
        matmul(&ag, &b_mat)
    };
    let mut prev_g = gains(0);
    let mut certified = None;
    for k in 1..=cutoff.k_max {
        let g = gains(k);
        let worst = (0..nx)
            .map(|i| (0..nt).map(|t| abs_a[(i, t)] * (g[t] - prev_g[t]).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        prev_g = g;
        if worst <= cutoff.tol {
            certified = Some(k);
            break;
        }
    }
    let (current, k_used, unconverged, unconverged_rows) = match certified {
        Some(k) => (scaled(&prev_g), k, 0, Vec::new()),
        None => {
            let current = scaled(&prev_g);
            let previous = scaled(&gains(cutoff.k_max - 1));
            let bad = |i: usize, j: usize| {
                !is_converged((current[(i, j)] - previous[(i, j)]).norm(), current[(i, j)], cutoff.tol)
            };
            let count = (0..nx).map(|i| (0..ny).filter(|&j| bad(i, j)).count()).sum::<usize>();
            let rows = (0..nx).filter(|&i| (0..ny).any(|j| bad(i, j))).collect();
            (current, cutoff.k_max, count, rows)
        }
    };
    let w = source.weight();
    Ok(KernelMatrix {
        target: *target,
        source: *source,
        h: hv,
        entries: current.map(|z| z * w),
        meta: KernelMeta {
            kind: KernelKind::Forward,
            phase: spec.phase.name.clone(),
            amplitude: spec.amplitude.name.clone(),
            theta_half_width: spec.theta.half_width,
            theta_points: spec.theta.points_per_axis,
            k_used,
            unconverged_entries: unconverged,
            unconverged_rows,
            resolution_warning,
        },
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn max_theta_slope(spec: &FioSpec, xs: &[[f64; 2]], thetas: &[[f64; 2]]) -> Result<f64> {
    let n = spec.dim();
    let mut m = 0.0f64;
    for x in xs {
        for t in thetas {
            m = m.max(norm(&spec.phase.grad_theta(&x[..n], &t[..n])?[..n]));
        }
    }
    Ok(m)
}

fn assemble_entrywise(spec: &FioSpec, target: &Grid, source: &Grid) -> Result<KernelMatrix> {
    let n = spec.dim();
    let xs = target.nodes();
    let ys = source.nodes();
    let ny = ys.len();
    let rows: Vec<Result<Vec<KernelValue>>> =
        par_map(xs.len(), |i| ys.iter().map(|y| kernel_value(spec, &xs[i][..n], &y[..n])).collect());
    let w = source.weight();
    let mut entries = CMatrix::zeros(xs.len(), ny);
    let (mut k_used, mut unconverged, mut warn) = (0, 0, false);
    let mut unconverged_rows = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        let mut row_bad = false;
        for (j, kv) in row?.into_iter().enumerate() {
            entries[(i, j)] = kv.value * w;
            k_used = k_used.max(kv.result.k_used);
            warn |= kv.result.resolution_warning;
            if !kv.result.converged {
                unconverged += 1;
                row_bad = true;
            }
        }
        if row_bad {
            unconverged_rows.push(i);
        }
    }
    Ok(KernelMatrix {
        target: *target,
        source: *source,
        h: spec.h.get(),
        entries,
        meta: KernelMeta {
            kind: KernelKind::Forward,
            phase: spec.phase.name.clone(),
            amplitude: spec.amplitude.name.clone(),
            theta_half_width: spec.theta.half_width,
            theta_points: spec.theta.points_per_axis,
            k_used,
            unconverged_entries: unconverged,
            unconverged_rows,
            resolution_warning: warn,
        },
    })
}

/// Matrix–vector product M·φ on the target grid.
pub fn apply(m: &KernelMatrix, field: &ScalarField) -> Result<ScalarField> {
    if field.grid != m.source {
        return Err(Error::InvalidArgument("field grid differs from the kernel source grid".into()));
    }
    let v = DVector::from_column_slice(&field.values);
    let out = &m.entries * v;
    ScalarField::new(m.target, out.iter().copied().collect())
}

/// Matrix of F_hF_h* on `target`, computed as M·M* through the `source` grid.
pub fn compose_ff_star(spec: &FioSpec, target: &Grid, source: &Grid, opts: &AssemblyOptions) -> Result<KernelMatrix> {
    check_size(target.len(), target.len(), opts)?;
    let m = assemble(spec, target, source, opts)?;
    Ok(compose_pair(&m, &m.adjoint(), KernelKind::ForwardAdjoint))
}

/// Matrix of F_h*F_h on `source`, computed as M*·M through the `target` grid.
pub fn compose_fstar_f(spec: &FioSpec, target: &Grid, source: &Grid, opts: &AssemblyOptions) -> Result<KernelMatrix> {
    check_size(source.len(), source.len(), opts)?;
    let m = assemble(spec, target, source, opts)?;
    Ok(compose_pair(&m.adjoint(), &m, KernelKind::AdjointForward))
}

/// Product of two weighted kernel matrices (the weights of the inner grid are already in `left`).
pub fn compose_pair(left: &KernelMatrix, right: &KernelMatrix, kind: KernelKind) -> KernelMatrix {
    KernelMatrix {
        target: left.target,
        source: right.source,
        h: left.h,
        entries: matmul(&left.entries, &right.entries),
        meta: KernelMeta { kind, ..left.meta.clone() },
    }
}

/// F_hF_h* by direct θ-quadrature of its kernel
/// ∫ e^{i(S(x,θ) − S(x̃,θ))/h} a(x,θ) conj(a(x̃,θ)) d̂_hθ, with no intermediate y grid.
pub fn direct_ff_star(spec: &FioSpec, target: &Grid, opts: &AssemblyOptions) -> Result<KernelMatrix> {
    check_grids(spec, target, target)?;
    check_size(target.len(), target.len(), opts)?;
    let n = spec.dim();
    let hv = spec.h.get();
    let thetas = spec.theta.nodes();
    let xs = target.nodes();
    let root = (spec.theta.weight() * spec.prefactor()).sqrt();
    let rows: Vec<Result<Vec<Complex64>>> = par_map(xs.len(), |i| {
        thetas
            .iter()
            .map(|t| {
                let (x, th) = (&xs[i][..n], &t[..n]);
                let s = spec.phase.value(x, th);
                let a = spec.amplitude.eval(x, th);
                if !s.is_finite() {
                    return Err(Error::EvaluationFailure { point: x.iter().chain(th).copied().collect() });
                }
                Ok(Complex64::from_polar(1.0, s / hv) * a * root)
            })
            .collect()
    });
    let mut p = CMatrix::zeros(xs.len(), thetas.len());
    for (i, row) in rows.into_iter().enumerate() {
        for (t, v) in row?.into_iter().enumerate() {
            p[(i, t)] = v;
        }
    }
    let w = target.weight();
    let entries = matmul(&p, &p.adjoint()).map(|z| z * w);
    Ok(KernelMatrix {
        target: *target,
        source: *target,
        h: hv,
        entries,
        meta: KernelMeta {
            kind: KernelKind::ForwardAdjoint,
            phase: spec.phase.name.clone(),
            amplitude: spec.amplitude.name.clone(),
            theta_half_width: spec.theta.half_width,
            theta_points: spec.theta.points_per_axis,
            k_used: 0,
            unconverged_entries: 0,
            unconverged_rows: Vec::new(),
            resolution_warning: false,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::frobenius;
    use crate::numeric::make_grid;
    use core::f64::consts::{FRAC_PI_4, PI};

    fn gaussian_field(g: Grid) -> ScalarField {
        ScalarField::from_fn(g, |x| Complex64::new((-0.5 * x[0] * x[0]).exp(), 0.0))
    }

    fn rel_err(a: &ScalarField, b: &ScalarField) -> f64 {
        let num: f64 = a.values.iter().zip(&b.values).map(|(p, q)| (p - q).norm_sqr()).sum();
        let den: f64 = b.values.iter().map(|q| q.norm_sqr()).sum();
        (num / den).sqrt()
    }

    #[test]
    fn matched_theta_grid_respects_resolution_rule() {
        let g = make_grid(1, 12.0, 512).unwrap();
        for h in [1.0, 0.5, 0.1] {
            let t = matched_theta_grid(HValue::new(h).unwrap(), &g).unwrap();
            assert_eq!(t.points_per_axis, 81);
            assert!(g.spacing() <= 0.5 * h / t.half_width + 1e-15);
        }
    }

    #[test]
    fn fresnel_kernel_value_matches_closed_form() {
        let h = HValue::new(0.5).unwrap();
        let theta = make_grid(1, 20.0, 10001).unwrap();
        let mut spec = FioSpec::new(PhaseSpec::fresnel(1).unwrap(), AmplitudeSpec::one(1).unwrap(), h, theta).unwrap();
        spec.ibp = IbpSpec::enabled();
        spec.cutoff = CutoffSpec::default();
        for (x, y) in [(0.0, 0.0), (1.0, 0.0), (0.3, -0.4)] {
            let kv = kernel_value(&spec, &[x], &[y]).unwrap();
            let d: f64 = x - y;
            let exact = Complex64::from_polar((2.0 * PI * 0.5f64).powf(-0.5), FRAC_PI_4 - d * d / (2.0 * 0.5));
            assert!((kv.value - exact).norm() < 1e-6 * exact.norm(), "{x} {y}: {:?} {exact:?}", kv.value);
        }
        let exact0 = (PI).powf(-0.5);
        assert!((exact0 - 0.56419).abs() < 1e-5);
    }

    #[test]
    fn gaussian_identity_kernel_value() {
        let h = HValue::new(1.0).unwrap();
        let theta = make_grid(1, 8.0, 1601).unwrap();
        let spec =
            FioSpec::new(PhaseSpec::identity(1).unwrap(), AmplitudeSpec::gaussian_theta(1).unwrap(), h, theta).unwrap();
        for d in [0.0, 0.7, 2.5] {
            let kv = kernel_value(&spec, &[d], &[0.0]).unwrap();
            let exact = PI.sqrt() * (-d * d / 4.0).exp() / (2.0 * PI);
            assert!((kv.value.re - exact).abs() < 1e-8 && kv.value.im.abs() < 1e-8, "{d}: {:?} {exact}", kv.value);
        }
        assert!((1.0 / (2.0 * PI.sqrt()) - 0.28209).abs() < 1e-5);
    }

    #[test]
    fn zero_amplitude_kernel() {
        let h = HValue::new(0.5).unwrap();
        let g = make_grid(1, 12.0, 64).unwrap();
        let zero = AmplitudeSpec::from_fn("zero", 1, 0.0, 0, |_, _| Complex64::new(0.0, 0.0)).unwrap();
        let spec = FioSpec::matched(PhaseSpec::identity(1).unwrap(), zero, h, &g).unwrap();
        assert_eq!(kernel_value(&spec, &[0.3], &[0.1]).unwrap().value, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn assembly_agrees_with_kernel_value() {
        let h = HValue::new(0.5).unwrap();
        let g = make_grid(1, 6.0, 64).unwrap();
        let spec =
            FioSpec::matched(PhaseSpec::kinetic(1).unwrap(), AmplitudeSpec::lambda_power(1, -1.0).unwrap(), h, &g)
                .unwrap();
        let m = assemble(&spec, &g, &g, &AssemblyOptions::default()).unwrap();
        assert_eq!(m.meta.unconverged_entries, 0);
        for (i, j) in [(0, 0), (10, 40), (33, 32), (63, 5)] {
            let kv = kernel_value(&spec, &g.node(i)[..1], &g.node(j)[..1]).unwrap();
            assert!((m.kernel(i, j) - kv.value).norm() < 4.0 * spec.cutoff.tol * (1.0 + kv.value.norm()));
        }
    }

    #[test]
    fn identity_chirp_and_fresnel_application() {
        let g = make_grid(1, 12.0, 512).unwrap();
        let phi = gaussian_field(g);
        for h in [1.0, 0.5, 0.1] {
            let hv = HValue::new(h).unwrap();
            let one = AmplitudeSpec::one(1).unwrap();
            let spec = FioSpec::matched(PhaseSpec::identity(1).unwrap(), one.clone(), hv, &g).unwrap();
            let m = assemble(&spec, &g, &g, &AssemblyOptions::default()).unwrap();
            assert!(rel_err(&apply(&m, &phi).unwrap(), &phi) <= 1e-3);

            let spec = FioSpec::matched(PhaseSpec::chirp(1).unwrap(), one.clone(), hv, &g).unwrap();
            let m = assemble(&spec, &g, &g, &AssemblyOptions::default()).unwrap();
            let expect = ScalarField::from_fn(g, |x| {
                Complex64::from_polar((-0.5 * x[0] * x[0]).exp(), x[0] * x[0] / (2.0 * h))
            });
            assert!(rel_err(&apply(&m, &phi).unwrap(), &expect) <= 1e-3);

            let spec = FioSpec::matched(PhaseSpec::fresnel(1).unwrap(), one, hv, &g).unwrap();
            let m = assemble(&spec, &g, &g, &AssemblyOptions::default()).unwrap();
            let z = Complex64::new(1.0, -h);
            let expect = ScalarField::from_fn(g, |x| z.powf(-0.5) * (-(x[0] * x[0]) / (2.0 * z)).exp());
            assert!(rel_err(&apply(&m, &phi).unwrap(), &expect) <= 1e-3, "h = {h}");
        }
    }

    #[test]
    fn adjoint_identity_of_inner_products() {
        let g = make_grid(1, 6.0, 96).unwrap();
        let spec = FioSpec::matched(
            PhaseSpec::chirp(1).unwrap(),
            AmplitudeSpec::lambda_power(1, -1.0).unwrap(),
            HValue::new(0.5).unwrap(),
            &g,
        )
        .unwrap();
        let m = assemble(&spec, &g, &g, &AssemblyOptions::default()).unwrap();
        let ma = m.adjoint();
        let phi = ScalarField::from_fn(g, |x| Complex64::new((-x[0] * x[0]).exp(), x[0] * 0.1));
        let psi = ScalarField::from_fn(g, |x| Complex64::new(x[0].cos(), (-0.3 * x[0] * x[0]).exp()));
        let w = g.weight();
        let lhs: Complex64 =
            apply(&m, &phi).unwrap().values.iter().zip(&psi.values).map(|(a, b)| a * b.conj() * w).sum();
        let rhs: Complex64 =
            phi.values.iter().zip(&apply(&ma, &psi).unwrap().values).map(|(a, b)| a * b.conj() * w).sum();
        assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm());
    }

    #[test]
    fn composition_is_hermitian_and_matches_direct_quadrature() {
        let g = make_grid(1, 8.0, 128).unwrap();
        let opts = AssemblyOptions::default();
        for phase in [PhaseSpec::identity(1), PhaseSpec::chirp(1), PhaseSpec::fresnel(1), PhaseSpec::kinetic(1)] {
            let spec = FioSpec::matched(
                phase.unwrap(),
                AmplitudeSpec::lambda_power(1, -1.0).unwrap(),
                HValue::new(0.5).unwrap(),
                &g,
            )
            .unwrap();
            let x = compose_ff_star(&spec, &g, &g, &opts).unwrap();
            let d = direct_ff_star(&spec, &g, &opts).unwrap();
            let nx = frobenius(&x.entries);
            assert!(frobenius(&(&x.entries - x.entries.adjoint())) <= 1e-10 * nx);
            assert!(frobenius(&(&x.entries - &d.entries)) <= 1e-4 * nx);
        }
    }

    #[test]
    fn size_cap_is_enforced() {
        let g = make_grid(1, 6.0, 100).unwrap();
        let spec = FioSpec::matched(
            PhaseSpec::identity(1).unwrap(),
            AmplitudeSpec::one(1).unwrap(),
            HValue::new(0.5).unwrap(),
            &g,
        )
        .unwrap();
        let r = assemble(&spec, &g, &g, &AssemblyOptions { max_entries: 5000 });
        assert!(matches!(r, Err(Error::TooLarge { entries: 10000, cap: 5000 })));
    }

    #[test]
    fn two_dimensional_identity() {
        let g = make_grid(2, 8.0, 64).unwrap();
        let spec = FioSpec::matched(
            PhaseSpec::identity(2).unwrap(),
            AmplitudeSpec::one(2).unwrap(),
            HValue::new(0.5).unwrap(),
            &g,
        )
        .unwrap();
        let m = assemble(&spec, &g, &g, &AssemblyOptions::default()).unwrap();
        let phi = ScalarField::from_fn(g, |x| Complex64::new((-(x[0] * x[0] + x[1] * x[1]) / 8.0).exp(), 0.0));
        assert!(rel_err(&apply(&m, &phi).unwrap(), &phi) <= 1e-3);
    }
}
