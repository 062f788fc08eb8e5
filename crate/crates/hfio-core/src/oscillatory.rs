//! Cutoff-regularized oscillatory integrals
//!
//! I(a, φ; h) = lim_{σ→∞} ∫ e^{iφ(θ)/h} g(θ/σ) a(θ) dθ
//!
//! evaluated on a uniform θ grid for σ_k = σ₀·2^k, optionally rewritten with
//! the transpose of L = (h/i) Σ_l v_l ∂_l, v_l = ∂_lφ / |∂φ|², wherever the phase
//! is non-stationary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{fd_partial, pairwise_sum, smoothstep, weight_unchecked, Grid, HValue};
use crate::prelude::*;

/// Shape of the cutoff g with g(0) = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffShape {
    /// g(z) = e^{−|z|²}
    Gaussian,
    /// g = 1 on |z| ≤ ½, ½(1 + cos π(2|z|−1)) on ½ < |z| < 1, 0 beyond.
    CosineBump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub shape: CutoffShape,
    pub sigma0: f64,
    pub k_max: usize,
    pub tol: f64,
}

impl Default for CutoffSpec {
    fn default() -> Self {
        Self { shape: CutoffShape::Gaussian, sigma0: 4.0, k_max: 20, tol: 1e-8 }
    }
}

impl CutoffSpec {
    pub fn with_shape(shape: CutoffShape) -> Self {
        Self { shape, ..Self::default() }
    }

    pub fn sigma(&self, k: usize) -> f64 {
        self.sigma0 * (1u64 << k) as f64
    }

    /// g(θ/σ).
    pub fn eval(&self, theta: &[f64], sigma: f64) -> f64 {
        let r2 = theta.iter().map(|t| t * t).sum::<f64>() / (sigma * sigma);
        match self.shape {
            CutoffShape::Gaussian => (-r2).exp(),
            CutoffShape::CosineBump => {
                let r = r2.sqrt();
                if r <= 0.5 {
                    1.0
                } else if r >= 1.0 {
                    0.0
                } else {
                    0.5 * (1.0 + (core::f64::consts::PI * (2.0 * r - 1.0)).cos())
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma0 > 0.0 && self.tol > 0.0) || self.k_max > 60 {
            return Err(Error::InvalidArgument(format!("invalid cutoff specification {self:?}")));
        }
        Ok(())
    }
}

/// Integration by parts with (ᵗL)^q where |∂φ| ≥ c_ns·λ(θ).
///
/// The partition ψ rises smoothly from 0 at |∂φ|/λ = c_ns to 1 at
/// |∂φ|/λ = ramp_top; the integrand becomes (1−ψ)b + (ᵗL)^q(ψb).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IbpSpec {
    pub enabled: bool,
    pub order: usize,
    pub c_ns: f64,
    pub ramp_top: f64,
}

impl Default for IbpSpec {
    fn default() -> Self {
        Self { enabled: false, order: 2, c_ns: 0.05, ramp_top: 0.5 }
    }
}

impl IbpSpec {
    pub fn enabled() -> Self {
        Self { enabled: true, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.order > 4 {
            return Err(Error::InvalidArgument(format!("IBP order {} exceeds 4", self.order)));
        }
        if !(self.c_ns > 0.0 && self.ramp_top > self.c_ns) {
            return Err(Error::InvalidArgument("IBP thresholds need 0 < c_ns < ramp_top".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatoryResult {
    pub value: Complex64,
    pub k_used: usize,
    /// Last successive difference |I_k − I_{k−1}|.
    pub residual: f64,
    pub converged: bool,
    pub ibp_applied: bool,
    /// Grid spacing exceeds 0.25·h / max|∂φ|.
    pub resolution_warning: bool,
    /// All successive differences, k = 1..=k_used.
    pub differences: Vec<f64>,
}

/// Convergence rule shared with kernel assembly.
#[inline]
pub fn is_converged(residual: f64, value: Complex64, tol: f64) -> bool {
    residual <= tol * (1.0 + value.norm())
}

/// Regularized ∫ e^{iφ/h} a dθ with phase derivatives from finite differences.
pub fn osc_integral<P, A>(
    phase: &P,
    amplitude: &A,
    h: HValue,
    theta: &Grid,
    cutoff: &CutoffSpec,
    ibp: &IbpSpec,
) -> Result<OscillatoryResult>
where
    P: Fn(&[f64]) -> f64 + ?Sized,
    A: Fn(&[f64]) -> Complex64 + ?Sized,
{
    osc_integral_impl(phase, None, amplitude, h, theta, cutoff, ibp)
}

/// As [`osc_integral`], with an exact gradient oracle for φ.
pub fn osc_integral_with_gradient<P, G, A>(
    phase: &P,
    gradient: &G,
    amplitude: &A,
    h: HValue,
    theta: &Grid,
    cutoff: &CutoffSpec,
    ibp: &IbpSpec,
) -> Result<OscillatoryResult>
where
    P: Fn(&[f64]) -> f64 + ?Sized,
    G: Fn(&[f64]) -> [f64; 2],
    A: Fn(&[f64]) -> Complex64 + ?Sized,
{
    osc_integral_impl(phase, Some(gradient as &dyn Fn(&[f64]) -> [f64; 2]), amplitude, h, theta, cutoff, ibp)
}

struct IbpContext<'a, P: ?Sized, A: ?Sized> {
    phase: &'a P,
    gradient: Option<&'a dyn Fn(&[f64]) -> [f64; 2]>,
    amplitude: &'a A,
    cutoff: &'a CutoffSpec,
    sigma: f64,
    h: f64,
    spec: &'a IbpSpec,
    dim: usize,
}

impl<P, A> IbpContext<'_, P, A>
where
    P: Fn(&[f64]) -> f64 + ?Sized,
    A: Fn(&[f64]) -> Complex64 + ?Sized,
{
    fn unit(&self, l: usize) -> [usize; 2] {
        let mut e = [0; 2];
        e[l] = 1;
        e
    }

    fn grad(&self, z: &[f64]) -> Result<[f64; 2]> {
        if let Some(g) = self.gradient {
            return Ok(g(z));
        }
        let mut g = [0.0; 2];
        for (l, gl) in g.iter_mut().enumerate().take(self.dim) {
            *gl = fd_partial(self.phase, z, &self.unit(l)[..self.dim])?;
        }
        Ok(g)
    }

    fn psi(&self, grad: &[f64; 2], z: &[f64]) -> f64 {
        let gn = grad[..self.dim].iter().map(|g| g * g).sum::<f64>().sqrt();
        let s = (gn / weight_unchecked(z) - self.spec.c_ns) / (self.spec.ramp_top - self.spec.c_ns);
        smoothstep(s)
    }

    fn coefficient(&self, grad: &[f64; 2], l: usize) -> f64 {
        let g2: f64 = grad[..self.dim].iter().map(|g| g * g).sum();
        if g2 == 0.0 {
            0.0
        } else {
            grad[l] / g2
        }
    }

    fn cut_amplitude(&self, z: &[f64]) -> Complex64 {
        (self.amplitude)(z) * self.cutoff.eval(z, self.sigma)
    }

    /// (ᵗL)^j (ψ b) at z.
    fn level(&self, j: usize, z: &[f64]) -> Result<Complex64> {
        if j == 0 {
            let g = self.grad(z)?;
            return Ok(self.cut_amplitude(z) * self.psi(&g, z));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for l in 0..self.dim {
            let f = |p: &[f64]| -> Complex64 {
                match (self.grad(p), self.level(j - 1, p)) {
                    (Ok(g), Ok(u)) => u * self.coefficient(&g, l),
                    _ => Complex64::new(f64::NAN, f64::NAN),
                }
            };
            acc += fd_partial(&f, z, &self.unit(l)[..self.dim])?;
        }
        Ok(acc * Complex64::new(0.0, self.h))
    }

    fn integrand(&self, z: &[f64]) -> Result<(Complex64, bool)> {
        let g = self.grad(z)?;
        let psi = self.psi(&g, z);
        let b = self.cut_amplitude(z);
        let rest = self.level(self.spec.order, z)?;
        Ok((b * (1.0 - psi) + rest, psi > 0.0))
    }
}

fn osc_integral_impl<P, A>(
    phase: &P,
    gradient: Option<&dyn Fn(&[f64]) -> [f64; 2]>,
    amplitude: &A,
    h: HValue,
    theta: &Grid,
    cutoff: &CutoffSpec,
    ibp: &IbpSpec,
) -> Result<OscillatoryResult>
where
    P: Fn(&[f64]) -> f64 + ?Sized,
    A: Fn(&[f64]) -> Complex64 + ?Sized,
{
    cutoff.validate()?;
    ibp.validate()?;
    if theta.half_width < cutoff.sigma0 * (1.0 - 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "θ box half-width {} is smaller than σ₀ = {}",
            theta.half_width, cutoff.sigma0
        )));
    }
    let hv = h.get();
    let n = theta.dim;
    let nodes = theta.nodes();
    let w = theta.weight();

    let mut phases = Vec::with_capacity(nodes.len());
    let mut amps = Vec::with_capacity(nodes.len());
    for p in &nodes {
        let z = &p[..n];
        let ph = phase(z);
        let a = amplitude(z);
        if !ph.is_finite() || !(a.re.is_finite() && a.im.is_finite()) {
            return Err(Error::EvaluationFailure { point: z.to_vec() });
        }
        phases.push(ph);
        amps.push(a);
    }
    let resolution_warning = theta.spacing() > 0.25 * hv / max_slope(&phases, theta);
    let waves: Vec<Complex64> = phases.iter().map(|ph| Complex64::from_polar(1.0, ph / hv)).collect();

    let all_zero = amps.iter().all(|a| a.re == 0.0 && a.im == 0.0);
    if all_zero {
        return Ok(OscillatoryResult {
            value: Complex64::new(0.0, 0.0),
            k_used: 0,
            residual: 0.0,
            converged: true,
            ibp_applied: false,
            resolution_warning,
            differences: Vec::new(),
        });
    }

    let mut terms = vec![Complex64::new(0.0, 0.0); nodes.len()];
    let mut prev: Option<Complex64> = None;
    let mut differences = Vec::new();
    let mut ibp_applied = false;
    let mut value = Complex64::new(0.0, 0.0);
    for k in 0..=cutoff.k_max {
        let sigma = cutoff.sigma(k);
        if ibp.enabled {
            let ctx = IbpContext { phase, gradient, amplitude, cutoff, sigma, h: hv, spec: ibp, dim: n };
            for (i, p) in nodes.iter().enumerate() {
                let (f, applied) = ctx.integrand(&p[..n])?;
                ibp_applied |= applied;
                terms[i] = waves[i] * f * w;
            }
        } else {
            for (i, p) in nodes.iter().enumerate() {
                terms[i] = waves[i] * amps[i] * (cutoff.eval(&p[..n], sigma) * w);
            }
        }
        value = pairwise_sum(&terms);
        if !(value.re.is_finite() && value.im.is_finite()) {
            return Err(Error::EvaluationFailure { point: Vec::new() });
        }
        if let Some(pv) = prev {
            let residual = (value - pv).norm();
            differences.push(residual);
            if is_converged(residual, value, cutoff.tol) {
                return Ok(OscillatoryResult {
                    value,
                    k_used: k,
                    residual,
                    converged: true,
                    ibp_applied,
                    resolution_warning,
                    differences,
                });
            }
        }
        prev = Some(value);
    }
    Ok(OscillatoryResult {
        value,
        k_used: cutoff.k_max,
        residual: differences.last().copied().unwrap_or(f64::INFINITY),
        converged: false,
        ibp_applied,
        resolution_warning,
        differences,
    })
}

/// Largest neighbour slope of sampled phase values along every grid axis.
fn max_slope(phases: &[f64], grid: &Grid) -> f64 {
    let n = grid.points_per_axis;
    let d = grid.spacing();
    let mut m = 0.0f64;
    if grid.dim == 1 {
        for w in phases.windows(2) {
            m = m.max((w[1] - w[0]).abs() / d);
        }
    } else {
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                if j + 1 < n {
                    m = m.max((phases[idx + 1] - phases[idx]).abs() / d);
                }
                if i + 1 < n {
                    m = m.max((phases[idx + n] - phases[idx]).abs() / d);
                }
            }
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffIndependence {
    pub value_a: Complex64,
    pub value_b: Complex64,
    pub discrepancy: f64,
    /// discrepancy ≤ 10·tol·(1+|value|)
    pub pass: bool,
}

/// Same integral under two cutoffs; unconverged runs are inconclusive.
pub fn cutoff_independence_test<P, A>(
    phase: &P,
    amplitude: &A,
    h: HValue,
    theta: &Grid,
    cutoff_a: &CutoffSpec,
    cutoff_b: &CutoffSpec,
    ibp: &IbpSpec,
) -> Result<CutoffIndependence>
where
    P: Fn(&[f64]) -> f64 + ?Sized,
    A: Fn(&[f64]) -> Complex64 + ?Sized,
{
    let ra = osc_integral(phase, amplitude, h, theta, cutoff_a, ibp)?;
    let rb = osc_integral(phase, amplitude, h, theta, cutoff_b, ibp)?;
    if !(ra.converged && rb.converged) {
        return Err(Error::Inconclusive("a cutoff run did not converge".into()));
    }
    let discrepancy = (ra.value - rb.value).norm();
    let tol = cutoff_a.tol.max(cutoff_b.tol);
    Ok(CutoffIndependence {
        value_a: ra.value,
        value_b: rb.value,
        discrepancy,
        pass: discrepancy <= 10.0 * tol * (1.0 + ra.value.norm()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::make_grid;
    use core::f64::consts::{FRAC_PI_4, PI};

    fn gaussian_linear() -> (impl Fn(&[f64]) -> f64, impl Fn(&[f64]) -> Complex64) {
        (|t: &[f64]| 2.0 * t[0], |t: &[f64]| Complex64::new((-t[0] * t[0]).exp(), 0.0))
    }

    #[test]
    fn gaussian_with_linear_phase() {
        let (p, a) = gaussian_linear();
        let g = make_grid(1, 8.0, 1601).unwrap();
        let r = osc_integral(&p, &a, HValue::new(1.0).unwrap(), &g, &CutoffSpec::default(), &IbpSpec::default())
            .unwrap();
        let exact = PI.sqrt() * (-1.0f64).exp();
        assert!(r.converged);
        assert!((r.value - exact).norm() < 1e-8, "{:?} vs {exact}", r.value);
        assert!((exact - 0.65201).abs() < 5e-5);
    }

    #[test]
    fn fresnel_integral_with_integration_by_parts() {
        let g = make_grid(1, 20.0, 10001).unwrap();
        let h = 0.5;
        let r = osc_integral(
            &|t: &[f64]| 0.5 * t[0] * t[0],
            &|_: &[f64]| Complex64::new(1.0, 0.0),
            HValue::new(h).unwrap(),
            &g,
            &CutoffSpec::default(),
            &IbpSpec::enabled(),
        )
        .unwrap();
        let exact = Complex64::from_polar((2.0 * PI * h).sqrt(), FRAC_PI_4);
        assert!(r.converged && r.ibp_applied);
        assert!((r.value - exact).norm() < 1e-6 * exact.norm(), "{:?} vs {exact:?}", r.value);
        assert!((exact.re - 1.25331).abs() < 1e-5);
    }

    #[test]
    fn zero_amplitude_converges_immediately() {
        let g = make_grid(1, 8.0, 101).unwrap();
        let r = osc_integral(
            &|t: &[f64]| t[0],
            &|_: &[f64]| Complex64::new(0.0, 0.0),
            HValue::new(1.0).unwrap(),
            &g,
            &CutoffSpec::default(),
            &IbpSpec::default(),
        )
        .unwrap();
        assert_eq!(r.value, Complex64::new(0.0, 0.0));
        assert!(r.converged);
        assert_eq!(r.k_used, 0);
    }

    #[test]
    fn cutoff_shapes_agree() {
        let (p, a) = gaussian_linear();
        let g = make_grid(1, 8.0, 1601).unwrap();
        let h = HValue::new(1.0).unwrap();
        let gauss = CutoffSpec::default();
        let bump = CutoffSpec::with_shape(CutoffShape::CosineBump);
        let r = cutoff_independence_test(&p, &a, h, &g, &gauss, &bump, &IbpSpec::default()).unwrap();
        assert!(r.pass && r.discrepancy <= 1e-7, "{r:?}");

        let g = make_grid(1, 20.0, 10001).unwrap();
        let r = cutoff_independence_test(
            &|t: &[f64]| 0.5 * t[0] * t[0],
            &|_: &[f64]| Complex64::new(1.0, 0.0),
            HValue::new(0.5).unwrap(),
            &g,
            &gauss,
            &bump,
            &IbpSpec::enabled(),
        )
        .unwrap();
        assert!(r.discrepancy <= 1e-6, "{r:?}");
    }

    #[test]
    fn coarse_grid_is_flagged() {
        let g = make_grid(1, 8.0, 33).unwrap();
        let r = osc_integral(
            &|t: &[f64]| 10.0 * t[0],
            &|t: &[f64]| Complex64::new((-t[0] * t[0]).exp(), 0.0),
            HValue::new(0.1).unwrap(),
            &g,
            &CutoffSpec::default(),
            &IbpSpec::default(),
        )
        .unwrap();
        assert!(r.resolution_warning);
    }

    #[test]
    fn small_box_is_rejected() {
        let g = make_grid(1, 2.0, 33).unwrap();
        let r = osc_integral(
            &|t: &[f64]| t[0],
            &|_: &[f64]| Complex64::new(1.0, 0.0),
            HValue::new(1.0).unwrap(),
            &g,
            &CutoffSpec::default(),
            &IbpSpec::default(),
        );
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn cosine_bump_profile() {
        let c = CutoffSpec::with_shape(CutoffShape::CosineBump);
        assert_eq!(c.eval(&[0.4], 1.0), 1.0);
        assert_eq!(c.eval(&[1.0], 1.0), 0.0);
        assert!((c.eval(&[0.75], 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(CutoffSpec::default().eval(&[0.0, 0.0], 3.0), 1.0);
    }

    #[test]
    fn two_dimensional_gaussian() {
        let g = make_grid(2, 6.0, 241).unwrap();
        let r = osc_integral(
            &|t: &[f64]| t[0] - 0.5 * t[1],
            &|t: &[f64]| Complex64::new((-t[0] * t[0] - t[1] * t[1]).exp(), 0.0),
            HValue::new(1.0).unwrap(),
            &g,
            &CutoffSpec { sigma0: 6.0, ..CutoffSpec::default() },
            &IbpSpec::default(),
        )
        .unwrap();
        let exact = PI * (-(1.0 + 0.25) / 4.0f64).exp();
        assert!((r.value - exact).norm() < 1e-7, "{:?} {exact}", r.value);
    }
}
