use hfio_core::calculus::{cv_seminorm, leading_symbol, DetConvention};
use hfio_core::dense::{singular_values, CMatrix};
use hfio_core::numeric::{fd_partial, make_grid, weight, weight_power_derivative, HValue};
use hfio_core::operator::{assemble, compose_ff_star, compose_fstar_f, AssemblyOptions, FioSpec, KernelMatrix};
use hfio_core::phase::{invert_dtheta_s, invert_dx_s, PhaseSpec, QuadraticPhase};
use hfio_core::spectral::rank_truncation_curve;
use hfio_core::symbols::{estimate_seminorms, AmplitudeSpec};
use hfio_core::Complex64;
use proptest::prelude::*;

fn preset(i: usize) -> PhaseSpec {
    match i {
        0 => PhaseSpec::identity(1),
        1 => PhaseSpec::chirp(1),
        2 => PhaseSpec::fresnel(1),
        _ => PhaseSpec::kinetic(1),
    }
    .unwrap()
}

fn forward(phase: usize, h: f64) -> KernelMatrix {
    let g = make_grid(1, 8.0, 64).unwrap();
    let spec = FioSpec::matched(preset(phase), AmplitudeSpec::gaussian_theta(1).unwrap(), HValue::new(h).unwrap(), &g)
        .unwrap();
    assemble(&spec, &g, &g, &AssemblyOptions::default()).unwrap()
}

fn spec_for(phase: usize, h: f64) -> (FioSpec, hfio_core::numeric::Grid) {
    let g = make_grid(1, 8.0, 64).unwrap();
    let spec = FioSpec::matched(preset(phase), AmplitudeSpec::gaussian_theta(1).unwrap(), HValue::new(h).unwrap(), &g)
        .unwrap();
    (spec, g)
}

fn hermitian_defect(m: &CMatrix) -> f64 {
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale
}

fn quadratic(b: [[f64; 2]; 2], a: f64, c: f64) -> PhaseSpec {
    let q = QuadraticPhase::new(1, [[a, 0.0], [0.0, 0.0]], b, [[c, 0.0], [0.0, 0.0]]).unwrap();
    PhaseSpec::quadratic("q", q, None).unwrap()
}

proptest! {
    #[test]
    fn weight_grows_with_the_argument(x in -1e3f64..1e3, y in -1e3f64..1e3, t in 1.0f64..10.0) {
        let w = weight(&[x, y]).unwrap();
        prop_assert!(w >= 1.0);
        prop_assert!(weight(&[t * x, t * y]).unwrap() >= w);
    }

    #[test]
    fn weight_derivatives_match_finite_differences(
        m in -2.0f64..2.0, x in -5.0f64..5.0, y in -5.0f64..5.0, i in 0usize..3, j in 0usize..3,
    ) {
        let exact = weight_power_derivative(m, &[x, y], &[i, j]);
        let f = |v: &[f64]| weight(v).unwrap().powf(m);
        let fd: f64 = fd_partial(&f, &[x, y], &[i, j]).unwrap();
        let scale = weight(&[x, y]).unwrap().powf(m - (i + j) as f64).max(1e-3);
        prop_assert!((exact - fd).abs() <= 1e-4 * scale, "{exact} vs {fd}");
    }

    #[test]
    fn finite_differences_are_exact_on_cubics(
        c in prop::array::uniform4(-3.0f64..3.0), x in -4.0f64..4.0, order in 1usize..4,
    ) {
        let p = |v: &[f64]| c[0] + c[1] * v[0] + c[2] * v[0] * v[0] + c[3] * v[0] * v[0] * v[0];
        let exact = match order {
            1 => c[1] + 2.0 * c[2] * x + 3.0 * c[3] * x * x,
            2 => 2.0 * c[2] + 6.0 * c[3] * x,
            _ => 6.0 * c[3],
        };
        let fd: f64 = fd_partial(&p, &[x], &[order]).unwrap();
        let scale = 1.0 + c.iter().map(|v| v.abs()).sum::<f64>() * (1.0 + x.abs()).powi(3);
        prop_assert!((fd - exact).abs() <= 1e-6 * scale, "order {order}: {fd} vs {exact}");
    }

    #[test]
    fn grid_quadrature_integrates_gaussians(s in 0.5f64..2.0, n in 1usize..3) {
        let g = make_grid(n, 12.0, 256).unwrap();
        let sum: f64 = g.nodes().iter().map(|p| (-(p[..n].iter().map(|v| v * v).sum::<f64>()) / (s * s)).exp()).sum();
        let exact = (core::f64::consts::PI * s * s).powf(n as f64 / 2.0);
        prop_assert!((sum * g.weight() - exact).abs() <= 1e-10 * exact);
    }

    #[test]
    fn seminorms_scale_with_the_amplitude(re in -4.0f64..4.0, im in -4.0f64..4.0) {
        let a = AmplitudeSpec::gaussian_theta(1).unwrap();
        let c = Complex64::new(re, im);
        let g = make_grid(1, 4.0, 9).unwrap();
        let base = estimate_seminorms(&a, &g, 2).unwrap();
        let scaled = estimate_seminorms(&a.scaled(c), &g, 2).unwrap();
        for (e, f) in base.entries.iter().zip(&scaled.entries) {
            prop_assert!((f.c - c.norm() * e.c).abs() <= 1e-9 * (1.0 + f.c));
        }
    }

    #[test]
    fn newton_inverts_gradients(
        b in -3.0f64..3.0, a in -1.0f64..1.0, c in -1.0f64..1.0, x in -5.0f64..5.0, t in -5.0f64..5.0,
    ) {
        prop_assume!(b.abs() > 0.3);
        let s = quadratic([[b, 0.0], [0.0, 0.0]], a, c);
        let xi = s.grad_x(&[x], &[t]).unwrap()[0];
        let back = invert_dx_s(&s, &[x], &[xi], &[0.0]).unwrap();
        prop_assert!((back[0] - t).abs() <= 1e-8 * (1.0 + t.abs()));
        let y = s.grad_theta(&[x], &[t]).unwrap()[0];
        let back = invert_dtheta_s(&s, &[t], &[y], &[0.0]).unwrap();
        prop_assert!((back[0] - x).abs() <= 1e-8 * (1.0 + x.abs()));
    }

    #[test]
    fn leading_symbol_is_nonnegative_and_quadratic_in_the_amplitude(
        b in -3.0f64..3.0, x in -5.0f64..5.0, t in -5.0f64..5.0, re in -3.0f64..3.0, im in -3.0f64..3.0,
    ) {
        prop_assume!(b.abs() > 0.3);
        let s = quadratic([[b, 0.0], [0.0, 0.0]], 0.5, -0.5);
        let a = AmplitudeSpec::lambda_power(1, -1.0).unwrap();
        let c = Complex64::new(re, im);
        let base = leading_symbol(&s, &a, &[x], &[t], DetConvention::Inverse).unwrap();
        prop_assert!(base >= 0.0);
        let scaled = leading_symbol(&s, &a.scaled(c), &[x], &[t], DetConvention::Inverse).unwrap();
        prop_assert!((scaled - c.norm_sqr() * base).abs() <= 1e-12 * (1.0 + scaled));
    }

    #[test]
    fn cv_seminorm_grows_with_order(w in 0.5f64..4.0, k in 0usize..3) {
        let sigma = move |u: &[f64], v: &[f64]| Complex64::new((-(u[0] * u[0] + v[0] * v[0]) / (w * w)).exp(), 0.0);
        let g = make_grid(1, 4.0, 9).unwrap();
        let low = cv_seminorm(&sigma, 1, k, &g).unwrap().q;
        let high = cv_seminorm(&sigma, 1, k + 1, &g).unwrap().q;
        prop_assert!(high >= low);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn compositions_are_hermitian_and_positive(phase in 0usize..4, h in 0.3f64..1.0, seed in any::<u64>()) {
        let (spec, g) = spec_for(phase, h);
        let opts = AssemblyOptions::default();
        for m in [compose_ff_star(&spec, &g, &g, &opts).unwrap(), compose_fstar_f(&spec, &g, &g, &opts).unwrap()] {
            let l2 = m.l2_faithful();
            prop_assert!(hermitian_defect(&l2) <= 1e-10);
            let mut state = seed | 1;
            let v = CMatrix::from_fn(l2.nrows(), 1, |_, _| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                Complex64::new((state % 1000) as f64 / 500.0 - 1.0, ((state >> 20) % 1000) as f64 / 500.0 - 1.0)
            });
            let q = (v.adjoint() * &l2 * &v)[(0, 0)];
            let scale = singular_values(&l2).unwrap()[0] * v.norm_squared();
            prop_assert!(q.re >= -1e-10 * scale, "x*Mx = {q}");
        }
    }

    #[test]
    fn adjoint_shares_singular_values(phase in 0usize..4, h in 0.3f64..1.0) {
        let m = forward(phase, h);
        let s = singular_values(&m.l2_faithful()).unwrap();
        let t = singular_values(&m.adjoint().l2_faithful()).unwrap();
        for (a, b) in s.iter().zip(&t) {
            prop_assert!((a - b).abs() <= 1e-10 * s[0]);
        }
    }

    #[test]
    fn norm_of_ff_star_is_the_squared_norm(phase in 0usize..4, h in 0.3f64..1.0) {
        let (spec, g) = spec_for(phase, h);
        let f = assemble(&spec, &g, &g, &AssemblyOptions::default()).unwrap();
        let ffs = compose_ff_star(&spec, &g, &g, &AssemblyOptions::default()).unwrap();
        let s1 = singular_values(&f.l2_faithful()).unwrap()[0];
        let s2 = singular_values(&ffs.l2_faithful()).unwrap()[0];
        prop_assert!((s2 - s1 * s1).abs() <= 1e-9 * s1 * s1);
    }

    #[test]
    fn truncation_error_is_the_next_singular_value(phase in 0usize..4, h in 0.3f64..1.0, r in 1usize..40) {
        let m = forward(phase, h).l2_faithful();
        let curve = rank_truncation_curve(&m, &[r]).unwrap();
        let s = singular_values(&m).unwrap();
        prop_assert!((curve[0].error - s[r]).abs() <= 1e-12 * s[0]);
        let direct = curve[0].direct.unwrap();
        prop_assert!((direct - s[r]).abs() <= 1e-9 * s[0], "{direct} vs {}", s[r]);
    }
}
