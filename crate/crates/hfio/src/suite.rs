//! Acceptance suite: one check per criterion, each with its measured value,
//! the expectation and the tolerance it was held to.

use std::time::Instant;

use hfio_core::calculus::{
    compare_symbols, predicted_symbol_at, CompareOptions, CvBoundOptions, DetConvention, Side, WindowedRow,
};
use hfio_core::dense::singular_values;
use hfio_core::numeric::{make_grid, Grid, HValue, ScalarField};
use hfio_core::operator::{apply, assemble, compose_ff_star, AssemblyOptions, FioSpec, KernelMatrix};
use hfio_core::oscillatory::{cutoff_independence_test, CutoffShape, CutoffSpec, IbpSpec};
use hfio_core::phase::{check_separation, validate_g, validate_h_via_lemma, PhaseSpec, QuadraticPhase, Verdict};
use hfio_core::spectral::{rank_truncation_curve, spectrum, SpectralVerdict};
use hfio_core::symbols::AmplitudeSpec;
use hfio_core::{Complex64, Error};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const SUITE_TIME_LIMIT: f64 = 600.0;

/// Knobs of a suite run; `det` is a fault-injection hook.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub seed: u64,
    pub det: DetConvention,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { seed: hfio_core::phase::DEFAULT_SEED, det: DetConvention::Inverse }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    pub expected: String,
    pub tolerance: f64,
    pub detail: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub id: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub checks: Vec<Check>,
    pub pass: bool,
    pub environment: Environment,
    /// Wall-clock data; excluded from determinism comparisons.
    pub timings: Vec<Timing>,
    pub total_seconds: f64,
}

impl SuiteResult {
    /// The part of the result that must be identical between runs with the same seed.
    pub fn deterministic_json(&self) -> String {
        serde_json::to_string(&(&self.checks, &self.environment)).expect("serializable")
    }
}

/// Identifiers of the criteria in suite order.
pub const CHECK_IDS: [&str; 10] = ["AC1", "AC2", "AC3", "AC4", "AC5", "AC6", "AC7", "AC8", "AC9", "AC10"];

fn failed(id: &str, name: &str, expected: &str, tolerance: f64, e: Error) -> Check {
    Check {
        id: id.into(),
        name: name.into(),
        pass: false,
        measured: f64::NAN,
        expected: expected.into(),
        tolerance,
        detail: json!({ "error": e.to_string() }),
    }
}

fn timed<F: FnOnce() -> Check>(f: F) -> (Check, f64) {
    let t = Instant::now();
    let c = f();
    (c, t.elapsed().as_secs_f64())
}

/// Runs one criterion (AC1..AC9). AC10 needs the whole suite and is run by [`run_suite`].
pub fn run_check(id: &str, opts: &SuiteOptions) -> Option<(Check, f64)> {
    Some(match id {
        "AC1" => timed(|| with_time_limit(identity_reproduction(), 30.0)),
        "AC2" => timed(|| with_time_limit(chirp_identity(), 30.0)),
        "AC3" => timed(|| with_time_limit(fresnel_unitarity(), 60.0)),
        "AC4" => timed(|| symbol_identity(opts)),
        "AC5" => timed(|| determinant_factor(opts)),
        "AC6" => timed(uniform_boundedness),
        "AC7" => timed(|| compactness(opts)),
        "AC8" => timed(cutoff_independence),
        "AC9" => timed(|| hypothesis_validation(opts)),
        _ => return None,
    })
}

/// Marks the check failed when it ran longer than `limit` seconds; the runtime itself
/// is reported in the timings, not in the check.
fn with_time_limit(check: Check, limit: f64) -> Check {
    let mut c = check;
    if let Value::Object(map) = &mut c.detail {
        map.insert("time_limit_seconds".into(), json!(limit));
    }
    c
}

pub fn run_suite(opts: &SuiteOptions) -> SuiteResult {
    let start = Instant::now();
    let mut checks = Vec::new();
    let mut timings = Vec::new();
    for id in &CHECK_IDS[..9] {
        let (mut c, secs) = run_check(id, opts).expect("known id");
        if let Some(limit) = c.detail.get("time_limit_seconds").and_then(Value::as_f64) {
            if secs > limit {
                c.pass = false;
            }
        }
        checks.push(c);
        timings.push(Timing { id: id.to_string(), seconds: secs });
    }
    let (ac10, secs) = timed(|| full_suite(&checks, start.elapsed().as_secs_f64(), opts));
    checks.push(ac10);
    timings.push(Timing { id: "AC10".into(), seconds: secs });
    let total_seconds = start.elapsed().as_secs_f64();
    if total_seconds > SUITE_TIME_LIMIT {
        checks.last_mut().expect("AC10").pass = false;
    }
    SuiteResult {
        pass: checks.iter().all(|c| c.pass),
        checks,
        environment: Environment {
            version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads: rayon::current_num_threads(),
            seed: opts.seed,
        },
        timings,
        total_seconds,
    }
}

fn grid_512() -> Grid {
    make_grid(1, 12.0, 512).expect("valid grid")
}

/// The three bundled test functions: a Gaussian, a shifted modulated Gaussian and a chirped Gaussian.
pub fn bundled_functions(g: Grid) -> Vec<(&'static str, ScalarField)> {
    vec![
        ("gaussian", ScalarField::from_fn(g, |x| Complex64::new((-0.5 * x[0] * x[0]).exp(), 0.0))),
        (
            "shifted-modulated",
            ScalarField::from_fn(g, |x| Complex64::from_polar((-0.5 * (x[0] - 2.0).powi(2)).exp(), x[0])),
        ),
        ("chirped", ScalarField::from_fn(g, |x| Complex64::from_polar((-0.5 * x[0] * x[0]).exp(), 0.5 * x[0] * x[0]))),
    ]
}

pub fn relative_l2(a: &ScalarField, b: &ScalarField) -> f64 {
    let num: f64 = a.values.iter().zip(&b.values).map(|(p, q)| (p - q).norm_sqr()).sum();
    let den: f64 = b.values.iter().map(|q| q.norm_sqr()).sum();
    (num / den).sqrt()
}

fn assembled(phase: PhaseSpec, a: AmplitudeSpec, h: f64, g: &Grid) -> Result<KernelMatrix, Error> {
    let spec = FioSpec::matched(phase, a, HValue::new(h)?, g)?;
    assemble(&spec, g, g, &AssemblyOptions::default())
}

fn reproduction(
    id: &str,
    name: &str,
    phase: fn() -> Result<PhaseSpec, Error>,
    expected: impl Fn(f64, &ScalarField) -> ScalarField,
) -> Check {
    let g = grid_512();
    let run = || -> Result<(f64, Vec<Value>), Error> {
        let mut worst = 0.0f64;
        let mut rows = Vec::new();
        for h in [1.0, 0.5, 0.1] {
            let m = assembled(phase()?, AmplitudeSpec::one(1)?, h, &g)?;
            for (fname, phi) in bundled_functions(g) {
                let e = relative_l2(&apply(&m, &phi)?, &expected(h, &phi));
                worst = worst.max(e);
                rows.push(json!({ "h": h, "function": fname, "relative_error": e }));
            }
        }
        Ok((worst, rows))
    };
    match run() {
        Ok((worst, rows)) => Check {
            id: id.into(),
            name: name.into(),
            pass: worst <= 1e-3,
            measured: worst,
            expected: "relative L2 error <= 1e-3 for h in {1, 0.5, 0.1}, N=512, L=12".into(),
            tolerance: 1e-3,
            detail: json!({ "errors": rows }),
        },
        Err(e) => failed(id, name, "relative L2 error <= 1e-3", 1e-3, e),
    }
}

fn identity_reproduction() -> Check {
    reproduction("AC1", "identity reproduction", || PhaseSpec::identity(1), |_, phi| phi.clone())
}

fn chirp_identity() -> Check {
    reproduction(
        "AC2",
        "chirp identity",
        || PhaseSpec::chirp(1),
        |h, phi| {
            let vals = phi
                .grid
                .nodes()
                .iter()
                .zip(&phi.values)
                .map(|(x, v)| v * Complex64::from_polar(1.0, x[0] * x[0] / (2.0 * h)))
                .collect();
            ScalarField::new(phi.grid, vals).expect("same grid")
        },
    )
}

fn fresnel_unitarity() -> Check {
    let name = "Fresnel unitarity";
    let g = grid_512();
    let run = || -> Result<(f64, Vec<Value>), Error> {
        let mut worst = 0.0f64;
        let mut rows = Vec::new();
        for h in [0.5, 0.25] {
            let m = assembled(PhaseSpec::fresnel(1)?, AmplitudeSpec::one(1)?, h, &g)?;
            let r = spectrum(&m)?;
            let dev = r.interior().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
            worst = worst.max(dev);
            rows.push(json!({
                "h": h,
                "interior_modes": r.numerical_rank,
                "min": r.interior().last(),
                "max": r.operator_norm,
                "verdict": r.verdict,
            }));
        }
        Ok((worst, rows))
    };
    match run() {
        Ok((worst, rows)) => Check {
            id: "AC3".into(),
            name: name.into(),
            pass: worst <= 0.01,
            measured: worst,
            expected: "interior singular values in [0.99, 1.01] for h in {0.5, 0.25}".into(),
            tolerance: 0.01,
            detail: json!({ "spectra": rows }),
        },
        Err(e) => failed("AC3", name, "interior singular values in [0.99, 1.01]", 0.01, e),
    }
}

fn symbol_identity(opts: &SuiteOptions) -> Check {
    let name = "symbol identity";
    let expected = "max interior error decreasing over h in {0.4, 0.2, 0.1}, slope >= 0.8, error(0.1) <= 5e-2";
    let run = || -> Result<Check, Error> {
        let copts = CompareOptions { det: opts.det, ..CompareOptions::for_dim(1) };
        let r = compare_symbols(
            &PhaseSpec::identity(1)?,
            &AmplitudeSpec::lambda_power(1, -1.0)?,
            Side::FfStar,
            &[0.4, 0.2, 0.1],
            &copts,
        )?;
        let last = *r.max_error.last().expect("three h");
        let decreasing = r.max_error.windows(2).all(|w| w[1] < w[0]);
        let slope_ok = r.slope.is_some_and(|s| s >= 0.8);
        Ok(Check {
            id: "AC4".into(),
            name: name.into(),
            pass: decreasing && slope_ok && last <= 5e-2,
            measured: last,
            expected: expected.into(),
            tolerance: 5e-2,
            detail: serde_json::to_value(&r).expect("serializable"),
        })
    };
    run().unwrap_or_else(|e| failed("AC4", name, expected, 5e-2, e))
}

fn determinant_factor(opts: &SuiteOptions) -> Check {
    let name = "determinant factor";
    let expected = "extracted symbol ratio S=2xθ : S=xθ equals 1/2 within 5% and matches the predicted ratio";
    let run = || -> Result<Check, Error> {
        let h = HValue::new(0.1)?;
        let copts = CompareOptions::for_dim(1);
        let g = make_grid(1, copts.half_width, copts.points_per_axis)?;
        let one = AmplitudeSpec::one(1)?;
        let (s1, s2) = (PhaseSpec::identity(1)?, PhaseSpec::scaled_identity(1, 2.0)?);
        let spec1 = FioSpec::matched(s1.clone(), one.clone(), h, &g)?;
        let spec2 = FioSpec::matched(s2.clone(), one.clone(), h, &g)?;
        let asm = AssemblyOptions::default();
        let x1 = compose_ff_star(&spec1, &g, &g, &asm)?;
        let x2 = compose_ff_star(&spec2, &g, &g, &asm)?;
        let theta_limit = copts.trusted_fraction * spec1.theta.half_width;
        let xis: Vec<f64> = spec1.theta.indices_within(theta_limit).into_iter().map(|t| spec1.theta.node(t)[0]).collect();
        let rows: Vec<usize> =
            g.indices_within(copts.trusted_fraction * copts.half_width).into_iter().step_by(copts.row_stride).collect();
        let (mut vs_half, mut vs_pred, mut mean, mut count) = (0.0f64, 0.0f64, 0.0, 0usize);
        for &i in &rows {
            let r1 = WindowedRow::new(&x1, i, copts.window)?;
            let r2 = WindowedRow::new(&x2, i, copts.window)?;
            for &xi in &xis {
                let ratio = r2.eval(&[xi], h.get()) / r1.eval(&[xi], h.get());
                let x = r1.x[0];
                let p1 = predicted_symbol_at(&s1, &one, Side::FfStar, &[x], &[xi], &[xi], opts.det)?;
                let p2 = predicted_symbol_at(&s2, &one, Side::FfStar, &[x], &[xi], &[0.5 * xi], opts.det)?;
                let predicted = p2 / p1;
                vs_half = vs_half.max((ratio - 0.5).norm() / 0.5);
                vs_pred = vs_pred.max((ratio - predicted).norm() / predicted);
                mean += ratio.re;
                count += 1;
            }
        }
        let worst = vs_half.max(vs_pred);
        Ok(Check {
            id: "AC5".into(),
            name: name.into(),
            pass: worst <= 0.05,
            measured: worst,
            expected: expected.into(),
            tolerance: 0.05,
            detail: json!({
                "h": h.get(),
                "samples": count,
                "mean_ratio": mean / count as f64,
                "max_deviation_from_half": vs_half,
                "max_deviation_from_predicted": vs_pred,
                "det_convention": opts.det,
            }),
        })
    };
    run().unwrap_or_else(|e| failed("AC5", name, expected, 0.05, e))
}

fn uniform_boundedness() -> Check {
    let name = "uniform boundedness";
    let expected = "max_h ||F_h|| <= (gamma Q_k)^(1/2) for m in {0, -1}; ||F_h|| <= 1.05 for m = -1";
    let run = || -> Result<Check, Error> {
        let opts = CvBoundOptions::for_dim(1)?;
        let h_list = [1.0, 0.5, 0.1];
        let s = PhaseSpec::identity(1)?;
        let r0 = hfio_core::calculus::cv_bound_check(&s, &AmplitudeSpec::lambda_power(1, 0.0)?, &h_list, &opts)?;
        let r1 = hfio_core::calculus::cv_bound_check(&s, &AmplitudeSpec::lambda_power(1, -1.0)?, &h_list, &opts)?;
        let max1 = r1.norms.iter().copied().fold(0.0, f64::max);
        Ok(Check {
            id: "AC6".into(),
            name: name.into(),
            pass: r0.pass && r1.pass && max1 <= 1.05,
            measured: max1,
            expected: expected.into(),
            tolerance: 1.05,
            detail: json!({ "m=0": r0, "m=-1": r1 }),
        })
    };
    run().unwrap_or_else(|e| failed("AC6", name, expected, 1.05, e))
}

fn compactness(opts: &SuiteOptions) -> Check {
    let name = "compactness evidence";
    let expected = "strictly decreasing interior s_j, s50/s1 <= 0.2 at N=512, decay exponent stable within 10% \
                    under grid doubling, truncation curve monotone to 0, flat spectrum for a = 1";
    let run = || -> Result<Check, Error> {
        let h = HValue::new(0.5)?;
        let lam = AmplitudeSpec::lambda_power(1, -1.0)?;
        let s = PhaseSpec::identity(1)?;
        let g = grid_512();
        let spec = FioSpec::matched(s.clone(), lam.clone(), h, &g)?;
        let m = assemble(&spec, &g, &g, &AssemblyOptions::default())?;
        let r = spectrum(&m)?;
        let sv = &r.singular_values;
        let decreasing = r.interior().windows(2).all(|w| w[1] < w[0]);
        let ratio50 = sv[49] / sv[0];

        // Doubled grid, same θ box: finer spacing on the matched θ lattice of the fine grid.
        let g2 = make_grid(1, 12.0, 1024)?;
        let fine = hfio_core::operator::matched_theta_grid(h, &g2)?;
        let keep = (spec.theta.half_width / fine.spacing() + 1e-9).floor() as usize;
        let theta2 = Grid::centered(1, fine.spacing(), keep)?;
        let spec2 = FioSpec::new(s.clone(), lam.clone(), h, theta2)?;
        let r2 = spectrum(&assemble(&spec2, &g2, &g2, &AssemblyOptions::default())?)?;
        let (p1, p2) = match (&r.decay_fit, &r2.decay_fit) {
            (Some(a), Some(b)) => (a.exponent, b.exponent),
            _ => return Err(Error::Inconclusive("decay fit needs more interior modes".into())),
        };
        let stability = (p2 - p1).abs() / p1.abs();

        let rank = r.numerical_rank;
        let ranks: Vec<usize> = (0..rank).step_by(8).chain(std::iter::once(rank)).collect();
        let curve = rank_truncation_curve(&m.l2_faithful(), &ranks)?;
        let monotone = curve.windows(2).all(|w| w[1].error <= w[0].error);
        let reaches_zero = curve.last().is_some_and(|p| p.error <= 1e-8 * sv[0]);
        let direct_ok = curve.iter().filter_map(|p| p.direct.map(|d| (d - p.error).abs() <= 1e-8 * sv[0])).all(|b| b);

        let flat = spectrum(&assemble(
            &FioSpec::matched(s, AmplitudeSpec::one(1)?, h, &g)?,
            &g,
            &g,
            &AssemblyOptions::default(),
        )?)?;
        let contrast = flat.verdict == SpectralVerdict::NoncompactEvidence;

        let pass = decreasing
            && ratio50 <= 0.2
            && stability <= 0.1
            && monotone
            && reaches_zero
            && direct_ok
            && contrast
            && r.verdict == SpectralVerdict::CompactEvidence;
        let top = singular_values(&m.l2_faithful())?;
        let top_change = (0..10).map(|j| (top[j] - r2.singular_values[j]).abs() / top[j]).fold(0.0, f64::max);
        Ok(Check {
            id: "AC7".into(),
            name: name.into(),
            pass,
            measured: ratio50,
            expected: expected.into(),
            tolerance: 0.2,
            detail: json!({
                "h": h.get(),
                "seed": opts.seed,
                "strictly_decreasing": decreasing,
                "s50_over_s1": ratio50,
                "decay_exponent_n512": p1,
                "decay_exponent_n1024": p2,
                "exponent_relative_change": stability,
                "top10_relative_change": top_change,
                "numerical_rank": rank,
                "truncation_monotone": monotone,
                "truncation_reaches_zero": reaches_zero,
                "truncation_direct_agrees": direct_ok,
                "verdict": r.verdict,
                "packet_norms": r.packet_norms,
                "contrast_verdict": flat.verdict,
                "contrast_interior_range": [flat.interior().last(), flat.operator_norm],
            }),
        })
    };
    run().unwrap_or_else(|e| failed("AC7", name, expected, 0.2, e))
}

fn cutoff_independence() -> Check {
    let name = "cutoff independence";
    let expected = "Gaussian and cosine-bump cutoffs agree to <= 1e-6 relative on three oracles";
    let run = || -> Result<Check, Error> {
        let gauss = CutoffSpec::default();
        let bump = CutoffSpec::with_shape(CutoffShape::CosineBump);
        let mut rows = Vec::new();
        let mut worst = 0.0f64;
        let mut record = |label: &str, r: hfio_core::oscillatory::CutoffIndependence| {
            let rel = r.discrepancy / r.value_a.norm();
            worst = worst.max(rel);
            rows.push(json!({ "oracle": label, "gaussian": r.value_a, "cosine_bump": r.value_b, "relative": rel }));
        };
        let g = make_grid(1, 8.0, 1601)?;
        record(
            "gaussian-linear",
            cutoff_independence_test(
                &|t: &[f64]| 2.0 * t[0],
                &|t: &[f64]| Complex64::new((-t[0] * t[0]).exp(), 0.0),
                HValue::new(1.0)?,
                &g,
                &gauss,
                &bump,
                &IbpSpec::default(),
            )?,
        );
        let g = make_grid(1, 20.0, 10001)?;
        record(
            "fresnel",
            cutoff_independence_test(
                &|t: &[f64]| 0.5 * t[0] * t[0],
                &|_: &[f64]| Complex64::new(1.0, 0.0),
                HValue::new(0.5)?,
                &g,
                &gauss,
                &bump,
                &IbpSpec::enabled(),
            )?,
        );
        let g = make_grid(2, 6.0, 241)?;
        let (g6, b6) = (CutoffSpec { sigma0: 6.0, ..gauss }, CutoffSpec { sigma0: 6.0, ..bump });
        record(
            "gaussian-2d",
            cutoff_independence_test(
                &|t: &[f64]| t[0] - 0.5 * t[1],
                &|t: &[f64]| Complex64::new((-t[0] * t[0] - t[1] * t[1]).exp(), 0.0),
                HValue::new(1.0)?,
                &g,
                &g6,
                &b6,
                &IbpSpec::default(),
            )?,
        );
        Ok(Check {
            id: "AC8".into(),
            name: name.into(),
            pass: worst <= 1e-6,
            measured: worst,
            expected: expected.into(),
            tolerance: 1e-6,
            detail: json!({ "oracles": rows }),
        })
    };
    run().unwrap_or_else(|e| failed("AC8", name, expected, 1e-6, e))
}

fn hypothesis_validation(opts: &SuiteOptions) -> Check {
    let name = "hypothesis validation";
    let expected = "invertible B passes G1-G3 and H-via-lemma; B=0 fails G3 with witness; C2 = 1/|B| to 1e-6";
    let run = || -> Result<Check, Error> {
        let box1 = make_grid(1, 10.0, 41)?;
        let box2 = make_grid(2, 10.0, 11)?;
        let z = [[0.0; 2]; 2];
        let cases = [
            ("quadratic-1d", QuadraticPhase::new(1, [[1.0, 0.0], [0.0, 0.0]], [[2.0, 0.0], [0.0, 0.0]], [[-0.5, 0.0], [0.0, 0.0]])?, box1),
            (
                "quadratic-2d",
                QuadraticPhase::new(2, [[1.0, 0.5], [0.5, 0.0]], [[2.0, 1.0], [0.0, 1.0]], [[0.0, 0.0], [0.0, 1.0]])?,
                box2,
            ),
        ];
        let mut rows = Vec::new();
        let mut ok = true;
        for (label, q, bx) in cases {
            let s = PhaseSpec::quadratic(label, q, None)?;
            let g = validate_g(&s, &bx, 2)?;
            let hv = validate_h_via_lemma(&s, &bx)?;
            let pass = g.all_pass() && hv.check("H-via-lemma").is_some_and(|c| c.verdict == Verdict::Pass);
            ok &= pass;
            rows.push(json!({ "phase": label, "G": g.checks, "H": hv.checks, "pass": pass }));
        }
        let degenerate = PhaseSpec::quadratic("degenerate", QuadraticPhase::new(1, [[1.0, 0.0], [0.0, 0.0]], z, z)?, None)?;
        let d = validate_g(&degenerate, &box1, 2)?;
        let g3 = d.check("G3").cloned();
        let g3_fails = g3.as_ref().is_some_and(|c| c.verdict == Verdict::Fail && c.witness.is_some());

        let mut c2_err = 0.0f64;
        let mut c2_rows = Vec::new();
        for (b, bx) in [(2.0, box1), (-3.0, box1), (0.5, box1)] {
            let s = PhaseSpec::quadratic("bilinear", QuadraticPhase::bilinear(1, [[b, 0.0], [0.0, 0.0]])?, None)?;
            let r = check_separation(&s, &bx, 500, opts.seed)?;
            let e = (r.c2 - 1.0 / f64::abs(b)).abs();
            c2_err = c2_err.max(e);
            c2_rows.push(json!({ "b": b, "c2": r.c2, "expected": 1.0 / f64::abs(b) }));
        }
        let diag = PhaseSpec::quadratic("bilinear-2d", QuadraticPhase::bilinear(2, [[2.0, 0.0], [0.0, 2.0]])?, None)?;
        let r = check_separation(&diag, &box2, 500, opts.seed)?;
        c2_err = c2_err.max((r.c2 - 0.5).abs());
        c2_rows.push(json!({ "b": [[2.0, 0.0], [0.0, 2.0]], "c2": r.c2, "expected": 0.5 }));

        Ok(Check {
            id: "AC9".into(),
            name: name.into(),
            pass: ok && g3_fails && c2_err <= 1e-6,
            measured: c2_err,
            expected: expected.into(),
            tolerance: 1e-6,
            detail: json!({ "invertible": rows, "degenerate_G3": g3, "separation": c2_rows }),
        })
    };
    run().unwrap_or_else(|e| failed("AC9", name, expected, 1e-6, e))
}

/// Runtime of the preceding checks plus a determinism rerun of AC1 and AC9.
fn full_suite(previous: &[Check], elapsed: f64, opts: &SuiteOptions) -> Check {
    let mut same = true;
    for id in ["AC1", "AC9"] {
        let first = previous.iter().find(|c| c.id == id).map(|c| serde_json::to_string(c).expect("serializable"));
        let again = run_check(id, opts).map(|(c, _)| serde_json::to_string(&c).expect("serializable"));
        same &= first.is_some() && first == again;
    }
    Check {
        id: "AC10".into(),
        name: "full suite".into(),
        pass: same && elapsed <= SUITE_TIME_LIMIT,
        measured: if same { 1.0 } else { 0.0 },
        expected: "suite completes within 600 s; reruns under the same seed are identical".into(),
        tolerance: SUITE_TIME_LIMIT,
        detail: json!({ "deterministic_rerun": same, "checks_before": previous.len() }),
    }
}
