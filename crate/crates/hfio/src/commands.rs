//! Subcommand implementations. Each returns the process exit code on success.

use std::path::{Path, PathBuf};

use hfio_core::calculus::{
    compare_symbols, cv_bound_check, extract_symbol, CompareOptions, CvBoundOptions, ExtractOptions, Side,
};
use hfio_core::numeric::ScalarField;
use hfio_core::operator::{apply, assemble, compose_ff_star, compose_fstar_f};
use hfio_core::phase::{validate_g, validate_h_via_lemma, ValidationReport};
use hfio_core::spectral::{combined_verdict, spectrum, uniformity_scan, SpectralVerdict, SpectrumReport};
use hfio_core::symbols::{check_membership, estimate_seminorms};
use serde::Serialize;

use crate::config::{assembly_options, ConfigError, RunConfig};
use crate::io::{self, IoError, Meta};
use crate::suite::{self, bundled_functions, SuiteOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SCIENTIFIC: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] IoError),
    #[error("{0}")]
    Compute(#[from] hfio_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_USAGE,
            CliError::Compute(e) => {
                let mut e = e;
                while let hfio_core::Error::AtH { source, .. } = e {
                    e = source;
                }
                if matches!(e, hfio_core::Error::TooLarge { .. }) {
                    EXIT_USAGE
                } else {
                    EXIT_SCIENTIFIC
                }
            }
        }
    }
}

/// Everything a subcommand needs: the effective config, its output directory and provenance.
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub meta: Meta,
}

impl Context {
    pub fn new(config: RunConfig, out: Option<PathBuf>) -> Result<Self, CliError> {
        let out = out.or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("hfio-out"));
        std::fs::create_dir_all(&out)
            .map_err(|source| IoError::File { path: out.display().to_string(), source })?;
        let meta = Meta::new(config.hash(), config.seed);
        Ok(Self { config, out, meta })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn json<T: Serialize>(&self, name: &str, report: &T) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        io::write_json(&p, &self.meta, report)?;
        Ok(p)
    }
}

fn h_tag(h: f64) -> String {
    format!("h{h}")
}

#[derive(Debug, Serialize)]
struct ValidationOutput {
    growth: ValidationReport,
    lemma: ValidationReport,
    all_pass: bool,
}

pub fn validate(ctx: &Context) -> Result<i32, CliError> {
    let s = ctx.config.phase_spec()?;
    let bx = ctx.config.box_grid();
    let growth = validate_g(&s, &bx, 2)?;
    let lemma = validate_h_via_lemma(&s, &bx)?;
    let all_pass = growth.all_pass() && lemma.all_pass();
    ctx.json("validation.json", &ValidationOutput { growth, lemma, all_pass })?;
    Ok(if all_pass { EXIT_OK } else { EXIT_SCIENTIFIC })
}

pub fn seminorms(ctx: &Context) -> Result<i32, CliError> {
    let a = ctx.config.amplitude_spec()?;
    let bx = ctx.config.box_grid();
    let k = ctx.config.k().min(hfio_core::numeric::MAX_DERIVATIVE_ORDER);
    let table = estimate_seminorms(&a, &bx, k)?;
    let membership = check_membership(&a, &bx, k, 1e6)?;
    ctx.json("seminorms.json", &serde_json::json!({ "amplitude": a.name, "table": table, "membership": membership }))?;
    Ok(if membership.is_member() { EXIT_OK } else { EXIT_SCIENTIFIC })
}

pub fn kernel(ctx: &Context) -> Result<i32, CliError> {
    let g = ctx.config.grid();
    let opts = assembly_options()?;
    let mut clean = true;
    for &h in &ctx.config.h_list {
        let spec = ctx.config.fio_spec(h)?;
        let m = assemble(&spec, &g, &g, &opts).map_err(|e| e.at_h(h))?;
        clean &= m.meta.unconverged_entries == 0;
        io::write_kernel(&ctx.out, &format!("kernel_{}", h_tag(h)), &ctx.meta, &m)?;
    }
    Ok(if clean { EXIT_OK } else { EXIT_SCIENTIFIC })
}

fn input_field(ctx: &Context) -> Result<ScalarField, CliError> {
    match &ctx.config.input {
        Some(p) => Ok(io::read_field(p)?),
        None => Ok(bundled_functions(ctx.config.grid()).swap_remove(0).1),
    }
}

pub fn apply_cmd(ctx: &Context) -> Result<i32, CliError> {
    let phi = input_field(ctx)?;
    if phi.grid != ctx.config.grid() {
        return Err(ConfigError(format!(
            "input grid ({} points, half width {}) differs from the configured grid",
            phi.grid.points_per_axis, phi.grid.half_width
        ))
        .into());
    }
    let opts = assembly_options()?;
    io::write_field(&ctx.path("input.csv"), &ctx.meta, &phi)?;
    for &h in &ctx.config.h_list {
        let spec = ctx.config.fio_spec(h)?;
        let m = assemble(&spec, &phi.grid, &phi.grid, &opts).map_err(|e| e.at_h(h))?;
        let out = apply(&m, &phi)?;
        io::write_field(&ctx.path(&format!("output_{}.csv", h_tag(h))), &ctx.meta, &out)?;
    }
    Ok(EXIT_OK)
}

pub fn compose(ctx: &Context) -> Result<i32, CliError> {
    let c = &ctx.config;
    let (s, a) = (c.phase_spec()?, c.amplitude_spec()?);
    let mut h_list = c.h_list.clone();
    h_list.sort_by(|p, q| q.total_cmp(p));
    h_list.dedup();
    let opts = CompareOptions {
        points_per_axis: c.grid.points,
        half_width: c.grid.half_width,
        window: c.tolerances.window,
        trusted_fraction: c.tolerances.trusted_fraction,
        k: c.k(),
        gamma: c.gamma(),
        max_entries: assembly_options()?.max_entries,
        ..CompareOptions::for_dim(c.dim)
    };
    let report = compare_symbols(&s, &a, c.side, &h_list, &opts)?;
    ctx.json("comparison.json", &report)?;

    // Extracted symbol on the (x, ξ) grid at the smallest h, trusted rows only.
    let h = *h_list.last().expect("non-empty");
    let g = c.grid();
    let spec = c.fio_spec(h)?;
    let asm = assembly_options()?;
    let m = match c.side {
        Side::FfStar => compose_ff_star(&spec, &g, &g, &asm)?,
        Side::FStarF => compose_fstar_f(&spec, &g, &g, &asm)?,
    };
    let rows = g.indices_within(opts.trusted_fraction * opts.half_width).into_iter().step_by(opts.row_stride).collect();
    let sym = extract_symbol(&m, c.side, &ExtractOptions { window: opts.window, xi_points: 65, rows: Some(rows) })?;
    io::write_symbol(&ctx.path(&format!("symbol_{}.csv", h_tag(h))), &ctx.meta, &sym)?;
    Ok(if report.pass { EXIT_OK } else { EXIT_SCIENTIFIC })
}

#[derive(Debug, Serialize)]
struct SpectrumOutput {
    reports: Vec<SpectrumReport>,
    uniformity: hfio_core::spectral::UniformityScan,
    cv_bound: Option<hfio_core::calculus::CvBoundReport>,
    verdict: SpectralVerdict,
}

pub fn spectrum_cmd(ctx: &Context) -> Result<i32, CliError> {
    let c = &ctx.config;
    let (s, a) = (c.phase_spec()?, c.amplitude_spec()?);
    let g = c.grid();
    let asm = assembly_options()?;
    let mut reports = Vec::new();
    for &h in &c.h_list {
        let spec = c.fio_spec(h)?;
        let m = assemble(&spec, &g, &g, &asm).map_err(|e| e.at_h(h))?;
        let r = spectrum(&m).map_err(|e| e.at_h(h))?;
        io::write_singular_values(&ctx.path(&format!("singular_values_{}.csv", h_tag(h))), &ctx.meta, &r.singular_values)?;
        reports.push(r);
    }
    let cv_bound = if a.claimed_order <= 0.0 {
        let opts = CvBoundOptions {
            k: c.k(),
            gamma: c.gamma(),
            points_per_axis: c.grid.points,
            half_width: c.grid.half_width,
            max_entries: asm.max_entries,
            ..CvBoundOptions::for_dim(c.dim)?
        };
        Some(cv_bound_check(&s, &a, &c.h_list, &opts)?)
    } else {
        None
    };
    let (verdict, uniformity, ok) = if a.claimed_order <= 0.0 {
        let scan = uniformity_scan(&s, &a, &g, &c.h_list, cv_bound.as_ref().map(|b| b.bound), &asm)?;
        let ok = scan.pass;
        (combined_verdict(&reports, &scan), scan, ok)
    } else {
        let norms: Vec<f64> = reports.iter().map(|r| r.operator_norm).collect();
        let max_norm = norms.iter().copied().fold(0.0, f64::max);
        let scan = hfio_core::spectral::UniformityScan {
            h: c.h_list.clone(),
            norms,
            max_norm,
            bound: f64::INFINITY,
            pass: false,
        };
        (SpectralVerdict::NoncompactEvidence, scan, false)
    };
    ctx.json("spectrum.json", &SpectrumOutput { reports, uniformity, cv_bound, verdict })?;
    Ok(if ok { EXIT_OK } else { EXIT_SCIENTIFIC })
}

pub fn suite_cmd(out: &Path, opts: &SuiteOptions) -> Result<i32, CliError> {
    std::fs::create_dir_all(out).map_err(|source| IoError::File { path: out.display().to_string(), source })?;
    let result = suite::run_suite(opts);
    for c in &result.checks {
        println!("{} {:<26} {}  measured={:.6e}", c.id, c.name, if c.pass { "PASS" } else { "FAIL" }, c.measured);
    }
    let meta = Meta::new("suite", opts.seed);
    io::write_json(&out.join("suite.json"), &meta, &result)?;
    Ok(if result.pass { EXIT_OK } else { EXIT_SCIENTIFIC })
}
