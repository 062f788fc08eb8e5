//! Singular values of discretized F_h: operator norm, decay, finite-rank
//! approximation and uniformity in h.

use serde::{Deserialize, Serialize};

use crate::dense::{power_norm, singular_values, svd, CMatrix};
use crate::error::{Error, Result};
use crate::numeric::{make_grid, Grid, HValue, ScalarField};
use crate::operator::{apply, assemble, AssemblyOptions, FioSpec, KernelMatrix};
use crate::phase::{PhaseSpec, DEFAULT_SEED, GROWTH_TREND_LIMIT};
use crate::prelude::*;
use crate::symbols::AmplitudeSpec;

/// Singular values below this fraction of s₁ count as numerically zero.
pub const RANK_TOLERANCE: f64 = 1e-8;
/// Decay exponents at or below this value count as compact evidence.
pub const DECAY_THRESHOLD: f64 = -0.5;
/// The decay fit uses modes j ∈ [r·lo, r·hi) of the numerical rank r.
pub const FIT_RANGE: (f64, f64) = (0.25, 0.75);
pub const POWER_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralVerdict {
    BoundedUniform,
    CompactEvidence,
    NoncompactEvidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub residual: f64,
    pub first_mode: usize,
    pub last_mode: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub h: f64,
    pub singular_values: Vec<f64>,
    pub operator_norm: f64,
    /// s₁ by power iteration.
    pub power_norm: f64,
    pub numerical_rank: usize,
    /// (r, s_{r+1}) for r = 0..rank.
    pub tail_profile: Vec<(usize, f64)>,
    pub decay_fit: Option<DecayFit>,
    pub decay_threshold: f64,
    /// ‖F_h u_c‖ for normalized Gaussian packets centred at 0, L/4 and L/2.
    pub packet_norms: Vec<(f64, f64)>,
    pub verdict: SpectralVerdict,
}

impl SpectrumReport {
    /// Singular values of modes j < numerical rank.
    pub fn interior(&self) -> &[f64] {
        &self.singular_values[..self.numerical_rank]
    }
}

/// Largest singular value of the L²-faithful matrix.
pub fn operator_norm(m: &KernelMatrix) -> Result<f64> {
    Ok(singular_values(&m.l2_faithful())?.first().copied().unwrap_or(0.0))
}

/// Number of singular values above RANK_TOLERANCE·s₁.
pub fn numerical_rank(s: &[f64]) -> usize {
    let s1 = s.first().copied().unwrap_or(0.0);
    s.iter().filter(|&&v| v > RANK_TOLERANCE * s1).count()
}

/// Least-squares exponent p in s_j ∝ (j+1)^p over the middle of the numerical rank.
pub fn decay_fit(s: &[f64]) -> Option<DecayFit> {
    let r = numerical_rank(s);
    let lo = (FIT_RANGE.0 * r as f64) as usize;
    let hi = (FIT_RANGE.1 * r as f64) as usize;
    if hi < lo + 3 {
        return None;
    }
    let xs: Vec<f64> = (lo..hi).map(|j| ((j + 1) as f64).ln()).collect();
    let ys: Vec<f64> = (lo..hi).map(|j| s[j].ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let exponent = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx;
    let residual = (xs.iter().zip(&ys).map(|(x, y)| (y - my - exponent * (x - mx)).powi(2)).sum::<f64>() / n).sqrt();
    Some(DecayFit { exponent, residual, first_mode: lo, last_mode: hi })
}

/// Unit-norm Gaussian packet e^{−|x−c|²/2} on a grid, c on the first axis.
pub fn packet(grid: &Grid, center: f64) -> ScalarField {
    let f = ScalarField::from_fn(*grid, |x| {
        let d2 = (x[0] - center).powi(2) + x[1..].iter().map(|v| v * v).sum::<f64>();
        Complex64::new((-0.5 * d2).exp(), 0.0)
    });
    let nrm = f.l2_norm();
    ScalarField { grid: f.grid, values: f.values.iter().map(|v| v / nrm).collect() }
}

/// L² norms of M applied to packets centred at 0, L/4 and L/2.
pub fn packet_norms(m: &KernelMatrix) -> Result<Vec<(f64, f64)>> {
    let l = m.source.half_width;
    [0.0, 0.25 * l, 0.5 * l].iter().map(|&c| Ok((c, apply(m, &packet(&m.source, c))?.l2_norm()))).collect()
}

/// Full SVD report of an assembled F_h.
pub fn spectrum(m: &KernelMatrix) -> Result<SpectrumReport> {
    let a = m.l2_faithful();
    let s = singular_values(&a)?;
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::DecompositionFailure);
    }
    let operator_norm = s.first().copied().unwrap_or(0.0);
    let pnorm = power_norm(&a, POWER_ITERATIONS, DEFAULT_SEED);
    let rank = numerical_rank(&s);
    let tail_profile = (0..rank).map(|r| (r, s.get(r).copied().unwrap_or(0.0))).collect();
    let fit = decay_fit(&s);
    let packets = packet_norms(m)?;
    let decreasing = packets.windows(2).all(|w| w[1].1 < w[0].1);
    let compact = fit.as_ref().is_some_and(|f| f.exponent <= DECAY_THRESHOLD) && decreasing;
    Ok(SpectrumReport {
        h: m.h,
        singular_values: s,
        operator_norm,
        power_norm: pnorm,
        numerical_rank: rank,
        tail_profile,
        decay_fit: fit,
        decay_threshold: DECAY_THRESHOLD,
        packet_norms: packets,
        verdict: if compact { SpectralVerdict::CompactEvidence } else { SpectralVerdict::NoncompactEvidence },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationPoint {
    pub rank: usize,
    /// s_{r+1}.
    pub error: f64,
    /// ‖M − M_r‖ from an explicit truncated SVD, for the verified ranks.
    pub direct: Option<f64>,
}

/// (r, ‖M − M_r‖₂) for each requested r; three of them are checked against an explicit residual.
pub fn rank_truncation_curve(m: &CMatrix, ranks: &[usize]) -> Result<Vec<TruncationPoint>> {
    let size = m.nrows().min(m.ncols());
    if let Some(&r) = ranks.iter().find(|&&r| r >= size) {
        return Err(Error::InvalidArgument(format!("rank {r} ≥ matrix size {size}")));
    }
    let d = svd(m)?;
    let pick: Vec<usize> = match ranks.len() {
        0 => Vec::new(),
        1..=3 => ranks.to_vec(),
        l => vec![ranks[0], ranks[l / 2], ranks[l - 1]],
    };
    ranks
        .iter()
        .map(|&r| {
            let direct = if pick.contains(&r) {
                let mut mr = CMatrix::zeros(m.nrows(), m.ncols());
                for k in 0..r {
                    let s = Complex64::new(d.singular_values[k], 0.0);
                    mr += d.u.column(k) * d.v_t.row(k) * s;
                }
                Some(singular_values(&(m - mr))?.first().copied().unwrap_or(0.0))
            } else {
                None
            };
            Ok(TruncationPoint { rank: r, error: d.singular_values[r], direct })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityScan {
    pub h: Vec<f64>,
    pub norms: Vec<f64>,
    pub max_norm: f64,
    pub bound: f64,
    pub pass: bool,
}

/// ‖F_h‖ for each h on a fixed grid; pass iff the max is within `bound`
/// (1.1 times the norm at the first h when absent).
pub fn uniformity_scan(
    s: &PhaseSpec,
    a: &AmplitudeSpec,
    grid: &Grid,
    h_list: &[f64],
    bound: Option<f64>,
    opts: &AssemblyOptions,
) -> Result<UniformityScan> {
    if a.claimed_order > 0.0 {
        return Err(Error::InvalidArgument(format!("amplitude order {} > 0", a.claimed_order)));
    }
    if h_list.is_empty() {
        return Err(Error::InvalidArgument("empty h list".into()));
    }
    let mut norms = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let run = || -> Result<f64> {
            let spec = FioSpec::matched(s.clone(), a.clone(), HValue::new(h)?, grid)?;
            operator_norm(&assemble(&spec, grid, grid, opts)?)
        };
        norms.push(run().map_err(|e| e.at_h(h))?);
    }
    let max_norm = norms.iter().copied().fold(0.0, f64::max);
    let bound = bound.unwrap_or(1.1 * norms[0]);
    Ok(UniformityScan { h: h_list.to_vec(), norms, max_norm, bound, pass: max_norm <= bound })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxGrowth {
    pub half_widths: Vec<f64>,
    pub norms: Vec<f64>,
    pub unbounded_trend: bool,
}

/// ‖F_h‖ on boxes of growing half-width at fixed spacing; an unbounded trend
/// is reported when the last norm exceeds the first by more than the trend limit.
pub fn box_growth(
    s: &PhaseSpec,
    a: &AmplitudeSpec,
    h: HValue,
    half_widths: &[f64],
    spacing: f64,
    opts: &AssemblyOptions,
) -> Result<BoxGrowth> {
    let mut norms = Vec::with_capacity(half_widths.len());
    for &l in half_widths {
        let g = make_grid(s.dim, l, (2.0 * l / spacing).round() as usize + 1)?;
        let spec = FioSpec::matched(s.clone(), a.clone(), h, &g)?;
        norms.push(operator_norm(&assemble(&spec, &g, &g, opts)?)?);
    }
    let unbounded_trend = match (norms.first(), norms.last()) {
        (Some(&f), Some(&l)) if norms.len() > 1 => l > GROWTH_TREND_LIMIT * f,
        _ => false,
    };
    Ok(BoxGrowth { half_widths: half_widths.to_vec(), norms, unbounded_trend })
}

/// Per-h spectra combined: bounded-uniform when the scan passes, otherwise the weakest single verdict.
pub fn combined_verdict(reports: &[SpectrumReport], scan: &UniformityScan) -> SpectralVerdict {
    if reports.iter().all(|r| r.verdict == SpectralVerdict::CompactEvidence) {
        SpectralVerdict::CompactEvidence
    } else if scan.pass {
        SpectralVerdict::BoundedUniform
    } else {
        SpectralVerdict::NoncompactEvidence
    }
}
