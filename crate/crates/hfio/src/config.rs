//! Run configuration: a single JSON document, schema-checked before any computation.

use std::path::{Path, PathBuf};

use hfio_core::calculus::{default_gamma, default_k, Side, DEFAULT_WINDOW, TRUSTED_FRACTION};
use hfio_core::numeric::{make_grid, Grid, HValue};
use hfio_core::operator::{AssemblyOptions, FioSpec, DEFAULT_MAX_ENTRIES};
use hfio_core::phase::{PhaseSpec, QuadraticPhase};
use hfio_core::symbols::AmplitudeSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variable overriding the matrix-entry cap.
pub const MAX_MATRIX_ENV: &str = "FIO_MAX_MATRIX";
pub const DEFAULT_SEED: u64 = hfio_core::phase::DEFAULT_SEED;

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhasePreset {
    /// S = x·θ
    Identity,
    /// S = x·θ + |x|²/2
    Chirp,
    /// S = x·θ + |θ|²/2
    Fresnel,
    /// S = x·θ − |θ|²/2
    Kinetic,
    /// S = 2x·θ
    Double,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticConfig {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhaseConfig {
    Preset {
        preset: PhasePreset,
    },
    Quadratic {
        quadratic: QuadraticConfig,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudePreset {
    One,
    LambdaM,
    GaussianTheta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeConfig {
    pub preset: AmplitudePreset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub half_width: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub cutoff_tol: f64,
    pub k_max: usize,
    pub window: f64,
    pub trusted_fraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { cutoff_tol: 1e-8, k_max: 20, window: DEFAULT_WINDOW, trusted_fraction: TRUSTED_FRACTION }
    }
}

fn default_dim() -> usize {
    1
}

fn default_grid() -> GridConfig {
    GridConfig { half_width: 12.0, points: 512 }
}

fn default_box() -> GridConfig {
    GridConfig { half_width: 10.0, points: 41 }
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_side() -> Side {
    Side::FfStar
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub phase: PhaseConfig,
    pub amplitude: AmplitudeConfig,
    pub h_list: Vec<f64>,
    #[serde(default = "default_grid")]
    pub grid: GridConfig,
    /// Explicit θ grid; matched to the y grid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<GridConfig>,
    #[serde(default = "default_box")]
    pub validation_box: GridConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_side")]
    pub side: Side,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Input field CSV for `apply`; the bundled Gaussian when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| err(format!("malformed JSON: {e}")))?;
        if raw.get("amplitude").and_then(|a| a.get("quadratic")).is_some() {
            return Err(err("quadratic-family amplitudes are not supported; use one, lambda_m or gaussian_theta"));
        }
        let cfg: RunConfig = serde_json::from_value(raw).map_err(|e| err(format!("invalid configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dim != 1 && self.dim != 2 {
            return Err(err(format!("dim must be 1 or 2, got {}", self.dim)));
        }
        if self.h_list.is_empty() {
            return Err(err("h_list must not be empty"));
        }
        if let Some(h) = self.h_list.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
            return Err(err(format!("h must be a positive real, got {h}")));
        }
        for (name, g) in [("grid", self.grid), ("validation_box", self.validation_box)]
            .into_iter()
            .chain(self.theta.map(|t| ("theta", t)))
        {
            make_grid(self.dim, g.half_width, g.points).map_err(|e| err(format!("{name}: {e}")))?;
        }
        let t = &self.tolerances;
        if !(t.cutoff_tol > 0.0 && t.window > 0.0 && t.trusted_fraction > 0.0 && t.trusted_fraction <= 1.0) {
            return Err(err("tolerances must be positive (trusted_fraction in (0, 1])"));
        }
        if self.k.is_some_and(|k| k > hfio_core::numeric::MAX_DERIVATIVE_ORDER) {
            return Err(err("k must be at most 4"));
        }
        if self.gamma.is_some_and(|g| !(g > 0.0)) {
            return Err(err("gamma must be positive"));
        }
        if self.amplitude.preset == AmplitudePreset::LambdaM && self.amplitude.m.is_none() {
            return Err(err("amplitude lambda_m needs an exponent m"));
        }
        if self.amplitude.preset != AmplitudePreset::LambdaM && self.amplitude.m.is_some() {
            return Err(err("exponent m only applies to lambda_m"));
        }
        self.phase_spec()?;
        Ok(())
    }

    pub fn phase_spec(&self) -> Result<PhaseSpec, ConfigError> {
        let n = self.dim;
        let built = match &self.phase {
            PhaseConfig::Preset { preset } => match preset {
                PhasePreset::Identity => PhaseSpec::identity(n),
                PhasePreset::Chirp => PhaseSpec::chirp(n),
                PhasePreset::Fresnel => PhaseSpec::fresnel(n),
                PhasePreset::Kinetic => PhaseSpec::kinetic(n),
                PhasePreset::Double => PhaseSpec::scaled_identity(n, 2.0),
            },
            PhaseConfig::Quadratic { quadratic } => {
                let m = |name: &str, v: &Vec<Vec<f64>>| -> Result<[[f64; 2]; 2], ConfigError> {
                    if v.len() != n || v.iter().any(|r| r.len() != n) {
                        return Err(err(format!("quadratic.{name} must be {n}×{n}")));
                    }
                    let mut out = [[0.0; 2]; 2];
                    for (i, row) in v.iter().enumerate() {
                        out[i][..n].copy_from_slice(row);
                    }
                    Ok(out)
                };
                let q = QuadraticPhase::new(n, m("a", &quadratic.a)?, m("b", &quadratic.b)?, m("c", &quadratic.c)?)
                    .map_err(|e| err(format!("quadratic phase: {e}")))?;
                PhaseSpec::quadratic("quadratic", q, quadratic.delta0)
            }
        };
        built.map_err(|e| err(format!("phase: {e}")))
    }

    pub fn amplitude_spec(&self) -> Result<AmplitudeSpec, ConfigError> {
        let n = self.dim;
        let a = match self.amplitude.preset {
            AmplitudePreset::One => AmplitudeSpec::one(n),
            AmplitudePreset::LambdaM => AmplitudeSpec::lambda_power(n, self.amplitude.m.unwrap_or(0.0)),
            AmplitudePreset::GaussianTheta => AmplitudeSpec::gaussian_theta(n),
        };
        a.map_err(|e| err(format!("amplitude: {e}")))
    }

    pub fn grid(&self) -> Grid {
        make_grid(self.dim, self.grid.half_width, self.grid.points).expect("validated")
    }

    pub fn box_grid(&self) -> Grid {
        make_grid(self.dim, self.validation_box.half_width, self.validation_box.points).expect("validated")
    }

    pub fn k(&self) -> usize {
        self.k.unwrap_or_else(|| default_k(self.dim))
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or_else(|| default_gamma(self.dim))
    }

    /// Operator description at one h, with the configured θ grid and cutoff tolerances.
    pub fn fio_spec(&self, h: f64) -> Result<FioSpec, ConfigError> {
        let hv = HValue::new(h).map_err(|e| err(e.to_string()))?;
        let (s, a) = (self.phase_spec()?, self.amplitude_spec()?);
        let mut spec = match self.theta {
            Some(t) => FioSpec::new(s, a, hv, make_grid(self.dim, t.half_width, t.points).expect("validated")),
            None => FioSpec::matched(s, a, hv, &self.grid()),
        }
        .map_err(|e| err(format!("operator: {e}")))?;
        spec.cutoff.tol = self.tolerances.cutoff_tol;
        spec.cutoff.k_max = self.tolerances.k_max;
        Ok(spec)
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("configuration serializes");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Assembly options honouring FIO_MAX_MATRIX.
pub fn assembly_options() -> Result<AssemblyOptions, ConfigError> {
    match std::env::var(MAX_MATRIX_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(|max_entries| AssemblyOptions { max_entries })
            .map_err(|_| err(format!("{MAX_MATRIX_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(AssemblyOptions { max_entries: DEFAULT_MAX_ENTRIES }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"phase": {"preset": "identity"}, "amplitude": {"preset": "one"}, "h_list": [0.5]}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.dim, 1);
        assert_eq!(c.grid, GridConfig { half_width: 12.0, points: 512 });
        assert_eq!(c.seed, DEFAULT_SEED);
        assert_eq!(c.k(), 3);
        assert_eq!(c.gamma(), 2.0);
    }

    #[test]
    fn rejects_unknown_keys_and_missing_h() {
        let e = RunConfig::parse(r#"{"phase": {"preset": "identity"}, "amplitude": {"preset": "one"}}"#).unwrap_err();
        assert!(e.0.contains("h_list"), "{e}");
        let bad = r#"{"phase": {"preset": "identity"}, "amplitude": {"preset": "one"}, "h_list": [1], "colour": 1}"#;
        assert!(RunConfig::parse(bad).is_err());
    }

    #[test]
    fn rejects_quadratic_family_amplitude() {
        let bad = r#"{"phase": {"preset": "identity"}, "amplitude": {"quadratic": {}}, "h_list": [1]}"#;
        assert!(RunConfig::parse(bad).unwrap_err().0.contains("quadratic-family"));
    }

    #[test]
    fn quadratic_phase_and_lambda_m() {
        let text = r#"{"phase": {"quadratic": {"a": [[1]], "b": [[2]], "c": [[0]]}},
                       "amplitude": {"preset": "lambda_m", "m": -1}, "h_list": [0.4, 0.2]}"#;
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.phase_spec().unwrap().as_quadratic().unwrap().det_b(), 2.0);
        assert_eq!(c.amplitude_spec().unwrap().claimed_order, -1.0);
        let asym = r#"{"phase": {"quadratic": {"a": [[1, 2], [0, 1]], "b": [[1, 0], [0, 1]], "c": [[0, 0], [0, 0]]}},
                       "dim": 2, "amplitude": {"preset": "one"}, "h_list": [1]}"#;
        assert!(RunConfig::parse(asym).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::parse(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
