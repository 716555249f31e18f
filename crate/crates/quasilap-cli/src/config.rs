//! Versioned, hand-editable experiment configuration.
//!
//! Every subcommand assembles an [`ExperimentConfig`] by loading an
//! optional `--config` TOML file, overlaying explicit command-line flags,
//! and filling experiment-specific defaults. The effective config is
//! validated, canonically serialized back into the artifact directory,
//! and hashed; the SHA-256 of that serialization is the run's identity.
//! Two runs with equal hashes produce byte-identical numeric outputs: the
//! only randomness anywhere is preset noise drawn from the `seed` field.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use quasilap::determinant::{
    DISCRETIZE_CAP, ZETA_IM_MIN, ZETA_MODULUS_MAX, ZETA_MODULUS_MIN,
};
use quasilap::parse_complex;
use quasilap::presets::BeltramiPreset;

use crate::CliError;

/// Current config schema; files must declare `schema = 1` explicitly.
pub const CONFIG_SCHEMA: u32 = 1;

pub const EXPERIMENTS: [&str; 6] = [
    "torus-det",
    "beltrami-solve",
    "symbol-angle",
    "det-sweep",
    "potential-verify",
    "holomorphy-check",
];

fn default_schema() -> u32 {
    CONFIG_SCHEMA
}

fn default_seed() -> u64 {
    7
}

#[derive(Serialize, Deserialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema: u32,
    #[serde(default)]
    pub experiment: String,
    /// Seed for every randomized preset or suite in the run.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub presets: PresetSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Torus modulus as a complex literal, e.g. `"i"`, `"0.5+2i"`.
    pub modulus: String,
    /// Samples per side.
    pub n: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { modulus: "i".into(), n: 0 }
    }
}

/// Coefficient presets in the `name:args` syntax of the library
/// (`constant:c`, `bump:center,radius,height`, `fourier:m,k,amp`,
/// `random:seed,band,k`). `mu1`/`nu1` are deformation directions.
#[derive(Serialize, Deserialize, Clone, Debug, Default)]
#[serde(deny_unknown_fields)]
pub struct PresetSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu1: Option<String>,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection { tol: 1e-12, max_iter: 800 }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Deformation scales.
    pub eps: Vec<f64>,
    /// Differencing steps; the first entry drives single-step checks.
    pub h: Vec<f64>,
    /// Branch-cut angles; the first entry drives single-cut checks.
    pub theta: Vec<f64>,
    /// Kernel exclusion radius; `0` selects half the smallest nonzero
    /// eigenvalue modulus.
    pub rho: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            eps: vec![0.01, 0.02, 0.04],
            h: vec![1e-3],
            theta: vec![PI],
            rho: 0.0,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    /// Data artifact format: `json` or `csv`.
    pub format: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "quasilap-out".into(), format: String::new() }
    }
}

/// Command-line values that may override file or default config fields.
#[derive(Default, Clone, Debug)]
pub struct Overrides {
    pub z: Option<String>,
    pub n: Option<usize>,
    pub mu: Option<String>,
    pub nu: Option<String>,
    pub mu1: Option<String>,
    pub nu1: Option<String>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub eps: Option<Vec<f64>>,
    pub h: Option<Vec<f64>>,
    pub theta: Option<Vec<f64>>,
    pub rho: Option<f64>,
    pub out: Option<String>,
    pub format: Option<String>,
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    /// Loads a config file, requiring an explicit matching schema tag.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let value: toml::Value = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        match value.get("schema").and_then(toml::Value::as_integer) {
            Some(s) if s == CONFIG_SCHEMA as i64 => {}
            Some(s) => {
                return Err(CliError::Config(format!(
                    "{}: schema {s} is not supported (expected {CONFIG_SCHEMA})",
                    path.display()
                )))
            }
            None => {
                return Err(CliError::Config(format!(
                    "{}: missing required `schema = {CONFIG_SCHEMA}` tag",
                    path.display()
                )))
            }
        }
        value
            .try_into()
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Builds the effective config for `experiment` from an optional file,
    /// command-line overrides, and per-experiment defaults, then validates.
    pub fn assemble(
        experiment: &str,
        file: Option<&Path>,
        ov: &Overrides,
    ) -> Result<Self, CliError> {
        let mut cfg = match file {
            Some(path) => {
                let cfg = Self::load(path)?;
                if !cfg.experiment.is_empty() && cfg.experiment != experiment {
                    return Err(CliError::Config(format!(
                        "config file is for experiment {:?}, subcommand is {experiment:?}",
                        cfg.experiment
                    )));
                }
                cfg
            }
            None => ExperimentConfig {
                schema: CONFIG_SCHEMA,
                experiment: String::new(),
                seed: default_seed(),
                grid: GridSection::default(),
                presets: PresetSection::default(),
                solver: SolverSection::default(),
                sweep: SweepSection::default(),
                output: OutputSection::default(),
            },
        };
        cfg.experiment = experiment.to_string();

        if let Some(v) = &ov.z {
            cfg.grid.modulus = v.clone();
        }
        if let Some(v) = ov.n {
            cfg.grid.n = v;
        }
        if let Some(v) = &ov.mu {
            cfg.presets.mu = Some(v.clone());
        }
        if let Some(v) = &ov.nu {
            cfg.presets.nu = Some(v.clone());
        }
        if let Some(v) = &ov.mu1 {
            cfg.presets.mu1 = Some(v.clone());
        }
        if let Some(v) = &ov.nu1 {
            cfg.presets.nu1 = Some(v.clone());
        }
        if let Some(v) = ov.tol {
            cfg.solver.tol = v;
        }
        if let Some(v) = ov.max_iter {
            cfg.solver.max_iter = v;
        }
        if let Some(v) = &ov.eps {
            cfg.sweep.eps = v.clone();
        }
        if let Some(v) = &ov.h {
            cfg.sweep.h = v.clone();
        }
        if let Some(v) = &ov.theta {
            cfg.sweep.theta = v.clone();
        }
        if let Some(v) = ov.rho {
            cfg.sweep.rho = v;
        }
        if let Some(v) = &ov.out {
            cfg.output.dir = v.clone();
        }
        if let Some(v) = &ov.format {
            cfg.output.format = v.clone();
        }
        if let Some(v) = ov.seed {
            cfg.seed = v;
        }
        // The environment variable wins over both file and flags.
        if let Ok(dir) = std::env::var("QUASILAP_OUT") {
            if !dir.is_empty() {
                cfg.output.dir = dir;
            }
        }

        if cfg.grid.n == 0 {
            cfg.grid.n = match experiment {
                "torus-det" | "symbol-angle" => 64,
                "beltrami-solve" => 128,
                _ => 16,
            };
        }
        if cfg.output.format.is_empty() {
            cfg.output.format = if experiment == "det-sweep" { "csv" } else { "json" }.into();
        }

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn modulus(&self) -> Result<Complex64, CliError> {
        parse_complex(&self.grid.modulus)
            .map_err(|e| CliError::Config(format!("grid.modulus: {e}")))
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.schema != CONFIG_SCHEMA {
            return bad(format!("schema {} is not supported", self.schema));
        }
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            return bad(format!("unknown experiment {:?}", self.experiment));
        }
        let z = self.modulus()?;
        if !z.is_finite() || !(z.im > 0.0) {
            return bad(format!("grid.modulus must lie in the upper half-plane, got {z}"));
        }
        if self.grid.n < 4 || self.grid.n > (1 << 14) {
            return bad(format!("grid.n = {} is outside the supported 4..=16384", self.grid.n));
        }
        if !(self.solver.tol > 0.0) || !self.solver.tol.is_finite() {
            return bad(format!("solver.tol must be positive, got {}", self.solver.tol));
        }
        if self.solver.max_iter == 0 {
            return bad("solver.max_iter must be at least 1".into());
        }
        if self.sweep.eps.is_empty()
            || self.sweep.eps.iter().any(|&e| !(e > 0.0) || !e.is_finite())
        {
            return bad(format!("sweep.eps must be nonempty positive, got {:?}", self.sweep.eps));
        }
        if self.sweep.h.is_empty() || self.sweep.h.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return bad(format!("sweep.h must be nonempty positive, got {:?}", self.sweep.h));
        }
        if self.sweep.theta.is_empty() || self.sweep.theta.iter().any(|t| !t.is_finite()) {
            return bad(format!("sweep.theta must be nonempty finite, got {:?}", self.sweep.theta));
        }
        if !(self.sweep.rho >= 0.0) || !self.sweep.rho.is_finite() {
            return bad(format!("sweep.rho must be nonnegative, got {}", self.sweep.rho));
        }
        if self.output.format != "json" && self.output.format != "csv" {
            return bad(format!("output.format must be json or csv, got {:?}", self.output.format));
        }
        if self.output.dir.is_empty() {
            return bad("output.dir must not be empty".into());
        }
        for (name, preset) in [
            ("mu", &self.presets.mu),
            ("nu", &self.presets.nu),
            ("mu1", &self.presets.mu1),
            ("nu1", &self.presets.nu1),
        ] {
            if let Some(text) = preset {
                BeltramiPreset::parse(text)
                    .map_err(|e| CliError::Config(format!("presets.{name}: {e}")))?;
            }
        }
        match self.experiment.as_str() {
            "torus-det" => {
                let r = z.norm();
                if !(ZETA_MODULUS_MIN..=ZETA_MODULUS_MAX).contains(&r) || z.im < ZETA_IM_MIN {
                    return bad(format!(
                        "torus-det needs {ZETA_MODULUS_MIN} <= |z| <= {ZETA_MODULUS_MAX} \
                         and Im z >= {ZETA_IM_MIN}, got z = {z}"
                    ));
                }
            }
            "beltrami-solve" => {
                if self.presets.mu.is_none() {
                    return bad("beltrami-solve needs a mu preset (--preset)".into());
                }
            }
            "symbol-angle" => {
                if self.presets.mu.is_none() || self.presets.nu.is_none() {
                    return bad("symbol-angle needs mu and nu presets".into());
                }
            }
            "det-sweep" => {
                if self.presets.mu.is_none() {
                    return bad("det-sweep needs a mu direction preset".into());
                }
                self.check_dense_cap()?;
                let sup = self.sweep.eps.iter().cloned().fold(0.0, f64::max);
                if sup >= 1.0 {
                    return bad(format!("sweep.eps reaches {sup} >= 1, not a dilatation"));
                }
            }
            "holomorphy-check" => {
                if self.presets.mu.is_none() || self.presets.mu1.is_none() {
                    return bad("holomorphy-check needs mu and mu1 presets".into());
                }
                self.check_dense_cap()?;
            }
            _ => {}
        }
        Ok(())
    }

    fn check_dense_cap(&self) -> Result<(), CliError> {
        let unknowns = self.grid.n * self.grid.n;
        if unknowns > DISCRETIZE_CAP {
            return Err(CliError::Config(format!(
                "grid.n = {} gives {unknowns} unknowns, above the dense cap {DISCRETIZE_CAP}",
                self.grid.n
            )));
        }
        Ok(())
    }

    /// Canonical TOML serialization: field order is fixed by the schema,
    /// so equal configs serialize to equal bytes.
    pub fn canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn sha256_hex(&self) -> String {
        let digest = Sha256::digest(self.canonical_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
