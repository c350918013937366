//! Run configuration: flat TOML tables, one per module.
//!
//! A configuration is resolved in layers. The preset (if any) comes first,
//! then the config file, then `--set key=value` pairs and the shortcut flags.
//! Later layers replace individual keys of earlier ones. The merged table is
//! deserialized with unknown keys rejected and then validated, so every
//! error names the offending key.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use iqa_core::schedules::ProfileKind;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{key}: {msg}")]
    Invalid { key: String, msg: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown preset '{0}'; available: {1}")]
    UnknownPreset(String, String),
    #[error("cannot read {path}: {msg}")]
    Read { path: String, msg: String },
}

impl ConfigError {
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { key, .. } => Some(key),
            _ => None,
        }
    }
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Meanfield,
    Exact,
    Spectrum,
    EnsembleFraction,
    EnsembleCompare,
    Saddle,
}

impl Subcommand {
    pub fn as_str(&self) -> &'static str {
        match self {
            Subcommand::Meanfield => "meanfield",
            Subcommand::Exact => "exact",
            Subcommand::Spectrum => "spectrum",
            Subcommand::EnsembleFraction => "ensemble-fraction",
            Subcommand::EnsembleCompare => "ensemble-compare",
            Subcommand::Saddle => "saddle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Ferromagnetic p-spin model.
    Pspin,
    /// Gaussian SK instance drawn from `model.seed`.
    Sk,
    Fig4,
    Fig5,
    /// SK instance read from the JSON document at `model.file`.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub n: usize,
    pub p: u32,
    pub seed: u64,
    pub file: Option<PathBuf>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { kind: ModelKind::Pspin, n: 100, p: 3, seed: 0, file: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathSection {
    pub s0: f64,
    pub tau0: f64,
    pub s1: f64,
    pub tau1: f64,
    #[serde(rename = "T")]
    pub total_time: f64,
    pub dt: f64,
}

impl Default for PathSection {
    fn default() -> Self {
        PathSection { s0: 0.0, tau0: 0.0, s1: 1.0, tau1: 1.0, total_time: 100.0, dt: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileSection {
    pub kind: ProfileKind,
}

impl Default for ProfileSection {
    fn default() -> Self {
        ProfileSection { kind: ProfileKind::Ramp }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeanfieldSection {
    /// Record every `stride`-th step.
    pub stride: usize,
    /// Points on the ground-state reference curve; 0 disables it.
    pub reference_points: usize,
    /// System sizes to run; empty means `model.n`.
    pub n_values: Vec<usize>,
    /// Total times to run; empty means `path.T` unless `t_per_n` is set.
    pub t_values: Vec<f64>,
    /// Constants `c` for runs with `T = c·N`.
    pub t_per_n: Vec<f64>,
}

impl Default for MeanfieldSection {
    fn default() -> Self {
        MeanfieldSection {
            stride: 100,
            reference_points: 201,
            n_values: Vec::new(),
            t_values: Vec::new(),
            t_per_n: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExactSection {
    pub stride: usize,
}

impl Default for ExactSection {
    fn default() -> Self {
        ExactSection { stride: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    /// Levels kept per grid point; 0 means min(2^N, 10).
    pub k_levels: usize,
    /// Points of the level grid; 0 means 40·N.
    pub grid_points: usize,
    /// Levels tracked by the crossing scan; 1 scans the ground level only.
    pub crossing_k: usize,
    /// Uniform points of the crossing grid; 0 means 40·N.
    pub crossing_grid: usize,
    pub tau_tol: f64,
    pub degeneracy_tol: f64,
    /// Also evaluate the adiabatic run-time bound.
    pub adiabatic_bound: bool,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection {
            k_levels: 0,
            grid_points: 0,
            crossing_k: 1,
            crossing_grid: 0,
            tau_tol: 1e-6,
            degeneracy_tol: 1e-12,
            adiabatic_bound: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub n_values: Vec<usize>,
    pub realizations: u64,
    pub first_realization: u64,
    pub base_seed: u64,
    pub t_values: Vec<f64>,
    pub grid_per_spin: usize,
    pub tau_tol: f64,
    /// Qualifying instances used by the comparison; 0 means all.
    pub max_instances: usize,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            n_values: vec![4, 6, 8, 10],
            realizations: 200,
            first_realization: 0,
            base_seed: 2024,
            t_values: vec![1.0, 10.0, 100.0, 1000.0, 10000.0],
            grid_per_spin: 40,
            tau_tol: 1e-6,
            max_instances: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaddleSection {
    pub s: f64,
    pub tau: f64,
    /// Inverse temperature; absent means zero temperature.
    pub beta: Option<f64>,
    /// If above 1, also solve on a `grid × grid` lattice of `(s, τ)`.
    pub grid: usize,
}

impl Default for SaddleSection {
    fn default() -> Self {
        SaddleSection { s: 0.5, tau: 0.5, beta: None, grid: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Output directory; defaults to `$IQA_OUTPUT_ROOT/<name>`.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub path: PathSection,
    pub profile: ProfileSection,
    pub meanfield: MeanfieldSection,
    pub exact: ExactSection,
    pub spectrum: SpectrumSection,
    pub ensemble: EnsembleSection,
    pub saddle: SaddleSection,
    pub output: OutputSection,
}

pub struct Preset {
    pub name: &'static str,
    pub subcommand: Subcommand,
    pub body: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "fig1",
        subcommand: Subcommand::Meanfield,
        body: r#"
[model]
kind = "pspin"
n = 5000
p = 3
[profile]
kind = "quench"
[path]
s0 = 0.1
tau0 = 0.1
dt = 0.01
[meanfield]
t_values = [100.0, 300.0, 1000.0]
"#,
    },
    Preset {
        name: "fig2",
        subcommand: Subcommand::Meanfield,
        body: r#"
[model]
kind = "pspin"
p = 3
[profile]
kind = "ramp"
[path]
s0 = 0.1
tau0 = 0.1
T = 10000.0
dt = 0.1
[meanfield]
n_values = [500, 1000, 2000, 5000]
"#,
    },
    Preset {
        name: "fig3",
        subcommand: Subcommand::Meanfield,
        body: r#"
[model]
kind = "pspin"
p = 3
[profile]
kind = "ramp"
[path]
s0 = 0.1
tau0 = 0.1
dt = 0.1
[meanfield]
n_values = [100, 200, 500]
t_per_n = [10.0, 100.0]
"#,
    },
    Preset {
        name: "fig4",
        subcommand: Subcommand::Exact,
        body: r#"
[model]
kind = "fig4"
n = 4
[profile]
kind = "ramp"
[path]
T = 10.0
dt = 0.1
"#,
    },
    Preset {
        name: "fig5",
        subcommand: Subcommand::Spectrum,
        body: r#"
[model]
kind = "fig5"
n = 8
[profile]
kind = "ramp"
[path]
T = 1.0
dt = 0.01
[spectrum]
k_levels = 10
"#,
    },
    Preset {
        name: "fig6",
        subcommand: Subcommand::EnsembleFraction,
        body: r#"
[profile]
kind = "ramp"
[path]
T = 1.0
dt = 0.01
[ensemble]
n_values = [4, 6, 8, 10]
realizations = 200
base_seed = 2024
"#,
    },
    Preset {
        name: "fig6-full",
        subcommand: Subcommand::EnsembleFraction,
        body: r#"
[profile]
kind = "ramp"
[path]
T = 1.0
dt = 0.01
[ensemble]
n_values = [4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14]
realizations = 1000
base_seed = 2024
"#,
    },
    Preset {
        name: "fig7",
        subcommand: Subcommand::EnsembleCompare,
        body: r#"
[profile]
kind = "ramp"
[path]
dt = 0.01
[ensemble]
n_values = [8]
realizations = 1000
base_seed = 2024
t_values = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0, 2000.0, 5000.0, 10000.0]
max_instances = 100
"#,
    },
    Preset {
        name: "fig7-smoke",
        subcommand: Subcommand::EnsembleCompare,
        body: r#"
[profile]
kind = "ramp"
[path]
dt = 0.01
[ensemble]
n_values = [8]
realizations = 200
base_seed = 2024
t_values = [5000.0, 10000.0]
max_instances = 20
"#,
    },
];

pub fn preset(name: &str) -> Result<&'static Preset, ConfigError> {
    PRESETS.iter().find(|p| p.name == name).ok_or_else(|| {
        ConfigError::UnknownPreset(name.to_string(), PRESETS.iter().map(|p| p.name).collect::<Vec<_>>().join(", "))
    })
}

pub fn parse_table(text: &str) -> Result<Table, ConfigError> {
    text.parse::<Table>().map_err(|e| ConfigError::Parse(e.to_string()))
}

/// Overlays `top` onto `base` key by key, one level of tables deep.
pub fn merge(base: &mut Table, top: Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(t)) => {
                for (k, v) in t {
                    b.insert(k, v);
                }
            }
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

/// Parses `section.key=value`. The value is read as a TOML value and falls
/// back to a bare string.
pub fn parse_assignment(assignment: &str) -> Result<Table, ConfigError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::Parse(format!("expected section.key=value, got '{assignment}'")))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .ok_or_else(|| ConfigError::Parse(format!("expected section.key=value, got '{assignment}'")))?;
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let mut inner = Table::new();
    inner.insert(key.to_string(), value);
    let mut outer = Table::new();
    outer.insert(section.to_string(), Value::Table(inner));
    Ok(outer)
}

/// Keys that are absent from a serialized default configuration.
const OPTIONAL_KEYS: &[&str] = &["model.file", "saddle.beta", "output.dir"];

/// Rejects unknown sections and keys by name.
fn check_keys(table: &Table) -> Result<(), ConfigError> {
    let known = Table::try_from(RunConfig::default()).expect("default configuration serializes");
    for (section, value) in table {
        let Some(Value::Table(known_section)) = known.get(section) else {
            return Err(invalid(section, "unknown section"));
        };
        let Value::Table(entries) = value else {
            return Err(invalid(section, "expected a table"));
        };
        for key in entries.keys() {
            let full = format!("{section}.{key}");
            if !known_section.contains_key(key) && !OPTIONAL_KEYS.contains(&full.as_str()) {
                return Err(invalid(&full, "unknown key"));
            }
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn from_table(table: Table) -> Result<Self, ConfigError> {
        check_keys(&table)?;
        let cfg: RunConfig =
            Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the resolved configuration without the output location.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = OutputSection::default();
        let json = serde_json::to_string(&canonical).expect("configuration serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self, sub: Subcommand) -> Result<(), ConfigError> {
        match sub {
            Subcommand::Meanfield => {
                self.validate_path()?;
                self.validate_p()?;
                if self.model.kind != ModelKind::Pspin {
                    return Err(invalid("model.kind", "mean-field dynamics need the p-spin model"));
                }
                if self.meanfield.n_values.contains(&0) || self.model.n == 0 {
                    return Err(invalid("meanfield.n_values", "system sizes must be positive"));
                }
                if let Some(t) = self.meanfield.t_values.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
                    return Err(invalid("meanfield.t_values", format!("total time {t} must be positive")));
                }
                if let Some(c) = self.meanfield.t_per_n.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
                    return Err(invalid("meanfield.t_per_n", format!("constant {c} must be positive")));
                }
                if self.meanfield.stride == 0 {
                    return Err(invalid("meanfield.stride", "must be at least 1"));
                }
                if self.meanfield.reference_points == 1 {
                    return Err(invalid("meanfield.reference_points", "use 0 to disable or at least 2"));
                }
            }
            Subcommand::Exact | Subcommand::Spectrum => {
                self.validate_path()?;
                self.validate_small_model(if sub == Subcommand::Exact { 20 } else { 16 })?;
                if sub == Subcommand::Exact && self.exact.stride == 0 {
                    return Err(invalid("exact.stride", "must be at least 1"));
                }
                if sub == Subcommand::Spectrum {
                    let sp = &self.spectrum;
                    if sp.grid_points == 1 {
                        return Err(invalid("spectrum.grid_points", "use 0 for the default or at least 2"));
                    }
                    if sp.crossing_k == 0 {
                        return Err(invalid("spectrum.crossing_k", "must be at least 1"));
                    }
                    if sp.crossing_grid == 1 {
                        return Err(invalid("spectrum.crossing_grid", "use 0 for the default or at least 2"));
                    }
                    if !(sp.tau_tol > 0.0) {
                        return Err(invalid("spectrum.tau_tol", "must be positive"));
                    }
                    if !(sp.degeneracy_tol > 0.0) {
                        return Err(invalid("spectrum.degeneracy_tol", "must be positive"));
                    }
                    if sp.adiabatic_bound && self.profile.kind == ProfileKind::Quench {
                        return Err(invalid(
                            "spectrum.adiabatic_bound",
                            "the quench profile has no finite field speed",
                        ));
                    }
                }
            }
            Subcommand::EnsembleFraction | Subcommand::EnsembleCompare => {
                self.validate_path()?;
                let e = &self.ensemble;
                if e.n_values.is_empty() {
                    return Err(invalid("ensemble.n_values", "at least one size is required"));
                }
                if let Some(n) = e.n_values.iter().find(|&&n| !(2..=16).contains(&n)) {
                    return Err(invalid("ensemble.n_values", format!("N = {n} outside 2..=16")));
                }
                if e.realizations == 0 {
                    return Err(invalid("ensemble.realizations", "must be at least 1"));
                }
                if e.grid_per_spin == 0 {
                    return Err(invalid("ensemble.grid_per_spin", "must be at least 1"));
                }
                if !(e.tau_tol > 0.0) {
                    return Err(invalid("ensemble.tau_tol", "must be positive"));
                }
                if self.profile.kind == ProfileKind::Homogeneous {
                    return Err(invalid("profile.kind", "ensembles need an inhomogeneous profile"));
                }
                if sub == Subcommand::EnsembleCompare {
                    if e.n_values.len() != 1 {
                        return Err(invalid("ensemble.n_values", "the comparison takes exactly one size"));
                    }
                    if e.t_values.is_empty() {
                        return Err(invalid("ensemble.t_values", "at least one total time is required"));
                    }
                    if e.t_values.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                        return Err(invalid("ensemble.t_values", "total times must be positive"));
                    }
                    if e.t_values.windows(2).any(|w| !(w[0] < w[1])) {
                        return Err(invalid("ensemble.t_values", "total times must be strictly ascending"));
                    }
                }
            }
            Subcommand::Saddle => {
                self.validate_p()?;
                let sd = &self.saddle;
                for (key, v) in [("saddle.s", sd.s), ("saddle.tau", sd.tau)] {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(invalid(key, format!("{v} outside [0, 1]")));
                    }
                }
                if let Some(b) = sd.beta {
                    if !(b > 0.0 && b.is_finite()) {
                        return Err(invalid(
                            "saddle.beta",
                            "must be positive and finite; omit it for zero temperature",
                        ));
                    }
                }
                if sd.grid == 1 {
                    return Err(invalid("saddle.grid", "use 0 to disable or at least 2"));
                }
            }
        }
        Ok(())
    }

    fn validate_p(&self) -> Result<(), ConfigError> {
        if self.model.p == 0 {
            return Err(invalid("model.p", "must be at least 1"));
        }
        Ok(())
    }

    fn validate_path(&self) -> Result<(), ConfigError> {
        let p = &self.path;
        for (key, v) in [("path.s0", p.s0), ("path.tau0", p.tau0), ("path.s1", p.s1), ("path.tau1", p.tau1)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(key, format!("{v} outside [0, 1]")));
            }
        }
        if !(p.total_time > 0.0 && p.total_time.is_finite()) {
            return Err(invalid("path.T", format!("{} must be positive", p.total_time)));
        }
        if !(p.dt > 0.0 && p.dt.is_finite()) {
            return Err(invalid("path.dt", format!("{} must be positive", p.dt)));
        }
        Ok(())
    }

    fn validate_small_model(&self, max_n: usize) -> Result<(), ConfigError> {
        let m = &self.model;
        match m.kind {
            ModelKind::Fig4 if m.n != 4 => return Err(invalid("model.n", "the fig4 instance has N = 4")),
            ModelKind::Fig5 if m.n != 8 => return Err(invalid("model.n", "the fig5 instance has N = 8")),
            ModelKind::File if m.file.is_none() => {
                return Err(invalid("model.file", "required when model.kind = \"file\""))
            }
            ModelKind::Sk if m.n < 2 => return Err(invalid("model.n", "random instances need N >= 2")),
            ModelKind::Pspin => self.validate_p()?,
            _ => {}
        }
        if m.n == 0 || m.n > max_n {
            return Err(invalid("model.n", format!("N = {} outside 1..={max_n}", m.n)));
        }
        Ok(())
    }
}
