//! Experiment configuration read from TOML.
//!
//! Parse and type errors carry the line and column reported by the TOML
//! parser; semantic checks report the dotted field path and, when the key is
//! written in the file, its line.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use selfcal::array::TruthModel;
use selfcal::recovery::EtaRule;
use selfcal::{EstimatorSettings, SolverSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub calibration: CalibrationConfig,
    pub grid: GridConfig,
    pub scene: SceneConfig,
    pub snr_db_list: Vec<f64>,
    #[serde(default = "one")]
    pub trials_per_snr: usize,
    #[serde(default)]
    pub method: Methods,
    #[serde(default)]
    pub eta_rule: EtaRuleConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub num_sensors: usize,
    /// Element spacing over wavelength.
    pub spacing_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Dimension of the DFT gain subspace.
    pub m: usize,
    /// Fixed seed for the gain coefficients; they are redrawn per trial when
    /// neither this nor `h` is given.
    #[serde(default)]
    pub h_seed: Option<u64>,
    /// Explicit coefficients as `[re, im]` pairs.
    #[serde(default)]
    pub h: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthModelConfig {
    #[default]
    Exact,
    Linearized,
}

impl From<TruthModelConfig> for TruthModel {
    fn from(t: TruthModelConfig) -> Self {
        match t {
            TruthModelConfig::Exact => TruthModel::Exact,
            TruthModelConfig::Linearized => TruthModel::Linearized,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub doas_deg: Vec<f64>,
    /// Unit powers when omitted.
    #[serde(default)]
    pub powers: Option<Vec<f64>>,
    /// Number of snapshots `L`.
    pub snapshots: usize,
    /// Number of sources `K` given to the estimator.
    pub sources: usize,
    #[serde(default)]
    pub truth_model: TruthModelConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Proposed,
    OngridAblation,
    SingleSnapshotAblation,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Proposed, Method::OngridAblation, Method::SingleSnapshotAblation];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::OngridAblation => "ongrid-ablation",
            Method::SingleSnapshotAblation => "single-snapshot-ablation",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Method::ALL.iter().map(|m| m.as_str()).collect();
                format!("unknown method `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// One method name or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Methods {
    One(Method),
    Many(Vec<Method>),
}

impl Default for Methods {
    fn default() -> Self {
        Methods::One(Method::Proposed)
    }
}

impl Methods {
    pub fn to_vec(&self) -> Vec<Method> {
        match self {
            Methods::One(m) => vec![*m],
            Methods::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EtaRuleConfig {
    Quantile { confidence: f64 },
    Fixed { value: f64 },
}

impl Default for EtaRuleConfig {
    fn default() -> Self {
        EtaRuleConfig::Quantile { confidence: 0.95 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iters: usize,
    pub step_fraction: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            feas_tol: s.feas_tol,
            gap_tol: s.gap_tol,
            max_iters: s.max_iters,
            step_fraction: s.step_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// A configuration problem located in the source text.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted field path, empty for syntax errors.
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.field.is_empty()) {
            (Some(l), false) => write!(f, "line {l}, field `{}`: {}", self.field, self.message),
            (None, false) => write!(f, "field `{}`: {}", self.field, self.message),
            (Some(l), true) => write!(f, "line {l}: {}", self.message),
            (None, true) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            ConfigError {
                field: String::new(),
                line,
                message: e.message().trim().to_string(),
            }
        })?;
        cfg.validate().map_err(|(field, message)| ConfigError {
            line: locate(text, &field),
            field,
            message,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Semantic checks; the error names the offending field.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let err = |f: &str, m: String| Err((f.to_string(), m));
        if self.geometry.num_sensors < 2 {
            return err("geometry.num_sensors", "need at least 2 sensors".into());
        }
        if !(self.geometry.spacing_ratio > 0.0 && self.geometry.spacing_ratio.is_finite()) {
            return err("geometry.spacing_ratio", "must be positive".into());
        }
        let c = &self.calibration;
        if c.m == 0 || c.m >= self.geometry.num_sensors {
            return err("calibration.m", format!("must satisfy 0 < m < {}", self.geometry.num_sensors));
        }
        if let Some(h) = &c.h {
            if h.len() != c.m {
                return err("calibration.h", format!("{} coefficients for m = {}", h.len(), c.m));
            }
            if c.h_seed.is_some() {
                return err("calibration.h_seed", "give either h or h_seed, not both".into());
            }
        }
        let g = &self.grid;
        if !(g.step > 0.0 && g.start < g.stop && g.start >= -90.0 && g.stop <= 90.0) {
            return err("grid", "need -90 <= start < stop <= 90 and step > 0".into());
        }
        let s = &self.scene;
        if s.doas_deg.is_empty() {
            return err("scene.doas_deg", "at least one source".into());
        }
        if s.sources != s.doas_deg.len() {
            return err("scene.sources", format!("{} sources but {} directions", s.sources, s.doas_deg.len()));
        }
        if let Some(p) = &s.powers {
            if p.len() != s.doas_deg.len() || p.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return err("scene.powers", "one positive power per source".into());
            }
        }
        if s.snapshots == 0 {
            return err("scene.snapshots", "at least one snapshot".into());
        }
        if self.snr_db_list.is_empty() || self.snr_db_list.iter().any(|v| !v.is_finite()) {
            return err("snr_db_list", "need at least one finite SNR".into());
        }
        if self.trials_per_snr == 0 {
            return err("trials_per_snr", "must be at least 1".into());
        }
        let methods = self.method.to_vec();
        if methods.is_empty() {
            return err("method", "at least one method".into());
        }
        for (i, m) in methods.iter().enumerate() {
            if methods[..i].contains(m) {
                return err("method", format!("`{m}` listed twice"));
            }
        }
        match self.eta_rule {
            EtaRuleConfig::Quantile { confidence } if !(confidence > 0.0 && confidence < 1.0) => {
                return err("eta_rule.confidence", "must lie in (0, 1)".into());
            }
            EtaRuleConfig::Fixed { value } if !(value > 0.0 && value.is_finite()) => {
                return err("eta_rule.value", "must be positive".into());
            }
            _ => {}
        }
        if let Err(e) = self.solver_settings().validate() {
            return err("solver", e.to_string());
        }
        Ok(())
    }

    pub fn solver_settings(&self) -> SolverSettings {
        SolverSettings {
            feas_tol: self.solver.feas_tol,
            gap_tol: self.solver.gap_tol,
            max_iters: self.solver.max_iters,
            step_fraction: self.solver.step_fraction,
            ..SolverSettings::default()
        }
    }

    pub fn estimator_settings(&self) -> EstimatorSettings {
        EstimatorSettings {
            eta_rule: match self.eta_rule {
                EtaRuleConfig::Quantile { confidence } => EtaRule::Quantile(confidence),
                EtaRuleConfig::Fixed { value } => EtaRule::Fixed(value),
            },
            solver: self.solver_settings(),
            ..EstimatorSettings::default()
        }
    }
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line where a dotted key (or its table) is written, if it is.
pub fn locate(text: &str, field: &str) -> Option<usize> {
    let (table, key) = match field.rsplit_once('.') {
        Some((t, k)) => (t, k),
        None => ("", field),
    };
    let mut current = String::new();
    let mut table_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = h.trim().to_string();
            if current == field {
                return Some(i + 1);
            }
            if current == table {
                table_line = Some(i + 1);
            }
            continue;
        }
        let Some((k, _)) = line.split_once('=') else { continue };
        let k = k.trim();
        if current == table && k == key {
            return Some(i + 1);
        }
        // inline dotted keys at top level, e.g. `grid.step = 1`
        if current.is_empty() && k == field {
            return Some(i + 1);
        }
    }
    table_line
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
seed = 3
snr_db_list = [0, 10.5]
trials_per_snr = 2
method = ["proposed", "ongrid-ablation"]

[geometry]
num_sensors = 8
spacing_ratio = 0.5

[calibration]
m = 2

[grid]
start = -90
stop = 90
step = 3

[scene]
doas_deg = [13.222, 28.602]
snapshots = 10
sources = 2

[eta_rule]
kind = "quantile"
confidence = 0.9
"#;

    #[test]
    fn parses_and_defaults() {
        let c = ExperimentConfig::from_toml(GOOD).unwrap();
        assert_eq!(c.snr_db_list, vec![0.0, 10.5]);
        assert_eq!(c.method.to_vec(), vec![Method::Proposed, Method::OngridAblation]);
        assert_eq!(c.eta_rule, EtaRuleConfig::Quantile { confidence: 0.9 });
        assert_eq!(c.scene.truth_model, TruthModelConfig::Exact);
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(c.output.dir, PathBuf::from("out"));
        let again = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn zero_trials_names_field_and_line() {
        let text = GOOD.replace("trials_per_snr = 2", "trials_per_snr = 0");
        let e = ExperimentConfig::from_toml(&text).unwrap_err();
        assert_eq!(e.field, "trials_per_snr");
        assert_eq!(e.line, Some(4));
    }

    #[test]
    fn nested_field_is_located() {
        let text = GOOD.replace("confidence = 0.9", "confidence = 1.5");
        let e = ExperimentConfig::from_toml(&text).unwrap_err();
        assert_eq!(e.field, "eta_rule.confidence");
        assert_eq!(e.line, Some(26));
        let text = GOOD.replace("sources = 2", "sources = 3");
        let e = ExperimentConfig::from_toml(&text).unwrap_err();
        assert_eq!((e.field.as_str(), e.line), ("scene.sources", Some(22)));
    }

    #[test]
    fn syntax_and_type_errors_report_lines() {
        let text = GOOD.replace("m = 2", "m = \"two\"");
        let e = ExperimentConfig::from_toml(&text).unwrap_err();
        assert_eq!(e.line, Some(12));
        let text = GOOD.replace("start = -90", "start = -90\nbogus = 1");
        let e = ExperimentConfig::from_toml(&text).unwrap_err();
        assert_eq!(e.line, Some(16));
        assert!(e.message.contains("bogus"));
    }

    #[test]
    fn unknown_method_is_rejected() {
        let text = GOOD.replace("\"ongrid-ablation\"", "\"music\"");
        assert!(ExperimentConfig::from_toml(&text).is_err());
        assert!("music".parse::<Method>().is_err());
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
    }
}
