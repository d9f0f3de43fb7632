//! Declarative experiment configuration: one TOML file per run, strict
//! parsing (unknown keys are rejected so sweep typos cannot pass silently),
//! plus dotted-path overrides from the command line.

use std::path::Path;

use serde::{Deserialize, Serialize};
use wiener_ot::norms::{QuadratureSpec, SobolevParams};
use wiener_ot::transport::CostSpec;
use wiener_ot::GridSpec64;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must match the subcommand being run.
    pub experiment: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sobolev: Option<SobolevSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ot: Option<OtSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rays: Option<RaysSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convexity: Option<ConvexitySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plimit: Option<PlimitSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project: Option<ProjectSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conjecture: Option<ConjectureSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SobolevSection {
    pub k: u32,
    pub gamma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    pub panels_per_cell: u32,
    pub gauss_points: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub half_range: f64,
    pub cells_per_axis: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    /// One of `sobolev_p`, `lp_squared`, `linf_squared`, `warped_sup`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormSection {
    pub n_samples: usize,
    pub level: u32,
    /// Slack allowed on the embedding inequality, relative.
    #[serde(default = "default_tiny")]
    pub embedding_slack: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OtSection {
    pub n: usize,
    pub dim: usize,
    #[serde(default = "default_spread")]
    pub spread: f64,
    #[serde(default = "default_cycle_len")]
    pub cycle_len: usize,
    #[serde(default)]
    pub random_weights: bool,
    #[serde(default)]
    pub dump_cost_matrix: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaysSection {
    pub n: usize,
    pub dim: usize,
    #[serde(default = "default_spread")]
    pub spread: f64,
    #[serde(default = "default_true")]
    pub midpoints: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvexitySection {
    pub k: f64,
    pub t_values: Vec<f64>,
    /// Gaussian means for the two endpoint histograms (length = grid dim).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean1: Option<Vec<f64>>,
    /// Alternative to means: random sparse histograms with this support.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_support: Option<usize>,
    /// Deficit tolerance is `deficit_factor * cell_width`.
    #[serde(default = "default_deficit_factor")]
    pub deficit_factor: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlimitSection {
    pub n: usize,
    pub dim: usize,
    #[serde(default = "default_spread")]
    pub spread: f64,
    pub p_values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectSection {
    pub n_paths: usize,
    pub level: u32,
    pub levels: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConjectureSection {
    pub n_samples: usize,
    pub level: u32,
}

fn default_tiny() -> f64 {
    1e-9
}

fn default_spread() -> f64 {
    2.0
}

fn default_cycle_len() -> usize {
    4
}

fn default_true() -> bool {
    true
}

fn default_deficit_factor() -> f64 {
    5.0
}

/// Anything that prevents a run from starting: bad file, bad TOML, unknown
/// keys, invalid parameter domain. Exit code 1 territory.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<wiener_ot::Error> for ConfigError {
    fn from(e: wiener_ot::Error) -> Self {
        ConfigError(e.to_string())
    }
}

impl ExperimentConfig {
    /// Loads the TOML file, applies `key.path=value` overrides, then
    /// deserializes strictly.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let mut value: toml::Value = text
            .parse()
            .map_err(|e| ConfigError(format!("config is not valid TOML: {e}")))?;
        for spec in overrides {
            apply_override(&mut value, spec)?;
        }
        let config: ExperimentConfig = ExperimentConfig::deserialize(value)
            .map_err(|e| ConfigError(format!("config rejected: {e}")))?;
        Ok(config)
    }

    pub fn sobolev_params(&self) -> Result<SobolevParams<f64>, ConfigError> {
        match &self.sobolev {
            Some(s) => Ok(SobolevParams::new(s.k, s.gamma)?),
            None => Ok(SobolevParams::default()),
        }
    }

    pub fn quadrature_spec(&self) -> Result<QuadratureSpec, ConfigError> {
        match &self.quadrature {
            Some(q) => Ok(QuadratureSpec::new(q.panels_per_cell, q.gauss_points)?),
            None => Ok(QuadratureSpec::default()),
        }
    }

    pub fn grid_spec(&self) -> Result<GridSpec64, ConfigError> {
        let g = self
            .grid
            .as_ref()
            .ok_or_else(|| ConfigError("missing [grid] section".into()))?;
        Ok(GridSpec64::new(g.dim, g.half_range, g.cells_per_axis)?)
    }

    pub fn cost_spec(&self) -> Result<CostSpec<f64>, ConfigError> {
        let c = self
            .cost
            .as_ref()
            .ok_or_else(|| ConfigError("missing [cost] section".into()))?;
        let spec = match c.kind.as_str() {
            "sobolev_p" => CostSpec::SobolevP {
                p: c.p
                    .ok_or_else(|| ConfigError("sobolev_p cost needs `p`".into()))?,
                params: self.sobolev_params()?,
                quad: self.quadrature_spec()?,
            },
            "lp_squared" => CostSpec::LpSquared {
                p: c.p
                    .ok_or_else(|| ConfigError("lp_squared cost needs `p`".into()))?,
            },
            "linf_squared" => CostSpec::LinfSquared,
            "warped_sup" => CostSpec::WarpedSup {
                matrix: c
                    .matrix
                    .clone()
                    .ok_or_else(|| ConfigError("warped_sup cost needs `matrix`".into()))?,
            },
            other => {
                return Err(ConfigError(format!(
                    "unknown cost kind `{other}` (expected sobolev_p, lp_squared, \
                     linf_squared or warped_sup)"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn require_experiment(&self, name: &str) -> Result<(), ConfigError> {
        if self.experiment != name {
            return Err(ConfigError(format!(
                "config declares experiment `{}` but subcommand `{name}` was invoked",
                self.experiment
            )));
        }
        Ok(())
    }
}

fn apply_override(root: &mut toml::Value, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError(format!("override `{spec}` is not key.path=value")))?;
    // parse the value as TOML; fall back to a bare string
    let parsed: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .map(|t| t["v"].clone())
        .unwrap_or_else(|_| toml::Value::String(raw.to_string()));
    let mut node = root;
    let segments: Vec<&str> = key.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| ConfigError(format!("override `{key}`: `{seg}` is not a table")))?;
        if i + 1 == segments.len() {
            table.insert(seg.to_string(), parsed);
            return Ok(());
        }
        node = table
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    unreachable!("split always yields at least one segment")
}
