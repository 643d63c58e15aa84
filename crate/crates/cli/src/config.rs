//! JSON experiment configuration.
//!
//! The `scenario` field selects the experiment; the remaining fields belong to
//! that scenario. Parse errors and validation errors both report the path of
//! the offending field, e.g. `market.sigma[1]`.

use std::path::{Path, PathBuf};

use dualmc_core::market_model::{CrraTerm, MarketModel, UtilitySpec};
use dualmc_core::path_engine::TimeGrid;
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{CliError, Result};

/// One experiment, selected by the `scenario` field.
#[derive(Clone, Debug)]
pub enum ExperimentConfig {
    MertonPath(MertonPathConfig),
    MertonTable(MertonTableConfig),
    MixtureCompare(MixtureConfig),
    Incomplete(IncompleteConfig),
    QuantizerBuild(QuantizerBuildConfig),
}

/// Constant market: short rate, drift vector and volatility rows.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub r: f64,
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub risk_aversion: f64,
    pub running_weight: f64,
    pub terminal_weight: f64,
}

/// Sum of CRRA terms sharing the discount rate `rho`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityConfig {
    pub rho: f64,
    pub terms: Vec<TermConfig>,
}

/// Monte Carlo size and time grid. Give `dt`, `horizon` or both.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub paths: usize,
    pub steps: usize,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    #[serde(default)]
    pub importance: bool,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MertonPathConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub market: MarketConfig,
    pub utility: UtilityConfig,
    pub w0: f64,
    pub simulation: SimulationConfig,
    #[serde(default = "default_report_every")]
    pub report_every: usize,
    pub cap: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRandomization {
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_mu_range")]
    pub mu: [f64; 2],
    #[serde(default = "default_unit_range")]
    pub sigma: [f64; 2],
    #[serde(default = "default_max_condition")]
    pub max_condition: f64,
    #[serde(default = "default_max_redraws")]
    pub max_redraws: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MertonTableConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub utility: UtilityConfig,
    pub w0: f64,
    pub simulation: SimulationConfig,
    #[serde(default = "default_batches")]
    pub batches: usize,
    /// Market dimensions to sweep; with a fixed `market` this defaults to its size.
    #[serde(default)]
    pub dims: Vec<usize>,
    pub market: Option<MarketConfig>,
    pub randomization: Option<TableRandomization>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeConfig {
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    /// The grid spans `[w0/span, w0·span]`.
    #[serde(default = "default_span")]
    pub span: f64,
}

impl Default for PdeConfig {
    fn default() -> Self {
        PdeConfig { nodes: default_nodes(), span: default_span() }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizationConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Time points per unit of remaining horizon in the quantized sums.
    #[serde(default = "default_time_density")]
    pub time_density: usize,
    /// Precomputed grid for horizon 1; built on the fly when absent.
    pub grid_file: Option<PathBuf>,
}

impl Default for QuantizationConfig {
    fn default() -> Self {
        QuantizationConfig {
            dim: default_dim(),
            points: default_points(),
            time_density: default_time_density(),
            grid_file: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub market: MarketConfig,
    pub utility: UtilityConfig,
    pub w0: f64,
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub pde: PdeConfig,
    #[serde(default)]
    pub quantization: QuantizationConfig,
    #[serde(default = "default_report_every")]
    pub report_every: usize,
    pub cap: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncompleteRandomization {
    #[serde(default = "default_unit_range")]
    pub range: [f64; 2],
    #[serde(default = "default_max_condition_incomplete")]
    pub max_condition: f64,
    #[serde(default = "default_max_redraws")]
    pub max_redraws: usize,
}

impl Default for IncompleteRandomization {
    fn default() -> Self {
        IncompleteRandomization {
            range: default_unit_range(),
            max_condition: default_max_condition_incomplete(),
            max_redraws: default_max_redraws(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncompleteConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_assets")]
    pub assets: usize,
    #[serde(default = "default_brownian")]
    pub brownian: usize,
    #[serde(default = "default_factors")]
    pub factors: usize,
    pub utility: UtilityConfig,
    pub w0: f64,
    pub x0: Option<Vec<f64>>,
    pub simulation: SimulationConfig,
    #[serde(default = "default_one")]
    pub report_every: usize,
    #[serde(default)]
    pub randomization: IncompleteRandomization,
    pub cap: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerBuildConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub dim: usize,
    pub points: usize,
    #[serde(default = "default_one_f64")]
    pub horizon: f64,
    #[serde(default = "default_quantizer_file")]
    pub file: String,
}

fn default_report_every() -> usize {
    10
}
fn default_one() -> usize {
    1
}
fn default_one_f64() -> f64 {
    1.0
}
fn default_batches() -> usize {
    1
}
fn default_r() -> f64 {
    0.05
}
fn default_mu_range() -> [f64; 2] {
    [0.10, 0.50]
}
fn default_unit_range() -> [f64; 2] {
    [-1.0, 1.0]
}
fn default_max_condition() -> f64 {
    1e6
}
fn default_max_condition_incomplete() -> f64 {
    1e3
}
fn default_max_redraws() -> usize {
    10_000
}
fn default_nodes() -> usize {
    400
}
fn default_span() -> f64 {
    50.0
}
fn default_dim() -> usize {
    10
}
fn default_points() -> usize {
    10_000
}
fn default_time_density() -> usize {
    400
}
fn default_assets() -> usize {
    4
}
fn default_brownian() -> usize {
    5
}
fn default_factors() -> usize {
    5
}
fn default_quantizer_file() -> String {
    "quantizer.txt".into()
}

impl ExperimentConfig {
    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::config("<root>", e.to_string()))?;
        let fields = value.as_object_mut().ok_or_else(|| CliError::config("<root>", "expected a JSON object"))?;
        let scenario = match fields.remove("scenario") {
            Some(serde_json::Value::String(s)) => s,
            Some(_) => return Err(CliError::config("scenario", "must be a string")),
            None => return Err(CliError::config("scenario", "missing")),
        };
        let cfg = match scenario.as_str() {
            "merton-path" => ExperimentConfig::MertonPath(from_value(value)?),
            "merton-table" => ExperimentConfig::MertonTable(from_value(value)?),
            "mixture-compare" => ExperimentConfig::MixtureCompare(from_value(value)?),
            "incomplete" => ExperimentConfig::Incomplete(from_value(value)?),
            "quantizer-build" => ExperimentConfig::QuantizerBuild(from_value(value)?),
            other => return Err(CliError::config("scenario", format!("unknown scenario `{other}`"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentConfig::MertonPath(_) => "merton-path",
            ExperimentConfig::MertonTable(_) => "merton-table",
            ExperimentConfig::MixtureCompare(_) => "mixture-compare",
            ExperimentConfig::Incomplete(_) => "incomplete",
            ExperimentConfig::QuantizerBuild(_) => "quantizer-build",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ExperimentConfig::MertonPath(c) => c.seed,
            ExperimentConfig::MertonTable(c) => c.seed,
            ExperimentConfig::MixtureCompare(c) => c.seed,
            ExperimentConfig::Incomplete(c) => c.seed,
            ExperimentConfig::QuantizerBuild(c) => c.seed,
        }
    }

    pub fn output_dir(&self) -> Option<&Path> {
        match self {
            ExperimentConfig::MertonPath(c) => c.output_dir.as_deref(),
            ExperimentConfig::MertonTable(c) => c.output_dir.as_deref(),
            ExperimentConfig::MixtureCompare(c) => c.output_dir.as_deref(),
            ExperimentConfig::Incomplete(c) => c.output_dir.as_deref(),
            ExperimentConfig::QuantizerBuild(c) => c.output_dir.as_deref(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ExperimentConfig::MertonPath(c) => {
                c.market.validate("market")?;
                c.utility.validate("utility")?;
                if c.utility.terms.len() != 1 {
                    return Err(CliError::config("utility.terms", "the Merton path needs exactly one CRRA term"));
                }
                c.simulation.validate("simulation")?;
                positive("w0", c.w0)?;
                check_cap(&c.cap)
            }
            ExperimentConfig::MertonTable(c) => {
                c.utility.validate("utility")?;
                c.simulation.validate("simulation")?;
                positive("w0", c.w0)?;
                if c.batches == 0 {
                    return Err(CliError::config("batches", "must be at least 1"));
                }
                if c.utility.terms.len() != 1 {
                    return Err(CliError::config("utility.terms", "the Merton table needs exactly one CRRA term"));
                }
                match (&c.market, &c.randomization) {
                    (Some(m), None) => {
                        m.validate("market")?;
                        if let Some(i) = c.dims.iter().position(|&k| k != m.mu.len()) {
                            return Err(CliError::config(format!("dims[{i}]"), "must match the fixed market size"));
                        }
                    }
                    (None, Some(r)) => {
                        r.validate("randomization")?;
                        if c.dims.is_empty() {
                            return Err(CliError::config("dims", "must list at least one dimension"));
                        }
                        if let Some(i) = c.dims.iter().position(|&k| k == 0) {
                            return Err(CliError::config(format!("dims[{i}]"), "must be at least 1"));
                        }
                    }
                    _ => return Err(CliError::config("market", "give exactly one of `market` and `randomization`")),
                }
                Ok(())
            }
            ExperimentConfig::MixtureCompare(c) => {
                c.market.validate("market")?;
                if c.market.mu.len() != 1 || c.market.sigma[0].len() != 1 {
                    return Err(CliError::config("market.mu", "the method comparison needs a one-stock market"));
                }
                c.utility.validate("utility")?;
                c.simulation.validate("simulation")?;
                positive("w0", c.w0)?;
                if c.pde.nodes < 10 {
                    return Err(CliError::config("pde.nodes", "need at least 10 nodes"));
                }
                if !(c.pde.span > 1.0) {
                    return Err(CliError::config("pde.span", "must exceed 1"));
                }
                let q = &c.quantization;
                if q.dim == 0 || q.points == 0 {
                    return Err(CliError::config("quantization.dim", "dimension and point count must be positive"));
                }
                if q.time_density == 0 {
                    return Err(CliError::config("quantization.time_density", "must be positive"));
                }
                check_cap(&c.cap)
            }
            ExperimentConfig::Incomplete(c) => {
                if c.assets == 0 || c.brownian < c.assets {
                    return Err(CliError::config("brownian", "need brownian >= assets >= 1"));
                }
                if c.factors == 0 {
                    return Err(CliError::config("factors", "must be at least 1"));
                }
                c.utility.validate("utility")?;
                if c.utility.terms.len() != 1 {
                    return Err(CliError::config("utility.terms", "the incomplete-market run needs one CRRA term"));
                }
                c.simulation.validate("simulation")?;
                positive("w0", c.w0)?;
                if let Some(x0) = &c.x0 {
                    if x0.len() != c.factors {
                        return Err(CliError::config("x0", format!("expected {} entries", c.factors)));
                    }
                    finite_all("x0", x0)?;
                }
                if c.report_every == 0 {
                    return Err(CliError::config("report_every", "must be at least 1"));
                }
                let r = &c.randomization;
                if !(r.range[0] < r.range[1]) {
                    return Err(CliError::config("randomization.range", "need lower < upper"));
                }
                if !(r.range[1] > 0.0) {
                    return Err(CliError::config("randomization.range", "upper end must be positive"));
                }
                if !(r.max_condition > 1.0) {
                    return Err(CliError::config("randomization.max_condition", "must exceed 1"));
                }
                if r.max_redraws == 0 {
                    return Err(CliError::config("randomization.max_redraws", "must be at least 1"));
                }
                check_cap(&c.cap)
            }
            ExperimentConfig::QuantizerBuild(c) => {
                if c.dim == 0 {
                    return Err(CliError::config("dim", "must be at least 1"));
                }
                if c.points == 0 {
                    return Err(CliError::config("points", "must be at least 1"));
                }
                positive("horizon", c.horizon)?;
                if c.file.is_empty() || c.file.contains(['/', '\\']) {
                    return Err(CliError::config("file", "must be a plain file name"));
                }
                Ok(())
            }
        }
    }
}

fn from_value<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let field = e.path().to_string();
        CliError::config(if field == "." { "<root>".to_string() } else { field }, e.inner().to_string())
    })
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(field, format!("must be positive and finite, got {v}")))
    }
}

fn finite_all(field: &str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(CliError::config(format!("{field}[{i}]"), "must be finite")),
        None => Ok(()),
    }
}

fn check_cap(cap: &Option<f64>) -> Result<()> {
    match cap {
        Some(c) => positive("cap", *c),
        None => Ok(()),
    }
}

impl MarketConfig {
    fn validate(&self, at: &str) -> Result<()> {
        if !self.r.is_finite() {
            return Err(CliError::config(format!("{at}.r"), "must be finite"));
        }
        if self.mu.is_empty() {
            return Err(CliError::config(format!("{at}.mu"), "must not be empty"));
        }
        finite_all(&format!("{at}.mu"), &self.mu)?;
        if self.sigma.len() != self.mu.len() {
            return Err(CliError::config(format!("{at}.sigma"), format!("expected {} rows", self.mu.len())));
        }
        let d = self.sigma[0].len();
        if d < self.mu.len() {
            return Err(CliError::config(format!("{at}.sigma[0]"), "need at least as many columns as assets"));
        }
        for (i, row) in self.sigma.iter().enumerate() {
            if row.len() != d {
                return Err(CliError::config(format!("{at}.sigma[{i}]"), format!("expected {d} columns")));
            }
            finite_all(&format!("{at}.sigma[{i}]"), row)?;
        }
        Ok(())
    }

    pub fn build(&self) -> Result<MarketModel> {
        let n = self.mu.len();
        let d = self.sigma[0].len();
        let flat: Vec<f64> = self.sigma.iter().flatten().copied().collect();
        MarketModel::constant(self.r, DVector::from_column_slice(&self.mu), DMatrix::from_row_slice(n, d, &flat))
            .map_err(|e| CliError::config("market.sigma", e.to_string()))
    }
}

impl UtilityConfig {
    fn validate(&self, at: &str) -> Result<()> {
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(CliError::config(format!("{at}.rho"), "must be finite and nonnegative"));
        }
        if self.terms.is_empty() {
            return Err(CliError::config(format!("{at}.terms"), "need at least one term"));
        }
        for (i, t) in self.terms.iter().enumerate() {
            let here = format!("{at}.terms[{i}]");
            if !(t.risk_aversion > 0.0 && t.risk_aversion.is_finite() && t.risk_aversion != 1.0) {
                return Err(CliError::config(format!("{here}.risk_aversion"), "must be positive and different from 1"));
            }
            if !(t.running_weight >= 0.0 && t.running_weight.is_finite()) {
                return Err(CliError::config(format!("{here}.running_weight"), "must be finite and nonnegative"));
            }
            if !(t.terminal_weight >= 0.0 && t.terminal_weight.is_finite()) {
                return Err(CliError::config(format!("{here}.terminal_weight"), "must be finite and nonnegative"));
            }
        }
        if self.terms.iter().all(|t| t.terminal_weight == 0.0) {
            return Err(CliError::config(format!("{at}.terms"), "at least one term needs a terminal weight"));
        }
        self.build().map(|_| ())
    }

    pub fn build(&self) -> Result<UtilitySpec> {
        let terms: Vec<CrraTerm> = self
            .terms
            .iter()
            .map(|t| CrraTerm {
                risk_aversion: t.risk_aversion,
                running_weight: t.running_weight,
                terminal_weight: t.terminal_weight,
            })
            .collect();
        UtilitySpec::from_terms(self.rho, &terms).map_err(|e| CliError::config("utility.terms", e.to_string()))
    }
}

impl SimulationConfig {
    fn validate(&self, at: &str) -> Result<()> {
        if self.paths == 0 {
            return Err(CliError::config(format!("{at}.paths"), "must be at least 1"));
        }
        if self.steps == 0 {
            return Err(CliError::config(format!("{at}.steps"), "must be at least 1"));
        }
        if let Some(dt) = self.dt {
            positive(&format!("{at}.dt"), dt)?;
        }
        if let Some(h) = self.horizon {
            positive(&format!("{at}.horizon"), h)?;
        }
        match (self.dt, self.horizon) {
            (None, None) => Err(CliError::config(format!("{at}.horizon"), "give `dt` or `horizon`")),
            (Some(dt), Some(h)) if (dt * self.steps as f64 - h).abs() > 1e-12 => Err(CliError::config(
                format!("{at}.dt"),
                format!("dt·steps = {} does not match horizon {h}", dt * self.steps as f64),
            )),
            _ => Ok(()),
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or_else(|| self.dt.unwrap_or(0.0) * self.steps as f64)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        Ok(TimeGrid::uniform(self.steps, self.horizon())?)
    }
}

impl TableRandomization {
    fn validate(&self, at: &str) -> Result<()> {
        if !self.r.is_finite() {
            return Err(CliError::config(format!("{at}.r"), "must be finite"));
        }
        if !(self.mu[0] <= self.mu[1]) {
            return Err(CliError::config(format!("{at}.mu"), "need lower <= upper"));
        }
        if !(self.sigma[0] < self.sigma[1]) {
            return Err(CliError::config(format!("{at}.sigma"), "need lower < upper"));
        }
        if !(self.max_condition > 1.0) {
            return Err(CliError::config(format!("{at}.max_condition"), "must exceed 1"));
        }
        if self.max_redraws == 0 {
            return Err(CliError::config(format!("{at}.max_redraws"), "must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MERTON_PATH: &str = r#"{
        "scenario": "merton-path",
        "market": {"r": 0.05, "mu": [0.1], "sigma": [[0.2]]},
        "utility": {"rho": 0.03, "terms": [{"risk_aversion": 3, "running_weight": 1, "terminal_weight": 1}]},
        "w0": 2,
        "simulation": {"paths": 100, "steps": 10, "dt": 0.1}
    }"#;

    fn field_of(text: &str) -> String {
        match ExperimentConfig::parse(text) {
            Err(CliError::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn parses_a_valid_config() {
        let cfg = ExperimentConfig::parse(MERTON_PATH).unwrap();
        assert_eq!(cfg.name(), "merton-path");
        let ExperimentConfig::MertonPath(c) = cfg else { unreachable!() };
        assert!((c.simulation.horizon() - 1.0).abs() < 1e-15);
        assert_eq!(c.report_every, 10);
    }

    #[test]
    fn errors_name_the_field() {
        assert_eq!(field_of(&MERTON_PATH.replace("\"w0\": 2", "\"w0\": -2")), "w0");
        assert_eq!(field_of(&MERTON_PATH.replace("\"paths\": 100", "\"paths\": 0")), "simulation.paths");
        assert_eq!(field_of(&MERTON_PATH.replace("\"dt\": 0.1", "\"dt\": 0.1, \"horizon\": 2")), "simulation.dt");
        assert_eq!(field_of(&MERTON_PATH.replace("[[0.2]]", "[[0.2, \"x\"]]")), "market.sigma[0][1]");
        assert_eq!(
            field_of(&MERTON_PATH.replace("\"risk_aversion\": 3", "\"risk_aversion\": 1")),
            "utility.terms[0].risk_aversion"
        );
        assert_eq!(field_of(&MERTON_PATH.replace("\"w0\": 2", "\"w0\": 2, \"bogus\": 1")), "bogus");
        assert_eq!(field_of(&MERTON_PATH.replace("merton-path", "nope")), "scenario");
    }

    #[test]
    fn table_needs_one_market_source() {
        let text = r#"{
            "scenario": "merton-table",
            "utility": {"rho": 0.03, "terms": [{"risk_aversion": 3, "running_weight": 1, "terminal_weight": 1}]},
            "w0": 1,
            "simulation": {"paths": 10, "steps": 10, "dt": 0.05},
            "batches": 0,
            "dims": [1]
        }"#;
        assert_eq!(field_of(text), "batches");
        assert_eq!(field_of(&text.replace("\"batches\": 0", "\"batches\": 2")), "market");
    }
}
