//! Declarative experiment configuration.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    /// Ensemble size.
    #[serde(default = "default_m")]
    pub m: usize,
    pub out: Option<PathBuf>,
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub features: FeatureConfig,
    pub sweep: Option<SweepConfig>,
    pub path: Option<PathConfig>,
    pub check: Option<CheckConfig>,
}

fn default_m() -> usize {
    100
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// AR(1) covariance with heavy-tailed innovations and a quadratic nonlinearity.
    MAr1 {
        n: usize,
        p: usize,
        #[serde(default = "default_rho")]
        rho: f64,
    },
    /// Standard Gaussian features with a norm-based nonlinearity.
    Isotropic { n: usize, p: usize },
    Csv {
        path: PathBuf,
        response: String,
        #[serde(default)]
        center_response: bool,
        #[serde(default)]
        center_features: bool,
        /// Fraction of rows held out for test error.
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
}

fn default_rho() -> f64 {
    0.5
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureConfig {
    #[default]
    Linear,
    Random {
        d: usize,
        #[serde(default = "default_activation")]
        activation: String,
    },
}

fn default_activation() -> String {
    "tanh".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_lambda_min")]
    pub lambda_min: f64,
    #[serde(default = "default_lambda_max")]
    pub lambda_max: f64,
    #[serde(default = "default_count")]
    pub lambda_count: usize,
    /// Defaults to `φ = p/n`.
    pub psi_min: Option<f64>,
    #[serde(default = "default_psi_max")]
    pub psi_max: f64,
    #[serde(default = "default_count")]
    pub psi_count: usize,
    /// Grid values with `|ψ − 1|` below this are dropped.
    #[serde(default = "default_guard")]
    pub psi_guard: f64,
    #[serde(default = "default_risks")]
    pub risks: Vec<String>,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default = "default_ood_rho")]
    pub ood_rho: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        toml::from_str("").expect("all sweep fields have defaults")
    }
}

fn default_lambda_min() -> f64 {
    1e-3
}
fn default_lambda_max() -> f64 {
    1e2
}
fn default_psi_max() -> f64 {
    1e2
}
fn default_count() -> usize {
    20
}
fn default_guard() -> f64 {
    0.05
}
fn default_risks() -> Vec<String> {
    vec![
        "estimation".into(),
        "training".into(),
        "prediction".into(),
        "ood".into(),
    ]
}
fn default_test_size() -> usize {
    2000
}
fn default_ood_rho() -> f64 {
    0.25
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathSource {
    Data,
    Population,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    /// Ridgeless anchors `ψ̄`; paths are emitted in this order.
    #[serde(default)]
    pub psi_bar: Vec<f64>,
    /// Full-data ridge anchors `λ̄`; population paths only.
    #[serde(default)]
    pub lambda_bar: Vec<f64>,
    #[serde(default = "default_source")]
    pub source: PathSource,
    #[serde(default = "default_thetas")]
    pub thetas: usize,
    #[serde(default = "default_functionals")]
    pub functionals: Vec<String>,
    /// Ensemble size for the data-dependent `λ̄ₙ`; defaults to `m`.
    pub lambda_bar_m: Option<usize>,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default = "default_ood_rho")]
    pub ood_rho: f64,
}

fn default_source() -> PathSource {
    PathSource::Data
}
fn default_thetas() -> usize {
    5
}
fn default_functionals() -> Vec<String> {
    vec!["uniform".into(), "gaussian".into(), "student_t".into()]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    /// Size of the synthetic problems behind the data-driven checks.
    #[serde(default = "default_check_n")]
    pub n: usize,
    #[serde(default = "default_check_p")]
    pub p: usize,
    #[serde(default = "default_check_matrices")]
    pub random_matrices: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            n: default_check_n(),
            p: default_check_p(),
            random_matrices: default_check_matrices(),
        }
    }
}

fn default_check_n() -> usize {
    2000
}
fn default_check_p() -> usize {
    200
}
fn default_check_matrices() -> usize {
    50
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Usage(msg) => CliError::Usage(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        if text.trim().is_empty() {
            return Err(CliError::Usage("configuration is empty".into()));
        }
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Usage(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn data(&self) -> Result<&DataConfig, CliError> {
        self.data
            .as_ref()
            .ok_or_else(|| CliError::Usage("data: this command needs a [data] section".into()))
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, why: &str| Err(CliError::Usage(format!("{field}: {why}")));
        if self.m == 0 {
            return bad("m", "ensemble size must be at least 1");
        }
        match &self.data {
            None => {}
            Some(DataConfig::MAr1 { n, p, rho }) => {
                if *n == 0 || *p == 0 {
                    return bad("data", "n and p must be positive");
                }
                if !(*rho > -1.0 && *rho < 1.0) {
                    return bad("data.rho", "must lie in (-1, 1)");
                }
            }
            Some(DataConfig::Isotropic { n, p }) => {
                if *n == 0 || *p == 0 {
                    return bad("data", "n and p must be positive");
                }
            }
            Some(DataConfig::Csv { test_fraction, .. }) if !(*test_fraction > 0.0 && *test_fraction < 1.0) => {
                return bad("data.test_fraction", "must lie in (0, 1)");
            }
            Some(DataConfig::Csv { .. }) => {}
        }
        if let FeatureConfig::Random { d, activation } = &self.features {
            if *d == 0 {
                return bad("features.d", "must be positive");
            }
            crate::data::parse_activation(activation)?;
        }
        if let Some(s) = &self.sweep {
            if !(s.lambda_min >= 0.0 && s.lambda_max >= s.lambda_min && s.lambda_max.is_finite()) {
                return bad("sweep.lambda_min", "need 0 <= lambda_min <= lambda_max < inf");
            }
            if s.lambda_count == 0 {
                return bad("sweep.lambda_count", "grid must be nonempty");
            }
            if s.psi_count == 0 {
                return bad("sweep.psi_count", "grid must be nonempty");
            }
            if let Some(lo) = s.psi_min {
                if !(lo > 0.0 && lo <= s.psi_max) {
                    return bad("sweep.psi_min", "need 0 < psi_min <= psi_max");
                }
            }
            if !(s.psi_guard >= 0.0) {
                return bad("sweep.psi_guard", "must be nonnegative");
            }
            if s.risks.is_empty() {
                return bad("sweep.risks", "list at least one risk kind");
            }
            for r in &s.risks {
                crate::data::RiskKind::parse(r).map_err(|e| CliError::Usage(format!("sweep.risks: {e}")))?;
            }
        }
        if let Some(pc) = &self.path {
            if pc.psi_bar.is_empty() && pc.lambda_bar.is_empty() {
                return bad("path.psi_bar", "give at least one psi_bar or lambda_bar anchor");
            }
            if !pc.psi_bar.is_empty() && !pc.lambda_bar.is_empty() {
                return bad("path.lambda_bar", "use either psi_bar or lambda_bar anchors, not both");
            }
            if pc.psi_bar.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return bad("path.psi_bar", "anchors must be positive and finite");
            }
            if pc.lambda_bar.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return bad("path.lambda_bar", "anchors must be nonnegative and finite");
            }
            if !pc.lambda_bar.is_empty() && pc.source != PathSource::Population {
                return bad("path.lambda_bar", "lambda_bar anchors need source = \"population\"");
            }
            if pc.thetas == 0 {
                return bad("path.thetas", "need at least one path point");
            }
            if pc.functionals.is_empty() {
                return bad("path.functionals", "list at least one functional");
            }
            for f in &pc.functionals {
                crate::path::FunctionalKind::parse(f).map_err(|e| CliError::Usage(format!("path.functionals: {e}")))?;
            }
            if pc.lambda_bar_m == Some(0) {
                return bad("path.lambda_bar_m", "must be positive");
            }
        }
        if let Some(c) = &self.check {
            if c.n <= c.p || c.p < 10 {
                return bad("check.n", "need n > p >= 10");
            }
            if c.random_matrices == 0 {
                return bad("check.random_matrices", "must be positive");
            }
        }
        Ok(())
    }
}
