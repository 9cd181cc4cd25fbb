//! Experiment configuration files.
//!
//! A config is a TOML document with `[data]`, `[arch]`, `[objective]`,
//! `[train]` and an optional `[eval]` table. Values given with `--set
//! key.path=value` replace file values before validation, so the precedence
//! is: command-line flags, then the file, then built-in defaults.

use std::path::{Path, PathBuf};

use rfdlc::metrics::{NamedRate, UncertaintyScore};
use rfdlc::trainer::default_milestones;
use rfdlc::{
    EvalOptions, MlpArchitecture, ObjectiveConfig, Penalty, TrainConfig, UtilityMatrix, WeightForm,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_BETA: f64 = 0.9995;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub data: DataSection,
    #[serde(default)]
    pub arch: ArchSection,
    pub objective: ObjectiveSection,
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Training CSV, relative to the working directory.
    pub train: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    /// Inferred from the training labels when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSection {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_particles")]
    pub num_particles: usize,
    #[serde(default)]
    pub shared_trunk_layers: usize,
}

fn default_hidden() -> Vec<usize> {
    vec![32]
}

fn default_particles() -> usize {
    3
}

impl Default for ArchSection {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            num_particles: default_particles(),
            shared_trunk_layers: 0,
        }
    }
}

/// Utility matrix by builder kind; `K` comes from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilitySpec {
    OneHot,
    TailSensitive { u: f64 },
    Penalized { penalties: Vec<Penalty> },
    Raw { values: Vec<f64> },
    File { path: PathBuf },
}

impl UtilitySpec {
    pub fn build(&self, k: usize) -> Result<UtilityMatrix, CliError> {
        let u = match self {
            UtilitySpec::OneHot => UtilityMatrix::one_hot(k)?,
            UtilitySpec::TailSensitive { u } => UtilityMatrix::tail_sensitive(k, *u)?,
            UtilitySpec::Penalized { penalties } => UtilityMatrix::penalized(k, penalties)?,
            UtilitySpec::Raw { values } => UtilityMatrix::raw(k, values.clone())?,
            UtilitySpec::File { path } => {
                let u = UtilityMatrix::load(path).map_err(CliError::config)?;
                if u.num_classes() != k {
                    return Err(CliError::data(format!(
                        "utility file {} is {}x{}, data has {k} classes",
                        path.display(),
                        u.num_classes(),
                        u.num_classes()
                    )));
                }
                u
            }
        };
        Ok(u)
    }

    /// Command-line form: `one_hot`, `tail_sensitive:<u>`, `file:<path>`, or
    /// a bare path to a utility file.
    pub fn parse_flag(s: &str) -> Result<Self, CliError> {
        match s.split_once(':') {
            None if s == "one_hot" => Ok(UtilitySpec::OneHot),
            Some(("tail_sensitive", u)) => u
                .trim()
                .parse()
                .map(|u| UtilitySpec::TailSensitive { u })
                .map_err(|_| CliError::config(format!("bad tail_sensitive value `{u}`"))),
            Some(("file", p)) => Ok(UtilitySpec::File { path: p.into() }),
            _ if Path::new(s).is_file() => Ok(UtilitySpec::File { path: s.into() }),
            _ => Err(CliError::config(format!(
                "unrecognized utility `{s}` (use one_hot, tail_sensitive:<u>, file:<path>)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub utility: UtilitySpec,
    pub weight_form: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_epsilon_var")]
    pub epsilon_var: f64,
    #[serde(default = "one")]
    pub repulsion_scale: f64,
    #[serde(default)]
    pub normalize_weights: bool,
}

fn one() -> f64 {
    1.0
}

fn default_tau() -> f64 {
    40.0
}

fn default_epsilon_var() -> f64 {
    rfdlc::objective::DEFAULT_EPSILON_VAR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    /// Defaults to 60% and 80% of `epochs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub milestones: Option<Vec<usize>>,
    #[serde(default = "default_decay")]
    pub lr_decay: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_lr() -> f64 {
    0.1
}

fn default_batch() -> usize {
    128
}

fn default_momentum() -> f64 {
    0.9
}

fn default_decay() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_ratios")]
    pub tail_ratios: Vec<f64>,
    #[serde(default = "default_bins")]
    pub ece_bins: usize,
    #[serde(default)]
    pub score: UncertaintyScore,
    /// Decision utility; the training utility when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilitySpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub custom_rates: Vec<NamedRate>,
}

fn default_ratios() -> Vec<f64> {
    rfdlc::metrics::DEFAULT_TAIL_RATIOS.to_vec()
}

fn default_bins() -> usize {
    rfdlc::metrics::DEFAULT_ECE_BINS
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            tail_ratios: default_ratios(),
            ece_bins: default_bins(),
            score: UncertaintyScore::default(),
            utility: None,
            custom_rates: Vec::new(),
        }
    }
}

impl EvalSection {
    pub fn options(&self) -> EvalOptions {
        EvalOptions {
            tail_ratios: self.tail_ratios.clone(),
            ece_bins: self.ece_bins,
            score: self.score,
            custom_rates: self.custom_rates.clone(),
        }
    }
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_value(value: &str) -> toml::Value {
    match format!("v = {value}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(value.into())),
        Err(_) => toml::Value::String(value.into()),
    }
}

/// Applies `key.path=value` to a document.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override `{assignment}` is not key=value")))?;
    set_path(doc, key.trim(), parse_value(value.trim()))
}

pub fn set_path(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(format!("bad override key `{key}`")));
    }
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(format!("`{part}` in `{key}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl Config {
    pub fn read_table(path: &Path) -> Result<toml::Table, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        text.parse::<toml::Table>()
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    /// Deserializes with field paths in error messages.
    pub fn from_table(table: toml::Table) -> Result<Self, CliError> {
        let cfg: Config = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner().to_string();
            let inner = inner.lines().next().unwrap_or_default();
            if path == "." || path.is_empty() {
                CliError::config(format!("config: {inner}"))
            } else {
                CliError::config(format!("config field `{path}`: {inner}"))
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = Self::read_table(path)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    pub fn to_toml_string(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn to_table(&self) -> Result<toml::Table, CliError> {
        self.to_toml_string()?
            .parse::<toml::Table>()
            .map_err(|e| CliError::config(e.to_string()))
    }

    fn validate(&self) -> Result<(), CliError> {
        self.weight_form()?;
        if self.arch.num_particles == 0 {
            return Err(CliError::config("config field `arch.num_particles`: must be at least 1"));
        }
        if self.arch.hidden.contains(&0) {
            return Err(CliError::config("config field `arch.hidden`: layer sizes must be positive"));
        }
        self.objective_config(UtilityMatrix::one_hot(2)?)
            .validate()
            .map_err(CliError::config)?;
        Ok(())
    }

    pub fn weight_form(&self) -> Result<WeightForm, CliError> {
        let beta = match (self.objective.weight_form.as_str(), self.objective.beta) {
            ("effective_number", None) => Some(DEFAULT_BETA),
            (_, b) => b,
        };
        WeightForm::from_name(&self.objective.weight_form, beta)
            .map_err(|e| CliError::config(format!("config field `objective.weight_form`: {e}")))
    }

    pub fn objective_config(&self, utility: UtilityMatrix) -> ObjectiveConfig {
        let o = &self.objective;
        let mut cfg = ObjectiveConfig::new(utility, self.weight_form().unwrap_or(WeightForm::Constant));
        cfg.alpha = o.alpha;
        cfg.lambda = o.lambda;
        cfg.tau = o.tau;
        cfg.epsilon_var = o.epsilon_var;
        cfg.repulsion_scale = o.repulsion_scale;
        cfg.normalize_weights = o.normalize_weights;
        cfg
    }

    pub fn train_config(&self, utility: UtilityMatrix) -> TrainConfig {
        let t = &self.train;
        let mut cfg = TrainConfig::new(self.objective_config(utility), t.epochs, t.seed);
        cfg.learning_rate = t.learning_rate;
        cfg.batch_size = t.batch_size;
        cfg.momentum = t.momentum;
        cfg.milestones = t.milestones.clone().unwrap_or_else(|| default_milestones(t.epochs));
        cfg.lr_decay = t.lr_decay;
        cfg
    }

    pub fn architecture(&self, input_dim: usize, num_classes: usize) -> Result<MlpArchitecture, CliError> {
        let mut sizes = vec![input_dim];
        sizes.extend(&self.arch.hidden);
        sizes.push(num_classes);
        Ok(MlpArchitecture::new(sizes, self.arch.shared_trunk_layers)?)
    }

    /// Every default made explicit, for the reproducibility echo.
    pub fn resolved(&self, num_classes: usize) -> Self {
        let mut r = self.clone();
        r.data.num_classes = Some(num_classes);
        if r.objective.weight_form == "effective_number" && r.objective.beta.is_none() {
            r.objective.beta = Some(DEFAULT_BETA);
        }
        if r.train.milestones.is_none() {
            r.train.milestones = Some(default_milestones(r.train.epochs));
        }
        r
    }

    pub fn decision_utility(&self) -> &UtilitySpec {
        self.eval.utility.as_ref().unwrap_or(&self.objective.utility)
    }
}
