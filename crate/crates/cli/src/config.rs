//! Command configurations and the in-repo presets.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use fairshift::fairmaml::{FinetuneConfig, MetaConfig};
use fairshift::metrics::FairnessNotion;
use fairshift::nn::TaskLossSpec;
use fairshift::registry::Registry;
use fairshift::shiftwarn::ShiftConfig;
use fairshift::slim::SlimConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Where a dataset comes from. Relative paths resolve against the data
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    /// Raw ProPublica two-year file, preprocessed on load.
    Compas { path: PathBuf },
    /// Any CSV with a column-role schema file.
    Csv { path: PathBuf, schema: PathBuf },
    /// One state of the UCI Communities and Crime file.
    Communities { path: PathBuf, task: TaskRef },
    /// Evaluation set of the biased synthetic task; fine-tuning uses its
    /// five-point support.
    SyntheticBiased {
        #[serde(default = "default_eval_size")]
        eval_size: usize,
    },
}

fn default_eval_size() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskRef {
    Id(String),
    /// The `index`-th task of a seeded hold-out draw of `n` tasks, the same
    /// draw `train` makes with the same seed.
    Holdout { n: usize, index: usize },
}

/// Rows a command works on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Select {
    #[default]
    All,
    /// Seeded test part of a train/test split; model fitting uses the rest.
    Holdout { fraction: f64 },
    /// Rows left after drawing `k` fine-tuning rows with the run seed.
    FinetuneRest { k: usize },
}

/// Meta-training task distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskSourceSpec {
    Synthetic {
        pool_size: usize,
        /// Fresh synthetic tasks kept out of training for sweeps.
        #[serde(default)]
        holdout: usize,
        #[serde(default = "default_holdout_rows")]
        holdout_rows: usize,
    },
    Communities { path: PathBuf, holdout: usize },
}

fn default_holdout_rows() -> usize {
    200
}

fn default_fit_trainer() -> String {
    "pretrain".into()
}

fn default_meta_trainer() -> String {
    "fair-maml".into()
}

fn yes() -> bool {
    true
}

/// Training of a single-dataset model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default = "default_fit_trainer")]
    pub trainer: String,
    pub meta: MetaConfig,
    #[serde(default = "yes")]
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    Path(PathBuf),
    Fit(FitConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitCommand {
    pub command: String,
    #[serde(default)]
    pub seed: u64,
    pub data: DataSpec,
    #[serde(default)]
    pub select: Select,
    pub fit: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCommand {
    pub command: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_meta_trainer")]
    pub trainer: String,
    pub tasks: TaskSourceSpec,
    pub meta: MetaConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneCommand {
    pub command: String,
    #[serde(default)]
    pub seed: u64,
    pub model: PathBuf,
    pub data: DataSpec,
    pub finetune: FinetuneConfig,
    #[serde(default)]
    pub spec: TaskLossSpec,
    /// Decision-surface samples for two-feature models.
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalCommand {
    pub command: String,
    #[serde(default)]
    pub seed: u64,
    pub model: PathBuf,
    pub data: DataSpec,
    #[serde(default)]
    pub select: Select,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCommand {
    pub command: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_meta_trainer")]
    pub trainer: String,
    pub tasks: TaskSourceSpec,
    pub meta: MetaConfig,
    pub gammas: Vec<f64>,
    pub finetune: FinetuneConfig,
    pub repeats: usize,
}

fn default_n_shifts() -> usize {
    2000
}

fn default_warn_test_fraction() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarnCommand {
    pub command: String,
    #[serde(default)]
    pub seed: u64,
    pub data: DataSpec,
    #[serde(default)]
    pub select: Select,
    pub model: ModelSource,
    pub notion: FairnessNotion,
    #[serde(default = "default_n_shifts")]
    pub n_shifts: usize,
    #[serde(default)]
    pub shift: ShiftConfig,
    #[serde(default)]
    pub slim: SlimConfig,
    /// Held-out share of the warning set used to score the card.
    #[serde(default = "default_warn_test_fraction")]
    pub test_fraction: f64,
}

/// Scores warning predictions made by an external classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreWarningsCommand {
    pub command: String,
    #[serde(default)]
    pub seed: u64,
    pub warning_set: PathBuf,
    /// CSV with one column `unfair` (0/1), one row per warning-set row.
    pub predictions: PathBuf,
}

/// Gives every command config uniform access to the shared fields.
pub trait CommandConfig: Serialize + DeserializeOwned {
    fn command(&self) -> &str;
    fn seed_mut(&mut self) -> &mut u64;
    /// Model file the command reads, if any.
    fn model_mut(&mut self) -> Option<&mut PathBuf> {
        None
    }
}

macro_rules! command_config {
    ($t:ty) => {
        command_config!($t, |_c| None);
    };
    ($t:ty, |$c:ident| $model:expr) => {
        impl CommandConfig for $t {
            fn command(&self) -> &str {
                &self.command
            }
            fn seed_mut(&mut self) -> &mut u64 {
                &mut self.seed
            }
            fn model_mut(&mut self) -> Option<&mut PathBuf> {
                let $c = self;
                $model
            }
        }
    };
}

command_config!(FitCommand);
command_config!(TrainCommand);
command_config!(SweepCommand);
command_config!(ScoreWarningsCommand);
command_config!(FinetuneCommand, |c| Some(&mut c.model));
command_config!(EvalCommand, |c| Some(&mut c.model));
command_config!(WarnCommand, |c| match &mut c.model {
    ModelSource::Path(p) => Some(p),
    ModelSource::Fit(_) => None,
});

/// Named presets shipped in the repository's `presets/` directory.
pub fn presets() -> &'static Registry<str> {
    static REG: OnceLock<Registry<str>> = OnceLock::new();
    REG.get_or_init(|| {
        macro_rules! preset {
            ($reg:expr, $($name:literal),* $(,)?) => {
                $reg$(.with($name, include_str!(concat!("../../../presets/", $name, ".json"))))*
            };
        }
        preset!(
            Registry::<str>::new("preset"),
            "compas-dp",
            "compas-eop",
            "compas-dp-model",
            "synthetic",
            "synthetic-desk",
            "synthetic-pretrain",
            "synthetic-desk-pretrain",
            "synthetic-biased-finetune",
            "communities",
            "communities-eop",
            "communities-desk",
            "communities-pretrain",
            "communities-warn-dp-train",
            "communities-warn-dp-finetune",
            "communities-warn-dp",
            "communities-warn-eop-train",
            "communities-warn-eop-finetune",
            "communities-warn-eop",
        )
    })
}

/// Parses a config document whose `command` field must equal `expected`.
pub fn parse_config<T: CommandConfig>(text: &str, origin: &str, expected: &str) -> CliResult<T> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::config(format!("{origin}: {e}")))?;
    match value.get("command").and_then(|c| c.as_str()) {
        Some(c) if c == expected => {}
        Some(c) => {
            return Err(CliError::config(format!(
                "{origin} is a '{c}' config, not '{expected}'"
            )))
        }
        None => return Err(CliError::config(format!("{origin}: missing \"command\" field"))),
    }
    serde_json::from_value(value).map_err(|e| CliError::config(format!("{origin}: {e}")))
}

/// Reads the config from `--config` or `--preset` (exactly one).
pub fn load_config<T: CommandConfig>(config: Option<&Path>, preset: Option<&str>, expected: &str) -> CliResult<T> {
    match (config, preset) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
            parse_config(&text, &path.display().to_string(), expected)
        }
        (None, Some(name)) => {
            let text = presets().get(name).map_err(|e| CliError::config(e.to_string()))?;
            parse_config(text, &format!("preset {name}"), expected)
        }
        (Some(_), Some(_)) => Err(CliError::config("give either --config or --preset, not both")),
        (None, None) => Err(CliError::config("one of --config or --preset is required")),
    }
}
