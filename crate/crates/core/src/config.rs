//! Run configuration: one TOML-serializable tree covering every tunable
//! of the lab, with spec'd defaults, dotted-path overrides, field-level
//! validation, and a stable digest for checkpoint provenance.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::rl::PpoConfig;

/// Simulator settings shared by training and evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvBlock {
    /// Objects placed besides the goal object.
    pub n_distractors: usize,
    /// Per-episode step budget.
    pub max_steps: usize,
    /// Keep episodes alive after a wrong termination request (training aid).
    pub soft_termination: bool,
}

impl Default for EnvBlock {
    fn default() -> Self {
        EnvBlock {
            n_distractors: 2,
            max_steps: crate::simworld::DEFAULT_MAX_STEPS as usize,
            soft_termination: true,
        }
    }
}

/// Budget and cadence of a policy-gradient training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainBlock {
    /// Total environment steps before training stops.
    pub max_env_steps: u64,
    /// Parallel rollout workers.
    pub n_workers: usize,
    /// Environment steps between policy evaluations.
    pub eval_every: u64,
    /// Episodes per evaluation.
    pub eval_episodes: usize,
    /// Stop early once the evaluation metric reaches this value (disabled
    /// when negative).
    pub target_metric: f64,
}

impl Default for TrainBlock {
    fn default() -> Self {
        TrainBlock {
            max_env_steps: 1_000_000,
            n_workers: 8,
            eval_every: 25_000,
            eval_episodes: 40,
            target_metric: -1.0,
        }
    }
}

/// Two-level agent wiring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HierarchyBlock {
    /// Steps between high-level decisions.
    pub period: u32,
    /// How the high level is trained: `frozen` (against a frozen
    /// controller) or `coverage` (room-graph pre-training).
    pub scheme: String,
}

impl Default for HierarchyBlock {
    fn default() -> Self {
        HierarchyBlock { period: crate::hierarchy::META_PERIOD, scheme: "coverage".to_string() }
    }
}

/// Goal-assessment data collection and training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaBlock {
    /// Labeled frames to collect.
    pub n_frames: usize,
    /// Steps walked per collection episode.
    pub episode_steps: usize,
    /// Keep every n-th non-qualifying frame.
    pub nonqual_stride: usize,
    pub lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Probability above which the classifier reports "reached".
    pub threshold: f64,
}

impl Default for GaBlock {
    fn default() -> Self {
        GaBlock {
            n_frames: 100_000,
            episode_steps: 60,
            nonqual_stride: 7,
            lr: 1e-3,
            batch: 64,
            max_epochs: 30,
            patience: 3,
            threshold: 0.5,
        }
    }
}

/// Evaluation bench settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalBlock {
    /// Independent runs (reported as mean ± std).
    pub n_runs: usize,
    /// Episodes per run.
    pub n_episodes: usize,
    pub max_steps: usize,
}

impl Default for EvalBlock {
    fn default() -> Self {
        EvalBlock { n_runs: 10, n_episodes: 100, max_steps: crate::simworld::DEFAULT_MAX_STEPS as usize }
    }
}

/// One named seed per subsystem, so any stage can be reproduced alone.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedBlock {
    /// Plan split and dataset collection.
    pub data: u64,
    pub controller: u64,
    pub meta: u64,
    pub baseline: u64,
    pub ga: u64,
    pub eval: u64,
}

impl Default for SeedBlock {
    fn default() -> Self {
        SeedBlock { data: 7, controller: 11, meta: 13, baseline: 29, ga: 17, eval: 19 }
    }
}

/// The complete configuration of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub environment: EnvBlock,
    pub rl: PpoConfig,
    pub training: TrainBlock,
    pub hierarchy: HierarchyBlock,
    pub ga: GaBlock,
    pub eval: EvalBlock,
    pub seeds: SeedBlock,
}

impl RunConfig {
    /// Parses a TOML document; absent fields take their defaults, unknown
    /// fields are rejected.
    pub fn from_toml(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::new("<config>", e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `key=value` overrides with dotted keys (`rl.gamma=0.9`).
    /// The key must name an existing leaf; the value must parse as that
    /// leaf's type.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<RunConfig, ConfigError> {
        let mut tree =
            toml::Value::try_from(self).map_err(|e| ConfigError::new("<config>", e.to_string()))?;
        for spec in overrides {
            let (key, raw) = spec
                .split_once('=')
                .ok_or_else(|| ConfigError::new(spec, "override must look like key=value"))?;
            let (key, raw) = (key.trim(), raw.trim());
            set_leaf(&mut tree, key, raw)?;
        }
        tree.try_into().map_err(|e| ConfigError::new("<config>", e.to_string()))
    }

    /// Checks every field; the error names the offending dotted path.
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::new(field, format!("must be a positive finite number, got {v}")))
            }
        }
        fn at_least_one(field: &str, v: u64) -> Result<(), ConfigError> {
            if v >= 1 {
                Ok(())
            } else {
                Err(ConfigError::new(field, "must be at least 1"))
            }
        }

        at_least_one("environment.max_steps", self.environment.max_steps as u64)?;

        positive("rl.lr", self.rl.lr)?;
        if !(self.rl.gamma >= 0.0 && self.rl.gamma < 1.0) {
            return Err(ConfigError::new("rl.gamma", format!("must be in [0, 1), got {}", self.rl.gamma)));
        }
        if !(self.rl.lam >= 0.0 && self.rl.lam <= 1.0) {
            return Err(ConfigError::new("rl.lam", format!("must be in [0, 1], got {}", self.rl.lam)));
        }
        positive("rl.clip", self.rl.clip)?;
        if !self.rl.entropy_coef.is_finite() || self.rl.entropy_coef < 0.0 {
            return Err(ConfigError::new("rl.entropy_coef", "must be finite and non-negative"));
        }
        if !self.rl.value_coef.is_finite() || self.rl.value_coef < 0.0 {
            return Err(ConfigError::new("rl.value_coef", "must be finite and non-negative"));
        }
        at_least_one("rl.epochs", self.rl.epochs as u64)?;
        at_least_one("rl.minibatch_segments", self.rl.minibatch_segments as u64)?;
        positive("rl.max_grad_norm", self.rl.max_grad_norm)?;
        at_least_one("rl.t_roll", self.rl.t_roll as u64)?;

        at_least_one("training.max_env_steps", self.training.max_env_steps)?;
        at_least_one("training.n_workers", self.training.n_workers as u64)?;
        at_least_one("training.eval_every", self.training.eval_every)?;
        at_least_one("training.eval_episodes", self.training.eval_episodes as u64)?;
        if !self.training.target_metric.is_finite() {
            return Err(ConfigError::new("training.target_metric", "must be finite"));
        }

        at_least_one("hierarchy.period", self.hierarchy.period as u64)?;
        if !matches!(self.hierarchy.scheme.as_str(), "frozen" | "coverage") {
            return Err(ConfigError::new(
                "hierarchy.scheme",
                format!("must be `frozen` or `coverage`, got `{}`", self.hierarchy.scheme),
            ));
        }

        at_least_one("ga.episode_steps", self.ga.episode_steps as u64)?;
        at_least_one("ga.nonqual_stride", self.ga.nonqual_stride as u64)?;
        positive("ga.lr", self.ga.lr)?;
        at_least_one("ga.batch", self.ga.batch as u64)?;
        at_least_one("ga.max_epochs", self.ga.max_epochs as u64)?;
        if !(self.ga.threshold > 0.0 && self.ga.threshold < 1.0) {
            return Err(ConfigError::new(
                "ga.threshold",
                format!("must be strictly between 0 and 1, got {}", self.ga.threshold),
            ));
        }

        at_least_one("eval.n_runs", self.eval.n_runs as u64)?;
        at_least_one("eval.n_episodes", self.eval.n_episodes as u64)?;
        at_least_one("eval.max_steps", self.eval.max_steps as u64)?;

        Ok(())
    }

    /// Stable digest of the full configuration, for stamping checkpoints
    /// and run manifests.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canon = serde_json::to_string(self).expect("config serializes");
        format!("{:x}", Sha256::digest(canon.as_bytes()))
    }
}

fn set_leaf(tree: &mut toml::Value, dotted: &str, raw: &str) -> Result<(), ConfigError> {
    let mut node = tree;
    let parts: Vec<&str> = dotted.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| ConfigError::new(&parts[..i].join("."), "is not a table"))?;
        node = table
            .get_mut(*part)
            .ok_or_else(|| ConfigError::new(&parts[..=i].join("."), "no such field"))?;
    }
    let parsed = match node {
        toml::Value::Integer(_) => raw
            .parse::<i64>()
            .map(toml::Value::Integer)
            .map_err(|_| ConfigError::new(dotted, format!("expected an integer, got `{raw}`"))),
        toml::Value::Float(_) => raw
            .parse::<f64>()
            .map(toml::Value::Float)
            .map_err(|_| ConfigError::new(dotted, format!("expected a number, got `{raw}`"))),
        toml::Value::Boolean(_) => raw
            .parse::<bool>()
            .map(toml::Value::Boolean)
            .map_err(|_| ConfigError::new(dotted, format!("expected true or false, got `{raw}`"))),
        toml::Value::String(_) => Ok(toml::Value::String(raw.to_string())),
        _ => Err(ConfigError::new(dotted, "field is not a scalar")),
    }?;
    *node = parsed;
    Ok(())
}
