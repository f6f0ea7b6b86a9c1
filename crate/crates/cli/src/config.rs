//! Run configuration read from TOML. Every section is optional; the
//! resolved form is echoed into output manifests and can be fed back in.

use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};
use beamcal::{
    AnchorSpec, CalError, CoopConfig, Manifest, Method, ScenarioConfig, SimilarityMode, SolverConfig,
    WeightScheme,
};
use serde::{Deserialize, Serialize};

pub const DEFAULT_PRESET: &str = "2d-table2";

/// A mini-batch size, or the whole data set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BatchRepr", into = "BatchRepr")]
pub struct BatchSize(pub Option<usize>);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BatchRepr {
    Size(usize),
    Word(String),
}

impl TryFrom<BatchRepr> for BatchSize {
    type Error = CalError;

    fn try_from(r: BatchRepr) -> Result<Self, CalError> {
        match r {
            BatchRepr::Size(0) => Err(CalError::Config("batch size must be at least 1".into())),
            BatchRepr::Size(n) => Ok(Self(Some(n))),
            BatchRepr::Word(w) => w.parse(),
        }
    }
}

impl From<BatchSize> for BatchRepr {
    fn from(b: BatchSize) -> Self {
        match b.0 {
            Some(n) => Self::Size(n),
            None => Self::Word("full".into()),
        }
    }
}

impl FromStr for BatchSize {
    type Err = CalError;

    fn from_str(s: &str) -> Result<Self, CalError> {
        match s.trim() {
            "full" => Ok(Self(None)),
            other => match other.parse::<usize>() {
                Ok(n) if n > 0 => Ok(Self(Some(n))),
                _ => Err(CalError::Config(format!("batch size {other:?} is not a positive integer or \"full\""))),
            },
        }
    }
}

impl std::fmt::Display for BatchSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            Some(n) => write!(f, "{n}"),
            None => f.write_str("full"),
        }
    }
}

/// Partial solver settings layered over a method's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOverrides {
    pub learning_rate: Option<f64>,
    pub batch_size: Option<BatchSize>,
    pub max_iters: Option<usize>,
    pub rel_tol: Option<f64>,
    pub patience: Option<usize>,
    pub seed: Option<u64>,
    pub anchors: Option<AnchorSpec>,
    pub normalize_data: Option<bool>,
}

impl SolverOverrides {
    pub fn apply(&self, mut cfg: SolverConfig) -> SolverConfig {
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v.0;
        }
        if let Some(v) = self.max_iters {
            cfg.max_iters = v;
        }
        if let Some(v) = self.rel_tol {
            cfg.rel_tol = v;
        }
        if let Some(v) = self.patience {
            cfg.patience = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.anchors {
            cfg.anchors = v.clone();
        }
        if let Some(v) = self.normalize_data {
            cfg.normalize_data = v;
        }
        cfg
    }

    /// Every field set from `cfg`.
    fn filled(cfg: &SolverConfig) -> Self {
        Self {
            learning_rate: Some(cfg.learning_rate),
            batch_size: Some(BatchSize(cfg.batch_size)),
            max_iters: Some(cfg.max_iters),
            rel_tol: Some(cfg.rel_tol),
            patience: Some(cfg.patience),
            seed: Some(cfg.seed),
            anchors: Some(cfg.anchors.clone()),
            normalize_data: Some(cfg.normalize_data),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoopOverrides {
    pub rounds: Option<usize>,
    /// Local iterations between fusions.
    pub local_iters: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<BatchSize>,
    pub weights: Option<WeightScheme>,
    pub split_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub scenario: Option<ScenarioConfig>,
    pub similarity: Option<SimilarityMode>,
    pub ao: SolverOverrides,
    pub rel: SolverOverrides,
    pub ael: SolverOverrides,
    pub coop: CoopOverrides,
}

/// Default learning rates of the gradient methods.
pub const REL_LR: f64 = 0.02;
pub const AEL_LR: f64 = 0.03;

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text).map_err(|e| CalError::Config(e.to_string()))?)
    }

    /// Scenario from, in order: the command-line preset, this file's
    /// scenario table, this file's preset, the config embedded in `embedded`,
    /// then the default preset.
    pub fn scenario(&self, cli_preset: Option<&str>, embedded: Option<&Manifest>) -> Result<ScenarioConfig> {
        if let Some(p) = cli_preset {
            return Ok(ScenarioConfig::preset(p)?);
        }
        if let Some(s) = &self.scenario {
            return Ok(s.clone());
        }
        if let Some(p) = &self.preset {
            return Ok(ScenarioConfig::preset(p)?);
        }
        if let Some(text) = embedded.and_then(|m| m.config.as_deref()) {
            let inner = Self::parse(text).context("config embedded in the input manifest")?;
            if inner.scenario.is_some() || inner.preset.is_some() {
                return inner.scenario(None, None);
            }
        }
        Ok(ScenarioConfig::preset(DEFAULT_PRESET)?)
    }

    pub fn similarity(&self) -> SimilarityMode {
        self.similarity.unwrap_or_default()
    }

    pub fn ao(&self, seed: Option<u64>) -> SolverConfig {
        with_seed(self.ao.apply(SolverConfig::ao()), seed)
    }

    pub fn rel(&self, seed: Option<u64>) -> SolverConfig {
        with_seed(self.rel.apply(SolverConfig::gd_rel(REL_LR)), seed)
    }

    /// Anchors default to the scenario's evaluation grid.
    pub fn ael(&self, scenario: &ScenarioConfig, seed: Option<u64>) -> SolverConfig {
        let mut base = SolverConfig::gd_ael(AEL_LR);
        base.anchors = scenario.evaluation.anchor_spec();
        with_seed(self.ael.apply(base), seed)
    }

    pub fn solver(&self, method: Method, scenario: &ScenarioConfig, seed: Option<u64>) -> SolverConfig {
        match method {
            Method::Ao => self.ao(seed),
            Method::GdRel => self.rel(seed),
            Method::GdAel => self.ael(scenario, seed),
        }
    }

    pub fn coop(&self, seed: Option<u64>) -> CoopConfig {
        let mut cfg = CoopConfig::default();
        let o = &self.coop;
        if let Some(v) = o.rounds {
            cfg.rounds = v;
        }
        if let Some(v) = o.local_iters {
            cfg.local.max_iters = v;
        }
        if let Some(v) = o.learning_rate {
            cfg.local.learning_rate = v;
        }
        if let Some(v) = o.batch_size {
            cfg.local.batch_size = v.0;
        }
        if let Some(v) = &o.weights {
            cfg.weights = v.clone();
        }
        cfg.local = with_seed(cfg.local, seed);
        cfg
    }

    pub fn split_seed(&self, seed: Option<u64>) -> u64 {
        seed.or(self.coop.split_seed).unwrap_or(0)
    }

    /// Fully resolved copy for echoing into manifests.
    pub fn resolved(&self, scenario: &ScenarioConfig, seed: Option<u64>) -> Self {
        let coop = self.coop(seed);
        Self {
            preset: None,
            scenario: Some(scenario.clone()),
            similarity: Some(self.similarity()),
            ao: SolverOverrides::filled(&self.ao(seed)),
            rel: SolverOverrides::filled(&self.rel(seed)),
            ael: SolverOverrides::filled(&self.ael(scenario, seed)),
            coop: CoopOverrides {
                rounds: Some(coop.rounds),
                local_iters: Some(coop.local.max_iters),
                learning_rate: Some(coop.local.learning_rate),
                batch_size: Some(BatchSize(coop.local.batch_size)),
                weights: Some(coop.weights),
                split_seed: Some(self.split_seed(seed)),
            },
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self).map_err(|e| CalError::Config(e.to_string()))?)
    }
}

fn with_seed(mut cfg: SolverConfig, seed: Option<u64>) -> SolverConfig {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg
}
