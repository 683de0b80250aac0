//! Run configuration read from TOML.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::BprConfig;
use crate::corpus::SubsetMode;
use crate::eval::{EvalSpec, DEFAULT_KS, DEFAULT_REPS};
use crate::llm::{RouteTable, DEFAULT_API_KEY_VAR};
use crate::optimizer::TrainConfig;
use crate::ranker::{Strategy, DEFAULT_SLATE_SIZE};
use crate::script::ScriptKind;
use crate::synthetic::SyntheticSpec;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Read { path: String, reason: String },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Live,
    Record,
    Replay,
    #[default]
    Script,
}

impl Backend {
    pub fn needs_network(self) -> bool {
        matches!(self, Backend::Live | Backend::Record)
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Live => "live",
            Backend::Record => "record",
            Backend::Replay => "replay",
            Backend::Script => "script",
        })
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(Backend::Live),
            "record" => Ok(Backend::Record),
            "replay" => Ok(Backend::Replay),
            "script" => Ok(Backend::Script),
            other => Err(format!("unknown backend `{other}` (expected live|record|replay|script)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// JSON-lines interaction file for `ingest`.
    pub reviews: Option<PathBuf>,
    /// JSON-lines item metadata for `ingest`.
    pub metadata: Option<PathBuf>,
    /// A dataset snapshot to sample from instead of ingesting.
    pub dataset: Option<PathBuf>,
    /// Generate a planted-signal dataset instead of reading files.
    pub synthetic: Option<SyntheticSpec>,
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubsetConfig {
    /// None keeps every user.
    pub n_users: Option<usize>,
    pub mode: SubsetMode,
    pub seed: u64,
}

impl Default for SubsetConfig {
    fn default() -> Self {
        Self { n_users: Some(100), mode: SubsetMode::Dense, seed: 2024 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub backend: Backend,
    pub script: ScriptKind,
    pub replay_store: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub api_key_env: String,
    pub max_inflight: usize,
    /// Directory of `.tmpl` files overriding built-in prompts.
    pub prompt_dir: Option<PathBuf>,
    pub routes: RouteTable,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Script,
            script: ScriptKind::KeywordAffinity,
            replay_store: None,
            endpoint: None,
            api_key_env: DEFAULT_API_KEY_VAR.to_string(),
            max_inflight: crate::llm::DEFAULT_INFLIGHT,
            prompt_dir: None,
            routes: RouteTable::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub strategies: Vec<Strategy>,
    pub reps: usize,
    pub ks: Vec<usize>,
    pub slate_size: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            strategies: vec![Strategy::Pop, Strategy::Bm25, Strategy::Bpr, Strategy::B, Strategy::BR, Strategy::BH, Strategy::LlmRank],
            reps: DEFAULT_REPS,
            ks: DEFAULT_KS.to_vec(),
            slate_size: DEFAULT_SLATE_SIZE,
            seed: 2024,
        }
    }
}

impl EvalConfig {
    pub fn spec(&self) -> EvalSpec {
        EvalSpec { reps: self.reps, ks: self.ks.clone(), slate_size: self.slate_size, seed: self.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub bias_seed: u64,
    pub seed_user: Option<String>,
    pub special_text: String,
    pub keywords: Vec<String>,
    pub query: Option<String>,
    pub warmup_neighbors: usize,
    pub cold_strategy: Strategy,
    pub review_authors: usize,
    pub review_max_words: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            bias_seed: 2024,
            seed_user: None,
            special_text: "I love music that evokes emotions and creates a deep emotional connection with the listener.".into(),
            keywords: vec!["emotional connection".into(), "evokes emotions".into()],
            query: Some("Do you tend to favor music that evokes emotions?".into()),
            warmup_neighbors: crate::agents::DEFAULT_WARMUP_NEIGHBORS,
            cold_strategy: Strategy::B,
            review_authors: 5,
            review_max_words: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub subset: SubsetConfig,
    pub llm: LlmConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub bpr: BprConfig,
    pub probes: ProbeConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("runs/default") }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), reason: e.to_string() })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Every problem with the configuration, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let d = &self.data;
        let sources = usize::from(d.reviews.is_some()) + usize::from(d.dataset.is_some()) + usize::from(d.synthetic.is_some());
        if sources == 0 {
            errs.push("data: set one of `reviews`, `dataset` or `synthetic`".to_string());
        }
        if sources > 1 {
            errs.push("data: `reviews`, `dataset` and `synthetic` are mutually exclusive".to_string());
        }
        if d.metadata.is_some() && d.reviews.is_none() {
            errs.push("data.metadata requires data.reviews".to_string());
        }
        for (name, p) in [("data.reviews", &d.reviews), ("data.metadata", &d.metadata), ("data.dataset", &d.dataset)] {
            if let Some(p) = p {
                if !p.exists() {
                    errs.push(format!("{name}: {} does not exist", p.display()));
                }
            }
        }
        if let Some(s) = &d.synthetic {
            errs.extend(s.validate());
        }
        if self.subset.n_users == Some(0) {
            errs.push("subset.n_users must be positive".to_string());
        }

        let l = &self.llm;
        match l.backend {
            Backend::Replay => match &l.replay_store {
                None => errs.push("llm.backend = replay needs llm.replay_store".to_string()),
                Some(p) if !p.exists() => errs.push(format!("llm.replay_store: {} does not exist", p.display())),
                _ => {}
            },
            Backend::Record if l.replay_store.is_none() => {
                errs.push("llm.backend = record needs llm.replay_store".to_string())
            }
            _ => {}
        }
        if l.backend.needs_network() {
            if l.endpoint.as_deref().is_none_or(|e| e.trim().is_empty()) {
                errs.push(format!("llm.backend = {} needs llm.endpoint", l.backend));
            }
            if std::env::var(&l.api_key_env).is_err() {
                errs.push(format!("llm.backend = {} needs the {} environment variable", l.backend, l.api_key_env));
            }
        }
        if let Some(p) = &l.prompt_dir {
            if !p.is_dir() {
                errs.push(format!("llm.prompt_dir: {} is not a directory", p.display()));
            }
        }
        if l.max_inflight == 0 {
            errs.push("llm.max_inflight must be positive".to_string());
        }
        for kind in crate::llm::TaskKind::ALL {
            if l.routes.route_model(kind).is_err() {
                errs.push(format!("llm.routes has no model for {kind}"));
            }
        }

        errs.extend(self.train.validate().into_iter().map(|e| format!("train: {e}")));
        if self.eval.strategies.is_empty() {
            errs.push("eval.strategies must not be empty".to_string());
        }
        errs.extend(self.eval.spec().validate());
        errs.extend(self.bpr.validate());
        if self.probes.keywords.iter().all(|k| k.trim().is_empty()) {
            errs.push("probes.keywords must contain a phrase".to_string());
        }
        if self.probes.review_max_words == 0 {
            errs.push("probes.review_max_words must be positive".to_string());
        }
        if !self.probes.cold_strategy.uses_llm() {
            errs.push("probes.cold_strategy must be a language-model strategy".to_string());
        }
        errs
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let errs = self.problems();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}
