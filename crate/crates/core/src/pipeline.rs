//! Run directories and the command implementations behind the CLI.
//!
//! Each command reads its inputs from the run directory, writes its
//! outputs there, and refuses to replace an existing output unless the
//! run was opened with `force`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{select_warmup_neighbors, Agents, NeighborMode, Polarity, ReviewStore};
use crate::baselines::{bpr_train, BaselineError, Bm25Ranker, BprRanker, MfModel, PopRanker, RandomRanker};
use crate::config::{Backend, ConfigError, RunConfig};
use crate::corpus::{compute_stats, ingest, leave_one_out, sample_subset, CorpusError, Dataset, DatasetStats, IngestOptions, PopularityTable, Split};
use crate::eval::{
    bias_from_trace, bias_trials, cold_cases, cold_start_eval, propagation_probe, review_probe, run_eval, BiasProbeReport,
    ColdCase, ColdStartReport, ColdStartSetup, EvalError, MetricsReport, ProbeMemory, PropagationReport, PropagationSpec,
    ReviewProbeReport,
};
use crate::exec::{with_jobs, ExecPolicy};
use crate::llm::{Gateway, LlmError, ReplayStore, ScriptUpstream};
use crate::memory::{MemoryError, MemoryStore};
use crate::optimizer::{optimize, read_trace, Checkpointer, OptimizeError, StepRecord};
use crate::prompts::{Catalog, PromptError};
use crate::ranker::{LlmRanker, Ranker, Strategy};
use crate::script::scripted_gateway;
use crate::synthetic::generate;

pub const RUN_DIR_ENV: &str = "AGENTCF_RUN_DIR";

pub const CONFIG_FILE: &str = "config.toml";
pub const INGESTED_FILE: &str = "ingested.json";
pub const DATASET_FILE: &str = "dataset.json";
pub const SEEDS_FILE: &str = "seeds.json";
pub const MEMORY_FILE: &str = "memory.json";
pub const TRAIN_DIR: &str = "train";
pub const METRICS_FILE: &str = "metrics.json";
pub const EVAL_CSV: &str = "eval.csv";
pub const RANKINGS_FILE: &str = "rankings.jsonl";
pub const BPR_FILE: &str = "bpr-model.json";
pub const BIAS_FILE: &str = "bias.json";
pub const PROPAGATION_FILE: &str = "propagation.json";
pub const PROPAGATION_MEMORY_FILE: &str = "propagation-memory.json";
pub const WARMUP_FILE: &str = "warmup.json";
pub const COLD_FILE: &str = "cold-start.json";
pub const REVIEWS_FILE: &str = "reviews.json";
pub const REVIEW_STORE_FILE: &str = "reviews.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{} already exists; pass --force to replace it", .0.display())]
    Collision(PathBuf),
    #[error("{what} not found at {}; run `{command}` first", .path.display())]
    Missing { what: &'static str, path: PathBuf, command: &'static str },
    #[error("{}: {reason}", .path.display())]
    Io { path: PathBuf, reason: String },
    #[error("backend `{0}` contacts a remote service; pass --allow-live to enable it")]
    LiveNotAllowed(Backend),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Agent(#[from] crate::agents::AgentError),
}

impl PipelineError {
    /// Short error class used for exit codes and messages.
    pub fn class(&self) -> &'static str {
        match self {
            PipelineError::Config(_) | PipelineError::LiveNotAllowed(_) | PipelineError::Input(_) => "config",
            PipelineError::Collision(_) => "collision",
            PipelineError::Missing { .. } | PipelineError::Io { .. } => "io",
            PipelineError::Corpus(_) => "corpus",
            PipelineError::Llm(_) | PipelineError::Agent(_) | PipelineError::Prompt(_) => "llm",
            PipelineError::Memory(_) | PipelineError::Optimize(_) => "train",
            PipelineError::Eval(_) | PipelineError::Baseline(_) => "eval",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            "config" => 2,
            "collision" => 3,
            "io" => 4,
            "corpus" => 5,
            "llm" => 6,
            "train" => 7,
            _ => 8,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub force: bool,
    pub allow_live: bool,
    pub policy: ExecPolicy,
    pub jobs: Option<usize>,
    /// Overrides both the config and the environment.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub skipped_lines: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps_run: usize,
    pub total_steps: usize,
    pub resumed_from: Option<usize>,
    pub first_attempt_accuracy: f64,
    pub final_accuracy: f64,
}

pub struct Run {
    pub cfg: RunConfig,
    pub dir: PathBuf,
    pub opts: RunOptions,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io { path: path.to_path_buf(), reason: e.to_string() }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

impl Run {
    /// Validate the config, create the run directory and freeze the
    /// resolved config into it.
    pub fn open(cfg: RunConfig, opts: RunOptions) -> Result<Self> {
        cfg.validate()?;
        if cfg.llm.backend.needs_network() && !opts.allow_live {
            return Err(PipelineError::LiveNotAllowed(cfg.llm.backend));
        }
        let dir = opts
            .dir
            .clone()
            .or_else(|| std::env::var_os(RUN_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| cfg.output.dir.clone());
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let mut frozen = cfg.clone();
        frozen.output.dir = dir.clone();
        let text = frozen.to_toml();
        let path = dir.join(CONFIG_FILE);
        match std::fs::read_to_string(&path) {
            Ok(existing) if existing == text => {}
            Ok(_) if !opts.force => return Err(PipelineError::Collision(path)),
            _ => std::fs::write(&path, &text).map_err(|e| io_err(&path, e))?,
        }
        Ok(Self { cfg: frozen, dir, opts })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn guard(&self, name: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if p.exists() && !self.opts.force {
            return Err(PipelineError::Collision(p));
        }
        Ok(p)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let p = self.guard(name)?;
        std::fs::write(&p, contents).map_err(|e| io_err(&p, e))?;
        Ok(p)
    }

    fn read(&self, name: &str, what: &'static str, command: &'static str) -> Result<String> {
        let p = self.path(name);
        if !p.exists() {
            return Err(PipelineError::Missing { what, path: p, command });
        }
        std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))
    }

    pub fn catalog(&self) -> Result<Catalog> {
        Ok(match &self.cfg.llm.prompt_dir {
            Some(d) => Catalog::with_overrides(d)?,
            None => Catalog::builtin(),
        })
    }

    pub fn gateway(&self) -> Result<Gateway> {
        let l = &self.cfg.llm;
        let routes = l.routes.clone();
        let gw = match l.backend {
            Backend::Script => match &l.replay_store {
                Some(p) => {
                    let kind = l.script;
                    let upstream = Arc::new(ScriptUpstream::new(move |req| kind.respond(req)));
                    Gateway::record(routes, upstream, Arc::new(ReplayStore::open(p)?))
                }
                None => scripted_gateway(l.script, routes),
            },
            Backend::Replay => {
                let p = l.replay_store.as_ref().expect("validated");
                Gateway::replay(routes, Arc::new(ReplayStore::open(p)?))
            }
            Backend::Live | Backend::Record => {
                if !self.opts.allow_live {
                    return Err(PipelineError::LiveNotAllowed(l.backend));
                }
                live_gateway(self, routes)?
            }
        };
        Ok(gw.with_inflight_limit(l.max_inflight))
    }

    pub fn ingest(&self) -> Result<IngestSummary> {
        let d = &self.cfg.data;
        let reviews = d
            .reviews
            .as_ref()
            .ok_or_else(|| PipelineError::Input("`ingest` needs data.reviews".into()))?;
        let opts = IngestOptions { max_records: None, strict: d.strict };
        let ing = ingest(reviews, d.metadata.as_deref(), &opts)?;
        self.write(INGESTED_FILE, &ing.dataset.to_json())?;
        Ok(IngestSummary {
            users: ing.dataset.users.len(),
            items: ing.dataset.items.len(),
            interactions: ing.dataset.n_interactions(),
            skipped_lines: ing.skipped.len(),
        })
    }

    /// Draw the experiment subset and write it with per-user seed texts.
    pub fn sample(&self) -> Result<DatasetStats> {
        let d = &self.cfg.data;
        let (full, seeds) = if let Some(spec) = &d.synthetic {
            let data = generate(spec).map_err(PipelineError::Input)?;
            (data.dataset, data.seeds)
        } else if let Some(p) = &d.dataset {
            let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            (Dataset::from_json(&text)?, BTreeMap::new())
        } else {
            let text = self.read(INGESTED_FILE, "ingested dataset", "ingest")?;
            (Dataset::from_json(&text)?, BTreeMap::new())
        };
        let sub = match self.cfg.subset.n_users {
            Some(n) if n < full.users.len() => sample_subset(&full, n, self.cfg.subset.mode, self.cfg.subset.seed)?,
            Some(n) if n > full.users.len() => {
                return Err(CorpusError::NotEnoughUsers { requested: n, available: full.users.len() }.into())
            }
            _ => full,
        };
        let seeds: BTreeMap<String, String> = seeds.into_iter().filter(|(u, _)| sub.users.contains(u)).collect();
        self.guard(SEEDS_FILE)?;
        self.write(DATASET_FILE, &sub.to_json())?;
        self.write(SEEDS_FILE, &to_json(&seeds))?;
        Ok(compute_stats(&sub)?)
    }

    pub fn dataset(&self) -> Result<Dataset> {
        Ok(Dataset::from_json(&self.read(DATASET_FILE, "dataset", "sample")?)?)
    }

    pub fn seeds(&self) -> Result<BTreeMap<String, String>> {
        let text = self.read(SEEDS_FILE, "seed memories", "sample")?;
        serde_json::from_str(&text).map_err(|e| io_err(&self.path(SEEDS_FILE), e))
    }

    pub fn split(&self, ds: &Dataset) -> Result<Split> {
        Ok(leave_one_out(ds, self.cfg.data.strict)?.split)
    }

    pub fn stats(&self) -> Result<DatasetStats> {
        Ok(compute_stats(&self.dataset()?)?)
    }

    pub fn store(&self) -> Result<MemoryStore> {
        Ok(MemoryStore::load(&self.read(MEMORY_FILE, "trained memories", "train")?)?)
    }

    pub fn trace(&self) -> Result<Vec<StepRecord>> {
        let p = self.dir.join(TRAIN_DIR).join("trace.jsonl");
        if !p.exists() {
            return Err(PipelineError::Missing { what: "training trace", path: p, command: "train" });
        }
        Ok(read_trace(&p)?)
    }

    pub fn train(&self, resume: bool) -> Result<TrainSummary> {
        let ds = self.dataset()?;
        let split = self.split(&ds)?;
        let seeds = self.seeds()?;
        let cp_dir = self.dir.join(TRAIN_DIR);
        let cp = Checkpointer::new(&cp_dir)?;
        let resumed = if resume { cp.resume()? } else { None };
        if resumed.is_none() {
            if cp.trace_path().exists() && !self.opts.force {
                return Err(PipelineError::Collision(cp.trace_path()));
            }
            self.guard(MEMORY_FILE)?;
        }
        let (mut store, start) = match resumed {
            Some((s, n)) => (s, n),
            None => (MemoryStore::for_dataset(&ds, &seeds)?, 0),
        };
        let gateway = self.gateway()?;
        let catalog = self.catalog()?;
        let agents = Agents::new(&gateway, &catalog);
        let pop = PopularityTable::from_split(&split);
        let records = optimize(&agents, &split, &ds.titles(), &mut store, &pop, &self.cfg.train, start, Some(&cp))?;
        let p = self.path(MEMORY_FILE);
        std::fs::write(&p, store.snapshot()).map_err(|e| io_err(&p, e))?;
        let all = read_trace(&cp.trace_path())?;
        let n = all.len().max(1) as f64;
        Ok(TrainSummary {
            steps_run: records.len(),
            total_steps: all.len(),
            resumed_from: resume.then_some(start),
            first_attempt_accuracy: all.iter().filter(|r| r.attempts.first().is_some_and(|a| a.correct)).count() as f64 / n,
            final_accuracy: all.iter().filter(|r| r.final_correct).count() as f64 / n,
        })
    }

    pub fn eval(&self, strategies: Option<&[Strategy]>) -> Result<MetricsReport> {
        let strategies: Vec<Strategy> = strategies.map_or_else(|| self.cfg.eval.strategies.clone(), <[Strategy]>::to_vec);
        if strategies.is_empty() {
            return Err(PipelineError::Input("no strategies selected".into()));
        }
        for name in [METRICS_FILE, EVAL_CSV, RANKINGS_FILE] {
            self.guard(name)?;
        }
        let ds = self.dataset()?;
        let split = self.split(&ds)?;
        let needs_llm = strategies.iter().any(|s| s.uses_llm());
        let store = if needs_llm { self.store()? } else { MemoryStore::new() };
        let gateway = if needs_llm { Some(self.gateway()?) } else { None };
        let catalog = self.catalog()?;
        let pop = PopularityTable::from_split(&split);
        let model = if strategies.contains(&Strategy::Bpr) {
            let m = bpr_train(&split.train, &self.cfg.bpr)?;
            self.write(BPR_FILE, &m.to_json())?;
            Some(m)
        } else {
            None
        };

        let mut boxed: Vec<Box<dyn Ranker + '_>> = Vec::new();
        for s in &strategies {
            let r: Box<dyn Ranker + '_> = match s {
                Strategy::Pop => Box::new(PopRanker(&pop)),
                Strategy::Bm25 => Box::new(Bm25Ranker { dataset: &ds, split: &split }),
                Strategy::Bpr => Box::new(BprRanker(model.as_ref().expect("trained above"))),
                Strategy::Random => Box::new(RandomRanker { seed: self.cfg.eval.seed }),
                llm => {
                    let agents = Agents::new(gateway.as_ref().expect("built above"), &catalog);
                    Box::new(LlmRanker::new(*llm, agents, &store, &ds, &split))
                }
            };
            boxed.push(r);
        }
        let rankers: Vec<&dyn Ranker> = boxed.iter().map(|b| b.as_ref()).collect();
        let universe: Vec<String> = ds.items.keys().cloned().collect();
        let tag = self.dataset_tag();
        let out = with_jobs(self.opts.jobs, || {
            run_eval(&rankers, &split, &universe, &self.cfg.eval.spec(), &tag, self.opts.policy)
        })?;
        let mut csv = Vec::new();
        out.write_csv(&mut csv)?;
        self.write(EVAL_CSV, &String::from_utf8(csv).expect("csv is utf-8"))?;
        self.write(RANKINGS_FILE, &out.results_jsonl())?;
        self.write(METRICS_FILE, &to_json(&out.report))?;
        Ok(out.report)
    }

    fn dataset_tag(&self) -> String {
        let d = &self.cfg.data;
        if d.synthetic.is_some() {
            "synthetic".into()
        } else {
            d.dataset
                .as_ref()
                .or(d.reviews.as_ref())
                .and_then(|p| p.file_stem())
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        }
    }

    /// Pick rates from the training trace (when present) and from fresh
    /// trials with trained and untrained memories.
    pub fn probe_bias(&self) -> Result<BiasProbeReport> {
        self.guard(BIAS_FILE)?;
        let ds = self.dataset()?;
        let split = self.split(&ds)?;
        let pop = PopularityTable::from_split(&split);
        let gateway = self.gateway()?;
        let catalog = self.catalog()?;
        let agents = Agents::new(&gateway, &catalog);
        let seed = self.cfg.probes.bias_seed;
        let mut report = BiasProbeReport::default();
        if let Ok(trace) = self.trace() {
            report.entries.insert("training-trace".into(), bias_from_trace(&trace)?);
        }
        if let Ok(store) = self.store() {
            let r = with_jobs(self.opts.jobs, || {
                bias_trials(agents, &ds, &split, &pop, ProbeMemory::Trained(&store), seed, self.opts.policy)
            })?;
            report.entries.insert("trained".into(), r);
        }
        let r = with_jobs(self.opts.jobs, || bias_trials(agents, &ds, &split, &pop, ProbeMemory::Untrained, seed, self.opts.policy))?;
        report.entries.insert("untrained".into(), r);
        self.write(BIAS_FILE, &to_json(&report))?;
        Ok(report)
    }

    pub fn probe_propagation(&self, seed_user: Option<&str>) -> Result<PropagationReport> {
        self.guard(PROPAGATION_FILE)?;
        self.guard(PROPAGATION_MEMORY_FILE)?;
        let ds = self.dataset()?;
        let split = self.split(&ds)?;
        let p = &self.cfg.probes;
        let seed_user = match seed_user.map(str::to_string).or_else(|| p.seed_user.clone()) {
            Some(u) => u,
            None => split
                .train
                .iter()
                .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(a.0)))
                .map(|(u, _)| u.clone())
                .ok_or_else(|| PipelineError::Input("dataset has no users".into()))?,
        };
        let spec = PropagationSpec {
            seed_user,
            special_text: p.special_text.clone(),
            keywords: p.keywords.clone(),
            query: p.query.clone(),
        };
        let gateway = self.gateway()?;
        let catalog = self.catalog()?;
        let run = propagation_probe(Agents::new(&gateway, &catalog), &ds, &split, &spec, &self.cfg.train)?;
        self.write(PROPAGATION_MEMORY_FILE, &run.store.snapshot())?;
        self.write(PROPAGATION_FILE, &to_json(&run.report))?;
        Ok(run.report)
    }

    /// Warm cold items from popular neighbours in both modes, then compare
    /// rankings with identity-only and warmed memories.
    pub fn warmup_cold(&self) -> Result<ColdStartReport> {
        self.guard(WARMUP_FILE)?;
        self.guard(COLD_FILE)?;
        let ds = self.dataset()?;
        let split = self.split(&ds)?;
        let store = self.store()?;
        let gateway = self.gateway()?;
        let catalog = self.catalog()?;
        let agents = Agents::new(&gateway, &catalog);
        let mut cases = cold_cases(&split);
        let simulated = cases.is_empty();
        if simulated {
            log::warn!("no item is unseen in training; treating every held-out item as cold");
            cases = split
                .test_target
                .iter()
                .map(|(u, t)| ColdCase { user_id: u.clone(), item_id: t.item_id.clone() })
                .collect();
        }
        let cold_items: BTreeSet<&str> = cases.iter().map(|c| c.item_id.as_str()).collect();
        let pop = PopularityTable::from_split(&split);
        let mut by_pop: Vec<(&String, u64)> = pop.counts.iter().map(|(k, &c)| (k, c)).collect();
        by_pop.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let popular: Vec<&String> = by_pop.iter().take(20).map(|(k, _)| *k).collect();
        let pool_texts: Vec<String> = popular.iter().map(|i| ds.items.get(*i).map(|x| x.render()).unwrap_or_default()).collect();

        let mut warmed: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        for (name, mode) in [("similar", NeighborMode::Similar), ("distinct", NeighborMode::Distinct)] {
            let mut texts = BTreeMap::new();
            for item in &cold_items {
                let identity = ds
                    .items
                    .get(*item)
                    .ok_or_else(|| PipelineError::Input(format!("item {item} has no identity")))?;
                let neighbors: Vec<String> = select_warmup_neighbors(identity, &pool_texts, self.cfg.probes.warmup_neighbors, mode)
                    .into_iter()
                    .filter(|&i| popular[i].as_str() != *item)
                    .map(|i| store.item(popular[i]).map(|m| m.text.clone()))
                    .collect::<std::result::Result<_, _>>()?;
                texts.insert(item.to_string(), agents.warmup_cold_item(identity, &neighbors)?.text);
            }
            warmed.insert(name.to_string(), texts);
        }
        let trained: Vec<String> =
            pop.counts.keys().filter(|k| simulated || !cold_items.contains(k.as_str())).cloned().collect();
        let setup = ColdStartSetup {
            agents,
            dataset: &ds,
            split: &split,
            store: &store,
            strategy: self.cfg.probes.cold_strategy,
            pool: &trained,
        };
        let report = with_jobs(self.opts.jobs, || cold_start_eval(&setup, &cases, &warmed, &self.cfg.eval.spec(), self.opts.policy))?;
        self.write(WARMUP_FILE, &to_json(&warmed))?;
        self.write(COLD_FILE, &to_json(&report))?;
        Ok(report)
    }

    pub fn reviews(&self, polarity: Polarity) -> Result<ReviewProbeReport> {
        self.guard(REVIEWS_FILE)?;
        let store_path = self.guard(REVIEW_STORE_FILE)?;
        let ds = self.dataset()?;
        let split = self.split(&ds)?;
        let store = self.store()?;
        let gateway = self.gateway()?;
        let catalog = self.catalog()?;
        let reviews = ReviewStore::open(&store_path)?;
        let p = &self.cfg.probes;
        let report = review_probe(
            Agents::new(&gateway, &catalog),
            &ds,
            &split,
            &store,
            polarity,
            p.review_authors,
            p.review_max_words,
            &reviews,
        )?;
        self.write(REVIEWS_FILE, &to_json(&report))?;
        Ok(report)
    }

    pub fn bpr_model(&self) -> Result<MfModel> {
        Ok(MfModel::from_json(&self.read(BPR_FILE, "BPR model", "eval")?)?)
    }

    /// SHA-256 of every file under the run directory, keyed by relative path.
    pub fn digests(&self) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        let mut stack = vec![self.dir.clone()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).map_err(|e| io_err(&d, e))? {
                let p = entry.map_err(|e| io_err(&d, e))?.path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    let bytes = std::fs::read(&p).map_err(|e| io_err(&p, e))?;
                    let rel = p.strip_prefix(&self.dir).expect("under run dir").to_string_lossy().replace('\\', "/");
                    out.insert(rel, hex::encode(Sha256::digest(&bytes)));
                }
            }
        }
        Ok(out)
    }
}

#[cfg(feature = "live")]
fn live_gateway(run: &Run, routes: crate::llm::RouteTable) -> Result<Gateway> {
    let l = &run.cfg.llm;
    let endpoint = l.endpoint.as_deref().expect("validated");
    let upstream = Arc::new(crate::llm::HttpUpstream::from_env(endpoint, &l.api_key_env)?);
    Ok(match l.backend {
        Backend::Record => {
            let store = Arc::new(ReplayStore::open(l.replay_store.as_ref().expect("validated"))?);
            Gateway::record(routes, upstream, store)
        }
        _ => Gateway::direct(routes, upstream),
    })
}

#[cfg(not(feature = "live"))]
fn live_gateway(_run: &Run, _routes: crate::llm::RouteTable) -> Result<Gateway> {
    Err(LlmError::Unavailable("built without the `live` feature".into()).into())
}
