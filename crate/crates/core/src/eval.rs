//! Metrics, slates, the repetition protocol and the probe experiments.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::io::Write;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::agents::{AgentError, Agents, Candidate, KeywordDetector, Polarity, ReviewRecord, ReviewStore};
use crate::corpus::{sample_negative, CorpusError, Dataset, PopularityTable, Split};
use crate::exec::ExecPolicy;
use crate::memory::{MemoryError, MemoryStore};
use crate::optimizer::{optimize, OptimizeError, StepRecord, TrainConfig};
use crate::ranker::{CandidateSlate, LlmRanker, RankError, Ranker, RankingResult, Strategy, DEFAULT_SLATE_SIZE};
use crate::seeds::rng_for;

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];
pub const DEFAULT_REPS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("cannot build a slate for user {user}: {reason}")]
    Slate { user: String, reason: String },
    #[error("cutoff k={k} outside 1..={n}")]
    InvalidK { k: usize, n: usize },
    #[error("invalid evaluation settings: {0}")]
    Config(String),
    #[error("no user survived evaluation")]
    NoUsers,
    #[error("no usable pairwise trials")]
    EmptyTrials,
    #[error("propagation probe needs at least one keyword")]
    EmptyKeywords,
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("no warmed memory for item {item} in mode {mode}")]
    MissingWarmup { mode: String, item: String },
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("csv output: {0}")]
    Csv(String),
}

/// NDCG at cutoff `k` for a single relevant item at 1-based rank `rank`.
pub fn ndcg_for_rank(rank: usize, k: usize) -> f64 {
    if rank == 0 || rank > k {
        0.0
    } else {
        1.0 / ((rank + 1) as f64).log2()
    }
}

pub fn ndcg_at_k(result: &RankingResult, k: usize) -> Result<f64, EvalError> {
    let n = result.slate.n();
    if k == 0 || k > n {
        return Err(EvalError::InvalidK { k, n });
    }
    let rank = result.target_rank().ok_or_else(|| EvalError::Slate {
        user: result.slate.user_id.clone(),
        reason: "target missing from permutation".into(),
    })?;
    Ok(ndcg_for_rank(rank, k))
}

/// Target plus `n - 1` uniform negatives from `pool` outside `exclude`,
/// shuffled. The draw depends only on (seed, repetition, user).
pub fn slate_from_pool(
    user: &str,
    target: &str,
    pool: &[String],
    exclude: &HashSet<&str>,
    n: usize,
    seed: u64,
    repetition: usize,
) -> Result<CandidateSlate, EvalError> {
    let eligible: Vec<&String> = pool
        .iter()
        .filter(|i| !exclude.contains(i.as_str()) && i.as_str() != target)
        .collect();
    let need = n.saturating_sub(1);
    if eligible.len() < need {
        return Err(EvalError::Slate {
            user: user.into(),
            reason: format!("{} eligible negatives, {need} required", eligible.len()),
        });
    }
    let mut rng = rng_for(seed, &["slate", &repetition.to_string(), user]);
    let mut candidates: Vec<String> = index::sample(&mut rng, eligible.len(), need)
        .into_iter()
        .map(|i| eligible[i].clone())
        .collect();
    candidates.push(target.to_string());
    candidates.shuffle(&mut rng);
    Ok(CandidateSlate { user_id: user.into(), candidates, target: target.into(), repetition })
}

/// Slate for a user's held-out target; negatives avoid the full history.
pub fn build_slate(
    user: &str,
    split: &Split,
    universe: &[String],
    n: usize,
    seed: u64,
    repetition: usize,
) -> Result<CandidateSlate, EvalError> {
    let target = split.target(user).ok_or_else(|| EvalError::UnknownUser(user.into()))?;
    slate_from_pool(user, target, universe, &split.full_history(user), n, seed, repetition)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    pub reps: usize,
    pub ks: Vec<usize>,
    pub slate_size: usize,
    pub seed: u64,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self { reps: DEFAULT_REPS, ks: DEFAULT_KS.to_vec(), slate_size: DEFAULT_SLATE_SIZE, seed: 2024 }
    }
}

impl EvalSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.reps == 0 {
            errs.push("eval.reps must be at least 1".to_string());
        }
        if self.slate_size < 2 {
            errs.push("eval.slate_size must be at least 2".to_string());
        }
        if self.ks.is_empty() {
            errs.push("eval.ks must not be empty".to_string());
        }
        for &k in &self.ks {
            if k == 0 || k > self.slate_size {
                errs.push(format!("eval.ks entry {k} outside 1..={}", self.slate_size));
            }
        }
        errs
    }
}

/// One CSV row: a user, a strategy and a repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub user_id: String,
    pub strategy: Strategy,
    pub repetition: usize,
    pub target: String,
    pub target_rank: usize,
    pub ndcg: Vec<(usize, f64)>,
    pub fallback: bool,
    pub prompt_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub user_id: String,
    pub repetition: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub n_users: usize,
    pub n_reps: usize,
    pub ks: Vec<usize>,
    /// strategy name -> "ndcg@k" -> mean over users, then repetitions
    pub metrics: BTreeMap<String, BTreeMap<String, f64>>,
    pub fallbacks: BTreeMap<String, usize>,
    pub excluded: Vec<Exclusion>,
}

impl MetricsReport {
    pub fn get(&self, strategy: Strategy, k: usize) -> Option<f64> {
        self.metrics.get(strategy.name())?.get(&format!("ndcg@{k}")).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub results: Vec<RankingResult>,
    pub rows: Vec<EvalRow>,
    pub report: MetricsReport,
}

impl EvalOutput {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        write_rows_csv(&self.rows, &self.report.ks, out)
    }

    /// One ranking result per line.
    pub fn results_jsonl(&self) -> String {
        self.results
            .iter()
            .map(|r| serde_json::to_string(r).expect("result serializes") + "\n")
            .collect()
    }
}

pub fn write_rows_csv<W: Write>(rows: &[EvalRow], ks: &[usize], out: W) -> Result<(), EvalError> {
    let csv_err = |e: csv::Error| EvalError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["user_id".to_string(), "strategy".into(), "repetition".into(), "target".into(), "target_rank".into()];
    header.extend(ks.iter().map(|k| format!("ndcg@{k}")));
    header.extend(["fallback".to_string(), "prompt_digest".into()]);
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            r.user_id.clone(),
            r.strategy.name().to_string(),
            r.repetition.to_string(),
            r.target.clone(),
            r.target_rank.to_string(),
        ];
        rec.extend(r.ndcg.iter().map(|(_, v)| format!("{v:.6}")));
        rec.push(r.fallback.to_string());
        rec.push(r.prompt_digest.clone().unwrap_or_default());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| EvalError::Csv(e.to_string()))
}

fn check_permutation(slate: &CandidateSlate, perm: &[String]) -> Result<(), String> {
    let a: BTreeSet<&String> = slate.candidates.iter().collect();
    let b: BTreeSet<&String> = perm.iter().collect();
    if perm.len() != slate.n() || a != b {
        return Err("ranker returned something other than a permutation of the slate".into());
    }
    Ok(())
}

/// Rank every user's slate with every ranker for each repetition. A user
/// that fails under any ranker in a repetition is dropped from that
/// repetition for all rankers.
pub fn run_eval(
    rankers: &[&dyn Ranker],
    split: &Split,
    universe: &[String],
    spec: &EvalSpec,
    dataset_tag: &str,
    policy: ExecPolicy,
) -> Result<EvalOutput, EvalError> {
    let problems = spec.validate();
    if !problems.is_empty() {
        return Err(EvalError::Config(problems.join("; ")));
    }
    let users: Vec<&String> = split.users().collect();
    let work: Vec<(usize, &str)> = (0..spec.reps)
        .flat_map(|rep| users.iter().map(move |u| (rep, u.as_str())))
        .collect();

    let outcomes = policy.map(&work, |&(rep, user)| -> Result<Vec<RankingResult>, String> {
        let slate = build_slate(user, split, universe, spec.slate_size, spec.seed, rep).map_err(|e| e.to_string())?;
        rankers
            .iter()
            .map(|r| {
                let ranked = r.rank(&slate).map_err(|e| format!("{}: {e}", r.strategy()))?;
                check_permutation(&slate, &ranked.permutation).map_err(|e| format!("{}: {e}", r.strategy()))?;
                Ok(RankingResult::new(slate.clone(), r.strategy(), ranked))
            })
            .collect()
    });

    let mut results = Vec::new();
    let mut excluded = Vec::new();
    for ((rep, user), out) in work.iter().zip(outcomes) {
        match out {
            Ok(rs) => results.extend(rs),
            Err(reason) => {
                log::warn!("excluding user {user} from repetition {rep}: {reason}");
                excluded.push(Exclusion { user_id: user.to_string(), repetition: *rep, reason });
            }
        }
    }

    let mut rows = Vec::with_capacity(results.len());
    for r in &results {
        let rank = r.target_rank().expect("permutation checked");
        rows.push(EvalRow {
            user_id: r.slate.user_id.clone(),
            strategy: r.strategy,
            repetition: r.slate.repetition,
            target: r.slate.target.clone(),
            target_rank: rank,
            ndcg: spec.ks.iter().map(|&k| (k, ndcg_for_rank(rank, k))).collect(),
            fallback: r.fallback,
            prompt_digest: r.prompt_digest.clone(),
        });
    }
    let report = summarize(&rows, spec, dataset_tag, excluded)?;
    Ok(EvalOutput { results, rows, report })
}

fn summarize(rows: &[EvalRow], spec: &EvalSpec, dataset_tag: &str, excluded: Vec<Exclusion>) -> Result<MetricsReport, EvalError> {
    // (strategy, rep) -> per-k sums and user count
    let mut acc: BTreeMap<(Strategy, usize), (Vec<f64>, usize)> = BTreeMap::new();
    let mut fallbacks: BTreeMap<String, usize> = BTreeMap::new();
    let mut users = BTreeSet::new();
    for r in rows {
        let e = acc.entry((r.strategy, r.repetition)).or_insert_with(|| (vec![0.0; spec.ks.len()], 0));
        for (slot, (_, v)) in e.0.iter_mut().zip(&r.ndcg) {
            *slot += v;
        }
        e.1 += 1;
        *fallbacks.entry(r.strategy.name().to_string()).or_default() += usize::from(r.fallback);
        users.insert(r.user_id.as_str());
    }
    if users.is_empty() {
        return Err(EvalError::NoUsers);
    }
    let mut per_strategy: BTreeMap<Strategy, Vec<Vec<f64>>> = BTreeMap::new();
    for ((s, _), (sums, n)) in acc {
        per_strategy.entry(s).or_default().push(sums.iter().map(|x| x / n as f64).collect());
    }
    let metrics = per_strategy
        .into_iter()
        .map(|(s, reps)| {
            let m = spec
                .ks
                .iter()
                .enumerate()
                .map(|(j, k)| (format!("ndcg@{k}"), reps.iter().map(|r| r[j]).sum::<f64>() / reps.len() as f64))
                .collect();
            (s.name().to_string(), m)
        })
        .collect();
    Ok(MetricsReport {
        dataset: dataset_tag.to_string(),
        n_users: users.len(),
        n_reps: spec.reps,
        ks: spec.ks.clone(),
        metrics,
        fallbacks,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRates {
    pub trials: usize,
    pub skipped: usize,
    pub popular_pick_rate: f64,
    pub first_position_pick_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BiasProbeReport {
    pub entries: BTreeMap<String, BiasRates>,
}

fn rates(picks: &[(bool, bool)], skipped: usize) -> Result<BiasRates, EvalError> {
    if picks.is_empty() {
        return Err(EvalError::EmptyTrials);
    }
    let n = picks.len() as f64;
    Ok(BiasRates {
        trials: picks.len(),
        skipped,
        popular_pick_rate: picks.iter().filter(|p| p.0).count() as f64 / n,
        first_position_pick_rate: picks.iter().filter(|p| p.1).count() as f64 / n,
    })
}

/// Pick rates over the first attempt of every completed training step.
pub fn bias_from_trace(trace: &[StepRecord]) -> Result<BiasRates, EvalError> {
    let mut picks = Vec::new();
    let mut skipped = 0;
    for r in trace {
        let Some(first) = r.attempts.first() else {
            skipped += 1;
            continue;
        };
        let popular = first.chosen == r.negative;
        let first_pos = popular == (r.negative_position == 0);
        picks.push((popular, first_pos));
    }
    rates(&picks, skipped)
}

/// Which memories a fresh bias trial shows to the selection prompt.
#[derive(Debug, Clone, Copy)]
pub enum ProbeMemory<'a> {
    Trained(&'a MemoryStore),
    /// Seed text for the user and identity texts for items.
    Untrained,
}

/// One pairwise selection per user between a popularity-sampled negative
/// (shown first) and the user's held-out target.
pub fn bias_trials(
    agents: Agents,
    dataset: &Dataset,
    split: &Split,
    pop: &PopularityTable,
    memory: ProbeMemory,
    seed: u64,
    policy: ExecPolicy,
) -> Result<BiasRates, EvalError> {
    let users: Vec<&String> = split.users().collect();
    let candidate = |id: &str| -> Result<Candidate, EvalError> {
        let text = match memory {
            ProbeMemory::Trained(store) => store.item(id)?.text.clone(),
            ProbeMemory::Untrained => dataset.items.get(id).map(|i| i.render()).unwrap_or_default(),
        };
        Ok(Candidate::new(id, dataset.title(id), &text))
    };
    let outcomes = policy.map(&users, |user| -> Result<Option<(bool, bool)>, EvalError> {
        let target = split.target(user).ok_or_else(|| EvalError::UnknownUser(user.to_string()))?;
        let mut rng = rng_for(seed, &["bias", user]);
        let negative = sample_negative(pop, &split.full_history(user), &mut rng)?;
        let user_memory = match memory {
            ProbeMemory::Trained(store) => store.user(user)?.short_term.clone(),
            ProbeMemory::Untrained => crate::memory::DEFAULT_USER_SEED.to_string(),
        };
        let first = candidate(&negative)?;
        let second = candidate(target)?;
        match agents.select_pairwise(&user_memory, &first, &second, 1, 0) {
            Ok(o) => Ok(Some((o.chosen_position == 0, o.chosen_position == 0))),
            Err(AgentError::Llm(e)) => Err(AgentError::Llm(e).into()),
            Err(e) => {
                log::warn!("bias trial for {user} skipped: {e}");
                Ok(None)
            }
        }
    });
    let mut picks = Vec::new();
    let mut skipped = 0;
    for o in outcomes {
        match o? {
            Some(p) => picks.push(p),
            None => skipped += 1,
        }
    }
    rates(&picks, skipped)
}

/// User-to-user hop counts from `seed` through shared train items.
pub fn hop_distances(split: &Split, seed: &str) -> BTreeMap<String, usize> {
    let mut item_users: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (u, seq) in &split.train {
        for i in seq {
            item_users.entry(i.item_id.as_str()).or_default().push(u.as_str());
        }
    }
    let mut dist: BTreeMap<String, usize> = BTreeMap::new();
    if !split.train.contains_key(seed) && split.target(seed).is_none() {
        return dist;
    }
    dist.insert(seed.to_string(), 0);
    let mut queue = VecDeque::from([seed.to_string()]);
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        let items: BTreeSet<&str> = split.train_items(&u).into_iter().collect();
        for item in items {
            for &v in item_users.get(item).into_iter().flatten() {
                if !dist.contains_key(v) {
                    dist.insert(v.to_string(), d + 1);
                    queue.push_back(v.to_string());
                }
            }
        }
    }
    dist
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationSpec {
    pub seed_user: String,
    pub special_text: String,
    pub keywords: Vec<String>,
    pub query: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopStats {
    /// None groups users unreachable from the seed.
    pub hop: Option<usize>,
    pub users: usize,
    pub keyword_matches: usize,
    pub keyword_fraction: f64,
    pub query_yes: Option<usize>,
    pub query_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationReport {
    pub seed_user: String,
    pub steps: usize,
    pub hops: Vec<HopStats>,
}

impl PropagationReport {
    pub fn hop(&self, h: usize) -> Option<&HopStats> {
        self.hops.iter().find(|s| s.hop == Some(h))
    }
}

pub struct PropagationRun {
    pub report: PropagationReport,
    pub store: MemoryStore,
    pub trace: Vec<StepRecord>,
}

/// Train a fresh store whose seed user starts from `special_text`, then
/// look for the special preference in every user's memories.
pub fn propagation_probe(
    agents: Agents,
    dataset: &Dataset,
    split: &Split,
    spec: &PropagationSpec,
    cfg: &TrainConfig,
) -> Result<PropagationRun, EvalError> {
    let detector = KeywordDetector::new(&spec.keywords).ok_or(EvalError::EmptyKeywords)?;
    if split.target(&spec.seed_user).is_none() {
        return Err(EvalError::UnknownUser(spec.seed_user.clone()));
    }
    let seeds = BTreeMap::from([(spec.seed_user.clone(), spec.special_text.clone())]);
    let mut store = MemoryStore::for_dataset(dataset, &seeds)?;
    let pop = PopularityTable::from_split(split);
    let trace = optimize(&agents, split, &dataset.titles(), &mut store, &pop, cfg, 0, None)?;

    let dist = hop_distances(split, &spec.seed_user);
    let mut groups: BTreeMap<Option<usize>, (usize, usize, usize)> = BTreeMap::new();
    for user in split.users() {
        let mem = store.user(user)?;
        let text = std::iter::once(mem.short_term.as_str())
            .chain(mem.long_term.iter().map(String::as_str))
            .collect::<Vec<_>>()
            .join("\n");
        let hit = detector.matches(&text);
        let yes = match &spec.query {
            Some(q) => match agents.query_preference(&mem.short_term, q) {
                Ok(a) => a.choice,
                Err(AgentError::Llm(e)) => return Err(AgentError::Llm(e).into()),
                Err(e) => {
                    log::warn!("preference query for {user} unreadable: {e}");
                    false
                }
            },
            None => false,
        };
        let g = groups.entry(dist.get(user.as_str()).copied()).or_default();
        g.0 += 1;
        g.1 += usize::from(hit);
        g.2 += usize::from(yes);
    }
    let asked = spec.query.is_some();
    let hops = groups
        .into_iter()
        .map(|(hop, (n, hits, yes))| HopStats {
            hop,
            users: n,
            keyword_matches: hits,
            keyword_fraction: hits as f64 / n as f64,
            query_yes: asked.then_some(yes),
            query_fraction: asked.then(|| yes as f64 / n as f64),
        })
        .collect();
    let report = PropagationReport { seed_user: spec.seed_user.clone(), steps: trace.len(), hops };
    Ok(PropagationRun { report, store, trace })
}

/// A held-out interaction with an item that never occurs in training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColdCase {
    pub user_id: String,
    pub item_id: String,
}

pub fn cold_cases(split: &Split) -> Vec<ColdCase> {
    let trained: HashSet<&str> = split.train.values().flatten().map(|i| i.item_id.as_str()).collect();
    split
        .test_target
        .iter()
        .filter(|(_, t)| !trained.contains(t.item_id.as_str()))
        .map(|(u, t)| ColdCase { user_id: u.clone(), item_id: t.item_id.clone() })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColdModeReport {
    pub pairs: usize,
    pub cold: BTreeMap<String, f64>,
    pub warm: BTreeMap<String, f64>,
    /// Mean of warm minus cold, paired per (case, repetition).
    pub delta: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ColdStartReport {
    pub strategy: String,
    pub modes: BTreeMap<String, ColdModeReport>,
}

/// Inputs shared by every cold-start ranking run.
pub struct ColdStartSetup<'a> {
    pub agents: Agents<'a>,
    pub dataset: &'a Dataset,
    pub split: &'a Split,
    pub store: &'a MemoryStore,
    pub strategy: Strategy,
    /// Items eligible as negatives (well-trained items).
    pub pool: &'a [String],
}

/// Rank each cold item once per repetition with its identity text and
/// once per warmup mode with the warmed text, on identical slates. Only
/// the slate's own cold item is overridden; the store is never modified.
pub fn cold_start_eval(
    setup: &ColdStartSetup,
    cases: &[ColdCase],
    warmed: &BTreeMap<String, BTreeMap<String, String>>,
    spec: &EvalSpec,
    policy: ExecPolicy,
) -> Result<ColdStartReport, EvalError> {
    if cases.is_empty() {
        return Err(EvalError::NoUsers);
    }
    let mut slates = Vec::new();
    for rep in 0..spec.reps {
        for c in cases {
            let exclude = setup.split.full_history(&c.user_id);
            slates.push(slate_from_pool(&c.user_id, &c.item_id, setup.pool, &exclude, spec.slate_size, spec.seed, rep)?);
        }
    }
    let ranks_with = |text_for: &dyn Fn(&str) -> Result<String, EvalError>| -> Result<Vec<usize>, EvalError> {
        let jobs: Vec<(&CandidateSlate, String)> =
            slates.iter().map(|s| Ok((s, text_for(&s.target)?))).collect::<Result<_, EvalError>>()?;
        policy
            .map(&jobs, |(s, text)| -> Result<usize, EvalError> {
                let mut ranker = LlmRanker::new(setup.strategy, setup.agents, setup.store, setup.dataset, setup.split);
                ranker.overrides.insert(s.target.clone(), text.clone());
                let r = RankingResult::new((*s).clone(), setup.strategy, ranker.rank(s)?);
                r.target_rank().ok_or_else(|| EvalError::Slate { user: s.user_id.clone(), reason: "target lost".into() })
            })
            .into_iter()
            .collect()
    };
    let identity = |item: &str| -> Result<String, EvalError> {
        setup
            .dataset
            .items
            .get(item)
            .map(|i| i.render())
            .ok_or_else(|| MemoryError::UnknownItem(item.to_string()).into())
    };
    let cold_ranks = ranks_with(&identity)?;
    let mean = |ranks: &[usize], k: usize| ranks.iter().map(|&r| ndcg_for_rank(r, k)).sum::<f64>() / ranks.len() as f64;

    let mut report = ColdStartReport { strategy: setup.strategy.name().to_string(), modes: BTreeMap::new() };
    for (mode, texts) in warmed {
        let warm_text = |item: &str| -> Result<String, EvalError> {
            texts
                .get(item)
                .cloned()
                .ok_or_else(|| EvalError::MissingWarmup { mode: mode.clone(), item: item.to_string() })
        };
        let warm_ranks = ranks_with(&warm_text)?;
        let mut cold = BTreeMap::new();
        let mut warm = BTreeMap::new();
        let mut delta = BTreeMap::new();
        for &k in &spec.ks {
            let key = format!("ndcg@{k}");
            let (c, w) = (mean(&cold_ranks, k), mean(&warm_ranks, k));
            cold.insert(key.clone(), c);
            warm.insert(key.clone(), w);
            delta.insert(key, w - c);
        }
        report.modes.insert(mode.clone(), ColdModeReport { pairs: slates.len(), cold, warm, delta });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewOutcome {
    pub user_id: String,
    pub item_id: String,
    pub reviews: usize,
    pub before: bool,
    pub after: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewProbeReport {
    pub polarity: Polarity,
    pub outcomes: Vec<ReviewOutcome>,
    pub invalid: usize,
    pub before_yes_rate: f64,
    pub after_yes_rate: f64,
    pub changed_rate: f64,
}

/// Each user sees reviews of their held-out item written by up to
/// `max_authors` other users who interacted with it in training, and
/// decides on the item before and after reading them.
#[allow(clippy::too_many_arguments)]
pub fn review_probe(
    agents: Agents,
    dataset: &Dataset,
    split: &Split,
    store: &MemoryStore,
    polarity: Polarity,
    max_authors: usize,
    max_words: usize,
    reviews: &ReviewStore,
) -> Result<ReviewProbeReport, EvalError> {
    let mut outcomes = Vec::new();
    let mut invalid = 0;
    for user in split.users() {
        let item = split.target(user).expect("listed users have targets");
        let item_memory = store.item(item)?.text.clone();
        let authors: Vec<&String> = split
            .train
            .iter()
            .filter(|(u, seq)| *u != user && seq.iter().any(|i| i.item_id == item))
            .map(|(u, _)| u)
            .take(max_authors)
            .collect();
        let mut texts = Vec::new();
        for author in authors {
            let text = agents.write_review(&store.user(author)?.short_term, &item_memory, polarity, max_words)?;
            reviews.append(ReviewRecord { author: author.clone(), item: item.to_string(), polarity, text: text.clone() })?;
            texts.push(text);
        }
        let short = &store.user(user)?.short_term;
        match agents.decide_with_reviews(short, dataset.title(item), &item_memory, &texts) {
            Ok(d) => outcomes.push(ReviewOutcome {
                user_id: user.clone(),
                item_id: item.to_string(),
                reviews: texts.len(),
                before: d.before.choice,
                after: d.after.choice,
            }),
            Err(AgentError::Llm(e)) => return Err(AgentError::Llm(e).into()),
            Err(e) => {
                log::warn!("review decision for {user} invalid: {e}");
                invalid += 1;
            }
        }
    }
    if outcomes.is_empty() {
        return Err(EvalError::EmptyTrials);
    }
    let n = outcomes.len() as f64;
    let rate = |f: &dyn Fn(&ReviewOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as f64 / n;
    Ok(ReviewProbeReport {
        polarity,
        before_yes_rate: rate(&|o| o.before),
        after_yes_rate: rate(&|o| o.after),
        changed_rate: rate(&|o| o.before != o.after),
        invalid,
        outcomes,
    })
}
