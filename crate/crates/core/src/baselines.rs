//! Reference rankers that do not call a language model: popularity,
//! BM25 text similarity, BPR matrix factorization and a seeded shuffle.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bm25::{Bm25Index, DEFAULT_B, DEFAULT_K1};
use crate::corpus::{Dataset, Interaction, PopularityTable, Split};
use crate::ranker::{CandidateSlate, RankError, Ranked, Ranker, Strategy};
use crate::seeds::rng_for;

pub const MF_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("training data is empty")]
    EmptyTrain,
    #[error("invalid BPR configuration: {0}")]
    Config(String),
    #[error("model snapshot: {0}")]
    Snapshot(String),
}

/// Stable sort of the slate by descending score.
fn order_by_scores(slate: &CandidateSlate, scores: &[f64]) -> Vec<String> {
    let mut idx: Vec<usize> = (0..slate.n()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx.into_iter().map(|i| slate.candidates[i].clone()).collect()
}

pub fn pop_rank(slate: &CandidateSlate, pop: &PopularityTable) -> Vec<String> {
    let scores: Vec<f64> = slate.candidates.iter().map(|c| pop.count(c) as f64).collect();
    order_by_scores(slate, &scores)
}

/// BM25 scores of each candidate text against the concatenated history,
/// with the slate's own texts as the document collection.
pub fn bm25_scores<S: AsRef<str>>(history_texts: &[S], candidate_texts: &[S]) -> Vec<f64> {
    let query = history_texts.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ");
    Bm25Index::with_params(candidate_texts, DEFAULT_K1, DEFAULT_B).score_all(&query)
}

pub fn bm25_rank(slate: &CandidateSlate, history_texts: &[String], item_texts: &BTreeMap<String, String>) -> Vec<String> {
    let cands: Vec<String> = slate
        .candidates
        .iter()
        .map(|c| item_texts.get(c).cloned().unwrap_or_default())
        .collect();
    order_by_scores(slate, &bm25_scores(history_texts, &cands))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BprConfig {
    pub d: usize,
    pub learning_rate: f64,
    pub l2_reg: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for BprConfig {
    fn default() -> Self {
        Self { d: 64, learning_rate: 0.01, l2_reg: 1e-4, epochs: 200, seed: 2024 }
    }
}

impl BprConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.d == 0 {
            errs.push("bpr.d must be positive".to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            errs.push("bpr.learning_rate must be positive".to_string());
        }
        if !(self.l2_reg >= 0.0 && self.l2_reg.is_finite()) {
            errs.push("bpr.l2_reg must be non-negative".to_string());
        }
        errs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfModel {
    pub d: usize,
    pub user_vecs: BTreeMap<String, Vec<f64>>,
    pub item_vecs: BTreeMap<String, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct MfDocument {
    schema: u32,
    #[serde(flatten)]
    model: MfModel,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl MfModel {
    /// Dot product, or 0 when either side is unknown.
    pub fn score(&self, user: &str, item: &str) -> f64 {
        match (self.user_vecs.get(user), self.item_vecs.get(item)) {
            (Some(u), Some(i)) => dot(u, i),
            _ => 0.0,
        }
    }

    pub fn to_json(&self) -> String {
        let doc = MfDocument { schema: MF_SCHEMA_VERSION, model: self.clone() };
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, BaselineError> {
        let doc: MfDocument = serde_json::from_str(text).map_err(|e| BaselineError::Snapshot(e.to_string()))?;
        if doc.schema != MF_SCHEMA_VERSION {
            return Err(BaselineError::Snapshot(format!("unsupported schema {}", doc.schema)));
        }
        let m = doc.model;
        let bad = m.user_vecs.values().chain(m.item_vecs.values()).any(|v| v.len() != m.d || v.iter().any(|x| !x.is_finite()));
        if bad {
            return Err(BaselineError::Snapshot("vectors must be finite with length d".into()));
        }
        Ok(m)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Loss of one (user, positive, negative) triple including its share of
/// the L2 penalty.
pub fn triple_loss(pu: &[f64], qi: &[f64], qj: &[f64], l2: f64) -> f64 {
    let x: f64 = pu.iter().zip(qi.iter().zip(qj)).map(|(p, (a, b))| p * (a - b)).sum();
    let sq = |v: &[f64]| dot(v, v);
    -sigmoid(x).ln() + l2 * (sq(pu) + sq(qi) + sq(qj))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripleGrad {
    pub pu: Vec<f64>,
    pub qi: Vec<f64>,
    pub qj: Vec<f64>,
}

pub fn triple_grad(pu: &[f64], qi: &[f64], qj: &[f64], l2: f64) -> TripleGrad {
    let x: f64 = pu.iter().zip(qi.iter().zip(qj)).map(|(p, (a, b))| p * (a - b)).sum();
    let g = 1.0 - sigmoid(x);
    TripleGrad {
        pu: (0..pu.len()).map(|k| -g * (qi[k] - qj[k]) + 2.0 * l2 * pu[k]).collect(),
        qi: (0..pu.len()).map(|k| -g * pu[k] + 2.0 * l2 * qi[k]).collect(),
        qj: (0..pu.len()).map(|k| g * pu[k] + 2.0 * l2 * qj[k]).collect(),
    }
}

/// Items, per-user positive sets and the flat interaction list used by SGD.
struct TrainIndex {
    users: Vec<String>,
    items: Vec<String>,
    positives: Vec<HashSet<usize>>,
    pairs: Vec<(usize, usize)>,
}

impl TrainIndex {
    fn build(train: &BTreeMap<String, Vec<Interaction>>) -> Self {
        let items: Vec<String> = train
            .values()
            .flatten()
            .map(|i| i.item_id.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let pos_of: BTreeMap<&str, usize> = items.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let users: Vec<String> = train.keys().cloned().collect();
        let mut positives = Vec::new();
        let mut pairs = Vec::new();
        for (u, seq) in train.values().enumerate() {
            let set: HashSet<usize> = seq.iter().map(|i| pos_of[i.item_id.as_str()]).collect();
            if set.len() == items.len() {
                log::warn!("user {} interacted with every item; skipped by BPR", users[u]);
            } else {
                pairs.extend(seq.iter().map(|i| (u, pos_of[i.item_id.as_str()])));
            }
            positives.push(set);
        }
        Self { users, items, positives, pairs }
    }

    fn sample_negative<R: Rng>(&self, u: usize, rng: &mut R) -> usize {
        loop {
            let j = rng.random_range(0..self.items.len());
            if !self.positives[u].contains(&j) {
                return j;
            }
        }
    }
}

/// Initial parameters for the given training data.
pub fn bpr_init(train: &BTreeMap<String, Vec<Interaction>>, cfg: &BprConfig) -> Result<MfModel, BaselineError> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(BaselineError::Config(errs.join("; ")));
    }
    let idx = TrainIndex::build(train);
    if idx.items.is_empty() {
        return Err(BaselineError::EmptyTrain);
    }
    let mut rng = rng_for(cfg.seed, &["bpr", "init"]);
    let normal = Normal::new(0.0, 0.1 / (cfg.d as f64).sqrt()).expect("valid std");
    let mut draw = |ids: &[String]| -> BTreeMap<String, Vec<f64>> {
        ids.iter()
            .map(|id| (id.clone(), (0..cfg.d).map(|_| normal.sample(&mut rng)).collect()))
            .collect()
    };
    let user_vecs = draw(&idx.users);
    let item_vecs = draw(&idx.items);
    Ok(MfModel { d: cfg.d, user_vecs, item_vecs })
}

pub fn bpr_train(train: &BTreeMap<String, Vec<Interaction>>, cfg: &BprConfig) -> Result<MfModel, BaselineError> {
    let init = bpr_init(train, cfg)?;
    let idx = TrainIndex::build(train);
    let mut users: Vec<Vec<f64>> = idx.users.iter().map(|u| init.user_vecs[u].clone()).collect();
    let mut items: Vec<Vec<f64>> = idx.items.iter().map(|i| init.item_vecs[i].clone()).collect();
    let mut rng = rng_for(cfg.seed, &["bpr", "sgd"]);
    let lr = cfg.learning_rate;
    for _ in 0..cfg.epochs {
        for _ in 0..idx.pairs.len() {
            let (u, i) = idx.pairs[rng.random_range(0..idx.pairs.len())];
            let j = idx.sample_negative(u, &mut rng);
            let g = triple_grad(&users[u], &items[i], &items[j], cfg.l2_reg);
            for k in 0..cfg.d {
                users[u][k] -= lr * g.pu[k];
                items[i][k] -= lr * g.qi[k];
                items[j][k] -= lr * g.qj[k];
            }
        }
    }
    Ok(MfModel {
        d: cfg.d,
        user_vecs: idx.users.into_iter().zip(users).collect(),
        item_vecs: idx.items.into_iter().zip(items).collect(),
    })
}

/// Mean triple loss of `model` over fixed triples.
pub fn mean_triple_loss(model: &MfModel, triples: &[(String, String, String)], l2: f64) -> f64 {
    let zero = vec![0.0; model.d];
    let get = |m: &BTreeMap<String, Vec<f64>>, k: &str| m.get(k).cloned().unwrap_or_else(|| zero.clone());
    let total: f64 = triples
        .iter()
        .map(|(u, i, j)| triple_loss(&get(&model.user_vecs, u), &get(&model.item_vecs, i), &get(&model.item_vecs, j), l2))
        .sum();
    total / triples.len().max(1) as f64
}

pub fn bpr_rank(model: &MfModel, slate: &CandidateSlate) -> Vec<String> {
    let scores: Vec<f64> = slate.candidates.iter().map(|c| model.score(&slate.user_id, c)).collect();
    order_by_scores(slate, &scores)
}

pub struct PopRanker<'a>(pub &'a PopularityTable);

impl Ranker for PopRanker<'_> {
    fn strategy(&self) -> Strategy {
        Strategy::Pop
    }
    fn rank(&self, slate: &CandidateSlate) -> Result<Ranked, RankError> {
        Ok(Ranked::plain(pop_rank(slate, self.0)))
    }
}

/// BM25 over identity texts of the user's train history.
pub struct Bm25Ranker<'a> {
    pub dataset: &'a Dataset,
    pub split: &'a Split,
}

impl Bm25Ranker<'_> {
    fn text(&self, id: &str) -> String {
        self.dataset.items.get(id).map(|i| i.render()).unwrap_or_default()
    }
}

impl Ranker for Bm25Ranker<'_> {
    fn strategy(&self) -> Strategy {
        Strategy::Bm25
    }
    fn rank(&self, slate: &CandidateSlate) -> Result<Ranked, RankError> {
        let history: Vec<String> = self.split.train_items(&slate.user_id).iter().map(|i| self.text(i)).collect();
        let cands: Vec<String> = slate.candidates.iter().map(|c| self.text(c)).collect();
        Ok(Ranked::plain(order_by_scores(slate, &bm25_scores(&history, &cands))))
    }
}

pub struct BprRanker<'a>(pub &'a MfModel);

impl Ranker for BprRanker<'_> {
    fn strategy(&self) -> Strategy {
        Strategy::Bpr
    }
    fn rank(&self, slate: &CandidateSlate) -> Result<Ranked, RankError> {
        Ok(Ranked::plain(bpr_rank(self.0, slate)))
    }
}

/// Uniform shuffle, deterministic per (seed, repetition, user).
pub struct RandomRanker {
    pub seed: u64,
}

impl Ranker for RandomRanker {
    fn strategy(&self) -> Strategy {
        Strategy::Random
    }
    fn rank(&self, slate: &CandidateSlate) -> Result<Ranked, RankError> {
        let mut rng = rng_for(self.seed, &["random-ranker", &slate.repetition.to_string(), &slate.user_id]);
        let mut perm = slate.candidates.clone();
        perm.shuffle(&mut rng);
        Ok(Ranked::plain(perm))
    }
}
