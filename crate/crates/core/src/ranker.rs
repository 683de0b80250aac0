//! Listwise ranking of candidate slates by language-model strategies.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::{tag_candidates, templated_request, Agents, Candidate};
use crate::corpus::{Dataset, Split};
use crate::llm::{LlmError, Message, TaskKind};
use crate::memory::{MemoryError, MemoryStore, DEFAULT_RETRIEVAL_K};
use crate::prompts::{parse_ranking, PromptError};

pub const DEFAULT_SLATE_SIZE: usize = 10;
pub const HISTORY_CAP: usize = 20;

const RANKING_REASK: &str = "Your previous answer could not be read. Output only a numbered list containing every candidate CD title exactly once, from the most preferred to the least preferred.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "agentcf-b")]
    B,
    #[serde(rename = "agentcf-br")]
    BR,
    #[serde(rename = "agentcf-bh")]
    BH,
    #[serde(rename = "llmrank")]
    LlmRank,
    #[serde(rename = "pop")]
    Pop,
    #[serde(rename = "bm25")]
    Bm25,
    #[serde(rename = "bpr")]
    Bpr,
    #[serde(rename = "random")]
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 8] = [
        Strategy::B,
        Strategy::BR,
        Strategy::BH,
        Strategy::LlmRank,
        Strategy::Pop,
        Strategy::Bm25,
        Strategy::Bpr,
        Strategy::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::B => "agentcf-b",
            Strategy::BR => "agentcf-br",
            Strategy::BH => "agentcf-bh",
            Strategy::LlmRank => "llmrank",
            Strategy::Pop => "pop",
            Strategy::Bm25 => "bm25",
            Strategy::Bpr => "bpr",
            Strategy::Random => "random",
        }
    }

    pub fn uses_llm(self) -> bool {
        matches!(self, Strategy::B | Strategy::BR | Strategy::BH | Strategy::LlmRank)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| {
                let names: Vec<&str> = Strategy::ALL.iter().map(|k| k.name()).collect();
                format!("unknown strategy `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// Candidates shown to a ranker, in presentation order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSlate {
    pub user_id: String,
    pub candidates: Vec<String>,
    pub target: String,
    pub repetition: usize,
}

impl CandidateSlate {
    pub fn n(&self) -> usize {
        self.candidates.len()
    }
}

/// A ranker's answer for one slate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranked {
    pub permutation: Vec<String>,
    pub prompt_digest: Option<String>,
    /// The reply was unusable and presentation order was kept.
    pub fallback: bool,
}

impl Ranked {
    pub fn plain(permutation: Vec<String>) -> Self {
        Self { permutation, prompt_digest: None, fallback: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub slate: CandidateSlate,
    pub strategy: Strategy,
    pub permutation: Vec<String>,
    pub prompt_digest: Option<String>,
    pub fallback: bool,
}

impl RankingResult {
    pub fn new(slate: CandidateSlate, strategy: Strategy, ranked: Ranked) -> Self {
        Self {
            slate,
            strategy,
            permutation: ranked.permutation,
            prompt_digest: ranked.prompt_digest,
            fallback: ranked.fallback,
        }
    }

    /// 1-based rank of the slate's target.
    pub fn target_rank(&self) -> Option<usize> {
        self.permutation.iter().position(|c| *c == self.slate.target).map(|p| p + 1)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RankError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("{0}")]
    Input(String),
}

pub trait Ranker: Send + Sync {
    fn strategy(&self) -> Strategy;
    fn rank(&self, slate: &CandidateSlate) -> Result<Ranked, RankError>;
}

/// One of the four language-model strategies over a trained store.
pub struct LlmRanker<'a> {
    pub strategy: Strategy,
    pub agents: Agents<'a>,
    pub store: &'a MemoryStore,
    pub dataset: &'a Dataset,
    pub split: &'a Split,
    pub retrieval_k: usize,
    pub history_cap: usize,
    /// Item texts used instead of the store's, keyed by item id.
    pub overrides: BTreeMap<String, String>,
}

impl<'a> LlmRanker<'a> {
    pub fn new(strategy: Strategy, agents: Agents<'a>, store: &'a MemoryStore, dataset: &'a Dataset, split: &'a Split) -> Self {
        assert!(strategy.uses_llm(), "{strategy} is not a language-model strategy");
        Self {
            strategy,
            agents,
            store,
            dataset,
            split,
            retrieval_k: DEFAULT_RETRIEVAL_K,
            history_cap: HISTORY_CAP,
            overrides: BTreeMap::new(),
        }
    }

    fn title(&self, id: &str) -> String {
        self.dataset.title(id).to_string()
    }

    fn identity(&self, id: &str) -> String {
        self.dataset
            .items
            .get(id)
            .map(|i| i.render())
            .unwrap_or_else(|| format!("The CD is called \"{id}\"."))
    }

    fn learned(&self, id: &str) -> Result<Candidate, RankError> {
        let text = match self.overrides.get(id) {
            Some(t) => t.as_str(),
            None => self.store.item(id)?.text.as_str(),
        };
        Ok(Candidate::new(id, &self.title(id), text))
    }

    fn history_ids(&self, user: &str) -> Vec<String> {
        let items = self.split.train_items(user);
        let skip = items.len().saturating_sub(self.history_cap);
        items[skip..].iter().map(|s| s.to_string()).collect()
    }

    fn rank_with(&self, template: &str, mut b: BTreeMap<&str, String>, cands: &[Candidate]) -> Result<Ranked, RankError> {
        b.insert("candidates", numbered(cands));
        b.insert("n", cands.len().to_string());
        let refs: Vec<&Candidate> = cands.iter().collect();
        let req = tag_candidates(templated_request(self.agents.catalog, template, TaskKind::Inference, &b)?, &refs);
        let digest = self.agents.gateway.cache_key(&req)?.0;
        let titles: Vec<&str> = cands.iter().map(|c| c.title.as_str()).collect();
        let ids = |order: &[usize]| order.iter().map(|&i| cands[i].id.clone()).collect::<Vec<_>>();

        let reply = self.agents.gateway.complete(&req)?.text;
        if let Ok(p) = parse_ranking(&reply, &titles) {
            return Ok(Ranked { permutation: ids(&p.order), prompt_digest: Some(digest), fallback: false });
        }
        let mut again = req.clone().tag(crate::agents::tags::REASK, "1");
        again.messages.push(Message::assistant(reply));
        again.messages.push(Message::user(RANKING_REASK));
        let reply = self.agents.gateway.complete(&again)?.text;
        match parse_ranking(&reply, &titles) {
            Ok(p) => Ok(Ranked { permutation: ids(&p.order), prompt_digest: Some(digest), fallback: false }),
            Err(_) => {
                log::warn!("unparsable ranking for a {template} prompt; keeping presentation order");
                let order: Vec<usize> = (0..cands.len()).collect();
                Ok(Ranked { permutation: ids(&order), prompt_digest: Some(digest), fallback: true })
            }
        }
    }
}

fn numbered(cands: &[Candidate]) -> String {
    cands
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{}. \"{}\": {}", i + 1, c.title, c.memory))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Ranker for LlmRanker<'_> {
    fn strategy(&self) -> Strategy {
        self.strategy
    }

    fn rank(&self, slate: &CandidateSlate) -> Result<Ranked, RankError> {
        let user = slate.user_id.as_str();
        match self.strategy {
            Strategy::B | Strategy::BR | Strategy::BH => {
                let short = self.store.user(user)?.short_term.clone();
                let cands = slate
                    .candidates
                    .iter()
                    .map(|id| self.learned(id))
                    .collect::<Result<Vec<_>, _>>()?;
                let mut b = BTreeMap::from([("user_memory", short)]);
                let template = match self.strategy {
                    Strategy::B => "rank_basic",
                    Strategy::BR => {
                        let queries: Vec<&str> = cands.iter().map(|c| c.memory.as_str()).collect();
                        let retrieved = self.store.retrieve_long_term(user, &queries, self.retrieval_k)?;
                        b.insert("retrieved_memory", retrieved.rendered);
                        "rank_retrieval"
                    }
                    _ => {
                        let history = self
                            .history_ids(user)
                            .iter()
                            .map(|id| self.learned(id))
                            .collect::<Result<Vec<_>, _>>()?;
                        b.insert("history", numbered(&history));
                        "rank_history"
                    }
                };
                self.rank_with(template, b, &cands)
            }
            Strategy::LlmRank => {
                let cands: Vec<Candidate> = slate
                    .candidates
                    .iter()
                    .map(|id| Candidate::new(id, &self.title(id), &self.identity(id)))
                    .collect();
                let history: Vec<Candidate> = self
                    .history_ids(user)
                    .iter()
                    .map(|id| Candidate::new(id, &self.title(id), &self.identity(id)))
                    .collect();
                if history.is_empty() {
                    return Ok(Ranked { permutation: slate.candidates.clone(), prompt_digest: None, fallback: true });
                }
                let b = BTreeMap::from([("history", numbered(&history))]);
                self.rank_with("rank_zero_shot", b, &cands)
            }
            other => Err(RankError::Input(format!("{other} is not a language-model strategy"))),
        }
    }
}
