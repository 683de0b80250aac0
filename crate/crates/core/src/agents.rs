//! User and item agent behaviours, each a prompt rendering, one or two
//! gateway calls and a parse.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::bm25::Bm25Index;
use crate::corpus::ItemIdentity;
use crate::llm::{ChatRequest, Gateway, LlmError, Message, TaskKind};
use crate::prompts::{
    parse_choice, parse_description, parse_item_descriptions, parse_self_intro, parse_yes_no, Catalog,
    ParsedYesNo, PromptError,
};
use crate::text::{contains_words, normalize_title};

/// Request tag keys. Tags never reach a live model; scripted responders
/// use them to see the structure behind a rendered prompt.
pub mod tags {
    pub const TEMPLATE: &str = "template";
    /// Prefix for template bindings, e.g. `b.user_memory`.
    pub const BINDING: &str = "b.";
    /// Prefix for per-candidate facts, e.g. `cand.0.title`, `cand.0.memory`.
    pub const CANDIDATE: &str = "cand.";
    pub const CANDIDATE_COUNT: &str = "cand.count";
    /// Zero-based selection round within a training step.
    pub const ATTEMPT: &str = "attempt";
    /// Display position of the ground-truth positive in a selection.
    pub const POSITIVE_POSITION: &str = "truth.positive";
    /// User memory behind a follow-up turn that does not restate it.
    pub const CONTEXT_USER: &str = "ctx.user_memory";
    pub const REASK: &str = "reask";

    pub fn binding(name: &str) -> String {
        format!("{BINDING}{name}")
    }

    pub fn candidate(i: usize, field: &str) -> String {
        format!("{CANDIDATE}{i}.{field}")
    }
}

const SELECTION_REASK: &str = "Your previous answer did not follow the required format. Answer again using exactly this format: Chosen CD: [Title of the selected CD] \n Explanation: [Detailed rationale behind your choice].";

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("unparsable reply after re-ask: {raw:?}")]
    Unparsable { raw: String },
    #[error("backend returned an empty completion")]
    EmptyCompletion,
    #[error("review store: {0}")]
    ReviewStore(String),
}

/// An item as shown to an agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub id: String,
    pub title: String,
    pub memory: String,
}

impl Candidate {
    pub fn new(id: &str, title: &str, memory: &str) -> Self {
        Self { id: id.into(), title: title.into(), memory: memory.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub chosen: String,
    pub chosen_title: String,
    /// Display position of the chosen item (0 or 1).
    pub chosen_position: usize,
    pub explanation: String,
    pub correct: bool,
    pub reasked: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionResult {
    pub new_user_short: String,
    pub new_positive_text: String,
    /// False when the reply could not be parsed and the old text was kept.
    pub user_updated: bool,
    pub item_updated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub author: String,
    pub item: String,
    pub polarity: Polarity,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub before: ParsedYesNo,
    pub after: ParsedYesNo,
}

impl Decision {
    pub fn changed(&self) -> bool {
        self.before.choice != self.after.choice
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeighborMode {
    Similar,
    Distinct,
}

impl FromStr for NeighborMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "similar" => Ok(Self::Similar),
            "distinct" => Ok(Self::Distinct),
            other => Err(format!("unknown neighbor mode `{other}` (expected similar|distinct)")),
        }
    }
}

pub const DEFAULT_WARMUP_NEIGHBORS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct WarmupResult {
    pub text: String,
    /// The reply was usable and replaced the identity text.
    pub adjusted: bool,
}

/// Build a request from a catalog template. Every binding is also
/// attached as a `b.<name>` tag.
pub fn templated_request(
    catalog: &Catalog,
    template: &str,
    route: TaskKind,
    bindings: &BTreeMap<&str, String>,
) -> Result<ChatRequest, PromptError> {
    let prompt = catalog.render(template, bindings)?;
    let mut req = ChatRequest::new(route, vec![Message::system(prompt)]).tag(tags::TEMPLATE, template);
    for (k, v) in bindings {
        req = req.tag(&tags::binding(k), v.clone());
    }
    Ok(req)
}

/// Attach `cand.<i>.{id,title,memory}` tags and the candidate count.
pub fn tag_candidates(mut req: ChatRequest, cands: &[&Candidate]) -> ChatRequest {
    req = req.tag(tags::CANDIDATE_COUNT, cands.len().to_string());
    for (i, c) in cands.iter().enumerate() {
        req = req
            .tag(&tags::candidate(i, "id"), c.id.clone())
            .tag(&tags::candidate(i, "title"), c.title.clone())
            .tag(&tags::candidate(i, "memory"), c.memory.clone());
    }
    req
}

fn bindings<const N: usize>(pairs: [(&'static str, &str); N]) -> BTreeMap<&'static str, String> {
    pairs.into_iter().map(|(k, v)| (k, v.to_string())).collect()
}

/// Selection prompt with the two candidates in display order.
pub fn selection_request(
    catalog: &Catalog,
    user_memory: &str,
    first: &Candidate,
    second: &Candidate,
) -> Result<ChatRequest, PromptError> {
    let b = bindings([("user_memory", user_memory), ("first_item", &first.memory), ("second_item", &second.memory)]);
    let req = templated_request(catalog, "select_pair", TaskKind::Selection, &b)?;
    Ok(tag_candidates(req, &[first, second]))
}

pub fn user_reflection_request(
    catalog: &Catalog,
    user_memory: &str,
    first: &Candidate,
    second: &Candidate,
    chosen_title: &str,
    explanation: &str,
    preferred_title: &str,
) -> Result<ChatRequest, PromptError> {
    let b = bindings([
        ("user_memory", user_memory),
        ("first_item", &first.memory),
        ("second_item", &second.memory),
        ("chosen_title", chosen_title),
        ("user_explanation", explanation),
        ("preferred_title", preferred_title),
    ]);
    let req = templated_request(catalog, "reflect_user", TaskKind::Reflection, &b)?;
    Ok(tag_candidates(req, &[first, second]))
}

pub fn item_reflection_request(
    catalog: &Catalog,
    user_memory: &str,
    positive: &Candidate,
    negative: &Candidate,
    chosen_title: &str,
    explanation: &str,
) -> Result<ChatRequest, PromptError> {
    let b = bindings([
        ("user_memory", user_memory),
        ("positive_item", &positive.memory),
        ("negative_item", &negative.memory),
        ("chosen_title", chosen_title),
        ("user_explanation", explanation),
        ("positive_title", &positive.title),
        ("negative_title", &negative.title),
    ]);
    let req = templated_request(catalog, "reflect_items", TaskKind::Reflection, &b)?;
    Ok(tag_candidates(req, &[positive, negative]))
}

/// Stateless agent behaviours over a gateway and a template catalog.
#[derive(Clone, Copy)]
pub struct Agents<'a> {
    pub gateway: &'a Gateway,
    pub catalog: &'a Catalog,
}

impl<'a> Agents<'a> {
    pub fn new(gateway: &'a Gateway, catalog: &'a Catalog) -> Self {
        Self { gateway, catalog }
    }

    fn call(&self, req: &ChatRequest) -> Result<String, AgentError> {
        Ok(self.gateway.complete(req)?.text)
    }

    /// Ask the user agent to pick one of two items shown in the given
    /// order. `positive_position` (0 or 1) decides correctness only.
    pub fn select_pairwise(
        &self,
        user_memory: &str,
        first: &Candidate,
        second: &Candidate,
        positive_position: usize,
        attempt: u32,
    ) -> Result<SelectionOutcome, AgentError> {
        let req = selection_request(self.catalog, user_memory, first, second)?
            .tag(tags::ATTEMPT, attempt.to_string())
            .tag(tags::POSITIVE_POSITION, positive_position.to_string());
        let titles = [first.title.as_str(), second.title.as_str()];
        let reply = self.call(&req)?;
        let (parsed, reasked) = match parse_choice(&reply, &titles) {
            Ok(p) => (p, false),
            Err(_) => {
                log::warn!("selection reply unparsable, re-asking once");
                let mut again = req.clone().tag(tags::REASK, "1");
                again.messages.push(Message::assistant(reply.clone()));
                again.messages.push(Message::user(SELECTION_REASK));
                let second_reply = self.call(&again)?;
                let p = parse_choice(&second_reply, &titles)
                    .map_err(|_| AgentError::Unparsable { raw: second_reply.clone() })?;
                (p, true)
            }
        };
        let chosen = if parsed.index == 0 { first } else { second };
        Ok(SelectionOutcome {
            chosen: chosen.id.clone(),
            chosen_title: chosen.title.clone(),
            chosen_position: parsed.index,
            explanation: parsed.explanation,
            correct: parsed.index == positive_position,
            reasked,
        })
    }

    /// Rewrite the user's short-term memory and the positive item's memory
    /// after a wrong choice. The item prompt sees the updated user memory.
    pub fn reflect_on_failure(
        &self,
        user_memory: &str,
        first: &Candidate,
        second: &Candidate,
        positive_position: usize,
        outcome: &SelectionOutcome,
    ) -> Result<ReflectionResult, AgentError> {
        let (positive, negative) = if positive_position == 0 { (first, second) } else { (second, first) };
        let req = user_reflection_request(
            self.catalog,
            user_memory,
            first,
            second,
            &outcome.chosen_title,
            &outcome.explanation,
            &positive.title,
        )?;
        let reply = self.call(&req)?;
        let (new_user_short, user_updated) = match parse_self_intro(&reply) {
            Ok(p) => {
                if p.low_confidence {
                    log::warn!("user reflection reply lacked its label; using whole reply");
                }
                (p.text, true)
            }
            Err(e) => {
                log::warn!("user reflection unparsable ({e}); keeping previous memory");
                (user_memory.to_string(), false)
            }
        };

        let req = item_reflection_request(
            self.catalog,
            &new_user_short,
            positive,
            negative,
            &outcome.chosen_title,
            &outcome.explanation,
        )?;
        let reply = self.call(&req)?;
        // the negative item's rewritten description is discarded
        let (new_positive_text, item_updated) = match parse_item_descriptions(&reply) {
            Ok(p) => (p.first, true),
            Err(e) => {
                log::warn!("item reflection unparsable ({e}); keeping previous memory");
                (positive.memory.clone(), false)
            }
        };
        Ok(ReflectionResult { new_user_short, new_positive_text, user_updated, item_updated })
    }

    /// Let the user agent refine its memory after a correct choice.
    /// Returns `None` if the reply was unusable.
    pub fn consolidate_on_success(
        &self,
        user_memory: &str,
        first: &Candidate,
        second: &Candidate,
        outcome: &SelectionOutcome,
    ) -> Result<Option<String>, AgentError> {
        let rejected = if outcome.chosen_position == 0 { second } else { first };
        let b = bindings([
            ("user_memory", user_memory),
            ("first_item", &first.memory),
            ("second_item", &second.memory),
            ("chosen_title", &outcome.chosen_title),
            ("rejected_title", &rejected.title),
            ("user_explanation", &outcome.explanation),
        ]);
        let req = tag_candidates(
            templated_request(self.catalog, "consolidate_success", TaskKind::Reflection, &b)?,
            &[first, second],
        );
        let reply = self.call(&req)?;
        match parse_self_intro(&reply) {
            Ok(p) => Ok(Some(p.text)),
            Err(e) => {
                log::warn!("consolidation unparsable ({e}); keeping previous memory");
                Ok(None)
            }
        }
    }

    /// A review of at most `max_words` words.
    pub fn write_review(
        &self,
        user_memory: &str,
        item_memory: &str,
        polarity: Polarity,
        max_words: usize,
    ) -> Result<String, AgentError> {
        let template = match polarity {
            Polarity::Positive => "review_positive",
            Polarity::Negative => "review_negative",
        };
        let b = bindings([("user_memory", user_memory), ("item_memory", item_memory)]);
        let req = templated_request(self.catalog, template, TaskKind::Auxiliary, &b)?;
        let reply = self.call(&req)?;
        let text = reply.trim();
        if text.is_empty() {
            return Err(AgentError::EmptyCompletion);
        }
        let words: Vec<&str> = text.split_whitespace().collect();
        if words.len() > max_words {
            log::warn!("review truncated from {} to {max_words} words", words.len());
            return Ok(words[..max_words].join(" "));
        }
        Ok(text.to_string())
    }

    /// Decide on an item before and after reading reviews. With no
    /// reviews the second question is not asked.
    pub fn decide_with_reviews(
        &self,
        user_memory: &str,
        item_title: &str,
        item_memory: &str,
        reviews: &[String],
    ) -> Result<Decision, AgentError> {
        let b = bindings([("user_memory", user_memory), ("item_title", item_title), ("item_memory", item_memory)]);
        let req = templated_request(self.catalog, "decide_before_reviews", TaskKind::Auxiliary, &b)?;
        let first_reply = self.call(&req)?;
        let before = parse_yes_no(&first_reply)?;
        if reviews.is_empty() {
            return Ok(Decision { after: before.clone(), before });
        }
        let joined = reviews.join("\n");
        let follow_up = self.catalog.render("decide_after_reviews", &bindings([("reviews", &joined)]))?;
        let mut req2 = req.clone().tag(tags::TEMPLATE, "decide_after_reviews");
        req2.tags.retain(|k, _| !k.starts_with(tags::BINDING));
        req2 = req2
            .tag(&tags::binding("reviews"), joined.clone())
            .tag(tags::CONTEXT_USER, user_memory)
            .tag(&tags::binding("item_memory"), item_memory);
        req2.messages.push(Message::assistant(first_reply));
        req2.messages.push(Message::user(follow_up));
        let after = parse_yes_no(&self.call(&req2)?)?;
        Ok(Decision { before, after })
    }

    /// Rewrite a cold item's memory after reading neighbour memories.
    /// Without neighbours nothing is asked and the identity text is kept.
    pub fn warmup_cold_item(&self, cold: &ItemIdentity, neighbors: &[String]) -> Result<WarmupResult, AgentError> {
        let identity = cold.render();
        if neighbors.is_empty() {
            return Ok(WarmupResult { text: identity, adjusted: false });
        }
        let listed = neighbors
            .iter()
            .enumerate()
            .map(|(i, m)| format!("{}. {m}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        let b = bindings([("cold_identity", &identity), ("neighbors", &listed)]);
        let req = templated_request(self.catalog, "warmup_cold", TaskKind::Reflection, &b)?;
        let reply = self.call(&req)?;
        match parse_description(&reply) {
            Ok(p) => Ok(WarmupResult { text: p.text, adjusted: true }),
            Err(_) => {
                log::warn!("warmup reply empty for {}; keeping identity memory", cold.item_id);
                Ok(WarmupResult { text: identity, adjusted: false })
            }
        }
    }

    /// Ask the user agent a yes/no question about its own preferences.
    pub fn query_preference(&self, user_memory: &str, question: &str) -> Result<ParsedYesNo, AgentError> {
        let question = format!(
            "{question} Please answer based on your preferences described above, rather than relying on your general knowledge."
        );
        let b = bindings([("user_memory", user_memory), ("question", &question)]);
        let req = templated_request(self.catalog, "query_preference", TaskKind::Reflection, &b)?;
        Ok(parse_yes_no(&self.call(&req)?)?)
    }
}

/// Pick warmup neighbours for `cold` among `pool` identity texts by BM25:
/// the `k` highest scores for [`NeighborMode::Similar`], the `k` lowest
/// for [`NeighborMode::Distinct`]. Returns pool indices.
pub fn select_warmup_neighbors<S: AsRef<str>>(cold: &ItemIdentity, pool: &[S], k: usize, mode: NeighborMode) -> Vec<usize> {
    if pool.is_empty() || k == 0 {
        return Vec::new();
    }
    let ranked = Bm25Index::new(pool).ranked(&cold.render());
    let idx = ranked.into_iter().map(|(i, _)| i);
    match mode {
        NeighborMode::Similar => idx.take(k).collect(),
        NeighborMode::Distinct => {
            let all: Vec<usize> = idx.collect();
            all.into_iter().rev().take(k).collect()
        }
    }
}

/// Case-insensitive phrase detector over memory texts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordDetector {
    phrases: Vec<String>,
}

impl KeywordDetector {
    /// Returns `None` if no non-blank phrase was given.
    pub fn new<S: AsRef<str>>(phrases: &[S]) -> Option<Self> {
        let phrases: Vec<String> = phrases
            .iter()
            .map(|p| normalize_title(p.as_ref()))
            .filter(|p| !p.is_empty())
            .collect();
        (!phrases.is_empty()).then_some(Self { phrases })
    }

    pub fn matches(&self, text: &str) -> bool {
        let hay = normalize_title(text);
        self.phrases.iter().any(|p| contains_words(&hay, p))
    }
}

/// Append-only store of written reviews.
pub struct ReviewStore {
    path: Option<PathBuf>,
    records: Mutex<Vec<ReviewRecord>>,
}

impl ReviewStore {
    pub fn in_memory() -> Self {
        Self { path: None, records: Mutex::new(Vec::new()) }
    }

    pub fn open(path: &Path) -> Result<Self, AgentError> {
        let mut records = Vec::new();
        if path.exists() {
            let file = std::fs::File::open(path).map_err(|e| AgentError::ReviewStore(e.to_string()))?;
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| AgentError::ReviewStore(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                records.push(
                    serde_json::from_str(&line)
                        .map_err(|e| AgentError::ReviewStore(format!("line {}: {e}", n + 1)))?,
                );
            }
        }
        Ok(Self { path: Some(path.to_path_buf()), records: Mutex::new(records) })
    }

    pub fn append(&self, record: ReviewRecord) -> Result<(), AgentError> {
        let mut records = self.records.lock().expect("review store poisoned");
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| AgentError::ReviewStore(e.to_string()))?;
            writeln!(f, "{}", serde_json::to_string(&record).expect("review serializes"))
                .map_err(|e| AgentError::ReviewStore(e.to_string()))?;
        }
        records.push(record);
        Ok(())
    }

    pub fn all(&self) -> Vec<ReviewRecord> {
        self.records.lock().expect("review store poisoned").clone()
    }

    pub fn for_item(&self, item: &str, polarity: Option<Polarity>) -> Vec<ReviewRecord> {
        self.all()
            .into_iter()
            .filter(|r| r.item == item && polarity.is_none_or(|p| p == r.polarity))
            .collect()
    }
}
