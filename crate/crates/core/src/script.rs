//! Deterministic stand-ins for a language model.
//!
//! Each [`ScriptKind`] answers every prompt in the catalog with a reply in
//! the format that prompt asks for, using the request tags attached by
//! [`crate::agents`] and [`crate::ranker`] rather than reading prose.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::agents::tags;
use crate::llm::{ChatRequest, Gateway, RouteTable, ScriptUpstream};
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScriptKind {
    /// Picks the first displayed item; echoes memories unchanged.
    AlwaysFirst,
    /// Wrong on the first selection round, right afterwards; echoes memories.
    WrongThenRight,
    /// Wrong on every selection round; ranks candidates in reverse.
    AlwaysWrong,
    /// Chooses and ranks by content-word overlap with the user's memory
    /// (ties go to the earlier position). Reflection appends sentences
    /// from the other side's memory.
    KeywordAffinity,
    /// Wrong then right like [`ScriptKind::WrongThenRight`], with the
    /// sentence-copying reflection of [`ScriptKind::KeywordAffinity`].
    CopyPhrases,
    /// Chooses and ranks by a hash of the titles, ignoring display order.
    PositionBlind,
    /// Picks first, ranks in presentation order, never changes a memory.
    NoOp,
}

impl ScriptKind {
    pub const ALL: [ScriptKind; 7] = [
        ScriptKind::AlwaysFirst,
        ScriptKind::WrongThenRight,
        ScriptKind::AlwaysWrong,
        ScriptKind::KeywordAffinity,
        ScriptKind::CopyPhrases,
        ScriptKind::PositionBlind,
        ScriptKind::NoOp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScriptKind::AlwaysFirst => "always-first",
            ScriptKind::WrongThenRight => "wrong-then-right",
            ScriptKind::AlwaysWrong => "always-wrong",
            ScriptKind::KeywordAffinity => "keyword-affinity",
            ScriptKind::CopyPhrases => "copy-phrases",
            ScriptKind::PositionBlind => "position-blind",
            ScriptKind::NoOp => "no-op",
        }
    }

    fn copies(self) -> bool {
        matches!(self, ScriptKind::KeywordAffinity | ScriptKind::CopyPhrases)
    }

    pub fn respond(self, req: &ChatRequest) -> String {
        let Some(template) = req.tag_value(tags::TEMPLATE) else {
            return req.last_content().to_string();
        };
        let v = View(req);
        match template {
            "select_pair" => self.select(&v),
            "reflect_user" => {
                let memory = v.b("user_memory");
                let updated = if self.copies() {
                    let preferred = v.b("preferred_title");
                    let source = v.candidates().into_iter().find(|c| c.title == preferred);
                    append_new_sentences(memory, source.map_or("", |c| c.memory))
                } else {
                    memory.to_string()
                };
                format!("My updated self-introduction: {updated}")
            }
            "consolidate_success" => {
                let memory = v.b("user_memory");
                let updated = if self.copies() {
                    let chosen = v.b("chosen_title");
                    let source = v.candidates().into_iter().find(|c| c.title == chosen);
                    append_new_sentences(memory, source.map_or("", |c| c.memory))
                } else {
                    memory.to_string()
                };
                format!("My updated self-introduction: {updated}")
            }
            "reflect_items" => {
                let positive = v.b("positive_item");
                let first = if self.copies() {
                    append_new_sentences(positive, v.b("user_memory"))
                } else {
                    positive.to_string()
                };
                format!(
                    "The updated description of the first CD is: {first}\nThe updated description of the second CD is: {}",
                    v.b("negative_item")
                )
            }
            "rank_basic" | "rank_retrieval" | "rank_history" | "rank_zero_shot" => self.rank(&v, template),
            "review_positive" => format!("{REVIEW_LIKED} {}", first_sentence(v.b("item_memory"))),
            "review_negative" => format!("{REVIEW_DISLIKED} {}", first_sentence(v.b("item_memory"))),
            "decide_before_reviews" => {
                yes_no(self.copies() && overlap(v.b("user_memory"), v.b("item_memory")) >= YES_OVERLAP)
            }
            "decide_after_reviews" => {
                let user = req.tag_value(tags::CONTEXT_USER).unwrap_or("");
                let reviews = v.b("reviews");
                let liked = reviews.matches(REVIEW_LIKED).count();
                let disliked = reviews.matches(REVIEW_DISLIKED).count();
                let agrees = overlap(user, v.b("item_memory")) >= YES_OVERLAP || overlap(user, reviews) >= YES_OVERLAP;
                yes_no(self.copies() && disliked <= liked && agrees)
            }
            "query_preference" => {
                yes_no(self.copies() && overlap(v.b("user_memory"), v.b("question")) >= YES_OVERLAP)
            }
            "warmup_cold" => {
                let identity = v.b("cold_identity");
                let text = if self.copies() {
                    let firsts: Vec<&str> = v
                        .b("neighbors")
                        .lines()
                        .map(|l| first_sentence(strip_number(l)))
                        .collect();
                    append_new_sentences(identity, &firsts.join(" "))
                } else {
                    identity.to_string()
                };
                format!("The updated description of the CD is: {text}")
            }
            _ => req.last_content().to_string(),
        }
    }

    fn select(self, v: &View) -> String {
        let cands = v.candidates();
        if cands.len() < 2 {
            return "Chosen CD: ?".into();
        }
        let attempt: u32 = v.0.tag_value(tags::ATTEMPT).and_then(|a| a.parse().ok()).unwrap_or(0);
        let positive: Option<usize> = v.0.tag_value(tags::POSITIVE_POSITION).and_then(|p| p.parse().ok());
        let wrong = |p: Option<usize>| p.map_or(0, |p| 1 - p.min(1));
        let pick = match self {
            ScriptKind::AlwaysFirst | ScriptKind::NoOp => 0,
            ScriptKind::AlwaysWrong => wrong(positive),
            ScriptKind::WrongThenRight | ScriptKind::CopyPhrases => {
                if attempt == 0 {
                    wrong(positive)
                } else {
                    positive.unwrap_or(1)
                }
            }
            ScriptKind::KeywordAffinity => {
                let user = v.b("user_memory");
                let a = overlap(user, cands[0].memory);
                let b = overlap(user, cands[1].memory);
                usize::from(b > a)
            }
            ScriptKind::PositionBlind => usize::from(title_hash(cands[1].title) < title_hash(cands[0].title)),
        };
        format!(
            "Chosen CD: {}\nExplanation: I prefer {} over {}.",
            cands[pick].title,
            cands[pick].title,
            cands[1 - pick].title
        )
    }

    fn rank(self, v: &View, template: &str) -> String {
        let cands = v.candidates();
        let mut order: Vec<usize> = (0..cands.len()).collect();
        match self {
            ScriptKind::AlwaysWrong => order.reverse(),
            ScriptKind::PositionBlind => order.sort_by_key(|&i| title_hash(cands[i].title)),
            ScriptKind::KeywordAffinity | ScriptKind::CopyPhrases => {
                let query = match template {
                    "rank_basic" => v.b("user_memory").to_string(),
                    "rank_retrieval" => format!("{} {}", v.b("retrieved_memory"), v.b("user_memory")),
                    "rank_history" => format!("{} {}", v.b("user_memory"), v.b("history")),
                    _ => v.b("history").to_string(),
                };
                let scores: Vec<usize> = cands.iter().map(|c| overlap(&query, c.memory)).collect();
                order.sort_by(|&a, &b| scores[b].cmp(&scores[a]).then(a.cmp(&b)));
            }
            _ => {}
        }
        order
            .iter()
            .enumerate()
            .map(|(rank, &i)| format!("{}. {}", rank + 1, cands[i].title))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl fmt::Display for ScriptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScriptKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScriptKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ScriptKind::ALL.iter().map(|k| k.name()).collect();
                format!("unknown script `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// A gateway answering every route from `kind`.
pub fn scripted_gateway(kind: ScriptKind, routes: RouteTable) -> Gateway {
    Gateway::direct(routes, Arc::new(ScriptUpstream::new(move |req| kind.respond(req))))
}

const YES_OVERLAP: usize = 2;
const REVIEW_LIKED: &str = "I enjoyed this CD.";
const REVIEW_DISLIKED: &str = "I did not enjoy this CD.";

const STOPWORDS: &[&str] = &[
    "about", "after", "also", "and", "are", "but", "called", "can", "category", "cd", "cds", "for", "from",
    "has", "have", "her", "his", "how", "into", "its", "more", "not", "of", "one", "other", "our", "out",
    "over", "she", "some", "than", "that", "the", "their", "them", "then", "there", "these", "they",
    "this", "those", "very", "was", "were", "what", "when", "which", "while", "who", "will", "with",
    "you", "your",
];

fn content_words(text: &str) -> HashSet<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| t.chars().count() >= 3 && !STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// Number of distinct content words two texts share.
pub fn overlap(a: &str, b: &str) -> usize {
    let a = content_words(a);
    content_words(b).iter().filter(|w| a.contains(*w)).count()
}

fn title_hash(title: &str) -> u64 {
    let digest = Sha256::digest(title.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 8 bytes"))
}

fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for (i, c) in text.char_indices() {
        let end_of_sentence = matches!(c, '.' | '!' | '?')
            && bytes.get(i + 1).is_none_or(|b| b.is_ascii_whitespace());
        if end_of_sentence {
            let s = text[start..=i].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = i + 1;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

fn first_sentence(text: &str) -> &str {
    sentences(text).first().copied().unwrap_or("")
}

fn strip_number(line: &str) -> &str {
    let t = line.trim_start();
    let rest = t.trim_start_matches(|c: char| c.is_ascii_digit());
    rest.strip_prefix('.').map(str::trim_start).unwrap_or(t)
}

/// `base` followed by every sentence of `source` it does not already contain.
fn append_new_sentences(base: &str, source: &str) -> String {
    let have: BTreeSet<&str> = sentences(base).into_iter().collect();
    let mut out = base.trim().to_string();
    for s in sentences(source) {
        if !have.contains(s) && !out.contains(s) {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(s);
        }
    }
    out
}

fn yes_no(yes: bool) -> String {
    if yes {
        "Choice: Yes\nExplanation: It matches what I wrote about myself.".into()
    } else {
        "Choice: No\nExplanation: Nothing in my self-description points to it.".into()
    }
}

struct ViewCandidate<'a> {
    title: &'a str,
    memory: &'a str,
}

struct View<'a>(&'a ChatRequest);

impl<'a> View<'a> {
    fn b(&self, name: &str) -> &'a str {
        self.0.tags.get(&tags::binding(name)).map(String::as_str).unwrap_or("")
    }

    fn candidates(&self) -> Vec<ViewCandidate<'a>> {
        let n: usize = self.0.tag_value(tags::CANDIDATE_COUNT).and_then(|n| n.parse().ok()).unwrap_or(0);
        (0..n)
            .map(|i| ViewCandidate {
                title: self.0.tags.get(&tags::candidate(i, "title")).map(String::as_str).unwrap_or(""),
                memory: self.0.tags.get(&tags::candidate(i, "memory")).map(String::as_str).unwrap_or(""),
            })
            .collect()
    }
}
