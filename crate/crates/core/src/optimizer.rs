//! The collaborative training loop: pairwise selection against a
//! popularity-sampled negative, reflection on mistakes, and memory
//! bookkeeping, with a JSONL trace and resumable checkpoints.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentError, Agents, Candidate};
use crate::corpus::{sample_negative, CorpusError, PopularityTable, Split};
use crate::llm::LlmError;
use crate::memory::{MemoryError, MemoryStore};
use crate::prompts::PromptError;
use crate::seeds::rng_for;

pub const TRACE_FORMAT_VERSION: u32 = 1;
const TRACE_FORMAT: &str = "agentcf-trace";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepOrdering {
    /// All users' training interactions merged by timestamp.
    GlobalChronological,
    /// Each user's sequence to completion, users in id order.
    PerUser,
}

impl FromStr for StepOrdering {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "global-chronological" => Ok(Self::GlobalChronological),
            "per-user" => Ok(Self::PerUser),
            other => Err(format!("unknown ordering `{other}` (expected global-chronological|per-user)")),
        }
    }
}

/// Where the sampled negative is displayed in the selection prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativePosition {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Reflection rounds allowed per step after the first attempt.
    pub max_rounds: u32,
    pub negative_position: NegativePosition,
    pub ordering: StepOrdering,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub max_steps: Option<usize>,
    /// Also run the success refinement when a step becomes correct only
    /// after reflection.
    pub consolidate_after_reflection: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_rounds: 2,
            negative_position: NegativePosition::First,
            ordering: StepOrdering::GlobalChronological,
            seed: 2024,
            checkpoint_every: 50,
            max_steps: None,
            consolidate_after_reflection: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.max_rounds < 1 {
            problems.push("train.max_rounds must be at least 1".to_string());
        }
        if self.checkpoint_every == 0 {
            problems.push("train.checkpoint_every must be positive".to_string());
        }
        problems
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub round: u32,
    pub chosen: String,
    pub correct: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepStatus {
    Completed,
    /// The selection reply could not be parsed even after a re-ask.
    Unparsable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Position in the global step order.
    pub global_index: usize,
    pub user_id: String,
    /// Position within the user's training sequence.
    pub step_index: usize,
    pub positive: String,
    pub negative: String,
    /// Display position of the negative (0 = first).
    pub negative_position: usize,
    pub attempts: Vec<Attempt>,
    pub final_correct: bool,
    pub user_rewrites: u32,
    pub item_rewrites: u32,
    pub status: StepStatus,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainStep {
    pub user_id: String,
    pub step_index: usize,
    pub item_id: String,
    pub timestamp: u64,
}

/// Training interactions in execution order.
pub fn training_steps(split: &Split, ordering: StepOrdering) -> Vec<TrainStep> {
    let mut steps: Vec<TrainStep> = split
        .train
        .iter()
        .flat_map(|(u, seq)| {
            seq.iter().enumerate().map(move |(i, it)| TrainStep {
                user_id: u.clone(),
                step_index: i,
                item_id: it.item_id.clone(),
                timestamp: it.timestamp,
            })
        })
        .collect();
    if ordering == StepOrdering::GlobalChronological {
        // stable: equal timestamps keep (user id, position) order
        steps.sort_by_key(|s| s.timestamp);
    }
    steps
}

#[derive(Debug, thiserror::Error)]
pub enum OptimizeError {
    #[error("gateway failure at step {step}: {source}")]
    Gateway { step: usize, source: LlmError },
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("agent: {0}")]
    Agent(String),
    #[error("invalid training config: {0}")]
    Config(String),
}

/// Memory writes of one step, applied after the step finishes.
enum PendingWrite {
    UserShort(String),
    Item(String),
}

#[allow(clippy::too_many_arguments)]
fn run_step(
    agents: &Agents,
    store: &MemoryStore,
    split: &Split,
    titles: &Titles,
    pop: &PopularityTable,
    cfg: &TrainConfig,
    global_index: usize,
    step: &TrainStep,
) -> Result<(StepRecord, Vec<PendingWrite>), OptimizeError> {
    let user = &step.user_id;
    let mut rng = rng_for(cfg.seed, &["negative", user, &step.step_index.to_string()]);
    let exclude: HashSet<&str> = split.full_history(user);
    let negative_id = sample_negative(pop, &exclude, &mut rng)?;

    let item = |id: &str| -> Result<Candidate, OptimizeError> {
        let mem = store.item(id)?;
        let title = titles.get(id).map_or(id, String::as_str);
        Ok(Candidate::new(id, title, &mem.text))
    };
    let mut positive = item(&step.item_id)?;
    let negative = item(&negative_id)?;
    let mut user_short = store.user(user)?.short_term.clone();

    let negative_position = match cfg.negative_position {
        NegativePosition::First => 0,
        NegativePosition::Second => 1,
    };
    let positive_position = 1 - negative_position;

    let mut record = StepRecord {
        global_index,
        user_id: user.clone(),
        step_index: step.step_index,
        positive: positive.id.clone(),
        negative: negative.id.clone(),
        negative_position,
        attempts: Vec::new(),
        final_correct: false,
        user_rewrites: 0,
        item_rewrites: 0,
        status: StepStatus::Completed,
    };
    let mut writes = Vec::new();
    let gw = |e: AgentError| match e {
        AgentError::Llm(source) => OptimizeError::Gateway { step: global_index, source },
        AgentError::Prompt(p) => OptimizeError::Prompt(p),
        other => OptimizeError::Agent(other.to_string()),
    };

    for round in 0..=cfg.max_rounds {
        let (first, second) = if negative_position == 0 { (&negative, &positive) } else { (&positive, &negative) };
        let outcome = match agents.select_pairwise(&user_short, first, second, positive_position, round) {
            Ok(o) => o,
            Err(AgentError::Unparsable { raw }) => {
                log::warn!("step {global_index} (user {user}): unparsable selection, skipping: {raw:?}");
                record.status = StepStatus::Unparsable;
                break;
            }
            Err(e) => return Err(gw(e)),
        };
        record.attempts.push(Attempt { round, chosen: outcome.chosen.clone(), correct: outcome.correct });
        if outcome.correct {
            if round == 0 || cfg.consolidate_after_reflection {
                if let Some(text) = agents.consolidate_on_success(&user_short, first, second, &outcome).map_err(gw)? {
                    writes.push(PendingWrite::UserShort(text));
                    record.user_rewrites += 1;
                }
            }
            break;
        }
        if round == cfg.max_rounds {
            break;
        }
        let r = agents
            .reflect_on_failure(&user_short, first, second, positive_position, &outcome)
            .map_err(gw)?;
        if r.user_updated {
            user_short = r.new_user_short.clone();
            writes.push(PendingWrite::UserShort(r.new_user_short));
            record.user_rewrites += 1;
        }
        if r.item_updated {
            positive.memory = r.new_positive_text.clone();
            writes.push(PendingWrite::Item(r.new_positive_text));
            record.item_rewrites += 1;
        }
    }
    record.final_correct = record.attempts.last().is_some_and(|a| a.correct);
    Ok((record, writes))
}

/// Persists the trace and periodic memory snapshots under one directory.
pub struct Checkpointer {
    dir: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct Progress {
    next_step: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceHeader {
    format: String,
    version: u32,
}

impl Checkpointer {
    pub fn new(dir: &Path) -> Result<Self, OptimizeError> {
        std::fs::create_dir_all(dir).map_err(|e| OptimizeError::Checkpoint(e.to_string()))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn trace_path(&self) -> PathBuf {
        self.dir.join("trace.jsonl")
    }

    fn snapshot_path(&self) -> PathBuf {
        self.dir.join("checkpoint-memory.json")
    }

    fn progress_path(&self) -> PathBuf {
        self.dir.join("checkpoint.json")
    }

    fn err(e: impl std::fmt::Display) -> OptimizeError {
        OptimizeError::Checkpoint(e.to_string())
    }

    fn write_atomic(path: &Path, contents: &str) -> Result<(), OptimizeError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, contents).map_err(Self::err)?;
        std::fs::rename(&tmp, path).map_err(Self::err)
    }

    pub fn save(&self, store: &MemoryStore, next_step: usize) -> Result<(), OptimizeError> {
        Self::write_atomic(&self.snapshot_path(), &store.snapshot())?;
        let progress = serde_json::to_string(&Progress { next_step }).expect("progress serializes");
        Self::write_atomic(&self.progress_path(), &progress)
    }

    /// Latest checkpoint, with the trace file cut back to match it.
    pub fn resume(&self) -> Result<Option<(MemoryStore, usize)>, OptimizeError> {
        if !self.progress_path().exists() {
            return Ok(None);
        }
        let progress: Progress =
            serde_json::from_str(&std::fs::read_to_string(self.progress_path()).map_err(Self::err)?)
                .map_err(Self::err)?;
        let store = MemoryStore::load(&std::fs::read_to_string(self.snapshot_path()).map_err(Self::err)?)?;
        let records = read_trace(&self.trace_path())?;
        if records.len() < progress.next_step {
            return Err(Self::err(format!(
                "trace has {} records but checkpoint expects {}",
                records.len(),
                progress.next_step
            )));
        }
        self.start_trace(&records[..progress.next_step])?;
        Ok(Some((store, progress.next_step)))
    }

    /// Rewrite the trace file with `records`.
    pub fn start_trace(&self, records: &[StepRecord]) -> Result<(), OptimizeError> {
        let mut out = String::new();
        let header = TraceHeader { format: TRACE_FORMAT.into(), version: TRACE_FORMAT_VERSION };
        out.push_str(&serde_json::to_string(&header).expect("header serializes"));
        out.push('\n');
        for r in records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        Self::write_atomic(&self.trace_path(), &out)
    }

    fn append(&self, record: &StepRecord) -> Result<(), OptimizeError> {
        let mut f = OpenOptions::new().append(true).open(self.trace_path()).map_err(Self::err)?;
        writeln!(f, "{}", serde_json::to_string(record).expect("record serializes")).map_err(Self::err)
    }
}

pub fn read_trace(path: &Path) -> Result<Vec<StepRecord>, OptimizeError> {
    let f = File::open(path).map_err(Checkpointer::err)?;
    let mut lines = BufReader::new(f).lines();
    let header: TraceHeader = match lines.next() {
        Some(l) => serde_json::from_str(&l.map_err(Checkpointer::err)?).map_err(Checkpointer::err)?,
        None => return Err(Checkpointer::err("empty trace file")),
    };
    if header.format != TRACE_FORMAT || header.version != TRACE_FORMAT_VERSION {
        return Err(Checkpointer::err(format!("unsupported trace {} v{}", header.format, header.version)));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line.map_err(Checkpointer::err)?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(Checkpointer::err)?);
        }
    }
    Ok(out)
}

/// Item titles by id, used to label candidates in prompts.
pub type Titles = BTreeMap<String, String>;

/// Run training steps `start..` over `split`, mutating `store`.
///
/// Each step's memory writes are applied only after the step completes.
/// On a gateway failure the checkpointer (if any) saves the store as of
/// the last completed step before the error is returned.
#[allow(clippy::too_many_arguments)]
pub fn optimize(
    agents: &Agents,
    split: &Split,
    titles: &Titles,
    store: &mut MemoryStore,
    pop: &PopularityTable,
    cfg: &TrainConfig,
    start: usize,
    checkpoint: Option<&Checkpointer>,
) -> Result<Vec<StepRecord>, OptimizeError> {
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(OptimizeError::Config(problems.join("; ")));
    }
    let steps = training_steps(split, cfg.ordering);
    let end = cfg.max_steps.map_or(steps.len(), |m| m.min(steps.len()));
    if let Some(cp) = checkpoint {
        if start == 0 {
            cp.start_trace(&[])?;
        }
    }
    let mut trace = Vec::with_capacity(end.saturating_sub(start));
    for (global_index, step) in steps.iter().enumerate().take(end).skip(start) {
        let (record, writes) = match run_step(agents, store, split, titles, pop, cfg, global_index, step) {
            Ok(x) => x,
            Err(e) => {
                if let Some(cp) = checkpoint {
                    cp.save(store, global_index)?;
                    log::error!("stopped at step {global_index}; checkpoint saved");
                }
                return Err(e);
            }
        };
        let pre_step = store.user(&step.user_id)?.short_term.clone();
        for w in writes {
            match w {
                PendingWrite::UserShort(text) => store.set_user_short(&step.user_id, &text)?,
                PendingWrite::Item(text) => store.set_item_text(&step.item_id, &text)?,
            }
        }
        store.append_long_term(&step.user_id, &pre_step)?;
        if let Some(cp) = checkpoint {
            cp.append(&record)?;
            if (global_index + 1) % cfg.checkpoint_every == 0 {
                cp.save(store, global_index + 1)?;
            }
        }
        trace.push(record);
    }
    if let Some(cp) = checkpoint {
        cp.save(store, end)?;
    }
    Ok(trace)
}

/// Accuracy at one of the last few step positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentPoint {
    /// Steps before each user's final training step (0 = final).
    pub from_end: usize,
    pub n_users: usize,
    pub first_attempt_acc: f64,
    pub final_acc: f64,
}

/// First-attempt and post-reflection accuracy over each user's last
/// `last_n` completed steps, earliest position first.
pub fn alignment_curve(trace: &[StepRecord], last_n: usize) -> Result<Vec<AlignmentPoint>, OptimizeError> {
    let mut by_user: BTreeMap<&str, Vec<&StepRecord>> = BTreeMap::new();
    for r in trace.iter().filter(|r| r.status == StepStatus::Completed) {
        by_user.entry(r.user_id.as_str()).or_default().push(r);
    }
    if by_user.is_empty() || last_n == 0 {
        return Err(OptimizeError::Config("alignment curve needs a non-empty trace".into()));
    }
    let mut points = Vec::new();
    for from_end in (0..last_n).rev() {
        let (mut n, mut first, mut last) = (0usize, 0usize, 0usize);
        for steps in by_user.values_mut() {
            steps.sort_by_key(|r| r.step_index);
            if steps.len() > from_end {
                let r = steps[steps.len() - 1 - from_end];
                n += 1;
                first += usize::from(r.attempts.first().is_some_and(|a| a.correct));
                last += usize::from(r.final_correct);
            }
        }
        if n > 0 {
            points.push(AlignmentPoint {
                from_end,
                n_users: n,
                first_attempt_acc: first as f64 / n as f64,
                final_acc: last as f64 / n as f64,
            });
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Interaction;

    fn split() -> Split {
        let seq = |items: &[(&str, u64)]| {
            items.iter().map(|(i, t)| Interaction { item_id: i.to_string(), timestamp: *t }).collect::<Vec<_>>()
        };
        Split {
            train: BTreeMap::from([
                ("u1".to_string(), seq(&[("a", 1), ("b", 5)])),
                ("u2".to_string(), seq(&[("c", 2), ("a", 3)])),
            ]),
            test_target: BTreeMap::from([
                ("u1".to_string(), Interaction { item_id: "c".into(), timestamp: 9 }),
                ("u2".to_string(), Interaction { item_id: "d".into(), timestamp: 9 }),
            ]),
        }
    }

    #[test]
    fn orderings() {
        let g: Vec<_> = training_steps(&split(), StepOrdering::GlobalChronological)
            .into_iter()
            .map(|s| (s.user_id, s.item_id))
            .collect();
        assert_eq!(
            g,
            [("u1", "a"), ("u2", "c"), ("u2", "a"), ("u1", "b")].map(|(u, i)| (u.to_string(), i.to_string()))
        );
        let p: Vec<_> = training_steps(&split(), StepOrdering::PerUser).into_iter().map(|s| s.item_id).collect();
        assert_eq!(p, ["a", "b", "c", "a"]);
    }

    fn rec(user: &str, step: usize, attempts: &[bool]) -> StepRecord {
        StepRecord {
            global_index: 0,
            user_id: user.into(),
            step_index: step,
            positive: "p".into(),
            negative: "n".into(),
            negative_position: 0,
            attempts: attempts
                .iter()
                .enumerate()
                .map(|(i, c)| Attempt { round: i as u32, chosen: "x".into(), correct: *c })
                .collect(),
            final_correct: *attempts.last().unwrap(),
            user_rewrites: 0,
            item_rewrites: 0,
            status: StepStatus::Completed,
        }
    }

    #[test]
    fn alignment_two_phase() {
        let trace: Vec<_> = (0..4).flat_map(|s| [rec("u1", s, &[false, true]), rec("u2", s, &[false, true])]).collect();
        let curve = alignment_curve(&trace, 3).unwrap();
        assert_eq!(curve.len(), 3);
        assert_eq!(curve.iter().map(|p| p.from_end).collect::<Vec<_>>(), [2, 1, 0]);
        for p in curve {
            assert_eq!((p.first_attempt_acc, p.final_acc, p.n_users), (0.0, 1.0, 2));
        }
    }

    #[test]
    fn alignment_short_users_contribute_available_steps() {
        let trace = vec![rec("u1", 0, &[true]), rec("u2", 0, &[true]), rec("u2", 1, &[false, false, false])];
        let curve = alignment_curve(&trace, 2).unwrap();
        assert_eq!(curve[0].n_users, 1);
        assert_eq!(curve[1].n_users, 2);
        assert_eq!(curve[1].final_acc, 0.5);
        assert!(alignment_curve(&[], 3).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig { max_rounds: 0, checkpoint_every: 0, ..TrainConfig::default() };
        assert_eq!(bad.validate().len(), 2);
        assert!(TrainConfig::default().validate().is_empty());
    }
}
