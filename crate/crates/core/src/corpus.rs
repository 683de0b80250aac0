//! Interaction logs: ingestion, user subsets, statistics, leave-one-out
//! splits, popularity tables and popularity-weighted negative sampling.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::text::word_count;

pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("requested {requested} users but only {available} exist")]
    NotEnoughUsers { requested: usize, available: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("user {0} has fewer than 2 interactions")]
    ShortSequence(String),
    #[error("no item outside the exclusion set has positive probability")]
    NoNegativeCandidate,
    #[error("item {0} referenced by a sequence has no identity")]
    UnknownItem(String),
    #[error("dataset snapshot: {0}")]
    Snapshot(String),
}

/// One review line from the source log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    #[serde(rename = "reviewerID")]
    pub user_id: String,
    #[serde(rename = "asin")]
    pub item_id: String,
    #[serde(rename = "unixReviewTime")]
    pub timestamp: u64,
    #[serde(rename = "reviewText", default, skip_serializing_if = "Option::is_none")]
    pub review_text: Option<String>,
    #[serde(rename = "overall", default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<f64>,
}

impl RawRecord {
    pub fn new(user_id: &str, item_id: &str, timestamp: u64) -> Self {
        Self {
            user_id: user_id.to_string(),
            item_id: item_id.to_string(),
            timestamp,
            review_text: None,
            rating: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemIdentity {
    pub item_id: String,
    pub title: String,
    pub categories: Vec<String>,
}

impl ItemIdentity {
    pub fn new(item_id: &str, title: &str, categories: &[&str]) -> Self {
        Self {
            item_id: item_id.to_string(),
            title: title.to_string(),
            categories: categories.iter().map(|c| c.to_string()).collect(),
        }
    }

    /// The identity sentence item agents start from.
    pub fn render(&self) -> String {
        format!(
            "The CD is called \"{}\". The category of this CD is: \"{}\".",
            self.title,
            self.categories.join("; ")
        )
    }
}

#[derive(Debug, Deserialize)]
struct MetaRecord {
    asin: String,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    category: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub item_id: String,
    pub timestamp: u64,
}

/// Users, item identities and per-user chronological sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub users: BTreeSet<String>,
    pub items: BTreeMap<String, ItemIdentity>,
    pub sequences: BTreeMap<String, Vec<Interaction>>,
}

#[derive(Serialize, Deserialize)]
struct DatasetDocument {
    schema_version: u32,
    #[serde(flatten)]
    dataset: Dataset,
}

impl Dataset {
    /// Build from raw records. Sequences are stably sorted by timestamp,
    /// exact duplicate (user, item, timestamp) triples are dropped, and
    /// items without an identity get their id as title.
    pub fn from_records(
        records: impl IntoIterator<Item = RawRecord>,
        identities: impl IntoIterator<Item = ItemIdentity>,
    ) -> Self {
        let known: HashMap<String, ItemIdentity> = identities
            .into_iter()
            .map(|i| (i.item_id.clone(), i))
            .collect();
        let mut sequences: BTreeMap<String, Vec<Interaction>> = BTreeMap::new();
        let mut seen: HashSet<(String, String, u64)> = HashSet::new();
        for r in records {
            if !seen.insert((r.user_id.clone(), r.item_id.clone(), r.timestamp)) {
                continue;
            }
            sequences.entry(r.user_id).or_default().push(Interaction {
                item_id: r.item_id,
                timestamp: r.timestamp,
            });
        }
        let mut items = BTreeMap::new();
        let mut missing = 0usize;
        for seq in sequences.values_mut() {
            seq.sort_by_key(|i| i.timestamp);
            for inter in seq.iter() {
                if items.contains_key(&inter.item_id) {
                    continue;
                }
                let identity = known.get(&inter.item_id).cloned().unwrap_or_else(|| {
                    missing += 1;
                    ItemIdentity {
                        item_id: inter.item_id.clone(),
                        title: inter.item_id.clone(),
                        categories: Vec::new(),
                    }
                });
                items.insert(inter.item_id.clone(), identity);
            }
        }
        if missing > 0 {
            warn!("{missing} items have no metadata; using their ids as titles");
        }
        Self {
            users: sequences.keys().cloned().collect(),
            items,
            sequences,
        }
    }

    pub fn n_interactions(&self) -> usize {
        self.sequences.values().map(Vec::len).sum()
    }

    pub fn title<'a>(&'a self, item_id: &'a str) -> &'a str {
        self.items
            .get(item_id)
            .map(|i| i.title.as_str())
            .unwrap_or(item_id)
    }

    /// Distinct items the user interacted with.
    /// Item id to title.
    pub fn titles(&self) -> BTreeMap<String, String> {
        self.items.iter().map(|(k, v)| (k.clone(), v.title.clone())).collect()
    }

    pub fn history_set(&self, user: &str) -> HashSet<&str> {
        self.sequences
            .get(user)
            .map(|s| s.iter().map(|i| i.item_id.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        for seq in self.sequences.values() {
            for inter in seq {
                if !self.items.contains_key(&inter.item_id) {
                    return Err(CorpusError::UnknownItem(inter.item_id.clone()));
                }
            }
            if seq.windows(2).any(|w| w[0].timestamp > w[1].timestamp) {
                return Err(CorpusError::Snapshot("sequence out of order".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = DatasetDocument {
            schema_version: DATASET_SCHEMA_VERSION,
            dataset: self.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("dataset serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CorpusError::Snapshot(e.to_string()))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == DATASET_SCHEMA_VERSION as u64 => {}
            other => {
                return Err(CorpusError::Snapshot(format!(
                    "unsupported schema_version {other:?}"
                )))
            }
        }
        let doc: DatasetDocument =
            serde_json::from_value(value).map_err(|e| CorpusError::Snapshot(e.to_string()))?;
        doc.dataset.validate()?;
        Ok(doc.dataset)
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub max_records: Option<usize>,
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    pub skipped: Vec<SkippedLine>,
}

fn open(path: &Path) -> Result<BufReader<File>, CorpusError> {
    File::open(path).map(BufReader::new).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_record(line: &str) -> Result<RawRecord, String> {
    let rec: RawRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if rec.user_id.is_empty() {
        return Err("empty reviewerID".into());
    }
    if rec.item_id.is_empty() {
        return Err("empty asin".into());
    }
    Ok(rec)
}

/// Read newline-delimited review records and optional item metadata.
pub fn ingest(
    reviews: &Path,
    metadata: Option<&Path>,
    opts: &IngestOptions,
) -> Result<Ingested, CorpusError> {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (idx, line) in open(reviews)?.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: reviews.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        if opts.max_records.is_some_and(|m| records.len() >= m) {
            break;
        }
        match parse_record(&line) {
            Ok(r) => records.push(r),
            Err(reason) if opts.strict => {
                return Err(CorpusError::Malformed { line: line_no, reason })
            }
            Err(reason) => {
                warn!("skipping line {line_no}: {reason}");
                skipped.push(SkippedLine { line: line_no, reason });
            }
        }
    }

    let mut identities = Vec::new();
    if let Some(meta) = metadata {
        for (idx, line) in open(meta)?.lines().enumerate() {
            let line = line.map_err(|source| CorpusError::Io {
                path: meta.display().to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<MetaRecord>(&line) {
                Ok(m) => {
                    let title = m.title.filter(|t| !t.trim().is_empty()).unwrap_or_else(|| m.asin.clone());
                    identities.push(ItemIdentity {
                        item_id: m.asin,
                        title,
                        categories: m.category,
                    });
                }
                Err(e) if opts.strict => {
                    return Err(CorpusError::Malformed {
                        line: idx + 1,
                        reason: format!("metadata: {e}"),
                    })
                }
                Err(e) => warn!("skipping metadata line {}: {e}", idx + 1),
            }
        }
    }

    Ok(Ingested {
        dataset: Dataset::from_records(records, identities),
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetMode {
    Dense,
    Sparse,
}

impl std::str::FromStr for SubsetMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dense" => Ok(Self::Dense),
            "sparse" => Ok(Self::Sparse),
            other => Err(format!("unknown subset mode `{other}`")),
        }
    }
}

/// Draw `n_users` users with all their interactions.
///
/// `Sparse` picks users uniformly. `Dense` grows the set greedily from a
/// random seed user, always adding the user whose distinct items overlap
/// the current item pool the most (random tie-break).
pub fn sample_subset(
    ds: &Dataset,
    n_users: usize,
    mode: SubsetMode,
    seed: u64,
) -> Result<Dataset, CorpusError> {
    let users: Vec<&String> = ds.users.iter().collect();
    if n_users > users.len() {
        return Err(CorpusError::NotEnoughUsers {
            requested: n_users,
            available: users.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: Vec<&String> = match mode {
        SubsetMode::Sparse => {
            let mut shuffled = users.clone();
            shuffled.shuffle(&mut rng);
            shuffled.truncate(n_users);
            shuffled
        }
        SubsetMode::Dense => dense_greedy(ds, &users, n_users, &mut rng)
            .into_iter()
            .map(|i| users[i])
            .collect(),
    };

    let mut sequences = BTreeMap::new();
    let mut items = BTreeMap::new();
    for u in chosen {
        let seq = ds.sequences.get(u).cloned().unwrap_or_default();
        for inter in &seq {
            if let Some(identity) = ds.items.get(&inter.item_id) {
                items.insert(inter.item_id.clone(), identity.clone());
            }
        }
        sequences.insert(u.clone(), seq);
    }
    Ok(Dataset {
        users: sequences.keys().cloned().collect(),
        items,
        sequences,
    })
}

fn dense_greedy(ds: &Dataset, users: &[&String], n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let user_items: Vec<Vec<&str>> = users
        .iter()
        .map(|u| {
            let set: BTreeSet<&str> = ds.sequences[*u].iter().map(|i| i.item_id.as_str()).collect();
            set.into_iter().collect()
        })
        .collect();
    let mut item_users: HashMap<&str, Vec<usize>> = HashMap::new();
    for (ui, its) in user_items.iter().enumerate() {
        for it in its {
            item_users.entry(it).or_default().push(ui);
        }
    }

    let mut overlap = vec![0usize; users.len()];
    let mut selected = vec![false; users.len()];
    let mut pool: HashSet<&str> = HashSet::new();
    let mut order = Vec::with_capacity(n);

    fn add<'a>(
        ui: usize,
        user_items: &[Vec<&'a str>],
        item_users: &HashMap<&'a str, Vec<usize>>,
        selected: &mut [bool],
        overlap: &mut [usize],
        pool: &mut HashSet<&'a str>,
        order: &mut Vec<usize>,
    ) {
        selected[ui] = true;
        order.push(ui);
        for it in &user_items[ui] {
            if pool.insert(it) {
                for &v in &item_users[it] {
                    overlap[v] += 1;
                }
            }
        }
    }

    let first = rng.random_range(0..users.len());
    add(first, &user_items, &item_users, &mut selected, &mut overlap, &mut pool, &mut order);
    while order.len() < n {
        let best = (0..users.len())
            .filter(|&u| !selected[u])
            .map(|u| overlap[u])
            .max()
            .expect("enough users remain");
        let ties: Vec<usize> = (0..users.len())
            .filter(|&u| !selected[u] && overlap[u] == best)
            .collect();
        let pick = ties[rng.random_range(0..ties.len())];
        add(pick, &user_items, &item_users, &mut selected, &mut overlap, &mut pool, &mut order);
    }
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_inters: usize,
    pub sparsity: f64,
    pub avg_words: f64,
}

impl DatasetStats {
    /// Flat `key: value` report.
    pub fn report(&self) -> String {
        format!(
            "n_users: {}\nn_items: {}\nn_inters: {}\nsparsity: {:.4}\nsparsity_pct: {:.2}%\navg_words: {:.2}\n",
            self.n_users,
            self.n_items,
            self.n_inters,
            self.sparsity,
            self.sparsity * 100.0,
            self.avg_words
        )
    }
}

/// `1 - inters / (users * items)`.
pub fn sparsity(n_users: usize, n_items: usize, n_inters: usize) -> f64 {
    1.0 - n_inters as f64 / (n_users as f64 * n_items as f64)
}

pub fn compute_stats(ds: &Dataset) -> Result<DatasetStats, CorpusError> {
    let n_users = ds.users.len();
    let n_items = ds.items.len();
    let n_inters = ds.n_interactions();
    if n_users == 0 || n_items == 0 {
        return Err(CorpusError::Empty);
    }
    let total_words: usize = ds.items.values().map(|i| word_count(&i.render())).sum();
    Ok(DatasetStats {
        n_users,
        n_items,
        n_inters,
        sparsity: sparsity(n_users, n_items, n_inters),
        avg_words: total_words as f64 / n_items as f64,
    })
}

/// Leave-one-out split: every user's final interaction is held out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: BTreeMap<String, Vec<Interaction>>,
    pub test_target: BTreeMap<String, Interaction>,
}

impl Split {
    pub fn users(&self) -> impl Iterator<Item = &String> {
        self.test_target.keys()
    }

    pub fn n_train(&self) -> usize {
        self.train.values().map(Vec::len).sum()
    }

    pub fn train_items(&self, user: &str) -> Vec<&str> {
        self.train
            .get(user)
            .map(|s| s.iter().map(|i| i.item_id.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn target(&self, user: &str) -> Option<&str> {
        self.test_target.get(user).map(|i| i.item_id.as_str())
    }

    /// Train interactions plus the held-out target, as item ids.
    pub fn full_history(&self, user: &str) -> HashSet<&str> {
        let mut set: HashSet<&str> = self.train_items(user).into_iter().collect();
        if let Some(t) = self.target(user) {
            set.insert(t);
        }
        set
    }
}

#[derive(Debug, Clone)]
pub struct LeaveOneOut {
    pub split: Split,
    pub excluded: Vec<String>,
}

pub fn leave_one_out(ds: &Dataset, strict: bool) -> Result<LeaveOneOut, CorpusError> {
    let mut train = BTreeMap::new();
    let mut test_target = BTreeMap::new();
    let mut excluded = Vec::new();
    for (user, seq) in &ds.sequences {
        if seq.len() < 2 {
            if strict {
                return Err(CorpusError::ShortSequence(user.clone()));
            }
            warn!("excluding user {user}: fewer than 2 interactions");
            excluded.push(user.clone());
            continue;
        }
        let (last, head) = seq.split_last().expect("len >= 2");
        train.insert(user.clone(), head.to_vec());
        test_target.insert(user.clone(), last.clone());
    }
    Ok(LeaveOneOut {
        split: Split { train, test_target },
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityTable {
    pub counts: BTreeMap<String, u64>,
    pub probabilities: BTreeMap<String, f64>,
}

impl PopularityTable {
    pub fn from_counts(counts: BTreeMap<String, u64>) -> Self {
        let counts: BTreeMap<String, u64> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
        let total: u64 = counts.values().sum();
        let probabilities = counts
            .iter()
            .map(|(k, &c)| (k.clone(), c as f64 / total as f64))
            .collect();
        Self { counts, probabilities }
    }

    pub fn from_interactions<'a>(items: impl IntoIterator<Item = &'a str>) -> Self {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for it in items {
            *counts.entry(it.to_string()).or_default() += 1;
        }
        Self::from_counts(counts)
    }

    /// Table over the training interactions of a split.
    pub fn from_split(split: &Split) -> Self {
        Self::from_interactions(
            split
                .train
                .values()
                .flat_map(|s| s.iter().map(|i| i.item_id.as_str())),
        )
    }

    pub fn count(&self, item: &str) -> u64 {
        self.counts.get(item).copied().unwrap_or(0)
    }
}

pub fn popularity_table(ds: &Dataset) -> PopularityTable {
    PopularityTable::from_interactions(
        ds.sequences
            .values()
            .flat_map(|s| s.iter().map(|i| i.item_id.as_str())),
    )
}

/// Draw an item with probability proportional to popularity among the
/// items not in `exclude`.
pub fn sample_negative<R: Rng + ?Sized>(
    pop: &PopularityTable,
    exclude: &HashSet<&str>,
    rng: &mut R,
) -> Result<String, CorpusError> {
    let mass: u64 = pop
        .counts
        .iter()
        .filter(|(k, _)| !exclude.contains(k.as_str()))
        .map(|(_, c)| *c)
        .sum();
    if mass == 0 {
        return Err(CorpusError::NoNegativeCandidate);
    }
    let mut target = rng.random_range(0..mass);
    for (item, &c) in &pop.counts {
        if exclude.contains(item.as_str()) {
            continue;
        }
        if target < c {
            return Ok(item.clone());
        }
        target -= c;
    }
    unreachable!("target lies within total mass")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::from_records(
            vec![
                RawRecord::new("u1", "b", 20),
                RawRecord::new("u2", "a", 5),
                RawRecord::new("u1", "a", 10),
            ],
            vec![
                ItemIdentity::new("a", "Alpha", &["Rock"]),
                ItemIdentity::new("b", "Beta", &["Jazz", "Bebop"]),
            ],
        )
    }

    #[test]
    fn from_records_sorts_by_timestamp() {
        let ds = toy();
        assert_eq!(ds.sequences.len(), 2);
        let u1: Vec<_> = ds.sequences["u1"].iter().map(|i| i.item_id.as_str()).collect();
        assert_eq!(u1, ["a", "b"]);
    }

    #[test]
    fn ties_keep_input_order_and_duplicates_drop() {
        let ds = Dataset::from_records(
            vec![
                RawRecord::new("u", "x", 1),
                RawRecord::new("u", "y", 1),
                RawRecord::new("u", "x", 1),
            ],
            vec![],
        );
        let seq: Vec<_> = ds.sequences["u"].iter().map(|i| i.item_id.as_str()).collect();
        assert_eq!(seq, ["x", "y"]);
        assert_eq!(ds.items["x"].title, "x");
    }

    #[test]
    fn identity_text_renders() {
        let id = ItemIdentity::new(
            "p",
            "Brainwashed",
            &["Classic Rock", "Album-Oriented Rock (AOR)"],
        );
        assert_eq!(
            id.render(),
            "The CD is called \"Brainwashed\". The category of this CD is: \"Classic Rock; Album-Oriented Rock (AOR)\"."
        );
    }

    #[test]
    fn stats_single_cell_has_zero_sparsity() {
        let ds = Dataset::from_records(vec![RawRecord::new("u", "i", 0)], vec![]);
        let s = compute_stats(&ds).unwrap();
        assert_eq!(s.sparsity, 0.0);
        assert_eq!((s.n_users, s.n_items, s.n_inters), (1, 1, 1));
    }

    #[test]
    fn stats_of_empty_dataset_fail() {
        let ds = Dataset::from_records(vec![], vec![]);
        assert!(matches!(compute_stats(&ds), Err(CorpusError::Empty)));
    }

    #[test]
    fn leave_one_out_definition() {
        let ds = Dataset::from_records(
            vec![
                RawRecord::new("u", "a", 1),
                RawRecord::new("u", "b", 2),
                RawRecord::new("u", "c", 3),
            ],
            vec![],
        );
        let loo = leave_one_out(&ds, true).unwrap();
        assert_eq!(loo.split.train_items("u"), ["a", "b"]);
        assert_eq!(loo.split.target("u"), Some("c"));
    }

    #[test]
    fn leave_one_out_short_user() {
        let ds = toy();
        match leave_one_out(&ds, true) {
            Err(CorpusError::ShortSequence(u)) => assert_eq!(u, "u2"),
            other => panic!("unexpected {other:?}"),
        }
        let loo = leave_one_out(&ds, false).unwrap();
        assert_eq!(loo.excluded, ["u2"]);
        assert_eq!(loo.split.test_target.len(), 1);
    }

    #[test]
    fn popularity_normalizes() {
        let pop = PopularityTable::from_interactions(["a", "a", "a", "b"]);
        assert_eq!(pop.probabilities["a"], 0.75);
        assert_eq!(pop.probabilities["b"], 0.25);
        let uniform = PopularityTable::from_interactions(["a", "b", "c", "d"]);
        assert!(uniform.probabilities.values().all(|&p| p == 0.25));
    }

    #[test]
    fn negative_sampler_forced_and_empty() {
        let pop = PopularityTable::from_interactions(["a", "a", "a", "b"]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let only_b: HashSet<&str> = ["a"].into_iter().collect();
        for _ in 0..100 {
            assert_eq!(sample_negative(&pop, &only_b, &mut rng).unwrap(), "b");
        }
        let all: HashSet<&str> = ["a", "b"].into_iter().collect();
        assert!(matches!(
            sample_negative(&pop, &all, &mut rng),
            Err(CorpusError::NoNegativeCandidate)
        ));
    }

    #[test]
    fn subset_identity_case() {
        let ds = toy();
        for mode in [SubsetMode::Dense, SubsetMode::Sparse] {
            let sub = sample_subset(&ds, 2, mode, 3).unwrap();
            assert_eq!(sub, ds);
        }
        assert!(matches!(
            sample_subset(&ds, 3, SubsetMode::Sparse, 0),
            Err(CorpusError::NotEnoughUsers { .. })
        ));
    }

    #[test]
    fn snapshot_round_trip_and_version_check() {
        let ds = toy();
        let text = ds.to_json();
        assert_eq!(Dataset::from_json(&text).unwrap(), ds);
        let bad = text.replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(Dataset::from_json(&bad).is_err());
    }
}
