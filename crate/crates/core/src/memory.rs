//! Natural-language memories of user and item agents.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bm25::Bm25Index;
use crate::corpus::{Dataset, ItemIdentity};

pub const MEMORY_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_USER_SEED: &str = "I enjoy listening to CDs very much.";
pub const DEFAULT_RETRIEVAL_K: usize = 3;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MemoryError {
    #[error("seed text is empty")]
    EmptySeed,
    #[error("user {0} already initialized")]
    DuplicateUser(String),
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("unknown item {0}")]
    UnknownItem(String),
    #[error("snapshot schema {found} is not supported (expected {MEMORY_SCHEMA_VERSION})")]
    SchemaVersion { found: u64 },
    #[error("corrupted snapshot: {0}")]
    Corrupted(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserMemory {
    #[serde(rename = "short")]
    pub short_term: String,
    #[serde(rename = "long")]
    pub long_term: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemMemory {
    pub text: String,
}

impl ItemMemory {
    /// Identity-only memory. Logs a warning for items without categories.
    pub fn from_identity(identity: &ItemIdentity) -> Self {
        if identity.categories.is_empty() {
            log::warn!("item {} has no categories", identity.item_id);
        }
        Self { text: identity.render() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedEntry {
    pub index: usize,
    pub score: f64,
    pub text: String,
}

/// Long-term entries relevant to a query, best first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RetrievedPreference {
    pub entries: Vec<RetrievedEntry>,
    pub rendered: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MemoryStore {
    version: u64,
    users: BTreeMap<String, UserMemory>,
    items: BTreeMap<String, ItemMemory>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotDocument {
    schema: u32,
    #[serde(flatten)]
    store: MemoryStore,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn users(&self) -> &BTreeMap<String, UserMemory> {
        &self.users
    }

    pub fn items(&self) -> &BTreeMap<String, ItemMemory> {
        &self.items
    }

    pub fn user(&self, id: &str) -> Result<&UserMemory, MemoryError> {
        self.users.get(id).ok_or_else(|| MemoryError::UnknownUser(id.to_string()))
    }

    pub fn item(&self, id: &str) -> Result<&ItemMemory, MemoryError> {
        self.items.get(id).ok_or_else(|| MemoryError::UnknownItem(id.to_string()))
    }

    fn bump(&mut self) {
        self.version += 1;
    }

    pub fn init_user(&mut self, user_id: &str, seed_text: &str) -> Result<&UserMemory, MemoryError> {
        if seed_text.trim().is_empty() {
            return Err(MemoryError::EmptySeed);
        }
        if self.users.contains_key(user_id) {
            return Err(MemoryError::DuplicateUser(user_id.to_string()));
        }
        self.bump();
        Ok(self.users.entry(user_id.to_string()).or_insert(UserMemory {
            short_term: seed_text.to_string(),
            long_term: Vec::new(),
        }))
    }

    /// Store with every dataset user and item, users seeded from `seeds`
    /// or the default seed text.
    pub fn for_dataset(ds: &Dataset, seeds: &BTreeMap<String, String>) -> Result<Self, MemoryError> {
        let mut store = Self::new();
        for u in &ds.users {
            store.init_user(u, seeds.get(u).map_or(DEFAULT_USER_SEED, String::as_str))?;
        }
        for identity in ds.items.values() {
            store.init_item(identity);
        }
        Ok(store)
    }

    /// Initialize (or reset) an item's memory to its identity text.
    pub fn init_item(&mut self, identity: &ItemIdentity) -> &ItemMemory {
        self.bump();
        self.items.insert(identity.item_id.clone(), ItemMemory::from_identity(identity));
        &self.items[&identity.item_id]
    }

    pub fn set_user_short(&mut self, user_id: &str, text: &str) -> Result<(), MemoryError> {
        let user = self
            .users
            .get_mut(user_id)
            .ok_or_else(|| MemoryError::UnknownUser(user_id.to_string()))?;
        user.short_term = text.to_string();
        self.bump();
        Ok(())
    }

    pub fn set_item_text(&mut self, item_id: &str, text: &str) -> Result<(), MemoryError> {
        let item = self
            .items
            .get_mut(item_id)
            .ok_or_else(|| MemoryError::UnknownItem(item_id.to_string()))?;
        item.text = text.to_string();
        self.bump();
        Ok(())
    }

    /// Push a previous short-term memory onto the long-term pool.
    pub fn append_long_term(&mut self, user_id: &str, previous_short: &str) -> Result<&UserMemory, MemoryError> {
        let user = self
            .users
            .get_mut(user_id)
            .ok_or_else(|| MemoryError::UnknownUser(user_id.to_string()))?;
        user.long_term.push(previous_short.to_string());
        self.version += 1;
        Ok(&self.users[user_id])
    }

    /// BM25-rank the user's long-term entries against the concatenated
    /// queries and keep the top `k` (ties go to the lower index).
    pub fn retrieve_long_term<S: AsRef<str>>(
        &self,
        user_id: &str,
        queries: &[S],
        k: usize,
    ) -> Result<RetrievedPreference, MemoryError> {
        let user = self.user(user_id)?;
        if user.long_term.is_empty() || k == 0 {
            return Ok(RetrievedPreference::default());
        }
        let query = queries.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ");
        let index = Bm25Index::new(&user.long_term);
        let entries: Vec<RetrievedEntry> = index
            .ranked(&query)
            .into_iter()
            .take(k)
            .map(|(i, score)| RetrievedEntry { index: i, score, text: user.long_term[i].clone() })
            .collect();
        let rendered = entries.iter().map(|e| e.text.as_str()).collect::<Vec<_>>().join("\n");
        Ok(RetrievedPreference { entries, rendered })
    }

    /// Pretty JSON with sorted keys.
    pub fn snapshot(&self) -> String {
        let doc = SnapshotDocument { schema: MEMORY_SCHEMA_VERSION, store: self.clone() };
        serde_json::to_string_pretty(&doc).expect("store serializes")
    }

    pub fn load(document: &str) -> Result<Self, MemoryError> {
        let value: serde_json::Value =
            serde_json::from_str(document).map_err(|e| MemoryError::Corrupted(e.to_string()))?;
        let schema = value
            .get("schema")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| MemoryError::Corrupted("missing schema field".into()))?;
        if schema != MEMORY_SCHEMA_VERSION as u64 {
            return Err(MemoryError::SchemaVersion { found: schema });
        }
        let doc: SnapshotDocument =
            serde_json::from_value(value).map_err(|e| MemoryError::Corrupted(e.to_string()))?;
        Ok(doc.store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_user_defaults_and_errors() {
        let mut s = MemoryStore::new();
        let u = s.init_user("u", DEFAULT_USER_SEED).unwrap();
        assert_eq!(u.short_term, "I enjoy listening to CDs very much.");
        assert!(u.long_term.is_empty());
        assert_eq!(s.init_user("u", "x"), Err(MemoryError::DuplicateUser("u".into())));
        assert_eq!(s.init_user("v", "  "), Err(MemoryError::EmptySeed));
    }

    #[test]
    fn init_item_renders_identity() {
        let mut s = MemoryStore::new();
        let id = ItemIdentity::new("p", "Brainwashed", &["Classic Rock", "Album-Oriented Rock (AOR)"]);
        assert_eq!(
            s.init_item(&id).text,
            "The CD is called \"Brainwashed\". The category of this CD is: \"Classic Rock; Album-Oriented Rock (AOR)\"."
        );
        let bare = ItemIdentity::new("q", "Brainwashed", &[]);
        assert!(s.init_item(&bare).text.ends_with("is: \"\"."));
        assert_eq!(s.items().len(), 2);
    }

    #[test]
    fn long_term_appends_in_order() {
        let mut s = MemoryStore::new();
        s.init_user("u", "seed").unwrap();
        for i in 0..5 {
            s.append_long_term("u", &format!("p{i}")).unwrap();
        }
        let u = s.user("u").unwrap();
        assert_eq!(u.long_term, ["p0", "p1", "p2", "p3", "p4"]);
        assert_eq!(u.short_term, "seed");
        assert_eq!(
            s.append_long_term("x", "p").unwrap_err(),
            MemoryError::UnknownUser("x".into())
        );
    }

    #[test]
    fn version_increases_on_every_mutation() {
        let mut s = MemoryStore::new();
        let mut last = s.version();
        s.init_user("u", "seed").unwrap();
        assert!(s.version() > last);
        last = s.version();
        s.set_user_short("u", "seed").unwrap();
        assert!(s.version() > last);
    }

    #[test]
    fn retrieval_ranks_and_truncates() {
        let mut s = MemoryStore::new();
        s.init_user("u", "seed").unwrap();
        let empty = s.retrieve_long_term("u", &["metal"], 3).unwrap();
        assert!(empty.entries.is_empty());
        assert_eq!(empty.rendered, "");

        s.append_long_term("u", "likes jazz piano").unwrap();
        s.append_long_term("u", "likes heavy metal").unwrap();
        let top = s.retrieve_long_term("u", &["metal guitar"], 1).unwrap();
        assert_eq!(top.entries.len(), 1);
        assert_eq!(top.entries[0].index, 1);
        assert_eq!(top.rendered, "likes heavy metal");

        let all = s.retrieve_long_term("u", &["metal", "guitar"], 10).unwrap();
        assert_eq!(all.entries.iter().map(|e| e.index).collect::<Vec<_>>(), [1, 0]);
        assert_eq!(all.rendered, "likes heavy metal\nlikes jazz piano");
    }

    #[test]
    fn retrieval_ties_prefer_lower_index() {
        let mut s = MemoryStore::new();
        s.init_user("u", "seed").unwrap();
        for t in ["same text", "same text", "same text"] {
            s.append_long_term("u", t).unwrap();
        }
        let r = s.retrieve_long_term("u", &["same"], 2).unwrap();
        assert_eq!(r.entries.iter().map(|e| e.index).collect::<Vec<_>>(), [0, 1]);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut s = MemoryStore::new();
        s.init_user("u1", "likes \"quoted\" things").unwrap();
        s.init_user("u2", "seed").unwrap();
        s.append_long_term("u2", "old").unwrap();
        s.init_item(&ItemIdentity::new("i", "T", &["C"]));
        let doc = s.snapshot();
        let back = MemoryStore::load(&doc).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.snapshot(), doc);
    }

    #[test]
    fn load_rejects_bad_documents() {
        assert!(matches!(MemoryStore::load("{not json"), Err(MemoryError::Corrupted(_))));
        let doc = MemoryStore::new().snapshot().replace("\"schema\": 1", "\"schema\": 2");
        assert_eq!(MemoryStore::load(&doc), Err(MemoryError::SchemaVersion { found: 2 }));
    }
}
