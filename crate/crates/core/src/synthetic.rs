//! Generated datasets with a planted taste signal.
//!
//! Users and items are split into genres. Each user interacts only with
//! items of their genre, and each user's seed memory names the genre with
//! a made-up keyword. Item identities carry no genre information, so any
//! ranking signal must come from memories that training has shaped.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, ItemIdentity, RawRecord};
use crate::seeds::rng_for;

pub const SYNTHETIC_CATEGORY: &str = "CDs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub genres: usize,
    pub users_per_genre: usize,
    pub items_per_genre: usize,
    /// Interactions per user, including the held-out last one.
    pub sequence_len: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { genres: 4, users_per_genre: 25, items_per_genre: 10, sequence_len: 6, seed: 7 }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.genres == 0 || self.users_per_genre == 0 {
            errs.push("synthetic: genres and users_per_genre must be positive".to_string());
        }
        if self.sequence_len < 2 {
            errs.push("synthetic: sequence_len must be at least 2".to_string());
        }
        if self.sequence_len > self.items_per_genre {
            errs.push(format!(
                "synthetic: sequence_len {} exceeds items_per_genre {}",
                self.sequence_len, self.items_per_genre
            ));
        }
        errs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub dataset: Dataset,
    /// Initial short-term memory per user.
    pub seeds: BTreeMap<String, String>,
    pub genre_of_user: BTreeMap<String, usize>,
    pub genre_of_item: BTreeMap<String, usize>,
    pub genre_keywords: Vec<String>,
}

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

fn pseudo_word<R: Rng>(rng: &mut R, syllables: usize) -> String {
    (0..syllables)
        .map(|_| format!("{}{}", ONSETS[rng.random_range(0..ONSETS.len())], VOWELS[rng.random_range(0..VOWELS.len())]))
        .collect()
}

fn fresh_word<R: Rng>(rng: &mut R, used: &mut BTreeSet<String>, syllables: usize) -> String {
    loop {
        let w = pseudo_word(rng, syllables);
        if used.insert(w.clone()) {
            return w;
        }
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next().map(|f| f.to_ascii_uppercase().to_string() + c.as_str()).unwrap_or_default()
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData, String> {
    let errs = spec.validate();
    if !errs.is_empty() {
        return Err(errs.join("; "));
    }
    let mut rng = rng_for(spec.seed, &["synthetic"]);
    let mut used = BTreeSet::new();
    let genre_keywords: Vec<String> = (0..spec.genres).map(|_| fresh_word(&mut rng, &mut used, 3)).collect();
    let accent: Vec<String> = (0..spec.genres).map(|_| fresh_word(&mut rng, &mut used, 3)).collect();

    let mut identities = Vec::new();
    let mut genre_of_item = BTreeMap::new();
    for g in 0..spec.genres {
        for j in 0..spec.items_per_genre {
            let id = format!("i{g:02}{j:03}");
            let title = format!(
                "{} {}",
                capitalize(&fresh_word(&mut rng, &mut used, 2)),
                capitalize(&fresh_word(&mut rng, &mut used, 3))
            );
            identities.push(ItemIdentity::new(&id, &title, &[SYNTHETIC_CATEGORY]));
            genre_of_item.insert(id, g);
        }
    }

    let mut records = Vec::new();
    let mut seeds = BTreeMap::new();
    let mut genre_of_user = BTreeMap::new();
    let mut clock = 0u64;
    for g in 0..spec.genres {
        for k in 0..spec.users_per_genre {
            let user = format!("u{g:02}{k:03}");
            let picks = index::sample(&mut rng, spec.items_per_genre, spec.sequence_len);
            for j in picks {
                clock += rng.random_range(1..1000);
                records.push(RawRecord::new(&user, &format!("i{g:02}{j:03}"), clock));
            }
            seeds.insert(
                user.clone(),
                format!(
                    "I enjoy listening to CDs very much. I am drawn to {} records with a {} feel.",
                    genre_keywords[g], accent[g]
                ),
            );
            genre_of_user.insert(user, g);
        }
    }
    // interleave users in time so global chronological order mixes genres
    let mut stamps: Vec<u64> = records.iter().map(|r| r.timestamp).collect();
    stamps.sort_unstable();
    let order = index::sample(&mut rng, records.len(), records.len()).into_vec();
    let mut per_user: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for (slot, &ri) in order.iter().enumerate() {
        per_user.entry(records[ri].user_id.clone()).or_default().push(stamps[slot]);
    }
    for ts in per_user.values_mut() {
        ts.sort_unstable();
        ts.reverse();
    }
    for r in &mut records {
        r.timestamp = per_user.get_mut(&r.user_id).and_then(Vec::pop).expect("one stamp per record");
    }

    Ok(SyntheticData {
        dataset: Dataset::from_records(records, identities),
        seeds,
        genre_of_user,
        genre_of_item,
        genre_keywords,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::script::overlap;

    #[test]
    fn identities_carry_no_shared_words() {
        let data = generate(&SyntheticSpec { genres: 2, users_per_genre: 3, items_per_genre: 6, sequence_len: 4, seed: 1 }).unwrap();
        let texts: Vec<String> = data.dataset.items.values().map(|i| i.render()).collect();
        for (a, ta) in texts.iter().enumerate() {
            for tb in &texts[a + 1..] {
                assert_eq!(overlap(ta, tb), 0);
            }
        }
        assert_eq!(data.dataset.users.len(), 6);
        for (u, seq) in &data.dataset.sequences {
            assert_eq!(seq.len(), 4);
            let g = data.genre_of_user[u];
            assert!(seq.iter().all(|i| data.genre_of_item[&i.item_id] == g));
        }
        assert_eq!(data, generate(&SyntheticSpec { genres: 2, users_per_genre: 3, items_per_genre: 6, sequence_len: 4, seed: 1 }).unwrap());
    }
}
