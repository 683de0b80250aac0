#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use agentcf::agents::tags;
use agentcf::corpus::{leave_one_out, Interaction, Split};
use agentcf::llm::{ChatRequest, Gateway, ReplayStore, RouteTable, ScriptUpstream};
use agentcf::synthetic::{generate, SyntheticData, SyntheticSpec};

pub fn fixture(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/transcripts").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn synthetic(spec: SyntheticSpec) -> (SyntheticData, Split) {
    let data = generate(&spec).expect("valid synthetic spec");
    let split = leave_one_out(&data.dataset, true).expect("sequences have at least two items").split;
    (data, split)
}

pub fn inter(item: &str, t: u64) -> Interaction {
    Interaction { item_id: item.to_string(), timestamp: t }
}

pub fn template_of(req: &ChatRequest) -> &str {
    req.tag_value(tags::TEMPLATE).unwrap_or("")
}

/// Record every reply of `responder` into a fresh in-memory store and
/// return a gateway that answers only from that store.
pub fn replay_gateway(
    responder: impl Fn(&ChatRequest) -> String + Send + Sync + 'static,
    warm: impl FnOnce(&Gateway),
) -> (Gateway, Arc<ReplayStore>) {
    let store = Arc::new(ReplayStore::in_memory());
    let recorder = Gateway::record(RouteTable::default(), Arc::new(ScriptUpstream::new(responder)), store.clone());
    warm(&recorder);
    (Gateway::replay(RouteTable::default(), store.clone()), store)
}

pub fn two_block_train(users_per_block: usize, items_per_block: usize, per_user: usize, seed: u64) -> BTreeMap<String, Vec<Interaction>> {
    use rand::seq::index;
    let mut rng = agentcf::seeds::rng_for(seed, &["two-block"]);
    let mut train = BTreeMap::new();
    for block in 0..2 {
        for u in 0..users_per_block {
            let picks = index::sample(&mut rng, items_per_block, per_user);
            let seq = picks
                .iter()
                .enumerate()
                .map(|(t, j)| inter(&format!("b{block}i{j:02}"), t as u64))
                .collect();
            train.insert(format!("b{block}u{u:02}"), seq);
        }
    }
    train
}
