mod common;

use agentcf::agents::{Agents, KeywordDetector, Polarity};
use agentcf::corpus::ItemIdentity;
use agentcf::prompts::{parse_choice, Catalog};
use agentcf::script::{scripted_gateway, ScriptKind};
use agentcf::llm::RouteTable;
use common::{fixture, replay_gateway, template_of};

const AEROSMITH: &str = "O, Yeah! Ultimate Aerosmith Hits";

#[test]
fn selection_reply_names_the_negative() {
    let parsed = parse_choice(&fixture("select_response.txt"), &[AEROSMITH, "Brainwashed"]).unwrap();
    assert_eq!(parsed.index, 0);
    assert_eq!(parsed.chosen_title, AEROSMITH);
    assert!(parsed.explanation.starts_with("I chose O, Yeah!"), "{}", parsed.explanation);
}

#[test]
fn review_and_decisions_replay() {
    let catalog = Catalog::builtin();
    let user = fixture("review_user_memory.txt");
    let item = "The CD is called \"Livonia\". The category of this CD is: \"Alternative Rock; Indie & Lo-Fi; Indie Rock\".";
    let responder = |req: &agentcf::llm::ChatRequest| match template_of(req) {
        "review_positive" => fixture("review_response.txt"),
        "decide_before_reviews" => fixture("decide_before_response.txt"),
        "decide_after_reviews" => fixture("decide_after_response.txt"),
        other => panic!("unexpected template {other}"),
    };
    let run = |agents: Agents| {
        let review = agents.write_review(&user, item, Polarity::Positive, 200).unwrap();
        let decision = agents.decide_with_reviews(&user, "Livonia", item, std::slice::from_ref(&review)).unwrap();
        (review, decision)
    };
    let (gw, store) = replay_gateway(responder, |rec| {
        run(Agents::new(rec, &catalog));
    });
    assert_eq!(store.len(), 3);
    let (review, decision) = run(Agents::new(&gw, &catalog));
    assert!(review.starts_with("I was pleasantly surprised by the CD 'Livonia'"));
    assert!(!decision.before.choice);
    assert!(decision.after.choice);
    assert!(decision.changed());
}

#[test]
fn cold_item_warmup_replay() {
    let catalog = Catalog::builtin();
    let cold = ItemIdentity::new("zep", "Early Days: The Best of Led Zeppelin, Vol. 1", &["Classic Rock", "Album-Oriented Rock (AOR)"]);
    let neighbors: Vec<String> = ["a", "b", "c", "d"].iter().map(|n| fixture(&format!("warmup_neighbor_{n}.txt"))).collect();
    let responder = |req: &agentcf::llm::ChatRequest| {
        assert_eq!(template_of(req), "warmup_cold");
        fixture("warmup_response.txt")
    };
    let (gw, _) = replay_gateway(responder, |rec| {
        Agents::new(rec, &catalog).warmup_cold_item(&cold, &neighbors).unwrap();
    });
    let warmed = Agents::new(&gw, &catalog).warmup_cold_item(&cold, &neighbors).unwrap();
    assert!(warmed.adjusted);
    assert!(warmed.text.contains("captivating"));
    assert!(warmed.text.contains("powerful guitar solos"));
}

#[test]
fn propagated_memories_trip_the_detector() {
    let detector = KeywordDetector::new(&["emotional connection", "evokes emotions"]).unwrap();
    assert!(detector.matches(&fixture("propagation_item_a.txt")));
    assert!(detector.matches(&fixture("propagation_user_b.txt")));
    assert!(detector.matches(&fixture("propagation_seed.txt")));
    assert!(!detector.matches(&fixture("review_user_memory.txt")));
}

#[test]
fn seeded_user_answers_yes_under_consistent_script() {
    let catalog = Catalog::builtin();
    let gw = scripted_gateway(ScriptKind::KeywordAffinity, RouteTable::default());
    let agents = Agents::new(&gw, &catalog);
    let seeded = agents.query_preference(&fixture("propagation_seed.txt"), "Do you tend to favor music that evokes emotions?").unwrap();
    assert!(seeded.choice);
    let plain = agents.query_preference("I enjoy listening to CDs very much.", "Do you tend to favor music that evokes emotions?").unwrap();
    assert!(!plain.choice);
}
