//! One PASS/FAIL line per acceptance criterion.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use agentcf::agents::{selection_request, tags, Agents, Candidate};
use agentcf::baselines::{bpr_train, triple_grad, triple_loss, BprConfig, MfModel, RandomRanker};
use agentcf::bm25::Bm25Index;
use agentcf::config::RunConfig;
use agentcf::corpus::{sample_negative, sparsity, ItemIdentity, PopularityTable, Split};
use agentcf::eval::{
    bias_trials, cold_start_eval, ndcg_at_k, propagation_probe, run_eval, ColdCase, ColdStartSetup, EvalSpec, ProbeMemory,
    PropagationSpec,
};
use agentcf::exec::ExecPolicy;
use agentcf::llm::{ChatRequest, Gateway, RouteTable};
use agentcf::memory::{MemoryStore, DEFAULT_USER_SEED};
use agentcf::optimizer::{optimize, StepRecord, TrainConfig};
use agentcf::pipeline::{Run, RunOptions, TRAIN_DIR};
use agentcf::prompts::{parse_choice, parse_ranking, Catalog};
use agentcf::ranker::{CandidateSlate, LlmRanker, Ranked, Ranker, RankingResult, Strategy};
use agentcf::script::{scripted_gateway, ScriptKind};
use agentcf::seeds::rng_for;
use agentcf::synthetic::SyntheticSpec;
use common::{fixture, inter, replay_gateway, synthetic, template_of, two_block_train};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn c01_sparsity_table() -> Outcome {
    let start = Instant::now();
    let rows = [
        ((100, 704, 800), 98.86),
        ((100, 269, 800), 97.03),
        ((93_653, 64_032, 1_178_439), 99.98),
        ((100, 561, 600), 98.93),
        ((100, 188, 600), 96.81),
        ((86_530, 25_842, 675_683), 99.97),
    ];
    for ((u, i, n), expected) in rows {
        let pct = sparsity(u, i, n) * 100.0;
        ensure!((pct - expected).abs() <= 0.005 + 1e-9, "{u}/{i}/{n}: {pct:.4}% vs {expected}%");
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("6 triples within 0.005pp in {elapsed:?}"))
}

fn c02_ndcg_sweep() -> Outcome {
    // 1 / log2(r + 1) written out for r = 1..10
    const GAIN: [f64; 10] = [
        1.0,
        0.630_929_753_571_457_4,
        0.5,
        0.430_676_558_073_393_05,
        0.386_852_807_234_541_6,
        0.356_207_187_108_022_2,
        1.0 / 3.0,
        0.315_464_876_785_728_8,
        std::f64::consts::LOG10_2,
        0.289_064_826_317_887_8,
    ];
    let ids: Vec<String> = (0..10).map(|i| format!("i{i}")).collect();
    let mut checked = 0;
    for r in 1..=10usize {
        let mut perm: Vec<String> = ids[1..].to_vec();
        perm.insert(r - 1, ids[0].clone());
        let slate = CandidateSlate { user_id: "u".into(), candidates: ids.clone(), target: ids[0].clone(), repetition: 0 };
        let result = RankingResult::new(slate, Strategy::Random, Ranked::plain(perm));
        for k in [1usize, 5, 10] {
            let want = if r <= k { GAIN[r - 1] } else { 0.0 };
            let got = ndcg_at_k(&result, k).map_err(err)?;
            ensure!((got - want).abs() < 1e-9, "r={r} k={k}: {got} vs {want}");
            checked += 1;
        }
    }
    Ok(format!("{checked} (rank, k) pairs match"))
}

fn c03_random_calibration() -> Outcome {
    let (data, split) = synthetic(SyntheticSpec::default());
    ensure!(split.test_target.len() == 100, "fixture has {} users", split.test_target.len());
    let universe: Vec<String> = data.dataset.items.keys().cloned().collect();
    let ranker = RandomRanker { seed: 2024 };
    let out = run_eval(&[&ranker], &split, &universe, &EvalSpec::default(), "synthetic", ExecPolicy::Parallel).map_err(err)?;
    let n10 = out.report.get(Strategy::Random, 10).ok_or("no N@10")?;
    ensure!(out.report.n_reps == 3, "{} reps", out.report.n_reps);
    ensure!((n10 - 0.4544).abs() <= 0.02, "random N@10 = {n10:.4}");
    Ok(format!("random N@10 = {n10:.4} over 100 users x 3 reps"))
}

fn toy_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.data.synthetic = Some(SyntheticSpec { genres: 1, users_per_genre: 5, items_per_genre: 20, sequence_len: 6, seed: 11 });
    cfg.subset.n_users = None;
    cfg.llm.script = ScriptKind::KeywordAffinity;
    cfg
}

fn pipeline_once(dir: &std::path::Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let run = Run::open(toy_config(), RunOptions { dir: Some(dir.to_path_buf()), ..RunOptions::default() }).map_err(err)?;
    run.sample().map_err(err)?;
    run.train(false).map_err(err)?;
    run.eval(None).map_err(err)?;
    let mut files = BTreeMap::new();
    for name in ["memory.json", "metrics.json", "eval.csv", "rankings.jsonl", "dataset.json"] {
        files.insert(name.to_string(), std::fs::read(dir.join(name)).map_err(err)?);
    }
    let trace = format!("{TRAIN_DIR}/trace.jsonl");
    files.insert(trace.clone(), std::fs::read(dir.join(&trace)).map_err(err)?);
    Ok(files)
}

fn c04_determinism() -> Outcome {
    let start = Instant::now();
    let a = tempfile::tempdir().map_err(err)?;
    let b = tempfile::tempdir().map_err(err)?;
    let first = pipeline_once(a.path())?;
    let second = pipeline_once(b.path())?;
    for (name, bytes) in &first {
        ensure!(second.get(name) == Some(bytes), "{name} differs between runs");
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "two runs took {elapsed:?}");
    Ok(format!("{} artifacts byte-identical; two runs in {elapsed:?}", first.len()))
}

/// Wrong-then-right or always-wrong selection with reflections that leave
/// visible markers in the memories they produce.
fn marking_gateway(kind: ScriptKind) -> Gateway {
    Gateway::scripted(move |req: &ChatRequest| match template_of(req) {
        "reflect_user" => "My updated self-introduction: I now know better.".into(),
        "reflect_items" => "The updated description of the first CD is: POSITIVE-REWRITE.\n\
                            The updated description of the second CD is: NEGATIVE-REWRITE."
            .into(),
        _ => kind.respond(req),
    })
}

fn train_with(gateway: &Gateway, spec: SyntheticSpec, cfg: &TrainConfig) -> Result<(Vec<StepRecord>, MemoryStore, Split), String> {
    let (data, split) = synthetic(spec);
    let catalog = Catalog::builtin();
    let agents = Agents::new(gateway, &catalog);
    let mut store = MemoryStore::for_dataset(&data.dataset, &data.seeds).map_err(err)?;
    let pop = PopularityTable::from_split(&split);
    let trace = optimize(&agents, &split, &data.dataset.titles(), &mut store, &pop, cfg, 0, None).map_err(err)?;
    Ok((trace, store, split))
}

fn small_spec() -> SyntheticSpec {
    SyntheticSpec { genres: 2, users_per_genre: 4, items_per_genre: 8, sequence_len: 5, seed: 3 }
}

fn c05_loop_semantics() -> Outcome {
    let cfg = TrainConfig::default();
    let (trace, store, _) = train_with(&marking_gateway(ScriptKind::WrongThenRight), small_spec(), &cfg)?;
    ensure!(!trace.is_empty(), "no steps ran");
    for r in &trace {
        ensure!(r.attempts.len() == 2, "step {}: {} attempts", r.global_index, r.attempts.len());
        ensure!(r.user_rewrites == 1 && r.item_rewrites == 1, "step {}: rewrites {}/{}", r.global_index, r.user_rewrites, r.item_rewrites);
        ensure!(r.final_correct, "step {} not correct after reflection", r.global_index);
    }
    let leaked = store.items().values().filter(|m| m.text.contains("NEGATIVE-REWRITE")).count();
    ensure!(leaked == 0, "{leaked} items carry a negative rewrite");
    let positives: HashSet<&str> = trace.iter().map(|r| r.positive.as_str()).collect();
    for (id, m) in store.items() {
        let rewritten = m.text.contains("POSITIVE-REWRITE");
        ensure!(rewritten == positives.contains(id.as_str()), "item {id}: rewritten={rewritten}");
    }

    let (trace, _, _) = train_with(&marking_gateway(ScriptKind::AlwaysWrong), small_spec(), &cfg)?;
    for r in &trace {
        ensure!(r.attempts.len() == 3 && !r.final_correct, "step {}: {} attempts", r.global_index, r.attempts.len());
        ensure!(r.user_rewrites == 2 && r.item_rewrites == 2, "step {}: rewrites {}/{}", r.global_index, r.user_rewrites, r.item_rewrites);
    }
    Ok(format!("{} steps: 2 attempts then 3 attempts, no negative rewrites", trace.len()))
}

fn c06_long_term_bookkeeping() -> Outcome {
    let gw = scripted_gateway(ScriptKind::KeywordAffinity, RouteTable::default());
    let (trace, store, split) = train_with(&gw, small_spec(), &TrainConfig::default())?;
    for (u, seq) in &split.train {
        let n = store.user(u).map_err(err)?.long_term.len();
        ensure!(n == seq.len(), "{u}: long-term {n}, train steps {}", seq.len());
    }
    Ok(format!("{} users, {} steps", split.train.len(), trace.len()))
}

fn c07_negative_sampler() -> Outcome {
    let counts: BTreeMap<String, u64> = (1..=10u64).map(|c| (format!("i{c:02}"), c)).collect();
    let pop = PopularityTable::from_counts(counts.clone());
    let mut rng = rng_for(99, &["chi-square"]);
    let draws = 100_000usize;
    let mut seen: BTreeMap<String, u64> = BTreeMap::new();
    for _ in 0..draws {
        *seen.entry(sample_negative(&pop, &HashSet::new(), &mut rng).map_err(err)?).or_default() += 1;
    }
    let total: u64 = counts.values().sum();
    let stat: f64 = counts
        .iter()
        .map(|(k, &c)| {
            let expected = draws as f64 * c as f64 / total as f64;
            let observed = *seen.get(k).unwrap_or(&0) as f64;
            (observed - expected).powi(2) / expected
        })
        .sum();
    let p = 1.0 - ChiSquared::new(9.0).map_err(err)?.cdf(stat);
    ensure!(p > 0.01, "chi-square {stat:.2}, p = {p:.4}");

    let shown_first: Arc<Mutex<Vec<String>>> = Arc::default();
    let log = shown_first.clone();
    let gw = Gateway::scripted(move |req: &ChatRequest| {
        if template_of(req) == "select_pair" {
            let id = req.tag_value(&tags::candidate(0, "id")).unwrap_or("").to_string();
            log.lock().unwrap().push(id);
        }
        ScriptKind::KeywordAffinity.respond(req)
    });
    let (trace, _, _) = train_with(&gw, small_spec(), &TrainConfig::default())?;
    ensure!(trace.iter().all(|r| r.negative_position == 0), "a trace record puts the negative second");
    let firsts = shown_first.lock().unwrap();
    let mut at = 0;
    for r in &trace {
        for _ in &r.attempts {
            ensure!(firsts.get(at) == Some(&r.negative), "step {}: first shown {:?}", r.global_index, firsts.get(at));
            at += 1;
        }
    }
    Ok(format!("chi-square {stat:.2} (p = {p:.3}); {at} prompts show the negative first"))
}

fn c08_bpr() -> Outcome {
    let mut rng = rng_for(5, &["finite-difference"]);
    let d = 8;
    let l2 = 1e-4;
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut v: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| rng.random_range(-0.5..0.5)).collect()).collect();
        let g = triple_grad(&v[0], &v[1], &v[2], l2);
        let analytic = [g.pu, g.qi, g.qj];
        for which in 0..3 {
            for k in 0..d {
                let orig = v[which][k];
                v[which][k] = orig + h;
                let plus = triple_loss(&v[0], &v[1], &v[2], l2);
                v[which][k] = orig - h;
                let minus = triple_loss(&v[0], &v[1], &v[2], l2);
                v[which][k] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let a = analytic[which][k];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                worst = worst.max(rel);
            }
        }
    }
    ensure!(worst < 1e-4, "max relative error {worst:e}");

    let train = two_block_train(50, 20, 8, 1);
    let n: usize = train.values().map(Vec::len).sum();
    ensure!(n == 800, "{n} interactions");
    let start = Instant::now();
    let model: MfModel = bpr_train(&train, &BprConfig::default()).map_err(err)?;
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "training took {elapsed:?}");
    let (mut good, mut all) = (0usize, 0usize);
    for u in train.keys() {
        let own = &u[..2];
        let other = if own == "b0" { "b1" } else { "b0" };
        for i in 0..20 {
            for j in 0..20 {
                let s_in = model.score(u, &format!("{own}i{i:02}"));
                let s_cross = model.score(u, &format!("{other}i{j:02}"));
                all += 1;
                good += usize::from(s_in > s_cross);
            }
        }
    }
    let frac = good as f64 / all as f64;
    ensure!(frac >= 0.95, "in-block wins {frac:.3}");
    Ok(format!("grad rel err {worst:.1e}; in-block wins {:.1}% of {all}; trained in {elapsed:?}", frac * 100.0))
}

fn c09_bm25() -> Outcome {
    let docs = ["red apple pie", "green apple", "red red wine cellar"];
    let idx = Bm25Index::new(&docs);
    // N = 3, avgdl = 3; idf = ln(1 + (N - df + 0.5) / (df + 0.5)) with df = 2 for both terms
    let idf = (1.0f64 + 1.5 / 2.5).ln();
    let tf_part = |f: f64, len: f64| f * 2.2 / (f + 1.2 * (0.25 + 0.75 * len / 3.0));
    let hand = [
        idf * tf_part(1.0, 3.0) * 2.0,
        idf * tf_part(1.0, 2.0),
        idf * tf_part(2.0, 4.0),
    ];
    let literal = [0.940_007, 0.544_215, 0.590_862];
    for d in 0..3 {
        let got = idx.score("red apple", d);
        ensure!((got - hand[d]).abs() < 5e-7, "doc {d}: {got} vs {}", hand[d]);
        ensure!((got - literal[d]).abs() < 5e-7, "doc {d}: {got:.6} vs {}", literal[d]);
    }
    Ok("3 documents match to 6 decimals".into())
}

fn c10_separation() -> Outcome {
    let (data, split) = synthetic(SyntheticSpec::default());
    let gw = scripted_gateway(ScriptKind::KeywordAffinity, RouteTable::default());
    let catalog = Catalog::builtin();
    let agents = Agents::new(&gw, &catalog);
    let mut store = MemoryStore::for_dataset(&data.dataset, &data.seeds).map_err(err)?;
    let pop = PopularityTable::from_split(&split);
    optimize(&agents, &split, &data.dataset.titles(), &mut store, &pop, &TrainConfig::default(), 0, None).map_err(err)?;
    let ds = &data.dataset;
    let b = LlmRanker::new(Strategy::B, agents, &store, ds, &split);
    let br = LlmRanker::new(Strategy::BR, agents, &store, ds, &split);
    let zero = LlmRanker::new(Strategy::LlmRank, agents, &store, ds, &split);
    let random = RandomRanker { seed: 2024 };
    let rankers: Vec<&dyn Ranker> = vec![&b, &br, &zero, &random];
    let universe: Vec<String> = ds.items.keys().cloned().collect();
    let report = run_eval(&rankers, &split, &universe, &EvalSpec::default(), "synthetic", ExecPolicy::Parallel)
        .map_err(err)?
        .report;
    let get = |s: Strategy| report.get(s, 10).ok_or(format!("no N@10 for {s}"));
    let (nb, nbr, nz, nr) = (get(Strategy::B)?, get(Strategy::BR)?, get(Strategy::LlmRank)?, get(Strategy::Random)?);
    let line = format!("B+R {nbr:.3}, B {nb:.3}, LLMRank {nz:.3}, random {nr:.3}");
    ensure!(nbr >= nb, "B+R below B: {line}");
    ensure!(nb > nr + 0.05 && nb > 0.4544 + 0.05, "B not above random: {line}");
    ensure!(nb > nz + 0.05, "B not above LLMRank: {line}");
    Ok(line)
}

fn c11_probes() -> Outcome {
    let (data, split) = synthetic(SyntheticSpec::default());
    let ds = &data.dataset;
    let catalog = Catalog::builtin();
    let pop = PopularityTable::from_split(&split);
    let bias = |kind: ScriptKind| {
        let gw = scripted_gateway(kind, RouteTable::default());
        bias_trials(Agents::new(&gw, &catalog), ds, &split, &pop, ProbeMemory::Untrained, 2024, ExecPolicy::Parallel)
    };
    let first = bias(ScriptKind::AlwaysFirst).map_err(err)?;
    ensure!(first.first_position_pick_rate == 1.0, "always-first rate {}", first.first_position_pick_rate);
    let blind = bias(ScriptKind::PositionBlind).map_err(err)?;
    // 100 fair coin flips: 3 standard deviations is 0.15
    ensure!((blind.first_position_pick_rate - 0.5).abs() <= 0.15, "position-blind rate {}", blind.first_position_pick_rate);

    let gw = scripted_gateway(ScriptKind::CopyPhrases, RouteTable::default());
    let spec = PropagationSpec {
        seed_user: "u00000".into(),
        special_text: "I love music that evokes emotions and creates a deep emotional connection with the listener.".into(),
        keywords: vec!["emotional connection".into(), "evokes emotions".into()],
        query: None,
    };
    let prop = propagation_probe(Agents::new(&gw, &catalog), ds, &split, &spec, &TrainConfig::default()).map_err(err)?;
    let hop0 = prop.report.hop(0).ok_or("no hop 0")?.keyword_fraction;
    let hop1 = prop.report.hop(1).ok_or("no hop 1")?.keyword_fraction;
    ensure!(hop0 == 1.0 && hop1 > 0.0, "hop0 {hop0}, hop1 {hop1}");

    let noop = scripted_gateway(ScriptKind::NoOp, RouteTable::default());
    let noop_agents = Agents::new(&noop, &catalog);
    let cases: Vec<ColdCase> =
        split.test_target.iter().map(|(u, t)| ColdCase { user_id: u.clone(), item_id: t.item_id.clone() }).collect();
    let neighbors: Vec<String> = ds.items.values().take(4).map(ItemIdentity::render).collect();
    let mut warm = BTreeMap::new();
    for c in &cases {
        let w = noop_agents.warmup_cold_item(&ds.items[&c.item_id], &neighbors).map_err(err)?;
        warm.insert(c.item_id.clone(), w.text);
    }
    let warmed = BTreeMap::from([("no-op".to_string(), warm)]);
    let store = MemoryStore::for_dataset(ds, &data.seeds).map_err(err)?;
    let ranking = scripted_gateway(ScriptKind::KeywordAffinity, RouteTable::default());
    let pool: Vec<String> = ds.items.keys().cloned().collect();
    let setup = ColdStartSetup {
        agents: Agents::new(&ranking, &catalog),
        dataset: ds,
        split: &split,
        store: &store,
        strategy: Strategy::B,
        pool: &pool,
    };
    let report = cold_start_eval(&setup, &cases, &warmed, &EvalSpec::default(), ExecPolicy::Parallel).map_err(err)?;
    let delta = &report.modes["no-op"].delta;
    ensure!(delta.values().all(|&d| d == 0.0), "no-op warmup delta {delta:?}");
    Ok(format!(
        "always-first {:.2}, position-blind {:.2}; hop0 {hop0:.2}, hop1 {hop1:.2}; cold-start delta 0",
        first.first_position_pick_rate, blind.first_position_pick_rate
    ))
}

const WORDS: [&str; 24] = [
    "amber", "breeze", "canyon", "delta", "ember", "falcon", "glacier", "harbor", "island", "jasmine", "kettle",
    "lantern", "meadow", "nectar", "orchid", "prairie", "quartz", "raven", "saffron", "thunder", "umber", "velvet",
    "willow", "zephyr",
];

fn title<R: Rng>(rng: &mut R) -> String {
    let n = rng.random_range(2..=3);
    (0..n)
        .map(|_| {
            let w = WORDS[rng.random_range(0..WORDS.len())];
            let mut c = w.chars();
            c.next().unwrap().to_ascii_uppercase().to_string() + c.as_str()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Substitute, delete or insert one letter inside the title.
fn typo<R: Rng>(rng: &mut R, s: &str) -> String {
    let mut chars: Vec<char> = s.chars().collect();
    let letters: Vec<usize> = (0..chars.len()).filter(|&i| chars[i].is_ascii_alphabetic()).collect();
    let at = letters[rng.random_range(0..letters.len())];
    let letter = (b'a' + rng.random_range(0..26u8)) as char;
    match rng.random_range(0..3) {
        0 => chars[at] = letter,
        1 => {
            chars.remove(at);
        }
        _ => chars.insert(at, letter),
    }
    chars.into_iter().collect()
}

fn perturb<R: Rng>(rng: &mut R, s: &str) -> String {
    let mut out = match rng.random_range(0..3) {
        0 => typo(rng, s),
        1 => s.to_string(),
        _ => s.to_lowercase(),
    };
    if rng.random_bool(0.5) {
        out = format!("{}{out}{}", " ".repeat(rng.random_range(0..3)), " ".repeat(rng.random_range(0..3)));
    }
    out
}

fn recase<R: Rng>(rng: &mut R, s: String) -> String {
    match rng.random_range(0..3) {
        0 => s.to_uppercase(),
        1 => s.to_lowercase(),
        _ => s,
    }
}

fn distinct_titles<R: Rng>(rng: &mut R, n: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    while out.len() < n {
        let t = title(rng);
        if out.iter().all(|o| strsim::normalized_levenshtein(&o.to_lowercase(), &t.to_lowercase()) < 0.6) {
            out.push(t);
        }
    }
    out
}

fn c12_parser_fuzz() -> Outcome {
    let mut rng = rng_for(12, &["fuzz"]);
    let cases = 1000;
    let (mut exact, mut panics) = (0usize, 0usize);
    for case in 0..cases {
        let recovered = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            if case % 2 == 0 {
                let titles = distinct_titles(&mut rng, 2);
                let pick = rng.random_range(0..2);
                let body = format!(
                    "Chosen CD:{}{}\n{}Explanation: it fits my taste.",
                    " ".repeat(rng.random_range(1..4)),
                    perturb(&mut rng, &titles[pick]),
                    " ".repeat(rng.random_range(0..3))
                );
                let body = recase(&mut rng, body);
                parse_choice(&body, &titles).is_ok_and(|p| p.index == pick)
            } else {
                let titles = distinct_titles(&mut rng, 10);
                let mut order: Vec<usize> = (0..10).collect();
                for i in (1..10).rev() {
                    order.swap(i, rng.random_range(0..=i));
                }
                let body = order
                    .iter()
                    .enumerate()
                    .map(|(r, &i)| format!("{}.{}{}", r + 1, " ".repeat(rng.random_range(1..3)), perturb(&mut rng, &titles[i])))
                    .collect::<Vec<_>>()
                    .join("\n");
                let body = recase(&mut rng, body);
                parse_ranking(&body, &titles).is_ok_and(|p| p.order == order)
            }
        }));
        match recovered {
            Ok(true) => exact += 1,
            Ok(false) => {}
            Err(_) => panics += 1,
        }
    }
    let rate = exact as f64 / cases as f64;
    ensure!(panics == 0, "{panics} panics");
    ensure!(rate >= 0.99, "exact recovery {rate:.3}");
    Ok(format!("{exact}/{cases} recovered exactly, no panics"))
}

fn c13_transcript_replay() -> Outcome {
    let category = "Classic Rock; Album-Oriented Rock (AOR)";
    let pos = ItemIdentity::new("brainwashed", "Brainwashed", &[category]);
    let neg = ItemIdentity::new("aerosmith", "O, Yeah! Ultimate Aerosmith Hits", &[category]);
    let split = Split {
        train: BTreeMap::from([("listener".to_string(), vec![inter("brainwashed", 1)])]),
        test_target: BTreeMap::from([("listener".to_string(), inter("held-out", 2))]),
    };
    let titles = BTreeMap::from([
        ("brainwashed".to_string(), pos.title.clone()),
        ("aerosmith".to_string(), neg.title.clone()),
    ]);
    let mut store = MemoryStore::new();
    store.init_user("listener", DEFAULT_USER_SEED).map_err(err)?;
    store.init_item(&pos);
    store.init_item(&neg);
    let pop = PopularityTable::from_counts(BTreeMap::from([("aerosmith".to_string(), 1)]));
    let catalog = Catalog::builtin();

    let rendered = selection_request(
        &catalog,
        DEFAULT_USER_SEED,
        &Candidate::new("aerosmith", &neg.title, &neg.render()),
        &Candidate::new("brainwashed", &pos.title, &pos.render()),
    )
    .map_err(err)?;
    ensure!(rendered.messages[0].content == fixture("select_prompt.txt"), "selection prompt differs from the transcript");

    let responder = |req: &ChatRequest| -> String {
        match (template_of(req), req.tag_value(tags::ATTEMPT)) {
            ("select_pair", Some("0")) => fixture("select_response.txt"),
            ("select_pair", _) => "Chosen CD: Brainwashed\nExplanation: Its experimental and innovative approach is what I now look for.".into(),
            ("reflect_user", _) => fixture("user_reflection_response.txt"),
            ("reflect_items", _) => fixture("item_reflection_response.txt"),
            (other, _) => format!("unexpected template {other}"),
        }
    };
    let cfg = TrainConfig::default();
    let (replay, recorded) = replay_gateway(responder, |recorder| {
        let mut scratch = store.clone();
        let agents = Agents::new(recorder, &catalog);
        optimize(&agents, &split, &titles, &mut scratch, &pop, &cfg, 0, None).expect("recording run succeeds");
    });
    let agents = Agents::new(&replay, &catalog);
    let trace = optimize(&agents, &split, &titles, &mut store, &pop, &cfg, 0, None).map_err(err)?;
    ensure!(trace.len() == 1 && trace[0].attempts.len() == 2, "trace {trace:?}");
    ensure!(!trace[0].attempts[0].correct && trace[0].final_correct, "first choice should be wrong, second right");
    let item = &store.item("brainwashed").map_err(err)?.text;
    ensure!(item.contains("experimental and innovative"), "positive memory: {item}");
    let user = &store.user("listener").map_err(err)?.short_term;
    ensure!(user.contains("experimental and innovative approach to classic rock"), "user memory: {user}");
    let negative = &store.item("aerosmith").map_err(err)?.text;
    ensure!(*negative == neg.render(), "negative memory changed: {negative}");
    Ok(format!("{} replayed calls; positive memory carries the quoted phrase", recorded.len()))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 13] = [
        ("sparsity statistics", c01_sparsity_table),
        ("ndcg oracle sweep", c02_ndcg_sweep),
        ("random-ranker calibration", c03_random_calibration),
        ("pipeline determinism", c04_determinism),
        ("optimization loop semantics", c05_loop_semantics),
        ("long-term bookkeeping", c06_long_term_bookkeeping),
        ("negative sampler", c07_negative_sampler),
        ("bpr correctness", c08_bpr),
        ("bm25 oracle", c09_bm25),
        ("strategy separation", c10_separation),
        ("probe plumbing", c11_probes),
        ("parser fuzz", c12_parser_fuzz),
        ("transcript replay", c13_transcript_replay),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{:.1?}]", i + 1, start.elapsed()),
            Err(why) => {
                println!("FAIL {:>2} {name}: {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
