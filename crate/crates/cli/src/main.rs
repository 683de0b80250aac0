use std::path::PathBuf;
use std::process::ExitCode;

use agentcf::agents::Polarity;
use agentcf::config::{Backend, RunConfig};
use agentcf::corpus::sparsity;
use agentcf::exec::ExecPolicy;
use agentcf::pipeline::{PipelineError, Run, RunOptions};
use agentcf::ranker::Strategy;
use agentcf::script::ScriptKind;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Agent-based collaborative filtering experiments.
#[derive(Debug, Parser)]
#[command(name = "agentcf", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replace existing outputs in the run directory.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads for parallel evaluation.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Override the configured LLM backend.
    #[arg(long, global = true, value_parser = parse_backend)]
    backend: Option<Backend>,
    /// Override the scripted responder used by the `script` backend.
    #[arg(long, global = true, value_parser = parse_script)]
    script: Option<ScriptKind>,
    /// Override the replay store path.
    #[arg(long, global = true)]
    replay_store: Option<PathBuf>,
    /// Permit backends that call a remote endpoint.
    #[arg(long, global = true)]
    allow_live: bool,
    /// Run directory (takes precedence over AGENTCF_RUN_DIR and the config).
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    /// Evaluate on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read raw review and metadata files into a dataset snapshot.
    Ingest,
    /// Draw the configured user subset.
    Sample,
    /// Print dataset statistics.
    Stats {
        /// `users,items,interactions` triples to report without a dataset.
        #[arg(long, value_parser = parse_counts)]
        counts: Vec<(usize, usize, usize)>,
    },
    /// Optimize user and item agents on the training split.
    Train {
        /// Continue from the latest checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Rank held-out items with the selected strategies.
    Eval {
        /// Comma-separated strategy names.
        #[arg(long, value_delimiter = ',', value_parser = parse_strategy)]
        strategies: Vec<Strategy>,
    },
    /// Measure position and popularity preference in pairwise choices.
    ProbeBias,
    /// Seed one user with a special preference and trace its spread.
    ProbePropagation {
        #[arg(long)]
        seed_user: Option<String>,
    },
    /// Warm cold items from popular neighbours and compare rankings.
    WarmupCold,
    /// Let users decide on items after reading other agents' reviews.
    Reviews {
        #[arg(long, value_enum, default_value = "positive")]
        polarity: PolarityArg,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolarityArg {
    Positive,
    Negative,
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    s.parse()
}

fn parse_script(s: &str) -> Result<ScriptKind, String> {
    s.parse()
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse()
}

fn parse_counts(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [u, i, n] = parts.as_slice() else {
        return Err(format!("expected users,items,interactions, got `{s}`"));
    };
    let num = |x: &str| x.replace('_', "").parse::<usize>().map_err(|e| format!("`{x}`: {e}"));
    let (u, i, n) = (num(u)?, num(i)?, num(n)?);
    if u == 0 || i == 0 {
        return Err("users and items must be positive".into());
    }
    Ok((u, i, n))
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("value serializes"));
}

fn open_run(cli: &Cli) -> Result<Run, PipelineError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| PipelineError::Input("this command needs --config PATH".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(b) = cli.backend {
        cfg.llm.backend = b;
    }
    if let Some(s) = cli.script {
        cfg.llm.script = s;
    }
    if let Some(p) = &cli.replay_store {
        cfg.llm.replay_store = Some(p.clone());
    }
    let opts = RunOptions {
        force: cli.force,
        allow_live: cli.allow_live,
        policy: if cli.sequential { ExecPolicy::Sequential } else { ExecPolicy::Parallel },
        jobs: cli.jobs,
        dir: cli.run_dir.clone(),
    };
    Run::open(cfg, opts)
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    if let Command::Stats { counts } = &cli.command {
        if !counts.is_empty() {
            for &(u, i, n) in counts {
                println!("users {u} items {i} inters {n} sparsity {:.2}%", sparsity(u, i, n) * 100.0);
            }
            return Ok(());
        }
    }
    let run = open_run(cli)?;
    match &cli.command {
        Command::Ingest => print_json(&run.ingest()?),
        Command::Sample => print!("{}", run.sample()?.report()),
        Command::Stats { .. } => print!("{}", run.stats()?.report()),
        Command::Train { resume } => print_json(&run.train(*resume)?),
        Command::Eval { strategies } => {
            let chosen = (!strategies.is_empty()).then_some(strategies.as_slice());
            print_json(&run.eval(chosen)?.metrics)
        }
        Command::ProbeBias => print_json(&run.probe_bias()?),
        Command::ProbePropagation { seed_user } => print_json(&run.probe_propagation(seed_user.as_deref())?),
        Command::WarmupCold => print_json(&run.warmup_cold()?),
        Command::Reviews { polarity } => {
            let p = match polarity {
                PolarityArg::Positive => Polarity::Positive,
                PolarityArg::Negative => Polarity::Negative,
            };
            let report = run.reviews(p)?;
            println!(
                "reviews ({:?}): before yes {:.3}, after yes {:.3}, changed {:.3}, invalid {}",
                report.polarity, report.before_yes_rate, report.after_yes_rate, report.changed_rate, report.invalid
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
