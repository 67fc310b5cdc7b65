//! Command-line harness: corpus ingestion, library learning, report
//! emission, anytime traces, and the ablation table.
//!
//! Exit codes: 0 success, 1 input/parse errors, 2 invalid configuration
//! (clap reports usage errors with code 2 as well).

mod report;

use abstract_forge_core::compress::compress_iterated;
use abstract_forge_core::corpus::Corpus;
use abstract_forge_core::expr::{CostParams, ExprStore};
use abstract_forge_core::search::{SearchConfig, UtilityMode};
use abstract_forge_core::synth::{generate_sources, GenParams};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

#[derive(Parser)]
#[command(name = "abstract-forge", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Learn a library of abstractions and rewrite the corpus.
    Compress(RunArgs),
    /// One learning iteration, recording the anytime best-so-far trace.
    Trace(RunArgs),
    /// Run one iteration per optimization-toggle configuration and report
    /// node-count ratios against the baseline.
    Ablate(RunArgs),
    /// Generate a synthetic hierarchical corpus.
    Gen(GenArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum UtilityArg {
    /// Sum utility over every program.
    Sum,
    /// Count only each task's best program (DreamCoder-style).
    MinTask,
}

#[derive(Args)]
struct RunArgs {
    /// Corpus JSON: an array of s-expression strings, or
    /// {"programs": [{"body": ..., "task": ...}]}.
    input: PathBuf,

    #[arg(long, default_value_t = 3)]
    iterations: usize,

    #[arg(long, default_value_t = 3)]
    max_arity: usize,

    /// Worker threads (falls back to ABSTRACT_FORGE_THREADS, then 1).
    #[arg(long)]
    threads: Option<usize>,

    #[arg(long, value_enum, default_value_t = UtilityArg::Sum)]
    utility: UtilityArg,

    #[arg(long)]
    no_opt_upper_bound: bool,

    #[arg(long)]
    no_opt_arg_capture: bool,

    #[arg(long)]
    no_opt_redundant_args: bool,

    #[arg(long)]
    no_opt_single_task: bool,

    /// Stop each search after this many expanded nodes (best-so-far result).
    #[arg(long)]
    node_budget: Option<u64>,

    /// Stop each search after this many seconds (best-so-far result).
    #[arg(long)]
    time_budget: Option<f64>,

    /// Write the JSON report here.
    #[arg(long)]
    output: Option<PathBuf>,

    /// Write the anytime trace here (trace command; default trace.json).
    #[arg(long)]
    trace: Option<PathBuf>,

    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 50)]
    programs: usize,

    #[arg(long, default_value_t = 40)]
    mean_length: usize,

    #[arg(long, default_value_t = 3)]
    nesting: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long)]
    output: Option<PathBuf>,
}

impl RunArgs {
    fn search_config(&self) -> Result<SearchConfig> {
        let workers = match self.threads {
            Some(t) => t,
            None => std::env::var("ABSTRACT_FORGE_THREADS")
                .ok()
                .map(|v| v.parse::<usize>())
                .transpose()
                .context("ABSTRACT_FORGE_THREADS must be an integer")?
                .unwrap_or(1),
        };
        anyhow::ensure!(workers >= 1, "thread count must be at least 1");
        if let Some(t) = self.time_budget {
            anyhow::ensure!(t > 0.0, "time budget must be positive");
        }
        Ok(SearchConfig {
            max_arity: self.max_arity,
            utility_mode: match self.utility {
                UtilityArg::Sum => UtilityMode::ProgramSum,
                UtilityArg::MinTask => UtilityMode::MinPerTask,
            },
            opt_upper_bound: !self.no_opt_upper_bound,
            opt_arg_capture: !self.no_opt_arg_capture,
            opt_redundant_args: !self.no_opt_redundant_args,
            opt_single_task: !self.no_opt_single_task,
            workers,
            node_budget: self.node_budget,
            time_budget: self.time_budget.map(Duration::from_secs_f64),
        })
    }

    fn load_corpus(&self, store: &mut ExprStore) -> Result<Corpus> {
        let text = std::fs::read_to_string(&self.input)
            .with_context(|| format!("cannot read {}", self.input.display()))?;
        let corpus = Corpus::from_json(store, &text)
            .with_context(|| format!("cannot parse {}", self.input.display()))?;
        Ok(corpus)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Compress(args) => run_compress(&args, args.iterations),
        Cmd::Trace(args) => run_trace(&args),
        Cmd::Ablate(args) => run_ablation(&args),
        Cmd::Gen(args) => run_gen(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            // Configuration problems exit 2, everything else (missing or
            // malformed input) exits 1.
            let msg = format!("{e:#}");
            if msg.contains("thread count") || msg.contains("budget") || msg.contains("THREADS") {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run_compress(args: &RunArgs, iterations: usize) -> Result<()> {
    let config = args.search_config()?;
    let mut store = ExprStore::new(CostParams::default());
    let corpus = args.load_corpus(&mut store)?;
    let corpus_stats = corpus.stats(&store);

    let start = Instant::now();
    let outcome = compress_iterated(&mut store, corpus, iterations, &config);
    let wall = start.elapsed();

    let report = report::Report::build(outcome.result, corpus_stats, wall);
    if !args.quiet {
        report.print_summary();
    }
    if let Some(path) = &args.output {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    if let Some(path) = &args.trace {
        report::write_trace(path, &report)?;
    }
    Ok(())
}

fn run_trace(args: &RunArgs) -> Result<()> {
    let config = args.search_config()?;
    let mut store = ExprStore::new(CostParams::default());
    let corpus = args.load_corpus(&mut store)?;
    let corpus_stats = corpus.stats(&store);

    let start = Instant::now();
    // The trace is about a single search.
    let outcome = compress_iterated(&mut store, corpus, 1, &config);
    let wall = start.elapsed();

    let report = report::Report::build(outcome.result, corpus_stats, wall);
    if !args.quiet {
        report.print_summary();
    }
    let path = args.trace.clone().unwrap_or_else(|| PathBuf::from("trace.json"));
    report::write_trace(&path, &report)?;
    if let Some(out) = &args.output {
        std::fs::write(out, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn run_ablation(args: &RunArgs) -> Result<()> {
    let base_config = args.search_config()?;
    let mut store = ExprStore::new(CostParams::default());
    let corpus = args.load_corpus(&mut store)?;

    let mut rows = Vec::new();
    for (name, tweak) in [
        ("baseline", [true, true, true]),
        ("no-arg-capture", [true, false, true]),
        ("no-upper-bound", [false, true, true]),
        ("no-redundant-args", [true, true, false]),
        ("no-opt", [false, false, false]),
    ] {
        let config = SearchConfig {
            opt_upper_bound: tweak[0] && base_config.opt_upper_bound,
            opt_arg_capture: tweak[1] && base_config.opt_arg_capture,
            opt_redundant_args: tweak[2] && base_config.opt_redundant_args,
            ..base_config.clone()
        };
        let out = abstract_forge_core::cts_search(&store, &corpus, &config);
        rows.push(report::AblationRow {
            name: name.to_string(),
            nodes_expanded: out.stats.nodes_expanded,
            utility: out.best.as_ref().map_or(0, |b| b.utility),
            budget_exhausted: out.stats.budget_exhausted,
            ratio: 0.0,
        });
    }
    let base_nodes = rows[0].nodes_expanded.max(1);
    for row in &mut rows {
        row.ratio = row.nodes_expanded as f64 / base_nodes as f64;
    }

    if !args.quiet {
        println!("{:<20} {:>12} {:>8} {:>12}  {}", "config", "nodes", "ratio", "utility", "note");
        for r in &rows {
            println!(
                "{:<20} {:>12} {:>8.2} {:>12}  {}",
                r.name,
                r.nodes_expanded,
                r.ratio,
                r.utility,
                if r.budget_exhausted { "budget exhausted" } else { "" }
            );
        }
    }
    if let Some(path) = &args.output {
        std::fs::write(path, serde_json::to_string_pretty(&rows)?)?;
    }
    Ok(())
}

fn run_gen(args: &GenArgs) -> Result<()> {
    let sources = generate_sources(&GenParams {
        programs: args.programs,
        mean_length: args.mean_length,
        nesting: args.nesting,
        seed: args.seed,
    });
    let json = serde_json::to_string_pretty(&sources)?;
    match &args.output {
        Some(path) => std::fs::write(path, json)
            .with_context(|| format!("cannot write {}", path.display()))?,
        None => println!("{json}"),
    }
    Ok(())
}
