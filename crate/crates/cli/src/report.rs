//! JSON report emitted by the harness: the library-learning result plus
//! corpus statistics, wall-clock time, and peak memory when available.

use abstract_forge_core::compress::LibraryResult;
use abstract_forge_core::corpus::CorpusStats;
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub abstractions: Vec<abstract_forge_core::compress::LearnedAbstraction>,
    pub rewritten: Vec<String>,
    pub original_cost: i64,
    pub final_cost: i64,
    pub compression_ratio: f64,
    pub stats: ReportStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportStats {
    pub corpus: CorpusStats,
    pub iterations: Vec<abstract_forge_core::compress::IterationReport>,
    pub wall_time_seconds: f64,
    pub peak_memory_mb: Option<f64>,
}

impl Report {
    pub fn build(result: LibraryResult, corpus: CorpusStats, wall: Duration) -> Self {
        Report {
            abstractions: result.abstractions,
            rewritten: result.rewritten,
            original_cost: result.original_cost,
            final_cost: result.final_cost,
            compression_ratio: result.compression_ratio,
            stats: ReportStats {
                corpus,
                iterations: result.iterations,
                wall_time_seconds: wall.as_secs_f64(),
                peak_memory_mb: peak_memory_mb(),
            },
        }
    }

    pub fn print_summary(&self) {
        let mut cost = self.original_cost;
        for (a, it) in self.abstractions.iter().zip(&self.stats.iterations) {
            let ratio = cost as f64 / it.corpus_cost_after.max(1) as f64;
            cost = it.corpus_cost_after;
            let cumulative = self.original_cost as f64 / cost.max(1) as f64;
            println!(
                "{}: arity {} utility {} uses {} (step ratio {:.2}, cumulative {:.2})\n    {}",
                a.name, a.arity, a.utility, a.num_uses, ratio, cumulative, a.body
            );
        }
        println!(
            "corpus cost {} -> {} (compression ratio {:.2}) in {:.3}s",
            self.original_cost,
            self.final_cost,
            self.compression_ratio,
            self.stats.wall_time_seconds
        );
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub nodes_expanded: u64,
    pub ratio: f64,
    pub utility: i64,
    pub budget_exhausted: bool,
}

/// Anytime trace: one entry per best-so-far improvement, with the corpus
/// compression ratio the candidate would achieve, plus the search total.
pub fn write_trace(path: &Path, report: &Report) -> Result<()> {
    let Some(first) = report.stats.iterations.first() else {
        let empty = serde_json::json!({ "events": [], "total_nodes": 0 });
        std::fs::write(path, serde_json::to_string_pretty(&empty)?)?;
        return Ok(());
    };
    let events: Vec<serde_json::Value> = first
        .stats
        .best_trace
        .iter()
        .map(|t| {
            serde_json::json!({
                "nodes": t.nodes,
                "utility": t.utility,
                "ratio": report.original_cost as f64 / t.rewritten_cost.max(1) as f64,
            })
        })
        .collect();
    let doc = serde_json::json!({
        "events": events,
        "total_nodes": first.stats.nodes_expanded,
    });
    std::fs::write(path, serde_json::to_string_pretty(&doc)?)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// VmHWM from /proc/self/status, when the platform provides it.
fn peak_memory_mb() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            let kb: f64 = rest.trim().trim_end_matches("kB").trim().parse().ok()?;
            return Some(kb / 1024.0);
        }
    }
    None
}
