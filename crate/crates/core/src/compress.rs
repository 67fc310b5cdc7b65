//! Iterated library learning: search for the best abstraction, rewrite the
//! corpus with it, repeat. Each learned abstraction becomes an ordinary
//! primitive (`fn_0`, `fn_1`, …) for later iterations, so successive
//! abstractions can build on earlier ones.

use crate::body::Term;
use crate::corpus::{Corpus, CorpusIndex};
use crate::expr::{Cost, ExprStore, NodeId};
use crate::rewrite::{matched_set, rewrite_with_body, RewriteResult};
use crate::search::{
    aggregate_delta, cts_search_indexed, SearchConfig, SearchStats, UtilityMode,
};
use serde::{Deserialize, Serialize};

/// A learned abstraction: a hole-free body over dense abstraction variables,
/// introduced into the grammar as a new primitive.
#[derive(Debug, Clone)]
pub struct Abstraction {
    pub name: String,
    pub body: NodeId,
    pub arity: usize,
}

impl Abstraction {
    pub fn cost(&self, store: &ExprStore) -> Cost {
        store.cost(self.body)
    }
}

/// Local utility of applying the abstraction at one match (the per-location
/// gain: starred body cost, minus application overhead, plus multiuse gain).
pub fn local_utility(store: &ExprStore, a: &Abstraction, args: &[NodeId]) -> Cost {
    let p = store.params();
    let body = Term::from_node(store, a.body);
    let usages = body.absvar_usages(a.arity);
    let penalty = p.prim_cost(&a.name) + p.cost_app * a.arity as Cost;
    let multiuse: Cost = args
        .iter()
        .zip(&usages)
        .map(|(&arg, &u)| (u as Cost - 1) * store.cost(arg))
        .sum();
    body.cost_star(store) - penalty + multiuse
}

/// Utility of an abstraction over a corpus under the configured mode:
/// the optimal-rewrite gain minus the abstraction's own cost.
pub fn utility(store: &ExprStore, a: &Abstraction, corpus: &Corpus, config: &SearchConfig) -> Cost {
    let index = CorpusIndex::build(store, corpus);
    let body = Term::from_node(store, a.body);
    let matched = matched_set(store, &index, &body, a.arity);
    let mut tables = crate::rewrite::DpTables::default();
    crate::rewrite::dp_util_star(store, &index, &matched, &mut tables);
    aggregate_delta(corpus, &index, &tables.star, config.utility_mode) - a.cost(store)
}

/// Rewrite a corpus with one abstraction; returns the rewritten corpus and
/// the per-program-sum total utility.
pub fn rewrite_corpus(
    store: &mut ExprStore,
    corpus: &Corpus,
    a: &Abstraction,
) -> RewriteResult {
    let body = Term::from_node(store, a.body);
    rewrite_with_body(store, corpus, &body, a.arity, &a.name)
}

/// Corpus-cost ratio before/after; 1.0 for an empty corpus.
pub fn compression_ratio(before: Cost, after: Cost) -> f64 {
    if after == 0 {
        1.0
    } else {
        before as f64 / after as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedAbstraction {
    pub name: String,
    pub body: String,
    pub arity: usize,
    pub utility: Cost,
    pub num_uses: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub utility: Cost,
    pub corpus_cost_after: Cost,
    pub stats: SearchStats,
}

/// The result of iterated library learning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryResult {
    pub abstractions: Vec<LearnedAbstraction>,
    pub rewritten: Vec<String>,
    pub original_cost: Cost,
    pub final_cost: Cost,
    pub compression_ratio: f64,
    pub iterations: Vec<IterationReport>,
}

#[derive(Debug, Clone)]
pub struct CompressOutcome {
    pub result: LibraryResult,
    pub corpus: Corpus,
    pub abstractions: Vec<Abstraction>,
}

/// Run up to `iterations` rounds of abstraction learning, stopping early
/// when no abstraction has positive utility.
pub fn compress_iterated(
    store: &mut ExprStore,
    corpus: Corpus,
    iterations: usize,
    config: &SearchConfig,
) -> CompressOutcome {
    let original_cost = corpus.total_cost(store);
    let mut current = corpus;
    let mut abstractions: Vec<Abstraction> = Vec::new();
    let mut learned: Vec<LearnedAbstraction> = Vec::new();
    let mut reports: Vec<IterationReport> = Vec::new();

    for iteration in 0..iterations {
        let index = CorpusIndex::build(store, &current);
        let outcome = cts_search_indexed(store, &current, &index, config);
        let Some(found) = outcome.best else {
            break;
        };
        let name = format!("fn_{iteration}");
        let body_id = found.body.intern(store);
        let a = Abstraction { name: name.clone(), body: body_id, arity: found.arity };
        let rr = rewrite_corpus(store, &current, &a);
        if config.utility_mode == UtilityMode::ProgramSum {
            debug_assert_eq!(
                rr.total_utility, found.utility,
                "search utility disagrees with rewrite utility for {}",
                found.print
            );
        }
        let corpus_cost_after = rr.corpus.total_cost(store);
        learned.push(LearnedAbstraction {
            name,
            body: found.print.clone(),
            arity: found.arity,
            utility: found.utility,
            num_uses: rr.uses,
        });
        reports.push(IterationReport {
            iteration,
            utility: found.utility,
            corpus_cost_after,
            stats: outcome.stats,
        });
        abstractions.push(a);
        current = rr.corpus;
    }

    let final_cost = current.total_cost(store);
    let result = LibraryResult {
        abstractions: learned,
        rewritten: current.programs.iter().map(|p| store.print(p.root)).collect(),
        original_cost,
        final_cost,
        compression_ratio: compression_ratio(original_cost, final_cost),
        iterations: reports,
    };
    CompressOutcome { result, corpus: current, abstractions }
}
