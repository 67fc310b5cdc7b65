//! Corpus-guided top-down abstraction search.
//!
//! The search refines partial abstraction bodies hole by hole, starting from
//! the single-hole body `??`. A partial abstraction carries its live match
//! locations; expanding a hole only ever inspects the subtree bound to that
//! hole at each location, so match lists shrink monotonically and are never
//! recomputed from the corpus. A priority queue ordered by the utility upper
//! bound (the summed cost of all matched subtrees) drives a best-bound
//! branch-and-bound loop with three sound prunes: zero-match, upper-bound,
//! and strict dominance (redundant arguments, argument capture). The best
//! complete abstraction so far is maintained throughout, so the search can
//! be stopped at any time and still return a valid result.
//!
//! Worklist items popped with an upper bound strictly below the best utility
//! are discarded. Keeping equal-bound branches alive costs a little work but
//! makes the final answer independent of discovery order, and therefore of
//! the worker count: every complete abstraction that could win the
//! deterministic tie-break (higher utility, then larger abstraction cost,
//! then lexicographically smaller print) is evaluated under every schedule.

use crate::body::{eq_shifted, match_body_at, Term};
use crate::corpus::{Corpus, CorpusIndex, TaskSpan};
use crate::expr::{Cost, Expr, ExprStore, NodeId, Symbol};
use crate::rewrite::{dp_util_star, local_gain, DpTables, LocalMatch, MatchedSet};
use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::collections::{BinaryHeap, BTreeMap};
use std::sync::atomic::{AtomicBool, AtomicI64, AtomicU64, Ordering};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UtilityMode {
    /// Utility is summed over every program (plain corpus compression).
    ProgramSum,
    /// Each task contributes only its cheapest program after rewriting.
    MinPerTask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub max_arity: usize,
    pub utility_mode: UtilityMode,
    pub opt_upper_bound: bool,
    pub opt_arg_capture: bool,
    pub opt_redundant_args: bool,
    pub opt_single_task: bool,
    pub workers: usize,
    pub node_budget: Option<u64>,
    pub time_budget: Option<Duration>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_arity: 3,
            utility_mode: UtilityMode::ProgramSum,
            opt_upper_bound: true,
            opt_arg_capture: true,
            opt_redundant_args: true,
            opt_single_task: true,
            workers: 1,
            node_budget: None,
            time_budget: None,
        }
    }
}

/// One improvement of the best abstraction found so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub nodes: u64,
    pub utility: Cost,
    /// Corpus cost if the corpus were rewritten with this candidate.
    pub rewritten_cost: Cost,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub nodes_expanded: u64,
    pub evaluated: u64,
    pub pruned_upper_bound: u64,
    pub pruned_zero_match: u64,
    pub pruned_dominance: u64,
    pub pruned_arity: u64,
    pub pruned_single_use: u64,
    pub pruned_single_task: u64,
    pub budget_exhausted: bool,
    pub best_trace: Vec<TracePoint>,
}

/// A live match location set entry: one unique subtree, the subtree bound to
/// each open hole, and the (unshifted) argument bound to each abstraction
/// variable. Occurrence multiplicity lives in the corpus index.
#[derive(Debug, Clone)]
pub struct MatchEntry {
    pub node: NodeId,
    pub hole_binds: SmallVec<[NodeId; 4]>,
    pub var_binds: SmallVec<[NodeId; 4]>,
}

#[derive(Debug, Clone, Copy)]
struct HoleSlot {
    id: u16,
    depth: u16,
}

/// A partial abstraction: a body with holes, its live match locations, and
/// the cached utility upper bound (summed matched-subtree cost over all
/// occurrences).
#[derive(Debug, Clone)]
pub struct PartialAbstraction {
    body: Term,
    holes: Vec<HoleSlot>,
    next_hole: u16,
    /// Lambda depth each abstraction variable was introduced under.
    absvar_depths: SmallVec<[u16; 4]>,
    matches: Vec<MatchEntry>,
    bound: Cost,
    eligible_occurrences: u64,
}

/// Expansion results: surviving children plus counts of pruned productions.
pub struct Expansions {
    pub children: Vec<PartialAbstraction>,
    pub zero_match: u64,
    pub arity_capped: u64,
}

impl PartialAbstraction {
    /// The trivial single-hole abstraction, matching every subtree occurrence.
    pub fn seed(store: &ExprStore, index: &CorpusIndex) -> Self {
        let matches: Vec<MatchEntry> = index
            .unique
            .iter()
            .map(|&n| MatchEntry {
                node: n,
                hole_binds: SmallVec::from_slice(&[n]),
                var_binds: SmallVec::new(),
            })
            .collect();
        let (bound, eligible_occurrences) = bound_of(store, index, &matches);
        PartialAbstraction {
            body: Term::Hole(0),
            holes: vec![HoleSlot { id: 0, depth: 0 }],
            next_hole: 1,
            absvar_depths: SmallVec::new(),
            matches,
            bound,
            eligible_occurrences,
        }
    }

    /// Build a partial abstraction for an explicit body by scanning the
    /// corpus. Intended for tests and diagnostics; the search itself only
    /// ever refines match lists incrementally.
    pub fn from_body(store: &ExprStore, index: &CorpusIndex, body: Term) -> Self {
        let mut holes = Vec::new();
        collect_holes(&body, 0, &mut holes);
        let arity = count_absvars(&body);
        let absvar_depths = if arity > 0 {
            body.absvar_first_depths(arity)
        } else {
            SmallVec::new()
        };
        let mut matches = Vec::new();
        for &id in &index.unique {
            if let Some(b) = match_body_at(store, &body, arity, id) {
                let by_id: BTreeMap<u16, NodeId> = b.holes.iter().copied().collect();
                let hole_binds: SmallVec<[NodeId; 4]> =
                    holes.iter().map(|h| by_id[&h.id]).collect();
                let var_binds: SmallVec<[NodeId; 4]> =
                    b.absvars.iter().map(|&(n, _)| n).collect();
                matches.push(MatchEntry { node: id, hole_binds, var_binds });
            }
        }
        let next_hole = holes.iter().map(|h| h.id + 1).max().unwrap_or(0);
        let (bound, eligible_occurrences) = bound_of(store, index, &matches);
        PartialAbstraction {
            body,
            holes,
            next_hole,
            absvar_depths,
            matches,
            bound,
            eligible_occurrences,
        }
    }

    pub fn body(&self) -> &Term {
        &self.body
    }

    pub fn matches(&self) -> &[MatchEntry] {
        &self.matches
    }

    pub fn arity(&self) -> usize {
        self.absvar_depths.len()
    }

    pub fn is_complete(&self) -> bool {
        self.holes.is_empty()
    }

    /// Summed cost of all matched subtree occurrences: an upper bound on the
    /// utility of every complete abstraction derivable from this one.
    pub fn upper_bound(&self) -> Cost {
        self.bound
    }

    /// Index of the hole to expand next: the most recently introduced one.
    pub fn choose_hole(&self) -> usize {
        self.holes.len() - 1
    }

    /// All single-step expansions of the given hole. Children that match
    /// nowhere are omitted, as are expansions that would introduce a free
    /// variable or exceed the arity cap.
    pub fn expansions(
        &self,
        hole_idx: usize,
        store: &ExprStore,
        index: &CorpusIndex,
        config: &SearchConfig,
    ) -> Expansions {
        let slot = self.holes[hole_idx];
        let k = slot.depth as u32;
        let arity = self.arity();

        let mut apps: Vec<usize> = Vec::new();
        let mut lams: Vec<usize> = Vec::new();
        let mut prims: BTreeMap<Symbol, Vec<usize>> = BTreeMap::new();
        let mut vars: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for (mi, m) in self.matches.iter().enumerate() {
            match store.node(m.hole_binds[hole_idx]) {
                Expr::App(_, _) => apps.push(mi),
                Expr::Lam(_) => lams.push(mi),
                Expr::Prim(s) => prims.entry(s).or_default().push(mi),
                // A variable pointing outside the body region can only be
                // abstracted, never written into the body.
                Expr::Var(w) if (w as u32) < k => vars.entry(w).or_default().push(mi),
                Expr::Var(_) => {}
                _ => unreachable!("corpus subtrees are pure"),
            }
        }

        let mut raw_children = Vec::new();
        let mut zero_match = 0u64;
        let mut arity_capped = 0u64;

        if !apps.is_empty() {
            let f = Term::Hole(self.next_hole);
            let x = Term::Hole(self.next_hole + 1);
            let production = Term::App(Box::new(f), Box::new(x));
            raw_children.push(self.structural_child(
                store,
                index,
                hole_idx,
                production,
                &apps,
                StructuralKind::App,
            ));
        }
        if !lams.is_empty() {
            let production = Term::Lam(Box::new(Term::Hole(self.next_hole)));
            raw_children.push(self.structural_child(
                store,
                index,
                hole_idx,
                production,
                &lams,
                StructuralKind::Lam,
            ));
        }
        // Primitive productions ordered by symbol name for determinism.
        let mut prim_order: Vec<(Symbol, Vec<usize>)> = prims.into_iter().collect();
        prim_order.sort_by(|a, b| store.symbol_name(a.0).cmp(store.symbol_name(b.0)));
        for (sym, mis) in prim_order {
            raw_children.push(self.structural_child(
                store,
                index,
                hole_idx,
                Term::Prim(sym),
                &mis,
                StructuralKind::Leaf,
            ));
        }
        for (v, mis) in vars {
            raw_children.push(self.structural_child(
                store,
                index,
                hole_idx,
                Term::Var(v),
                &mis,
                StructuralKind::Leaf,
            ));
        }

        // Existing abstraction variables: keep only locations where every
        // occurrence binds the same (shift-normalized) subtree.
        for i in 0..arity {
            let di = self.absvar_depths[i] as u32;
            let survivors: Vec<usize> = self
                .matches
                .iter()
                .enumerate()
                .filter(|(_, m)| {
                    eq_shifted(store, m.var_binds[i], di, m.hole_binds[hole_idx], k)
                })
                .map(|(mi, _)| mi)
                .collect();
            if survivors.is_empty() {
                zero_match += 1;
                continue;
            }
            raw_children.push(self.absvar_child(store, index, hole_idx, i as u16, None, &survivors));
        }

        // Fresh abstraction variable: matches are unchanged except where the
        // argument would capture a variable bound inside the body region.
        if arity < config.max_arity {
            let survivors: Vec<usize> = self
                .matches
                .iter()
                .enumerate()
                .filter(|(_, m)| {
                    store
                        .min_free_var(m.hole_binds[hole_idx])
                        .map_or(true, |f| f >= k)
                })
                .map(|(mi, _)| mi)
                .collect();
            if survivors.is_empty() {
                zero_match += 1;
            } else {
                raw_children.push(self.absvar_child(
                    store,
                    index,
                    hole_idx,
                    arity as u16,
                    Some(slot.depth),
                    &survivors,
                ));
            }
        } else {
            arity_capped += 1;
        }

        // A child whose matches have no rewritable occurrence can never
        // gain anything; drop it with the zero-match branches.
        let mut children = Vec::with_capacity(raw_children.len());
        for child in raw_children {
            if child.eligible_occurrences == 0 {
                zero_match += 1;
            } else {
                children.push(child);
            }
        }
        Expansions { children, zero_match, arity_capped }
    }

    fn structural_child(
        &self,
        store: &ExprStore,
        index: &CorpusIndex,
        hole_idx: usize,
        production: Term,
        survivors: &[usize],
        kind: StructuralKind,
    ) -> PartialAbstraction {
        let slot = self.holes[hole_idx];
        let body = self.body.replace_hole(slot.id, &production);
        let mut holes = self.holes.clone();
        holes.remove(hole_idx);
        let mut next_hole = self.next_hole;
        match kind {
            StructuralKind::App => {
                holes.push(HoleSlot { id: next_hole, depth: slot.depth });
                holes.push(HoleSlot { id: next_hole + 1, depth: slot.depth });
                next_hole += 2;
            }
            StructuralKind::Lam => {
                holes.push(HoleSlot { id: next_hole, depth: slot.depth + 1 });
                next_hole += 1;
            }
            StructuralKind::Leaf => {}
        }
        let matches: Vec<MatchEntry> = survivors
            .iter()
            .map(|&mi| {
                let m = &self.matches[mi];
                let mut hole_binds = m.hole_binds.clone();
                let bind = hole_binds[hole_idx];
                hole_binds.remove(hole_idx);
                match (kind, store.node(bind)) {
                    (StructuralKind::App, Expr::App(f, x)) => {
                        hole_binds.push(f);
                        hole_binds.push(x);
                    }
                    (StructuralKind::Lam, Expr::Lam(b)) => hole_binds.push(b),
                    (StructuralKind::Leaf, _) => {}
                    _ => unreachable!("survivor bucket mismatch"),
                }
                MatchEntry { node: m.node, hole_binds, var_binds: m.var_binds.clone() }
            })
            .collect();
        let (bound, eligible_occurrences) = bound_of(store, index, &matches);
        PartialAbstraction {
            body,
            holes,
            next_hole,
            absvar_depths: self.absvar_depths.clone(),
            matches,
            bound,
            eligible_occurrences,
        }
    }

    fn absvar_child(
        &self,
        store: &ExprStore,
        index: &CorpusIndex,
        hole_idx: usize,
        var: u16,
        fresh_depth: Option<u16>,
        survivors: &[usize],
    ) -> PartialAbstraction {
        let slot = self.holes[hole_idx];
        let body = self.body.replace_hole(slot.id, &Term::AbsVar(var));
        let mut holes = self.holes.clone();
        holes.remove(hole_idx);
        let mut absvar_depths = self.absvar_depths.clone();
        if let Some(d) = fresh_depth {
            absvar_depths.push(d);
        }
        let matches: Vec<MatchEntry> = survivors
            .iter()
            .map(|&mi| {
                let m = &self.matches[mi];
                let mut hole_binds = m.hole_binds.clone();
                let bind = hole_binds[hole_idx];
                hole_binds.remove(hole_idx);
                let mut var_binds = m.var_binds.clone();
                if fresh_depth.is_some() {
                    var_binds.push(bind);
                }
                MatchEntry { node: m.node, hole_binds, var_binds }
            })
            .collect();
        let (bound, eligible_occurrences) = bound_of(store, index, &matches);
        PartialAbstraction {
            body,
            holes,
            next_hole: self.next_hole,
            absvar_depths,
            matches,
            bound,
            eligible_occurrences,
        }
    }

    /// Strict dominance: (a) two abstraction variables always take identical
    /// arguments, or (b) some abstraction variable takes one fixed closed
    /// argument everywhere (capture does not fire on open arguments).
    pub fn strictly_dominated(&self, store: &ExprStore, config: &SearchConfig) -> bool {
        if self.matches.is_empty() {
            return false;
        }
        let arity = self.arity();
        if config.opt_redundant_args && arity >= 2 {
            for i in 0..arity {
                for j in (i + 1)..arity {
                    let (di, dj) =
                        (self.absvar_depths[i] as u32, self.absvar_depths[j] as u32);
                    if self.matches.iter().all(|m| {
                        eq_shifted(store, m.var_binds[i], di, m.var_binds[j], dj)
                    }) {
                        return true;
                    }
                }
            }
        }
        if config.opt_arg_capture {
            for i in 0..arity {
                let first = self.matches[0].var_binds[i];
                if store.is_closed(first)
                    && self.matches.iter().all(|m| m.var_binds[i] == first)
                {
                    return true;
                }
            }
        }
        false
    }

    fn matches_single_task(&self, index: &CorpusIndex) -> bool {
        let mut seen: Option<u32> = None;
        for m in &self.matches {
            match index.task_span[m.node.index()] {
                TaskSpan::Many => return false,
                TaskSpan::One(t) => match seen {
                    None => seen = Some(t),
                    Some(prev) if prev != t => return false,
                    Some(_) => {}
                },
                TaskSpan::None => unreachable!("matched node not in corpus"),
            }
        }
        true
    }
}

#[derive(Clone, Copy, PartialEq)]
enum StructuralKind {
    App,
    Lam,
    Leaf,
}

fn bound_of(store: &ExprStore, index: &CorpusIndex, matches: &[MatchEntry]) -> (Cost, u64) {
    let mut bound = 0;
    let mut occ = 0u64;
    for m in matches {
        let n = index.occ_eligible(m.node) as u64;
        bound += store.cost(m.node) * n as Cost;
        occ += n;
    }
    (bound, occ)
}

fn collect_holes(t: &Term, depth: u16, out: &mut Vec<HoleSlot>) {
    match t {
        Term::Hole(id) => out.push(HoleSlot { id: *id, depth }),
        Term::Lam(b) => collect_holes(b, depth + 1, out),
        Term::App(f, x) => {
            collect_holes(f, depth, out);
            collect_holes(x, depth, out);
        }
        _ => {}
    }
}

fn count_absvars(t: &Term) -> usize {
    fn walk(t: &Term, max: &mut i32) {
        match t {
            Term::AbsVar(i) => *max = (*max).max(*i as i32),
            Term::Lam(b) => walk(b, max),
            Term::App(f, x) => {
                walk(f, max);
                walk(x, max);
            }
            _ => {}
        }
    }
    let mut max = -1;
    walk(t, &mut max);
    (max + 1) as usize
}

/// A complete abstraction the search has scored.
#[derive(Debug, Clone)]
pub struct FoundAbstraction {
    pub body: Term,
    pub arity: usize,
    pub absvar_depths: SmallVec<[u16; 4]>,
    pub utility: Cost,
    pub cost: Cost,
    pub print: String,
    pub unique_matches: usize,
    pub tasks_used: usize,
    /// Corpus-cost reduction summed over all programs.
    pub program_sum_delta: Cost,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: Option<FoundAbstraction>,
    pub stats: SearchStats,
}

struct Evaluation {
    utility: Cost,
    program_sum_delta: Cost,
    mode_delta: Cost,
    tasks_used: usize,
}

/// Sum of per-root gains under the configured utility mode (before
/// subtracting the abstraction's own cost).
pub fn aggregate_delta(
    corpus: &Corpus,
    index: &CorpusIndex,
    util_star: &[Cost],
    mode: UtilityMode,
) -> Cost {
    match mode {
        UtilityMode::ProgramSum => corpus
            .programs
            .iter()
            .map(|p| util_star[p.root.index()])
            .sum(),
        UtilityMode::MinPerTask => {
            let mut delta = 0;
            for progs in &index.programs_of_task {
                let min_orig = progs
                    .iter()
                    .map(|&p| index.program_costs[p as usize])
                    .min()
                    .unwrap();
                let min_rewritten = progs
                    .iter()
                    .map(|&p| {
                        index.program_costs[p as usize]
                            - util_star[corpus.programs[p as usize].root.index()]
                    })
                    .min()
                    .unwrap();
                delta += min_orig - min_rewritten;
            }
            delta
        }
    }
}

fn tasks_used(corpus: &Corpus, index: &CorpusIndex, util_star: &[Cost]) -> usize {
    let mut used = vec![false; index.num_tasks];
    for (pid, p) in corpus.programs.iter().enumerate() {
        if util_star[p.root.index()] > 0 {
            used[index.task_of_program[pid] as usize] = true;
        }
    }
    used.iter().filter(|&&u| u).count()
}

fn evaluate_matched(
    store: &ExprStore,
    corpus: &Corpus,
    index: &CorpusIndex,
    matched: &MatchedSet,
    cost_a: Cost,
    mode: UtilityMode,
    tables: &mut DpTables,
) -> Evaluation {
    dp_util_star(store, index, matched, tables);
    let program_sum_delta = aggregate_delta(corpus, index, &tables.star, UtilityMode::ProgramSum);
    let mode_delta = match mode {
        UtilityMode::ProgramSum => program_sum_delta,
        UtilityMode::MinPerTask => aggregate_delta(corpus, index, &tables.star, mode),
    };
    Evaluation {
        utility: mode_delta - cost_a,
        program_sum_delta,
        mode_delta,
        tasks_used: tasks_used(corpus, index, &tables.star),
    }
}

/// Deterministic preference among complete abstractions: higher utility,
/// then larger abstraction cost (equal utility with a larger body means a
/// smaller rewritten corpus), then lexicographically smaller print.
fn better_than(utility: Cost, cost: Cost, print: &str, cur: &FoundAbstraction) -> bool {
    (utility, cost) > (cur.utility, cur.cost)
        || ((utility, cost) == (cur.utility, cur.cost) && print < cur.print.as_str())
}

/// The best zero-argument abstraction: every unique closed subexpression of
/// the corpus, scored directly (occurrences never overlap, so each location
/// rewrites independently whenever its gain is positive).
pub fn best_arity_zero(
    store: &ExprStore,
    corpus: &Corpus,
    index: &CorpusIndex,
    config: &SearchConfig,
) -> Option<FoundAbstraction> {
    let cost_t = store.params().cost_prim_default;
    let mut best: Option<FoundAbstraction> = None;
    for &id in &index.unique {
        if !store.is_closed(id) {
            continue;
        }
        let cost = store.cost(id);
        let per_loc = cost - cost_t;
        if per_loc <= 0 {
            continue;
        }
        if config.opt_single_task && index.task_span[id.index()] != TaskSpan::Many {
            continue;
        }
        if index.occ_eligible(id) == 0 {
            continue;
        }
        let program_sum_delta = index.occ_eligible(id) as Cost * per_loc;
        let mode_delta = match config.utility_mode {
            UtilityMode::ProgramSum => program_sum_delta,
            UtilityMode::MinPerTask => {
                let mut delta = 0;
                let touched: Vec<u32> = index.node_programs[id.index()]
                    .iter()
                    .map(|&(p, _)| index.task_of_program[p as usize])
                    .collect();
                let mut tasks: Vec<u32> = touched;
                tasks.sort_unstable();
                tasks.dedup();
                for t in tasks {
                    let progs = &index.programs_of_task[t as usize];
                    let min_orig =
                        progs.iter().map(|&p| index.program_costs[p as usize]).min().unwrap();
                    let min_rewritten = progs
                        .iter()
                        .map(|&p| {
                            let gain = index.node_programs[id.index()]
                                .iter()
                                .find(|&&(q, _)| q == p)
                                .map(|&(_, c)| c as Cost * per_loc)
                                .unwrap_or(0);
                            index.program_costs[p as usize] - gain
                        })
                        .min()
                        .unwrap();
                    delta += min_orig - min_rewritten;
                }
                delta
            }
        };
        let utility = mode_delta - cost;
        if utility <= 0 {
            continue;
        }
        let print = store.print(id);
        if best.as_ref().map_or(true, |b| better_than(utility, cost, &print, b)) {
            let tasks: usize = match index.task_span[id.index()] {
                TaskSpan::Many => 2,
                _ => 1,
            };
            best = Some(FoundAbstraction {
                body: Term::from_node(store, id),
                arity: 0,
                absvar_depths: SmallVec::new(),
                utility,
                cost,
                print,
                unique_matches: 1,
                tasks_used: tasks,
                program_sum_delta,
            });
        }
    }
    let _ = corpus;
    best
}

struct AtomicStats {
    nodes_expanded: AtomicU64,
    evaluated: AtomicU64,
    pruned_upper_bound: AtomicU64,
    pruned_zero_match: AtomicU64,
    pruned_dominance: AtomicU64,
    pruned_arity: AtomicU64,
    pruned_single_use: AtomicU64,
    pruned_single_task: AtomicU64,
}

impl AtomicStats {
    fn new() -> Self {
        AtomicStats {
            nodes_expanded: AtomicU64::new(0),
            evaluated: AtomicU64::new(0),
            pruned_upper_bound: AtomicU64::new(0),
            pruned_zero_match: AtomicU64::new(0),
            pruned_dominance: AtomicU64::new(0),
            pruned_arity: AtomicU64::new(0),
            pruned_single_use: AtomicU64::new(0),
            pruned_single_task: AtomicU64::new(0),
        }
    }
}

struct QueueItem {
    bound: Cost,
    seq: u64,
    pa: PartialAbstraction,
}

impl PartialEq for QueueItem {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.seq == other.seq
    }
}
impl Eq for QueueItem {}
impl PartialOrd for QueueItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Max-heap on bound; FIFO among equal bounds.
        self.bound.cmp(&other.bound).then(other.seq.cmp(&self.seq))
    }
}

struct QueueState {
    heap: BinaryHeap<QueueItem>,
    idle: usize,
    stop: bool,
    seq: u64,
}

struct BestState {
    found: Option<FoundAbstraction>,
    trace: Vec<TracePoint>,
    last_traced: Cost,
}

struct Shared<'a> {
    store: &'a ExprStore,
    corpus: &'a Corpus,
    index: &'a CorpusIndex,
    config: &'a SearchConfig,
    queue: Mutex<QueueState>,
    queue_cv: Condvar,
    best: Mutex<BestState>,
    best_util: AtomicI64,
    pops: AtomicU64,
    stats: AtomicStats,
    budget_exhausted: AtomicBool,
    start: Instant,
}

/// Run the corpus-guided top-down search and return the utility-optimal
/// complete abstraction (or none if nothing has positive utility), plus
/// search statistics.
pub fn cts_search(store: &ExprStore, corpus: &Corpus, config: &SearchConfig) -> SearchOutcome {
    let index = CorpusIndex::build(store, corpus);
    cts_search_indexed(store, corpus, &index, config)
}

pub fn cts_search_indexed(
    store: &ExprStore,
    corpus: &Corpus,
    index: &CorpusIndex,
    config: &SearchConfig,
) -> SearchOutcome {
    assert!(config.workers >= 1, "worker count must be at least 1");
    let init = best_arity_zero(store, corpus, index, config);
    let init_util = init.as_ref().map_or(0, |f| f.utility);

    let mut heap = BinaryHeap::new();
    if !corpus.programs.is_empty() {
        let seed = PartialAbstraction::seed(store, index);
        heap.push(QueueItem { bound: seed.bound, seq: 0, pa: seed });
    }

    let mut trace = Vec::new();
    if let Some(f) = &init {
        trace.push(TracePoint {
            nodes: 0,
            utility: f.utility,
            rewritten_cost: index.total_cost - f.program_sum_delta,
        });
    }

    let shared = Shared {
        store,
        corpus,
        index,
        config,
        queue: Mutex::new(QueueState { heap, idle: 0, stop: false, seq: 1 }),
        queue_cv: Condvar::new(),
        best: Mutex::new(BestState { found: init, trace, last_traced: init_util }),
        best_util: AtomicI64::new(init_util),
        pops: AtomicU64::new(0),
        stats: AtomicStats::new(),
        budget_exhausted: AtomicBool::new(false),
        start: Instant::now(),
    };

    if config.workers == 1 {
        worker(&shared);
    } else {
        std::thread::scope(|scope| {
            for _ in 0..config.workers {
                scope.spawn(|| worker(&shared));
            }
        });
    }

    let best_state = shared.best.into_inner();
    let s = &shared.stats;
    let stats = SearchStats {
        nodes_expanded: s.nodes_expanded.load(Ordering::Relaxed),
        evaluated: s.evaluated.load(Ordering::Relaxed),
        pruned_upper_bound: s.pruned_upper_bound.load(Ordering::Relaxed),
        pruned_zero_match: s.pruned_zero_match.load(Ordering::Relaxed),
        pruned_dominance: s.pruned_dominance.load(Ordering::Relaxed),
        pruned_arity: s.pruned_arity.load(Ordering::Relaxed),
        pruned_single_use: s.pruned_single_use.load(Ordering::Relaxed),
        pruned_single_task: s.pruned_single_task.load(Ordering::Relaxed),
        budget_exhausted: shared.budget_exhausted.load(Ordering::Relaxed),
        best_trace: best_state.trace,
    };
    SearchOutcome { best: best_state.found, stats }
}

fn worker(shared: &Shared<'_>) {
    let config = shared.config;
    let store = shared.store;
    let mut tables = DpTables::default();

    loop {
        let item = {
            let mut q = shared.queue.lock();
            loop {
                if q.stop {
                    return;
                }
                if let Some(item) = q.heap.pop() {
                    break item;
                }
                q.idle += 1;
                if q.idle == config.workers {
                    q.stop = true;
                    shared.queue_cv.notify_all();
                    return;
                }
                shared.queue_cv.wait(&mut q);
                q.idle -= 1;
            }
        };

        // Budgets: node budget on every pop, wall clock every 1000 pops.
        let pops = shared.pops.fetch_add(1, Ordering::Relaxed) + 1;
        if let Some(nb) = config.node_budget {
            if pops > nb {
                shared.budget_exhausted.store(true, Ordering::Relaxed);
                stop_all(shared);
                return;
            }
        }
        if let Some(tb) = config.time_budget {
            if pops % 1000 == 0 && shared.start.elapsed() > tb {
                shared.budget_exhausted.store(true, Ordering::Relaxed);
                stop_all(shared);
                return;
            }
        }

        if config.opt_upper_bound && item.bound < shared.best_util.load(Ordering::Relaxed) {
            shared.stats.pruned_upper_bound.fetch_add(1, Ordering::Relaxed);
            continue;
        }
        shared.stats.nodes_expanded.fetch_add(1, Ordering::Relaxed);

        let hole_idx = item.pa.choose_hole();
        let exp = item.pa.expansions(hole_idx, store, shared.index, config);
        shared.stats.pruned_zero_match.fetch_add(exp.zero_match, Ordering::Relaxed);
        shared.stats.pruned_arity.fetch_add(exp.arity_capped, Ordering::Relaxed);

        let mut to_push: Vec<PartialAbstraction> = Vec::new();
        for child in exp.children {
            // Single-location candidates without free variables are covered
            // by the arity-zero initialization.
            if child.eligible_occurrences == 1
                && store.free_vars(child.matches[0].node).is_empty()
            {
                shared.stats.pruned_single_use.fetch_add(1, Ordering::Relaxed);
                continue;
            }
            if config.opt_single_task && child.matches_single_task(shared.index) {
                shared.stats.pruned_single_task.fetch_add(1, Ordering::Relaxed);
                continue;
            }
            if config.opt_upper_bound
                && child.bound < shared.best_util.load(Ordering::Relaxed)
            {
                shared.stats.pruned_upper_bound.fetch_add(1, Ordering::Relaxed);
                continue;
            }
            if child.strictly_dominated(store, config) {
                shared.stats.pruned_dominance.fetch_add(1, Ordering::Relaxed);
                continue;
            }
            if child.is_complete() {
                evaluate_complete(shared, child, &mut tables);
            } else {
                to_push.push(child);
            }
        }

        if !to_push.is_empty() {
            let mut q = shared.queue.lock();
            for pa in to_push {
                let seq = q.seq;
                q.seq += 1;
                q.heap.push(QueueItem { bound: pa.bound, seq, pa });
            }
            shared.queue_cv.notify_all();
        }
    }
}

fn stop_all(shared: &Shared<'_>) {
    let mut q = shared.queue.lock();
    q.stop = true;
    shared.queue_cv.notify_all();
}

fn evaluate_complete(shared: &Shared<'_>, pa: PartialAbstraction, tables: &mut DpTables) {
    // The bare identity abstraction compresses nothing.
    if matches!(pa.body, Term::AbsVar(_)) {
        return;
    }
    let store = shared.store;
    let config = shared.config;
    let arity = pa.arity();

    let (body, old_of_new) = pa.body.canonicalize_absvars(arity);
    let depths: SmallVec<[u16; 4]> =
        old_of_new.iter().map(|&o| pa.absvar_depths[o as usize]).collect();

    let usages = body.absvar_usages(arity);
    let cost_star = body.cost_star(store);
    let cost_a = body.cost(store);

    let mut matched = MatchedSet::with_capacity(pa.matches.len());
    for m in &pa.matches {
        let args: SmallVec<[(NodeId, u16); 4]> = old_of_new
            .iter()
            .enumerate()
            .map(|(new, &old)| (m.var_binds[old as usize], depths[new]))
            .collect();
        let u_local = local_gain(store, cost_star, arity, &usages, &args);
        matched.insert(m.node, LocalMatch { u_local, args });
    }

    shared.stats.evaluated.fetch_add(1, Ordering::Relaxed);
    let eval = evaluate_matched(
        store,
        shared.corpus,
        shared.index,
        &matched,
        cost_a,
        config.utility_mode,
        tables,
    );
    debug_assert!(
        eval.utility <= pa.bound,
        "upper bound violated: {} > {}",
        eval.utility,
        pa.bound
    );
    let _ = eval.mode_delta;
    if eval.utility <= 0 {
        return;
    }
    if config.opt_single_task && eval.tasks_used < 2 {
        shared.stats.pruned_single_task.fetch_add(1, Ordering::Relaxed);
        return;
    }

    let print = body.print(store);
    let mut best = shared.best.lock();
    let replace = best
        .found
        .as_ref()
        .map_or(true, |cur| better_than(eval.utility, cost_a, &print, cur));
    if replace {
        if eval.utility > best.last_traced {
            best.trace.push(TracePoint {
                nodes: shared.pops.load(Ordering::Relaxed),
                utility: eval.utility,
                rewritten_cost: shared.index.total_cost - eval.program_sum_delta,
            });
            best.last_traced = eval.utility;
        }
        shared.best_util.store(eval.utility, Ordering::Relaxed);
        best.found = Some(FoundAbstraction {
            body,
            arity,
            absvar_depths: depths,
            utility: eval.utility,
            cost: cost_a,
            print,
            unique_matches: pa.matches.len(),
            tasks_used: eval.tasks_used,
            program_sum_delta: eval.program_sum_delta,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;

    fn overview(store: &mut ExprStore) -> Corpus {
        Corpus::from_sources(
            store,
            &[
                "(lam (+ 3 (* (+ 2 4) 2)))",
                "(lam (map (lam (+ 3 (* 4 (+ 3 $0)))) $0))",
                "(lam (* 2 (+ 3 (* $0 (+ 2 1)))))",
            ],
        )
        .unwrap()
    }

    fn term(store: &mut ExprStore, src: &str) -> Term {
        let id = store.parse(src).unwrap();
        Term::from_node(store, id)
    }

    #[test]
    fn seed_matches_every_occurrence() {
        let mut s = ExprStore::with_default_params();
        let c = overview(&mut s);
        let index = CorpusIndex::build(&s, &c);
        let seed = PartialAbstraction::seed(&s, &index);
        // Every subtree occurrence is a match of the trivial abstraction.
        assert_eq!(seed.matches().len(), index.unique.len());
        let matched: std::collections::HashSet<_> =
            seed.matches().iter().map(|m| m.node).collect();
        assert!(c.subtree_occurrences(&s).all(|(_, n)| matched.contains(&n)));
    }

    #[test]
    fn expanding_first_hole_of_plus_to_3_keeps_four_locations() {
        let mut s = ExprStore::with_default_params();
        let c = overview(&mut s);
        let index = CorpusIndex::build(&s, &c);
        let body = term(&mut s, "(+ ??0 ??1)");
        let pa = PartialAbstraction::from_body(&s, &index, body);
        // Hole 0 is the function-side hole.
        let exp = pa.expansions(0, &s, &index, &SearchConfig::default());
        let child = exp
            .children
            .iter()
            .find(|ch| ch.body().print(&s) == "(+ 3 ??1)")
            .expect("expansion to 3 exists");
        assert_eq!(child.matches().len(), 4);
        assert_eq!(child.upper_bound(), 706 + 706 + 302 + 706);
    }

    #[test]
    fn existing_absvar_expansion_restricts_to_equal_bindings() {
        let mut s = ExprStore::with_default_params();
        let c = Corpus::from_sources(&mut s, &["(* 2 2)", "(* 2 3)"]).unwrap();
        let index = CorpusIndex::build(&s, &c);
        let body = term(&mut s, "(* α0 ??0)");
        let pa = PartialAbstraction::from_body(&s, &index, body);
        assert_eq!(pa.matches().len(), 2);
        let exp = pa.expansions(0, &s, &index, &SearchConfig::default());
        let child = exp
            .children
            .iter()
            .find(|ch| ch.body().print(&s) == "(* α0 α0)")
            .expect("existing-variable expansion exists");
        assert_eq!(child.matches().len(), 1);
        let expected = s.parse("(* 2 2)").unwrap();
        assert_eq!(child.matches()[0].node, expected);
    }

    #[test]
    fn zero_match_partial_has_zero_bound() {
        let mut s = ExprStore::with_default_params();
        let c = overview(&mut s);
        let index = CorpusIndex::build(&s, &c);
        let body = term(&mut s, "(nothere ??0)");
        let pa = PartialAbstraction::from_body(&s, &index, body);
        assert!(pa.matches().is_empty());
        assert_eq!(pa.upper_bound(), 0);
    }

    #[test]
    fn dominance_golden_cases() {
        let mut s = ExprStore::with_default_params();
        let config = SearchConfig::default();

        // Redundant arguments: α and β always identical.
        let c = Corpus::from_sources(&mut s, &["(* (+ 3 5) (+ 3 5))"]).unwrap();
        let index = CorpusIndex::build(&s, &c);
        let body = term(&mut s, "(* α0 α1)");
        let pa = PartialAbstraction::from_body(&s, &index, body);
        assert!(!pa.matches().is_empty());
        assert!(pa.strictly_dominated(&s, &config));

        // Argument capture: α always the same closed argument.
        let c = Corpus::from_sources(&mut s, &["(* (+ 3 5) 2)", "(f (* (+ 3 5) 2))"]).unwrap();
        let index = CorpusIndex::build(&s, &c);
        let body = term(&mut s, "(* α0 2)");
        let pa = PartialAbstraction::from_body(&s, &index, body);
        assert!(pa.strictly_dominated(&s, &config));

        // Capture does not fire when the argument has a free variable.
        let c = Corpus::from_sources(&mut s, &["(lam (* $0 2))", "(lam (f (* $0 2)))"]).unwrap();
        let index = CorpusIndex::build(&s, &c);
        let body = term(&mut s, "(* α0 2)");
        let pa = PartialAbstraction::from_body(&s, &index, body);
        assert!(!pa.matches().is_empty());
        assert!(!pa.strictly_dominated(&s, &config));
    }

    #[test]
    fn arity_zero_examples() {
        let mut s = ExprStore::with_default_params();
        let config = SearchConfig::default();

        // Nothing repeats: no positive-utility abstraction.
        let c = Corpus::from_sources(&mut s, &["a", "b", "c"]).unwrap();
        let index = CorpusIndex::build(&s, &c);
        assert!(best_arity_zero(&s, &c, &index, &config).is_none());

        // Repeated closed subexpression across two tasks.
        let c = Corpus::from_sources(&mut s, &["(* (+ 2 4) 1)", "(* (+ 2 4) 5)"]).unwrap();
        let index = CorpusIndex::build(&s, &c);
        let best = best_arity_zero(&s, &c, &index, &config).unwrap();
        assert_eq!(best.print, "(+ 2 4)");
        assert_eq!(best.utility, 2 * (302 - 100) - 302);

        // k identical programs: the whole body wins.
        let c = Corpus::from_sources(&mut s, &["(+ (* 3 3) 1)"; 3]).unwrap();
        let index = CorpusIndex::build(&s, &c);
        let best = best_arity_zero(&s, &c, &index, &config).unwrap();
        assert_eq!(best.print, "(+ (* 3 3) 1)");
    }

    #[test]
    fn overview_search_finds_fn0() {
        let mut s = ExprStore::with_default_params();
        let c = overview(&mut s);
        let out = cts_search(&s, &c, &SearchConfig::default());
        let best = out.best.expect("abstraction found");
        assert_eq!(best.print, "(+ 3 (* α0 α1))");
        assert_eq!(best.arity, 2);
        assert_eq!(best.utility, 102);
        assert_eq!(best.unique_matches, 3);
    }

    #[test]
    fn identical_programs_yield_whole_body() {
        let mut s = ExprStore::with_default_params();
        let c = Corpus::from_sources(&mut s, &["(+ (* 3 3) 1)"; 4]).unwrap();
        let out = cts_search(&s, &c, &SearchConfig::default());
        let best = out.best.unwrap();
        assert_eq!(best.arity, 0);
        assert_eq!(best.print, "(+ (* 3 3) 1)");
    }

    #[test]
    fn search_is_deterministic_single_worker() {
        let mut s = ExprStore::with_default_params();
        let c = overview(&mut s);
        let config = SearchConfig::default();
        let a = cts_search(&s, &c, &config);
        let b = cts_search(&s, &c, &config);
        assert_eq!(a.stats, b.stats);
        assert_eq!(a.best.unwrap().print, b.best.unwrap().print);
    }

    #[test]
    fn trace_is_nondecreasing() {
        let mut s = ExprStore::with_default_params();
        let c = overview(&mut s);
        let out = cts_search(&s, &c, &SearchConfig::default());
        let utils: Vec<Cost> = out.stats.best_trace.iter().map(|t| t.utility).collect();
        assert!(utils.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn node_budget_stops_early() {
        let mut s = ExprStore::with_default_params();
        let c = overview(&mut s);
        let config = SearchConfig { node_budget: Some(2), ..SearchConfig::default() };
        let out = cts_search(&s, &c, &config);
        assert!(out.stats.budget_exhausted);
        assert!(out.stats.nodes_expanded <= 2);
    }
}
