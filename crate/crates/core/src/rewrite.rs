//! The optimal rewrite strategy: a bottom-up accept/reject dynamic program
//! over match locations, plus the extraction pass that materializes the
//! rewritten corpus.
//!
//! For an abstraction `A` and every subtree `e`, three quantities are
//! computed: `util_r[e]`, the best cumulative gain if no rewrite happens at
//! `e` (sum over children); `util_a[e]`, the gain if `e` is rewritten
//! (its local utility plus the best gains inside its arguments); and
//! `util*[e] = max` of the two. Matching is structural, so the tables are
//! keyed by hash-consed node id and shared between all occurrences of a
//! subtree, across programs. An argument captured under `k` lambdas of the
//! body reuses the table entry of its unshifted in-program subtree: shifting
//! free variables changes neither matching nor utility, so the shift is
//! applied to the already-rewritten argument at extraction time.

use crate::body::{match_body_at, Term};
use crate::corpus::{Corpus, CorpusIndex, Program};
use crate::expr::{Cost, Expr, ExprStore, NodeId};
use smallvec::SmallVec;
use std::collections::HashMap;

/// One matched subtree of the corpus: its local rewrite gain and, per
/// abstraction variable, the unshifted argument subtree and its capture depth.
#[derive(Debug, Clone)]
pub struct LocalMatch {
    pub u_local: Cost,
    pub args: SmallVec<[(NodeId, u16); 4]>,
}

pub type MatchedSet = HashMap<NodeId, LocalMatch>;

/// Local utility of rewriting one match: the starred body cost, minus the
/// application overhead of the new primitive, plus the multiuse gain of every
/// argument that is referenced more than once.
pub fn local_gain(
    store: &ExprStore,
    cost_star_body: Cost,
    arity: usize,
    usages: &[u32],
    args: &[(NodeId, u16)],
) -> Cost {
    let p = store.params();
    let penalty = p.cost_prim_default + p.cost_app * arity as Cost;
    let multiuse: Cost = args
        .iter()
        .zip(usages)
        .map(|(&(arg, _), &u)| (u as Cost - 1) * store.cost(arg))
        .sum();
    cost_star_body - penalty + multiuse
}

/// All match locations of `body` over the corpus, keyed by unique subtree.
///
/// The degenerate body consisting of a single abstraction variable matches
/// everywhere and compresses nothing; it is excluded outright.
pub fn matched_set(
    store: &ExprStore,
    index: &CorpusIndex,
    body: &Term,
    arity: usize,
) -> MatchedSet {
    let mut out = MatchedSet::new();
    if matches!(body, Term::AbsVar(_)) {
        return out;
    }
    let usages = body.absvar_usages(arity);
    let cost_star = body.cost_star(store);
    for &id in &index.unique {
        if let Some(b) = match_body_at(store, body, arity, id) {
            let u_local = local_gain(store, cost_star, arity, &usages, &b.absvars);
            out.insert(id, LocalMatch { u_local, args: b.absvars });
        }
    }
    out
}

/// Per-node tables of the rewrite dynamic program.
///
/// `reject[e]` is the best gain when no rewrite happens at `e` itself, and
/// `star[e]` the best gain when `e` sits at a rewritable (non-function)
/// position. The function side of an application contributes `reject`, the
/// argument side and lambda bodies contribute `star`.
#[derive(Debug, Default)]
pub struct DpTables {
    pub reject: Vec<Cost>,
    pub star: Vec<Cost>,
}

/// Fill the tables bottom-up over the corpus. `index.unique` is ascending
/// and children precede parents.
pub fn dp_util_star(
    store: &ExprStore,
    index: &CorpusIndex,
    matched: &MatchedSet,
    tables: &mut DpTables,
) {
    tables.reject.clear();
    tables.reject.resize(store.len(), 0);
    tables.star.clear();
    tables.star.resize(store.len(), 0);
    for &id in &index.unique {
        let util_r = reject_gain(store, id, tables);
        let util_a = matched
            .get(&id)
            .map(|lm| accept_gain(lm, tables))
            .unwrap_or(0);
        tables.reject[id.index()] = util_r;
        tables.star[id.index()] = util_r.max(util_a);
    }
}

fn accept_gain(lm: &LocalMatch, tables: &DpTables) -> Cost {
    lm.u_local + lm.args.iter().map(|&(a, _)| tables.star[a.index()]).sum::<Cost>()
}

fn reject_gain(store: &ExprStore, id: NodeId, tables: &DpTables) -> Cost {
    match store.node(id) {
        Expr::Lam(b) => tables.star[b.index()],
        Expr::App(f, x) => tables.reject[f.index()] + tables.star[x.index()],
        _ => 0,
    }
}

/// Shift free variables (indices ≥ `cutoff`) by `delta`.
pub fn shift_free(store: &mut ExprStore, id: NodeId, delta: i32, cutoff: u32) -> NodeId {
    if delta == 0 || store.free_vars(id).iter().all(|&f| f < cutoff) {
        return id;
    }
    match store.node(id) {
        Expr::Lam(b) => {
            let b2 = shift_free(store, b, delta, cutoff + 1);
            store.lam(b2)
        }
        Expr::App(f, x) => {
            let f2 = shift_free(store, f, delta, cutoff);
            let x2 = shift_free(store, x, delta, cutoff);
            store.app(f2, x2)
        }
        Expr::Var(i) => {
            if i >= cutoff as i32 {
                debug_assert!(i + delta >= cutoff as i32, "shift would capture a variable");
                store.var(i + delta)
            } else {
                id
            }
        }
        _ => id,
    }
}

#[derive(Debug, Clone)]
pub struct RewriteResult {
    pub corpus: Corpus,
    /// Per-program-sum utility: −cost(A) plus the summed root gains.
    pub total_utility: Cost,
    /// Number of rewrite sites in the rewritten corpus.
    pub uses: u64,
}

/// Rewrite the whole corpus with an abstraction body, introducing `name` as
/// a fresh primitive applied to its arguments as a curried `App` chain.
pub fn rewrite_with_body(
    store: &mut ExprStore,
    corpus: &Corpus,
    body: &Term,
    arity: usize,
    name: &str,
) -> RewriteResult {
    let index = CorpusIndex::build(store, corpus);
    let matched = matched_set(store, &index, body, arity);
    let mut tables = DpTables::default();
    dp_util_star(store, &index, &matched, &mut tables);

    let cost_a = body.cost(store);
    let total_utility: Cost =
        corpus.programs.iter().map(|p| tables.star[p.root.index()]).sum::<Cost>() - cost_a;

    let fn_node = store.prim(name);
    let mut memo: HashMap<(NodeId, bool), NodeId> = HashMap::new();
    let mut programs = Vec::with_capacity(corpus.programs.len());
    for p in &corpus.programs {
        let root = extract(store, p.root, false, &matched, &tables, fn_node, &mut memo);
        programs.push(Program { root, task: p.task.clone() });
    }

    let fn_sym = match store.node(fn_node) {
        Expr::Prim(s) => s,
        _ => unreachable!(),
    };
    let mut count_memo: HashMap<NodeId, u64> = HashMap::new();
    let uses: u64 = programs
        .iter()
        .map(|p| count_prim(store, p.root, fn_sym, &mut count_memo))
        .sum();

    RewriteResult { corpus: Corpus::new(programs), total_utility, uses }
}

fn extract(
    store: &mut ExprStore,
    id: NodeId,
    fun_pos: bool,
    matched: &MatchedSet,
    tables: &DpTables,
    fn_node: NodeId,
    memo: &mut HashMap<(NodeId, bool), NodeId>,
) -> NodeId {
    if let Some(&r) = memo.get(&(id, fun_pos)) {
        return r;
    }
    // Rewrite where it is at least as good as not rewriting and gains
    // something: ties keep the outermost (first-reached) location.
    let accept = !fun_pos
        && matched.get(&id).is_some_and(|lm| {
            let util_a = accept_gain(lm, tables);
            util_a >= tables.reject[id.index()] && util_a > 0
        });
    let result = if accept {
        let lm = matched[&id].clone();
        let mut acc = fn_node;
        for (arg, k) in lm.args {
            let rewritten = extract(store, arg, false, matched, tables, fn_node, memo);
            let shifted = shift_free(store, rewritten, -(k as i32), 0);
            acc = store.app(acc, shifted);
        }
        acc
    } else {
        match store.node(id) {
            Expr::Lam(b) => {
                let b2 = extract(store, b, false, matched, tables, fn_node, memo);
                store.lam(b2)
            }
            Expr::App(f, x) => {
                let f2 = extract(store, f, true, matched, tables, fn_node, memo);
                let x2 = extract(store, x, false, matched, tables, fn_node, memo);
                store.app(f2, x2)
            }
            _ => id,
        }
    };
    memo.insert((id, fun_pos), result);
    result
}

fn count_prim(
    store: &ExprStore,
    id: NodeId,
    sym: crate::expr::Symbol,
    memo: &mut HashMap<NodeId, u64>,
) -> u64 {
    if let Some(&c) = memo.get(&id) {
        return c;
    }
    let c = match store.node(id) {
        Expr::Prim(s) if s == sym => 1,
        Expr::Lam(b) => count_prim(store, b, sym, memo),
        Expr::App(f, x) => count_prim(store, f, sym, memo) + count_prim(store, x, sym, memo),
        _ => 0,
    };
    memo.insert(id, c);
    c
}
