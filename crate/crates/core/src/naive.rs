//! Slow reference implementations used as oracles by the test suite.
//!
//! Everything here recomputes from first principles: matching re-scans the
//! corpus with full unification instead of maintaining match lists
//! incrementally, rewriting tries subsets of match locations and measures
//! materialized costs instead of running the dynamic program, and the best
//! abstraction is found by plain top-down enumeration. Keep these paths
//! independent of the engine's: their whole value is disagreeing loudly when
//! the fast paths are wrong.

use crate::corpus::{Corpus, CorpusIndex};
use crate::expr::{Cost, Expr, ExprStore, NodeId, Symbol};
use crate::search::UtilityMode;
use crate::unify::{lambda_unify, MapKey, Mapping};
use rand::rngs::StdRng;
use rand::Rng;

/// One step of a path from a root to a subtree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Fun,
    Arg,
    Body,
}

pub type Path = Vec<Step>;

pub fn subtree_at(store: &ExprStore, root: NodeId, path: &[Step]) -> NodeId {
    let mut cur = root;
    for s in path {
        cur = match (store.node(cur), s) {
            (Expr::App(f, _), Step::Fun) => f,
            (Expr::App(_, x), Step::Arg) => x,
            (Expr::Lam(b), Step::Body) => b,
            _ => panic!("path does not exist"),
        };
    }
    cur
}

pub fn replace_at(store: &mut ExprStore, root: NodeId, path: &[Step], new: NodeId) -> NodeId {
    match path.split_first() {
        None => new,
        Some((s, rest)) => match (store.node(root), s) {
            (Expr::App(f, x), Step::Fun) => {
                let f2 = replace_at(store, f, rest, new);
                store.app(f2, x)
            }
            (Expr::App(f, x), Step::Arg) => {
                let x2 = replace_at(store, x, rest, new);
                store.app(f, x2)
            }
            (Expr::Lam(b), Step::Body) => {
                let b2 = replace_at(store, b, rest, new);
                store.lam(b2)
            }
            _ => panic!("path does not exist"),
        },
    }
}

pub fn all_paths(store: &ExprStore, root: NodeId) -> Vec<Path> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn walk(store: &ExprStore, id: NodeId, cur: &mut Path, out: &mut Vec<Path>) {
        out.push(cur.clone());
        match store.node(id) {
            Expr::Lam(b) => {
                cur.push(Step::Body);
                walk(store, b, cur, out);
                cur.pop();
            }
            Expr::App(f, x) => {
                cur.push(Step::Fun);
                walk(store, f, cur, out);
                cur.pop();
                cur.push(Step::Arg);
                walk(store, x, cur, out);
                cur.pop();
            }
            _ => {}
        }
    }
    walk(store, root, &mut cur, &mut out);
    out
}

pub fn node_count(store: &ExprStore, id: NodeId) -> usize {
    match store.node(id) {
        Expr::Lam(b) => 1 + node_count(store, b),
        Expr::App(f, x) => 1 + node_count(store, f) + node_count(store, x),
        _ => 1,
    }
}

/// Match locations of `body` in one program, found by unifying against every
/// subtree. Locations whose abstraction-variable bindings contain shifted
/// variables are discarded.
pub fn match_paths(
    store: &mut ExprStore,
    body: NodeId,
    root: NodeId,
) -> Vec<(Path, Mapping)> {
    let mut out = Vec::new();
    for path in all_paths(store, root) {
        let sub = subtree_at(store, root, &path);
        if let Some(m) = lambda_unify(store, body, sub) {
            if m.valid_for_matching(store) {
                out.push((path, m));
            }
        }
    }
    out
}

/// Rewrite at one path if it (still) unifies; arguments come straight from
/// the unification mapping.
pub fn rewrite_at(
    store: &mut ExprStore,
    root: NodeId,
    path: &[Step],
    body: NodeId,
    arity: usize,
    fn_node: NodeId,
) -> Option<NodeId> {
    let sub = subtree_at(store, root, path);
    if !store.is_pure(sub) {
        return None;
    }
    let m = lambda_unify(store, body, sub)?;
    if !m.valid_for_matching(store) {
        return None;
    }
    let mut acc = fn_node;
    for i in 0..arity {
        let arg = m.get(MapKey::AbsVar(i as u16))?;
        acc = store.app(acc, arg);
    }
    Some(replace_at(store, root, path, acc))
}

/// Best achievable cost reduction for one program: try every subset of match
/// locations, materialize the rewrites innermost-first, and keep the
/// cheapest result. A subset is invalid if an earlier rewrite destroys a
/// later location (overlap) or makes repeated-variable bindings diverge.
/// Disjoint locations never interact, so they are scored independently.
pub fn best_rewrite_delta(
    store: &mut ExprStore,
    root: NodeId,
    body: NodeId,
    arity: usize,
    fn_node: NodeId,
) -> Cost {
    // Rewrite sites exclude function positions: a rewritten callee would
    // turn the application spine into a partial application.
    let paths: Vec<Path> = match_paths(store, body, root)
        .into_iter()
        .map(|(p, _)| p)
        .filter(|p| p.last() != Some(&Step::Fun))
        .collect();
    if paths.is_empty() {
        return 0;
    }
    let disjoint = paths.iter().enumerate().all(|(i, a)| {
        paths
            .iter()
            .enumerate()
            .all(|(j, b)| i == j || !(a.starts_with(b) || b.starts_with(a)))
    });
    if disjoint {
        let mut delta = 0;
        for p in &paths {
            if let Some(r) = rewrite_at(store, root, p, body, arity, fn_node) {
                let d = store.cost(root) - store.cost(r);
                if d > 0 {
                    delta += d;
                }
            }
        }
        return delta;
    }
    assert!(paths.len() <= 16, "subset oracle limited to 16 locations");
    let orig_cost = store.cost(root);
    let mut best = orig_cost;
    for mask in 0u32..(1 << paths.len()) {
        let mut selected: Vec<&Path> = paths
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, p)| p)
            .collect();
        // Innermost first.
        selected.sort_by_key(|p| std::cmp::Reverse(p.len()));
        let mut cur = root;
        let mut ok = true;
        for p in selected {
            match rewrite_at(store, cur, p, body, arity, fn_node) {
                Some(next) => cur = next,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            best = best.min(store.cost(cur));
        }
    }
    orig_cost - best
}

/// Random pure expression (no holes, abstraction variables, or shifted
/// variables) with roughly `budget` nodes; variables stay bound to one of
/// the `lam_depth` lambdas above, so `lam_depth = 0` gives closed terms.
pub fn random_pure_expr(
    rng: &mut StdRng,
    store: &mut ExprStore,
    budget: usize,
    lam_depth: u32,
    prims: &[&str],
) -> NodeId {
    if budget <= 1 {
        return if lam_depth > 0 && rng.gen_bool(0.3) {
            let i = rng.gen_range(0..lam_depth) as i32;
            store.var(i)
        } else {
            let p = prims[rng.gen_range(0..prims.len())];
            store.prim(p)
        };
    }
    match rng.gen_range(0..10) {
        0..=2 => {
            let b = random_pure_expr(rng, store, budget - 1, lam_depth + 1, prims);
            store.lam(b)
        }
        _ => {
            let left = rng.gen_range(1..budget);
            let f = random_pure_expr(rng, store, left, lam_depth, prims);
            let x = random_pure_expr(rng, store, budget - left, lam_depth, prims);
            store.app(f, x)
        }
    }
}

/// Random expression that is well-formed at depth `d`: shifted variables
/// point at one of the `d` enclosing levels (negative indices included).
pub fn random_wf_expr(rng: &mut StdRng, store: &mut ExprStore, budget: usize, d: u32) -> NodeId {
    if budget <= 1 {
        return match rng.gen_range(0..3) {
            0 => {
                let i = rng.gen_range(0..4);
                store.var(i)
            }
            1 => {
                // Any index below d is well-formed, including negatives.
                let i = rng.gen_range(-3..d as i32);
                store.shifted_var(i)
            }
            _ => {
                let p = ["a", "b", "c"][rng.gen_range(0..3)];
                store.prim(p)
            }
        };
    }
    match rng.gen_range(0..10) {
        0..=2 => {
            let b = random_wf_expr(rng, store, budget - 1, d + 1);
            store.lam(b)
        }
        _ => {
            let left = rng.gen_range(1..budget);
            let f = random_wf_expr(rng, store, left, d);
            let x = random_wf_expr(rng, store, budget - left, d);
            store.app(f, x)
        }
    }
}

/// Replace random subtrees of a pure expression with holes and abstraction
/// variables, yielding a (partial) abstraction body that unifies back
/// against the original whenever repeated-variable bindings agree.
pub fn random_abstraction_of(rng: &mut StdRng, store: &mut ExprStore, e: NodeId) -> NodeId {
    let mut next_hole = 0u16;
    fn walk(
        rng: &mut StdRng,
        store: &mut ExprStore,
        e: NodeId,
        next_hole: &mut u16,
    ) -> NodeId {
        let roll: f64 = rng.gen();
        if roll < 0.15 {
            let h = *next_hole;
            *next_hole += 1;
            return store.hole(h);
        }
        if roll < 0.3 {
            let v = rng.gen_range(0..3u16);
            return store.absvar(v);
        }
        match store.node(e) {
            Expr::Lam(b) => {
                let b2 = walk(rng, store, b, next_hole);
                store.lam(b2)
            }
            Expr::App(f, x) => {
                let f2 = walk(rng, store, f, next_hole);
                let x2 = walk(rng, store, x, next_hole);
                store.app(f2, x2)
            }
            _ => e,
        }
    }
    walk(rng, store, e, &mut next_hole)
}

#[derive(Debug, Clone)]
pub struct NaiveConfig {
    pub max_arity: usize,
    pub utility_mode: UtilityMode,
    pub single_task: bool,
    /// Skip candidates where some variable takes one fixed closed argument
    /// everywhere (the same normalization the engine's capture prune applies).
    pub capture_normalization: bool,
}

impl Default for NaiveConfig {
    fn default() -> Self {
        NaiveConfig {
            max_arity: 2,
            utility_mode: UtilityMode::ProgramSum,
            single_task: true,
            capture_normalization: true,
        }
    }
}

fn leftmost_hole(store: &ExprStore, body: NodeId, depth: u32) -> Option<(u16, u32)> {
    match store.node(body) {
        Expr::Hole(h) => Some((h, depth)),
        Expr::Lam(b) => leftmost_hole(store, b, depth + 1),
        Expr::App(f, x) => {
            leftmost_hole(store, f, depth).or_else(|| leftmost_hole(store, x, depth))
        }
        _ => None,
    }
}

fn replace_hole_node(store: &mut ExprStore, body: NodeId, hole: u16, new: NodeId) -> NodeId {
    match store.node(body) {
        Expr::Hole(h) if h == hole => new,
        Expr::Lam(b) => {
            let b2 = replace_hole_node(store, b, hole, new);
            store.lam(b2)
        }
        Expr::App(f, x) => {
            let f2 = replace_hole_node(store, f, hole, new);
            let x2 = replace_hole_node(store, x, hole, new);
            store.app(f2, x2)
        }
        _ => body,
    }
}

fn corpus_prims(store: &ExprStore, index: &CorpusIndex) -> Vec<Symbol> {
    let mut syms: Vec<Symbol> = index
        .unique
        .iter()
        .filter_map(|&n| match store.node(n) {
            Expr::Prim(s) => Some(s),
            _ => None,
        })
        .collect();
    syms.sort_by(|a, b| store.symbol_name(*a).cmp(store.symbol_name(*b)));
    syms.dedup();
    syms
}

/// Exhaustive top-down enumeration of abstraction bodies, scored by
/// materialized rewriting. Partial bodies that match nowhere are dropped
/// (they cannot derive anything that matches); everything else is explored
/// up to the size of the largest program.
pub fn naive_best_abstraction(
    store: &mut ExprStore,
    corpus: &Corpus,
    cfg: &NaiveConfig,
) -> (Cost, Option<String>) {
    let index = CorpusIndex::build(store, corpus);
    let prims = corpus_prims(store, &index);
    let max_size = corpus
        .programs
        .iter()
        .map(|p| node_count(store, p.root))
        .max()
        .unwrap_or(0);
    let unique = index.unique.clone();

    let matches_somewhere = |store: &mut ExprStore, body: NodeId| -> bool {
        unique.iter().any(|&n| {
            lambda_unify(store, body, n).is_some_and(|m| m.valid_for_matching(store))
        })
    };

    let fn_node = store.prim("fn_tmp");
    let seed = store.hole(0);
    let mut best: Cost = 0;
    let mut best_body: Option<String> = None;
    let mut stack: Vec<(NodeId, u16, u16)> = vec![(seed, 1, 0)]; // body, next hole, arity

    while let Some((body, next_hole, arity)) = stack.pop() {
        match leftmost_hole(store, body, 0) {
            None => {
                if matches!(store.node(body), Expr::AbsVar(_)) {
                    continue;
                }
                if let Some(utility) =
                    score_candidate(store, corpus, &index, body, arity as usize, fn_node, cfg)
                {
                    if utility > best {
                        best = utility;
                        best_body = Some(store.print(body));
                    }
                }
            }
            Some((hole, depth)) => {
                let mut productions: Vec<(NodeId, u16)> = Vec::new();
                for &p in &prims {
                    let n = store.intern(Expr::Prim(p));
                    productions.push((n, arity));
                }
                let h1 = store.hole(next_hole);
                let h2 = store.hole(next_hole + 1);
                let app = store.app(h1, h2);
                productions.push((app, arity));
                let lam = store.lam(h1);
                productions.push((lam, arity));
                for v in 0..depth {
                    let n = store.var(v as i32);
                    productions.push((n, arity));
                }
                for a in 0..arity {
                    let n = store.absvar(a);
                    productions.push((n, arity));
                }
                if (arity as usize) < cfg.max_arity {
                    let n = store.absvar(arity);
                    productions.push((n, arity + 1));
                }
                for (prod, new_arity) in productions {
                    let child = replace_hole_node(store, body, hole, prod);
                    if node_count(store, child) > max_size {
                        continue;
                    }
                    if !matches_somewhere(store, child) {
                        continue;
                    }
                    stack.push((child, next_hole + 2, new_arity));
                }
            }
        }
    }
    (best, best_body)
}

fn score_candidate(
    store: &mut ExprStore,
    corpus: &Corpus,
    index: &CorpusIndex,
    body: NodeId,
    arity: usize,
    fn_node: NodeId,
    cfg: &NaiveConfig,
) -> Option<Cost> {
    if cfg.capture_normalization && arity > 0 {
        let mut all: Vec<Mapping> = Vec::new();
        for p in &corpus.programs {
            for (_, m) in match_paths(store, body, p.root) {
                all.push(m);
            }
        }
        if all.is_empty() {
            return None;
        }
        for a in 0..arity {
            let first = all[0].get(MapKey::AbsVar(a as u16))?;
            if store.is_closed(first)
                && all.iter().all(|m| m.get(MapKey::AbsVar(a as u16)) == Some(first))
            {
                return None;
            }
        }
    }

    let deltas: Vec<Cost> = corpus
        .programs
        .iter()
        .map(|p| p.root)
        .collect::<Vec<_>>()
        .into_iter()
        .map(|root| best_rewrite_delta(store, root, body, arity, fn_node))
        .collect();

    if cfg.single_task {
        let mut used = vec![false; index.num_tasks];
        for (pid, &d) in deltas.iter().enumerate() {
            if d > 0 {
                used[index.task_of_program[pid] as usize] = true;
            }
        }
        if used.iter().filter(|&&u| u).count() < 2 {
            return None;
        }
    }

    let mode_delta = match cfg.utility_mode {
        UtilityMode::ProgramSum => deltas.iter().sum::<Cost>(),
        UtilityMode::MinPerTask => {
            let mut total = 0;
            for progs in &index.programs_of_task {
                let min_orig =
                    progs.iter().map(|&p| index.program_costs[p as usize]).min().unwrap();
                let min_rewritten = progs
                    .iter()
                    .map(|&p| index.program_costs[p as usize] - deltas[p as usize])
                    .min()
                    .unwrap();
                total += min_orig - min_rewritten;
            }
            total
        }
    };
    Some(mode_delta - store.cost(body))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_and_replacement() {
        let mut s = ExprStore::with_default_params();
        let root = s.parse("(f (g a) b)").unwrap();
        let paths = all_paths(&s, root);
        assert_eq!(paths.len(), 7);
        let ga = s.parse("(g a)").unwrap();
        let path: Path = vec![Step::Fun, Step::Arg];
        assert_eq!(subtree_at(&s, root, &path), ga);
        let c = s.parse("c").unwrap();
        let new = replace_at(&mut s, root, &path, c);
        assert_eq!(s.print(new), "(f c b)");
    }

    #[test]
    fn subset_oracle_handles_nested_matches() {
        let mut s = ExprStore::with_default_params();
        let root = s.parse("(foo (foo (foo bar)))").unwrap();
        let body = s.parse("(foo (foo α0))").unwrap();
        let fn_node = s.prim("fn_0");
        // Two nested locations; only one can be kept. Either way the program
        // becomes (fn_0 <arg>) costing 100 + 1 + cost(arg).
        let delta = best_rewrite_delta(&mut s, root, body, 1, fn_node);
        let rewritten = s.parse("(fn_0 (foo bar))").unwrap();
        assert_eq!(delta, s.cost(root) - s.cost(rewritten));
    }

    #[test]
    fn enumerator_finds_obvious_repeat() {
        let mut s = ExprStore::with_default_params();
        let c = Corpus::from_sources(&mut s, &["(f (g a b) c)", "(h (g a b))"]).unwrap();
        let (best, body) = naive_best_abstraction(&mut s, &c, &NaiveConfig::default());
        // (g a b) twice: 2·(302−100) − 302 = 102.
        assert_eq!(best, 102);
        assert_eq!(body.as_deref(), Some("(g a b)"));
    }
}
