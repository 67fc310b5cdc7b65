//! Oracle-backed checks of the rewrite machinery.
//!
//! The dynamic program must agree exactly with an exhaustive subset oracle
//! on small programs; the decomposed per-location utility summed by the DP
//! must equal the cost delta measured on the materialized rewritten corpus;
//! and inlining every learned primitive back into the rewritten corpus must
//! reproduce the original corpus syntactically.

use abstract_forge_core::body::Term;
use abstract_forge_core::compress::{compress_iterated, utility, Abstraction};
use abstract_forge_core::corpus::{Corpus, CorpusIndex};
use abstract_forge_core::expr::{Expr, ExprStore, NodeId, Symbol};
use abstract_forge_core::naive::{all_paths, best_rewrite_delta, node_count, Step};
use abstract_forge_core::rewrite::{dp_util_star, matched_set, rewrite_with_body, DpTables};
use abstract_forge_core::search::SearchConfig;
use abstract_forge_core::synth::small_corpus_sources;
use abstract_forge_core::unify::{substitute, MapKey, Mapping};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::HashMap;

/// Pick a random pure subtree of the corpus and abstract random subtrees of
/// it into dense abstraction variables. Returns None when the result is
/// degenerate (free variables at the root, a bare variable, or over-arity).
fn random_candidate(
    rng: &mut StdRng,
    store: &mut ExprStore,
    corpus: &Corpus,
    max_arity: usize,
) -> Option<(NodeId, usize)> {
    let program = &corpus.programs[rng.gen_range(0..corpus.programs.len())];
    let paths = all_paths(store, program.root);
    let path = &paths[rng.gen_range(0..paths.len())];
    let seed = abstract_forge_core::naive::subtree_at(store, program.root, path);

    fn absvarify(rng: &mut StdRng, store: &mut ExprStore, e: NodeId) -> NodeId {
        if rng.gen_bool(0.25) {
            let v = rng.gen_range(0..3u16);
            return store.absvar(v);
        }
        match store.node(e) {
            Expr::Lam(b) => {
                let b2 = absvarify(rng, store, b);
                store.lam(b2)
            }
            Expr::App(f, x) => {
                let f2 = absvarify(rng, store, f);
                let x2 = absvarify(rng, store, x);
                store.app(f2, x2)
            }
            _ => e,
        }
    }
    let raw = absvarify(rng, store, seed);
    if !store.free_vars(raw).is_empty() {
        return None;
    }
    // Densify abstraction variable ids in first-use order.
    let term = Term::from_node(store, raw);
    let mut max_id = -1i32;
    fn scan(t: &Term, max_id: &mut i32) {
        match t {
            Term::AbsVar(i) => *max_id = (*max_id).max(*i as i32),
            Term::Lam(b) => scan(b, max_id),
            Term::App(f, x) => {
                scan(f, max_id);
                scan(x, max_id);
            }
            _ => {}
        }
    }
    scan(&term, &mut max_id);
    let mut present = vec![false; (max_id + 1).max(0) as usize];
    fn mark(t: &Term, present: &mut [bool]) {
        match t {
            Term::AbsVar(i) => present[*i as usize] = true,
            Term::Lam(b) => mark(b, present),
            Term::App(f, x) => {
                mark(f, present);
                mark(x, present);
            }
            _ => {}
        }
    }
    mark(&term, &mut present);
    if present.iter().any(|p| !p) {
        return None; // sparse ids; skip rather than repair
    }
    let arity = present.len();
    if arity > max_arity || matches!(term, Term::AbsVar(_)) {
        return None;
    }
    let (canon, _) = term.canonicalize_absvars(arity);
    Some((canon.intern(store), arity))
}

fn make_corpus(store: &mut ExprStore, seed: u64) -> Corpus {
    let programs = 3 + (seed % 4) as usize;
    let sources = small_corpus_sources(seed, programs, 15);
    Corpus::from_sources(store, &sources).unwrap()
}

#[test]
fn golden_nested_case() {
    let mut s = ExprStore::with_default_params();
    let root = s.parse("(foo (foo (foo bar)))").unwrap();
    let c = Corpus::new(vec![abstract_forge_core::Program { root, task: "t".into() }]);
    let body_id = s.parse("(foo (foo α0))").unwrap();
    let body = Term::from_node(&s, body_id);
    let rr = rewrite_with_body(&mut s, &c, &body, 1, "fn_0");
    assert_eq!(s.print(rr.corpus.programs[0].root), "(fn_0 (foo bar))");

    // The DP matches the exhaustive subset oracle.
    let fn_node = s.prim("probe");
    let delta = best_rewrite_delta(&mut s, root, body_id, 1, fn_node);
    assert_eq!(delta, s.cost(root) - s.cost(rr.corpus.programs[0].root));
}

#[test]
fn dp_matches_subset_oracle_on_random_pairs() {
    let mut checked = 0u32;
    for seed in 0..160u64 {
        let mut s = ExprStore::with_default_params();
        let c = make_corpus(&mut s, seed);
        let mut rng = StdRng::seed_from_u64(seed ^ 0xD0);
        for _ in 0..6 {
            let Some((body_id, arity)) = random_candidate(&mut rng, &mut s, &c, 3) else {
                continue;
            };
            let body = Term::from_node(&s, body_id);
            let index = CorpusIndex::build(&s, &c);
            let matched = matched_set(&s, &index, &body, arity);
            let mut tables = DpTables::default();
            dp_util_star(&s, &index, &matched, &mut tables);
            let fn_node = s.prim("probe");
            for p in c.programs.clone() {
                let dp = tables.star[p.root.index()];
                let naive = best_rewrite_delta(&mut s, p.root, body_id, arity, fn_node);
                assert_eq!(
                    dp,
                    naive,
                    "DP != subset oracle for body {} on {}",
                    s.print(body_id),
                    s.print(p.root)
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 500, "too few comparisons ran: {checked}");
}

#[test]
fn decomposed_utility_equals_materialized_measurement() {
    let mut pairs = 0u32;
    for seed in 0..200u64 {
        let mut s = ExprStore::with_default_params();
        let c = make_corpus(&mut s, seed);
        let mut rng = StdRng::seed_from_u64(seed ^ 0xE1);
        for _ in 0..5 {
            let Some((body_id, arity)) = random_candidate(&mut rng, &mut s, &c, 3) else {
                continue;
            };
            let a = Abstraction { name: "fn_0".into(), body: body_id, arity };
            let decomposed = utility(&s, &a, &c, &SearchConfig::default());
            let before = c.total_cost(&s);
            let body = Term::from_node(&s, body_id);
            let rr = rewrite_with_body(&mut s, &c, &body, arity, "fn_0");
            let after = rr.corpus.total_cost(&s);
            let measured = before - after - s.cost(body_id);
            assert_eq!(
                decomposed,
                measured,
                "utility mismatch for {} (before={before}, after={after})",
                s.print(body_id)
            );
            pairs += 1;
        }
    }
    assert!(pairs > 500, "too few pairs ran: {pairs}");
}

/// Expand every `fn_i` application back into the abstraction body, newest
/// abstraction first so hierarchical definitions unwind cleanly.
fn inline_library(store: &mut ExprStore, root: NodeId, library: &[Abstraction]) -> NodeId {
    let mut cur = root;
    for a in library.iter().rev() {
        let sym = store.lookup_symbol(&a.name).expect("abstraction symbol interned");
        cur = inline_one(store, cur, sym, a.body, a.arity);
    }
    cur
}

fn inline_one(
    store: &mut ExprStore,
    id: NodeId,
    sym: Symbol,
    body: NodeId,
    arity: usize,
) -> NodeId {
    // Unroll the application spine.
    let mut spine = Vec::new();
    let mut head = id;
    while let Expr::App(f, x) = store.node(head) {
        spine.push(x);
        head = f;
    }
    spine.reverse();
    if store.node(head) == Expr::Prim(sym) {
        assert_eq!(spine.len(), arity, "partial application of a learned primitive");
        let mut mapping = Mapping::new();
        for (i, arg) in spine.iter().enumerate() {
            let inlined = inline_one(store, *arg, sym, body, arity);
            mapping.insert(MapKey::AbsVar(i as u16), inlined);
        }
        return substitute(store, &mapping, body).expect("library body binds its variables");
    }
    match store.node(id) {
        Expr::Lam(b) => {
            let b2 = inline_one(store, b, sym, body, arity);
            store.lam(b2)
        }
        Expr::App(f, x) => {
            let f2 = inline_one(store, f, sym, body, arity);
            let x2 = inline_one(store, x, sym, body, arity);
            store.app(f2, x2)
        }
        _ => id,
    }
}

#[test]
fn inlining_the_library_restores_the_original_corpus() {
    for seed in [0u64, 3, 9, 14, 21, 33] {
        let mut s = ExprStore::with_default_params();
        let sources = small_corpus_sources(seed, 6, 25);
        let c = Corpus::from_sources(&mut s, &sources).unwrap();
        let original: Vec<NodeId> = c.programs.iter().map(|p| p.root).collect();
        let out = compress_iterated(&mut s, c, 5, &SearchConfig::default());
        for (orig, rewritten) in original.iter().zip(&out.corpus.programs) {
            let restored = inline_library(&mut s, rewritten.root, &out.abstractions);
            assert_eq!(
                restored,
                *orig,
                "inlining failed: {} vs {}",
                s.print(restored),
                s.print(*orig)
            );
        }
    }
    // Also on the hierarchical generator, where abstractions stack.
    let mut s = ExprStore::with_default_params();
    let sources = abstract_forge_core::synth::generate_sources(&Default::default());
    let c = Corpus::from_sources(&mut s, &sources).unwrap();
    let original: Vec<NodeId> = c.programs.iter().map(|p| p.root).collect();
    let out = compress_iterated(&mut s, c, 6, &SearchConfig::default());
    assert!(out.abstractions.len() > 1, "generator should admit several abstractions");
    for (orig, rewritten) in original.iter().zip(&out.corpus.programs) {
        let restored = inline_library(&mut s, rewritten.root, &out.abstractions);
        assert_eq!(restored, *orig);
    }
}

#[test]
fn subset_oracle_respects_size_guard() {
    // Programs used above stay within the oracle's location limit.
    for seed in 0..40u64 {
        let mut s = ExprStore::with_default_params();
        let c = make_corpus(&mut s, seed);
        for p in &c.programs {
            assert!(node_count(&s, p.root) <= 15);
            assert!(all_paths(&s, p.root)
                .iter()
                .filter(|p2| p2.last() != Some(&Step::Fun))
                .count() <= 15);
        }
    }
}
