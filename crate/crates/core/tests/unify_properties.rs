//! Property suites for the shift operators and lambda-aware unification:
//! shift inverse and well-formedness preservation, the unification
//! correctness theorem (substituting a successful mapping reproduces the
//! expression exactly), mapping well-formedness, and merge commutativity.

use abstract_forge_core::expr::ExprStore;
use abstract_forge_core::naive::{random_abstraction_of, random_pure_expr, random_wf_expr};
use abstract_forge_core::unify::{
    downshift, lambda_unify, mapping_well_formed, merge, substitute, upshift, well_formed,
    MapKey, Mapping,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const PRIMS: [&str; 5] = ["f", "g", "+", "3", "7"];

#[test]
fn shift_lemmas_hold_on_random_well_formed_expressions() {
    let mut rng = StdRng::seed_from_u64(11);
    let mut store = ExprStore::with_default_params();
    for _ in 0..10_000 {
        let d = rng.gen_range(0..4u32);
        let budget = rng.gen_range(1..12);
        let e = random_wf_expr(&mut rng, &mut store, budget, d);
        assert!(well_formed(&store, e, d));
        let down = downshift(&mut store, e, d);
        assert!(well_formed(&store, down, d), "downshift broke WF: {}", store.print(e));
        let up = upshift(&mut store, e, d);
        assert!(well_formed(&store, up, d), "upshift broke WF: {}", store.print(e));
        let back = upshift(&mut store, down, d);
        assert_eq!(back, e, "shift inverse failed for {} at depth {d}", store.print(e));
    }
}

#[test]
fn unification_theorem_on_random_pairs() {
    let mut rng = StdRng::seed_from_u64(17);
    let mut store = ExprStore::with_default_params();
    let mut successes = 0u32;
    for _ in 0..10_000 {
        let budget = rng.gen_range(1..14);
        let lam_depth = rng.gen_range(0..3);
        let e = random_pure_expr(&mut rng, &mut store, budget, lam_depth, &PRIMS);
        let a = random_abstraction_of(&mut rng, &mut store, e);
        if let Some(l) = lambda_unify(&mut store, a, e) {
            successes += 1;
            assert!(mapping_well_formed(&store, &l), "mapping not well-formed");
            let back = substitute(&mut store, &l, a).expect("mapping binds the body");
            assert_eq!(
                back,
                e,
                "substitute(unify({}, {})) mismatch",
                store.print(a),
                store.print(e)
            );
        }
    }
    // The generator replaces subtrees of e itself, so most pairs unify.
    assert!(successes > 5_000, "only {successes} successes; generator degenerated");
}

#[test]
fn unrelated_pairs_never_break_the_theorem() {
    let mut rng = StdRng::seed_from_u64(23);
    let mut store = ExprStore::with_default_params();
    for _ in 0..2_000 {
        let b1 = rng.gen_range(1..10);
        let b2 = rng.gen_range(1..10);
        let e1 = random_pure_expr(&mut rng, &mut store, b1, 0, &PRIMS);
        let e2 = random_pure_expr(&mut rng, &mut store, b2, 0, &PRIMS);
        let a = random_abstraction_of(&mut rng, &mut store, e1);
        if let Some(l) = lambda_unify(&mut store, a, e2) {
            let back = substitute(&mut store, &l, a).unwrap();
            assert_eq!(back, e2);
        }
    }
}

#[test]
fn golden_index_cases_under_a_binder() {
    // The three index regimes when pulling a subtree out of one lambda:
    // bound stays, outer drops by one, the peeled binder becomes shifted.
    let mut store = ExprStore::with_default_params();
    let a = store.parse("(lam (f ??0))").unwrap();
    for (target, expected) in [
        ("(lam (f (lam $0)))", "(lam $0)"),
        ("(lam (f (lam $2)))", "(lam $1)"),
        ("(lam (f (lam $1)))", "(lam #0)"),
    ] {
        let e = store.parse(target).unwrap();
        let l = lambda_unify(&mut store, a, e).expect("unifies");
        let bound = l.get(MapKey::Hole(0)).unwrap();
        assert_eq!(store.print(bound), expected, "for target {target}");
        let back = substitute(&mut store, &l, a).unwrap();
        assert_eq!(back, e);
    }
}

#[test]
fn merge_commutes_on_success_and_failure() {
    let mut rng = StdRng::seed_from_u64(31);
    let mut store = ExprStore::with_default_params();
    for _ in 0..2_000 {
        let mut l1 = Mapping::new();
        let mut l2 = Mapping::new();
        for l in [&mut l1, &mut l2] {
            for _ in 0..rng.gen_range(0..4) {
                let key = if rng.gen_bool(0.5) {
                    MapKey::AbsVar(rng.gen_range(0..3))
                } else {
                    MapKey::Hole(rng.gen_range(0..3))
                };
                let vb = rng.gen_range(1..4);
                let v = random_pure_expr(&mut rng, &mut store, vb, 0, &PRIMS);
                l.insert(key, v);
            }
        }
        let ab = merge(&l1, &l2);
        let ba = merge(&l2, &l1);
        assert_eq!(ab.is_some(), ba.is_some());
        if let (Some(ab), Some(ba)) = (ab, ba) {
            assert_eq!(ab, ba);
        }
    }
}

#[test]
fn print_parse_round_trip_on_random_expressions() {
    let mut rng = StdRng::seed_from_u64(37);
    let mut store = ExprStore::with_default_params();
    for _ in 0..5_000 {
        let budget = rng.gen_range(1..12);
        let e = if rng.gen_bool(0.5) {
            let d = rng.gen_range(0..3);
            random_wf_expr(&mut rng, &mut store, budget, d)
        } else {
            let base = random_pure_expr(&mut rng, &mut store, budget, 0, &PRIMS);
            random_abstraction_of(&mut rng, &mut store, base)
        };
        let printed = store.print(e);
        let back = store.parse(&printed).unwrap();
        assert_eq!(back, e, "round trip failed: {printed}");
    }
}

#[test]
fn cached_costs_match_direct_recursion() {
    use abstract_forge_core::expr::{Cost, Expr};
    fn direct(store: &ExprStore, id: abstract_forge_core::NodeId) -> Cost {
        let p = store.params();
        match store.node(id) {
            Expr::Lam(b) => p.cost_lam + direct(store, b),
            Expr::App(f, x) => p.cost_app + direct(store, f) + direct(store, x),
            Expr::Var(_) | Expr::ShiftedVar(_) => p.cost_var,
            Expr::Prim(s) => p.prim_cost(store.symbol_name(s)),
            Expr::AbsVar(_) => p.cost_absvar,
            Expr::Hole(_) => 0,
        }
    }
    let mut rng = StdRng::seed_from_u64(41);
    let mut store = ExprStore::with_default_params();
    for _ in 0..10_000 {
        let budget = rng.gen_range(1..14);
        let base = random_pure_expr(&mut rng, &mut store, budget, 1, &PRIMS);
        let e = if rng.gen_bool(0.3) {
            random_abstraction_of(&mut rng, &mut store, base)
        } else {
            base
        };
        assert_eq!(store.cost(e), direct(&store, e));
    }
}
