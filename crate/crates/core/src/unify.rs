//! Lambda-aware unification of (partial) abstraction bodies against program
//! subtrees, plus the shift operators and substitution it is defined by.
//!
//! `lambda_unify(a, e)` produces a mapping from abstraction variables and
//! holes to expressions such that substituting the mapping back into `a`
//! reproduces `e` exactly. Raising a subtree out of a lambda during this
//! inverse beta reduction downshifts its variables; a variable downshifted
//! past its own binder becomes the shifted form `&i` (printed `#i`), possibly
//! with a negative index. Shifted variables are legal inside hole bindings
//! but locations whose abstraction-variable bindings contain them are
//! discarded by the matcher.
//!
//! The rules are syntax-directed, so unification is a deterministic
//! structural recursion with no backtracking. Identity on pure subterms is
//! checked first; hash-consing makes that a node-id comparison.

use crate::expr::{Expr, ExprStore, NodeId, HAS_SHIFTED};
use std::collections::BTreeMap;
use thiserror::Error;

/// Key of a unification binding: abstraction variable or hole.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MapKey {
    AbsVar(u16),
    Hole(u16),
}

/// Partial map from abstraction variables and holes to expressions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Mapping(pub BTreeMap<MapKey, NodeId>);

impl Mapping {
    pub fn new() -> Self {
        Mapping(BTreeMap::new())
    }

    pub fn get(&self, key: MapKey) -> Option<NodeId> {
        self.0.get(&key).copied()
    }

    pub fn insert(&mut self, key: MapKey, value: NodeId) {
        self.0.insert(key, value);
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// No shifted variables in expressions bound to abstraction variables.
    /// Locations violating this are discarded by the matcher.
    pub fn valid_for_matching(&self, store: &ExprStore) -> bool {
        self.0.iter().all(|(k, &v)| match k {
            MapKey::AbsVar(_) => store.flags(v) & HAS_SHIFTED == 0,
            MapKey::Hole(_) => true,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubstError {
    #[error("unbound abstraction variable α{0}")]
    UnboundAbsVar(u16),
    #[error("unbound hole ??{0}")]
    UnboundHole(u16),
}

/// Downshift at depth `d`: lambdas increment the depth; `$i` stays put below
/// the depth, decrements above it, and becomes `&(i-1)` exactly at it; `&i`
/// always decrements. Total on every expression.
pub fn downshift(store: &mut ExprStore, e: NodeId, d: u32) -> NodeId {
    match store.node(e) {
        Expr::Lam(b) => {
            let b2 = downshift(store, b, d + 1);
            store.lam(b2)
        }
        Expr::App(f, x) => {
            let f2 = downshift(store, f, d);
            let x2 = downshift(store, x, d);
            store.app(f2, x2)
        }
        Expr::Var(i) => {
            let d = d as i32;
            if i < d {
                e
            } else if i > d {
                store.var(i - 1)
            } else {
                store.shifted_var(i - 1)
            }
        }
        Expr::ShiftedVar(i) => store.shifted_var(i - 1),
        Expr::Prim(_) | Expr::AbsVar(_) | Expr::Hole(_) => e,
    }
}

/// Inverse of [`downshift`] on well-formed expressions: `$i` increments at or
/// above the depth; `&i` becomes `$(i+1)` exactly when `i + 1 = d`, else
/// stays shifted.
pub fn upshift(store: &mut ExprStore, e: NodeId, d: u32) -> NodeId {
    match store.node(e) {
        Expr::Lam(b) => {
            let b2 = upshift(store, b, d + 1);
            store.lam(b2)
        }
        Expr::App(f, x) => {
            let f2 = upshift(store, f, d);
            let x2 = upshift(store, x, d);
            store.app(f2, x2)
        }
        Expr::Var(i) => {
            if i >= d as i32 {
                store.var(i + 1)
            } else {
                e
            }
        }
        Expr::ShiftedVar(i) => {
            if i + 1 == d as i32 {
                store.var(i + 1)
            } else {
                store.shifted_var(i + 1)
            }
        }
        Expr::Prim(_) | Expr::AbsVar(_) | Expr::Hole(_) => e,
    }
}

fn downshift_all(store: &mut ExprStore, m: &Mapping) -> Mapping {
    let mut out = Mapping::new();
    for (&k, &v) in &m.0 {
        let v2 = downshift(store, v, 0);
        out.insert(k, v2);
    }
    out
}

fn upshift_all(store: &mut ExprStore, m: &Mapping) -> Mapping {
    let mut out = Mapping::new();
    for (&k, &v) in &m.0 {
        let v2 = upshift(store, v, 0);
        out.insert(k, v2);
    }
    out
}

/// Union of two mappings; fails iff some key is bound to structurally
/// distinct expressions in both.
pub fn merge(l1: &Mapping, l2: &Mapping) -> Option<Mapping> {
    let mut out = l1.clone();
    for (&k, &v) in &l2.0 {
        match out.get(k) {
            Some(existing) if existing != v => return None,
            Some(_) => {}
            None => out.insert(k, v),
        }
    }
    Some(out)
}

/// Modified beta reduction: replace abstraction variables and holes in
/// `body` by their bindings, upshifting the whole mapping each time the
/// recursion enters a lambda.
pub fn substitute(store: &mut ExprStore, l: &Mapping, body: NodeId) -> Result<NodeId, SubstError> {
    match store.node(body) {
        Expr::Lam(b) => {
            let lifted = upshift_all(store, l);
            let b2 = substitute(store, &lifted, b)?;
            Ok(store.lam(b2))
        }
        Expr::App(f, x) => {
            let f2 = substitute(store, l, f)?;
            let x2 = substitute(store, l, x)?;
            Ok(store.app(f2, x2))
        }
        Expr::Var(_) | Expr::ShiftedVar(_) | Expr::Prim(_) => Ok(body),
        Expr::AbsVar(i) => l.get(MapKey::AbsVar(i)).ok_or(SubstError::UnboundAbsVar(i)),
        Expr::Hole(i) => l.get(MapKey::Hole(i)).ok_or(SubstError::UnboundHole(i)),
    }
}

/// Unify a (partial) abstraction body `a` against a pure expression `e`.
///
/// On success the returned mapping `l` satisfies `substitute(l, a) == e`.
/// Fails on head-form mismatch or when the same variable would bind two
/// distinct expressions.
pub fn lambda_unify(store: &mut ExprStore, a: NodeId, e: NodeId) -> Option<Mapping> {
    debug_assert!(store.is_pure(e), "unification target must be a pure expression");
    // Identity of pure subterms: one id comparison thanks to hash-consing.
    if store.flags(a) == 0 {
        return if a == e { Some(Mapping::new()) } else { None };
    }
    match (store.node(a), store.node(e)) {
        (Expr::AbsVar(i), _) => {
            let mut m = Mapping::new();
            m.insert(MapKey::AbsVar(i), e);
            Some(m)
        }
        (Expr::Hole(i), _) => {
            let mut m = Mapping::new();
            m.insert(MapKey::Hole(i), e);
            Some(m)
        }
        (Expr::App(a1, a2), Expr::App(e1, e2)) => {
            let l1 = lambda_unify(store, a1, e1)?;
            let l2 = lambda_unify(store, a2, e2)?;
            merge(&l1, &l2)
        }
        (Expr::Lam(ab), Expr::Lam(eb)) => {
            let l = lambda_unify(store, ab, eb)?;
            Some(downshift_all(store, &l))
        }
        _ => None,
    }
}

/// Well-formedness at depth `d`: shifted variables must point at one of the
/// `d` enclosing shift levels (`&i` with `i < d`); everything else is always
/// well-formed.
pub fn well_formed(store: &ExprStore, e: NodeId, d: u32) -> bool {
    // Fast path: no shifted variables anywhere.
    if store.flags(e) & HAS_SHIFTED == 0 {
        return true;
    }
    match store.node(e) {
        Expr::Lam(b) => well_formed(store, b, d + 1),
        Expr::App(f, x) => well_formed(store, f, d) && well_formed(store, x, d),
        Expr::ShiftedVar(i) => i < d as i32,
        _ => true,
    }
}

/// Every expression in the mapping is well-formed at depth 0.
pub fn mapping_well_formed(store: &ExprStore, m: &Mapping) -> bool {
    m.0.values().all(|&v| well_formed(store, v, 0))
}
