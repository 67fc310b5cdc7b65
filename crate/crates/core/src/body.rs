//! Owned abstraction-body terms.
//!
//! During search, partial-abstraction bodies are small owned trees rather
//! than interned nodes, so workers never write to the shared store. Bodies
//! are interned only once a winner is chosen. The structural matcher here
//! computes, for a body and a candidate subtree, the per-hole and
//! per-abstraction-variable bindings as *unshifted* in-program subtrees
//! tagged with the lambda depth they were captured under; the downshifted
//! form any binding would take in a unification mapping is recoverable by
//! applying that many depth-0 downshifts.

use crate::expr::{Cost, Expr, ExprStore, NodeId, Symbol};
use smallvec::SmallVec;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Lam(Box<Term>),
    App(Box<Term>, Box<Term>),
    Var(i32),
    Prim(Symbol),
    AbsVar(u16),
    Hole(u16),
}

impl Term {
    /// Convert an interned node (no shifted variables) into an owned term.
    pub fn from_node(store: &ExprStore, id: NodeId) -> Term {
        match store.node(id) {
            Expr::Lam(b) => Term::Lam(Box::new(Term::from_node(store, b))),
            Expr::App(f, x) => Term::App(
                Box::new(Term::from_node(store, f)),
                Box::new(Term::from_node(store, x)),
            ),
            Expr::Var(i) => Term::Var(i),
            Expr::Prim(s) => Term::Prim(s),
            Expr::AbsVar(i) => Term::AbsVar(i),
            Expr::Hole(i) => Term::Hole(i),
            Expr::ShiftedVar(_) => panic!("shifted variable in abstraction body"),
        }
    }

    pub fn intern(&self, store: &mut ExprStore) -> NodeId {
        match self {
            Term::Lam(b) => {
                let b = b.intern(store);
                store.lam(b)
            }
            Term::App(f, x) => {
                let f = f.intern(store);
                let x = x.intern(store);
                store.app(f, x)
            }
            Term::Var(i) => store.var(*i),
            Term::Prim(s) => store.intern(Expr::Prim(*s)),
            Term::AbsVar(i) => store.absvar(*i),
            Term::Hole(i) => store.hole(*i),
        }
    }

    pub fn cost(&self, store: &ExprStore) -> Cost {
        let p = store.params();
        match self {
            Term::Lam(b) => p.cost_lam + b.cost(store),
            Term::App(f, x) => p.cost_app + f.cost(store) + x.cost(store),
            Term::Var(_) => p.cost_var,
            Term::Prim(s) => p.prim_cost(store.symbol_name(*s)),
            Term::AbsVar(_) => p.cost_absvar,
            Term::Hole(_) => 0,
        }
    }

    /// Body cost with abstraction variables priced at zero.
    pub fn cost_star(&self, store: &ExprStore) -> Cost {
        let p = store.params();
        match self {
            Term::Lam(b) => p.cost_lam + b.cost_star(store),
            Term::App(f, x) => p.cost_app + f.cost_star(store) + x.cost_star(store),
            Term::Var(_) => p.cost_var,
            Term::Prim(s) => p.prim_cost(store.symbol_name(*s)),
            Term::AbsVar(_) => 0,
            Term::Hole(_) => 0,
        }
    }

    pub fn has_holes(&self) -> bool {
        match self {
            Term::Hole(_) => true,
            Term::Lam(b) => b.has_holes(),
            Term::App(f, x) => f.has_holes() || x.has_holes(),
            _ => false,
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Term::Lam(b) => 1 + b.node_count(),
            Term::App(f, x) => 1 + f.node_count() + x.node_count(),
            _ => 1,
        }
    }

    /// Replace the unique hole with the given id.
    pub fn replace_hole(&self, id: u16, replacement: &Term) -> Term {
        match self {
            Term::Hole(h) if *h == id => replacement.clone(),
            Term::Lam(b) => Term::Lam(Box::new(b.replace_hole(id, replacement))),
            Term::App(f, x) => Term::App(
                Box::new(f.replace_hole(id, replacement)),
                Box::new(x.replace_hole(id, replacement)),
            ),
            other => other.clone(),
        }
    }

    /// Occurrence count of each abstraction variable, indexed by id.
    pub fn absvar_usages(&self, arity: usize) -> SmallVec<[u32; 4]> {
        let mut usages = SmallVec::from_elem(0u32, arity);
        self.count_absvars(&mut usages);
        usages
    }

    fn count_absvars(&self, usages: &mut SmallVec<[u32; 4]>) {
        match self {
            Term::AbsVar(i) => usages[*i as usize] += 1,
            Term::Lam(b) => b.count_absvars(usages),
            Term::App(f, x) => {
                f.count_absvars(usages);
                x.count_absvars(usages);
            }
            _ => {}
        }
    }

    /// Lambda depth of the first (preorder) occurrence of each abstraction
    /// variable; the shift every argument of that variable was captured under.
    pub fn absvar_first_depths(&self, arity: usize) -> SmallVec<[u16; 4]> {
        let mut depths = SmallVec::from_elem(u16::MAX, arity);
        self.first_depths(0, &mut depths);
        debug_assert!(depths.iter().all(|&d| d != u16::MAX), "absvar ids not dense");
        depths
    }

    fn first_depths(&self, depth: u16, depths: &mut SmallVec<[u16; 4]>) {
        match self {
            Term::AbsVar(i) => {
                if depths[*i as usize] == u16::MAX {
                    depths[*i as usize] = depth;
                }
            }
            Term::Lam(b) => b.first_depths(depth + 1, depths),
            Term::App(f, x) => {
                f.first_depths(depth, depths);
                x.first_depths(depth, depths);
            }
            _ => {}
        }
    }

    /// Renumber abstraction variables into first-use (preorder) order.
    /// Returns the rewritten term and, per new id, the old id it replaces.
    pub fn canonicalize_absvars(&self, arity: usize) -> (Term, SmallVec<[u16; 4]>) {
        let mut old_of_new: SmallVec<[u16; 4]> = SmallVec::new();
        let mut new_of_old: SmallVec<[u16; 4]> = SmallVec::from_elem(u16::MAX, arity);
        let body = self.renumber(&mut old_of_new, &mut new_of_old);
        (body, old_of_new)
    }

    fn renumber(
        &self,
        old_of_new: &mut SmallVec<[u16; 4]>,
        new_of_old: &mut SmallVec<[u16; 4]>,
    ) -> Term {
        match self {
            Term::AbsVar(i) => {
                let slot = &mut new_of_old[*i as usize];
                if *slot == u16::MAX {
                    *slot = old_of_new.len() as u16;
                    old_of_new.push(*i);
                }
                Term::AbsVar(*slot)
            }
            Term::Lam(b) => Term::Lam(Box::new(b.renumber(old_of_new, new_of_old))),
            Term::App(f, x) => Term::App(
                Box::new(f.renumber(old_of_new, new_of_old)),
                Box::new(x.renumber(old_of_new, new_of_old)),
            ),
            other => other.clone(),
        }
    }

    pub fn display<'a>(&'a self, store: &'a ExprStore) -> TermDisplay<'a> {
        TermDisplay { term: self, store }
    }

    pub fn print(&self, store: &ExprStore) -> String {
        format!("{}", self.display(store))
    }
}

pub struct TermDisplay<'a> {
    term: &'a Term,
    store: &'a ExprStore,
}

impl fmt::Display for TermDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_term(self.term, self.store, f)
    }
}

fn write_term(t: &Term, store: &ExprStore, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match t {
        Term::Lam(b) => {
            write!(f, "(lam ")?;
            write_term(b, store, f)?;
            write!(f, ")")
        }
        Term::App(_, _) => {
            let mut spine = Vec::new();
            let mut cur = t;
            while let Term::App(g, x) = cur {
                spine.push(x.as_ref());
                cur = g;
            }
            write!(f, "(")?;
            write_term(cur, store, f)?;
            for x in spine.iter().rev() {
                write!(f, " ")?;
                write_term(x, store, f)?;
            }
            write!(f, ")")
        }
        Term::Var(i) => write!(f, "${i}"),
        Term::Prim(s) => write!(f, "{}", store.symbol_name(*s)),
        Term::AbsVar(i) => write!(f, "α{i}"),
        Term::Hole(i) => write!(f, "??{i}"),
    }
}

/// Structural equality of two subtrees after shifting each one's free
/// variables down by its own capture depth. Bound variables must agree
/// exactly; a free variable at index `w` normalizes to `w - k`.
pub fn eq_shifted(store: &ExprStore, a: NodeId, ka: u32, b: NodeId, kb: u32) -> bool {
    if ka == kb {
        return a == b;
    }
    eq_shifted_at(store, a, ka, b, kb, 0)
}

fn eq_shifted_at(store: &ExprStore, a: NodeId, ka: u32, b: NodeId, kb: u32, d: u32) -> bool {
    if ka == kb {
        return a == b;
    }
    match (store.node(a), store.node(b)) {
        (Expr::Lam(ba), Expr::Lam(bb)) => eq_shifted_at(store, ba, ka, bb, kb, d + 1),
        (Expr::App(fa, xa), Expr::App(fb, xb)) => {
            eq_shifted_at(store, fa, ka, fb, kb, d)
                && eq_shifted_at(store, xa, ka, xb, kb, d)
        }
        (Expr::Var(wa), Expr::Var(wb)) => {
            let (da, db) = (d as i32, d as i32);
            let bound_a = wa < da;
            let bound_b = wb < db;
            match (bound_a, bound_b) {
                (true, true) => wa == wb,
                (false, false) => wa as i64 - ka as i64 == wb as i64 - kb as i64,
                _ => false,
            }
        }
        (Expr::Prim(sa), Expr::Prim(sb)) => sa == sb,
        _ => false,
    }
}

/// Bindings of one match: for every hole `(hole id, unshifted subtree)` and
/// for every abstraction variable (indexed by id) the unshifted subtree plus
/// the lambda depth it sits under.
#[derive(Debug, Clone, Default)]
pub struct MatchBindings {
    pub holes: SmallVec<[(u16, NodeId); 4]>,
    pub absvars: SmallVec<[(NodeId, u16); 4]>,
}

/// Match a body against a subtree from scratch.
///
/// Succeeds exactly where lambda-aware unification succeeds with no shifted
/// variables in the abstraction-variable bindings: a variable binding whose
/// subtree refers to a lambda inside the body region is rejected, and
/// repeated abstraction variables must bind syntactically identical
/// (shift-normalized) subtrees.
pub fn match_body_at(
    store: &ExprStore,
    body: &Term,
    arity: usize,
    node: NodeId,
) -> Option<MatchBindings> {
    let mut b = MatchBindings {
        holes: SmallVec::new(),
        absvars: SmallVec::from_elem((NodeId::from_index(0), u16::MAX), arity),
    };
    if match_at(store, body, node, 0, &mut b) {
        Some(b)
    } else {
        None
    }
}

fn match_at(
    store: &ExprStore,
    body: &Term,
    node: NodeId,
    depth: u16,
    out: &mut MatchBindings,
) -> bool {
    match body {
        Term::Hole(id) => {
            out.holes.push((*id, node));
            true
        }
        Term::AbsVar(i) => {
            let slot = &mut out.absvars[*i as usize];
            if slot.1 == u16::MAX {
                // A binding may not refer to lambdas of the body region.
                if store.min_free_var(node).is_some_and(|f| f < depth as u32) {
                    return false;
                }
                *slot = (node, depth);
                true
            } else {
                let (prev, pd) = *slot;
                eq_shifted(store, prev, pd as u32, node, depth as u32)
            }
        }
        Term::Var(i) => store.node(node) == Expr::Var(*i),
        Term::Prim(s) => store.node(node) == Expr::Prim(*s),
        Term::Lam(b) => match store.node(node) {
            Expr::Lam(nb) => match_at(store, b, nb, depth + 1, out),
            _ => false,
        },
        Term::App(f, x) => match store.node(node) {
            Expr::App(nf, nx) => {
                match_at(store, f, nf, depth, out) && match_at(store, x, nx, depth, out)
            }
            _ => false,
        },
    }
}
