//! Hash-consed lambda-calculus expressions with de Bruijn indices.
//!
//! Every expression lives in an [`ExprStore`] arena: structurally identical
//! subtrees always share one node id, so syntactic equality between subtrees
//! is a single id comparison. Nodes are immutable once interned and the arena
//! is append-only, which lets any number of readers walk it concurrently
//! while insertion happens in single-writer phases (parsing, rewriting).
//!
//! Surface syntax is s-expressions: `lam` introduces a lambda, `$i` is a
//! de Bruijn variable, `??`/`??j` is a hole, `αi` an abstraction variable,
//! `#i` a shifted variable (debug output only), and any other atom is a
//! primitive. Application is left-associated n-ary: `(f a b)` ≡ `((f a) b)`.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

/// Integer cost of an expression. Costs are exact integers so that
/// optimality comparisons never hinge on float ties.
pub type Cost = i64;

/// Id of an interned node in an [`ExprStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn from_index(i: usize) -> Self {
        NodeId(u32::try_from(i).expect("expression store overflow"))
    }
}

/// Interned primitive symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol(u32);

impl Symbol {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One node of the (partial-)abstraction grammar.
///
/// Programs use only `Lam`, `App`, `Var`, `Prim`. `AbsVar` is an abstraction
/// variable (α, β, … as α0, α1, …), `Hole` an unfinished subtree of a partial
/// abstraction, and `ShiftedVar` the `&i` form produced when a variable is
/// downshifted past its binder during inverse beta reduction. `ShiftedVar`
/// appears only inside unification mappings, never in programs or in final
/// abstraction bodies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Expr {
    Lam(NodeId),
    App(NodeId, NodeId),
    Var(i32),
    ShiftedVar(i32),
    Prim(Symbol),
    AbsVar(u16),
    Hole(u16),
}

/// Cost constants for the recursive cost function.
///
/// `cost(λ.e) = cost_lam + cost(e)`, `cost(e e') = cost_app + cost(e) +
/// cost(e')`, leaves cost their per-kind constant, and primitives may carry
/// per-symbol overrides. The starred variant used for abstraction bodies
/// prices abstraction variables at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub cost_lam: Cost,
    pub cost_app: Cost,
    pub cost_var: Cost,
    pub cost_absvar: Cost,
    pub cost_prim_default: Cost,
    pub cost_prim: HashMap<String, Cost>,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            cost_lam: 1,
            cost_app: 1,
            cost_var: 100,
            cost_absvar: 100,
            cost_prim_default: 100,
            cost_prim: HashMap::new(),
        }
    }
}

impl CostParams {
    pub fn prim_cost(&self, name: &str) -> Cost {
        self.cost_prim.get(name).copied().unwrap_or(self.cost_prim_default)
    }
}

pub const HAS_HOLE: u8 = 1;
pub const HAS_ABSVAR: u8 = 2;
pub const HAS_SHIFTED: u8 = 4;

/// Per-node caches computed at interning time.
#[derive(Debug, Clone)]
struct NodeInfo {
    cost: Cost,
    cost_star: Cost,
    terminals: u32,
    depth: u32,
    flags: u8,
    /// Sorted, deduplicated free de Bruijn indices of this subtree.
    free: Box<[u32]>,
}

/// Append-only arena of deduplicated expression nodes.
pub struct ExprStore {
    params: CostParams,
    nodes: Vec<Expr>,
    info: Vec<NodeInfo>,
    memo: HashMap<Expr, NodeId>,
    syms: Vec<String>,
    sym_memo: HashMap<String, Symbol>,
}

impl ExprStore {
    pub fn new(params: CostParams) -> Self {
        ExprStore {
            params,
            nodes: Vec::new(),
            info: Vec::new(),
            memo: HashMap::new(),
            syms: Vec::new(),
            sym_memo: HashMap::new(),
        }
    }

    pub fn with_default_params() -> Self {
        Self::new(CostParams::default())
    }

    pub fn params(&self) -> &CostParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn symbol(&mut self, name: &str) -> Symbol {
        if let Some(&s) = self.sym_memo.get(name) {
            return s;
        }
        let s = Symbol(u32::try_from(self.syms.len()).expect("symbol table overflow"));
        self.syms.push(name.to_owned());
        self.sym_memo.insert(name.to_owned(), s);
        s
    }

    pub fn symbol_name(&self, s: Symbol) -> &str {
        &self.syms[s.index()]
    }

    pub fn lookup_symbol(&self, name: &str) -> Option<Symbol> {
        self.sym_memo.get(name).copied()
    }

    /// Intern a node whose children (if any) are already interned.
    pub fn intern(&mut self, e: Expr) -> NodeId {
        if let Some(&id) = self.memo.get(&e) {
            return id;
        }
        let info = self.compute_info(e);
        let id = NodeId::from_index(self.nodes.len());
        self.nodes.push(e);
        self.info.push(info);
        self.memo.insert(e, id);
        id
    }

    fn compute_info(&self, e: Expr) -> NodeInfo {
        let p = &self.params;
        match e {
            Expr::Var(_) => NodeInfo {
                cost: p.cost_var,
                cost_star: p.cost_var,
                terminals: 1,
                depth: 0,
                flags: 0,
                free: match e {
                    Expr::Var(i) => Box::from([i as u32]),
                    _ => unreachable!(),
                },
            },
            Expr::ShiftedVar(_) => NodeInfo {
                cost: p.cost_var,
                cost_star: p.cost_var,
                terminals: 1,
                depth: 0,
                flags: HAS_SHIFTED,
                free: Box::from([]),
            },
            Expr::Prim(s) => {
                let c = p.prim_cost(&self.syms[s.index()]);
                NodeInfo { cost: c, cost_star: c, terminals: 1, depth: 0, flags: 0, free: Box::from([]) }
            }
            Expr::AbsVar(_) => NodeInfo {
                cost: p.cost_absvar,
                cost_star: 0,
                terminals: 1,
                depth: 0,
                flags: HAS_ABSVAR,
                free: Box::from([]),
            },
            Expr::Hole(_) => NodeInfo {
                cost: 0,
                cost_star: 0,
                terminals: 0,
                depth: 0,
                flags: HAS_HOLE,
                free: Box::from([]),
            },
            Expr::Lam(b) => {
                let bi = &self.info[b.index()];
                let free: Vec<u32> =
                    bi.free.iter().filter(|&&i| i > 0).map(|&i| i - 1).collect();
                NodeInfo {
                    cost: p.cost_lam + bi.cost,
                    cost_star: p.cost_lam + bi.cost_star,
                    terminals: bi.terminals,
                    depth: 1 + bi.depth,
                    flags: bi.flags,
                    free: free.into_boxed_slice(),
                }
            }
            Expr::App(f, x) => {
                let fi = &self.info[f.index()];
                let xi = &self.info[x.index()];
                let mut free: Vec<u32> = fi.free.iter().chain(xi.free.iter()).copied().collect();
                free.sort_unstable();
                free.dedup();
                NodeInfo {
                    cost: p.cost_app + fi.cost + xi.cost,
                    cost_star: p.cost_app + fi.cost_star + xi.cost_star,
                    terminals: fi.terminals + xi.terminals,
                    depth: 1 + fi.depth.max(xi.depth),
                    flags: fi.flags | xi.flags,
                    free: free.into_boxed_slice(),
                }
            }
        }
    }

    pub fn node(&self, id: NodeId) -> Expr {
        self.nodes[id.index()]
    }

    /// Cost under this store's params (abstraction variables at `cost_absvar`).
    pub fn cost(&self, id: NodeId) -> Cost {
        self.info[id.index()].cost
    }

    /// Starred cost: abstraction variables priced at zero.
    pub fn cost_star(&self, id: NodeId) -> Cost {
        self.info[id.index()].cost_star
    }

    /// Number of terminal leaves (`Prim` and `Var`; also counts the
    /// placeholder leaves, which never occur in programs).
    pub fn terminals(&self, id: NodeId) -> u32 {
        self.info[id.index()].terminals
    }

    /// Edges on the longest root-to-leaf path (a lone leaf has depth 0).
    pub fn depth(&self, id: NodeId) -> u32 {
        self.info[id.index()].depth
    }

    /// Sorted free de Bruijn indices of the subtree.
    pub fn free_vars(&self, id: NodeId) -> &[u32] {
        &self.info[id.index()].free
    }

    pub fn min_free_var(&self, id: NodeId) -> Option<u32> {
        self.info[id.index()].free.first().copied()
    }

    pub fn is_closed(&self, id: NodeId) -> bool {
        self.info[id.index()].free.is_empty()
    }

    pub fn flags(&self, id: NodeId) -> u8 {
        self.info[id.index()].flags
    }

    /// True for expressions from the program grammar: no holes, abstraction
    /// variables, or shifted variables.
    pub fn is_pure(&self, id: NodeId) -> bool {
        self.info[id.index()].flags == 0
    }

    /// A program is a pure, closed expression.
    pub fn is_program(&self, id: NodeId) -> bool {
        self.is_pure(id) && self.is_closed(id)
    }

    // Convenience constructors.
    pub fn lam(&mut self, b: NodeId) -> NodeId {
        self.intern(Expr::Lam(b))
    }
    pub fn app(&mut self, f: NodeId, x: NodeId) -> NodeId {
        self.intern(Expr::App(f, x))
    }
    pub fn var(&mut self, i: i32) -> NodeId {
        debug_assert!(i >= 0);
        self.intern(Expr::Var(i))
    }
    pub fn shifted_var(&mut self, i: i32) -> NodeId {
        self.intern(Expr::ShiftedVar(i))
    }
    pub fn prim(&mut self, name: &str) -> NodeId {
        let s = self.symbol(name);
        self.intern(Expr::Prim(s))
    }
    pub fn absvar(&mut self, i: u16) -> NodeId {
        self.intern(Expr::AbsVar(i))
    }
    pub fn hole(&mut self, i: u16) -> NodeId {
        self.intern(Expr::Hole(i))
    }

    /// Parse an s-expression into the store and return the root.
    pub fn parse(&mut self, text: &str) -> Result<NodeId, ParseError> {
        let tokens = tokenize(text);
        let mut pos = 0;
        let mut holes = 0u16;
        let id = self.parse_expr(&tokens, &mut pos, &mut holes)?;
        if pos != tokens.len() {
            return Err(ParseError::Trailing);
        }
        Ok(id)
    }

    fn parse_expr(
        &mut self,
        tokens: &[Token],
        pos: &mut usize,
        holes: &mut u16,
    ) -> Result<NodeId, ParseError> {
        match tokens.get(*pos) {
            None => Err(ParseError::Unbalanced),
            Some(Token::Close) => Err(ParseError::Unbalanced),
            Some(Token::Open) => {
                *pos += 1;
                if matches!(tokens.get(*pos), Some(Token::Atom(a)) if a == "lam") {
                    *pos += 1;
                    let body = self.parse_expr(tokens, pos, holes)?;
                    match tokens.get(*pos) {
                        Some(Token::Close) => {
                            *pos += 1;
                            Ok(self.lam(body))
                        }
                        Some(_) => Err(ParseError::MalformedLam),
                        None => Err(ParseError::Unbalanced),
                    }
                } else {
                    if matches!(tokens.get(*pos), Some(Token::Close)) {
                        return Err(ParseError::EmptyList);
                    }
                    let mut acc = self.parse_expr(tokens, pos, holes)?;
                    loop {
                        match tokens.get(*pos) {
                            Some(Token::Close) => {
                                *pos += 1;
                                return Ok(acc);
                            }
                            Some(_) => {
                                let arg = self.parse_expr(tokens, pos, holes)?;
                                acc = self.app(acc, arg);
                            }
                            None => return Err(ParseError::Unbalanced),
                        }
                    }
                }
            }
            Some(Token::Atom(a)) => {
                let a = a.clone();
                *pos += 1;
                self.parse_atom(&a, holes)
            }
        }
    }

    fn parse_atom(&mut self, a: &str, holes: &mut u16) -> Result<NodeId, ParseError> {
        if a == "lam" {
            return Err(ParseError::MalformedLam);
        }
        if let Some(rest) = a.strip_prefix('$') {
            let i: i32 = rest.parse().map_err(|_| ParseError::MalformedVar(a.to_owned()))?;
            if i < 0 {
                return Err(ParseError::MalformedVar(a.to_owned()));
            }
            return Ok(self.var(i));
        }
        if let Some(rest) = a.strip_prefix('#') {
            let i: i32 = rest.parse().map_err(|_| ParseError::MalformedVar(a.to_owned()))?;
            return Ok(self.shifted_var(i));
        }
        if let Some(rest) = a.strip_prefix("??") {
            let id = if rest.is_empty() {
                let id = *holes;
                *holes += 1;
                id
            } else {
                rest.parse().map_err(|_| ParseError::MalformedVar(a.to_owned()))?
            };
            return Ok(self.hole(id));
        }
        if let Some(rest) = a.strip_prefix('α') {
            let i: u16 = rest.parse().map_err(|_| ParseError::MalformedVar(a.to_owned()))?;
            return Ok(self.absvar(i));
        }
        Ok(self.prim(a))
    }

    /// Canonical printed form; `parse(print(e)) == e`.
    pub fn print(&self, id: NodeId) -> String {
        format!("{}", self.display(id))
    }

    pub fn display(&self, id: NodeId) -> DisplayExpr<'_> {
        DisplayExpr { store: self, id }
    }
}

/// Adapter printing a node in canonical surface syntax.
pub struct DisplayExpr<'a> {
    store: &'a ExprStore,
    id: NodeId,
}

impl fmt::Display for DisplayExpr<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self.store, self.id, f)
    }
}

fn write_expr(store: &ExprStore, id: NodeId, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match store.node(id) {
        Expr::Lam(b) => {
            write!(f, "(lam ")?;
            write_expr(store, b, f)?;
            write!(f, ")")
        }
        Expr::App(_, _) => {
            // Flatten the application spine into n-ary form.
            let mut spine = Vec::new();
            let mut cur = id;
            while let Expr::App(g, x) = store.node(cur) {
                spine.push(x);
                cur = g;
            }
            write!(f, "(")?;
            write_expr(store, cur, f)?;
            for x in spine.iter().rev() {
                write!(f, " ")?;
                write_expr(store, *x, f)?;
            }
            write!(f, ")")
        }
        Expr::Var(i) => write!(f, "${i}"),
        Expr::ShiftedVar(i) => write!(f, "#{i}"),
        Expr::Prim(s) => write!(f, "{}", store.symbol_name(s)),
        Expr::AbsVar(i) => write!(f, "α{i}"),
        Expr::Hole(i) => write!(f, "??{i}"),
    }
}

#[derive(Debug, Clone)]
enum Token {
    Open,
    Close,
    Atom(String),
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut atom = String::new();
    for c in text.chars() {
        match c {
            '(' | ')' => {
                if !atom.is_empty() {
                    tokens.push(Token::Atom(std::mem::take(&mut atom)));
                }
                tokens.push(if c == '(' { Token::Open } else { Token::Close });
            }
            c if c.is_whitespace() => {
                if !atom.is_empty() {
                    tokens.push(Token::Atom(std::mem::take(&mut atom)));
                }
            }
            c => atom.push(c),
        }
    }
    if !atom.is_empty() {
        tokens.push(Token::Atom(atom));
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unbalanced parentheses")]
    Unbalanced,
    #[error("empty list")]
    EmptyList,
    #[error("malformed variable `{0}`")]
    MalformedVar(String),
    #[error("`lam` takes exactly one body expression")]
    MalformedLam,
    #[error("unexpected trailing input")]
    Trailing,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_builds_left_associated_applications() {
        let mut s = ExprStore::with_default_params();
        let id = s.parse("(+ 3 2)").unwrap();
        let plus = s.prim("+");
        let three = s.prim("3");
        let two = s.prim("2");
        let inner = s.app(plus, three);
        let expected = s.app(inner, two);
        assert_eq!(id, expected);
    }

    #[test]
    fn parse_lambda_and_vars() {
        let mut s = ExprStore::with_default_params();
        let id = s.parse("(lam (+ $0 3))").unwrap();
        let plus = s.prim("+");
        let v0 = s.var(0);
        let three = s.prim("3");
        let a = s.app(plus, v0);
        let b = s.app(a, three);
        let expected = s.lam(b);
        assert_eq!(id, expected);
    }

    #[test]
    fn parse_overview_program() {
        let mut s = ExprStore::with_default_params();
        let id = s.parse("(lam (+ 3 (* (+ 2 4) 2)))").unwrap();
        assert!(s.is_program(id));
        assert_eq!(s.cost(id), 707);
    }

    #[test]
    fn costs_match_recursive_definition() {
        let mut s = ExprStore::with_default_params();
        let three = s.parse("3").unwrap();
        assert_eq!(s.cost(three), 100);
        let e = s.parse("(+ 3 2)").unwrap();
        assert_eq!(s.cost(e), 302);
    }

    #[test]
    fn cost_star_zeroes_absvars() {
        let mut s = ExprStore::with_default_params();
        let e = s.parse("(+ 3 (* α0 α1))").unwrap();
        assert_eq!(s.cost_star(e), 304);
        assert_eq!(s.cost(e), 504);
    }

    #[test]
    fn hash_consing_dedups() {
        let mut s = ExprStore::with_default_params();
        let a = s.parse("(+ 3 (* 2 2))").unwrap();
        let b = s.parse("(+ 3 (* 2 2))").unwrap();
        assert_eq!(a, b);
        let c = s.parse("(+ 3 (* 2 3))").unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn print_parse_round_trip() {
        let mut s = ExprStore::with_default_params();
        for src in [
            "(+ 3 2)",
            "(lam (+ 3 (* (+ 2 4) 2)))",
            "(lam (map (lam (+ 3 (* 4 (+ 3 $0)))) $0))",
            "(+ 3 (* α0 α1))",
            "(lam (f ??0))",
            "(lam #-1)",
            "3",
        ] {
            let id = s.parse(src).unwrap();
            let printed = s.print(id);
            let reparsed = s.parse(&printed).unwrap();
            assert_eq!(id, reparsed, "round trip failed for {src} -> {printed}");
        }
    }

    #[test]
    fn parse_errors() {
        let mut s = ExprStore::with_default_params();
        assert!(matches!(s.parse("(+ 3"), Err(ParseError::Unbalanced)));
        assert!(matches!(s.parse("()"), Err(ParseError::EmptyList)));
        assert!(matches!(s.parse("$x"), Err(ParseError::MalformedVar(_))));
        assert!(matches!(s.parse("$-1"), Err(ParseError::MalformedVar(_))));
        assert!(matches!(s.parse("(+ 1) (+ 2)"), Err(ParseError::Trailing)));
        assert!(matches!(s.parse("(lam)"), Err(ParseError::Unbalanced) | Err(ParseError::MalformedLam)));
    }

    #[test]
    fn free_vars_track_binders() {
        let mut s = ExprStore::with_default_params();
        let open = s.parse("(+ $0 $2)").unwrap();
        assert_eq!(s.free_vars(open), &[0, 2]);
        let l = s.lam(open);
        assert_eq!(s.free_vars(l), &[1]);
        let closed = s.parse("(lam (lam (lam (+ $0 $2))))").unwrap();
        assert!(s.is_closed(closed));
    }

    #[test]
    fn depth_counts_edges() {
        let mut s = ExprStore::with_default_params();
        let leaf = s.parse("3").unwrap();
        assert_eq!(s.depth(leaf), 0);
        let e = s.parse("(+ 3 2)").unwrap();
        assert_eq!(s.depth(e), 2);
        let l = s.parse("(lam $0)").unwrap();
        assert_eq!(s.depth(l), 1);
        assert_eq!(s.terminals(l), 1);
    }
}
