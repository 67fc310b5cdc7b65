//! Library learning by corpus-guided top-down abstraction search.
//!
//! Given a corpus of lambda-calculus programs, the engine synthesizes the
//! maximally-compressive function abstraction by a branch-and-bound top-down
//! search over partial abstraction bodies, rewrites the corpus with it, and
//! iterates to produce a library of abstractions plus a compressed corpus.

pub mod body;
pub mod compress;
pub mod corpus;
pub mod expr;
pub mod naive;
pub mod rewrite;
pub mod search;
pub mod synth;
pub mod unify;

pub use compress::{compress_iterated, Abstraction, CompressOutcome, LibraryResult};
pub use corpus::{Corpus, CorpusIndex, CorpusStats, Program};
pub use expr::{Cost, CostParams, Expr, ExprStore, NodeId, Symbol};
pub use search::{cts_search, SearchConfig, SearchOutcome, SearchStats, UtilityMode};
