//! Corpora of programs, their JSON encoding, summary statistics, and the
//! occurrence indexes the search consumes.
//!
//! A corpus is an ordered list of closed programs sharing one [`ExprStore`].
//! Each program belongs to a task; datasets that don't group programs into
//! tasks get a unique task per program.

use crate::expr::{Cost, Expr, ExprStore, NodeId, ParseError};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct Program {
    pub root: NodeId,
    pub task: String,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub programs: Vec<Program>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("program {index}: {source}")]
    Parse {
        index: usize,
        #[source]
        source: ParseError,
    },
    #[error("invalid corpus JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("corpus JSON must be an array of s-expression strings or {{\"programs\": [...]}}")]
    BadShape,
    #[error("program {0} is not closed")]
    OpenProgram(usize),
    #[error("program {0} contains non-program syntax")]
    NotAProgram(usize),
}

/// Summary statistics over a corpus: program count, mean number of terminal
/// symbols, and mean depth (edges on the longest root-to-leaf path).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub count: usize,
    pub mean_length: f64,
    pub mean_depth: f64,
}

impl Corpus {
    pub fn new(programs: Vec<Program>) -> Self {
        Corpus { programs }
    }

    /// Parse a corpus from source strings, assigning each program its own task.
    pub fn from_sources<S: AsRef<str>>(
        store: &mut ExprStore,
        sources: &[S],
    ) -> Result<Self, CorpusError> {
        let entries: Vec<(&str, Option<String>)> =
            sources.iter().map(|s| (s.as_ref(), None)).collect();
        Self::from_entries(store, entries)
    }

    /// Accepts either a flat JSON array of s-expression strings or
    /// `{"programs": [{"body": "...", "task": "..."}]}` (task optional).
    pub fn from_json(store: &mut ExprStore, text: &str) -> Result<Self, CorpusError> {
        let value: Value = serde_json::from_str(text)?;
        let mut entries: Vec<(String, Option<String>)> = Vec::new();
        match &value {
            Value::Array(items) => {
                for item in items {
                    match item {
                        Value::String(s) => entries.push((s.clone(), None)),
                        _ => return Err(CorpusError::BadShape),
                    }
                }
            }
            Value::Object(map) => {
                let programs = map.get("programs").ok_or(CorpusError::BadShape)?;
                let items = programs.as_array().ok_or(CorpusError::BadShape)?;
                for item in items {
                    let obj = item.as_object().ok_or(CorpusError::BadShape)?;
                    let body = obj
                        .get("body")
                        .and_then(Value::as_str)
                        .ok_or(CorpusError::BadShape)?;
                    let task = obj.get("task").and_then(Value::as_str).map(str::to_owned);
                    entries.push((body.to_owned(), task));
                }
            }
            _ => return Err(CorpusError::BadShape),
        }
        let entries: Vec<(&str, Option<String>)> =
            entries.iter().map(|(b, t)| (b.as_str(), t.clone())).collect();
        Self::from_entries(store, entries)
    }

    fn from_entries(
        store: &mut ExprStore,
        entries: Vec<(&str, Option<String>)>,
    ) -> Result<Self, CorpusError> {
        let mut programs = Vec::with_capacity(entries.len());
        for (index, (src, task)) in entries.into_iter().enumerate() {
            let root = store
                .parse(src)
                .map_err(|source| CorpusError::Parse { index, source })?;
            if !store.is_pure(root) {
                return Err(CorpusError::NotAProgram(index));
            }
            if !store.is_closed(root) {
                return Err(CorpusError::OpenProgram(index));
            }
            let task = task.unwrap_or_else(|| format!("task_{index}"));
            programs.push(Program { root, task });
        }
        Ok(Corpus { programs })
    }

    pub fn to_json(&self, store: &ExprStore) -> Value {
        let programs: Vec<Value> = self
            .programs
            .iter()
            .map(|p| {
                serde_json::json!({
                    "body": store.print(p.root),
                    "task": p.task,
                })
            })
            .collect();
        serde_json::json!({ "programs": programs })
    }

    pub fn total_cost(&self, store: &ExprStore) -> Cost {
        self.programs.iter().map(|p| store.cost(p.root)).sum()
    }

    pub fn stats(&self, store: &ExprStore) -> CorpusStats {
        let count = self.programs.len();
        if count == 0 {
            return CorpusStats { count: 0, mean_length: 0.0, mean_depth: 0.0 };
        }
        let total_len: u64 = self.programs.iter().map(|p| store.terminals(p.root) as u64).sum();
        let total_depth: u64 = self.programs.iter().map(|p| store.depth(p.root) as u64).sum();
        CorpusStats {
            count,
            mean_length: total_len as f64 / count as f64,
            mean_depth: total_depth as f64 / count as f64,
        }
    }

    /// Iterate every subtree occurrence of every program, in program order
    /// and preorder within a program. Shared structure is reported once per
    /// occurrence.
    pub fn subtree_occurrences<'a>(
        &'a self,
        store: &'a ExprStore,
    ) -> impl Iterator<Item = (usize, NodeId)> + 'a {
        self.programs.iter().enumerate().flat_map(move |(pid, p)| {
            SubtreeIter { store, stack: vec![p.root] }.map(move |n| (pid, n))
        })
    }
}

struct SubtreeIter<'a> {
    store: &'a ExprStore,
    stack: Vec<NodeId>,
}

impl Iterator for SubtreeIter<'_> {
    type Item = NodeId;

    fn next(&mut self) -> Option<NodeId> {
        let id = self.stack.pop()?;
        match self.store.node(id) {
            Expr::Lam(b) => self.stack.push(b),
            Expr::App(f, x) => {
                // Preorder: visit the function side before the argument.
                self.stack.push(x);
                self.stack.push(f);
            }
            _ => {}
        }
        Some(id)
    }
}

/// Which tasks a subtree occurs in: none, exactly one, or several.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskSpan {
    None,
    One(u32),
    Many,
}

impl TaskSpan {
    fn add(&mut self, task: u32) {
        *self = match *self {
            TaskSpan::None => TaskSpan::One(task),
            TaskSpan::One(t) if t == task => TaskSpan::One(t),
            _ => TaskSpan::Many,
        };
    }
}

/// Precomputed occurrence data for one corpus snapshot. Rebuilt after every
/// rewrite; read-only during a search.
///
/// Occurrences in function position (the left side of an application) can be
/// matched but never rewritten: replacing the callee of an explicit
/// application with a zero-arity primitive would abstract a partial
/// application, which the compression objective never profits from here.
/// Bounds and utilities therefore weight matches by *eligible* occurrences.
pub struct CorpusIndex {
    /// Distinct subtree ids, ascending (children precede parents).
    pub unique: Vec<NodeId>,
    /// Total occurrence count per node id (zero for nodes outside the corpus).
    pub occurrences: Vec<u32>,
    /// Occurrences not in function position: the rewritable ones.
    pub eligible: Vec<u32>,
    /// Per node id: (program, eligible occurrences in it), program-ascending.
    pub node_programs: Vec<Vec<(u32, u32)>>,
    /// Task span per node id.
    pub task_span: Vec<TaskSpan>,
    /// Dense task id per program.
    pub task_of_program: Vec<u32>,
    pub num_tasks: usize,
    /// Programs grouped by task id.
    pub programs_of_task: Vec<Vec<u32>>,
    pub program_costs: Vec<Cost>,
    pub total_cost: Cost,
}

impl CorpusIndex {
    pub fn build(store: &ExprStore, corpus: &Corpus) -> Self {
        let n = store.len();
        let mut occurrences = vec![0u32; n];
        let mut eligible = vec![0u32; n];
        let mut task_span = vec![TaskSpan::None; n];
        let mut per_program: Vec<HashMap<NodeId, u32>> = Vec::with_capacity(corpus.programs.len());

        let mut task_ids: HashMap<&str, u32> = HashMap::new();
        let mut task_of_program = Vec::with_capacity(corpus.programs.len());
        for p in &corpus.programs {
            let next = task_ids.len() as u32;
            let t = *task_ids.entry(p.task.as_str()).or_insert(next);
            task_of_program.push(t);
        }
        let num_tasks = task_ids.len();
        let mut programs_of_task = vec![Vec::new(); num_tasks];
        for (pid, &t) in task_of_program.iter().enumerate() {
            programs_of_task[t as usize].push(pid as u32);
        }

        for (pid, p) in corpus.programs.iter().enumerate() {
            let task = task_of_program[pid];
            let mut counts: HashMap<NodeId, u32> = HashMap::new();
            // (node, in function position)
            let mut stack = vec![(p.root, false)];
            while let Some((id, fun_pos)) = stack.pop() {
                occurrences[id.index()] += 1;
                task_span[id.index()].add(task);
                if !fun_pos {
                    eligible[id.index()] += 1;
                    *counts.entry(id).or_insert(0) += 1;
                }
                match store.node(id) {
                    Expr::Lam(b) => stack.push((b, false)),
                    Expr::App(f, x) => {
                        stack.push((f, true));
                        stack.push((x, false));
                    }
                    _ => {}
                }
            }
            per_program.push(counts);
        }

        let mut unique: Vec<NodeId> = (0..n)
            .filter(|&i| occurrences[i] > 0)
            .map(NodeId::from_index)
            .collect();
        unique.sort_unstable();

        let mut node_programs: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n];
        for (pid, counts) in per_program.iter().enumerate() {
            for (&id, &c) in counts {
                node_programs[id.index()].push((pid as u32, c));
            }
        }
        for list in &mut node_programs {
            list.sort_unstable();
        }

        let program_costs: Vec<Cost> = corpus.programs.iter().map(|p| store.cost(p.root)).collect();
        let total_cost = program_costs.iter().sum();

        CorpusIndex {
            unique,
            occurrences,
            eligible,
            node_programs,
            task_span,
            task_of_program,
            num_tasks,
            programs_of_task,
            program_costs,
            total_cost,
        }
    }

    pub fn occ(&self, id: NodeId) -> u32 {
        self.occurrences.get(id.index()).copied().unwrap_or(0)
    }

    /// Occurrences where a rewrite may take place (not in function position).
    pub fn occ_eligible(&self, id: NodeId) -> u32 {
        self.eligible.get(id.index()).copied().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

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

    #[test]
    fn stats_on_singletons() {
        let mut s = ExprStore::with_default_params();
        let c = Corpus::from_sources(&mut s, &["3"]).unwrap();
        let st = c.stats(&s);
        assert_eq!(st.count, 1);
        assert_eq!(st.mean_length, 1.0);
        assert_eq!(st.mean_depth, 0.0);

        let c = Corpus::from_sources(&mut s, &["(+ 3 2)"]).unwrap();
        let st = c.stats(&s);
        assert_eq!(st.mean_length, 3.0);
        assert_eq!(st.mean_depth, 2.0);

        let c = Corpus::from_sources(&mut s, &["(lam $0)"]).unwrap();
        let st = c.stats(&s);
        assert_eq!(st.mean_length, 1.0);
        assert_eq!(st.mean_depth, 1.0);
    }

    #[test]
    fn empty_corpus_stats_are_zero() {
        let s = ExprStore::with_default_params();
        let c = Corpus::default();
        let st = c.stats(&s);
        assert_eq!(st, CorpusStats { count: 0, mean_length: 0.0, mean_depth: 0.0 });
    }

    #[test]
    fn subtree_occurrences_enumerates_each_occurrence() {
        let mut s = ExprStore::with_default_params();
        let c = Corpus::from_sources(&mut s, &["3"]).unwrap();
        assert_eq!(c.subtree_occurrences(&s).count(), 1);

        let c = Corpus::from_sources(&mut s, &["(+ 3 2)"]).unwrap();
        let occs: Vec<_> = c.subtree_occurrences(&s).collect();
        // root, (+ 3), +, 3, 2
        assert_eq!(occs.len(), 5);

        // Shared structure is reported once per occurrence.
        let c = Corpus::from_sources(&mut s, &["(+ 2 2)"]).unwrap();
        let occs: Vec<_> = c.subtree_occurrences(&s).collect();
        assert_eq!(occs.len(), 5);
    }

    #[test]
    fn overview_corpus_contains_the_four_plus3_subtrees() {
        let mut s = ExprStore::with_default_params();
        let c = overview(&mut s);
        let index = CorpusIndex::build(&s, &c);
        // All four `(+ 3 _)`-headed subtrees. Collect matches of the shape by hand:
        let heads: Vec<NodeId> = index
            .unique
            .iter()
            .copied()
            .filter(|&n| {
                if let Expr::App(f, _) = s.node(n) {
                    s.print(f).starts_with("(+ 3") || s.print(f) == "(+ 3)"
                } else {
                    false
                }
            })
            .collect();
        let costs: Vec<Cost> = heads.iter().map(|&n| s.cost(n)).collect();
        let mut sorted = costs.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![302, 706, 706, 706]);
    }

    #[test]
    fn json_forms() {
        let mut s = ExprStore::with_default_params();
        let c = Corpus::from_json(&mut s, r#"["(+ 3 2)", "(lam $0)"]"#).unwrap();
        assert_eq!(c.programs.len(), 2);
        assert_eq!(c.programs[0].task, "task_0");

        let c = Corpus::from_json(
            &mut s,
            r#"{"programs": [{"body": "(+ 3 2)", "task": "a"}, {"body": "(+ 3 2)"}]}"#,
        )
        .unwrap();
        assert_eq!(c.programs[0].task, "a");
        assert_eq!(c.programs[1].task, "task_1");
        assert_eq!(c.programs[0].root, c.programs[1].root);

        assert!(Corpus::from_json(&mut s, r#"{"nope": 1}"#).is_err());
        assert!(matches!(
            Corpus::from_json(&mut s, r#"["$0"]"#),
            Err(CorpusError::OpenProgram(0))
        ));
    }

    #[test]
    fn index_counts_occurrences_and_tasks() {
        let mut s = ExprStore::with_default_params();
        let c = Corpus::from_sources(&mut s, &["(* (+ 2 4) 1)", "(* (+ 2 4) 5)"]).unwrap();
        let index = CorpusIndex::build(&s, &c);
        let sub = s.parse("(+ 2 4)").unwrap();
        assert_eq!(index.occ(sub), 2);
        assert_eq!(index.task_span[sub.index()], TaskSpan::Many);
        let one = s.parse("1").unwrap();
        assert_eq!(index.task_span[one.index()], TaskSpan::One(0));
        assert_eq!(index.num_tasks, 2);
    }
}
