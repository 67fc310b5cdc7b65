//! Deterministic generator for hierarchical synthetic corpora.
//!
//! Programs are built by composing a small set of planted motifs (shared
//! tree templates with slots), so generated corpora contain genuinely
//! repeated, nested structure for the learner to find. The same seed always
//! produces the same corpus.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[derive(Debug, Clone)]
pub struct GenParams {
    pub programs: usize,
    /// Target mean number of terminal symbols per program.
    pub mean_length: usize,
    /// How deeply motifs nest inside each other.
    pub nesting: usize,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { programs: 50, mean_length: 40, nesting: 3, seed: 0 }
    }
}

const OPS: [&str; 5] = ["spin", "ring", "seg", "join", "fold"];
const CONSTS: [&str; 8] = ["c0", "c1", "c2", "c3", "c4", "c5", "c6", "c7"];

#[derive(Debug, Clone)]
enum Motif {
    Op(usize, Vec<Motif>),
    Const(usize),
    Slot,
}

impl Motif {
    fn slots(&self) -> usize {
        match self {
            Motif::Slot => 1,
            Motif::Const(_) => 0,
            Motif::Op(_, kids) => kids.iter().map(Motif::slots).sum(),
        }
    }

    fn terminals(&self) -> usize {
        match self {
            Motif::Slot => 0,
            Motif::Const(_) => 1,
            Motif::Op(_, kids) => 1 + kids.iter().map(Motif::terminals).sum::<usize>(),
        }
    }
}

fn gen_motif(rng: &mut StdRng, size: usize) -> Motif {
    if size <= 1 {
        return if rng.gen_bool(0.5) { Motif::Slot } else { Motif::Const(rng.gen_range(0..CONSTS.len())) };
    }
    let op = rng.gen_range(0..OPS.len());
    let nkids = rng.gen_range(2..=3.min(size));
    let mut remaining = size - 1;
    let mut kids = Vec::new();
    for i in 0..nkids {
        let share = if i + 1 == nkids { remaining } else { rng.gen_range(1..=remaining.max(1)) };
        remaining = remaining.saturating_sub(share);
        kids.push(gen_motif(rng, share.max(1)));
    }
    Motif::Op(op, kids)
}

struct Gen<'a> {
    rng: &'a mut StdRng,
    motifs: Vec<Motif>,
    nesting: usize,
}

impl Gen<'_> {
    /// Build an expression with roughly `budget` terminal symbols.
    fn grow(&mut self, budget: usize, lam_depth: u32, nest: usize) -> String {
        if budget <= 1 {
            return self.leaf(lam_depth);
        }
        let roll: f64 = self.rng.gen();
        if roll < 0.55 && nest > 0 {
            // Instantiate a motif, filling slots recursively.
            let mi = self.rng.gen_range(0..self.motifs.len());
            let motif = self.motifs[mi].clone();
            let fixed = motif.terminals();
            let nslots = motif.slots();
            let spare = budget.saturating_sub(fixed);
            let mut shares = vec![0usize; nslots];
            if nslots > 0 {
                for _ in 0..spare {
                    let i = self.rng.gen_range(0..nslots);
                    shares[i] += 1;
                }
            }
            let mut idx = 0;
            self.render(&motif, &mut idx, &shares, lam_depth, nest - 1)
        } else if roll < 0.62 && lam_depth < 3 {
            let body = self.grow(budget, lam_depth + 1, nest);
            format!("(lam {body})")
        } else {
            let op = OPS[self.rng.gen_range(0..OPS.len())];
            let left = budget / 2;
            let right = budget - left - 1;
            let a = self.grow(left.max(1), lam_depth, nest);
            let b = self.grow(right.max(1), lam_depth, nest);
            format!("({op} {a} {b})")
        }
    }

    fn render(
        &mut self,
        m: &Motif,
        slot_idx: &mut usize,
        shares: &[usize],
        lam_depth: u32,
        nest: usize,
    ) -> String {
        match m {
            Motif::Const(c) => CONSTS[*c].to_owned(),
            Motif::Slot => {
                let budget = shares[*slot_idx];
                *slot_idx += 1;
                self.grow(budget.max(1), lam_depth, nest)
            }
            Motif::Op(op, kids) => {
                let mut parts = vec![OPS[*op].to_owned()];
                for k in kids {
                    parts.push(self.render(k, slot_idx, shares, lam_depth, nest));
                }
                format!("({})", parts.join(" "))
            }
        }
    }

    fn leaf(&mut self, lam_depth: u32) -> String {
        if lam_depth > 0 && self.rng.gen_bool(0.3) {
            format!("${}", self.rng.gen_range(0..lam_depth))
        } else {
            CONSTS[self.rng.gen_range(0..CONSTS.len())].to_owned()
        }
    }
}

/// Generate program sources. Every program parses, is closed, and the corpus
/// shares planted motif structure.
pub fn generate_sources(params: &GenParams) -> Vec<String> {
    let mut rng = StdRng::seed_from_u64(params.seed);
    let motifs: Vec<Motif> = (0..6).map(|i| gen_motif(&mut rng, 3 + i % 4)).collect();
    let mut out = Vec::with_capacity(params.programs);
    for _ in 0..params.programs {
        let lo = (params.mean_length * 3) / 4;
        let hi = (params.mean_length * 5) / 4;
        let target = rng.gen_range(lo.max(2)..=hi.max(3));
        let mut g = Gen { rng: &mut rng, motifs: motifs.clone(), nesting: params.nesting };
        let nesting = g.nesting;
        let body = g.grow(target, 1, nesting.max(1));
        out.push(format!("(lam {body})"));
    }
    out
}

/// Tiny random corpora for oracle-backed tests: a handful of programs drawn
/// from a shared pool of fragments, so repeated structure actually occurs.
/// Node counts stay small enough for exhaustive oracles.
pub fn small_corpus_sources(seed: u64, programs: usize, max_nodes: usize) -> Vec<String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let prims = ["p0", "p1", "p2", "p3", "p4"];
    let nprims = rng.gen_range(3..=prims.len());
    let prims = &prims[..nprims];

    // Fragment pool as (source, node count); programs combine pool entries.
    let mut pool: Vec<(String, usize)> = prims.iter().map(|p| (p.to_string(), 1)).collect();
    for _ in 0..4 {
        let op = prims[rng.gen_range(0..prims.len())];
        let (a, na) = pool[rng.gen_range(0..pool.len())].clone();
        let (b, nb) = pool[rng.gen_range(0..pool.len())].clone();
        let entry = (format!("({op} {a} {b})"), na + nb + 3);
        if entry.1 + 3 <= max_nodes {
            pool.push(entry);
        }
    }

    let mut out = Vec::with_capacity(programs);
    for _ in 0..programs {
        let (mut expr, mut size) = pool[rng.gen_range(0..pool.len())].clone();
        loop {
            let roll: f64 = rng.gen();
            let (next, next_size) = if roll < 0.5 {
                let op = prims[rng.gen_range(0..prims.len())];
                let (other, no) = pool[rng.gen_range(0..pool.len())].clone();
                let s = if rng.gen_bool(0.5) {
                    format!("({op} {expr} {other})")
                } else {
                    format!("({op} {other} {expr})")
                };
                (s, size + no + 3)
            } else if roll < 0.65 {
                (format!("(lam {})", expr.replace("p0", "$0")), size + 1)
            } else {
                break;
            };
            if next_size > max_nodes {
                break;
            }
            expr = next;
            size = next_size;
        }
        out.push(expr);
    }
    out
}
