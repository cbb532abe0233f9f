use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::{Duration, Instant};

use crate::par::Exec;
use crate::relational::TupleRef;

use super::{ratio, IndexedScorer};

/// Outcome of exhaustive search over action combinations.
#[derive(Clone, Debug, PartialEq)]
pub struct BruteForce {
    /// Indices into the universe of the chosen actions, ascending.
    pub actions: Vec<usize>,
    pub tuples: Vec<TupleRef>,
    pub score: f64,
    /// False when the time cap stopped enumeration early.
    pub complete: bool,
    pub evaluated: u64,
}

type Bits = Vec<u64>;

fn subset(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x & !y == 0)
}

fn popcount(a: &[u64]) -> usize {
    a.iter().map(|w| w.count_ones() as usize).sum()
}

fn new_bits(a: &[u64], chosen: &[u64]) -> usize {
    a.iter()
        .zip(chosen)
        .map(|(x, y)| (x & !y).count_ones() as usize)
        .sum()
}

struct Query {
    rows: Vec<(Bits, u32)>,
    limit: Option<usize>,
    card: usize,
    n_proj: usize,
    weight: f64,
}

struct Search<'a> {
    actions: Vec<Bits>,
    queries: Vec<Query>,
    frame: usize,
    k: usize,
    deadline: Option<Instant>,
    timed_out: &'a AtomicBool,
    evaluated: &'a AtomicU64,
}

struct Best {
    score: f64,
    chosen: Vec<usize>,
}

impl Search<'_> {
    fn eval(&self, bits: &[u64]) -> f64 {
        let mut total = 0.0;
        for q in &self.queries {
            let mut seen = vec![false; q.n_proj];
            let mut distinct = 0;
            let kept = q
                .rows
                .iter()
                .filter(|(rb, _)| subset(rb, bits))
                .take(q.limit.unwrap_or(usize::MAX));
            for (_, p) in kept {
                if !seen[*p as usize] {
                    seen[*p as usize] = true;
                    distinct += 1;
                }
            }
            total += q.weight * ratio(distinct, q.card, self.frame);
        }
        total
    }

    fn maximal(&self, bits: &[u64], used: usize) -> bool {
        self.actions
            .iter()
            .all(|a| subset(a, bits) || used + new_bits(a, bits) > self.k)
    }

    fn leaf(&self, bits: &[u64], used: usize, chosen: &[usize], best: &mut Best) {
        if !self.maximal(bits, used) {
            return;
        }
        let n = self.evaluated.fetch_add(1, Ordering::Relaxed);
        if n.is_multiple_of(1024) && self.deadline.is_some_and(|d| Instant::now() >= d) {
            self.timed_out.store(true, Ordering::Relaxed);
        }
        let s = self.eval(bits);
        if s > best.score + 1e-15 {
            best.score = s;
            best.chosen = chosen.to_vec();
        }
    }

    fn dfs(
        &self,
        i: usize,
        bits: &mut Bits,
        used: usize,
        chosen: &mut Vec<usize>,
        best: &mut Best,
    ) {
        if self.timed_out.load(Ordering::Relaxed) {
            return;
        }
        if i == self.actions.len() {
            self.leaf(bits, used, chosen, best);
            return;
        }
        // everything left fits: take it all, no branching needed
        let mut all = bits.clone();
        for a in &self.actions[i..] {
            for (w, x) in all.iter_mut().zip(a) {
                *w |= x;
            }
        }
        let all_used = popcount(&all);
        if all_used <= self.k {
            let before = chosen.len();
            chosen.extend((i..self.actions.len()).filter(|&j| !subset(&self.actions[j], bits)));
            self.leaf(&all, all_used, chosen, best);
            chosen.truncate(before);
            return;
        }
        let extra = new_bits(&self.actions[i], bits);
        if extra > 0 && used + extra <= self.k {
            let saved = bits.clone();
            for (w, x) in bits.iter_mut().zip(&self.actions[i]) {
                *w |= x;
            }
            chosen.push(i);
            self.dfs(i + 1, bits, used + extra, chosen, best);
            chosen.pop();
            *bits = saved;
        }
        self.dfs(i + 1, bits, used, chosen, best);
    }
}

/// Exhaustive search for the best combination of `universe` actions whose
/// union holds at most `k` distinct tuples. Only maximal combinations are
/// scored, which is exact for limit-free workloads since the score is then
/// monotone in the tuple set. Ties keep the lexicographically first
/// combination. `time_cap` stops early and flags the result incomplete.
pub fn brute_force_opt(
    universe: &[Vec<TupleRef>],
    scorer: &IndexedScorer,
    k: usize,
    time_cap: Option<Duration>,
    exec: Exec,
) -> BruteForce {
    let mut index: BTreeMap<TupleRef, usize> = BTreeMap::new();
    for a in universe {
        for &t in a {
            let next = index.len();
            index.entry(t).or_insert(next);
        }
    }
    let words = index.len().div_ceil(64).max(1);
    let to_bits = |tuples: &[TupleRef]| -> Option<Bits> {
        let mut b = vec![0u64; words];
        for t in tuples {
            let i = *index.get(t)?;
            b[i / 64] |= 1 << (i % 64);
        }
        Some(b)
    };
    let actions: Vec<Bits> = universe
        .iter()
        .map(|a| to_bits(a).expect("indexed above"))
        .collect();
    let queries = scorer
        .queries
        .iter()
        .zip(scorer.weights())
        .map(|(q, &weight)| Query {
            rows: q
                .rows
                .iter()
                .filter_map(|(prov, p)| to_bits(prov).map(|b| (b, *p)))
                .collect(),
            limit: q.limit,
            card: q.card.max(1),
            n_proj: q.n_proj,
            weight,
        })
        .collect();

    let timed_out = AtomicBool::new(false);
    let evaluated = AtomicU64::new(0);
    let search = Search {
        actions,
        queries,
        frame: scorer.frame(),
        k,
        deadline: time_cap.map(|d| Instant::now() + d),
        timed_out: &timed_out,
        evaluated: &evaluated,
    };
    let n = universe.len();

    // Task i enumerates combinations whose smallest action is i; task n is
    // the empty combination.
    let results = exec.map_range(n + 1, |first| {
        let mut best = Best {
            score: f64::NEG_INFINITY,
            chosen: Vec::new(),
        };
        let mut bits = vec![0u64; words];
        if first == n {
            search.leaf(&bits, 0, &[], &mut best);
            return best;
        }
        let size = popcount(&search.actions[first]);
        if size > k {
            return best;
        }
        bits.copy_from_slice(&search.actions[first]);
        let mut chosen = vec![first];
        search.dfs(first + 1, &mut bits, size, &mut chosen, &mut best);
        best
    });

    let mut best = Best {
        score: f64::NEG_INFINITY,
        chosen: Vec::new(),
    };
    for r in results {
        if r.score > best.score + 1e-15 {
            best = r;
        }
    }
    if best.score == f64::NEG_INFINITY {
        best.score = 0.0;
    }
    let mut tuples: Vec<TupleRef> = best
        .chosen
        .iter()
        .flat_map(|&a| universe[a].iter().copied())
        .collect();
    tuples.sort_unstable();
    tuples.dedup();
    let mut actions = best.chosen;
    actions.sort_unstable();
    BruteForce {
        actions,
        tuples,
        score: best.score,
        complete: !timed_out.load(Ordering::Relaxed),
        evaluated: evaluated.load(Ordering::Relaxed),
    }
}
