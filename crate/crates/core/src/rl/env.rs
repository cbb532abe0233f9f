//! GSL (grow from empty) and DRP (swap at full budget) environments over an
//! [`ActionSpace`], with incremental proxy scoring.

use std::collections::HashMap;

use rand::seq::index;
use rand::Rng;

use crate::action_space::ActionSpace;
use crate::error::{Error, Result};
use crate::relational::TupleRef;
use crate::scoring::ratio;

use super::policy::Bitset;

/// Which environment drives episodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnvKind {
    Gsl,
    Drp,
    /// Grow with GSL to the budget, then continue with DRP swaps.
    DrpGsl,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Gsl => "gsl",
            EnvKind::Drp => "drp",
            EnvKind::DrpGsl => "drp+gsl",
        }
    }

    pub fn parse(s: &str) -> Result<EnvKind> {
        match s.to_ascii_lowercase().as_str() {
            "gsl" => Ok(EnvKind::Gsl),
            "drp" => Ok(EnvKind::Drp),
            "drp+gsl" | "drpgsl" | "drp-gsl" => Ok(EnvKind::DrpGsl),
            _ => Err(Error::Config(format!("unknown environment {s:?}"))),
        }
    }

    /// Width of the policy head for `m` actions. Swap layouts are
    /// `[add m | remove m | no-op remove | no-op add]`.
    pub fn head_width(self, m: usize) -> usize {
        match self {
            EnvKind::Gsl => m,
            _ => 2 * m + 2,
        }
    }
}

/// Action-space lookups used on every environment step.
#[derive(Clone, Debug)]
pub struct SpaceIndex {
    /// Dense tuple ids of each action.
    pub tuples: Vec<Vec<u32>>,
    pub refs: Vec<Vec<TupleRef>>,
    pub n_tuples: usize,
    /// (representative, projected row) pairs each action produces.
    pub members: Vec<Vec<(u32, u32)>>,
    pub cards: Vec<usize>,
    pub proj_counts: Vec<usize>,
    pub weights: Vec<f64>,
}

impl SpaceIndex {
    pub fn new(space: &ActionSpace) -> SpaceIndex {
        let mut ids: HashMap<TupleRef, u32> = HashMap::new();
        let tuples = space
            .actions()
            .iter()
            .map(|a| {
                a.refs
                    .iter()
                    .map(|r| {
                        let next = ids.len() as u32;
                        *ids.entry(*r).or_insert(next)
                    })
                    .collect()
            })
            .collect();
        let mut members = vec![Vec::new(); space.len()];
        for i in 0..space.rep_count() {
            for &(a, p) in space.members(i) {
                members[a as usize].push((i as u32, p));
            }
        }
        SpaceIndex {
            tuples,
            refs: space.actions().iter().map(|a| a.refs.clone()).collect(),
            n_tuples: ids.len(),
            members,
            cards: space.cardinalities().to_vec(),
            proj_counts: (0..space.rep_count())
                .map(|i| space.proj_count(i))
                .collect(),
            weights: space.reps().weights().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn rep_count(&self) -> usize {
        self.cards.len()
    }

    /// All representatives with their own weights.
    pub fn full_batch(&self) -> QueryBatch {
        QueryBatch {
            reps: (0..self.rep_count()).collect(),
            weights: self.weights.clone(),
        }
    }

    /// `size` representatives drawn uniformly without replacement, weights
    /// renormalized (uniform if the drawn weights sum to zero).
    pub fn sample_batch<R: Rng>(&self, size: usize, rng: &mut R) -> QueryBatch {
        let n = self.rep_count();
        let mut reps = index::sample(rng, n, size.min(n)).into_vec();
        reps.sort_unstable();
        let total: f64 = reps.iter().map(|&i| self.weights[i]).sum();
        let weights = if total > 0.0 {
            reps.iter().map(|&i| self.weights[i] / total).collect()
        } else {
            vec![1.0 / reps.len() as f64; reps.len()]
        };
        QueryBatch { reps, weights }
    }
}

/// Representatives scored by an episode.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryBatch {
    pub reps: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Chosen actions with tuple and per-query bookkeeping.
#[derive(Clone, Debug)]
pub struct Selection<'a> {
    index: &'a SpaceIndex,
    frame: usize,
    chosen: Vec<bool>,
    list: Vec<u32>,
    tuple_count: Vec<u32>,
    used: usize,
    batch: QueryBatch,
    /// Position of each representative in the batch, or `u32::MAX`.
    slot: Vec<u32>,
    counts: Vec<Vec<u32>>,
    distinct: Vec<usize>,
}

impl<'a> Selection<'a> {
    pub fn new(index: &'a SpaceIndex, frame: usize, batch: QueryBatch) -> Selection<'a> {
        let mut s = Selection {
            index,
            frame,
            chosen: vec![false; index.len()],
            list: Vec::new(),
            tuple_count: vec![0; index.n_tuples],
            used: 0,
            batch: QueryBatch {
                reps: Vec::new(),
                weights: Vec::new(),
            },
            slot: vec![u32::MAX; index.rep_count()],
            counts: Vec::new(),
            distinct: Vec::new(),
        };
        s.set_batch(batch);
        s
    }

    /// Replaces the scored batch, recounting coverage of the current state.
    pub fn set_batch(&mut self, batch: QueryBatch) {
        self.slot.iter_mut().for_each(|s| *s = u32::MAX);
        for (b, &i) in batch.reps.iter().enumerate() {
            self.slot[i] = b as u32;
        }
        self.counts = batch
            .reps
            .iter()
            .map(|&i| vec![0; self.index.proj_counts[i]])
            .collect();
        self.distinct = vec![0; batch.reps.len()];
        self.batch = batch;
        for a in self.list.clone() {
            self.count(a as usize, true);
        }
    }

    pub fn clear(&mut self) {
        for a in std::mem::take(&mut self.list) {
            self.chosen[a as usize] = false;
        }
        self.tuple_count.iter_mut().for_each(|c| *c = 0);
        self.used = 0;
        self.counts
            .iter_mut()
            .for_each(|c| c.iter_mut().for_each(|x| *x = 0));
        self.distinct.iter_mut().for_each(|d| *d = 0);
    }

    fn count(&mut self, a: usize, add: bool) {
        for &(i, p) in &self.index.members[a] {
            let b = self.slot[i as usize];
            if b == u32::MAX {
                continue;
            }
            let c = &mut self.counts[b as usize][p as usize];
            if add {
                *c += 1;
                if *c == 1 {
                    self.distinct[b as usize] += 1;
                }
            } else {
                *c -= 1;
                if *c == 0 {
                    self.distinct[b as usize] -= 1;
                }
            }
        }
    }

    pub fn add(&mut self, a: usize) {
        debug_assert!(!self.chosen[a]);
        self.chosen[a] = true;
        self.list.push(a as u32);
        for &t in &self.index.tuples[a] {
            self.tuple_count[t as usize] += 1;
            if self.tuple_count[t as usize] == 1 {
                self.used += 1;
            }
        }
        self.count(a, true);
    }

    pub fn remove(&mut self, a: usize) {
        debug_assert!(self.chosen[a]);
        self.chosen[a] = false;
        let pos = self
            .list
            .iter()
            .position(|&x| x as usize == a)
            .expect("chosen action is listed");
        self.list.remove(pos);
        for &t in &self.index.tuples[a] {
            self.tuple_count[t as usize] -= 1;
            if self.tuple_count[t as usize] == 0 {
                self.used -= 1;
            }
        }
        self.count(a, false);
    }

    pub fn is_chosen(&self, a: usize) -> bool {
        self.chosen[a]
    }

    /// Chosen actions in the order they were taken.
    pub fn chosen(&self) -> &[u32] {
        &self.list
    }

    /// Chosen actions, ascending: the network input.
    pub fn state(&self) -> Vec<u32> {
        let mut s = self.list.clone();
        s.sort_unstable();
        s
    }

    /// Distinct base tuples held.
    pub fn used(&self) -> usize {
        self.used
    }

    /// Tuples of `a` not already held.
    pub fn new_tuples(&self, a: usize) -> usize {
        self.index.tuples[a]
            .iter()
            .filter(|&&t| self.tuple_count[t as usize] == 0)
            .count()
    }

    /// Proxy score over the current batch.
    pub fn score(&self) -> f64 {
        self.batch
            .reps
            .iter()
            .zip(&self.batch.weights)
            .zip(&self.distinct)
            .map(|((&i, &w), &d)| {
                let card = self.index.cards[i];
                if card == 0 {
                    0.0
                } else {
                    w * ratio(d, card, self.frame)
                }
            })
            .sum()
    }

    /// Distinct base tuples of the chosen actions.
    pub fn tuples(&self) -> Vec<TupleRef> {
        let mut t: Vec<TupleRef> = self
            .list
            .iter()
            .flat_map(|&a| self.index.refs[a as usize].iter().copied())
            .collect();
        t.sort_unstable();
        t.dedup();
        t
    }

    /// Mean Jaccard distance between `a`'s tuples and each chosen action's
    /// (0 when nothing is chosen).
    pub fn diversity(&self, a: usize) -> f64 {
        let others: Vec<u32> = self
            .list
            .iter()
            .copied()
            .filter(|&b| b as usize != a)
            .collect();
        if others.is_empty() {
            return 0.0;
        }
        let ta = &self.index.tuples[a];
        let total: f64 = others
            .iter()
            .map(|&b| {
                let tb = &self.index.tuples[b as usize];
                let inter = ta.iter().filter(|t| tb.contains(t)).count();
                let union = ta.len() + tb.len() - inter;
                if union == 0 {
                    0.0
                } else {
                    1.0 - inter as f64 / union as f64
                }
            })
            .sum();
        total / others.len() as f64
    }
}

/// Phase of an episode: growing the set or swapping at full budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Grow,
    Swap,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub reward: f64,
    pub done: bool,
}

/// An episode environment. GSL grows from the empty set until the budget is
/// reached or nothing fits; DRP starts from a random full set and swaps for
/// `horizon` steps; DRP+GSL grows first and then swaps.
#[derive(Clone, Debug)]
pub struct Env<'a> {
    pub kind: EnvKind,
    sel: Selection<'a>,
    k: usize,
    horizon: usize,
    swaps: usize,
    phase: Phase,
    diversity_weight: f64,
    done: bool,
}

impl<'a> Env<'a> {
    pub fn new(
        kind: EnvKind,
        index: &'a SpaceIndex,
        frame: usize,
        k: usize,
        horizon: usize,
    ) -> Env<'a> {
        let batch = index.full_batch();
        Env {
            kind,
            sel: Selection::new(index, frame, batch),
            k,
            horizon,
            swaps: 0,
            phase: Phase::Grow,
            diversity_weight: 0.0,
            done: false,
        }
    }

    pub fn with_diversity(mut self, weight: f64) -> Env<'a> {
        self.diversity_weight = weight;
        self
    }

    pub fn selection(&self) -> &Selection<'a> {
        &self.sel
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn budget(&self) -> usize {
        self.k
    }

    fn m(&self) -> usize {
        self.sel.index.len()
    }

    fn fits(&self, a: usize) -> bool {
        !self.sel.is_chosen(a) && self.sel.used + self.sel.new_tuples(a) <= self.k
    }

    fn any_fits(&self) -> bool {
        (0..self.m()).any(|a| self.fits(a))
    }

    /// Starts a new episode scored on `batch`. DRP begins from a random set
    /// filled to the budget.
    pub fn reset<R: Rng>(&mut self, batch: QueryBatch, rng: &mut R) {
        self.sel.clear();
        self.sel.set_batch(batch);
        self.swaps = 0;
        self.phase = Phase::Grow;
        self.done = false;
        if self.kind == EnvKind::Drp {
            loop {
                let open: Vec<usize> = (0..self.m()).filter(|&a| self.fits(a)).collect();
                if open.is_empty() {
                    break;
                }
                self.sel.add(open[rng.random_range(0..open.len())]);
            }
            self.phase = Phase::Swap;
            self.done = self.horizon == 0;
        } else {
            self.end_grow_if_stuck();
        }
    }

    fn end_grow_if_stuck(&mut self) {
        if self.phase == Phase::Grow && (self.sel.used >= self.k || !self.any_fits()) {
            if self.kind == EnvKind::DrpGsl && self.horizon > 0 {
                self.phase = Phase::Swap;
            } else {
                self.done = true;
            }
        }
    }

    pub fn head_width(&self) -> usize {
        self.kind.head_width(self.m())
    }

    /// Allowed add actions in the grow phase.
    pub fn grow_mask(&self) -> Bitset {
        let mut b = Bitset::new(self.head_width());
        for a in 0..self.m() {
            if self.fits(a) {
                b.set(a);
            }
        }
        b
    }

    /// Allowed removals (`m + a` for held `a`) plus the no-op at `2m`.
    pub fn remove_mask(&self) -> Bitset {
        let m = self.m();
        let mut b = Bitset::new(self.head_width());
        for &a in self.sel.chosen() {
            b.set(m + a as usize);
        }
        b.set(2 * m);
        b
    }

    /// Allowed additions after removing `removed`, plus the no-op at `2m+1`.
    pub fn add_mask(&mut self, removed: Option<usize>) -> Bitset {
        let m = self.m();
        if let Some(r) = removed {
            self.sel.remove(r);
        }
        let mut b = Bitset::new(self.head_width());
        for a in 0..m {
            if Some(a) != removed && self.fits(a) {
                b.set(a);
            }
        }
        b.set(2 * m + 1);
        if let Some(r) = removed {
            self.sel.add(r);
        }
        b
    }

    /// Grow step: reward is the proxy score of the new state (plus the
    /// weighted diversity term when enabled).
    pub fn step_grow(&mut self, a: usize) -> Result<Step> {
        if self.done || self.phase != Phase::Grow {
            return Err(Error::Contract("grow step outside the grow phase".into()));
        }
        if a >= self.m() || !self.fits(a) {
            return Err(Error::Contract(format!("action {a} is masked")));
        }
        self.sel.add(a);
        let mut reward = self.sel.score();
        if self.diversity_weight > 0.0 {
            reward += self.diversity_weight * self.sel.diversity(a);
        }
        self.end_grow_if_stuck();
        Ok(Step {
            reward,
            done: self.done,
        })
    }

    /// Swap step: optional removal then optional addition; reward is the
    /// change in proxy score.
    pub fn step_swap(&mut self, remove: Option<usize>, add: Option<usize>) -> Result<Step> {
        if self.done || self.phase != Phase::Swap {
            return Err(Error::Contract("swap step outside the swap phase".into()));
        }
        if let Some(r) = remove {
            if r >= self.m() || !self.sel.is_chosen(r) {
                return Err(Error::Contract(format!("action {r} is not in the set")));
            }
        }
        if let Some(a) = add {
            if a >= self.m() || Some(a) == remove || !self.add_mask(remove).get(a) {
                return Err(Error::Contract(format!("action {a} is masked")));
            }
        }
        let before = self.sel.score();
        if let Some(r) = remove {
            self.sel.remove(r);
        }
        if let Some(a) = add {
            self.sel.add(a);
        }
        self.swaps += 1;
        self.done = self.swaps >= self.horizon;
        Ok(Step {
            reward: self.sel.score() - before,
            done: self.done,
        })
    }
}
