use std::collections::{BTreeSet, HashMap};

use crate::error::Result;
use crate::par::Exec;
use crate::query::execute;
use crate::relational::{ApproximationSet, Database, TupleRef, Value};
use crate::workload::Workload;

use super::{ratio, weighted, ScoreConfig, ScoreReport};

/// Membership bitmap over every base tuple of a database.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TupleMask {
    bits: Vec<Vec<u64>>,
}

impl TupleMask {
    pub fn new(db: &Database) -> TupleMask {
        TupleMask {
            bits: db
                .tables()
                .map(|(_, t)| vec![0u64; t.len().div_ceil(64)])
                .collect(),
        }
    }

    pub fn from_tuples(db: &Database, tuples: impl IntoIterator<Item = TupleRef>) -> TupleMask {
        let mut m = TupleMask::new(db);
        for t in tuples {
            m.insert(t);
        }
        m
    }

    pub fn from_set(set: &ApproximationSet, db: &Database) -> TupleMask {
        TupleMask::from_tuples(db, set.tuples())
    }

    pub fn insert(&mut self, r: TupleRef) {
        self.bits[r.table.0][r.row / 64] |= 1 << (r.row % 64);
    }

    pub fn remove(&mut self, r: TupleRef) {
        self.bits[r.table.0][r.row / 64] &= !(1 << (r.row % 64));
    }

    pub fn contains(&self, r: TupleRef) -> bool {
        self.bits
            .get(r.table.0)
            .and_then(|t| t.get(r.row / 64))
            .is_some_and(|w| w >> (r.row % 64) & 1 == 1)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct IndexedQuery {
    /// Full limit-free result in provenance order: base tuples and an
    /// interned id of the projected row.
    pub rows: Vec<(Box<[TupleRef]>, u32)>,
    pub limit: Option<usize>,
    pub card: usize,
    pub n_proj: usize,
}

/// Exact scorer that evaluates queries once on the full database and then
/// scores any tuple set by filtering the cached result. Because results are
/// ordered by provenance, `q(S)` (LIMIT included) is the prefix of the
/// cached rows whose tuples all lie in `S`.
#[derive(Clone, Debug)]
pub struct IndexedScorer {
    pub(crate) queries: Vec<IndexedQuery>,
    weights: Vec<f64>,
    frame: usize,
}

fn distinct_prefix<'a>(
    rows: impl Iterator<Item = &'a u32>,
    limit: Option<usize>,
    n_proj: usize,
) -> usize {
    let mut seen = vec![false; n_proj];
    let mut distinct = 0;
    for &p in rows.take(limit.unwrap_or(usize::MAX)) {
        if !seen[p as usize] {
            seen[p as usize] = true;
            distinct += 1;
        }
    }
    distinct
}

impl IndexedScorer {
    pub fn build(w: &Workload, db: &Database, frame: usize, exec: Exec) -> Result<IndexedScorer> {
        let queries = exec
            .map(w.queries(), |q| -> Result<IndexedQuery> {
                let rs = execute(&q.without_limit(), db)?;
                let mut intern: HashMap<Vec<Value>, u32> = HashMap::new();
                let mut rows = Vec::with_capacity(rs.len());
                for (row, prov) in rs.rows.into_iter().zip(rs.provenance) {
                    let next = intern.len() as u32;
                    let id = *intern.entry(row).or_insert(next);
                    rows.push((prov.into_boxed_slice(), id));
                }
                let n_proj = intern.len();
                let card = distinct_prefix(rows.iter().map(|r| &r.1), q.limit, n_proj);
                Ok(IndexedQuery {
                    rows,
                    limit: q.limit,
                    card,
                    n_proj,
                })
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(IndexedScorer {
            queries,
            weights: w.weights().to_vec(),
            frame,
        })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn frame(&self) -> usize {
        self.frame
    }

    pub fn config(&self) -> ScoreConfig {
        ScoreConfig {
            frame: self.frame,
            cardinalities: self.queries.iter().map(|q| q.card).collect(),
        }
    }

    /// Distinct projected rows of query `i` over the tuples in `mask`.
    pub fn distinct_in(&self, i: usize, mask: &TupleMask) -> usize {
        let q = &self.queries[i];
        let kept = q
            .rows
            .iter()
            .filter(|(prov, _)| prov.iter().all(|&t| mask.contains(t)))
            .map(|(_, p)| p);
        distinct_prefix(kept, q.limit, q.n_proj)
    }

    pub fn ratio_in(&self, i: usize, mask: &TupleMask) -> f64 {
        let q = &self.queries[i];
        if q.card == 0 {
            return 0.0;
        }
        ratio(self.distinct_in(i, mask), q.card, self.frame)
    }

    pub fn report(&self, mask: &TupleMask) -> ScoreReport {
        let ratios = (0..self.len()).map(|i| self.ratio_in(i, mask)).collect();
        ScoreReport::from_ratios(ratios, &self.weights)
    }

    pub fn score(&self, mask: &TupleMask) -> f64 {
        weighted(
            (0..self.len()).map(|i| self.ratio_in(i, mask)),
            &self.weights,
        )
    }

    /// Every base tuple that contributes to some query result.
    pub fn relevant_tuples(&self) -> BTreeSet<TupleRef> {
        self.queries
            .iter()
            .flat_map(|q| q.rows.iter().flat_map(|(p, _)| p.iter().copied()))
            .collect()
    }
}
