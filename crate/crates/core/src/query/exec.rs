//! Query evaluation: filter pushdown, left-deep hash joins, deterministic
//! ordering by provenance, LIMIT and projection.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::relational::{Database, TableId, TupleRef, Value};

use super::{ColumnRef, PredicateOp, Projection, SpjQuery};

/// Result of evaluating a query. Rows are bags; `provenance[i]` holds the
/// base tuple of every FROM table (in FROM order) that produced `rows[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultSet {
    pub columns: Vec<ColumnRef>,
    pub tables: Vec<TableId>,
    pub rows: Vec<Vec<Value>>,
    pub provenance: Vec<Vec<TupleRef>>,
}

impl ResultSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Number of distinct projected rows.
    pub fn distinct(&self) -> usize {
        self.rows
            .iter()
            .map(Vec::as_slice)
            .collect::<HashSet<_>>()
            .len()
    }
}

/// A query resolved to table ids and column positions.
#[derive(Clone, Debug)]
pub(crate) struct Bound {
    pub tables: Vec<TableId>,
    /// Per FROM table: (column index, predicate).
    pub filters: Vec<Vec<(usize, PredicateOp)>>,
    /// (left table slot, left col, right table slot, right col)
    pub joins: Vec<(usize, usize, usize, usize)>,
    pub output: Vec<(usize, usize)>,
    pub columns: Vec<ColumnRef>,
}

pub(crate) fn bind(q: &SpjQuery, db: &Database) -> Result<Bound> {
    let mut tables = Vec::with_capacity(q.tables.len());
    for t in &q.tables {
        tables.push(
            db.table_id(t)
                .ok_or_else(|| Error::Semantic(format!("unknown table {t}")))?,
        );
    }
    let locate = |c: &ColumnRef| -> Result<(usize, usize)> {
        let slot = q.table_index(&c.table).ok_or_else(|| {
            Error::Semantic(format!("table {} is not in the FROM clause", c.table))
        })?;
        let col = db
            .table(tables[slot])
            .column_index(&c.column)
            .ok_or_else(|| Error::Semantic(format!("unknown column {c}")))?;
        Ok((slot, col))
    };
    let mut filters = vec![Vec::new(); tables.len()];
    for p in &q.predicates {
        let (slot, col) = locate(&p.column)?;
        filters[slot].push((col, p.op.clone()));
    }
    let mut joins = Vec::new();
    for j in &q.joins {
        let (a, ca) = locate(&j.left)?;
        let (b, cb) = locate(&j.right)?;
        joins.push((a, ca, b, cb));
    }
    let (output, columns) = match &q.projection {
        Projection::Star => {
            let mut out = Vec::new();
            let mut cols = Vec::new();
            for (slot, &tid) in tables.iter().enumerate() {
                let t = db.table(tid);
                for (j, c) in t.columns().iter().enumerate() {
                    out.push((slot, j));
                    cols.push(ColumnRef::new(t.name(), c.name.clone()));
                }
            }
            (out, cols)
        }
        Projection::Columns(cs) => {
            let out = cs.iter().map(&locate).collect::<Result<Vec<_>>>()?;
            (out, cs.clone())
        }
    };
    Ok(Bound {
        tables,
        filters,
        joins,
        output,
        columns,
    })
}

/// Join key form of a value: numbers compare by magnitude, so integer and
/// real keys are unified.
fn key(v: &Value) -> Option<Value> {
    match v {
        Value::Null => None,
        Value::Int(i) => Some(Value::Real(*i as f64)),
        other => Some(other.clone()),
    }
}

impl Bound {
    fn row_passes(&self, slot: usize, row: &[Value]) -> bool {
        self.filters[slot]
            .iter()
            .all(|(c, op)| op.matches(&row[*c]))
    }

    /// Storage positions of rows in each table that satisfy the local filters.
    pub(crate) fn filtered(&self, db: &Database) -> Vec<Vec<usize>> {
        self.tables
            .iter()
            .enumerate()
            .map(|(slot, &tid)| {
                let t = db.table(tid);
                (0..t.len())
                    .filter(|&p| self.row_passes(slot, t.row(p)))
                    .collect()
            })
            .collect()
    }

    /// Order in which to add tables so every step joins to something seen.
    fn join_order(&self) -> Result<Vec<usize>> {
        let n = self.tables.len();
        let mut order = vec![0];
        let mut seen = vec![false; n];
        seen[0] = true;
        while order.len() < n {
            let next = (0..n).find(|&s| {
                !seen[s]
                    && self
                        .joins
                        .iter()
                        .any(|&(a, _, b, _)| (a == s && seen[b]) || (b == s && seen[a]))
            });
            match next {
                Some(s) => {
                    seen[s] = true;
                    order.push(s);
                }
                None => return Err(Error::Semantic("query joins are not connected".into())),
            }
        }
        Ok(order)
    }

    /// All joined combinations as storage positions, one per FROM slot.
    pub(crate) fn join_positions(
        &self,
        db: &Database,
        filtered: &[Vec<usize>],
    ) -> Result<Vec<Vec<usize>>> {
        let n = self.tables.len();
        let order = self.join_order()?;
        let mut seen = vec![false; n];
        seen[order[0]] = true;
        let mut partial: Vec<Vec<usize>> = filtered[order[0]]
            .iter()
            .map(|&p| {
                let mut v = vec![usize::MAX; n];
                v[order[0]] = p;
                v
            })
            .collect();
        for &s in &order[1..] {
            // (column on the new table, slot and column on the joined side)
            let conds: Vec<(usize, usize, usize)> = self
                .joins
                .iter()
                .filter_map(|&(a, ca, b, cb)| {
                    if a == s && seen[b] {
                        Some((ca, b, cb))
                    } else if b == s && seen[a] {
                        Some((cb, a, ca))
                    } else {
                        None
                    }
                })
                .collect();
            let table = db.table(self.tables[s]);
            let new_key = |p: usize| -> Option<Vec<Value>> {
                let row = table.row(p);
                conds.iter().map(|&(c, _, _)| key(&row[c])).collect()
            };
            let old_key = |combo: &[usize]| -> Option<Vec<Value>> {
                conds
                    .iter()
                    .map(|&(_, o, oc)| key(&db.table(self.tables[o]).row(combo[o])[oc]))
                    .collect()
            };
            let mut next = Vec::new();
            // build the hash table on the smaller input
            if filtered[s].len() <= partial.len() {
                let mut index: HashMap<Vec<Value>, Vec<usize>> = HashMap::new();
                for &p in &filtered[s] {
                    if let Some(k) = new_key(p) {
                        index.entry(k).or_default().push(p);
                    }
                }
                for combo in &partial {
                    let Some(hits) = old_key(combo).and_then(|k| index.get(&k)) else {
                        continue;
                    };
                    for &p in hits {
                        let mut c = combo.clone();
                        c[s] = p;
                        next.push(c);
                    }
                }
            } else {
                let mut index: HashMap<Vec<Value>, Vec<usize>> = HashMap::new();
                for (i, combo) in partial.iter().enumerate() {
                    if let Some(k) = old_key(combo) {
                        index.entry(k).or_default().push(i);
                    }
                }
                for &p in &filtered[s] {
                    let Some(hits) = new_key(p).and_then(|k| index.get(&k)) else {
                        continue;
                    };
                    for &i in hits {
                        let mut c = partial[i].clone();
                        c[s] = p;
                        next.push(c);
                    }
                }
            }
            partial = next;
            seen[s] = true;
        }
        Ok(partial)
    }

    pub(crate) fn project(&self, db: &Database, combo: &[usize]) -> Vec<Value> {
        self.output
            .iter()
            .map(|&(s, c)| db.table(self.tables[s]).row(combo[s])[c].clone())
            .collect()
    }

    pub(crate) fn provenance(&self, db: &Database, combo: &[usize]) -> Vec<TupleRef> {
        combo
            .iter()
            .zip(&self.tables)
            .map(|(&p, &t)| TupleRef::new(t, db.table(t).id_at(p)))
            .collect()
    }

    /// Checks filters and joins for one combination of rows.
    pub(crate) fn matches(&self, rows: &[&[Value]]) -> bool {
        rows.iter().enumerate().all(|(s, r)| self.row_passes(s, r))
            && self.joins.iter().all(|&(a, ca, b, cb)| {
                rows[a][ca].compare(&rows[b][cb]) == Some(std::cmp::Ordering::Equal)
            })
    }
}

/// Evaluates `q` over `db`. Rows are ordered by provenance (original row ids
/// in FROM order) before LIMIT is applied, so results are reproducible.
pub fn execute(q: &SpjQuery, db: &Database) -> Result<ResultSet> {
    let bound = bind(q, db)?;
    let filtered = bound.filtered(db);
    let mut combos: Vec<(Vec<TupleRef>, Vec<usize>)> = bound
        .join_positions(db, &filtered)?
        .into_iter()
        .map(|c| (bound.provenance(db, &c), c))
        .collect();
    combos.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    if let Some(n) = q.limit {
        combos.truncate(n);
    }
    let rows = combos.iter().map(|(_, c)| bound.project(db, c)).collect();
    let provenance = combos.into_iter().map(|(p, _)| p).collect();
    Ok(ResultSet {
        columns: bound.columns,
        tables: bound.tables,
        rows,
        provenance,
    })
}

/// True when the base tuples `refs` (one per FROM table, in FROM order)
/// jointly satisfy every predicate and join condition of `q`.
pub fn match_tuple(q: &SpjQuery, db: &Database, refs: &[TupleRef]) -> Result<bool> {
    let bound = bind(q, db)?;
    if refs.len() != bound.tables.len() {
        return Err(Error::Argument(format!(
            "expected {} tuples, got {}",
            bound.tables.len(),
            refs.len()
        )));
    }
    let mut rows = Vec::with_capacity(refs.len());
    for (r, &t) in refs.iter().zip(&bound.tables) {
        if r.table != t {
            return Err(Error::Argument(format!(
                "tuple of table {} in slot for table {}",
                r.table.0, t.0
            )));
        }
        rows.push(
            db.resolve(*r)
                .ok_or_else(|| Error::Reference(format!("{r:?}")))?,
        );
    }
    Ok(bound.matches(&rows))
}
