use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::relational::{Database, Value};

use super::{execute, AggFunc, AggregateQuery, ColumnRef, Projection, SpjQuery};

/// Group-by key, ordered with [`Value::total_cmp`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GroupKey(pub Vec<Value>);

impl Ord for GroupKey {
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                Ordering::Equal => {}
                o => return o,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

impl PartialOrd for GroupKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AggregateAnswer {
    Scalar(f64),
    Groups(BTreeMap<GroupKey, f64>),
}

/// Drops the aggregate and grouping, keeping group-by and aggregated columns
/// in the projection.
pub fn rewrite_aggregate(aq: &AggregateQuery) -> SpjQuery {
    let mut cols: Vec<ColumnRef> = match &aq.inner.projection {
        Projection::Columns(c) => c.clone(),
        Projection::Star => Vec::new(),
    };
    for c in aq.group_by.iter().chain(aq.column.as_ref()) {
        if !cols.contains(c) {
            cols.push(c.clone());
        }
    }
    SpjQuery {
        projection: if cols.is_empty() {
            Projection::Star
        } else {
            Projection::Columns(cols)
        },
        ..aq.inner.clone()
    }
}

#[derive(Default, Clone, Copy)]
struct Acc {
    rows: usize,
    non_null: usize,
    sum: f64,
}

fn accumulate(aq: &AggregateQuery, db: &Database) -> Result<BTreeMap<GroupKey, Acc>> {
    let mut inner = aq.inner.clone();
    let mut cols = aq.group_by.clone();
    cols.extend(aq.column.iter().cloned());
    inner.projection = Projection::Columns(cols);
    let rs = execute(&inner, db)?;
    let g = aq.group_by.len();
    let mut out: BTreeMap<GroupKey, Acc> = BTreeMap::new();
    if g == 0 {
        out.insert(GroupKey(Vec::new()), Acc::default());
    }
    for row in &rs.rows {
        let acc = out.entry(GroupKey(row[..g].to_vec())).or_default();
        acc.rows += 1;
        if aq.column.is_some() {
            let v = &row[g];
            if !v.is_null() {
                acc.non_null += 1;
                acc.sum += v.as_f64().unwrap_or(0.0);
            }
        }
    }
    Ok(out)
}

fn finish(aq: &AggregateQuery, acc: Acc, scale: f64) -> Option<f64> {
    match aq.func {
        AggFunc::Count if aq.column.is_none() => Some(acc.rows as f64 * scale),
        AggFunc::Count => Some(acc.non_null as f64 * scale),
        AggFunc::Sum => Some(acc.sum * scale),
        AggFunc::Avg => (acc.non_null > 0).then(|| acc.sum / acc.non_null as f64),
    }
}

fn answer(aq: &AggregateQuery, db: &Database, scale: f64) -> Result<AggregateAnswer> {
    let accs = accumulate(aq, db)?;
    if aq.group_by.is_empty() {
        let acc = accs.into_values().next().unwrap_or_default();
        return finish(aq, acc, scale)
            .map(AggregateAnswer::Scalar)
            .ok_or_else(|| Error::Undefined(format!("AVG over an empty result: {aq}")));
    }
    Ok(AggregateAnswer::Groups(
        accs.into_iter()
            .filter_map(|(k, a)| finish(aq, a, scale).map(|v| (k, v)))
            .collect(),
    ))
}

/// Exact answer on `db`. Scalar AVG over an empty result is undefined.
pub fn evaluate_aggregate(aq: &AggregateQuery, db: &Database) -> Result<AggregateAnswer> {
    answer(aq, db, 1.0)
}

/// Estimate from a materialized approximation set. COUNT and SUM are scaled
/// by the product of `|T_i| / |S_i|` over the participating tables; AVG is
/// taken directly from the sample.
pub fn estimate_aggregate(
    aq: &AggregateQuery,
    approx: &Database,
    full: &BTreeMap<String, usize>,
) -> Result<AggregateAnswer> {
    let mut scale = 1.0;
    for t in &aq.inner.tables {
        let n = *full
            .get(t)
            .ok_or_else(|| Error::Config(format!("no full cardinality for table {t}")))?;
        let s = approx
            .table_by_name(t)
            .ok_or_else(|| Error::Semantic(format!("unknown table {t}")))?
            .len();
        if s == 0 {
            return Err(Error::NotEstimable(format!(
                "approximation set holds no tuples of {t}"
            )));
        }
        scale *= n as f64 / s as f64;
    }
    answer(aq, approx, scale)
}
