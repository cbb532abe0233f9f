//! Statistical workload generation for when no query log is available.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::error::{Error, Result};
use crate::query::{execute, CmpOp, ColumnRef, JoinCondition, Predicate, PredicateOp, SpjQuery};
use crate::relational::{ColumnType, Database, Value};
use crate::stats::{ColumnStats, DatabaseStats};

use super::Workload;

const ATTEMPTS: usize = 20;
/// Template probabilities: range, categorical equality, 2-table join, 3-table chain.
const TEMPLATE_WEIGHTS: [f64; 4] = [0.3, 0.3, 0.3, 0.1];

/// Draws a value with probability proportional to its frequency.
pub fn sample_frequency_weighted<R: Rng>(top: &[(Value, usize)], rng: &mut R) -> Option<Value> {
    let dist = WeightedIndex::new(top.iter().map(|(_, f)| *f)).ok()?;
    Some(top[dist.sample(rng)].0.clone())
}

/// Foreign-key style join edges inferred from column names: `a.<b>_id`
/// joins `b.id` (also for a plural table name `bs`), and identically named
/// `*_id` columns join each other.
pub(crate) fn join_edges(db: &Database) -> Vec<JoinCondition> {
    let mut edges = Vec::new();
    let tables: Vec<_> = db.tables().map(|(_, t)| t).collect();
    for (i, a) in tables.iter().enumerate() {
        for (j, b) in tables.iter().enumerate() {
            if i == j {
                continue;
            }
            let singular = b.name().strip_suffix('s').unwrap_or(b.name());
            for ca in a.columns() {
                for cb in b.columns() {
                    if ca.ty.is_numeric() != cb.ty.is_numeric() {
                        continue;
                    }
                    let fk = cb.name == "id"
                        && (ca.name == format!("{}_id", b.name())
                            || ca.name == format!("{singular}_id"));
                    let shared = i < j && ca.name == cb.name && ca.name.ends_with("_id");
                    if fk || shared {
                        edges.push(JoinCondition {
                            left: ColumnRef::new(a.name(), ca.name.clone()),
                            right: ColumnRef::new(b.name(), cb.name.clone()),
                        });
                    }
                }
            }
        }
    }
    edges
}

fn literal(ty: ColumnType, x: f64) -> Value {
    match ty {
        ColumnType::Integer => Value::Int(x.round() as i64),
        _ => Value::Real((x * 1000.0).round() / 1000.0),
    }
}

fn random_predicate(
    db: &Database,
    stats: &DatabaseStats,
    table: &str,
    rng: &mut ChaCha8Rng,
    want: Option<bool>,
) -> Option<Predicate> {
    let t = db.table_by_name(table)?;
    let cols: Vec<_> = t
        .columns()
        .iter()
        .filter(|c| want.is_none_or(|numeric| c.ty.is_numeric() == numeric))
        .collect();
    let col = cols.choose(rng)?;
    let cs = stats.column(table, &col.name)?;
    let column = ColumnRef::new(table, col.name.clone());
    match cs {
        ColumnStats::Numeric {
            mean, std, count, ..
        } if *count > 0 => {
            let spread = std.max(1e-9);
            let center = Normal::new(*mean, spread).ok()?.sample(rng);
            let half = Normal::new(0.0, spread).ok()?.sample(rng).abs() * 0.5 + spread * 0.05;
            let (lo, hi) = (
                literal(col.ty, center - half),
                literal(col.ty, center + half),
            );
            let op = match rng.random_range(0..3) {
                0 => PredicateOp::Between(lo, hi),
                1 => PredicateOp::Cmp(CmpOp::Ge, lo),
                _ => PredicateOp::Cmp(CmpOp::Le, hi),
            };
            Some(Predicate { column, op })
        }
        ColumnStats::Categorical { top, .. } => {
            let v = sample_frequency_weighted(top, rng)?;
            Some(Predicate {
                column,
                op: PredicateOp::Cmp(CmpOp::Eq, v),
            })
        }
        _ => None,
    }
}

fn chains(edges: &[JoinCondition]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, a) in edges.iter().enumerate() {
        for (j, b) in edges.iter().enumerate().skip(i + 1) {
            let ta = [&a.left.table, &a.right.table];
            let tb = [&b.left.table, &b.right.table];
            let shared = ta.iter().filter(|t| tb.contains(t)).count();
            if shared == 1 {
                out.push((i, j));
            }
        }
    }
    out
}

fn draw_query(
    db: &Database,
    stats: &DatabaseStats,
    template: usize,
    edges: &[JoinCondition],
    chain: &[(usize, usize)],
    rng: &mut ChaCha8Rng,
) -> Option<SpjQuery> {
    let names: Vec<String> = db.tables().map(|(_, t)| t.name().to_string()).collect();
    match template {
        0 | 1 => {
            let numeric = template == 0;
            let candidates: Vec<&String> = names
                .iter()
                .filter(|n| {
                    db.table_by_name(n)
                        .is_some_and(|t| t.columns().iter().any(|c| c.ty.is_numeric() == numeric))
                })
                .collect();
            let table = (*candidates.choose(rng)?).clone();
            let p = random_predicate(db, stats, &table, rng, Some(numeric))?;
            let mut q = SpjQuery::star(table);
            q.predicates.push(p);
            Some(q)
        }
        2 => {
            let e = edges.choose(rng)?;
            let mut q = SpjQuery::star(e.left.table.clone());
            q.tables.push(e.right.table.clone());
            q.joins.push(e.clone());
            let t = q.tables.choose(rng)?.clone();
            q.predicates
                .push(random_predicate(db, stats, &t, rng, None)?);
            Some(q)
        }
        _ => {
            let &(i, j) = chain.choose(rng)?;
            let (a, b) = (&edges[i], &edges[j]);
            let mut tables = vec![a.left.table.clone(), a.right.table.clone()];
            for t in [&b.left.table, &b.right.table] {
                if !tables.contains(t) {
                    tables.push(t.clone());
                }
            }
            let mut q = SpjQuery::star(tables[0].clone());
            q.tables = tables;
            q.joins = vec![a.clone(), b.clone()];
            for _ in 0..2 {
                let t = q.tables.choose(rng)?.clone();
                q.predicates
                    .push(random_predicate(db, stats, &t, rng, None)?);
            }
            Some(q)
        }
    }
}

/// Generates `n` non-empty queries from four templates (single-table range,
/// single-table categorical equality, two-table join, three-table chain).
/// Templates that the schema cannot support are skipped.
pub fn generate_workload(
    db: &Database,
    stats: &DatabaseStats,
    n: usize,
    seed: u64,
) -> Result<Workload> {
    if n == 0 {
        return Err(Error::Argument("cannot generate an empty workload".into()));
    }
    let edges = join_edges(db);
    let chain = chains(&edges);
    let has = |numeric: bool| {
        db.tables()
            .any(|(_, t)| !t.is_empty() && t.columns().iter().any(|c| c.ty.is_numeric() == numeric))
    };
    let feasible = [has(true), has(false), !edges.is_empty(), !chain.is_empty()];
    let weights: Vec<f64> = TEMPLATE_WEIGHTS
        .iter()
        .zip(feasible)
        .map(|(w, ok)| if ok { *w } else { 0.0 })
        .collect();
    let pick = WeightedIndex::new(&weights).map_err(|_| Error::Generation {
        achieved: 0,
        requested: n,
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queries = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..ATTEMPTS {
            let template = pick.sample(&mut rng);
            let Some(q) = draw_query(db, stats, template, &edges, &chain, &mut rng) else {
                continue;
            };
            if !execute(&q, db)?.is_empty() {
                queries.push(q);
                break;
            }
        }
    }
    if queries.len() < n {
        return Err(Error::Generation {
            achieved: queries.len(),
            requested: n,
        });
    }
    Workload::uniform(queries)
}
