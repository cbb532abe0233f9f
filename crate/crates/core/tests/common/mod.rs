#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::HashSet;

use asqp::query::{CmpOp, ColumnRef, JoinCondition, Predicate, PredicateOp, Projection, SpjQuery};
use asqp::relational::{Column, ColumnType, Database, Table, TupleRef, Value};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Two small joinable tables with nulls and skewed categories.
pub fn random_db(rng: &mut ChaCha8Rng, nr: usize, ns: usize) -> Database {
    let cats = ["x", "y", "z", "w"];
    let r = Table::new(
        "r",
        vec![
            Column::new("id", ColumnType::Integer),
            Column::new("a", ColumnType::Integer).nullable(),
            Column::new("c", ColumnType::Text),
        ],
        (0..nr)
            .map(|i| {
                let a = if rng.random_bool(0.1) {
                    Value::Null
                } else {
                    Value::Int(rng.random_range(0..10))
                };
                vec![
                    Value::Int(i as i64),
                    a,
                    Value::text(cats[rng.random_range(0..cats.len())]),
                ]
            })
            .collect(),
    )
    .unwrap();
    let s = Table::new(
        "s",
        vec![
            Column::new("id", ColumnType::Integer),
            Column::new("r_id", ColumnType::Integer).nullable(),
            Column::new("x", ColumnType::Real),
        ],
        (0..ns)
            .map(|i| {
                let fk = if rng.random_bool(0.1) {
                    Value::Null
                } else {
                    Value::Int(rng.random_range(0..nr.max(1)) as i64)
                };
                vec![
                    Value::Int(i as i64),
                    fk,
                    Value::Real(rng.random_range(0..20) as f64 / 2.0),
                ]
            })
            .collect(),
    )
    .unwrap();
    Database::from_tables([r, s]).unwrap()
}

pub fn random_query(rng: &mut ChaCha8Rng, with_limit: bool) -> SpjQuery {
    let join = rng.random_bool(0.5);
    let mut q = SpjQuery::star("r");
    if join {
        q.tables.push("s".into());
        q.joins.push(JoinCondition {
            left: ColumnRef::new("s", "r_id"),
            right: ColumnRef::new("r", "id"),
        });
    }
    for _ in 0..rng.random_range(0..3) {
        let p = match rng.random_range(0..4) {
            0 => Predicate {
                column: ColumnRef::new("r", "a"),
                op: PredicateOp::Cmp(
                    [CmpOp::Lt, CmpOp::Ge, CmpOp::Eq, CmpOp::Ne][rng.random_range(0..4)],
                    Value::Int(rng.random_range(0..10)),
                ),
            },
            1 => Predicate {
                column: ColumnRef::new("r", "c"),
                op: PredicateOp::In(vec![Value::text(["x", "y", "z"][rng.random_range(0..3)])]),
            },
            2 if join => {
                let lo = rng.random_range(0..10) as f64;
                Predicate {
                    column: ColumnRef::new("s", "x"),
                    op: PredicateOp::Between(Value::Real(lo), Value::Real(lo + 3.0)),
                }
            }
            _ => Predicate {
                column: ColumnRef::new("r", "id"),
                op: PredicateOp::Cmp(CmpOp::Gt, Value::Int(rng.random_range(0..5))),
            },
        };
        q.predicates.push(p);
    }
    q.projection = match rng.random_range(0..3) {
        0 => Projection::Star,
        1 => Projection::Columns(vec![ColumnRef::new("r", "c")]),
        _ => Projection::Columns(vec![ColumnRef::new("r", "a"), ColumnRef::new("r", "c")]),
    };
    if with_limit && rng.random_bool(0.3) {
        q.limit = Some(rng.random_range(1..6));
    }
    q
}

fn num(v: &Value) -> Option<f64> {
    match v {
        Value::Int(i) => Some(*i as f64),
        Value::Real(x) => Some(*x),
        _ => None,
    }
}

fn cmp(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Text(x), Value::Text(y)) => Some(x.cmp(y)),
        _ => num(a)?.partial_cmp(&num(b)?),
    }
}

fn pred_holds(op: &PredicateOp, v: &Value) -> bool {
    if matches!(v, Value::Null) {
        return false;
    }
    match op {
        PredicateOp::Cmp(c, lit) => match cmp(v, lit) {
            None => false,
            Some(o) => match c {
                CmpOp::Eq => o.is_eq(),
                CmpOp::Ne => o.is_ne(),
                CmpOp::Lt => o.is_lt(),
                CmpOp::Le => o.is_le(),
                CmpOp::Gt => o.is_gt(),
                CmpOp::Ge => o.is_ge(),
            },
        },
        PredicateOp::In(vs) => vs.iter().any(|x| cmp(v, x) == Some(Ordering::Equal)),
        PredicateOp::Between(lo, hi) => {
            cmp(v, lo).is_some_and(|o| o.is_ge()) && cmp(v, hi).is_some_and(|o| o.is_le())
        }
        PredicateOp::LikePrefix(p) => matches!(v, Value::Text(s) if s.starts_with(p.as_str())),
    }
}

/// Nested-loop reference evaluator: (provenance, projected row) in
/// provenance order, LIMIT applied.
pub fn nested_loop(q: &SpjQuery, db: &Database) -> Vec<(Vec<TupleRef>, Vec<Value>)> {
    let tables: Vec<_> = q
        .tables
        .iter()
        .map(|t| (db.table_id(t).unwrap(), db.table_by_name(t).unwrap()))
        .collect();
    let col = |c: &ColumnRef| -> (usize, usize) {
        let slot = q.tables.iter().position(|t| *t == c.table).unwrap();
        (slot, tables[slot].1.column_index(&c.column).unwrap())
    };
    let mut out = Vec::new();
    let mut idx = vec![0usize; tables.len()];
    if tables.iter().any(|(_, t)| t.is_empty()) {
        return out;
    }
    loop {
        let rows: Vec<&[Value]> = idx
            .iter()
            .zip(&tables)
            .map(|(&i, (_, t))| t.row(i))
            .collect();
        let ok = q.predicates.iter().all(|p| {
            let (s, c) = col(&p.column);
            pred_holds(&p.op, &rows[s][c])
        }) && q.joins.iter().all(|j| {
            let (a, ca) = col(&j.left);
            let (b, cb) = col(&j.right);
            cmp(&rows[a][ca], &rows[b][cb]) == Some(Ordering::Equal)
        });
        if ok {
            let prov = idx
                .iter()
                .zip(&tables)
                .map(|(&i, (id, t))| TupleRef::new(*id, t.id_at(i)))
                .collect();
            let proj = match &q.projection {
                Projection::Star => rows.iter().flat_map(|r| r.iter().cloned()).collect(),
                Projection::Columns(cs) => cs
                    .iter()
                    .map(|c| {
                        let (s, j) = col(c);
                        rows[s][j].clone()
                    })
                    .collect(),
            };
            out.push((prov, proj));
        }
        let mut d = tables.len();
        loop {
            if d == 0 {
                out.sort_by(|a, b| a.0.cmp(&b.0));
                if let Some(n) = q.limit {
                    out.truncate(n);
                }
                return out;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < tables[d].1.len() {
                break;
            }
            idx[d] = 0;
        }
    }
}

pub fn distinct(rows: &[(Vec<TupleRef>, Vec<Value>)]) -> usize {
    rows.iter().map(|r| &r.1).collect::<HashSet<_>>().len()
}

/// Score straight from the definition using the nested-loop evaluator.
pub fn oracle_score(
    queries: &[SpjQuery],
    weights: &[f64],
    full: &Database,
    approx: &Database,
    frame: usize,
) -> f64 {
    queries
        .iter()
        .zip(weights)
        .map(|(q, w)| {
            let card = distinct(&nested_loop(q, full));
            let got = distinct(&nested_loop(q, approx));
            w * f64::min(1.0, got as f64 / card.min(frame) as f64)
        })
        .sum()
}
