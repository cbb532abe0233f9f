use crate::error::{Error, Result};
use crate::relational::Value;
use crate::stats::{ColumnStats, DatabaseStats};

use super::{CmpOp, Predicate, PredicateOp, SpjQuery};

fn shift(v: &Value, delta: f64) -> Value {
    match v {
        Value::Int(i) if delta.fract() == 0.0 => Value::Int(i + delta as i64),
        other => match other.as_f64() {
            Some(x) => Value::Real(x + delta),
            None => other.clone(),
        },
    }
}

/// Widens every predicate of `q` so that its result is a superset of the
/// original. `widen = 1` returns `q` unchanged.
pub fn relax(q: &SpjQuery, widen: f64, stats: &DatabaseStats) -> Result<SpjQuery> {
    if !(widen >= 1.0) {
        return Err(Error::Argument(format!(
            "widen factor must be >= 1, got {widen}"
        )));
    }
    if widen == 1.0 {
        return Ok(q.clone());
    }
    let mut out = q.clone();
    for p in &mut out.predicates {
        let Some(cs) = stats.column(&p.column.table, &p.column.column) else {
            continue;
        };
        p.op = relax_op(p, cs, widen);
    }
    Ok(out)
}

fn relax_op(p: &Predicate, cs: &ColumnStats, widen: f64) -> PredicateOp {
    match cs {
        ColumnStats::Numeric { std, .. } => {
            let d = (widen - 1.0) * std;
            match &p.op {
                PredicateOp::Cmp(CmpOp::Lt | CmpOp::Le, v) => {
                    PredicateOp::Cmp(cmp_of(&p.op), shift(v, d))
                }
                PredicateOp::Cmp(CmpOp::Gt | CmpOp::Ge, v) => {
                    PredicateOp::Cmp(cmp_of(&p.op), shift(v, -d))
                }
                PredicateOp::Between(lo, hi) => PredicateOp::Between(shift(lo, -d), shift(hi, d)),
                PredicateOp::Cmp(CmpOp::Eq, v) => {
                    let h = 0.5 * widen * std;
                    PredicateOp::Between(shift(v, -h), shift(v, h))
                }
                other => other.clone(),
            }
        }
        ColumnStats::Categorical { top, .. } => match &p.op {
            PredicateOp::Cmp(CmpOp::Eq, v) => {
                let extra = (widen.floor() as usize).saturating_sub(1);
                let mut vals = vec![v.clone()];
                vals.extend(
                    top.iter()
                        .map(|(x, _)| x)
                        .filter(|x| *x != v)
                        .take(extra)
                        .cloned(),
                );
                PredicateOp::In(vals)
            }
            other => other.clone(),
        },
    }
}

fn cmp_of(op: &PredicateOp) -> CmpOp {
    match op {
        PredicateOp::Cmp(c, _) => *c,
        _ => unreachable!(),
    }
}
