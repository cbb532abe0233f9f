//! Select-project-join queries: AST, parser, evaluator, relaxation and
//! aggregate handling.

mod aggregate;
mod exec;
mod parse;
mod relax;

use std::fmt;

use crate::relational::Value;

pub use aggregate::{
    estimate_aggregate, evaluate_aggregate, rewrite_aggregate, AggregateAnswer, GroupKey,
};
pub(crate) use exec::bind;
pub use exec::{execute, match_tuple, ResultSet};
pub use parse::{parse_sql, parse_workload_text, WorkloadEntry};
pub use relax::relax;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        ColumnRef {
            table: table.into(),
            column: column.into(),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PredicateOp {
    Cmp(CmpOp, Value),
    In(Vec<Value>),
    Between(Value, Value),
    /// `LIKE 'prefix%'`
    LikePrefix(String),
}

impl PredicateOp {
    /// Short operator tag used in featurization.
    pub fn tag(&self) -> &'static str {
        match self {
            PredicateOp::Cmp(op, _) => op.symbol(),
            PredicateOp::In(_) => "IN",
            PredicateOp::Between(..) => "BETWEEN",
            PredicateOp::LikePrefix(_) => "LIKE",
        }
    }

    /// Evaluates the predicate on one cell. Nulls never match.
    pub fn matches(&self, v: &Value) -> bool {
        use std::cmp::Ordering::*;
        if v.is_null() {
            return false;
        }
        match self {
            PredicateOp::Cmp(op, lit) => match v.compare(lit) {
                None => false,
                Some(o) => match op {
                    CmpOp::Eq => o == Equal,
                    CmpOp::Ne => o != Equal,
                    CmpOp::Lt => o == Less,
                    CmpOp::Le => o != Greater,
                    CmpOp::Gt => o == Greater,
                    CmpOp::Ge => o != Less,
                },
            },
            PredicateOp::In(list) => list.iter().any(|l| v.compare(l) == Some(Equal)),
            PredicateOp::Between(lo, hi) => {
                matches!(v.compare(lo), Some(Greater | Equal))
                    && matches!(v.compare(hi), Some(Less | Equal))
            }
            PredicateOp::LikePrefix(p) => v.as_str().is_some_and(|s| s.starts_with(p.as_str())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Predicate {
    pub column: ColumnRef,
    pub op: PredicateOp,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct JoinCondition {
    pub left: ColumnRef,
    pub right: ColumnRef,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Projection {
    Star,
    Columns(Vec<ColumnRef>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpjQuery {
    pub tables: Vec<String>,
    pub joins: Vec<JoinCondition>,
    pub predicates: Vec<Predicate>,
    pub projection: Projection,
    pub limit: Option<usize>,
}

impl SpjQuery {
    pub fn star(table: impl Into<String>) -> Self {
        SpjQuery {
            tables: vec![table.into()],
            joins: Vec::new(),
            predicates: Vec::new(),
            projection: Projection::Star,
            limit: None,
        }
    }

    pub fn with_predicate(mut self, column: ColumnRef, op: PredicateOp) -> Self {
        self.predicates.push(Predicate { column, op });
        self
    }

    pub fn without_limit(&self) -> SpjQuery {
        SpjQuery {
            limit: None,
            ..self.clone()
        }
    }

    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.tables.iter().position(|t| t == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Count => "COUNT",
            AggFunc::Sum => "SUM",
            AggFunc::Avg => "AVG",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AggregateQuery {
    pub inner: SpjQuery,
    pub func: AggFunc,
    /// `None` means `COUNT(*)`.
    pub column: Option<ColumnRef>,
    pub group_by: Vec<ColumnRef>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Query {
    Spj(SpjQuery),
    Aggregate(AggregateQuery),
}

impl Query {
    /// The SPJ form: aggregates are rewritten by dropping the aggregate.
    pub fn to_spj(&self) -> SpjQuery {
        match self {
            Query::Spj(q) => q.clone(),
            Query::Aggregate(a) => rewrite_aggregate(a),
        }
    }
}

fn write_literal(f: &mut fmt::Formatter<'_>, v: &Value) -> fmt::Result {
    match v {
        Value::Text(s) => write!(f, "'{}'", s.replace('\'', "''")),
        other => write!(f, "{other}"),
    }
}

fn write_from_where(f: &mut fmt::Formatter<'_>, q: &SpjQuery) -> fmt::Result {
    write!(f, " FROM {}", q.tables[0])?;
    let mut placed = vec![false; q.joins.len()];
    for (i, t) in q.tables.iter().enumerate().skip(1) {
        let seen = &q.tables[..=i];
        let conds: Vec<usize> = q
            .joins
            .iter()
            .enumerate()
            .filter(|(j, c)| {
                !placed[*j]
                    && (c.left.table == *t || c.right.table == *t)
                    && seen.contains(&c.left.table)
                    && seen.contains(&c.right.table)
            })
            .map(|(j, _)| j)
            .collect();
        if conds.is_empty() {
            write!(f, ", {t}")?;
            continue;
        }
        write!(f, " JOIN {t} ON ")?;
        for (n, j) in conds.iter().enumerate() {
            placed[*j] = true;
            if n > 0 {
                f.write_str(" AND ")?;
            }
            write!(f, "{} = {}", q.joins[*j].left, q.joins[*j].right)?;
        }
    }
    let mut clauses: Vec<String> = q
        .joins
        .iter()
        .zip(&placed)
        .filter(|(_, p)| !**p)
        .map(|(c, _)| format!("{} = {}", c.left, c.right))
        .collect();
    for p in &q.predicates {
        clauses.push(p.to_string());
    }
    if !clauses.is_empty() {
        write!(f, " WHERE {}", clauses.join(" AND "))?;
    }
    Ok(())
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ", self.column)?;
        match &self.op {
            PredicateOp::Cmp(op, v) => {
                write!(f, "{} ", op.symbol())?;
                write_literal(f, v)
            }
            PredicateOp::In(vs) => {
                f.write_str("IN (")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write_literal(f, v)?;
                }
                f.write_str(")")
            }
            PredicateOp::Between(lo, hi) => {
                f.write_str("BETWEEN ")?;
                write_literal(f, lo)?;
                f.write_str(" AND ")?;
                write_literal(f, hi)
            }
            PredicateOp::LikePrefix(p) => write!(f, "LIKE '{}%'", p.replace('\'', "''")),
        }
    }
}

impl fmt::Display for SpjQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        match &self.projection {
            Projection::Star => f.write_str("*")?,
            Projection::Columns(cols) => {
                let s: Vec<String> = cols.iter().map(|c| c.to_string()).collect();
                f.write_str(&s.join(", "))?;
            }
        }
        write_from_where(f, self)?;
        if let Some(n) = self.limit {
            write!(f, " LIMIT {n}")?;
        }
        Ok(())
    }
}

impl fmt::Display for AggregateQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        for g in &self.group_by {
            write!(f, "{g}, ")?;
        }
        match &self.column {
            Some(c) => write!(f, "{}({c})", self.func.name())?,
            None => write!(f, "{}(*)", self.func.name())?,
        }
        write_from_where(f, &self.inner)?;
        if !self.group_by.is_empty() {
            let s: Vec<String> = self.group_by.iter().map(|c| c.to_string()).collect();
            write!(f, " GROUP BY {}", s.join(", "))?;
        }
        if let Some(n) = self.inner.limit {
            write!(f, " LIMIT {n}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Query::Spj(q) => q.fmt(f),
            Query::Aggregate(a) => a.fmt(f),
        }
    }
}
