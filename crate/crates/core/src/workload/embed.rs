//! Deterministic structural query embeddings via signed feature hashing.

use crate::query::{PredicateOp, SpjQuery};
use crate::relational::Value;
use crate::stats::{ColumnStats, DatabaseStats};

pub const DEFAULT_DIM: usize = 256;

/// Weight of the constant feature stored in dimension 0.
const BIAS: f64 = 0.25;
const STRUCTURE: f64 = 1.0;
const LITERAL: f64 = 0.5;

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Unit-norm query embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn cosine(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn distance(&self, other: &Embedding) -> f64 {
        (1.0 - self.cosine(other)).max(0.0)
    }
}

/// Hashes string features into `dim - 1` signed slots; slot 0 carries a
/// constant bias so that no embedding is ever the zero vector.
#[derive(Clone, Debug)]
pub struct FeatureHasher {
    dim: usize,
    acc: Vec<f64>,
}

impl FeatureHasher {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 2, "embedding dimension must be at least 2");
        let mut acc = vec![0.0; dim];
        acc[0] = BIAS;
        FeatureHasher { dim, acc }
    }

    pub fn add(&mut self, feature: &str, weight: f64) {
        let h = fnv1a(feature.as_bytes());
        let slot = 1 + (h % (self.dim as u64 - 1)) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        self.acc[slot] += sign * weight;
    }

    pub fn finish(self) -> Embedding {
        let norm = self.acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        Embedding(self.acc.into_iter().map(|x| x / norm).collect())
    }
}

/// Embeds queries from their tables, joins, predicate shapes and literals.
/// Numeric literals are bucketized with the column's quantile edges.
#[derive(Clone, Debug)]
pub struct QueryEmbedder {
    stats: DatabaseStats,
    dim: usize,
}

impl QueryEmbedder {
    pub fn new(stats: DatabaseStats, dim: usize) -> Self {
        QueryEmbedder { stats, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn stats(&self) -> &DatabaseStats {
        &self.stats
    }

    fn literal(&self, h: &mut FeatureHasher, col: &str, cs: Option<&ColumnStats>, v: &Value) {
        match (v.as_f64(), cs) {
            (Some(x), Some(cs @ ColumnStats::Numeric { .. })) => {
                h.add(&format!("num:{col}:{}", cs.bucket(x)), LITERAL);
            }
            _ => h.add(&format!("lit:{col}:{v}"), LITERAL),
        }
    }

    pub fn embed(&self, q: &SpjQuery) -> Embedding {
        let mut h = FeatureHasher::new(self.dim);
        for t in &q.tables {
            h.add(&format!("table:{t}"), STRUCTURE);
        }
        for j in &q.joins {
            let (a, b) = (j.left.to_string(), j.right.to_string());
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            h.add(&format!("join:{a}={b}"), STRUCTURE);
        }
        for p in &q.predicates {
            let col = p.column.to_string();
            h.add(&format!("pred:{col}:{}", p.op.tag()), STRUCTURE);
            let cs = self.stats.column(&p.column.table, &p.column.column);
            match &p.op {
                PredicateOp::Cmp(_, v) => self.literal(&mut h, &col, cs, v),
                PredicateOp::Between(lo, hi) => {
                    self.literal(&mut h, &col, cs, lo);
                    self.literal(&mut h, &col, cs, hi);
                }
                PredicateOp::In(vs) => {
                    for v in vs {
                        self.literal(&mut h, &col, cs, v);
                    }
                }
                PredicateOp::LikePrefix(s) => h.add(&format!("like:{col}:{s}"), LITERAL),
            }
        }
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{parse_sql, Query};
    use crate::relational::{Column, ColumnType, Database, Table};

    fn db() -> Database {
        let mk = |name: &str, cols: &[(&str, ColumnType)]| {
            Table::new(
                name,
                cols.iter().map(|(c, t)| Column::new(*c, *t)).collect(),
                (0..20)
                    .map(|i| {
                        cols.iter()
                            .map(|(_, t)| match t {
                                ColumnType::Text => Value::text(&format!("v{}", i % 4)),
                                _ => Value::Int(i),
                            })
                            .collect()
                    })
                    .collect(),
            )
            .unwrap()
        };
        Database::from_tables([
            mk("r", &[("a", ColumnType::Integer), ("b", ColumnType::Text)]),
            mk("s", &[("c", ColumnType::Integer), ("d", ColumnType::Text)]),
        ])
        .unwrap()
    }

    fn q(sql: &str, db: &Database) -> SpjQuery {
        match parse_sql(sql, db).unwrap() {
            Query::Spj(q) => q,
            _ => unreachable!(),
        }
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let db = db();
        let e = QueryEmbedder::new(DatabaseStats::compute(&db), DEFAULT_DIM);
        let a = e.embed(&q("SELECT * FROM r WHERE a > 3", &db));
        assert_eq!(a, e.embed(&q("SELECT * FROM r WHERE a > 3", &db)));
        assert!((a.cosine(&a) - 1.0).abs() < 1e-12);
        let b = e.embed(&q("SELECT * FROM r WHERE a > 3 AND b = 'v1'", &db));
        assert!(a.cosine(&b) < 1.0);
    }

    #[test]
    fn disjoint_queries_are_far_apart() {
        let db = db();
        let e = QueryEmbedder::new(DatabaseStats::compute(&db), DEFAULT_DIM);
        let a = e.embed(&q(
            "SELECT * FROM r WHERE a BETWEEN 2 AND 5 AND b = 'v0'",
            &db,
        ));
        let b = e.embed(&q("SELECT * FROM s WHERE c < 9 AND d = 'v2'", &db));
        assert!(a.cosine(&b) <= 0.2, "{}", a.cosine(&b));
    }

    #[test]
    fn fnv_reference_values() {
        // published FNV-1a 64 test vectors
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }
}
