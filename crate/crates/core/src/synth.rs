//! Seeded synthetic databases and workloads for tests and benchmarks.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::query::{parse_sql, AggregateQuery, Query};
use crate::relational::{Column, ColumnType, Database, Table, Value};
use crate::rl::TrainConfig;
use crate::workload::Workload;

/// A database with a workload over it.
#[derive(Clone, Debug)]
pub struct Instance {
    pub db: Database,
    pub workload: Workload,
}

pub const TOY_ROWS: usize = 200;
pub const TOY_QUERIES: usize = 30;
pub const TOY_BUDGET: usize = 20;
/// Rows of the toy table that any toy query can return.
pub const TOY_HOT: usize = 26;

/// Single table `items(id, hk, grp, val)` of 200 rows where `hk` is a
/// shuffled key. Thirty weighted queries select short `hk` windows inside
/// the 26 hot keys; a third of them project only `grp`.
pub fn toy_instance(seed: u64) -> Result<Instance> {
    toy_with(seed, None)
}

/// Training settings that suit the toy instances: every representative in
/// each episode, more workers and faster learning than the defaults.
pub fn toy_config(seed: u64) -> TrainConfig {
    TrainConfig {
        k: TOY_BUDGET,
        widen: 4.0,
        batch_queries: TOY_QUERIES,
        workers: 8,
        lr: 1e-4,
        critic_lr: 3e-3,
        patience: 60,
        seed,
        ..TrainConfig::default()
    }
}

/// Template count of [`toy_templated`].
pub const TOY_TEMPLATES: usize = 6;

/// The toy table with a templated workload: six base windows spread over
/// the whole key range, each repeated five times with the upper bound
/// jittered by at most one key.
pub fn toy_templated(seed: u64) -> Result<Instance> {
    toy_with(seed, Some(TOY_TEMPLATES))
}

fn toy_with(seed: u64, templates: Option<usize>) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keys: Vec<i64> = (0..TOY_ROWS as i64).collect();
    keys.shuffle(&mut rng);
    let rows = keys
        .iter()
        .enumerate()
        .map(|(i, &hk)| {
            vec![
                Value::Int(i as i64),
                Value::Int(hk),
                Value::text(["red", "green", "blue", "gray"][rng.random_range(0..4)]),
                Value::Real((rng.random_range(0.0..100.0f64) * 100.0).round() / 100.0),
            ]
        })
        .collect();
    let table = Table::new(
        "items",
        vec![
            Column::new("id", ColumnType::Integer),
            Column::new("hk", ColumnType::Integer),
            Column::new("grp", ColumnType::Text),
            Column::new("val", ColumnType::Real),
        ],
        rows,
    )?;
    let db = Database::from_tables([table])?;
    let window = |rng: &mut ChaCha8Rng| {
        let width = rng.random_range(1..=5);
        let lo = rng.random_range(0..=(TOY_HOT - width)) as i64;
        (lo, lo + width as i64 - 1)
    };
    let span = TOY_ROWS / templates.unwrap_or(1);
    let bases: Vec<(i64, i64)> = (0..templates.unwrap_or(0))
        .map(|t| {
            let (lo, hi) = window(&mut rng);
            let shift = (t * span) as i64 + rng.random_range(0..(span - TOY_HOT)) as i64;
            (lo + shift, hi + shift)
        })
        .collect();
    let top = TOY_ROWS as i64 - 1;
    let mut text = String::new();
    for q in 0..TOY_QUERIES {
        let (lo, hi) = if bases.is_empty() {
            window(&mut rng)
        } else {
            let (lo, hi) = bases[q % bases.len()];
            (lo, (hi + rng.random_range(0..=1)).min(top))
        };
        let w = (rng.random_range(0.25..1.0f64) * 100.0).round() / 100.0;
        let proj = if q % 3 == 2 { "grp" } else { "*" };
        text.push_str(&format!(
            "-- w={w}\nSELECT {proj} FROM items WHERE hk BETWEEN {lo} AND {hi}\n"
        ));
    }
    let workload = Workload::parse(&text, &db)?;
    Ok(Instance { db, workload })
}

/// Tables of the cluster benchmarks: each has its own column names so
/// queries on different tables share no predicate features.
const CLUSTER_TABLES: [(&str, &str, &str, &str); 3] = [
    ("orders", "region", "amount", "qty"),
    ("sessions", "channel", "dwell", "clicks"),
    ("tickets", "kind", "priority", "age"),
];

pub const CLUSTER_ROWS: usize = 300;

/// A database with one query cluster per table.
#[derive(Clone, Debug)]
pub struct ClusterBench {
    pub db: Database,
    /// `clusters[i]` queries table `i` only.
    pub clusters: Vec<Vec<crate::query::SpjQuery>>,
}

impl ClusterBench {
    pub fn workload(&self, idx: &[usize]) -> Result<Workload> {
        Workload::uniform(
            idx.iter()
                .flat_map(|&i| self.clusters[i].iter().cloned())
                .collect(),
        )
    }
}

/// `n_clusters` (≤ 3) tables of 300 rows. Cluster `i` holds
/// `per_cluster` range queries on table `i` restricted to its first
/// category and to the low third of the range column.
pub fn cluster_bench(n_clusters: usize, per_cluster: usize, seed: u64) -> Result<ClusterBench> {
    assert!(n_clusters <= CLUSTER_TABLES.len(), "at most three clusters");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut db = Database::new();
    let mut clusters = Vec::new();
    for &(name, cat, x, y) in &CLUSTER_TABLES[..n_clusters] {
        let rows = (0..CLUSTER_ROWS)
            .map(|i| {
                vec![
                    Value::Int(i as i64),
                    Value::text(&format!("c{}", rng.random_range(0..4))),
                    Value::Int(rng.random_range(0..300)),
                    Value::Int(rng.random_range(0..50)),
                ]
            })
            .collect();
        db.add_table(Table::new(
            name,
            vec![
                Column::new("id", ColumnType::Integer),
                Column::new(cat, ColumnType::Text),
                Column::new(x, ColumnType::Integer),
                Column::new(y, ColumnType::Integer),
            ],
            rows,
        )?)?;
        let mut qs = Vec::new();
        while qs.len() < per_cluster {
            let width = rng.random_range(10..=30);
            let lo = rng.random_range(0..=(100 - width));
            let sql = format!(
                "SELECT * FROM {name} WHERE {x} BETWEEN {lo} AND {} AND {cat} = 'c0'",
                lo + width
            );
            qs.push(sql);
        }
        clusters.push(qs);
    }
    let clusters = clusters
        .into_iter()
        .map(|qs| {
            qs.iter()
                .map(|s| parse_sql(s, &db).map(|q| q.to_spj()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClusterBench { db, clusters })
}

/// `u(id, g, x)`: `rows` rows, five groups, `x` uniform on [0, 100).
pub fn uniform_table(rows: usize, seed: u64) -> Result<Database> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows)
        .map(|i| {
            vec![
                Value::Int(i as i64),
                Value::text(&format!("g{}", rng.random_range(0..5))),
                Value::Real(rng.random_range(0.0..100.0)),
            ]
        })
        .collect();
    let t = Table::new(
        "u",
        vec![
            Column::new("id", ColumnType::Integer),
            Column::new("g", ColumnType::Text),
            Column::new("x", ColumnType::Real),
        ],
        data,
    )?;
    Database::from_tables([t])
}

/// The six aggregate classes: SUM, AVG and COUNT, each plain and grouped.
pub const AGG_CLASSES: [&str; 6] = ["SUM", "G+SUM", "AVG", "G+AVG", "CNT", "G+CNT"];

/// `n` aggregate queries of one class over [`uniform_table`], each over a
/// random range of `x` at least 30 wide.
pub fn uniform_aggregates(
    db: &Database,
    class: &str,
    n: usize,
    seed: u64,
) -> Result<Vec<AggregateQuery>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (func, grouped) = match class {
        "SUM" => ("SUM(x)", false),
        "G+SUM" => ("SUM(x)", true),
        "AVG" => ("AVG(x)", false),
        "G+AVG" => ("AVG(x)", true),
        "CNT" => ("COUNT(*)", false),
        "G+CNT" => ("COUNT(*)", true),
        _ => {
            return Err(crate::Error::Argument(format!(
                "unknown aggregate class {class:?}"
            )))
        }
    };
    (0..n)
        .map(|_| {
            let lo = rng.random_range(0.0..50.0f64).floor();
            let hi = lo + rng.random_range(30.0..50.0f64).floor();
            let sql = if grouped {
                format!("SELECT g, {func} FROM u WHERE x BETWEEN {lo} AND {hi} GROUP BY g")
            } else {
                format!("SELECT {func} FROM u WHERE x BETWEEN {lo} AND {hi}")
            };
            match parse_sql(&sql, db)? {
                Query::Aggregate(a) => Ok(a),
                Query::Spj(_) => unreachable!("aggregate text parses to an aggregate"),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::execute;

    #[test]
    fn toy_shape() {
        let t = toy_instance(0).unwrap();
        assert_eq!(t.db.total_rows(), TOY_ROWS);
        assert_eq!(t.workload.len(), TOY_QUERIES);
        for q in t.workload.queries() {
            let n = execute(q, &t.db).unwrap().len();
            assert!((1..=5).contains(&n));
        }
        assert_eq!(toy_instance(0).unwrap().workload, t.workload);
        let t = toy_templated(0).unwrap();
        assert_eq!(t.workload.len(), TOY_QUERIES);
        for q in t.workload.queries() {
            assert!((1..=7).contains(&execute(q, &t.db).unwrap().len()));
        }
    }

    #[test]
    fn clusters_and_aggregates() {
        let c = cluster_bench(3, 5, 1).unwrap();
        assert_eq!(c.clusters.len(), 3);
        assert_eq!(c.db.table_count(), 3);
        assert_eq!(c.workload(&[0, 2]).unwrap().len(), 10);
        let db = uniform_table(100, 2).unwrap();
        for class in AGG_CLASSES {
            assert_eq!(uniform_aggregates(&db, class, 3, 0).unwrap().len(), 3);
        }
    }
}
