//! Per-column summary statistics.

use std::collections::{BTreeMap, HashMap};

use crate::relational::{ColumnType, Database, Table, Value};

/// Number of quantile buckets used to discretize numeric literals.
pub const QUANTILE_BUCKETS: usize = 16;
/// Categorical frequency maps keep only the most frequent values.
pub const TOP_VALUES: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub enum ColumnStats {
    Numeric {
        count: usize,
        mean: f64,
        std: f64,
        min: f64,
        max: f64,
        /// Inner bucket edges, `QUANTILE_BUCKETS - 1` of them, non-decreasing.
        edges: Vec<f64>,
    },
    Categorical {
        count: usize,
        distinct: usize,
        /// (value, frequency), most frequent first, ties by value.
        top: Vec<(Value, usize)>,
    },
}

impl ColumnStats {
    pub fn std(&self) -> f64 {
        match self {
            ColumnStats::Numeric { std, .. } => *std,
            ColumnStats::Categorical { .. } => 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ColumnStats::Numeric { mean, .. } => *mean,
            ColumnStats::Categorical { .. } => 0.0,
        }
    }

    /// Quantile bucket in `0..QUANTILE_BUCKETS` for a numeric value.
    pub fn bucket(&self, v: f64) -> usize {
        match self {
            ColumnStats::Numeric { edges, .. } => edges.partition_point(|&e| e <= v),
            ColumnStats::Categorical { .. } => 0,
        }
    }

    pub fn frequency(&self, v: &Value) -> usize {
        match self {
            ColumnStats::Categorical { top, .. } => {
                top.iter().find(|(x, _)| x == v).map_or(0, |(_, f)| *f)
            }
            ColumnStats::Numeric { .. } => 0,
        }
    }

    pub fn count(&self) -> usize {
        match self {
            ColumnStats::Numeric { count, .. } | ColumnStats::Categorical { count, .. } => *count,
        }
    }

    fn numeric(values: &mut [f64]) -> ColumnStats {
        let n = values.len();
        if n == 0 {
            return ColumnStats::Numeric {
                count: 0,
                mean: 0.0,
                std: 0.0,
                min: 0.0,
                max: 0.0,
                edges: vec![0.0; QUANTILE_BUCKETS - 1],
            };
        }
        values.sort_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let edges = (1..QUANTILE_BUCKETS)
            .map(|i| values[(i * n / QUANTILE_BUCKETS).min(n - 1)])
            .collect();
        ColumnStats::Numeric {
            count: n,
            mean,
            std: var.sqrt(),
            min: values[0],
            max: values[n - 1],
            edges,
        }
    }

    fn categorical<'a>(values: impl Iterator<Item = &'a Value>) -> ColumnStats {
        let mut freq: HashMap<&Value, usize> = HashMap::new();
        let mut count = 0;
        for v in values {
            *freq.entry(v).or_default() += 1;
            count += 1;
        }
        let distinct = freq.len();
        let mut top: Vec<(Value, usize)> = freq.into_iter().map(|(v, f)| (v.clone(), f)).collect();
        top.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.total_cmp(&b.0)));
        top.truncate(TOP_VALUES);
        ColumnStats::Categorical {
            count,
            distinct,
            top,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TableStats {
    pub rows: usize,
    pub columns: BTreeMap<String, ColumnStats>,
}

impl TableStats {
    pub fn compute(table: &Table) -> TableStats {
        let mut columns = BTreeMap::new();
        for (j, col) in table.columns().iter().enumerate() {
            let non_null = table.rows().iter().map(|r| &r[j]).filter(|v| !v.is_null());
            let stats = match col.ty {
                ColumnType::Integer | ColumnType::Real => {
                    let mut vals: Vec<f64> = non_null.filter_map(Value::as_f64).collect();
                    ColumnStats::numeric(&mut vals)
                }
                ColumnType::Text => ColumnStats::categorical(non_null),
            };
            columns.insert(col.name.clone(), stats);
        }
        TableStats {
            rows: table.len(),
            columns,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatabaseStats {
    pub tables: BTreeMap<String, TableStats>,
}

impl DatabaseStats {
    pub fn compute(db: &Database) -> DatabaseStats {
        DatabaseStats {
            tables: db
                .tables()
                .map(|(_, t)| (t.name().to_string(), TableStats::compute(t)))
                .collect(),
        }
    }

    pub fn column(&self, table: &str, column: &str) -> Option<&ColumnStats> {
        self.tables.get(table)?.columns.get(column)
    }
}
