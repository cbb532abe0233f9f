//! The approximation-set score, diversity, aggregate relative error and the
//! exhaustive optimizer.

mod brute;
mod indexed;

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::query::{execute, AggregateAnswer};
use crate::relational::{materialize, ApproximationSet, Database, Value};
use crate::workload::Workload;

pub use brute::{brute_force_opt, BruteForce};
pub use indexed::{IndexedScorer, TupleMask};

/// Default frame size: the number of rows a user is assumed to look at.
pub const DEFAULT_FRAME: usize = 50;

/// Frame size plus the distinct full-database result size of every query.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreConfig {
    pub frame: usize,
    pub cardinalities: Vec<usize>,
}

impl ScoreConfig {
    pub fn new(frame: usize, cardinalities: Vec<usize>) -> Result<ScoreConfig> {
        if frame == 0 {
            return Err(Error::Config("frame size must be positive".into()));
        }
        Ok(ScoreConfig {
            frame,
            cardinalities,
        })
    }

    /// Executes every query on the full database to cache its result size.
    pub fn compute(w: &Workload, db: &Database, frame: usize, exec: Exec) -> Result<ScoreConfig> {
        let cards = exec
            .map(w.queries(), |q| execute(q, db).map(|r| r.distinct()))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        ScoreConfig::new(frame, cards)
    }

    fn check(&self, w: &Workload) -> Result<()> {
        if self.cardinalities.len() != w.len() {
            return Err(Error::Config(format!(
                "{} cached cardinalities for {} queries",
                self.cardinalities.len(),
                w.len()
            )));
        }
        if let Some(i) = self.cardinalities.iter().position(|&c| c == 0) {
            return Err(Error::Config(format!("query {i} has an empty full result")));
        }
        Ok(())
    }
}

/// `min(1, distinct / min(frame, card))`
pub fn ratio(distinct: usize, card: usize, frame: usize) -> f64 {
    (distinct as f64 / card.min(frame) as f64).min(1.0)
}

/// `Σ w·r / Σ w`. Weights already sum to about one; dividing by the same
/// sum makes an all-ones ratio vector score exactly 1.
pub fn weighted(ratios: impl Iterator<Item = f64>, weights: &[f64]) -> f64 {
    let (num, den) = ratios
        .zip(weights)
        .fold((0.0, 0.0), |(n, d), (r, &w)| (n + r * w, d + w));
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreReport {
    pub total: f64,
    pub ratios: Vec<f64>,
}

impl ScoreReport {
    pub fn from_ratios(ratios: Vec<f64>, weights: &[f64]) -> ScoreReport {
        let total = weighted(ratios.iter().copied(), weights);
        ScoreReport { total, ratios }
    }

    /// Human-readable report.
    pub fn to_text(&self, w: &Workload) -> String {
        let mut s = format!("score {:.6}\n", self.total);
        for (i, ((q, wt), r)) in w.iter().zip(&self.ratios).enumerate() {
            let _ = writeln!(s, "[{i}] w={wt:.4} ratio={r:.4}  {q}");
        }
        s
    }

    /// Machine-readable form: `index ratio` per line, then `total <score>`.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (i, r) in self.ratios.iter().enumerate() {
            let _ = writeln!(s, "{i} {r}");
        }
        let _ = writeln!(s, "total {}", self.total);
        s
    }
}

/// Scores `set` by executing every query on the materialized set.
pub fn score(
    set: &ApproximationSet,
    w: &Workload,
    cfg: &ScoreConfig,
    db: &Database,
    exec: Exec,
) -> Result<ScoreReport> {
    cfg.check(w)?;
    let approx = materialize(set, db);
    let distinct = exec
        .map(w.queries(), |q| execute(q, &approx).map(|r| r.distinct()))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let ratios = distinct
        .iter()
        .zip(&cfg.cardinalities)
        .map(|(&d, &c)| ratio(d, c, cfg.frame))
        .collect();
    Ok(ScoreReport::from_ratios(ratios, w.weights()))
}

/// Mean pairwise Jaccard distance between rows, each row taken as the set of
/// its (column, value) pairs. Fewer than two rows give 0.
pub fn diversity(rows: &[Vec<Value>]) -> f64 {
    let n = rows.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&rows[i], &rows[j]);
            let shared = a.iter().zip(b).filter(|(x, y)| x == y).count();
            let union = a.len() + b.len() - shared;
            total += if union == 0 {
                0.0
            } else {
                1.0 - shared as f64 / union as f64
            };
        }
    }
    total / (n * (n - 1) / 2) as f64
}

/// `|pred - truth| / |truth|`; for grouped answers the mean over the true
/// groups, where a group missing from the prediction counts as 1.
pub fn relative_error(pred: &AggregateAnswer, truth: &AggregateAnswer) -> Result<f64> {
    match (pred, truth) {
        (AggregateAnswer::Scalar(p), AggregateAnswer::Scalar(t)) => {
            if *t == 0.0 {
                return Err(Error::Undefined(
                    "relative error against a zero true answer".into(),
                ));
            }
            Ok((p - t).abs() / t.abs())
        }
        (AggregateAnswer::Groups(p), AggregateAnswer::Groups(t)) => {
            if t.is_empty() {
                return Err(Error::Undefined(
                    "relative error against an empty grouped answer".into(),
                ));
            }
            let sum: f64 = t
                .iter()
                .map(|(k, tv)| match p.get(k) {
                    None => 1.0,
                    Some(pv) if *tv == 0.0 => {
                        if *pv == 0.0 {
                            0.0
                        } else {
                            1.0
                        }
                    }
                    Some(pv) => (pv - tv).abs() / tv.abs(),
                })
                .sum();
            Ok(sum / t.len() as f64)
        }
        _ => Err(Error::Argument(
            "scalar and grouped answers are not comparable".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::GroupKey;
    use std::collections::BTreeMap;

    #[test]
    fn diversity_cases() {
        let r = |xs: &[i64]| xs.iter().map(|&x| Value::Int(x)).collect::<Vec<_>>();
        assert_eq!(diversity(&[r(&[1, 2]), r(&[1, 2])]), 0.0);
        assert_eq!(diversity(&[r(&[1, 2]), r(&[3, 4])]), 1.0);
        assert_eq!(diversity(&[r(&[1])]), 0.0);
    }

    #[test]
    fn relative_error_cases() {
        let s = AggregateAnswer::Scalar;
        assert_eq!(relative_error(&s(5.0), &s(5.0)).unwrap(), 0.0);
        assert!((relative_error(&s(90.0), &s(100.0)).unwrap() - 0.1).abs() < 1e-12);
        assert!(matches!(
            relative_error(&s(1.0), &s(0.0)),
            Err(Error::Undefined(_))
        ));
        let g = |kv: &[(&str, f64)]| {
            AggregateAnswer::Groups(
                kv.iter()
                    .map(|(k, v)| (GroupKey(vec![Value::text(k)]), *v))
                    .collect::<BTreeMap<_, _>>(),
            )
        };
        let e = relative_error(&g(&[("a", 10.0)]), &g(&[("a", 10.0), ("b", 20.0)])).unwrap();
        assert!((e - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ratio_clamps() {
        assert_eq!(ratio(80, 200, 50), 1.0);
        assert_eq!(ratio(5, 10, 50), 0.5);
        assert_eq!(ratio(0, 10, 50), 0.0);
    }
}
