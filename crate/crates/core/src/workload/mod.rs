//! Weighted query workloads, query embeddings, representative selection,
//! train/test splits and synthetic workload generation.

mod embed;
mod generate;
mod medoids;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::query::{execute, parse_workload_text, SpjQuery};
use crate::relational::Database;

pub(crate) use embed::fnv1a;
pub use embed::{Embedding, FeatureHasher, QueryEmbedder, DEFAULT_DIM};
pub use generate::{generate_workload, sample_frequency_weighted};
pub use medoids::{k_medoids, Clustering};

/// Default number of representatives: `min(|Q|, DEFAULT_REPS)`.
pub const DEFAULT_REPS: usize = 64;

const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Workload {
    queries: Vec<SpjQuery>,
    weights: Vec<f64>,
}

impl Workload {
    /// Builds a workload, normalizing `weights` to sum to one.
    pub fn new(queries: Vec<SpjQuery>, weights: Vec<f64>) -> Result<Workload> {
        if queries.is_empty() {
            return Err(Error::Argument("workload has no queries".into()));
        }
        if queries.len() != weights.len() {
            return Err(Error::Argument(format!(
                "{} queries but {} weights",
                queries.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Argument(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Argument("weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Workload { queries, weights })
    }

    pub fn uniform(queries: Vec<SpjQuery>) -> Result<Workload> {
        let n = queries.len();
        Workload::new(queries, vec![1.0; n])
    }

    /// Parses workload text. Either every query carries a `-- w=` annotation
    /// or none does (uniform weights); aggregates are rewritten to SPJ form.
    pub fn parse(text: &str, db: &Database) -> Result<Workload> {
        let entries = parse_workload_text(text, db)?;
        let annotated = entries.iter().filter(|e| e.weight.is_some()).count();
        if annotated != 0 && annotated != entries.len() {
            return Err(Error::Format(format!(
                "{annotated} of {} queries carry weight annotations; annotate all or none",
                entries.len()
            )));
        }
        let weights = entries.iter().map(|e| e.weight.unwrap_or(1.0)).collect();
        let queries = entries.iter().map(|e| e.query.to_spj()).collect();
        Workload::new(queries, weights)
    }

    pub fn load(path: &Path, db: &Database) -> Result<Workload> {
        Workload::parse(&std::fs::read_to_string(path)?, db)
    }

    /// Serializes with a weight annotation above every query.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (q, w) in self.iter() {
            s.push_str(&format!("-- w={w}\n{q}\n"));
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn queries(&self) -> &[SpjQuery] {
        &self.queries
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SpjQuery, f64)> {
        self.queries.iter().zip(self.weights.iter().copied())
    }

    pub fn weights_normalized(&self) -> bool {
        (self.weights.iter().sum::<f64>() - 1.0).abs() <= WEIGHT_TOLERANCE
    }

    /// Sub-workload of the given query indices, weights re-normalized.
    pub fn subset(&self, idx: &[usize]) -> Result<Workload> {
        Workload::new(
            idx.iter().map(|&i| self.queries[i].clone()).collect(),
            idx.iter().map(|&i| self.weights[i]).collect(),
        )
    }

    /// Concatenation of two workloads with each side keeping its share
    /// proportional to its size.
    pub fn merge(&self, other: &Workload) -> Result<Workload> {
        let (a, b) = (self.len() as f64, other.len() as f64);
        let mut queries = self.queries.clone();
        queries.extend(other.queries.iter().cloned());
        let mut weights: Vec<f64> = self.weights.iter().map(|w| w * a).collect();
        weights.extend(other.weights.iter().map(|w| w * b));
        Workload::new(queries, weights)
    }

    /// Drops queries with an empty result on `db`. Returns the remaining
    /// workload and the indices that were dropped.
    pub fn retain_nonempty(&self, db: &Database, exec: Exec) -> Result<(Workload, Vec<usize>)> {
        let sizes = exec.map(&self.queries, |q| execute(q, db).map(|r| r.len()));
        let mut keep = Vec::new();
        let mut dropped = Vec::new();
        for (i, s) in sizes.into_iter().enumerate() {
            if s? > 0 {
                keep.push(i);
            } else {
                dropped.push(i);
            }
        }
        if keep.is_empty() {
            return Err(Error::Argument(
                "every workload query has an empty result".into(),
            ));
        }
        Ok((self.subset(&keep)?, dropped))
    }

    /// Random disjoint split with `fraction` of the queries on the training side.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Workload, Workload)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::Argument(format!(
                "split fraction {fraction} outside (0,1)"
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = (fraction * self.len() as f64).round() as usize;
        if cut == 0 || cut == self.len() {
            return Err(Error::Argument(format!(
                "splitting {} queries at {fraction} leaves one side empty",
                self.len()
            )));
        }
        let (mut a, mut b) = (idx[..cut].to_vec(), idx[cut..].to_vec());
        a.sort_unstable();
        b.sort_unstable();
        Ok((self.subset(&a)?, self.subset(&b)?))
    }
}

/// Cluster medoids of a workload with aggregated weights.
#[derive(Clone, Debug)]
pub struct Representatives {
    pub workload: Workload,
    /// Index in the source workload of each representative.
    pub source: Vec<usize>,
    /// Representative index for every source query.
    pub assignment: Vec<usize>,
}

/// Pairwise cosine distances, computed row by row.
pub fn distance_matrix(emb: &[Embedding], exec: Exec) -> Vec<Vec<f64>> {
    exec.map(emb, |a| emb.iter().map(|b| a.distance(b)).collect())
}

/// Picks `n_reps` medoid queries by k-medoids over cosine distance. Each
/// medoid's weight is the total weight of its cluster.
pub fn select_representatives(
    w: &Workload,
    emb: &[Embedding],
    n_reps: usize,
    seed: u64,
    exec: Exec,
) -> Result<Representatives> {
    if n_reps > w.len() || n_reps == 0 {
        return Err(Error::Argument(format!(
            "cannot select {n_reps} representatives from {} queries",
            w.len()
        )));
    }
    if emb.len() != w.len() {
        return Err(Error::Argument(
            "one embedding per query is required".into(),
        ));
    }
    if n_reps == w.len() {
        return Ok(Representatives {
            workload: w.clone(),
            source: (0..w.len()).collect(),
            assignment: (0..w.len()).collect(),
        });
    }
    let c = k_medoids(&distance_matrix(emb, exec), n_reps, seed)?;
    let mut weights = vec![0.0; n_reps];
    for (i, &a) in c.assignment.iter().enumerate() {
        weights[a] += w.weights()[i];
    }
    let workload = Workload::new(
        c.medoids.iter().map(|&m| w.queries()[m].clone()).collect(),
        weights,
    )?;
    Ok(Representatives {
        workload,
        source: c.medoids,
        assignment: c.assignment,
    })
}
