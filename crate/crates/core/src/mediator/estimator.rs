//! Nearest-neighbour answerability estimates from the training workload.

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::query::{execute, SpjQuery};
use crate::relational::Database;
use crate::scoring::ratio;
use crate::workload::{Embedding, QueryEmbedder};

pub const DEFAULT_NEIGHBOURS: usize = 8;
pub const DEFAULT_TEMPERATURE: f64 = 0.1;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorParams {
    /// Neighbours consulted (j).
    pub neighbours: usize,
    /// Softmax temperature over similarities.
    pub temperature: f64,
    /// Predicted ratios at or above this count as answerable.
    pub threshold: f64,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        EstimatorParams {
            neighbours: DEFAULT_NEIGHBOURS,
            temperature: DEFAULT_TEMPERATURE,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl EstimatorParams {
    pub fn validate(&self) -> Result<()> {
        if self.neighbours == 0 {
            return Err(Error::Config(
                "estimator needs at least one neighbour".into(),
            ));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub ratio: f64,
    pub answerable: bool,
    /// Largest cosine similarity to a training query.
    pub max_sim: f64,
}

impl Estimate {
    /// Deviation confidence: one minus the largest training similarity.
    pub fn deviation(&self) -> f64 {
        1.0 - self.max_sim
    }
}

/// Training embeddings paired with the ratios their queries achieved on the
/// current approximation set.
#[derive(Clone, Debug)]
pub struct Estimator {
    embedder: QueryEmbedder,
    queries: Vec<SpjQuery>,
    embeddings: Vec<Embedding>,
    ratios: Vec<f64>,
    params: EstimatorParams,
}

/// Ratio of `q` answered on `approx`, against its cardinality on `full`.
/// Queries with an empty full result count as fully answered.
pub fn achieved_ratio(
    q: &SpjQuery,
    approx: &Database,
    full: &Database,
    frame: usize,
) -> Result<f64> {
    let card = execute(q, full)?.distinct();
    if card == 0 {
        return Ok(1.0);
    }
    Ok(ratio(execute(q, approx)?.distinct(), card, frame))
}

impl Estimator {
    pub fn new(
        embedder: QueryEmbedder,
        queries: Vec<SpjQuery>,
        ratios: Vec<f64>,
        params: EstimatorParams,
    ) -> Result<Estimator> {
        params.validate()?;
        if queries.len() != ratios.len() {
            return Err(Error::Argument(format!(
                "{} queries but {} ratios",
                queries.len(),
                ratios.len()
            )));
        }
        if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Argument("achieved ratios must lie in [0, 1]".into()));
        }
        let embeddings = queries.iter().map(|q| embedder.embed(q)).collect();
        Ok(Estimator {
            embedder,
            queries,
            embeddings,
            ratios,
            params,
        })
    }

    /// Executes every training query on `approx` to label it.
    pub fn build(
        embedder: QueryEmbedder,
        queries: &[SpjQuery],
        approx: &Database,
        full: &Database,
        frame: usize,
        params: EstimatorParams,
        exec: Exec,
    ) -> Result<Estimator> {
        let ratios = exec
            .map(queries, |q| achieved_ratio(q, approx, full, frame))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Estimator::new(embedder, queries.to_vec(), ratios, params)
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn params(&self) -> &EstimatorParams {
        &self.params
    }

    pub fn queries(&self) -> &[SpjQuery] {
        &self.queries
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn embedder(&self) -> &QueryEmbedder {
        &self.embedder
    }

    pub fn embed(&self, q: &SpjQuery) -> Embedding {
        self.embedder.embed(q)
    }

    pub fn estimate(&self, q: &SpjQuery) -> Result<Estimate> {
        self.estimate_embedding(&self.embed(q))
    }

    /// Softmax(sim / τ)-weighted mean of the ratios of the j most similar
    /// training queries, damped by `max(0, max_sim)`.
    pub fn estimate_embedding(&self, e: &Embedding) -> Result<Estimate> {
        if self.is_empty() {
            return Err(Error::NotInitialized(
                "estimator has no training queries".into(),
            ));
        }
        let mut sims: Vec<(f64, usize)> = self
            .embeddings
            .iter()
            .map(|t| t.cosine(e))
            .zip(0..)
            .collect();
        sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        sims.truncate(self.params.neighbours);
        let max_sim = sims[0].0;
        let tau = self.params.temperature;
        let (mut num, mut den) = (0.0, 0.0);
        for &(s, i) in &sims {
            let w = ((s - max_sim) / tau).exp();
            num += w * self.ratios[i];
            den += w;
        }
        let r = (num / den * max_sim.max(0.0)).clamp(0.0, 1.0);
        Ok(Estimate {
            ratio: r,
            answerable: r >= self.params.threshold,
            max_sim,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::DatabaseStats;
    use crate::synth::cluster_bench;
    use crate::workload::DEFAULT_DIM;

    #[test]
    fn identical_query_gets_its_own_ratio() {
        let c = cluster_bench(2, 4, 0).unwrap();
        let emb = QueryEmbedder::new(DatabaseStats::compute(&c.db), DEFAULT_DIM);
        let est = Estimator::new(
            emb,
            c.clusters[0].clone(),
            vec![1.0; 4],
            EstimatorParams::default(),
        )
        .unwrap();
        let e = est.estimate(&c.clusters[0][2]).unwrap();
        assert!((e.ratio - 1.0).abs() < 1e-12);
        assert!(e.answerable);
        assert_eq!(est.estimate(&c.clusters[0][2]).unwrap(), e);
    }

    #[test]
    fn orthogonal_query_is_zero_and_empty_is_uninitialized() {
        let c = cluster_bench(1, 3, 0).unwrap();
        let emb = QueryEmbedder::new(DatabaseStats::compute(&c.db), 4);
        let mut est =
            Estimator::new(emb.clone(), vec![], vec![], EstimatorParams::default()).unwrap();
        assert!(matches!(
            est.estimate(&c.clusters[0][0]),
            Err(Error::NotInitialized(_))
        ));
        est.embeddings = vec![Embedding(vec![1.0, 0.0, 0.0, 0.0])];
        est.queries = vec![c.clusters[0][0].clone()];
        est.ratios = vec![1.0];
        let e = est
            .estimate_embedding(&Embedding(vec![0.0, 1.0, 0.0, 0.0]))
            .unwrap();
        assert_eq!(e.ratio, 0.0);
        assert!(!e.answerable);
        let e = est
            .estimate_embedding(&Embedding(vec![-1.0, 0.0, 0.0, 0.0]))
            .unwrap();
        assert_eq!(e.ratio, 0.0);
    }
}
