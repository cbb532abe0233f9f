//! A query session: estimate, route, log, watch for drift, fine-tune.

use std::io::Write;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use crate::action_space::ActionSpace;
use crate::error::{Error, Result};
use crate::query::SpjQuery;
use crate::relational::{materialize, ApproximationSet, Database};
use crate::rl::{finetune, infer_set, Decode, Model, TrainConfig};
use crate::workload::{fnv1a, Workload};

use super::drift::DriftState;
use super::estimator::{achieved_ratio, Estimate, Estimator};
use super::routing::{run_on, Mode, Routed, Source};

/// What fine-tuning needs besides the full database.
#[derive(Clone, Debug)]
pub struct Tuner {
    pub model: Model,
    pub space: ActionSpace,
    pub cfg: TrainConfig,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SessionStats {
    pub queries: usize,
    pub approx: usize,
    pub full: usize,
    pub errors: usize,
    pub finetunes: usize,
    pub predicted_sum: f64,
    pub latency: Duration,
}

impl SessionStats {
    pub fn summary(&self) -> String {
        let n = self.queries.max(1) as f64;
        format!(
            "queries={} approx={} full={} errors={} finetunes={} mean_predicted={:.4} mean_latency_ms={:.3}",
            self.queries,
            self.approx,
            self.full,
            self.errors,
            self.finetunes,
            self.predicted_sum / n,
            self.latency.as_secs_f64() * 1e3 / n
        )
    }
}

/// One answered query.
#[derive(Clone, Debug)]
pub struct Answer {
    pub estimate: Estimate,
    pub routed: Routed,
    /// Deviating queries, when this query fired the drift trigger.
    pub drift: Option<Vec<SpjQuery>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneReport {
    /// Mean achieved ratio of the tuned queries before and after.
    pub before: f64,
    pub after: f64,
    pub secs: f64,
}

pub struct Session {
    set: ApproximationSet,
    approx: Database,
    full: Option<Database>,
    estimator: Estimator,
    drift: DriftState,
    mode: Mode,
    frame: usize,
    tuner: Option<Tuner>,
    log: Option<Box<dyn Write>>,
    stats: SessionStats,
}

/// One session-log line: timestamp, query hash, predicted ratio, source,
/// latency in microseconds and row count, tab-separated.
pub fn log_line(
    at: SystemTime,
    q: &SpjQuery,
    predicted: f64,
    source: Source,
    latency: Duration,
    rows: usize,
) -> String {
    let ts = at.duration_since(UNIX_EPOCH).unwrap_or_default();
    format!(
        "{}.{:03}\t{:016x}\t{predicted:.4}\t{}\t{}\t{rows}",
        ts.as_secs(),
        ts.subsec_millis(),
        fnv1a(q.to_string().as_bytes()),
        source.name(),
        latency.as_micros()
    )
}

impl Session {
    /// A session over `set`. Without `full`, only approx mode is allowed.
    pub fn new(
        set: ApproximationSet,
        base: &Database,
        full: Option<Database>,
        estimator: Estimator,
        frame: usize,
    ) -> Session {
        let mode = if full.is_some() {
            Mode::Hybrid60
        } else {
            Mode::Approx
        };
        Session {
            approx: materialize(&set, base),
            set,
            full,
            estimator,
            drift: DriftState::default(),
            mode,
            frame,
            tuner: None,
            log: None,
            stats: SessionStats::default(),
        }
    }

    pub fn with_tuner(mut self, tuner: Tuner) -> Session {
        self.tuner = Some(tuner);
        self
    }

    pub fn with_log(mut self, log: Box<dyn Write>) -> Session {
        self.log = Some(log);
        self
    }

    pub fn with_drift(mut self, drift: DriftState) -> Session {
        self.drift = drift;
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) -> Result<()> {
        if mode != Mode::Approx && self.full.is_none() {
            return Err(Error::Routing(format!(
                "{mode} needs the full database, which is not loaded"
            )));
        }
        self.mode = mode;
        Ok(())
    }

    pub fn frame(&self) -> usize {
        self.frame
    }

    pub fn stats(&self) -> &SessionStats {
        &self.stats
    }

    pub fn set(&self) -> &ApproximationSet {
        &self.set
    }

    pub fn approx_db(&self) -> &Database {
        &self.approx
    }

    pub fn full_db(&self) -> Option<&Database> {
        self.full.as_ref()
    }

    pub fn estimator(&self) -> &Estimator {
        &self.estimator
    }

    pub fn drift(&self) -> &DriftState {
        &self.drift
    }

    pub fn can_finetune(&self) -> bool {
        self.tuner.is_some() && self.full.is_some()
    }

    /// Database for binding query text.
    pub fn schema(&self) -> &Database {
        self.full.as_ref().unwrap_or(&self.approx)
    }

    pub fn estimate(&self, q: &SpjQuery) -> Result<Estimate> {
        self.estimator.estimate(q)
    }

    /// Estimates, routes (or uses `choice`), logs and records `q` for drift.
    pub fn query(&mut self, q: &SpjQuery, choice: Option<Source>) -> Result<Answer> {
        let estimate = self.estimator.estimate(q)?;
        let source = choice.unwrap_or_else(|| self.mode.source_for(estimate.ratio));
        let routed = match run_on(source, q, &self.approx, self.full.as_ref()) {
            Ok(r) => r,
            Err(e) => {
                self.stats.errors += 1;
                return Err(e);
            }
        };
        self.stats.queries += 1;
        self.stats.predicted_sum += estimate.ratio;
        self.stats.latency += routed.latency;
        match routed.source {
            Source::Approx => self.stats.approx += 1,
            Source::Full => self.stats.full += 1,
        }
        if let Some(log) = self.log.as_mut() {
            let line = log_line(
                SystemTime::now(),
                q,
                estimate.ratio,
                routed.source,
                routed.latency,
                routed.result.len(),
            );
            writeln!(log, "{line}")?;
            log.flush()?;
        }
        let drift = self.drift.record(q, estimate.deviation());
        Ok(Answer {
            estimate,
            routed,
            drift,
        })
    }

    pub fn note_error(&mut self) {
        self.stats.errors += 1;
    }

    /// Mean achieved ratio of `qs` on the current set.
    pub fn mean_ratio(&self, qs: &[SpjQuery]) -> Result<f64> {
        let full = self
            .full
            .as_ref()
            .ok_or_else(|| Error::Routing("scoring needs the full database".into()))?;
        let mut sum = 0.0;
        for q in qs {
            sum += achieved_ratio(q, &self.approx, full, self.frame)?;
        }
        Ok(sum / qs.len().max(1) as f64)
    }

    /// Fine-tunes on `queries`, re-decodes the set and relabels the estimator
    /// with the old training queries plus `queries`.
    pub fn finetune(&mut self, queries: &[SpjQuery]) -> Result<FinetuneReport> {
        if queries.is_empty() {
            return Err(Error::Argument("nothing to fine-tune on".into()));
        }
        let (Some(tuner), Some(full)) = (self.tuner.as_ref(), self.full.as_ref()) else {
            return Err(Error::NotInitialized(
                "fine-tuning needs a loaded checkpoint and the full database".into(),
            ));
        };
        let before = self.mean_ratio(queries)?;
        let new = Workload::uniform(queries.to_vec())?;
        let trained = finetune(&tuner.model, &tuner.space, full, &new, &tuner.cfg)?;
        let k = self.set.budget();
        let (set, _) = infer_set(&trained.model, &trained.space, full, k, Decode::Greedy)?;
        let approx = materialize(&set, full);
        let mut train_qs = self.estimator.queries().to_vec();
        train_qs.extend(queries.iter().cloned());
        let estimator = Estimator::build(
            self.estimator.embedder().clone(),
            &train_qs,
            &approx,
            full,
            self.frame,
            *self.estimator.params(),
            tuner.cfg.exec,
        )?;
        let cfg = tuner.cfg.clone();
        self.tuner = Some(Tuner {
            model: trained.model,
            space: trained.space,
            cfg,
        });
        self.set = set;
        self.approx = approx;
        self.estimator = estimator;
        self.drift.clear();
        self.stats.finetunes += 1;
        let after = self.mean_ratio(queries)?;
        Ok(FinetuneReport {
            before,
            after,
            secs: trained.secs,
        })
    }
}

/// Mean per-query ratio of a session replaying `queries` under `mode`,
/// counting full-database answers as 1.
pub fn session_score(
    queries: &[SpjQuery],
    mode: Mode,
    estimator: &Estimator,
    approx: &Database,
    full: &Database,
    frame: usize,
) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::Argument("empty session".into()));
    }
    let mut sum = 0.0;
    for q in queries {
        let e = estimator.estimate(q)?;
        sum += match mode.source_for(e.ratio) {
            Source::Full => 1.0,
            Source::Approx => achieved_ratio(q, approx, full, frame)?,
        };
    }
    Ok(sum / queries.len() as f64)
}
