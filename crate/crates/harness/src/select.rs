//! Uniform front over the learned selector and the baselines.

use std::time::{Duration, Instant};

use asqp::baselines::{Baseline, Context};
use asqp::relational::{ApproximationSet, Database, TupleRef};
use asqp::rl::{infer_set, prepare, train_on_space, Decode, Preset, TrainConfig};
use asqp::workload::Workload;
use asqp::{Error, Result};

use crate::config::RunConfig;

/// Iterations timed to estimate a default training run.
const PROBE_ITERS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selector {
    Asqp,
    /// Every tuple of the database, ignoring `k`; a reference point.
    Full,
    Baseline(Baseline),
}

impl Selector {
    pub fn parse(s: &str) -> Result<Selector> {
        match s.trim().to_ascii_lowercase().as_str() {
            "asqp" | "asqp-rl" | "rl" => Ok(Selector::Asqp),
            "full" => Ok(Selector::Full),
            other => Baseline::parse(other).map(Selector::Baseline),
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Selector>> {
        let v = s
            .split(',')
            .filter(|x| !x.trim().is_empty())
            .map(Selector::parse)
            .collect::<Result<Vec<_>>>()?;
        if v.is_empty() {
            return Err(Error::Argument("empty selector list".into()));
        }
        Ok(v)
    }

    pub fn name(self) -> &'static str {
        match self {
            Selector::Asqp => "ASQP-RL",
            Selector::Full => "FULL",
            Selector::Baseline(b) => b.name(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Built {
    pub set: ApproximationSet,
    pub setup: Duration,
    /// False when a time cap cut the selector short.
    pub complete: bool,
}

/// Training config for `seed`, with the preset picked from the adaptive
/// time budget when one is set: Light when the budget is at most half the
/// estimated default run. The estimate times `PROBE_ITERS` default
/// iterations on `w` and scales to `max_iters`.
pub fn resolve_train_config(
    cfg: &RunConfig,
    db: &Database,
    w: &Workload,
    seed: u64,
) -> Result<TrainConfig> {
    let mut tc = cfg.train_config(seed);
    let Some(budget) = cfg.time_budget else {
        return Ok(tc);
    };
    let mut probe = tc.clone();
    probe.max_iters = PROBE_ITERS.min(tc.max_iters);
    probe.time_limit = None;
    let start = Instant::now();
    let p = prepare(db, w, &probe)?;
    train_on_space(p.space, &probe, None, probe.max_iters)?;
    let per_iter = start.elapsed().as_secs_f64() / probe.max_iters as f64;
    let estimate = Duration::from_secs_f64(per_iter * tc.max_iters as f64);
    Preset::for_budget(budget, estimate).apply(&mut tc);
    tc.time_limit = Some(budget);
    Ok(tc)
}

/// Builds a `cfg.k`-tuple set for `w` with `sel`. Setup time covers
/// pre-processing and training.
pub fn build(
    sel: Selector,
    cfg: &RunConfig,
    db: &Database,
    w: &Workload,
    seed: u64,
) -> Result<Built> {
    let start = Instant::now();
    let tc = match sel {
        Selector::Asqp => resolve_train_config(cfg, db, w, seed)?,
        Selector::Full => {
            let mut set = ApproximationSet::new(db, db.total_rows());
            for (id, t) in db.tables() {
                for &row in t.ids() {
                    set.insert(TupleRef::new(id, row))?;
                }
            }
            return Ok(Built {
                set,
                setup: start.elapsed(),
                complete: true,
            });
        }
        Selector::Baseline(_) => cfg.train_config(seed),
    };
    let p = prepare(db, w, &tc)?;
    match sel {
        Selector::Asqp => {
            let t = train_on_space(p.space, &tc, None, tc.max_iters)?;
            let (set, _) = infer_set(&t.model, &t.space, db, cfg.k, Decode::Greedy)?;
            Ok(Built {
                set,
                setup: start.elapsed(),
                complete: true,
            })
        }
        Selector::Full => unreachable!("handled above"),
        Selector::Baseline(b) => {
            let ctx = Context {
                db,
                space: &p.space,
                history: p.workload.queries(),
                frame: cfg.frame,
                seed,
                time_cap: cfg.cap,
                exec: cfg.exec(),
            };
            let c = b.select(&ctx, cfg.k)?;
            Ok(Built {
                set: c.set,
                setup: start.elapsed(),
                complete: c.complete,
            })
        }
    }
}
