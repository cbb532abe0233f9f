//! Command implementations. Each takes loaded inputs and returns a
//! [`Report`](crate::report::Report); `main` handles files and the lock.

pub mod bench;
pub mod data;

use std::fs::OpenOptions;
use std::path::Path;

use asqp::action_space::ActionSpace;
use asqp::mediator::{Estimator, EstimatorParams, Session, Tuner};
use asqp::relational::{materialize, Database};
use asqp::rl::{infer_set, Decode, Model};
use asqp::stats::DatabaseStats;
use asqp::workload::{QueryEmbedder, Workload};
use asqp::Result;

use crate::config::RunConfig;

pub use bench::{
    ablate, bench_aggregates, bench_diversity, bench_latency, bench_score, sweep, SweepParam,
};
pub use data::{
    build_set, gen_workload, ingest, load_workload, read_set, space_path, train, write_set,
};

/// A REPL session over the checkpoint in `cfg`. The set comes from `cfg.set`
/// when given, otherwise from greedy decoding. The estimator is labelled with
/// `training` on that set. `approx_only` withholds the full database from
/// routing; it is still used for labels and fine-tuning.
pub fn open_session(
    cfg: &RunConfig,
    db: &Database,
    training: &Workload,
    approx_only: bool,
    log: Option<&Path>,
) -> Result<Session> {
    let ckpt = cfg.checkpoint_file()?;
    let model = Model::load(ckpt)?;
    let space = ActionSpace::load(&space_path(ckpt), db)?;
    let set = match cfg.set.as_deref() {
        Some(p) => read_set(p, db, cfg.k)?,
        None => infer_set(&model, &space, db, cfg.k, Decode::Greedy)?.0,
    };
    let approx = materialize(&set, db);
    let embedder = QueryEmbedder::new(DatabaseStats::compute(db), model.config.dim);
    let est = Estimator::build(
        embedder,
        training.queries(),
        &approx,
        db,
        cfg.frame,
        EstimatorParams::default(),
        cfg.exec(),
    )?;
    let tune_cfg = asqp::rl::TrainConfig {
        k: cfg.k,
        frame: cfg.frame,
        exec: cfg.exec(),
        ..model.config.clone()
    };
    let full = (!approx_only).then(|| db.clone());
    let mut s = Session::new(set, db, full, est, cfg.frame).with_tuner(Tuner {
        model,
        space,
        cfg: tune_cfg,
    });
    if let Some(p) = log {
        let f = OpenOptions::new().create(true).append(true).open(p)?;
        s = s.with_log(Box::new(f));
    }
    Ok(s)
}
