//! ingest, gen-workload, train and build-set.

use std::path::{Path, PathBuf};

use asqp::query::execute;
use asqp::relational::{ApproximationSet, Database, InsertOutcome, TupleRef};
use asqp::rl::{infer_set, prepare, train_on_space, Decode, Trained};
use asqp::scoring::{score, ScoreConfig};
use asqp::stats::DatabaseStats;
use asqp::workload::{generate_workload, Workload};
use asqp::{Error, Result};

use crate::config::RunConfig;
use crate::report::{fmt6, Report, Table};
use crate::select::{build, resolve_train_config, Selector};

/// Path of the action space saved beside a checkpoint.
pub fn space_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("space")
}

/// Writes `table,row` lines, one per tuple, with a header.
pub fn write_set(path: &Path, set: &ApproximationSet, db: &Database) -> Result<()> {
    let mut t = Table::new(&["table", "row"]);
    for r in set.tuples() {
        t.push(vec![
            db.table(r.table).name().to_string(),
            r.row.to_string(),
        ]);
    }
    std::fs::write(path, t.to_csv()?)?;
    Ok(())
}

/// Reads a set written by [`write_set`] with budget `max(k, rows)`.
pub fn read_set(path: &Path, db: &Database, k: usize) -> Result<ApproximationSet> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut refs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let bad = |m: &str| Error::Format(format!("{} line {}: {m}", path.display(), i + 2));
        let (Some(t), Some(r)) = (rec.get(0), rec.get(1)) else {
            return Err(bad("expected table,row"));
        };
        let tid = db
            .table_id(t)
            .ok_or_else(|| bad(&format!("unknown table {t}")))?;
        let row: usize = r
            .trim()
            .parse()
            .map_err(|_| bad(&format!("invalid row {r:?}")))?;
        refs.push(TupleRef::new(tid, row));
    }
    let mut set = ApproximationSet::new(db, k.max(refs.len()));
    for r in refs {
        if set.insert(r)? == InsertOutcome::BudgetExhausted {
            return Err(Error::Contract("set file exceeds its budget".into()));
        }
    }
    Ok(set)
}

/// Loads a workload and drops queries with empty results.
pub fn load_workload(path: &Path, db: &Database, cfg: &RunConfig) -> Result<(Workload, usize)> {
    let w = Workload::load(path, db)?;
    let (kept, dropped) = w.retain_nonempty(db, cfg.exec())?;
    Ok((kept, dropped.len()))
}

pub fn ingest(db: &Database, workload: Option<(&Workload, usize)>) -> Result<Report> {
    let mut t = Table::new(&["table", "rows", "columns", "schema"]);
    for (_, tab) in db.tables() {
        let schema: Vec<String> = tab
            .columns()
            .iter()
            .map(|c| {
                format!(
                    "{}:{}{}",
                    c.name,
                    c.ty.name(),
                    if c.nullable { "?" } else { "" }
                )
            })
            .collect();
        t.push(vec![
            tab.name().to_string(),
            tab.len().to_string(),
            tab.columns().len().to_string(),
            schema.join(" "),
        ]);
    }
    let mut summary = format!("{} tables, {} rows\n", db.table_count(), db.total_rows());
    summary.push_str(&t.to_aligned());
    if let Some((w, dropped)) = workload {
        summary.push_str(&format!(
            "workload: {} queries kept, {dropped} dropped as empty\n",
            w.len()
        ));
    }
    Ok(Report {
        tables: vec![("tables".into(), t)],
        summary,
        files: vec![],
    })
}

/// Generates `n` queries and writes `workload.sql` into `out`.
pub fn gen_workload(db: &Database, n: usize, seed: u64, out: &Path) -> Result<(Workload, Report)> {
    let w = generate_workload(db, &DatabaseStats::compute(db), n, seed)?;
    std::fs::create_dir_all(out)?;
    let path = out.join("workload.sql");
    w.save(&path)?;
    let mut t = Table::new(&["query", "weight", "rows", "sql"]);
    for (i, (q, wt)) in w.iter().enumerate() {
        t.push(vec![
            i.to_string(),
            fmt6(wt),
            execute(q, db)?.len().to_string(),
            q.to_string(),
        ]);
    }
    let summary = format!("generated {} queries into {}\n", w.len(), path.display());
    Ok((
        w,
        Report {
            tables: vec![("workload".into(), t)],
            summary,
            files: vec![path],
        },
    ))
}

/// Trains on `w` and writes the checkpoint, its action space, the decoded
/// set and the training log into `cfg.out`.
pub fn train(
    cfg: &RunConfig,
    db: &Database,
    w: &Workload,
) -> Result<(Trained, ApproximationSet, Report)> {
    let tc = resolve_train_config(cfg, db, w, cfg.seed)?;
    let p = prepare(db, w, &tc)?;
    let trained = train_on_space(p.space, &tc, None, tc.max_iters)?;
    let (set, inf) = infer_set(&trained.model, &trained.space, db, cfg.k, Decode::Greedy)?;
    let sc = ScoreConfig::compute(w, db, cfg.frame, cfg.exec())?;
    let report = score(&set, w, &sc, db, cfg.exec())?;

    std::fs::create_dir_all(&cfg.out)?;
    let ckpt = cfg.out.join("model.ckpt");
    trained.model.save(&ckpt)?;
    trained.space.save(&space_path(&ckpt))?;
    let set_file = cfg.out.join("set.csv");
    write_set(&set_file, &set, db)?;

    let mut log = Table::new(&[
        "iter",
        "reward",
        "eval",
        "moving_avg",
        "loss",
        "kl",
        "entropy",
        "iter_secs",
    ]);
    for l in &trained.log {
        log.push(vec![
            l.iter.to_string(),
            fmt6(l.mean_reward),
            l.eval.map_or(String::new(), fmt6),
            fmt6(l.moving_avg),
            fmt6(l.loss.total),
            fmt6(l.loss.kl),
            fmt6(l.loss.entropy),
            format!("{:.3}", l.secs),
        ]);
    }
    let mut t = Table::new(&[
        "cell",
        "actions",
        "reps",
        "iterations",
        "best_proxy",
        "proxy",
        "score",
        "set_size",
        "stopped_early",
        "train_secs",
    ]);
    t.push(vec![
        tc.ablation_label(),
        trained.space.len().to_string(),
        trained.space.rep_count().to_string(),
        trained.log.len().to_string(),
        fmt6(trained.best_eval),
        fmt6(inf.proxy),
        fmt6(report.total),
        set.len().to_string(),
        trained.stopped_early.to_string(),
        format!("{:.3}", trained.secs),
    ]);
    let summary = format!(
        "trained {} on {} queries ({} representatives, {} actions) in {:.1}s\nscore {:.4} with {} of {} tuples\ncheckpoint {}\n",
        tc.ablation_label(),
        w.len(),
        trained.space.rep_count(),
        trained.space.len(),
        trained.secs,
        report.total,
        set.len(),
        cfg.k,
        ckpt.display()
    );
    let files = vec![ckpt.clone(), space_path(&ckpt), set_file];
    let rep = Report {
        tables: vec![("train".into(), t), ("train_log".into(), log)],
        summary,
        files,
    };
    Ok((trained, set, rep))
}

/// Builds a set with `sel` (ASQP-RL decodes the checkpoint when one is
/// given, otherwise trains) and scores it on `w`.
pub fn build_set(
    cfg: &RunConfig,
    db: &Database,
    w: &Workload,
    sel: Selector,
) -> Result<(ApproximationSet, Report)> {
    let start = std::time::Instant::now();
    let (set, complete) = match (sel, cfg.checkpoint.as_deref()) {
        (Selector::Asqp, Some(ckpt)) => {
            let model = asqp::rl::Model::load(ckpt)?;
            let space = asqp::action_space::ActionSpace::load(&space_path(ckpt), db)?;
            (
                infer_set(&model, &space, db, cfg.k, Decode::Greedy)?.0,
                true,
            )
        }
        _ => {
            let b = build(sel, cfg, db, w, cfg.seed)?;
            (b.set, b.complete)
        }
    };
    let setup = start.elapsed();
    let sc = ScoreConfig::compute(w, db, cfg.frame, cfg.exec())?;
    let report = score(&set, w, &sc, db, cfg.exec())?;
    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("set.csv");
    write_set(&path, &set, db)?;
    let mut t = Table::new(&[
        "selector",
        "k",
        "set_size",
        "score",
        "complete",
        "setup_secs",
    ]);
    t.push(vec![
        sel.name().into(),
        cfg.k.to_string(),
        set.len().to_string(),
        fmt6(report.total),
        complete.to_string(),
        format!("{:.3}", setup.as_secs_f64()),
    ]);
    let mut ratios = Table::new(&["query", "weight", "ratio"]);
    for (i, ((_, wt), r)) in w.iter().zip(&report.ratios).enumerate() {
        ratios.push(vec![i.to_string(), fmt6(wt), fmt6(*r)]);
    }
    let summary = format!(
        "{}: {} tuples, score {:.4}{}\nset written to {}\n",
        sel.name(),
        set.len(),
        report.total,
        if complete { "" } else { " (time cap reached)" },
        path.display()
    );
    Ok((
        set,
        Report {
            tables: vec![("build".into(), t), ("ratios".into(), ratios)],
            summary,
            files: vec![path],
        },
    ))
}
