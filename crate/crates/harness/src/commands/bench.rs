//! bench score|latency|diversity|aggregates, sweep and ablate.

use std::time::{Duration, Instant};

use asqp::query::{estimate_aggregate, evaluate_aggregate, execute, rewrite_aggregate};
use asqp::relational::{materialize, ApproximationSet, Database};
use asqp::rl::{infer_set, train, Decode, EnvKind};
use asqp::scoring::{diversity, relative_error, score, ScoreConfig};
use asqp::synth::{uniform_aggregates, AGG_CLASSES};
use asqp::workload::Workload;
use asqp::{Error, Result};

use crate::config::RunConfig;
use crate::report::{fmt6, mean_std, Report, Table};
use crate::select::{build, Selector};

fn ms(d: Duration) -> String {
    format!("{:.4}", d.as_secs_f64() * 1e3)
}

/// Mean wall time of running every query of `w` on `db`.
fn query_avg(w: &Workload, db: &Database) -> Result<Duration> {
    let start = Instant::now();
    for q in w.queries() {
        execute(q, db)?;
    }
    Ok(start.elapsed() / w.len().max(1) as u32)
}

/// For every repetition, splits `w`, builds each selector's set on the
/// training side and scores it on the test side. A failing selector is
/// recorded in its cell and the run continues.
pub fn bench_score(
    cfg: &RunConfig,
    db: &Database,
    w: &Workload,
    selectors: &[Selector],
) -> Result<Report> {
    cfg.validate()?;
    if selectors.is_empty() {
        return Err(Error::Argument("no selectors".into()));
    }
    let mut runs = Table::new(&[
        "selector",
        "repetition",
        "seed",
        "score",
        "complete",
        "error",
        "setup_secs",
        "query_avg_ms",
    ]);
    let mut per: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); selectors.len()];
    let mut failed = vec![0usize; selectors.len()];
    for rep in 0..cfg.repetitions {
        let seed = cfg.seed.wrapping_add(rep as u64);
        let (train_w, test_w) = w.split(cfg.train_fraction, seed)?;
        let sc = ScoreConfig::compute(&test_w, db, cfg.frame, cfg.exec())?;
        for (si, &sel) in selectors.iter().enumerate() {
            let cell = build(sel, cfg, db, &train_w, seed).and_then(|b| {
                let s = score(&b.set, &test_w, &sc, db, cfg.exec())?.total;
                let qa = query_avg(&test_w, &materialize(&b.set, db))?;
                Ok((b, s, qa))
            });
            match cell {
                Ok((b, s, qa)) => {
                    per[si].push((s, b.setup.as_secs_f64(), qa.as_secs_f64() * 1e3));
                    runs.push(vec![
                        sel.name().into(),
                        rep.to_string(),
                        seed.to_string(),
                        fmt6(s),
                        b.complete.to_string(),
                        String::new(),
                        format!("{:.3}", b.setup.as_secs_f64()),
                        ms(qa),
                    ]);
                }
                Err(e) => {
                    failed[si] += 1;
                    runs.push(vec![
                        sel.name().into(),
                        rep.to_string(),
                        seed.to_string(),
                        String::new(),
                        "false".into(),
                        e.to_string(),
                        String::new(),
                        String::new(),
                    ]);
                }
            }
        }
    }
    let mut t = Table::new(&[
        "selector",
        "score_mean",
        "score_std",
        "runs",
        "failed",
        "setup_secs",
        "query_avg_ms",
    ]);
    for (si, &sel) in selectors.iter().enumerate() {
        let scores: Vec<f64> = per[si].iter().map(|x| x.0).collect();
        let (m, s) = mean_std(&scores);
        let setup = mean_std(&per[si].iter().map(|x| x.1).collect::<Vec<_>>()).0;
        let qa = mean_std(&per[si].iter().map(|x| x.2).collect::<Vec<_>>()).0;
        t.push(vec![
            sel.name().into(),
            fmt6(m),
            fmt6(s),
            scores.len().to_string(),
            failed[si].to_string(),
            format!("{setup:.3}"),
            format!("{qa:.4}"),
        ]);
    }
    let summary = format!(
        "score on held-out queries, {} repetitions, k={}, F={}, train fraction {}\n{}",
        cfg.repetitions,
        cfg.k,
        cfg.frame,
        cfg.train_fraction,
        t.to_aligned()
    );
    Ok(Report {
        tables: vec![("score".into(), t), ("score_runs".into(), runs)],
        summary,
        files: vec![],
    })
}

/// Replays `w` against `db` replicated by each factor and against `set`,
/// reporting cumulative average latency after every query.
pub fn bench_latency(
    cfg: &RunConfig,
    db: &Database,
    w: &Workload,
    set: &ApproximationSet,
    factors: &[usize],
) -> Result<Report> {
    if factors.is_empty() || factors.contains(&0) {
        return Err(Error::Argument(
            "scale factors must be a non-empty list of positive integers".into(),
        ));
    }
    let approx = materialize(set, db);
    let fulls: Vec<Database> = factors.iter().map(|&f| db.replicated(f)).collect();
    let mut header = vec!["queries".to_string(), "approx_ms".to_string()];
    header.extend(factors.iter().map(|f| format!("full_x{f}_ms")));
    let mut t = Table {
        header,
        rows: Vec::new(),
    };
    let mut acc = vec![Duration::ZERO; 1 + factors.len()];
    for (i, q) in w.queries().iter().enumerate() {
        for (j, d) in std::iter::once(&approx).chain(&fulls).enumerate() {
            let start = Instant::now();
            execute(q, d)?;
            acc[j] += start.elapsed();
        }
        let mut row = vec![(i + 1).to_string()];
        row.extend(acc.iter().map(|&a| ms(a / (i as u32 + 1))));
        t.rows.push(row);
    }
    let last = t.rows.last().cloned().unwrap_or_default();
    let mut summary = format!(
        "cumulative average latency over {} queries, set of {} tuples (seed {})\n",
        w.len(),
        set.len(),
        cfg.seed
    );
    for (h, v) in t.header.iter().zip(&last).skip(1) {
        summary.push_str(&format!("{h} {v}\n"));
    }
    Ok(Report {
        tables: vec![("latency".into(), t)],
        summary,
        files: vec![],
    })
}

/// Mean pairwise Jaccard distance of query results on each selector's set,
/// with the full database as reference.
pub fn bench_diversity(
    cfg: &RunConfig,
    db: &Database,
    w: &Workload,
    selectors: &[Selector],
) -> Result<Report> {
    let mut t = Table::new(&["selector", "diversity", "queries"]);
    let measure = |d: &Database| -> Result<(f64, usize)> {
        let mut vals = Vec::new();
        for q in w.queries() {
            let r = execute(q, d)?;
            if r.len() >= 2 {
                let rows: Vec<_> = r.rows.iter().take(cfg.frame).cloned().collect();
                vals.push(diversity(&rows));
            }
        }
        Ok((mean_std(&vals).0, vals.len()))
    };
    let (d, n) = measure(db)?;
    t.push(vec!["FULL".into(), fmt6(d), n.to_string()]);
    for &sel in selectors {
        let b = build(sel, cfg, db, w, cfg.seed)?;
        let (d, n) = measure(&materialize(&b.set, db))?;
        t.push(vec![sel.name().into(), fmt6(d), n.to_string()]);
    }
    let summary = format!(
        "result diversity (first F={} rows per query)\n{}",
        cfg.frame,
        t.to_aligned()
    );
    Ok(Report {
        tables: vec![("diversity".into(), t)],
        summary,
        files: vec![],
    })
}

/// Per aggregate class: generates `n` queries, builds a set from the SPJ
/// rewrites of the first half and reports the mean relative error of the
/// scaled estimates on the second half. Inestimable queries count as
/// error 1 and are tallied.
pub fn bench_aggregates(cfg: &RunConfig, db: &Database, sel: Selector, n: usize) -> Result<Report> {
    if n < 2 {
        return Err(Error::Argument(
            "aggregate bench needs at least two queries per class".into(),
        ));
    }
    let full_cards = db.cardinalities();
    let mut t = Table::new(&["class", "mean_rel_error", "queries", "inestimable"]);
    for (ci, class) in AGG_CLASSES.iter().enumerate() {
        let qs = uniform_aggregates(db, class, n, cfg.seed.wrapping_add(ci as u64))?;
        let (train_q, test_q) = qs.split_at(n / 2);
        let w = Workload::uniform(train_q.iter().map(rewrite_aggregate).collect())?;
        let (w, _) = w.retain_nonempty(db, cfg.exec())?;
        let set = build(sel, cfg, db, &w, cfg.seed)?.set;
        let approx = materialize(&set, db);
        let (mut errs, mut bad) = (Vec::new(), 0);
        for q in test_q {
            let truth = evaluate_aggregate(q, db)?;
            match estimate_aggregate(q, &approx, &full_cards)
                .and_then(|p| relative_error(&p, &truth))
            {
                Ok(e) => errs.push(e),
                Err(Error::NotEstimable(_) | Error::Undefined(_)) => {
                    bad += 1;
                    errs.push(1.0);
                }
                Err(e) => return Err(e),
            }
        }
        t.push(vec![
            class.to_string(),
            fmt6(mean_std(&errs).0),
            errs.len().to_string(),
            bad.to_string(),
        ]);
    }
    let summary = format!(
        "aggregate relative error, {} with k={} ({} queries per class)\n{}",
        sel.name(),
        cfg.k,
        n,
        t.to_aligned()
    );
    Ok(Report {
        tables: vec![("aggregates".into(), t)],
        summary,
        files: vec![],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    K,
    Frame,
    TrainFraction,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<SweepParam> {
        match s {
            "k" => Ok(SweepParam::K),
            "F" | "f" | "frame" => Ok(SweepParam::Frame),
            "train-fraction" | "train_fraction" => Ok(SweepParam::TrainFraction),
            _ => Err(Error::Argument(format!(
                "unknown sweep parameter {s:?} (k, F, train-fraction)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::K => "k",
            SweepParam::Frame => "F",
            SweepParam::TrainFraction => "train_fraction",
        }
    }
}

/// Re-runs [`bench_score`] for every value of `param`.
pub fn sweep(
    cfg: &RunConfig,
    db: &Database,
    w: &Workload,
    param: SweepParam,
    values: &[String],
    selectors: &[Selector],
) -> Result<Report> {
    if values.is_empty() {
        return Err(Error::Argument("sweep needs at least one value".into()));
    }
    let mut t = Table::new(&[
        "param",
        "value",
        "selector",
        "score_mean",
        "score_std",
        "runs",
        "setup_secs",
    ]);
    let mut all_runs = Table::new(&["param", "value", "selector", "repetition", "score"]);
    for v in values {
        let mut c = cfg.clone();
        let key = match param {
            SweepParam::K => "k",
            SweepParam::Frame => "frame",
            SweepParam::TrainFraction => "train_fraction",
        };
        c.set(key, v).map_err(|e| Error::Argument(e.to_string()))?;
        let r = bench_score(&c, db, w, selectors)?;
        let s = r.table("score").expect("bench_score emits a score table");
        for row in &s.rows {
            t.push(vec![
                param.name().into(),
                v.clone(),
                row[0].clone(),
                row[1].clone(),
                row[2].clone(),
                row[3].clone(),
                row[5].clone(),
            ]);
        }
        let runs = r.table("score_runs").expect("bench_score emits runs");
        for row in &runs.rows {
            all_runs.push(vec![
                param.name().into(),
                v.clone(),
                row[0].clone(),
                row[1].clone(),
                row[3].clone(),
            ]);
        }
    }
    let summary = format!("sweep over {}\n{}", param.name(), t.to_aligned());
    Ok(Report {
        tables: vec![("sweep".into(), t), ("sweep_runs".into(), all_runs)],
        summary,
        files: vec![],
    })
}

pub const ABLATION_ENVS: [EnvKind; 3] = [EnvKind::Gsl, EnvKind::Drp, EnvKind::DrpGsl];
/// (label, clipped surrogate with KL, critic)
pub const ABLATION_VARIANTS: [(&str, bool, bool); 3] = [
    ("full", true, true),
    ("-ppo", false, true),
    ("-ppo-ac", false, false),
];

/// Trains every environment under each variant `cfg.repetitions` times on
/// `w` and scores the decoded sets on `w`.
pub fn ablate(cfg: &RunConfig, db: &Database, w: &Workload) -> Result<Report> {
    cfg.validate()?;
    let sc = ScoreConfig::compute(w, db, cfg.frame, cfg.exec())?;
    let mut t = Table::new(&[
        "env",
        "variant",
        "score_mean",
        "score_std",
        "runs",
        "critic",
        "wall_secs",
    ]);
    let mut runs = Table::new(&["env", "variant", "repetition", "seed", "score", "wall_secs"]);
    for env in ABLATION_ENVS {
        for (label, ppo, critic) in ABLATION_VARIANTS {
            let mut scores = Vec::new();
            let mut wall = 0.0;
            let mut has_critic = false;
            for rep in 0..cfg.repetitions {
                let seed = cfg.seed.wrapping_add(rep as u64);
                let mut tc = cfg.train_config(seed);
                tc.env = env;
                tc.ppo = ppo;
                tc.critic = critic;
                let start = Instant::now();
                let trained = train(db, w, &tc)?;
                let (set, _) =
                    infer_set(&trained.model, &trained.space, db, cfg.k, Decode::Greedy)?;
                let secs = start.elapsed().as_secs_f64();
                has_critic |= trained.model.critic.is_some();
                let s = score(&set, w, &sc, db, cfg.exec())?.total;
                runs.push(vec![
                    env.name().into(),
                    label.into(),
                    rep.to_string(),
                    seed.to_string(),
                    fmt6(s),
                    format!("{secs:.3}"),
                ]);
                scores.push(s);
                wall += secs;
            }
            let (m, s) = mean_std(&scores);
            t.push(vec![
                env.name().into(),
                label.into(),
                fmt6(m),
                fmt6(s),
                scores.len().to_string(),
                has_critic.to_string(),
                format!("{:.3}", wall / scores.len() as f64),
            ]);
        }
    }
    let summary = format!(
        "ablation grid, {} repetitions per cell, k={}\n{}",
        cfg.repetitions,
        cfg.k,
        t.to_aligned()
    );
    Ok(Report {
        tables: vec![("ablation".into(), t), ("ablation_runs".into(), runs)],
        summary,
        files: vec![],
    })
}
