//! Sequential vs rayon execution of the data-parallel hot paths.
//!
//! Build with `--no-default-features` to compile rayon out entirely; the
//! `parallel` rows then measure the sequential fallback.

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use asqp::relational::{ApproximationSet, TupleRef};
use asqp::rl::{train, TrainConfig};
use asqp::scoring::{brute_force_opt, score, IndexedScorer, ScoreConfig};
use asqp::stats::DatabaseStats;
use asqp::synth::{toy_config, toy_instance, uniform_table};
use asqp::workload::generate_workload;
use asqp::Exec;

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn scoring(c: &mut Criterion) {
    let db = uniform_table(20_000, 1).unwrap();
    let w = generate_workload(&db, &DatabaseStats::compute(&db), 64, 1).unwrap();
    let sc = ScoreConfig::compute(&w, &db, 50, Exec::Parallel).unwrap();
    let mut set = ApproximationSet::new(&db, 2_000);
    for (id, _) in db.tables() {
        for row in (0..20_000).step_by(10) {
            set.insert(TupleRef::new(id, row)).unwrap();
        }
    }
    let mut g = c.benchmark_group("score_64_queries");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(score(&set, &w, &sc, &db, exec).unwrap().total))
        });
    }
    g.finish();
}

fn brute_force(c: &mut Criterion) {
    let inst = toy_instance(0).unwrap();
    let scorer = IndexedScorer::build(&inst.workload, &inst.db, 50, Exec::Parallel).unwrap();
    let universe: Vec<Vec<TupleRef>> = scorer
        .relevant_tuples()
        .into_iter()
        .map(|t| vec![t])
        .collect();
    let mut g = c.benchmark_group("brute_force_k8");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(brute_force_opt(&universe, &scorer, 8, None, exec).score))
        });
    }
    g.finish();
}

fn training(c: &mut Criterion) {
    let inst = toy_instance(1).unwrap();
    let mut g = c.benchmark_group("train_3_iters");
    g.sample_size(10).measurement_time(Duration::from_secs(20));
    for (name, exec) in MODES {
        let cfg = TrainConfig {
            max_iters: 3,
            exec,
            ..toy_config(1)
        };
        g.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| black_box(train(&inst.db, &inst.workload, cfg).unwrap().best_eval))
        });
    }
    g.finish();
}

criterion_group!(benches, scoring, brute_force, training);
criterion_main!(benches);
