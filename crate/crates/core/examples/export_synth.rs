//! Writes a synthetic database and workload as CSV + SQL for the CLI.
//!
//! cargo run --release -p asqp-core --example export_synth -- toy 0 out/toy
//!
//! Kinds: toy, templated, clusters, uniform.

use std::path::PathBuf;
use std::process::ExitCode;

use asqp::stats::DatabaseStats;
use asqp::synth::{cluster_bench, toy_instance, toy_templated, uniform_table};
use asqp::workload::generate_workload;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [kind, seed, dir] = args.as_slice() else {
        eprintln!("usage: export_synth <toy|templated|clusters|uniform> <seed> <dir>");
        return ExitCode::from(2);
    };
    let Ok(seed) = seed.parse::<u64>() else {
        eprintln!("seed must be an integer");
        return ExitCode::from(2);
    };
    let dir = PathBuf::from(dir);
    let made = match kind.as_str() {
        "toy" => toy_instance(seed).map(|i| (i.db, i.workload)),
        "templated" => toy_templated(seed).map(|i| (i.db, i.workload)),
        "clusters" => {
            cluster_bench(3, 10, seed).and_then(|c| c.workload(&[0, 1, 2]).map(|w| (c.db, w)))
        }
        "uniform" => uniform_table(10_000, seed).and_then(|db| {
            generate_workload(&db, &DatabaseStats::compute(&db), 60, seed).map(|w| (db, w))
        }),
        _ => {
            eprintln!("unknown kind {kind:?}");
            return ExitCode::from(2);
        }
    };
    let result = made.and_then(|(db, w)| {
        db.save_dir(&dir.join("data"))?;
        w.save(&dir.join("workload.sql"))?;
        Ok((db.total_rows(), w.len()))
    });
    match result {
        Ok((rows, queries)) => {
            println!(
                "{rows} rows in {}, {queries} queries in {}",
                dir.join("data").display(),
                dir.join("workload.sql").display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
