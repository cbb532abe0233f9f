use std::io::{BufRead, IsTerminal, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use asqp::mediator::{repl, Mode, ReplOptions};
use asqp::relational::Database;
use asqp::synth::uniform_table;
use asqp::{Error, Result};
use asqp_harness::commands::{self, SweepParam};
use asqp_harness::config::RunConfig;
use asqp_harness::report::{OutLock, Report};
use asqp_harness::select::Selector;
use asqp_harness::{exit_code, EXIT_OK};

const DEFAULT_SELECTORS: &str = "asqp,RAN,GRE,TOP,CACH,SKY,QRD";

#[derive(Parser, Debug)]
#[command(
    name = "asqp",
    version,
    about = "Approximation sets for select-project-join workloads"
)]
struct Cli {
    /// Base seed; repetitions use seed, seed+1, ...
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (locked while the command runs).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory of CSV tables with optional .schema sidecars.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Workload file of SQL statements with optional `-- w=` weights.
    #[arg(long, global = true)]
    workload: Option<PathBuf>,
    /// Trained model checkpoint (model.space is read from beside it)
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Approximation set file (table,row CSV).
    #[arg(long, global = true)]
    set: Option<PathBuf>,
    /// Tuple budget.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Frame size F.
    #[arg(long, global = true)]
    frame: Option<usize>,
    /// Wall-clock cap in seconds for the search baselines.
    #[arg(long, global = true)]
    cap: Option<f64>,
    /// default, light or custom.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Training time budget in seconds; picks the preset.
    #[arg(long, global = true)]
    time_budget: Option<f64>,
    /// Seeded repetitions per selector
    #[arg(long, global = true)]
    repetitions: Option<usize>,
    /// Extra key=value setting, applied last; repeatable.
    #[arg(long = "opt", global = true, value_name = "KEY=VALUE")]
    opts: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Load and validate a data directory (and workload, if given).
    Ingest,
    /// Generate a workload from the data's statistics.
    GenWorkload {
        #[arg(long, default_value_t = 100)]
        queries: usize,
    },
    /// Train the agent; writes model.ckpt, model.space, set.csv and logs.
    Train,
    /// Build and score a set with one selector.
    BuildSet {
        #[arg(long, default_value = "asqp")]
        selector: String,
    },
    /// Interactive query session over a trained checkpoint.
    Repl {
        /// Never route to the full database.
        #[arg(long)]
        approx_only: bool,
        /// No prompts: route automatically and fine-tune on drift.
        #[arg(long)]
        batch: bool,
        /// approx, hybrid60 or hybrid80.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Benchmarks over one or more selectors
    Bench {
        #[command(subcommand)]
        which: Bench,
    },
    /// Re-run the score bench over values of k, F or train-fraction.
    Sweep {
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, default_value = "")]
        values: String,
        #[arg(long, default_value = DEFAULT_SELECTORS)]
        selectors: String,
    },
    /// Environment x variant ablation grid of the agent.
    Ablate,
}

#[derive(Subcommand, Debug)]
enum Bench {
    /// Held-out score, setup time and query latency per selector.
    Score {
        #[arg(long, default_value = DEFAULT_SELECTORS)]
        selectors: String,
    },
    /// Cumulative query latency on the set versus replicated full data.
    Latency {
        #[arg(long, default_value = "1,2,4")]
        factors: String,
        /// Used when no --set is given.
        #[arg(long, default_value = "RAN")]
        selector: String,
    },
    /// Pairwise Jaccard diversity of results.
    Diversity {
        #[arg(long, default_value = DEFAULT_SELECTORS)]
        selectors: String,
    },
    /// Relative error of scaled aggregate estimates per operator class.
    Aggregates {
        #[arg(long, default_value = "RAN")]
        selector: String,
        /// Queries per class.
        #[arg(long, default_value_t = 100)]
        queries: usize,
        /// Rows of the synthetic table used without --data.
        #[arg(long, default_value_t = 10_000)]
        rows: usize,
    },
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            pairs.push((k.to_string(), v));
        }
    };
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    put("seed", cli.seed.map(|x| x.to_string()));
    put("out", path(&cli.out));
    put("data", path(&cli.data));
    put("workload", path(&cli.workload));
    put("checkpoint", path(&cli.checkpoint));
    put("set", path(&cli.set));
    put("k", cli.k.map(|x| x.to_string()));
    put("frame", cli.frame.map(|x| x.to_string()));
    put("cap", cli.cap.map(|x| x.to_string()));
    put("preset", cli.preset.clone());
    put("time_budget", cli.time_budget.map(|x| x.to_string()));
    put("repetitions", cli.repetitions.map(|x| x.to_string()));
    for o in &cli.opts {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("--opt expects KEY=VALUE, got {o:?}")))?;
        pairs.push((k.to_string(), v.to_string()));
    }
    for (k, v) in pairs {
        c.set(&k, &v)?;
    }
    c.validate()?;
    Ok(c)
}

fn list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::Argument(format!("invalid {what} {x:?}")))
        })
        .collect()
}

fn load_db(cfg: &RunConfig) -> Result<Database> {
    Database::load_dir(cfg.data_dir()?)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = run_config(&cli)?;
    let _lock = OutLock::acquire(&cfg.out)?;
    std::fs::write(cfg.out.join("config.txt"), cfg.to_text())?;
    let report: Report = match &cli.cmd {
        Cmd::Ingest => {
            let db = load_db(&cfg)?;
            match cfg.workload.as_deref() {
                Some(p) => {
                    let (w, dropped) = commands::load_workload(p, &db, &cfg)?;
                    commands::ingest(&db, Some((&w, dropped)))?
                }
                None => commands::ingest(&db, None)?,
            }
        }
        Cmd::GenWorkload { queries } => {
            let db = load_db(&cfg)?;
            commands::gen_workload(&db, *queries, cfg.seed, &cfg.out)?.1
        }
        Cmd::Train => {
            let db = load_db(&cfg)?;
            let (w, _) = commands::load_workload(cfg.workload_file()?, &db, &cfg)?;
            commands::train(&cfg, &db, &w)?.2
        }
        Cmd::BuildSet { selector } => {
            let db = load_db(&cfg)?;
            let (w, _) = commands::load_workload(cfg.workload_file()?, &db, &cfg)?;
            commands::build_set(&cfg, &db, &w, Selector::parse(selector)?)?.1
        }
        Cmd::Repl {
            approx_only,
            batch,
            mode,
        } => {
            let db = load_db(&cfg)?;
            let (w, _) = commands::load_workload(cfg.workload_file()?, &db, &cfg)?;
            let log = cfg.out.join("session.log");
            let mut session = commands::open_session(&cfg, &db, &w, *approx_only, Some(&log))?;
            if let Some(m) = mode {
                session.set_mode(Mode::parse(m)?)?;
            }
            let stdin = std::io::stdin();
            let interactive = !batch && stdin.is_terminal();
            let input: Box<dyn BufRead> = Box::new(stdin.lock());
            let mut stdout = std::io::stdout();
            let summary = repl(
                &mut session,
                input,
                &mut stdout,
                ReplOptions { interactive },
            )?;
            stdout.flush()?;
            std::fs::write(cfg.out.join("session_summary.txt"), format!("{summary}\n"))?;
            return Ok(());
        }
        Cmd::Bench { which } => match which {
            Bench::Score { selectors } => {
                let db = load_db(&cfg)?;
                let (w, _) = commands::load_workload(cfg.workload_file()?, &db, &cfg)?;
                commands::bench_score(&cfg, &db, &w, &Selector::parse_list(selectors)?)?
            }
            Bench::Latency { factors, selector } => {
                let db = load_db(&cfg)?;
                let (w, _) = commands::load_workload(cfg.workload_file()?, &db, &cfg)?;
                let set = match cfg.set.as_deref() {
                    Some(p) => commands::read_set(p, &db, cfg.k)?,
                    None => {
                        asqp_harness::select::build(
                            Selector::parse(selector)?,
                            &cfg,
                            &db,
                            &w,
                            cfg.seed,
                        )?
                        .set
                    }
                };
                commands::bench_latency(&cfg, &db, &w, &set, &list(factors, "scale factor")?)?
            }
            Bench::Diversity { selectors } => {
                let db = load_db(&cfg)?;
                let (w, _) = commands::load_workload(cfg.workload_file()?, &db, &cfg)?;
                commands::bench_diversity(&cfg, &db, &w, &Selector::parse_list(selectors)?)?
            }
            Bench::Aggregates {
                selector,
                queries,
                rows,
            } => {
                let db = match cfg.data {
                    Some(_) => load_db(&cfg)?,
                    None => uniform_table(*rows, cfg.seed)?,
                };
                commands::bench_aggregates(&cfg, &db, Selector::parse(selector)?, *queries)?
            }
        },
        Cmd::Sweep {
            param,
            values,
            selectors,
        } => {
            let param = SweepParam::parse(param)?;
            let values: Vec<String> = values
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            if values.is_empty() {
                return Err(Error::Argument("sweep needs --values".into()));
            }
            let db = load_db(&cfg)?;
            let (w, _) = commands::load_workload(cfg.workload_file()?, &db, &cfg)?;
            commands::sweep(
                &cfg,
                &db,
                &w,
                param,
                &values,
                &Selector::parse_list(selectors)?,
            )?
        }
        Cmd::Ablate => {
            let db = load_db(&cfg)?;
            let (w, _) = commands::load_workload(cfg.workload_file()?, &db, &cfg)?;
            commands::ablate(&cfg, &db, &w)?
        }
    };
    report.write(&cfg.out)?;
    print!("{}", report.summary);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
