use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use asqp::synth::toy_instance;

fn asqp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_asqp"))
}

fn run(args: &[&str]) -> Output {
    asqp().args(args).output().expect("spawn asqp")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// Toy data and workload written under `dir`.
fn toy_files(dir: &Path, seed: u64) -> (PathBuf, PathBuf) {
    let inst = toy_instance(seed).unwrap();
    let data = dir.join("data");
    inst.db.save_dir(&data).unwrap();
    let w = dir.join("workload.sql");
    inst.workload.save(&w).unwrap();
    (data, w)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// CSV text with `_secs` / `_ms` columns removed.
fn strip_timings(csv: &str) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let keep: Vec<usize> = (0..header.len())
        .filter(|&i| !header[i].ends_with("_secs") && !header[i].ends_with("_ms"))
        .collect();
    let pick = |l: &str| {
        let cells: Vec<&str> = l.split(',').collect();
        keep.iter().map(|&i| cells[i]).collect::<Vec<_>>().join(",")
    };
    std::iter::once(pick(&header.join(",")))
        .chain(lines.map(pick))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["bench"])), 2);
    assert_eq!(code(&run(&["ingest", "--k", "many"])), 2);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn validation_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let (data, w) = toy_files(d.path(), 0);
    let out = d.path().join("o");
    let base = ["--data", s(&data), "--workload", s(&w), "--out", s(&out)];

    let o = asqp()
        .args(["ingest", "--k", "0"])
        .args(base)
        .output()
        .unwrap();
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let o = asqp()
        .args(["ingest", "--opt", "no_such_key=1"])
        .args(base)
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = asqp()
        .args(["ingest", "--opt", "novalue"])
        .args(base)
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = asqp()
        .args(["sweep", "--param", "k"])
        .args(base)
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = asqp()
        .args(["sweep", "--param", "depth", "--values", "1"])
        .args(base)
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = asqp()
        .args(["bench", "score", "--selectors", "XYZ"])
        .args(base)
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);

    let bad = d.path().join("bad.sql");
    std::fs::write(&bad, "SELECT nope FROM items\n").unwrap();
    let o = asqp()
        .args([
            "ingest",
            "--data",
            s(&data),
            "--workload",
            s(&bad),
            "--out",
            s(&out),
        ])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let cfg = d.path().join("bad.cfg");
    std::fs::write(&cfg, "k = 10\nthis line is wrong\n").unwrap();
    let o = asqp()
        .args(["ingest", "--config", s(&cfg)])
        .args(base)
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn runtime_errors_exit_3() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("o");
    let o = run(&[
        "ingest",
        "--data",
        s(&d.path().join("missing")),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing"));

    let (data, _) = toy_files(d.path(), 0);
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join(".lock"), "1\n").unwrap();
    let o = run(&["ingest", "--data", s(&data), "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("in use"));
}

#[test]
fn config_file_and_overrides() {
    let d = tempfile::tempdir().unwrap();
    let (data, w) = toy_files(d.path(), 1);
    let out = d.path().join("o");
    let cfg = d.path().join("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "# toy run\ndata = {}\nworkload = {}\nk = 7\nrepetitions = 2\n",
            data.display(),
            w.display()
        ),
    )
    .unwrap();
    let o = run(&[
        "bench",
        "score",
        "--selectors",
        "RAN",
        "--config",
        s(&cfg),
        "--k",
        "9",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let written = std::fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(written.lines().any(|l| l == "k=9"), "{written}");
    assert!(written.lines().any(|l| l == "repetitions=2"));
    let score = std::fs::read_to_string(out.join("score.csv")).unwrap();
    assert!(score.starts_with("selector,score_mean,score_std"));
    assert_eq!(score.lines().count(), 2);
    assert!(out.join("summary.txt").exists());
    assert!(!out.join(".lock").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("RAN"));
}

#[test]
fn outputs_reproducible_across_runs() {
    let d = tempfile::tempdir().unwrap();
    let (data, w) = toy_files(d.path(), 2);
    let go = |out: &Path| {
        let o = run(&[
            "bench",
            "score",
            "--selectors",
            "RAN,GRE,TOP,QRD",
            "--k",
            "12",
            "--repetitions",
            "2",
            "--seed",
            "5",
            "--data",
            s(&data),
            "--workload",
            s(&w),
            "--out",
            s(out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    go(&a);
    go(&b);
    for f in ["score.csv", "score_runs.csv"] {
        let x = std::fs::read_to_string(a.join(f)).unwrap();
        let y = std::fs::read_to_string(b.join(f)).unwrap();
        assert_eq!(strip_timings(&x), strip_timings(&y), "{f}");
    }
}

#[test]
fn train_build_and_batch_repl() {
    let d = tempfile::tempdir().unwrap();
    let (data, w) = toy_files(d.path(), 3);
    let out = d.path().join("train");
    let o = run(&[
        "train",
        "--k",
        "20",
        "--opt",
        "max_iters=3",
        "--opt",
        "workers=2",
        "--data",
        s(&data),
        "--workload",
        s(&w),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "model.ckpt",
        "model.space",
        "set.csv",
        "train.csv",
        "train_log.csv",
        "summary.txt",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let ckpt = out.join("model.ckpt");

    let built = d.path().join("built");
    let o = run(&[
        "build-set",
        "--k",
        "20",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&data),
        "--workload",
        s(&w),
        "--out",
        s(&built),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read_to_string(built.join("set.csv")).unwrap(),
        std::fs::read_to_string(out.join("set.csv")).unwrap()
    );

    let sess = d.path().join("sess");
    let mut child = asqp()
        .args([
            "repl",
            "--batch",
            "--k",
            "20",
            "--checkpoint",
            s(&ckpt),
            "--data",
            s(&data),
            "--workload",
            s(&w),
            "--out",
            s(&sess),
        ])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b".mode approx\nSELECT * FROM items WHERE hk BETWEEN 0 AND 3\nSELECT nope FROM items\n.stats\n.quit\n")
        .unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("[approx]"), "{text}");
    assert!(text.contains("session: queries=1"), "{text}");
    let log = std::fs::read_to_string(sess.join("session.log")).unwrap();
    assert_eq!(log.lines().count(), 1);
    assert_eq!(log.lines().next().unwrap().split('\t').count(), 6);
    assert!(sess.join("session_summary.txt").exists());
}

#[test]
fn ingest_and_gen_workload() {
    let d = tempfile::tempdir().unwrap();
    let (data, _) = toy_files(d.path(), 4);
    let out = d.path().join("g");
    let o = run(&[
        "gen-workload",
        "--queries",
        "6",
        "--seed",
        "3",
        "--data",
        s(&data),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let gen = out.join("workload.sql");
    let o = run(&[
        "ingest",
        "--data",
        s(&data),
        "--workload",
        s(&gen),
        "--out",
        s(&d.path().join("i")),
    ]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("items"));
    assert!(text.contains("workload: 6 queries kept"), "{text}");
    let tables = std::fs::read_to_string(d.path().join("i/tables.csv")).unwrap();
    assert!(tables.starts_with("table,rows,columns,schema\nitems,200,4,"));
}
