//! Line-oriented front end over a [`Session`].

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::query::{parse_sql, Query, ResultSet, SpjQuery};

use super::routing::{Mode, Source};
use super::session::Session;

/// Distance from the routing threshold within which the user is asked.
pub const ASK_MARGIN: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReplOptions {
    /// Prompt before fine-tuning and near the routing threshold; off means
    /// fine-tune automatically and always route automatically.
    pub interactive: bool,
}

/// Header, at most `frame` rows and a `+N more` footer.
pub fn render(result: &ResultSet, frame: usize) -> String {
    let mut s = String::new();
    let header: Vec<String> = result.columns.iter().map(|c| c.to_string()).collect();
    s.push_str(&header.join(" | "));
    s.push('\n');
    for row in result.rows.iter().take(frame) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(" | "));
        s.push('\n');
    }
    if result.len() > frame {
        s.push_str(&format!("+{} more\n", result.len() - frame));
    }
    s
}

fn ask<R: BufRead, W: Write>(input: &mut R, out: &mut W, prompt: &str) -> Result<String> {
    write!(out, "{prompt}")?;
    out.flush()?;
    let mut line = String::new();
    input.read_line(&mut line)?;
    Ok(line.trim().to_ascii_lowercase())
}

fn run_finetune<W: Write>(session: &mut Session, qs: &[SpjQuery], out: &mut W) -> Result<()> {
    writeln!(out, "fine-tuning on {} queries...", qs.len())?;
    match session.finetune(qs) {
        Ok(r) => writeln!(
            out,
            "fine-tuned in {:.1}s: ratio on those queries {:.3} -> {:.3}",
            r.secs, r.before, r.after
        )?,
        Err(e) => writeln!(out, "error: {e}")?,
    }
    Ok(())
}

fn meta<W: Write>(session: &mut Session, cmd: &str, out: &mut W) -> Result<bool> {
    let mut parts = cmd.split_whitespace();
    match parts.next().unwrap_or("") {
        ".quit" | ".exit" => return Ok(false),
        ".mode" => match parts.next() {
            None => writeln!(out, "mode {}", session.mode())?,
            Some(m) => match Mode::parse(m).and_then(|m| session.set_mode(m)) {
                Ok(()) => writeln!(out, "mode {}", session.mode())?,
                Err(e) => writeln!(out, "error: {e}")?,
            },
        },
        ".stats" => {
            writeln!(out, "{}", session.stats().summary())?;
            writeln!(
                out,
                "mode={} set_size={} drift_window={} deviating={}",
                session.mode(),
                session.set().len(),
                session.drift().window().count(),
                session.drift().deviating()
            )?;
        }
        ".finetune" => {
            let qs: Vec<SpjQuery> = session.drift().window().map(|e| e.query.clone()).collect();
            if qs.is_empty() {
                writeln!(out, "no recent queries to fine-tune on")?;
            } else {
                run_finetune(session, &qs, out)?;
            }
        }
        other => {
            writeln!(
                out,
                "unknown command {other} (.mode, .stats, .finetune, .quit)"
            )?;
        }
    }
    Ok(true)
}

fn handle<R: BufRead, W: Write>(
    session: &mut Session,
    line: &str,
    opts: ReplOptions,
    input: &mut R,
    out: &mut W,
) -> Result<()> {
    let q = match parse_sql(line, session.schema())? {
        Query::Spj(q) => q,
        Query::Aggregate(_) => {
            return Err(Error::Unsupported(
                "aggregate queries are not routed; use the aggregates bench".into(),
            ))
        }
    };
    let mut choice = None;
    if opts.interactive && session.full_db().is_some() {
        if let Some(t) = session.mode().threshold() {
            let p = session.estimate(&q)?.ratio;
            if (p - t).abs() <= ASK_MARGIN {
                let auto = session.mode().source_for(p);
                let a = ask(
                    input,
                    out,
                    &format!(
                        "predicted {p:.3} is near the {} threshold {t}; answer from [a]pprox or [f]ull? (default {}) ",
                        session.mode(),
                        auto.name()
                    ),
                )?;
                choice = Some(match a.as_str() {
                    "a" | "approx" => Source::Approx,
                    "f" | "full" => Source::Full,
                    _ => auto,
                });
            }
        }
    }
    let ans = session.query(&q, choice)?;
    write!(out, "{}", render(&ans.routed.result, session.frame()))?;
    writeln!(
        out,
        "[{}] predicted={:.3} rows={} time={:.3}ms",
        ans.routed.source.name(),
        ans.estimate.ratio,
        ans.routed.result.len(),
        ans.routed.latency.as_secs_f64() * 1e3
    )?;
    if let Some(qs) = ans.drift {
        writeln!(
            out,
            "interest drift: {} recent queries deviate from the training workload",
            qs.len()
        )?;
        if !session.can_finetune() {
            writeln!(
                out,
                "fine-tuning unavailable: no checkpoint or full database loaded"
            )?;
        } else if opts.interactive {
            let a = ask(input, out, "fine-tune now? [y/N] ")?;
            if a == "y" || a == "yes" {
                run_finetune(session, &qs, out)?;
            }
        } else {
            run_finetune(session, &qs, out)?;
        }
    }
    Ok(())
}

/// Reads statements until `.quit` or end of input and returns the session
/// summary, which is also printed. Statement errors are printed and the
/// loop continues.
pub fn repl<R: BufRead, W: Write>(
    session: &mut Session,
    mut input: R,
    out: &mut W,
    opts: ReplOptions,
) -> Result<String> {
    if session.full_db().is_none() {
        writeln!(out, "warning: full database not loaded; answers come from the approximation set and are not guaranteed complete")?;
    }
    loop {
        if opts.interactive {
            write!(out, "asqp> ")?;
            out.flush()?;
        }
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        let line = line.trim().trim_end_matches(';').trim();
        if line.is_empty() || line.starts_with("--") {
            continue;
        }
        if line.starts_with('.') {
            if !meta(session, line, out)? {
                break;
            }
            continue;
        }
        if let Err(e) = handle(session, line, opts, &mut input, out) {
            if matches!(e, Error::Io(_)) {
                return Err(e);
            }
            if !matches!(e, Error::Routing(_)) {
                session.note_error();
            }
            writeln!(out, "error: {e}")?;
        }
    }
    let summary = session.stats().summary();
    writeln!(out, "session: {summary}")?;
    Ok(summary)
}
