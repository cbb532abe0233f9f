//! Choosing between the approximation set and the full database.

use std::fmt;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::query::{execute, ResultSet, SpjQuery};
use crate::relational::Database;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Approx,
    Hybrid60,
    Hybrid80,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Approx, Mode::Hybrid60, Mode::Hybrid80];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Approx => "approx",
            Mode::Hybrid60 => "hybrid60",
            Mode::Hybrid80 => "hybrid80",
        }
    }

    pub fn parse(s: &str) -> Result<Mode> {
        match s.trim().to_ascii_lowercase().replace('-', "").as_str() {
            "approx" | "approxonly" => Ok(Mode::Approx),
            "hybrid60" => Ok(Mode::Hybrid60),
            "hybrid80" => Ok(Mode::Hybrid80),
            _ => Err(Error::Argument(format!(
                "unknown mode {s:?} (approx, hybrid60, hybrid80)"
            ))),
        }
    }

    /// Predicted ratios below this go to the full database.
    pub fn threshold(self) -> Option<f64> {
        match self {
            Mode::Approx => None,
            Mode::Hybrid60 => Some(0.6),
            Mode::Hybrid80 => Some(0.8),
        }
    }

    pub fn source_for(self, predicted: f64) -> Source {
        match self.threshold() {
            Some(t) if predicted < t => Source::Full,
            _ => Source::Approx,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Approx,
    Full,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Approx => "approx",
            Source::Full => "full",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Routed {
    pub result: ResultSet,
    pub source: Source,
    pub latency: Duration,
}

/// Runs `q` on the source picked for `predicted` under `mode`.
pub fn route(
    mode: Mode,
    predicted: f64,
    q: &SpjQuery,
    approx: &Database,
    full: Option<&Database>,
) -> Result<Routed> {
    run_on(mode.source_for(predicted), q, approx, full)
}

/// Runs `q` on an explicitly chosen source.
pub fn run_on(
    source: Source,
    q: &SpjQuery,
    approx: &Database,
    full: Option<&Database>,
) -> Result<Routed> {
    let db = match source {
        Source::Approx => approx,
        Source::Full => full.ok_or_else(|| {
            Error::Routing("query needs the full database, which is not loaded".into())
        })?,
    };
    let start = Instant::now();
    let result = execute(q, db)?;
    Ok(Routed {
        result,
        source,
        latency: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds() {
        assert_eq!(Mode::Hybrid60.source_for(0.9), Source::Approx);
        assert_eq!(Mode::Hybrid60.source_for(0.5), Source::Full);
        assert_eq!(Mode::Hybrid60.source_for(0.6), Source::Approx);
        assert_eq!(Mode::Hybrid80.source_for(0.7), Source::Full);
        assert_eq!(Mode::Approx.source_for(0.0), Source::Approx);
        for m in Mode::ALL {
            assert_eq!(Mode::parse(m.name()).unwrap(), m);
        }
        assert_eq!(Mode::parse("hybrid-60").unwrap(), Mode::Hybrid60);
    }
}
