//! Comma-separated tables, the human summary and the output-directory lock.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use asqp::{Error, Result};

/// Columns whose names end in one of these hold wall-clock measurements and
/// are excluded from reproducibility comparisons.
pub const TIMING_SUFFIXES: [&str; 2] = ["_secs", "_ms"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Table {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn col(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Cell of row `r` in column `name`.
    pub fn get(&self, r: usize, name: &str) -> Option<&str> {
        let c = self.col(name)?;
        self.rows.get(r).map(|row| row[c].as_str())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv of utf-8 cells"))
    }

    /// The table with timing columns dropped.
    pub fn without_timings(&self) -> Table {
        let keep: Vec<usize> = (0..self.header.len())
            .filter(|&i| !TIMING_SUFFIXES.iter().any(|s| self.header[i].ends_with(s)))
            .collect();
        Table {
            header: keep.iter().map(|&i| self.header[i].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| keep.iter().map(|&i| r[i].clone()).collect())
                .collect(),
        }
    }

    /// Space-aligned rendering for the summary.
    pub fn to_aligned(&self) -> String {
        let mut width: Vec<usize> = self.header.iter().map(|h| h.len()).collect();
        for r in &self.rows {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&width)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            parts.join("  ").trim_end().to_string()
        };
        let mut s = line(&self.header);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&line(r));
            s.push('\n');
        }
        s
    }
}

/// What a command produced: named tables, a human summary and any extra
/// files it already wrote.
#[derive(Clone, Debug, Default)]
pub struct Report {
    pub tables: Vec<(String, Table)>,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

impl Report {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Writes `<name>.csv` per table and `summary.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        for (name, t) in &self.tables {
            let p = dir.join(format!("{name}.csv"));
            std::fs::write(&p, t.to_csv()?)?;
            out.push(p);
        }
        let p = dir.join("summary.txt");
        std::fs::write(&p, &self.summary)?;
        out.push(p);
        Ok(out)
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutLock {
    path: PathBuf,
    _file: File,
}

impl OutLock {
    pub fn acquire(dir: &Path) -> Result<OutLock> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        let mut file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    Error::Io(std::io::Error::new(
                        e.kind(),
                        format!(
                            "{} is in use by another run (delete {} if stale)",
                            dir.display(),
                            path.display()
                        ),
                    ))
                } else {
                    Error::Io(e)
                }
            })?;
        writeln!(file, "{}", std::process::id())?;
        Ok(OutLock { path, _file: file })
    }
}

impl Drop for OutLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// `mean` and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

pub fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}
