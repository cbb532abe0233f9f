//! The RL action space: subsampled joined rows of the workload queries,
//! deduplicated into actions, with per-query membership used for rewards.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::query::{bind, execute, SpjQuery};
use crate::relational::{Database, TableId, TupleRef, Value};
use crate::stats::{ColumnStats, DatabaseStats};
use crate::workload::{fnv1a, FeatureHasher, Workload, DEFAULT_DIM};

pub const DEFAULT_CAP: usize = 512;
/// Marks "not a member" in the per-query projected-row table.
pub const NO_ROW: u32 = u32::MAX;

const MAGIC: &[u8; 8] = b"ASQPASPC";
const VERSION: u32 = 1;

/// One joined row of the database: a set of base tuples (at most one per
/// table), sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub refs: Vec<TupleRef>,
    pub features: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionSpace {
    actions: Vec<Action>,
    reps: Workload,
    cards: Vec<usize>,
    /// `rows[a][i]`: interned projected row of action `a` under query `i`,
    /// or `NO_ROW` when the action does not produce a row of that query.
    rows: Vec<Vec<u32>>,
    /// Per query: (action, projected row) for every member action.
    by_query: Vec<Vec<(u32, u32)>>,
    proj_counts: Vec<usize>,
    dim: usize,
    tables: Vec<(String, usize)>,
}

/// Options for [`ActionSpace::build`].
#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub cap: usize,
    pub seed: u64,
    pub dim: usize,
    /// Extra queries (e.g. relaxed variants) whose subsampled rows are added
    /// to the action pool; rewards still come from the representatives.
    pub extra_pool: Vec<SpjQuery>,
    pub exec: Exec,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            cap: DEFAULT_CAP,
            seed: 0,
            dim: DEFAULT_DIM,
            extra_pool: Vec::new(),
            exec: Exec::default(),
        }
    }
}

fn hash_with_seed(seed: u64, text: &str) -> u64 {
    let mut buf = seed.to_le_bytes().to_vec();
    buf.extend_from_slice(text.as_bytes());
    fnv1a(&buf)
}

/// Keeps at most `cap` rows of `q`'s result. Rows are ranked by a seeded
/// hash of their primary join-key value (so rows sharing a key survive or
/// drop together across queries), then by a hash of their provenance.
fn subsample(q: &SpjQuery, db: &Database, cap: usize, seed: u64) -> Result<Vec<Vec<TupleRef>>> {
    let rs = execute(&q.without_limit(), db)?;
    let key_col = q.joins.first().map(|j| {
        let slot = q.table_index(&j.left.table).expect("bound query");
        let t = db.table_by_name(&j.left.table).expect("bound query");
        (slot, t.column_index(&j.left.column).expect("bound query"))
    });
    let mut ranked: Vec<(u64, u64, Vec<TupleRef>)> = rs
        .provenance
        .into_iter()
        .map(|prov| {
            let key = match key_col {
                Some((slot, col)) => db
                    .resolve(prov[slot])
                    .map(|r| r[col].to_string())
                    .unwrap_or_default(),
                None => format!("{}:{}", prov[0].table.0, prov[0].row),
            };
            let p: Vec<String> = prov
                .iter()
                .map(|t| format!("{}:{}", t.table.0, t.row))
                .collect();
            (
                hash_with_seed(seed, &key),
                hash_with_seed(seed ^ 0x9e37_79b9, &p.join(",")),
                prov,
            )
        })
        .collect();
    ranked.sort_unstable_by(|a, b| (a.0, a.1, &a.2).cmp(&(b.0, b.1, &b.2)));
    ranked.truncate(cap);
    Ok(ranked.into_iter().map(|r| r.2).collect())
}

/// Hashed tuple features: numeric columns z-scored, categorical values
/// weighted by `ln(1 + 1/frequency)`, plus a constant bias.
pub fn featurize_tuple(
    refs: &[TupleRef],
    db: &Database,
    stats: &DatabaseStats,
    dim: usize,
) -> Vec<f64> {
    let mut h = FeatureHasher::new(dim);
    for r in refs {
        let table = db.table(r.table);
        let Some(row) = db.resolve(*r) else { continue };
        for (c, v) in table.columns().iter().zip(row) {
            let name = format!("{}.{}", table.name(), c.name);
            match (v, stats.column(table.name(), &c.name)) {
                (Value::Null, _) => {}
                (Value::Int(_) | Value::Real(_), Some(ColumnStats::Numeric { mean, std, .. })) => {
                    let z = if *std > 0.0 {
                        (v.as_f64().unwrap() - mean) / std
                    } else {
                        0.0
                    };
                    h.add(&name, z);
                }
                (_, Some(cs @ ColumnStats::Categorical { .. })) => {
                    let f = cs.frequency(v).max(1) as f64;
                    h.add(&format!("{name}:{v}"), (1.0 + 1.0 / f).ln());
                }
                _ => h.add(&format!("{name}:{v}"), 1.0),
            }
        }
    }
    h.finish().0
}

impl ActionSpace {
    /// Executes the representatives (and any extra pool queries), subsamples
    /// each result to `cap` rows, deduplicates the surviving joined rows into
    /// actions and records which representatives every action serves.
    pub fn build(
        db: &Database,
        reps: &Workload,
        stats: &DatabaseStats,
        opts: &BuildOptions,
    ) -> Result<ActionSpace> {
        if opts.cap == 0 {
            return Err(Error::Argument("subsample cap must be at least 1".into()));
        }
        let exec = opts.exec;
        let pool: Vec<&SpjQuery> = reps.queries().iter().chain(&opts.extra_pool).collect();
        let sampled = exec.map(&pool, |q| subsample(q, db, opts.cap, opts.seed));
        let mut unique: BTreeMap<Vec<TupleRef>, ()> = BTreeMap::new();
        for s in sampled {
            for mut refs in s? {
                refs.sort_unstable();
                unique.insert(refs, ());
            }
        }
        if unique.is_empty() {
            return Err(Error::Build(
                "every representative has an empty result".into(),
            ));
        }
        let refs: Vec<Vec<TupleRef>> = unique.into_keys().collect();
        let cards = exec
            .map(reps.queries(), |q| execute(q, db).map(|r| r.distinct()))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let features = exec.map(&refs, |r| featurize_tuple(r, db, stats, opts.dim));
        let actions = refs
            .into_iter()
            .zip(features)
            .map(|(refs, features)| Action { refs, features })
            .collect();
        let tables = db
            .tables()
            .map(|(_, t)| (t.name().to_string(), t.len()))
            .collect();
        let mut space = ActionSpace {
            actions,
            reps: reps.clone(),
            cards,
            rows: Vec::new(),
            by_query: Vec::new(),
            proj_counts: Vec::new(),
            dim: opts.dim,
            tables,
        };
        space.rows = space.compute_membership(db, exec)?;
        space.index();
        Ok(space)
    }

    /// For each action and representative: if the representative's tables
    /// are all present among the action's tuples and those tuples satisfy
    /// it, the interned projected row it produces.
    fn compute_membership(&self, db: &Database, exec: Exec) -> Result<Vec<Vec<u32>>> {
        let bounds = self
            .reps
            .queries()
            .iter()
            .map(|q| bind(q, db))
            .collect::<Result<Vec<_>>>()?;
        let projected: Vec<Vec<Option<Vec<Value>>>> = exec.map(&self.actions, |a| {
            bounds
                .iter()
                .map(|b| {
                    let mut combo = Vec::with_capacity(b.tables.len());
                    let mut rows = Vec::with_capacity(b.tables.len());
                    for &t in &b.tables {
                        let r = a.refs.iter().find(|r| r.table == t)?;
                        let pos = db.table(t).position_of(r.row)?;
                        combo.push(pos);
                        rows.push(db.table(t).row(pos));
                    }
                    b.matches(&rows).then(|| b.project(db, &combo))
                })
                .collect()
        });
        let mut interners: Vec<HashMap<Vec<Value>, u32>> = vec![HashMap::new(); self.reps.len()];
        Ok(projected
            .into_iter()
            .map(|per_rep| {
                per_rep
                    .into_iter()
                    .enumerate()
                    .map(|(i, row)| match row {
                        None => NO_ROW,
                        Some(v) => {
                            let next = interners[i].len() as u32;
                            *interners[i].entry(v).or_insert(next)
                        }
                    })
                    .collect()
            })
            .collect())
    }

    /// The same actions scored against different representatives.
    pub fn rebind(&self, db: &Database, reps: &Workload, exec: Exec) -> Result<ActionSpace> {
        self.check_db(db)?;
        let cards = exec
            .map(reps.queries(), |q| execute(q, db).map(|r| r.distinct()))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let mut space = ActionSpace {
            actions: self.actions.clone(),
            reps: reps.clone(),
            cards,
            rows: Vec::new(),
            by_query: Vec::new(),
            proj_counts: Vec::new(),
            dim: self.dim,
            tables: self.tables.clone(),
        };
        space.rows = space.compute_membership(db, exec)?;
        space.index();
        Ok(space)
    }

    fn index(&mut self) {
        let r = self.reps.len();
        self.by_query = vec![Vec::new(); r];
        self.proj_counts = vec![0; r];
        for (a, rows) in self.rows.iter().enumerate() {
            for (i, &p) in rows.iter().enumerate() {
                if p != NO_ROW {
                    self.by_query[i].push((a as u32, p));
                    self.proj_counts[i] = self.proj_counts[i].max(p as usize + 1);
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn action(&self, a: usize) -> &Action {
        &self.actions[a]
    }

    pub fn reps(&self) -> &Workload {
        &self.reps
    }

    pub fn rep_count(&self) -> usize {
        self.reps.len()
    }

    /// Distinct full-database result size of each representative.
    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    /// Member actions of representative `i` with their projected-row ids.
    pub fn members(&self, i: usize) -> &[(u32, u32)] {
        &self.by_query[i]
    }

    /// Number of distinct projected rows of representative `i` in the space.
    pub fn proj_count(&self, i: usize) -> usize {
        self.proj_counts[i]
    }

    pub fn row_of(&self, a: usize, i: usize) -> Option<u32> {
        let p = self.rows[a][i];
        (p != NO_ROW).then_some(p)
    }

    /// Membership bitmask of action `a` over representatives.
    pub fn mask(&self, a: usize) -> Vec<bool> {
        self.rows[a].iter().map(|&p| p != NO_ROW).collect()
    }

    /// Distinct projected rows of representative `i` among the chosen
    /// actions; a lower bound on the true distinct result size.
    pub fn reward_index_count(&self, chosen: &[bool], i: usize) -> usize {
        let mut seen = vec![false; self.proj_counts[i]];
        let mut n = 0;
        for &(a, p) in &self.by_query[i] {
            if chosen[a as usize] && !seen[p as usize] {
                seen[p as usize] = true;
                n += 1;
            }
        }
        n
    }

    /// Proxy score: the score formula evaluated with `reward_index_count`.
    pub fn proxy_score(&self, chosen: &[bool], frame: usize) -> f64 {
        (0..self.rep_count())
            .map(|i| {
                let card = self.cards[i];
                if card == 0 {
                    return 0.0;
                }
                self.reps.weights()[i]
                    * crate::scoring::ratio(self.reward_index_count(chosen, i), card, frame)
            })
            .sum()
    }

    /// Index of the action with exactly these (sorted) tuples.
    pub fn find(&self, refs: &[TupleRef]) -> Option<usize> {
        self.actions
            .binary_search_by(|a| a.refs.as_slice().cmp(refs))
            .ok()
    }

    fn check_db(&self, db: &Database) -> Result<()> {
        let here: Vec<(String, usize)> = db
            .tables()
            .map(|(_, t)| (t.name().to_string(), t.len()))
            .collect();
        if here != self.tables {
            return Err(Error::Format(
                "action space was built for a different database".into(),
            ));
        }
        Ok(())
    }

    /// Content fingerprint (tuples and membership), used to tie checkpoints
    /// to the space they were trained on.
    pub fn fingerprint(&self) -> u64 {
        let mut buf = Vec::new();
        for (a, rows) in self.actions.iter().zip(&self.rows) {
            for r in &a.refs {
                buf.extend_from_slice(&(r.table.0 as u32).to_le_bytes());
                buf.extend_from_slice(&(r.row as u64).to_le_bytes());
            }
            buf.push(0xff);
            for p in rows {
                buf.extend_from_slice(&p.to_le_bytes());
            }
        }
        fnv1a(&buf)
    }

    pub fn manifest_path(path: &Path) -> PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".manifest");
        PathBuf::from(p)
    }

    /// Writes the binary space to `path` and a text manifest beside it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let max_refs = self.actions.iter().map(|a| a.refs.len()).max().unwrap_or(0);
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.rep_count() as u32).to_le_bytes());
        out.extend_from_slice(&(max_refs as u32).to_le_bytes());
        for (a, rows) in self.actions.iter().zip(&self.rows) {
            out.extend_from_slice(&(a.refs.len() as u32).to_le_bytes());
            for i in 0..max_refs {
                let (t, r) = a
                    .refs
                    .get(i)
                    .map_or((u32::MAX, u64::MAX), |r| (r.table.0 as u32, r.row as u64));
                out.extend_from_slice(&t.to_le_bytes());
                out.extend_from_slice(&r.to_le_bytes());
            }
            for f in &a.features {
                out.extend_from_slice(&f.to_le_bytes());
            }
            for p in rows {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
        std::fs::File::create(path)?.write_all(&out)?;

        let mut m = String::new();
        m.push_str(&format!(
            "version {VERSION}\nactions {}\ndim {}\n",
            self.len(),
            self.dim
        ));
        for (name, n) in &self.tables {
            m.push_str(&format!("table {name} {n}\n"));
        }
        for (i, (q, w)) in self.reps.iter().enumerate() {
            m.push_str(&format!("rep {w} {} {q}\n", self.cards[i]));
        }
        std::fs::write(Self::manifest_path(path), m)?;
        Ok(())
    }

    /// Reads a space written by [`ActionSpace::save`], checking that `db`
    /// is the database it was built from.
    pub fn load(path: &Path, db: &Database) -> Result<ActionSpace> {
        let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
        let manifest = std::fs::read_to_string(Self::manifest_path(path))?;
        let mut tables = Vec::new();
        let mut queries = Vec::new();
        let mut weights = Vec::new();
        let mut cards = Vec::new();
        for line in manifest.lines() {
            let mut parts = line.splitn(2, ' ');
            let (key, rest) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
            match key {
                "table" => {
                    let (name, n) = rest.rsplit_once(' ').ok_or_else(|| bad("bad table line"))?;
                    tables.push((
                        name.to_string(),
                        n.parse().map_err(|_| bad("bad table size"))?,
                    ));
                }
                "rep" => {
                    let mut f = rest.splitn(3, ' ');
                    let w: f64 = f
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad("bad rep weight"))?;
                    let c: usize = f
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad("bad rep cardinality"))?;
                    let sql = f.next().ok_or_else(|| bad("missing rep query"))?;
                    queries.push(crate::query::parse_sql(sql, db)?.to_spj());
                    weights.push(w);
                    cards.push(c);
                }
                _ => {}
            }
        }

        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut cur = Cursor {
            bytes: &bytes,
            pos: 0,
        };
        if cur.take(8).ok_or_else(|| bad("truncated header"))? != MAGIC {
            return Err(bad("not an action-space file"));
        }
        let version = cur.u32().ok_or_else(|| bad("truncated header"))?;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let dim = cur.u32().ok_or_else(|| bad("truncated header"))? as usize;
        let m = cur.u64().ok_or_else(|| bad("truncated header"))? as usize;
        let r = cur.u32().ok_or_else(|| bad("truncated header"))? as usize;
        let max_refs = cur.u32().ok_or_else(|| bad("truncated header"))? as usize;
        if r != queries.len() {
            return Err(bad("manifest and binary disagree on representative count"));
        }
        let record = 4 + max_refs * 12 + dim * 8 + r * 4;
        if bytes.len() != cur.pos + m * record {
            return Err(bad("file size does not match header"));
        }
        let mut actions = Vec::with_capacity(m);
        let mut rows = Vec::with_capacity(m);
        for _ in 0..m {
            let n = cur.u32().unwrap() as usize;
            let mut refs = Vec::with_capacity(n);
            for i in 0..max_refs {
                let t = cur.u32().unwrap();
                let row = cur.u64().unwrap();
                if i < n {
                    refs.push(TupleRef::new(TableId(t as usize), row as usize));
                }
            }
            let features = (0..dim)
                .map(|_| f64::from_le_bytes(cur.take(8).unwrap().try_into().unwrap()))
                .collect();
            rows.push((0..r).map(|_| cur.u32().unwrap()).collect());
            actions.push(Action { refs, features });
        }
        let mut space = ActionSpace {
            actions,
            reps: Workload::new(queries, weights)?,
            cards,
            rows,
            by_query: Vec::new(),
            proj_counts: Vec::new(),
            dim,
            tables,
        };
        space.check_db(db)?;
        space.index();
        Ok(space)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8)
            .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}
