//! Non-learned selectors that fill the same tuple budget.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::action_space::ActionSpace;
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::query::{execute, SpjQuery};
use crate::relational::{
    ApproximationSet, ColumnType, Database, InsertOutcome, TableId, TupleRef, Value,
};
use crate::rl::{Selection, SpaceIndex};
use crate::scoring::{brute_force_opt, IndexedScorer};
use crate::workload::k_medoids;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Baseline {
    Ran,
    Gre,
    Top,
    Brt,
    Cach,
    Sky,
    Qrd,
}

impl Baseline {
    pub const ALL: [Baseline; 7] = [
        Baseline::Ran,
        Baseline::Gre,
        Baseline::Top,
        Baseline::Brt,
        Baseline::Cach,
        Baseline::Sky,
        Baseline::Qrd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Ran => "RAN",
            Baseline::Gre => "GRE",
            Baseline::Top => "TOP",
            Baseline::Brt => "BRT",
            Baseline::Cach => "CACH",
            Baseline::Sky => "SKY",
            Baseline::Qrd => "QRD",
        }
    }

    pub fn parse(s: &str) -> Result<Baseline> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Argument(format!("unknown baseline {s:?}")))
    }

    /// Runs this selector with budget `k`.
    pub fn select(self, ctx: &Context<'_>, k: usize) -> Result<Chosen> {
        let done = |set| Chosen {
            set,
            complete: true,
        };
        match self {
            Baseline::Ran => Ok(done(ran_select(ctx.space, ctx.db, k, ctx.seed)?)),
            Baseline::Gre => gre_select(ctx.space, ctx.db, ctx.frame, k, ctx.time_cap),
            Baseline::Top => Ok(done(top_select(ctx.space, ctx.db, k)?)),
            Baseline::Brt => brt_select(ctx.space, ctx.db, ctx.frame, k, ctx.time_cap, ctx.exec),
            Baseline::Cach => Ok(done(cach_simulate(ctx.history, ctx.db, k)?)),
            Baseline::Sky => Ok(done(sky_select(ctx.db, k)?)),
            Baseline::Qrd => Ok(done(qrd_select(ctx.space, ctx.db, k, ctx.seed)?)),
        }
    }
}

/// Everything a baseline may look at.
#[derive(Clone, Copy, Debug)]
pub struct Context<'a> {
    pub db: &'a Database,
    pub space: &'a ActionSpace,
    /// Query sequence replayed by the cache simulation.
    pub history: &'a [SpjQuery],
    pub frame: usize,
    pub seed: u64,
    /// Wall-clock cap for the search-based selectors.
    pub time_cap: Option<Duration>,
    pub exec: Exec,
}

/// A baseline's output; `complete` is false when a time cap cut it short.
#[derive(Clone, Debug, PartialEq)]
pub struct Chosen {
    pub set: ApproximationSet,
    pub complete: bool,
}

fn insert_all(
    set: &mut ApproximationSet,
    tuples: impl IntoIterator<Item = TupleRef>,
) -> Result<()> {
    for t in tuples {
        if set.insert(t)? == InsertOutcome::BudgetExhausted {
            return Err(Error::Contract("selection exceeds the budget".into()));
        }
    }
    Ok(())
}

/// Tuples of `refs` not yet in `set`.
fn missing(set: &ApproximationSet, refs: &[TupleRef]) -> usize {
    refs.iter().filter(|&&r| !set.contains(r)).count()
}

/// Uniform sample without replacement from the base tuples of all actions.
pub fn ran_select(
    space: &ActionSpace,
    db: &Database,
    k: usize,
    seed: u64,
) -> Result<ApproximationSet> {
    let mut universe: Vec<TupleRef> = space
        .actions()
        .iter()
        .flat_map(|a| a.refs.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    // Shuffle-then-prefix, so samples for growing k are nested.
    universe.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut set = ApproximationSet::new(db, k);
    insert_all(&mut set, universe.into_iter().take(k))?;
    Ok(set)
}

/// One greedy pass; `per_tuple` ranks by gain per new tuple instead of
/// raw gain. Returns the final selection and whether it finished in time.
fn greedy_pass<'a>(
    index: &'a SpaceIndex,
    frame: usize,
    k: usize,
    per_tuple: bool,
    deadline: Option<Instant>,
) -> (Selection<'a>, bool) {
    let mut sel = Selection::new(index, frame, index.full_batch());
    loop {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return (sel, false);
        }
        let base = sel.score();
        let mut best: Option<(f64, usize)> = None;
        for a in 0..index.len() {
            let cost = sel.new_tuples(a);
            if sel.is_chosen(a) || sel.used() + cost > k {
                continue;
            }
            sel.add(a);
            let gain = sel.score() - base;
            sel.remove(a);
            if gain <= 1e-12 {
                continue;
            }
            let key = if per_tuple {
                gain / cost.max(1) as f64
            } else {
                gain
            };
            if best.is_none_or(|(g, _)| key > g) {
                best = Some((key, a));
            }
        }
        match best {
            Some((_, a)) => sel.add(a),
            None => return (sel, true),
        }
    }
}

/// Greedy on proxy-score gain (ties to the lowest id) until the budget is
/// spent, no action gains, or the cap runs out. Runs once by raw gain and
/// once by gain per new tuple and keeps the better set.
pub fn gre_select(
    space: &ActionSpace,
    db: &Database,
    frame: usize,
    k: usize,
    time_cap: Option<Duration>,
) -> Result<Chosen> {
    let deadline = time_cap.map(|d| Instant::now() + d);
    let index = SpaceIndex::new(space);
    let (plain, done_a) = greedy_pass(&index, frame, k, false, deadline);
    let (ratio, done_b) = greedy_pass(&index, frame, k, true, deadline);
    let best = if ratio.score() > plain.score() {
        ratio
    } else {
        plain
    };
    let mut set = ApproximationSet::new(db, k);
    insert_all(&mut set, best.tuples())?;
    Ok(Chosen {
        set,
        complete: done_a && done_b,
    })
}

/// Actions ranked by how many representatives they answer (ties to the
/// lowest id), added while they fit.
pub fn top_select(space: &ActionSpace, db: &Database, k: usize) -> Result<ApproximationSet> {
    let mut order: Vec<(usize, usize)> = (0..space.len())
        .map(|a| (space.mask(a).iter().filter(|&&b| b).count(), a))
        .collect();
    order.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
    let mut set = ApproximationSet::new(db, k);
    for (_, a) in order {
        let refs = &space.action(a).refs;
        if missing(&set, refs) <= set.remaining() {
            insert_all(&mut set, refs.iter().copied())?;
        }
        if set.remaining() == 0 {
            break;
        }
    }
    Ok(set)
}

/// Exhaustive search over action combinations (see [`brute_force_opt`]).
pub fn brt_select(
    space: &ActionSpace,
    db: &Database,
    frame: usize,
    k: usize,
    time_cap: Option<Duration>,
    exec: Exec,
) -> Result<Chosen> {
    let scorer = IndexedScorer::build(space.reps(), db, frame, exec)?;
    let universe: Vec<Vec<TupleRef>> = space.actions().iter().map(|a| a.refs.clone()).collect();
    let bf = brute_force_opt(&universe, &scorer, k, time_cap, exec);
    let mut set = ApproximationSet::new(db, k);
    insert_all(&mut set, bf.tuples)?;
    Ok(Chosen {
        set,
        complete: bf.complete,
    })
}

/// LRU cache of base tuples filled by running `queries` in order. Every
/// tuple of a result is touched in result order; overflow evicts the least
/// recently touched tuple.
pub fn cach_simulate(queries: &[SpjQuery], db: &Database, k: usize) -> Result<ApproximationSet> {
    let mut stamp: HashMap<TupleRef, u64> = HashMap::new();
    let mut by_age: BTreeMap<u64, TupleRef> = BTreeMap::new();
    let mut clock = 0u64;
    for q in queries {
        let rs = execute(q, db)?;
        for t in rs.provenance.iter().flatten() {
            if let Some(old) = stamp.insert(*t, clock) {
                by_age.remove(&old);
            }
            by_age.insert(clock, *t);
            clock += 1;
            if by_age.len() > k {
                let (_, victim) = by_age.pop_first().expect("non-empty");
                stamp.remove(&victim);
            }
        }
    }
    let mut set = ApproximationSet::new(db, k);
    insert_all(&mut set, by_age.into_values())?;
    Ok(set)
}

/// Key-like columns are left out of skyline comparisons.
fn key_like(name: &str) -> bool {
    name == "id" || name.ends_with("_id")
}

/// Comparison vectors of a table's rows: numeric columns by value,
/// text columns by value frequency; nulls rank below everything.
fn sky_dims(db: &Database, table: TableId) -> Option<Vec<Vec<f64>>> {
    let t = db.table(table);
    let cols: Vec<usize> = (0..t.columns().len())
        .filter(|&c| !key_like(&t.columns()[c].name))
        .collect();
    if cols.is_empty() {
        return None;
    }
    let freq: Vec<HashMap<&Value, usize>> = cols
        .iter()
        .map(|&c| {
            let mut m = HashMap::new();
            if t.columns()[c].ty == ColumnType::Text {
                for row in t.rows() {
                    *m.entry(&row[c]).or_insert(0) += 1;
                }
            }
            m
        })
        .collect();
    Some(
        t.rows()
            .iter()
            .map(|row| {
                cols.iter()
                    .zip(&freq)
                    .map(|(&c, f)| match &row[c] {
                        Value::Null => f64::NEG_INFINITY,
                        v if t.columns()[c].ty == ColumnType::Text => f[v] as f64,
                        v => v.as_f64().unwrap_or(f64::NEG_INFINITY),
                    })
                    .collect()
            })
            .collect(),
    )
}

fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
}

/// Skyline layers of `points` (onion peeling), each sorted by index. Stops
/// once `limit` points have been layered.
pub fn skyline_layers(points: &[Vec<f64>], limit: usize) -> Vec<Vec<usize>> {
    // a point can only be dominated by one with a larger coordinate sum
    let sum = |i: usize| points[i].iter().map(|x| x.max(-1e300)).sum::<f64>();
    let mut rest: Vec<usize> = (0..points.len()).collect();
    rest.sort_by(|&a, &b| sum(b).total_cmp(&sum(a)).then(a.cmp(&b)));
    let mut layers = Vec::new();
    let mut taken = 0;
    while !rest.is_empty() && taken < limit {
        let mut front: Vec<usize> = Vec::new();
        let mut next = Vec::new();
        for &i in &rest {
            if front.iter().any(|&f| dominates(&points[f], &points[i])) {
                next.push(i);
            } else {
                front.push(i);
            }
        }
        taken += front.len();
        front.sort_unstable();
        layers.push(front);
        rest = next;
    }
    layers
}

/// Skyline layers of every table with comparable columns, taken layer by
/// layer (tables in id order, rows by id within a layer) until the budget.
pub fn sky_select(db: &Database, k: usize) -> Result<ApproximationSet> {
    let layered: Vec<(TableId, Vec<Vec<usize>>)> = db
        .tables()
        .filter_map(|(id, _)| sky_dims(db, id).map(|p| (id, skyline_layers(&p, k))))
        .collect();
    if layered.is_empty() {
        return Err(Error::Selection("no table has a comparable column".into()));
    }
    let mut set = ApproximationSet::new(db, k);
    let depth = layered.iter().map(|(_, l)| l.len()).max().unwrap_or(0);
    'outer: for d in 0..depth {
        for (id, layers) in &layered {
            for &row in layers.get(d).into_iter().flatten() {
                if set.remaining() == 0 {
                    break 'outer;
                }
                set.insert(TupleRef::new(*id, db.table(*id).id_at(row)))?;
            }
        }
    }
    Ok(set)
}

fn cosine_distances(space: &ActionSpace) -> Vec<Vec<f64>> {
    let feats: Vec<&[f64]> = space
        .actions()
        .iter()
        .map(|a| a.features.as_slice())
        .collect();
    let norms: Vec<f64> = feats
        .iter()
        .map(|f| f.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    (0..feats.len())
        .map(|i| {
            (0..feats.len())
                .map(|j| {
                    if i == j || norms[i] == 0.0 || norms[j] == 0.0 {
                        return if i == j { 0.0 } else { 1.0 };
                    }
                    let dot: f64 = feats[i].iter().zip(feats[j]).map(|(a, b)| a * b).sum();
                    (1.0 - dot / (norms[i] * norms[j])).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// k-medoids over action features; the cluster count shrinks until the
/// medoids' tuples fit the budget.
pub fn qrd_select(
    space: &ActionSpace,
    db: &Database,
    k: usize,
    seed: u64,
) -> Result<ApproximationSet> {
    let mut set = ApproximationSet::new(db, k);
    let m = space.len();
    if m == 0 || k == 0 {
        return Ok(set);
    }
    let tuples = |acts: &[usize]| -> BTreeSet<TupleRef> {
        acts.iter()
            .flat_map(|&a| space.action(a).refs.iter().copied())
            .collect()
    };
    let all: Vec<usize> = (0..m).collect();
    let whole = tuples(&all);
    if whole.len() <= k {
        insert_all(&mut set, whole)?;
        return Ok(set);
    }
    let dist = cosine_distances(space);
    let mut c = m.min(k);
    loop {
        let medoids = k_medoids(&dist, c, seed)?.medoids;
        let chosen = tuples(&medoids);
        if chosen.len() <= k {
            insert_all(&mut set, chosen)?;
            return Ok(set);
        }
        // shrink proportionally to the overshoot, by at least one
        let scaled = (c as f64 * k as f64 / chosen.len() as f64).floor() as usize;
        c = scaled.min(c - 1);
        if c == 0 {
            return Ok(set);
        }
    }
}
