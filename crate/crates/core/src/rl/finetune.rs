//! Resuming training on a shifted workload.

use crate::action_space::{ActionSpace, BuildOptions};
use crate::error::{Error, Result};
use crate::query::{relax, SpjQuery};
use crate::relational::Database;
use crate::stats::DatabaseStats;
use crate::workload::{select_representatives, QueryEmbedder, Workload};

use super::nn::Mlp;
use super::train::{rep_count, train_on_space, Trained};
use super::{EnvKind, Model, TrainConfig};

const AKIN_WIDTHS: [f64; 2] = [1.5, 2.0];

/// Variants of each query with predicates widened around their literals,
/// `AKIN_WIDTHS.len()` per query, in query order.
pub fn akin_queries(w: &Workload, stats: &DatabaseStats) -> Result<Vec<SpjQuery>> {
    let mut out = Vec::new();
    for q in w.queries() {
        for f in AKIN_WIDTHS {
            out.push(relax(q, f, stats)?);
        }
    }
    Ok(out)
}

/// Maps every output unit of a head over `new` actions to the unit over
/// `old` actions with the same tuples.
fn head_map(kind: EnvKind, in_map: &[Option<usize>], old_m: usize) -> Vec<Option<usize>> {
    match kind {
        EnvKind::Gsl => in_map.to_vec(),
        _ => {
            let mut v = in_map.to_vec();
            v.extend(in_map.iter().map(|m| m.map(|j| old_m + j)));
            v.push(Some(2 * old_m));
            v.push(Some(2 * old_m + 1));
            v
        }
    }
}

/// Continues training `model` on `new` queries plus widened variants of
/// them, for a quarter of `cfg.max_iters`. The action space is rebuilt
/// when some new representative has no member action in `space`;
/// parameters of actions present in both spaces carry over.
pub fn finetune(
    model: &Model,
    space: &ActionSpace,
    db: &Database,
    new: &Workload,
    cfg: &TrainConfig,
) -> Result<Trained> {
    if new.is_empty() {
        return Err(Error::Argument(
            "fine-tuning needs at least one query".into(),
        ));
    }
    cfg.validate()?;
    if model.fingerprint != space.fingerprint() {
        return Err(Error::Format(
            "model was trained on a different action space".into(),
        ));
    }
    let stats = DatabaseStats::compute(db);
    let akin = akin_queries(new, &stats)?;
    let mut queries = new.queries().to_vec();
    let mut weights: Vec<f64> = new.weights().iter().map(|w| 2.0 * w).collect();
    for (i, q) in akin.into_iter().enumerate() {
        queries.push(q);
        weights.push(new.weights()[i / AKIN_WIDTHS.len()] / AKIN_WIDTHS.len() as f64);
    }
    let (merged, _) = Workload::new(queries, weights)?.retain_nonempty(db, cfg.exec)?;
    let embedder = QueryEmbedder::new(stats.clone(), cfg.dim);
    let emb = cfg.exec.map(merged.queries(), |q| embedder.embed(q));
    let reps = select_representatives(
        &merged,
        &emb,
        rep_count(merged.len(), cfg),
        cfg.seed,
        cfg.exec,
    )?;

    let mut next = space.rebind(db, &reps.workload, cfg.exec)?;
    if (0..next.rep_count()).any(|i| next.members(i).is_empty()) {
        let mut extra_pool = space.reps().queries().to_vec();
        for q in reps.workload.queries() {
            extra_pool.push(relax(q, cfg.widen, &stats)?);
        }
        let opts = BuildOptions {
            cap: cfg.cap,
            seed: cfg.seed,
            dim: cfg.dim,
            extra_pool,
            exec: cfg.exec,
        };
        next = ActionSpace::build(db, &reps.workload, &stats, &opts)?;
    }

    let in_map: Vec<Option<usize>> = next.actions().iter().map(|a| space.find(&a.refs)).collect();
    let m = next.len();
    let old_m = space.len();
    let hidden = [model.policy.dims[1], model.policy.dims[2]];
    let mut policy = Mlp::new(
        [m, hidden[0], hidden[1], cfg.env.head_width(m)],
        cfg.head_scale,
        cfg.seed ^ 0xf1,
    );
    let old_kind = model.config.env;
    if old_kind == cfg.env {
        policy.remap_io(&model.policy, &in_map, &head_map(cfg.env, &in_map, old_m));
    }
    let critic = match (&model.critic, cfg.critic) {
        (Some(old), true) => {
            let mut c = Mlp::new([m, hidden[0], hidden[1], 1], 1.0, cfg.seed ^ 0xf2);
            c.remap_io(old, &in_map, &[Some(0)]);
            Some(c)
        }
        _ => None,
    };
    let cfg = TrainConfig {
        hidden,
        ..cfg.clone()
    };
    let init = Model {
        policy,
        critic,
        config: cfg.clone(),
        fingerprint: next.fingerprint(),
    };
    train_on_space(next, &cfg, Some(init), cfg.max_iters.div_ceil(4))
}
