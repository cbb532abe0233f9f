//! Pre-processing and the synchronous PPO training loop.

use std::collections::VecDeque;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::action_space::{ActionSpace, BuildOptions};
use crate::error::{Error, Result};
use crate::query::relax;
use crate::relational::Database;
use crate::stats::DatabaseStats;
use crate::workload::{
    select_representatives, QueryEmbedder, Representatives, Workload, DEFAULT_REPS,
};

use super::env::SpaceIndex;
use super::nn::{Mlp, OptimKind, Optimizer};
use super::ppo::{
    compute_advantages, discounted_returns, normalize_advantages, ppo_update, LossParts, Optimizers,
};
use super::rollout::{collect, decode, Decode};
use super::{Model, TrainConfig};

/// Output of pre-processing: the filtered workload, its representatives and
/// the action space built from them.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub workload: Workload,
    /// Indices of input queries dropped for having empty results.
    pub dropped: Vec<usize>,
    pub reps: Representatives,
    pub space: ActionSpace,
    pub stats: DatabaseStats,
}

/// Representative count for a workload of `n` queries under `cfg`.
pub(crate) fn rep_count(n: usize, cfg: &TrainConfig) -> usize {
    let base = cfg.n_reps.unwrap_or(DEFAULT_REPS).min(n);
    ((base as f64 * cfg.rep_fraction).ceil() as usize).clamp(1, n)
}

/// Filters empty queries, embeds, picks representatives and builds the
/// action space (with relaxed representatives feeding the action pool).
pub fn prepare(db: &Database, workload: &Workload, cfg: &TrainConfig) -> Result<Prepared> {
    cfg.validate()?;
    let (workload, dropped) = workload.retain_nonempty(db, cfg.exec)?;
    let stats = DatabaseStats::compute(db);
    let embedder = QueryEmbedder::new(stats.clone(), cfg.dim);
    let emb = cfg.exec.map(workload.queries(), |q| embedder.embed(q));
    let reps = select_representatives(
        &workload,
        &emb,
        rep_count(workload.len(), cfg),
        cfg.seed,
        cfg.exec,
    )?;
    let extra_pool = if cfg.widen > 1.0 {
        reps.workload
            .queries()
            .iter()
            .map(|q| relax(q, cfg.widen, &stats))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let opts = BuildOptions {
        cap: cfg.cap,
        seed: cfg.seed,
        dim: cfg.dim,
        extra_pool,
        exec: cfg.exec,
    };
    let space = ActionSpace::build(db, &reps.workload, &stats, &opts)?;
    Ok(Prepared {
        workload,
        dropped,
        reps,
        space,
        stats,
    })
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct IterLog {
    pub iter: usize,
    pub mean_reward: f64,
    pub eval: Option<f64>,
    pub moving_avg: f64,
    pub loss: LossParts,
    pub secs: f64,
}

impl IterLog {
    /// Space-separated `key=value` fields; wall time is omitted when
    /// `with_time` is false so logs of equal runs compare equal.
    pub fn to_line(&self, with_time: bool) -> String {
        let eval = self.eval.map_or("-".to_string(), |e| format!("{e:.6}"));
        let mut s = format!(
            "iter={} reward={:.6} eval={eval} avg={:.6} loss={:.6} policy={:.6} value={:.6} kl={:.6} entropy={:.6} clip={:.4}",
            self.iter,
            self.mean_reward,
            self.moving_avg,
            self.loss.total,
            self.loss.policy,
            self.loss.value,
            self.loss.kl,
            self.loss.entropy,
            self.loss.clip_frac
        );
        if with_time {
            s.push_str(&format!(" secs={:.3}", self.secs));
        }
        s
    }
}

/// A trained model with its action space and log.
#[derive(Clone, Debug)]
pub struct Trained {
    pub model: Model,
    pub space: ActionSpace,
    pub log: Vec<IterLog>,
    /// Best greedy evaluation score (proxy, all representatives).
    pub best_eval: f64,
    pub stopped_early: bool,
    pub secs: f64,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z =
        seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs pre-processing and training end to end.
pub fn train(db: &Database, workload: &Workload, cfg: &TrainConfig) -> Result<Trained> {
    let p = prepare(db, workload, cfg)?;
    train_on_space(p.space, cfg, None, cfg.max_iters)
}

/// Trains on a ready action space, optionally starting from `init`, for at
/// most `max_iters` iterations. Returns the best-evaluating parameters.
pub fn train_on_space(
    space: ActionSpace,
    cfg: &TrainConfig,
    init: Option<Model>,
    max_iters: usize,
) -> Result<Trained> {
    cfg.validate()?;
    let start = Instant::now();
    let index = SpaceIndex::new(&space);
    let m = index.len();
    let dims = |out| [m, cfg.hidden[0], cfg.hidden[1], out];
    let (mut policy, init_critic) = match init {
        Some(model) => {
            if model.policy.dims != dims(cfg.env.head_width(m)) {
                return Err(Error::Training(format!(
                    "initial policy shape {:?} does not fit this space",
                    model.policy.dims
                )));
            }
            (model.policy, model.critic)
        }
        None => (
            Mlp::new(
                dims(cfg.env.head_width(m)),
                cfg.head_scale,
                mix(cfg.seed, 1, 0),
            ),
            None,
        ),
    };
    let mut critic = cfg
        .critic
        .then(|| init_critic.unwrap_or_else(|| Mlp::new(dims(1), 1.0, mix(cfg.seed, 2, 0))));
    let mut opt = Optimizers {
        policy: Optimizer::new(cfg.optimizer, policy.params.len(), cfg.lr, cfg.grad_clip),
        critic: critic.as_ref().map(|c| {
            Optimizer::new(
                OptimKind::Adam,
                c.params.len(),
                cfg.critic_lr,
                cfg.grad_clip,
            )
        }),
    };
    let lcfg = cfg.loss_config();
    let mut learner_rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 3, 0));

    let mut best = (f64::NEG_INFINITY, policy.clone(), critic.clone());
    let mut window: VecDeque<f64> = VecDeque::new();
    let mut best_avg = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut stopped_early = false;
    let mut log = Vec::new();

    for it in 0..max_iters {
        let rolls = cfg.exec.map_range(cfg.workers, |w| {
            collect(
                &index,
                cfg,
                &policy,
                critic.as_ref(),
                mix(cfg.seed, 100 + it as u64, w as u64),
            )
        });
        let mut transitions = Vec::new();
        let mut adv = Vec::new();
        let mut reward_sum = 0.0;
        for r in rolls {
            let r = r?;
            reward_sum += r.reward_sum;
            if cfg.critic {
                adv.extend(compute_advantages(&r.transitions, cfg.gamma));
            } else {
                adv.extend(discounted_returns(&r.transitions, cfg.gamma));
            }
            transitions.extend(r.transitions);
        }
        normalize_advantages(&mut adv);
        let loss = ppo_update(
            &mut policy,
            critic.as_mut(),
            &mut opt,
            &transitions,
            &adv,
            &lcfg,
            cfg.epochs,
            cfg.minibatch,
            &mut learner_rng,
        )?;

        let last = it + 1 == max_iters;
        let eval = if it % cfg.eval_every == 0 || last {
            let e = decode(&policy, &index, cfg, cfg.k, Decode::Greedy)?.proxy;
            if e > best.0 {
                best = (e, policy.clone(), critic.clone());
            }
            window.push_back(e);
            if window.len() > cfg.eval_window {
                window.pop_front();
            }
            Some(e)
        } else {
            None
        };
        let avg = if window.is_empty() {
            0.0
        } else {
            window.iter().sum::<f64>() / window.len() as f64
        };
        if eval.is_some() {
            if avg >= best_avg + cfg.min_improvement {
                best_avg = avg;
                stale = 0;
            } else {
                stale += 1;
            }
        }
        log.push(IterLog {
            iter: it,
            mean_reward: reward_sum / transitions.len().max(1) as f64,
            eval,
            moving_avg: avg,
            loss,
            secs: start.elapsed().as_secs_f64(),
        });
        if stale >= cfg.patience {
            stopped_early = true;
            break;
        }
        if cfg.time_limit.is_some_and(|t| start.elapsed() >= t) {
            stopped_early = true;
            break;
        }
    }
    let fingerprint = space.fingerprint();
    Ok(Trained {
        model: Model {
            policy: best.1,
            critic: best.2,
            config: cfg.clone(),
            fingerprint,
        },
        space,
        log,
        best_eval: best.0.max(0.0),
        stopped_early,
        secs: start.elapsed().as_secs_f64(),
    })
}
