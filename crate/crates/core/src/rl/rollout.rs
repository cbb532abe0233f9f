//! Acting with a policy: sampled rollouts for training and greedy decoding
//! of a finished set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::action_space::ActionSpace;
use crate::error::{Error, Result};
use crate::relational::{ApproximationSet, Database, InsertOutcome, TupleRef};

use super::env::{Env, Phase, SpaceIndex};
use super::nn::Mlp;
use super::policy::{argmax, log_prob, masked_softmax, sample, Dist, Segment};
use super::ppo::Transition;
use super::{Model, TrainConfig};

enum Move {
    Grow(usize),
    Swap(Option<usize>, Option<usize>),
}

struct Decision {
    segments: Vec<Segment>,
    dists: Vec<Dist>,
    logp: f64,
    mv: Move,
}

fn pick<R: Rng>(dist: &Dist, rng: &mut Option<&mut R>) -> usize {
    match rng {
        Some(r) => sample(dist, *r),
        None => argmax(dist),
    }
}

/// Chooses the next move: sampled when `rng` is given, otherwise greedy.
/// Swap moves take the removal and then the addition from one forward pass.
fn decide<R: Rng>(
    env: &mut Env<'_>,
    net: &Mlp,
    state: &[u32],
    mut rng: Option<&mut R>,
) -> Result<Decision> {
    let logits = net.forward(state).out;
    match env.phase() {
        Phase::Grow => {
            let mask = env.grow_mask();
            let d = masked_softmax(&logits, &mask)?;
            let a = pick(&d, &mut rng);
            Ok(Decision {
                logp: log_prob(&d, a),
                segments: vec![Segment { mask, choice: a }],
                dists: vec![d],
                mv: Move::Grow(a),
            })
        }
        Phase::Swap => {
            let n = (logits.len() - 2) / 2;
            let rmask = env.remove_mask();
            let dr = masked_softmax(&logits, &rmask)?;
            let r = pick(&dr, &mut rng);
            let removed = (r != 2 * n).then(|| r - n);
            let amask = env.add_mask(removed);
            let da = masked_softmax(&logits, &amask)?;
            let a = pick(&da, &mut rng);
            let added = (a != 2 * n + 1).then_some(a);
            Ok(Decision {
                logp: log_prob(&dr, r) + log_prob(&da, a),
                segments: vec![
                    Segment {
                        mask: rmask,
                        choice: r,
                    },
                    Segment {
                        mask: amask,
                        choice: a,
                    },
                ],
                dists: vec![dr, da],
                mv: Move::Swap(removed, added),
            })
        }
    }
}

fn apply(env: &mut Env<'_>, mv: &Move) -> Result<super::env::Step> {
    match *mv {
        Move::Grow(a) => env.step_grow(a),
        Move::Swap(r, a) => env.step_swap(r, a),
    }
}

pub(crate) fn new_env<'a>(index: &'a SpaceIndex, cfg: &TrainConfig, k: usize) -> Env<'a> {
    Env::new(cfg.env, index, cfg.frame, k, cfg.horizon).with_diversity(cfg.diversity)
}

/// Rollout statistics of one worker.
pub(crate) struct Rollout {
    pub transitions: Vec<Transition>,
    pub reward_sum: f64,
}

/// Collects `cfg.rollout_len` sampled steps, resetting on episode end.
pub(crate) fn collect(
    index: &SpaceIndex,
    cfg: &TrainConfig,
    policy: &Mlp,
    critic: Option<&Mlp>,
    seed: u64,
) -> Result<Rollout> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = new_env(index, cfg, cfg.k);
    let value = |s: &[u32]| critic.map_or(0.0, |c| c.forward(s).out[0]);
    let reset = |env: &mut Env<'_>, rng: &mut ChaCha8Rng| -> Result<()> {
        let batch = index.sample_batch(cfg.batch_queries, rng);
        env.reset(batch, rng);
        if env.is_done() {
            return Err(Error::Training(
                "no action fits the budget; nothing to learn".into(),
            ));
        }
        Ok(())
    };
    reset(&mut env, &mut rng)?;
    let mut state = env.selection().state();
    let mut v = value(&state);
    let mut out = Vec::with_capacity(cfg.rollout_len);
    let mut reward_sum = 0.0;
    for _ in 0..cfg.rollout_len {
        let d = decide(&mut env, policy, &state, Some(&mut rng))?;
        let step = apply(&mut env, &d.mv)?;
        let next = env.selection().state();
        let next_v = if step.done { 0.0 } else { value(&next) };
        reward_sum += step.reward;
        out.push(Transition {
            state: std::mem::replace(&mut state, next),
            segments: d.segments,
            old_probs: d.dists,
            reward: step.reward,
            old_logp: d.logp,
            value: v,
            next_value: next_v,
            done: step.done,
        });
        v = next_v;
        if step.done {
            reset(&mut env, &mut rng)?;
            state = env.selection().state();
            v = value(&state);
        }
    }
    Ok(Rollout {
        transitions: out,
        reward_sum,
    })
}

/// How actions are picked when decoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decode {
    Greedy,
    Sample(u64),
}

/// A decoded set in action and tuple form.
#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    /// Actions in the order they were taken (final state for swap runs).
    pub actions: Vec<u32>,
    pub tuples: Vec<TupleRef>,
    /// Proxy score over all representatives.
    pub proxy: f64,
    /// Proxy score after each grow step.
    pub prefix_scores: Vec<f64>,
    /// The budget could not be filled.
    pub exhausted: bool,
}

/// Decodes a set of at most `k` tuples. Grow phases run until nothing fits;
/// swap phases run `cfg.horizon` steps and keep the best state seen.
pub fn decode(
    net: &Mlp,
    index: &SpaceIndex,
    cfg: &TrainConfig,
    k: usize,
    mode: Decode,
) -> Result<Inference> {
    if net.n_in() != index.len() || net.n_out() != cfg.env.head_width(index.len()) {
        return Err(Error::Format(format!(
            "policy shape {:?} does not fit {} actions under {}",
            net.dims,
            index.len(),
            cfg.env.name()
        )));
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x00de_c0de);
    let mut rng = match mode {
        Decode::Greedy => None,
        Decode::Sample(s) => Some(ChaCha8Rng::seed_from_u64(s)),
    };
    let mut env = new_env(index, cfg, k);
    env.reset(index.full_batch(), &mut init_rng);
    let mut prefix = Vec::new();
    let mut best: Option<(f64, Vec<u32>)> = None;
    while !env.is_done() {
        if env.phase() == Phase::Swap {
            let s = env.selection().score();
            if best.as_ref().is_none_or(|b| s > b.0) {
                best = Some((s, env.selection().chosen().to_vec()));
            }
        }
        let state = env.selection().state();
        let d = decide(&mut env, net, &state, rng.as_mut())?;
        let grow = matches!(d.mv, Move::Grow(_));
        apply(&mut env, &d.mv)?;
        if grow {
            prefix.push(env.selection().score());
        }
    }
    let sel = env.selection();
    let (proxy, actions) = match best {
        Some((s, a)) if s > sel.score() => (s, a),
        _ => (sel.score(), sel.chosen().to_vec()),
    };
    let mut tuples: Vec<TupleRef> = actions
        .iter()
        .flat_map(|&a| index.refs[a as usize].iter().copied())
        .collect();
    tuples.sort_unstable();
    tuples.dedup();
    let exhausted = tuples.len() < k;
    Ok(Inference {
        actions,
        tuples,
        proxy,
        prefix_scores: prefix,
        exhausted,
    })
}

/// Decodes `model` over `space` into an approximation set of at most `k`
/// tuples of `db`.
pub fn infer_set(
    model: &Model,
    space: &ActionSpace,
    db: &Database,
    k: usize,
    mode: Decode,
) -> Result<(ApproximationSet, Inference)> {
    if model.fingerprint != space.fingerprint() {
        return Err(Error::Format(
            "model was trained on a different action space".into(),
        ));
    }
    let index = SpaceIndex::new(space);
    let inf = decode(&model.policy, &index, &model.config, k, mode)?;
    let mut set = ApproximationSet::new(db, k);
    for &t in &inf.tuples {
        if set.insert(t)? == InsertOutcome::BudgetExhausted {
            return Err(Error::Contract("decoded set exceeds the budget".into()));
        }
    }
    Ok((set, inf))
}
