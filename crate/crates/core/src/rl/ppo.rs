//! Advantages, the PPO loss with its exact gradient, and the update loop.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

use super::nn::{Mlp, Optimizer};
use super::policy::{
    add_entropy_grad, add_kl_grad, add_logp_grad, entropy, kl, log_prob, masked_softmax, Dist,
    Segment,
};

/// One recorded decision of a rollout.
#[derive(Clone, Debug)]
pub struct Transition {
    /// Chosen actions before the step, ascending.
    pub state: Vec<u32>,
    pub segments: Vec<Segment>,
    /// Behaviour-policy distribution of each segment.
    pub old_probs: Vec<Dist>,
    pub reward: f64,
    pub old_logp: f64,
    /// Critic estimates V(s) and V(s') under the behaviour critic (0 without one).
    pub value: f64,
    pub next_value: f64,
    pub done: bool,
}

/// One-step TD errors `r + γ V(s') (1 - done) - V(s)`.
pub fn compute_advantages(tr: &[Transition], gamma: f64) -> Vec<f64> {
    tr.iter()
        .map(|t| t.reward + if t.done { 0.0 } else { gamma * t.next_value } - t.value)
        .collect()
}

/// Discounted reward-to-go of a contiguous trajectory, restarting after
/// every terminal step; the tail after the last terminal is truncated.
pub fn discounted_returns(tr: &[Transition], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; tr.len()];
    let mut g = 0.0;
    for (i, t) in tr.iter().enumerate().rev() {
        if t.done {
            g = 0.0;
        }
        g = t.reward + gamma * g;
        out[i] = g;
    }
    out
}

/// Shifts to zero mean and, when the spread is non-degenerate, unit variance.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    for a in adv.iter_mut() {
        *a -= mean;
        if sd > 1e-12 {
            *a /= sd;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub clip_eps: f64,
    pub kl_coef: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub gamma: f64,
    /// Clipped surrogate; off means `-log π(a|s) Â`.
    pub ppo: bool,
}

/// Minibatch means of the loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub policy: f64,
    pub value: f64,
    pub kl: f64,
    pub entropy: f64,
    pub total: f64,
    /// Share of samples whose clip was binding.
    pub clip_frac: f64,
}

impl LossParts {
    fn is_finite(&self) -> bool {
        [self.policy, self.value, self.kl, self.entropy, self.total]
            .iter()
            .all(|x| x.is_finite())
    }
}

/// Gradient sinks for [`loss_and_grad`].
pub struct Grads<'a> {
    pub policy: &'a mut [f64],
    pub critic: Option<&'a mut [f64]>,
}

/// Mean loss over `batch` and, when `grads` is given, its exact gradient
/// (accumulated). `adv[i]` is the advantage of `batch[i]`.
///
/// loss = policy + kl_coef * KL(old‖new) - entropy_coef * H + value_coef * (y - V)²
/// with `y = r + γ V_old(s') (1 - done)` held fixed.
pub fn loss_and_grad(
    policy: &Mlp,
    critic: Option<&Mlp>,
    batch: &[&Transition],
    adv: &[f64],
    cfg: &LossConfig,
    mut grads: Option<Grads<'_>>,
) -> Result<LossParts> {
    let b = batch.len() as f64;
    let mut parts = LossParts::default();
    let mut dout = vec![0.0; policy.n_out()];
    for (t, &a) in batch.iter().zip(adv) {
        let cache = policy.forward(&t.state);
        let mut dists = Vec::with_capacity(t.segments.len());
        let (mut logp, mut h, mut d_kl) = (0.0, 0.0, 0.0);
        for (seg, old) in t.segments.iter().zip(&t.old_probs) {
            let d = masked_softmax(&cache.out, &seg.mask)?;
            logp += log_prob(&d, seg.choice);
            h += entropy(&d);
            d_kl += kl(old, &d);
            dists.push(d);
        }
        let rho = (logp - t.old_logp).exp();
        let (pl, coef) = if cfg.ppo {
            let clipped = rho.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
            let binding =
                (a >= 0.0 && rho > 1.0 + cfg.clip_eps) || (a < 0.0 && rho < 1.0 - cfg.clip_eps);
            if binding {
                parts.clip_frac += 1.0 / b;
            }
            (
                -(rho * a).min(clipped * a),
                if binding { 0.0 } else { -rho * a / b },
            )
        } else {
            (-logp * a, -a / b)
        };
        parts.policy += pl / b;
        parts.kl += d_kl / b;
        parts.entropy += h / b;

        if let Some(g) = grads.as_mut() {
            dout.iter_mut().for_each(|x| *x = 0.0);
            for ((seg, old), d) in t.segments.iter().zip(&t.old_probs).zip(&dists) {
                add_logp_grad(d, seg.choice, coef, &mut dout);
                if cfg.kl_coef > 0.0 {
                    add_kl_grad(old, d, cfg.kl_coef / b, &mut dout);
                }
                if cfg.entropy_coef > 0.0 {
                    add_entropy_grad(d, -cfg.entropy_coef / b, &mut dout);
                }
            }
            policy.backward(&t.state, &cache, &dout, g.policy);
        }

        if let Some(c) = critic {
            let cc = c.forward(&t.state);
            let v = cc.out[0];
            let y = t.reward
                + if t.done {
                    0.0
                } else {
                    cfg.gamma * t.next_value
                };
            parts.value += (y - v).powi(2) / b;
            if let Some(Grads {
                critic: Some(gc), ..
            }) = grads.as_mut()
            {
                c.backward(&t.state, &cc, &[-2.0 * cfg.value_coef * (y - v) / b], gc);
            }
        }
    }
    parts.total = parts.policy + cfg.kl_coef * parts.kl - cfg.entropy_coef * parts.entropy
        + cfg.value_coef * parts.value;
    Ok(parts)
}

/// Optimizer state for one learner.
pub struct Optimizers {
    pub policy: Optimizer,
    pub critic: Option<Optimizer>,
}

/// `epochs` passes of shuffled minibatch optimizer steps over `tr`. Returns the
/// mean loss terms over all minibatches.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update<R: Rng>(
    policy: &mut Mlp,
    critic: Option<&mut Mlp>,
    opt: &mut Optimizers,
    tr: &[Transition],
    adv: &[f64],
    cfg: &LossConfig,
    epochs: usize,
    minibatch: usize,
    rng: &mut R,
) -> Result<LossParts> {
    if tr.is_empty() {
        return Ok(LossParts::default());
    }
    let mut critic = critic;
    let mut order: Vec<usize> = (0..tr.len()).collect();
    let mut gp = vec![0.0; policy.params.len()];
    let mut gc = critic.as_ref().map(|c| vec![0.0; c.params.len()]);
    let mut sum = LossParts::default();
    let mut steps = 0.0;
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(minibatch.max(1)) {
            let batch: Vec<&Transition> = chunk.iter().map(|&i| &tr[i]).collect();
            let a: Vec<f64> = chunk.iter().map(|&i| adv[i]).collect();
            gp.iter_mut().for_each(|x| *x = 0.0);
            if let Some(g) = gc.as_mut() {
                g.iter_mut().for_each(|x| *x = 0.0);
            }
            let parts = loss_and_grad(
                policy,
                critic.as_deref(),
                &batch,
                &a,
                cfg,
                Some(Grads {
                    policy: &mut gp,
                    critic: gc.as_deref_mut(),
                }),
            )?;
            if !parts.is_finite() || gp.iter().any(|x| !x.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite loss after {steps} minibatches: {parts:?}; batch rewards {:?}; advantages {:?}",
                    batch.iter().map(|t| t.reward).collect::<Vec<_>>(),
                    a
                )));
            }
            opt.policy.step(&mut policy.params, &gp);
            if let (Some(c), Some(o), Some(g)) =
                (critic.as_deref_mut(), opt.critic.as_mut(), gc.as_ref())
            {
                o.step(&mut c.params, g);
            }
            sum.policy += parts.policy;
            sum.value += parts.value;
            sum.kl += parts.kl;
            sum.entropy += parts.entropy;
            sum.total += parts.total;
            sum.clip_frac += parts.clip_frac;
            steps += 1.0;
        }
    }
    if !policy.is_finite() || critic.as_ref().is_some_and(|c| !c.is_finite()) {
        return Err(Error::Training("parameters became non-finite".into()));
    }
    Ok(LossParts {
        policy: sum.policy / steps,
        value: sum.value / steps,
        kl: sum.kl / steps,
        entropy: sum.entropy / steps,
        total: sum.total / steps,
        clip_frac: sum.clip_frac / steps,
    })
}
