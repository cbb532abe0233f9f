//! Masked actor-critic PPO over the action space: environments, networks,
//! the training loop, decoding, fine-tuning and checkpoints.

mod checkpoint;
mod env;
mod finetune;
pub mod nn;
pub mod policy;
mod ppo;
mod rollout;
mod train;

use std::time::Duration;

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::scoring::DEFAULT_FRAME;
use crate::workload::DEFAULT_DIM;

use nn::OptimKind;

pub use checkpoint::Model;
pub use env::{Env, EnvKind, Phase, QueryBatch, Selection, SpaceIndex, Step};
pub use finetune::{akin_queries, finetune};
pub use ppo::{
    compute_advantages, discounted_returns, loss_and_grad, normalize_advantages, ppo_update, Grads,
    LossConfig, LossParts, Optimizers, Transition,
};
pub use rollout::{decode, infer_set, Decode, Inference};
pub use train::{prepare, train, train_on_space, IterLog, Prepared, Trained};

pub const DEFAULT_BUDGET: usize = 1000;

/// Early-stopping patience of the light preset.
pub const LIGHT_PATIENCE: usize = 15;

/// Named hyperparameter bundles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Default,
    /// A quarter of the representatives, plain gradient descent at a much
    /// higher learning rate and earlier stopping.
    Light,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Preset> {
        match s {
            "default" => Ok(Preset::Default),
            "light" => Ok(Preset::Light),
            _ => Err(Error::Config(format!("unknown preset {s:?}"))),
        }
    }

    /// Applies the preset's overrides to `cfg`.
    pub fn apply(self, cfg: &mut TrainConfig) {
        if self == Preset::Light {
            cfg.rep_fraction = 0.25;
            cfg.lr = 0.1;
            cfg.optimizer = OptimKind::Sgd;
            cfg.patience = LIGHT_PATIENCE;
        }
    }

    /// Light when the time budget is at most half the estimated default
    /// training time, otherwise default.
    pub fn for_budget(budget: Duration, default_estimate: Duration) -> Preset {
        if budget.as_secs_f64() <= 0.5 * default_estimate.as_secs_f64() {
            Preset::Light
        } else {
            Preset::Default
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Actor optimizer; the critic always uses Adam.
    pub optimizer: OptimKind,
    pub lr: f64,
    /// Critic learning rate, independent of the actor's.
    pub critic_lr: f64,
    pub entropy_coef: f64,
    pub kl_coef: f64,
    pub clip_eps: f64,
    pub value_coef: f64,
    pub gamma: f64,
    pub workers: usize,
    /// Steps each worker collects per iteration (T).
    pub rollout_len: usize,
    /// Optimization epochs per iteration (K).
    pub epochs: usize,
    /// Minibatch size (M), at most `workers * rollout_len`.
    pub minibatch: usize,
    pub k: usize,
    pub frame: usize,
    pub hidden: [usize; 2],
    pub max_iters: usize,
    pub patience: usize,
    pub eval_window: usize,
    pub min_improvement: f64,
    pub eval_every: usize,
    /// Representatives scored per episode.
    pub batch_queries: usize,
    /// Representative count before `rep_fraction`; `None` means
    /// `min(|Q|, DEFAULT_REPS)`.
    pub n_reps: Option<usize>,
    pub rep_fraction: f64,
    /// Relaxation factor for the extra action pool; 1 disables it.
    pub widen: f64,
    pub cap: usize,
    pub dim: usize,
    pub env: EnvKind,
    /// Swap steps per DRP episode.
    pub horizon: usize,
    /// Clipped surrogate with KL; off means plain policy gradient.
    pub ppo: bool,
    /// TD advantages from a critic; off means discounted returns.
    pub critic: bool,
    pub diversity: f64,
    pub grad_clip: f64,
    pub head_scale: f64,
    pub time_limit: Option<Duration>,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimKind::Adam,
            lr: 5e-5,
            critic_lr: 1e-3,
            entropy_coef: 0.001,
            kl_coef: 0.2,
            clip_eps: 0.2,
            value_coef: 0.5,
            gamma: 0.99,
            workers: 4,
            rollout_len: 64,
            epochs: 4,
            minibatch: 64,
            k: DEFAULT_BUDGET,
            frame: DEFAULT_FRAME,
            hidden: [256, 128],
            max_iters: 500,
            patience: 40,
            eval_window: 20,
            min_improvement: 1e-3,
            eval_every: 1,
            batch_queries: 16,
            n_reps: None,
            rep_fraction: 1.0,
            widen: 1.5,
            cap: crate::action_space::DEFAULT_CAP,
            dim: DEFAULT_DIM,
            env: EnvKind::Gsl,
            horizon: 100,
            ppo: true,
            critic: true,
            diversity: 0.0,
            grad_clip: 0.5,
            head_scale: 0.01,
            time_limit: None,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

impl TrainConfig {
    pub fn preset(p: Preset) -> TrainConfig {
        let mut c = TrainConfig::default();
        p.apply(&mut c);
        c
    }

    pub fn light() -> TrainConfig {
        TrainConfig::preset(Preset::Light)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("lr", self.lr),
            ("critic_lr", self.critic_lr),
            ("gamma", self.gamma),
            ("clip_eps", self.clip_eps),
            ("rep_fraction", self.rep_fraction),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("entropy_coef", self.entropy_coef),
            ("kl_coef", self.kl_coef),
            ("value_coef", self.value_coef),
            ("diversity", self.diversity),
            ("grad_clip", self.grad_clip),
            ("min_improvement", self.min_improvement),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.gamma > 1.0 || self.rep_fraction > 1.0 {
            return bad("gamma and rep_fraction must be at most 1".into());
        }
        for (name, v) in [
            ("workers", self.workers),
            ("rollout_len", self.rollout_len),
            ("epochs", self.epochs),
            ("minibatch", self.minibatch),
            ("k", self.k),
            ("frame", self.frame),
            ("hidden1", self.hidden[0]),
            ("hidden2", self.hidden[1]),
            ("max_iters", self.max_iters),
            ("patience", self.patience),
            ("eval_window", self.eval_window),
            ("eval_every", self.eval_every),
            ("batch_queries", self.batch_queries),
            ("cap", self.cap),
            ("dim", self.dim),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.minibatch > self.workers * self.rollout_len {
            return bad(format!(
                "minibatch {} exceeds workers * rollout_len = {}",
                self.minibatch,
                self.workers * self.rollout_len
            ));
        }
        if self.widen < 1.0 {
            return bad(format!("widen must be at least 1, got {}", self.widen));
        }
        Ok(())
    }

    /// Sets one field from its `key=value` text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v.trim() {
                "true" | "on" | "1" | "yes" => Ok(true),
                "false" | "off" | "0" | "no" => Ok(false),
                _ => Err(Error::Config(format!("invalid value {v:?} for {key}"))),
            }
        }
        match key {
            "optimizer" => {
                self.optimizer = OptimKind::parse(value.trim()).ok_or_else(|| {
                    Error::Config(format!("invalid value {value:?} for optimizer"))
                })?
            }
            "lr" => self.lr = num(key, value)?,
            "critic_lr" => self.critic_lr = num(key, value)?,
            "entropy_coef" => self.entropy_coef = num(key, value)?,
            "kl_coef" => self.kl_coef = num(key, value)?,
            "clip_eps" => self.clip_eps = num(key, value)?,
            "value_coef" => self.value_coef = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "workers" => self.workers = num(key, value)?,
            "rollout_len" => self.rollout_len = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "minibatch" => self.minibatch = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "frame" => self.frame = num(key, value)?,
            "hidden1" => self.hidden[0] = num(key, value)?,
            "hidden2" => self.hidden[1] = num(key, value)?,
            "max_iters" => self.max_iters = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "eval_window" => self.eval_window = num(key, value)?,
            "min_improvement" => self.min_improvement = num(key, value)?,
            "eval_every" => self.eval_every = num(key, value)?,
            "batch_queries" => self.batch_queries = num(key, value)?,
            "n_reps" => {
                self.n_reps = match value.trim() {
                    "auto" | "" => None,
                    v => Some(num(key, v)?),
                }
            }
            "rep_fraction" => self.rep_fraction = num(key, value)?,
            "widen" => self.widen = num(key, value)?,
            "cap" => self.cap = num(key, value)?,
            "dim" => self.dim = num(key, value)?,
            "env" => self.env = EnvKind::parse(value.trim())?,
            "horizon" => self.horizon = num(key, value)?,
            "ppo" => self.ppo = flag(key, value)?,
            "critic" => self.critic = flag(key, value)?,
            "diversity" => self.diversity = num(key, value)?,
            "grad_clip" => self.grad_clip = num(key, value)?,
            "head_scale" => self.head_scale = num(key, value)?,
            "time_limit" => {
                self.time_limit = match value.trim() {
                    "none" | "" => None,
                    v => Some(Duration::from_secs_f64(num(key, v)?)),
                }
            }
            "seed" => self.seed = num(key, value)?,
            "exec" => {
                self.exec = match value.trim() {
                    "parallel" => Exec::Parallel,
                    "sequential" => Exec::Sequential,
                    v => return Err(Error::Config(format!("invalid value {v:?} for exec"))),
                }
            }
            "preset" => Preset::parse(value.trim())?.apply(self),
            _ => return Err(Error::Config(format!("unknown training key {key:?}"))),
        }
        Ok(())
    }

    /// Every field as `key=value` pairs accepted by [`TrainConfig::set`].
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut v: Vec<(&str, String)> = vec![
            ("optimizer", self.optimizer.name().to_string()),
            ("lr", self.lr.to_string()),
            ("critic_lr", self.critic_lr.to_string()),
            ("entropy_coef", self.entropy_coef.to_string()),
            ("kl_coef", self.kl_coef.to_string()),
            ("clip_eps", self.clip_eps.to_string()),
            ("value_coef", self.value_coef.to_string()),
            ("gamma", self.gamma.to_string()),
            ("workers", self.workers.to_string()),
            ("rollout_len", self.rollout_len.to_string()),
            ("epochs", self.epochs.to_string()),
            ("minibatch", self.minibatch.to_string()),
            ("k", self.k.to_string()),
            ("frame", self.frame.to_string()),
            ("hidden1", self.hidden[0].to_string()),
            ("hidden2", self.hidden[1].to_string()),
            ("max_iters", self.max_iters.to_string()),
            ("patience", self.patience.to_string()),
            ("eval_window", self.eval_window.to_string()),
            ("min_improvement", self.min_improvement.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("batch_queries", self.batch_queries.to_string()),
            (
                "n_reps",
                self.n_reps.map_or("auto".into(), |n| n.to_string()),
            ),
            ("rep_fraction", self.rep_fraction.to_string()),
            ("widen", self.widen.to_string()),
            ("cap", self.cap.to_string()),
            ("dim", self.dim.to_string()),
            ("env", self.env.name().to_string()),
            ("horizon", self.horizon.to_string()),
            ("ppo", self.ppo.to_string()),
            ("critic", self.critic.to_string()),
            ("diversity", self.diversity.to_string()),
            ("grad_clip", self.grad_clip.to_string()),
            ("head_scale", self.head_scale.to_string()),
            (
                "time_limit",
                self.time_limit
                    .map_or("none".into(), |d| d.as_secs_f64().to_string()),
            ),
            ("seed", self.seed.to_string()),
        ];
        v.push((
            "exec",
            if self.exec == Exec::Parallel {
                "parallel"
            } else {
                "sequential"
            }
            .into(),
        ));
        v.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub(crate) fn loss_config(&self) -> LossConfig {
        LossConfig {
            clip_eps: self.clip_eps,
            kl_coef: if self.ppo { self.kl_coef } else { 0.0 },
            entropy_coef: self.entropy_coef,
            value_coef: self.value_coef,
            gamma: self.gamma,
            ppo: self.ppo,
        }
    }

    /// Label of the ablation cell this config belongs to.
    pub fn ablation_label(&self) -> String {
        let variant = match (self.ppo, self.critic) {
            (true, true) => "full",
            (false, true) => "-ppo",
            (true, false) => "-ac",
            (false, false) => "-ppo-ac",
        };
        format!("{}/{variant}", self.env.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_roundtrip() {
        let mut c = TrainConfig::light();
        c.env = EnvKind::DrpGsl;
        c.time_limit = Some(Duration::from_millis(1500));
        c.n_reps = Some(7);
        let mut d = TrainConfig::default();
        for (k, v) in c.to_pairs() {
            d.set(&k, &v).unwrap();
        }
        assert_eq!(c, d);
        assert!(d.set("nope", "1").is_err());
        assert!(d.set("lr", "x").is_err());
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let c = TrainConfig {
            minibatch: 1000,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            lr: 0.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        assert_eq!(TrainConfig::light().lr, 0.1);
        assert_eq!(TrainConfig::light().rep_fraction, 0.25);
        assert_eq!(
            Preset::for_budget(Duration::from_secs(10), Duration::from_secs(30)),
            Preset::Light
        );
        assert_eq!(
            Preset::for_budget(Duration::from_secs(20), Duration::from_secs(30)),
            Preset::Default
        );
    }
}
