use asqp::rl::nn::Mlp;
use asqp::rl::policy::{
    entropy, forward_actor, kl, log_prob, masked_softmax, Bitset, Dist, Segment,
};
use asqp::rl::{
    compute_advantages, discounted_returns, infer_set, loss_and_grad, prepare, train,
    train_on_space, Decode, Env, EnvKind, Grads, LossConfig, Model, SpaceIndex, TrainConfig,
    Transition,
};
use asqp::scoring::{IndexedScorer, TupleMask};
use asqp::synth::{toy_config, toy_instance};
use asqp::Exec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const M: usize = 6;

fn loss_cfg(ppo: bool) -> LossConfig {
    LossConfig {
        clip_eps: 0.2,
        kl_coef: if ppo { 0.2 } else { 0.0 },
        entropy_coef: 0.05,
        value_coef: 0.5,
        gamma: 0.9,
        ppo,
    }
}

fn random_mask(rng: &mut ChaCha8Rng, width: usize, range: std::ops::Range<usize>) -> Bitset {
    let mut b = Bitset::new(width);
    for i in range.clone() {
        if rng.random_bool(0.6) {
            b.set(i);
        }
    }
    if b.count() == 0 {
        b.set(range.start);
    }
    b
}

/// Transitions recorded under `old`, with one segment (GSL head) or two
/// (swap head) per decision.
fn transitions(old: &Mlp, swap: bool, n: usize, seed: u64) -> Vec<Transition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = old.n_out();
    (0..n)
        .map(|_| {
            let state: Vec<u32> = (0..M as u32).filter(|_| rng.random_bool(0.4)).collect();
            let masks = if swap {
                vec![
                    random_mask(&mut rng, width, M..2 * M + 1),
                    random_mask(&mut rng, width, 0..M),
                ]
            } else {
                vec![random_mask(&mut rng, width, 0..M)]
            };
            let logits = old.forward(&state).out;
            let mut segments = Vec::new();
            let mut old_probs = Vec::new();
            let mut old_logp = 0.0;
            for mask in masks {
                let d = masked_softmax(&logits, &mask).unwrap();
                let choice = d.idx[rng.random_range(0..d.len())];
                old_logp += log_prob(&d, choice);
                segments.push(Segment { mask, choice });
                old_probs.push(d);
            }
            let done = rng.random_bool(0.3);
            Transition {
                state,
                segments,
                old_probs,
                reward: rng.random_range(-1.0..1.0),
                old_logp,
                value: rng.random_range(-1.0..1.0),
                next_value: rng.random_range(-1.0..1.0),
                done,
            }
        })
        .collect()
}

fn perturbed(net: &Mlp, scale: f64, seed: u64) -> Mlp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = net.clone();
    out.params
        .iter_mut()
        .for_each(|p| *p += rng.random_range(-scale..scale));
    out
}

fn check_gradients(swap: bool, ppo: bool) {
    let width = if swap { 2 * M + 2 } else { M };
    let old = Mlp::new([M, 4, 4, width], 1.0, 7);
    let policy = perturbed(&old, 0.05, 8);
    let critic = Mlp::new([M, 4, 4, 1], 1.0, 9);
    let tr = transitions(&old, swap, 12, 10);
    let batch: Vec<&Transition> = tr.iter().collect();
    let adv: Vec<f64> = (0..tr.len()).map(|i| (i as f64 * 0.37).sin()).collect();
    let cfg = loss_cfg(ppo);

    let mut gp = vec![0.0; policy.params.len()];
    let mut gc = vec![0.0; critic.params.len()];
    loss_and_grad(
        &policy,
        Some(&critic),
        &batch,
        &adv,
        &cfg,
        Some(Grads {
            policy: &mut gp,
            critic: Some(&mut gc),
        }),
    )
    .unwrap();

    let total = |p: &Mlp, c: &Mlp| {
        loss_and_grad(p, Some(c), &batch, &adv, &cfg, None)
            .unwrap()
            .total
    };
    let h = 1e-6;
    for i in 0..policy.params.len() {
        let (mut a, mut b) = (policy.clone(), policy.clone());
        a.params[i] += h;
        b.params[i] -= h;
        let fd = (total(&a, &critic) - total(&b, &critic)) / (2.0 * h);
        assert!(
            (fd - gp[i]).abs() <= 1e-4,
            "policy param {i}: fd {fd} vs {}",
            gp[i]
        );
    }
    for i in 0..critic.params.len() {
        let (mut a, mut b) = (critic.clone(), critic.clone());
        a.params[i] += h;
        b.params[i] -= h;
        let fd = (total(&policy, &a) - total(&policy, &b)) / (2.0 * h);
        assert!(
            (fd - gc[i]).abs() <= 1e-4,
            "critic param {i}: fd {fd} vs {}",
            gc[i]
        );
    }
}

#[test]
fn finite_differences_single_segment() {
    check_gradients(false, true);
    check_gradients(false, false);
}

#[test]
fn finite_differences_two_segments() {
    check_gradients(true, true);
    check_gradients(true, false);
}

#[test]
fn binding_clip_has_zero_policy_gradient() {
    let net = Mlp::new([M, 4, 4, M], 1.0, 3);
    let mut tr = transitions(&net, false, 2, 4);
    let cfg = LossConfig {
        kl_coef: 0.0,
        entropy_coef: 0.0,
        ..loss_cfg(true)
    };
    // ratio 1.5 with a positive advantage, ratio 0.5 with a negative one
    tr[0].old_logp -= 1.5f64.ln();
    tr[1].old_logp -= 0.5f64.ln();
    let batch: Vec<&Transition> = tr.iter().collect();
    let mut g = vec![0.0; net.params.len()];
    let parts = loss_and_grad(
        &net,
        None,
        &batch,
        &[1.0, -1.0],
        &cfg,
        Some(Grads {
            policy: &mut g,
            critic: None,
        }),
    )
    .unwrap();
    assert_eq!(parts.clip_frac, 1.0);
    assert!(g.iter().all(|&x| x == 0.0));
    // the same samples off the clip do move the policy
    let mut g = vec![0.0; net.params.len()];
    loss_and_grad(
        &net,
        None,
        &batch,
        &[-1.0, 1.0],
        &cfg,
        Some(Grads {
            policy: &mut g,
            critic: None,
        }),
    )
    .unwrap();
    assert!(g.iter().any(|&x| x != 0.0));
}

#[test]
fn kl_vanishes_at_identical_parameters() {
    let net = Mlp::new([M, 4, 4, 2 * M + 2], 1.0, 5);
    let tr = transitions(&net, true, 20, 6);
    let batch: Vec<&Transition> = tr.iter().collect();
    let adv = vec![0.5; tr.len()];
    let same = loss_and_grad(&net, None, &batch, &adv, &loss_cfg(true), None).unwrap();
    assert!(same.kl.abs() < 1e-15, "{}", same.kl);
    for s in 0..10 {
        let moved = loss_and_grad(
            &perturbed(&net, 0.3, s),
            None,
            &batch,
            &adv,
            &loss_cfg(true),
            None,
        )
        .unwrap();
        assert!(moved.kl > 0.0);
    }
}

fn toy_index() -> (asqp::synth::Instance, asqp::action_space::ActionSpace) {
    let inst = toy_instance(0).unwrap();
    let cfg = TrainConfig {
        exec: Exec::Sequential,
        ..toy_config(0)
    };
    let p = prepare(&inst.db, &inst.workload, &cfg).unwrap();
    (inst, p.space)
}

#[test]
fn masked_actions_get_exactly_zero_probability() {
    let (_, space) = toy_index();
    let index = SpaceIndex::new(&space);
    let m = index.len();
    let net = Mlp::new([m, 32, 16, m], 3.0, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut env = Env::new(EnvKind::Gsl, &index, 50, 20, 10);
    let mut states = 0;
    while states < 10_000 {
        env.reset(index.sample_batch(8, &mut rng), &mut rng);
        while !env.is_done() && states < 10_000 {
            let mask = env.grow_mask();
            let p = forward_actor(&net, &env.selection().state(), &mask).unwrap();
            for (i, &pi) in p.iter().enumerate() {
                if !mask.get(i) {
                    assert_eq!(pi, 0.0);
                }
            }
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let on: Vec<usize> = mask.ones().collect();
            env.step_grow(on[rng.random_range(0..on.len())]).unwrap();
            states += 1;
        }
    }
}

#[test]
fn grow_rewards_are_monotone_and_budget_holds() {
    let (inst, space) = toy_index();
    let index = SpaceIndex::new(&space);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for k in [5, 20] {
        let mut env = Env::new(EnvKind::Gsl, &index, 50, k, 10);
        for _ in 0..500 {
            env.reset(index.sample_batch(10, &mut rng), &mut rng);
            let mut last = 0.0;
            while !env.is_done() {
                let on: Vec<usize> = env.grow_mask().ones().collect();
                let step = env.step_grow(on[rng.random_range(0..on.len())]).unwrap();
                assert!(step.reward >= last - 1e-12, "{} after {last}", step.reward);
                last = step.reward;
                let tuples = env.selection().tuples();
                assert!(tuples.len() <= k);
                assert_eq!(tuples.len(), env.selection().used());
                assert!(tuples.iter().all(|t| inst.db.resolve(*t).is_some()));
            }
        }
    }
}

#[test]
fn advantages_match_direct_recomputation() {
    let net = Mlp::new([M, 4, 4, M], 1.0, 1);
    for seed in 0..20 {
        let tr = transitions(&net, false, 40, seed);
        let gamma = 0.95;
        let adv = compute_advantages(&tr, gamma);
        for (t, a) in tr.iter().zip(&adv) {
            let next = if t.done { 0.0 } else { t.next_value };
            assert!((a - (t.reward + gamma * next - t.value)).abs() < 1e-12);
        }
        let ret = discounted_returns(&tr, gamma);
        for i in 0..tr.len() {
            let mut g = 0.0;
            let mut disc = 1.0;
            for t in &tr[i..] {
                g += disc * t.reward;
                disc *= gamma;
                if t.done {
                    break;
                }
            }
            assert!((ret[i] - g).abs() < 1e-9, "{i}: {} vs {g}", ret[i]);
        }
    }
}

fn short_config(exec: Exec, workers: usize) -> TrainConfig {
    TrainConfig {
        max_iters: 4,
        workers,
        rollout_len: 16,
        minibatch: 16,
        hidden: [32, 16],
        exec,
        ..toy_config(3)
    }
}

#[test]
fn training_is_deterministic() {
    let inst = toy_instance(1).unwrap();
    let run = |cfg: &TrainConfig| {
        let t = train(&inst.db, &inst.workload, cfg).unwrap();
        let log: Vec<String> = t.log.iter().map(|l| l.to_line(false)).collect();
        (log, t.model.policy.params)
    };
    let one = short_config(Exec::Sequential, 1);
    assert_eq!(run(&one), run(&one));
    let seq = short_config(Exec::Sequential, 3);
    let par = short_config(Exec::Parallel, 3);
    assert_eq!(run(&seq), run(&par));
}

#[test]
fn decoded_sets_respect_budget_and_proxy_is_sound() {
    let inst = toy_instance(2).unwrap();
    let cfg = short_config(Exec::Sequential, 2);
    let p = prepare(&inst.db, &inst.workload, &cfg).unwrap();
    let scorer =
        IndexedScorer::build(p.space.reps(), &inst.db, cfg.frame, Exec::Sequential).unwrap();
    let t = train_on_space(p.space, &cfg, None, cfg.max_iters).unwrap();
    for env in [EnvKind::Gsl, EnvKind::Drp, EnvKind::DrpGsl] {
        let mut model = t.model.clone();
        if env != EnvKind::Gsl {
            let m = t.space.len();
            model.config.env = env;
            model.policy = Mlp::new([m, 32, 16, env.head_width(m)], 1.0, 4);
        }
        for mode in [Decode::Greedy, Decode::Sample(1), Decode::Sample(2)] {
            for k in [1, 7, 20] {
                let (set, inf) = infer_set(&model, &t.space, &inst.db, k, mode).unwrap();
                assert!(set.len() <= k);
                assert_eq!(set.len(), inf.tuples.len());
                let truth = scorer.score(&TupleMask::from_set(&set, &inst.db));
                assert!(
                    truth >= inf.proxy - 1e-12,
                    "{env:?} {mode:?} k={k}: {truth} < {}",
                    inf.proxy
                );
                assert!(inf.prefix_scores.windows(2).all(|w| w[1] >= w[0] - 1e-12));
            }
        }
    }
    let greedy = |m: &Model| {
        infer_set(m, &t.space, &inst.db, 20, Decode::Greedy)
            .unwrap()
            .1
    };
    let back = Model::from_bytes(&t.model.to_bytes()).unwrap();
    assert_eq!(greedy(&back), greedy(&t.model));
}

fn dist_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (1usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-30.0f64..30.0, n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

fn masked(logits: &[f64], on: &[bool]) -> Option<Dist> {
    let mut b = Bitset::new(logits.len());
    on.iter()
        .enumerate()
        .filter(|(_, &x)| x)
        .for_each(|(i, _)| b.set(i));
    masked_softmax(logits, &b).ok()
}

proptest! {
    #[test]
    fn entropy_is_bounded_by_support((logits, on) in dist_strategy()) {
        if let Some(d) = masked(&logits, &on) {
            let h = entropy(&d);
            prop_assert!(h >= -1e-12);
            prop_assert!(h <= (d.len() as f64).ln() + 1e-12);
            prop_assert!((d.p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        } else {
            prop_assert!(on.iter().all(|x| !x));
        }
    }

    #[test]
    fn kl_is_non_negative((a, on) in dist_strategy(), shift in prop::collection::vec(-5.0f64..5.0, 40)) {
        let b: Vec<f64> = a.iter().zip(&shift).map(|(x, s)| x + s).collect();
        if let (Some(p), Some(q)) = (masked(&a, &on), masked(&b, &on)) {
            prop_assert!(kl(&p, &q) >= -1e-12);
            prop_assert!(kl(&p, &p).abs() < 1e-15);
        }
    }
}
