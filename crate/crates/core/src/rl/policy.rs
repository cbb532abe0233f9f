//! Masked softmax over the policy head and the per-segment quantities PPO
//! needs (log-probabilities, entropy, KL and their logit gradients).

use rand::Rng;

use crate::error::{Error, Result};

use super::nn::Mlp;

/// Fixed-size bitset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitset {
    words: Vec<u64>,
    len: usize,
}

impl Bitset {
    pub fn new(len: usize) -> Bitset {
        Bitset {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn clear(&mut self, i: usize) {
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + b)
            })
        })
    }
}

/// One categorical decision: the allowed logit indices and the index taken.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub mask: Bitset,
    pub choice: usize,
}

/// A categorical distribution over the set bits of a mask, ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct Dist {
    pub idx: Vec<usize>,
    pub p: Vec<f64>,
    pub logp: Vec<f64>,
}

impl Dist {
    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    fn pos(&self, i: usize) -> Option<usize> {
        self.idx.binary_search(&i).ok()
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.pos(i).map_or(0.0, |k| self.p[k])
    }
}

/// Softmax restricted to the set bits of `mask`, computed in log space.
pub fn masked_softmax(logits: &[f64], mask: &Bitset) -> Result<Dist> {
    let idx: Vec<usize> = mask.ones().collect();
    if idx.is_empty() {
        return Err(Error::Contract(
            "every action is masked; the episode should have ended".into(),
        ));
    }
    let max = idx
        .iter()
        .map(|&i| logits[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let lse = max
        + idx
            .iter()
            .map(|&i| (logits[i] - max).exp())
            .sum::<f64>()
            .ln();
    let logp: Vec<f64> = idx.iter().map(|&i| logits[i] - lse).collect();
    let p = logp.iter().map(|l| l.exp()).collect();
    Ok(Dist { idx, p, logp })
}

/// Dense action distribution for a state: exactly zero off the mask.
pub fn forward_actor(net: &Mlp, state: &[u32], mask: &Bitset) -> Result<Vec<f64>> {
    let out = net.forward(state).out;
    let d = masked_softmax(&out, mask)?;
    let mut p = vec![0.0; out.len()];
    for (&i, &q) in d.idx.iter().zip(&d.p) {
        p[i] = q;
    }
    Ok(p)
}

pub fn entropy(d: &Dist) -> f64 {
    -d.p.iter().zip(&d.logp).map(|(p, l)| p * l).sum::<f64>()
}

/// KL(old ‖ new) over the same support.
pub fn kl(old: &Dist, new: &Dist) -> f64 {
    old.p
        .iter()
        .zip(&old.logp)
        .zip(&new.logp)
        .map(|((p, lo), ln)| p * (lo - ln))
        .sum()
}

pub fn log_prob(d: &Dist, choice: usize) -> f64 {
    d.pos(choice).map_or(f64::NEG_INFINITY, |k| d.logp[k])
}

/// Adds `scale * d(log p[choice])/d(logits)` into `grad`.
pub fn add_logp_grad(d: &Dist, choice: usize, scale: f64, grad: &mut [f64]) {
    for (&i, &p) in d.idx.iter().zip(&d.p) {
        grad[i] += scale * ((i == choice) as u8 as f64 - p);
    }
}

/// Adds `scale * dH/d(logits)` into `grad`.
pub fn add_entropy_grad(d: &Dist, scale: f64, grad: &mut [f64]) {
    let h = entropy(d);
    for ((&i, &p), &l) in d.idx.iter().zip(&d.p).zip(&d.logp) {
        grad[i] -= scale * p * (l + h);
    }
}

/// Adds `scale * d KL(old‖new)/d(new logits)` into `grad`.
pub fn add_kl_grad(old: &Dist, new: &Dist, scale: f64, grad: &mut [f64]) {
    for ((&i, &pn), &po) in new.idx.iter().zip(&new.p).zip(&old.p) {
        grad[i] += scale * (pn - po);
    }
}

pub fn sample<R: Rng>(d: &Dist, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (&i, &p) in d.idx.iter().zip(&d.p) {
        acc += p;
        if u < acc {
            return i;
        }
    }
    argmax(d)
}

/// Highest-probability index; ties go to the lowest index.
pub fn argmax(d: &Dist) -> usize {
    let mut best = 0;
    for k in 1..d.len() {
        if d.logp[k] > d.logp[best] {
            best = k;
        }
    }
    d.idx[best]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(logits: &[f64], on: &[usize]) -> Dist {
        let mut m = Bitset::new(logits.len());
        on.iter().for_each(|&i| m.set(i));
        masked_softmax(logits, &m).unwrap()
    }

    #[test]
    fn softmax_basics() {
        let d = dist(&[0.0; 5], &[0, 2, 4]);
        assert!(d.p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        assert!((entropy(&d) - 3f64.ln()).abs() < 1e-12);
        let d = dist(&[1.0, 9.0, -3.0], &[2]);
        assert_eq!((d.idx.clone(), d.p.clone()), (vec![2], vec![1.0]));
        // far-apart logits stay finite in log space
        let d = dist(&[0.0, -2000.0], &[0, 1]);
        assert_eq!(d.p[1], 0.0);
        assert!(kl(&dist(&[0.0, 0.0], &[0, 1]), &d).is_finite());
        assert!(masked_softmax(&[1.0], &Bitset::new(1)).is_err());
    }

    #[test]
    fn entropy_and_kl_gradients() {
        let z = [0.3, -1.2, 0.8, 2.0, -0.1];
        let on = [0, 1, 3, 4];
        let old = dist(&[0.1, 0.5, 0.0, -0.7, 0.2], &on);
        let h = 1e-6;
        let mut ge = vec![0.0; 5];
        add_entropy_grad(&dist(&z, &on), 1.0, &mut ge);
        let mut gk = vec![0.0; 5];
        add_kl_grad(&old, &dist(&z, &on), 1.0, &mut gk);
        let mut gl = vec![0.0; 5];
        add_logp_grad(&dist(&z, &on), 3, 1.0, &mut gl);
        for i in 0..5 {
            let (mut a, mut b) = (z, z);
            a[i] += h;
            b[i] -= h;
            let fe = (entropy(&dist(&a, &on)) - entropy(&dist(&b, &on))) / (2.0 * h);
            let fk = (kl(&old, &dist(&a, &on)) - kl(&old, &dist(&b, &on))) / (2.0 * h);
            let fl = (log_prob(&dist(&a, &on), 3) - log_prob(&dist(&b, &on), 3)) / (2.0 * h);
            assert!((fe - ge[i]).abs() < 1e-8);
            assert!((fk - gk[i]).abs() < 1e-8);
            assert!((fl - gl[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn bitset_iteration() {
        let mut b = Bitset::new(130);
        for i in [0, 63, 64, 129] {
            b.set(i);
        }
        assert_eq!(b.ones().collect::<Vec<_>>(), vec![0, 63, 64, 129]);
        b.clear(63);
        assert_eq!(b.count(), 3);
        assert!(!b.get(63) && !b.get(500));
    }
}
