//! Three-layer tanh MLP over a sparse binary input, with exact backprop.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Dense network `n_in → h1 → h2 → n_out`, tanh on the hidden layers and a
/// linear head. All weights live in one flat vector so optimizers and
/// checkpoints can treat them uniformly.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub dims: [usize; 4],
    pub params: Vec<f64>,
}

/// Activations kept from the forward pass for backprop.
#[derive(Clone, Debug)]
pub struct Cache {
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub out: Vec<f64>,
}

struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    end: usize,
}

fn offsets([n, h1, h2, o]: [usize; 4]) -> Offsets {
    let w1 = 0;
    let b1 = w1 + n * h1;
    let w2 = b1 + h1;
    let b2 = w2 + h1 * h2;
    let w3 = b2 + h2;
    let b3 = w3 + h2 * o;
    Offsets {
        w1,
        b1,
        w2,
        b2,
        w3,
        b3,
        end: b3 + o,
    }
}

impl Mlp {
    pub fn param_count(dims: [usize; 4]) -> usize {
        offsets(dims).end
    }

    /// Xavier-uniform hidden layers; the head starts scaled by `head_scale`
    /// so an untrained policy is close to uniform.
    pub fn new(dims: [usize; 4], head_scale: f64, seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let off = offsets(dims);
        let mut params = vec![0.0; off.end];
        let mut fill =
            |range: std::ops::Range<usize>, fan_in: usize, fan_out: usize, scale: f64| {
                let lim = (6.0 / (fan_in + fan_out) as f64).sqrt() * scale;
                for p in &mut params[range] {
                    *p = rng.random_range(-lim..=lim);
                }
            };
        let [n, h1, h2, o] = dims;
        fill(off.w1..off.b1, n, h1, 1.0);
        fill(off.w2..off.b2, h1, h2, 1.0);
        fill(off.w3..off.b3, h2, o, head_scale);
        Mlp { dims, params }
    }

    pub fn zeros(dims: [usize; 4]) -> Mlp {
        Mlp {
            dims,
            params: vec![0.0; offsets(dims).end],
        }
    }

    pub fn n_in(&self) -> usize {
        self.dims[0]
    }

    pub fn n_out(&self) -> usize {
        self.dims[3]
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Forward pass; `active` lists the input positions equal to 1.
    pub fn forward(&self, active: &[u32]) -> Cache {
        let [_, h1, h2, o] = self.dims;
        let off = offsets(self.dims);
        let p = &self.params;
        let mut a1 = p[off.b1..off.b1 + h1].to_vec();
        for &j in active {
            let row = &p[off.w1 + j as usize * h1..off.w1 + (j as usize + 1) * h1];
            for (a, w) in a1.iter_mut().zip(row) {
                *a += w;
            }
        }
        a1.iter_mut().for_each(|a| *a = a.tanh());
        let mut a2 = p[off.b2..off.b2 + h2].to_vec();
        for (u, &x) in a1.iter().enumerate() {
            let row = &p[off.w2 + u * h2..off.w2 + (u + 1) * h2];
            for (a, w) in a2.iter_mut().zip(row) {
                *a += x * w;
            }
        }
        a2.iter_mut().for_each(|a| *a = a.tanh());
        let mut out = p[off.b3..off.b3 + o].to_vec();
        for (v, &x) in a2.iter().enumerate() {
            let row = &p[off.w3 + v * o..off.w3 + (v + 1) * o];
            for (a, w) in out.iter_mut().zip(row) {
                *a += x * w;
            }
        }
        Cache { a1, a2, out }
    }

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(out).
    pub fn backward(&self, active: &[u32], cache: &Cache, dout: &[f64], grad: &mut [f64]) {
        let [_, h1, h2, o] = self.dims;
        let off = offsets(self.dims);
        let p = &self.params;
        for (g, d) in grad[off.b3..off.b3 + o].iter_mut().zip(dout) {
            *g += d;
        }
        let mut dz2 = vec![0.0; h2];
        for v in 0..h2 {
            let row = &p[off.w3 + v * o..off.w3 + (v + 1) * o];
            let grow = &mut grad[off.w3 + v * o..off.w3 + (v + 1) * o];
            let x = cache.a2[v];
            let mut acc = 0.0;
            for ((g, w), d) in grow.iter_mut().zip(row).zip(dout) {
                *g += x * d;
                acc += w * d;
            }
            dz2[v] = acc * (1.0 - x * x);
        }
        for (g, d) in grad[off.b2..off.b2 + h2].iter_mut().zip(&dz2) {
            *g += d;
        }
        let mut dz1 = vec![0.0; h1];
        for u in 0..h1 {
            let row = &p[off.w2 + u * h2..off.w2 + (u + 1) * h2];
            let grow = &mut grad[off.w2 + u * h2..off.w2 + (u + 1) * h2];
            let x = cache.a1[u];
            let mut acc = 0.0;
            for ((g, w), d) in grow.iter_mut().zip(row).zip(&dz2) {
                *g += x * d;
                acc += w * d;
            }
            dz1[u] = acc * (1.0 - x * x);
        }
        for (g, d) in grad[off.b1..off.b1 + h1].iter_mut().zip(&dz1) {
            *g += d;
        }
        for &j in active {
            let grow = &mut grad[off.w1 + j as usize * h1..off.w1 + (j as usize + 1) * h1];
            for (g, d) in grow.iter_mut().zip(&dz1) {
                *g += d;
            }
        }
    }

    /// Copies input rows and output units between networks of different
    /// widths: `map[i] = Some(j)` carries old unit `j` into new unit `i`.
    /// Unmapped units keep this network's (fresh) initialization.
    pub fn remap_io(&mut self, old: &Mlp, in_map: &[Option<usize>], out_map: &[Option<usize>]) {
        let [_, h1, h2, o] = self.dims;
        assert_eq!(
            [h1, h2],
            [old.dims[1], old.dims[2]],
            "hidden widths must match"
        );
        let (off, oo) = (offsets(self.dims), offsets(old.dims));
        for (i, m) in in_map.iter().enumerate() {
            if let Some(j) = *m {
                self.params[off.w1 + i * h1..off.w1 + (i + 1) * h1]
                    .copy_from_slice(&old.params[oo.w1 + j * h1..oo.w1 + (j + 1) * h1]);
            }
        }
        self.params[off.b1..off.w3].copy_from_slice(&old.params[oo.b1..oo.w3]);
        let old_o = old.dims[3];
        for v in 0..h2 {
            for (i, m) in out_map.iter().enumerate() {
                if let Some(j) = *m {
                    self.params[off.w3 + v * o + i] = old.params[oo.w3 + v * old_o + j];
                }
            }
        }
        for (i, m) in out_map.iter().enumerate() {
            if let Some(j) = *m {
                self.params[off.b3 + i] = old.params[oo.b3 + j];
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimKind {
    Adam,
    /// Plain gradient descent.
    Sgd,
}

impl OptimKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimKind::Adam => "adam",
            OptimKind::Sgd => "sgd",
        }
    }

    pub fn parse(s: &str) -> Option<OptimKind> {
        match s {
            "adam" => Some(OptimKind::Adam),
            "sgd" => Some(OptimKind::Sgd),
            _ => None,
        }
    }
}

/// First-order optimizer with global-norm gradient clipping.
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub kind: OptimKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_norm: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimKind, n: usize, lr: f64, max_norm: f64) -> Optimizer {
        let n = if kind == OptimKind::Adam { n } else { 0 };
        Optimizer {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_norm,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn adam(n: usize, lr: f64, max_norm: f64) -> Optimizer {
        Optimizer::new(OptimKind::Adam, n, lr, max_norm)
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = if self.max_norm > 0.0 && norm > self.max_norm {
            self.max_norm / norm
        } else {
            1.0
        };
        if self.kind == OptimKind::Sgd {
            for (p, g) in params.iter_mut().zip(grad) {
                *p -= self.lr * g * scale;
            }
            return;
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i] * scale;
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_matches_finite_differences() {
        let net = Mlp::new([5, 4, 3, 2], 1.0, 3);
        let active = [0u32, 3];
        // loss = 0.7 * out0 - 1.3 * out1^2
        let loss = |n: &Mlp| {
            let c = n.forward(&active);
            0.7 * c.out[0] - 1.3 * c.out[1] * c.out[1]
        };
        let cache = net.forward(&active);
        let dout = [0.7, -2.6 * cache.out[1]];
        let mut grad = vec![0.0; net.params.len()];
        net.backward(&active, &cache, &dout, &mut grad);
        for i in 0..net.params.len() {
            let h = 1e-6;
            let mut a = net.clone();
            a.params[i] += h;
            let mut b = net.clone();
            b.params[i] -= h;
            let fd = (loss(&a) - loss(&b)) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() <= 1e-7 + 1e-5 * fd.abs(),
                "param {i}: {fd} vs {}",
                grad[i]
            );
        }
    }

    #[test]
    fn adam_descends_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Optimizer::adam(2, 0.1, 0.0);
        for _ in 0..500 {
            let g = vec![2.0 * x[0], 2.0 * x[1]];
            opt.step(&mut x, &g);
        }
        assert!(x[0].abs() < 1e-2 && x[1].abs() < 1e-2, "{x:?}");
    }
}
