//! Adam and the small numeric helpers shared by every trainer.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Dense Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n_params: usize) -> Self {
        Adam {
            cfg,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of one clamped prediction and the derivative of that
/// loss with respect to the unclamped prediction (zero where the clamp binds).
pub fn bce(p: f64, label: bool) -> (f64, f64) {
    let clamped = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let loss = if label { -clamped.ln() } else { -(1.0 - clamped).ln() };
    let grad = if p != clamped {
        0.0
    } else if label {
        -1.0 / p
    } else {
        1.0 / (1.0 - p)
    };
    (loss, grad)
}

/// A fresh random permutation of `0..n` cut into batches.
pub fn shuffled_batches<R: Rng>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Inverted-dropout keep decisions drawn from 32-bit uniforms.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Dropout {
    threshold: u32,
    scale: f64,
    active: bool,
}

impl Dropout {
    pub(crate) fn new(rate: f64) -> Self {
        let active = rate > 0.0;
        Dropout {
            threshold: (rate * u32::MAX as f64) as u32,
            scale: if active { 1.0 / (1.0 - rate) } else { 1.0 },
            active,
        }
    }

    /// Multiplier for one input coordinate: 0 if dropped, `1/(1-rate)` if kept.
    #[inline]
    pub(crate) fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if !self.active {
            return 1.0;
        }
        if rng.next_u32() < self.threshold {
            0.0
        } else {
            self.scale
        }
    }
}

/// Sparse view of a dense vector: the non-zero coordinates only.
#[derive(Debug, Clone, Default)]
pub struct SparseVec {
    pub idx: Vec<u32>,
    pub val: Vec<f64>,
}

impl SparseVec {
    pub fn from_dense(v: &[f64]) -> Self {
        let mut s = SparseVec::default();
        for (i, &x) in v.iter().enumerate() {
            if x != 0.0 {
                s.idx.push(i as u32);
                s.val.push(x);
            }
        }
        s
    }
}
