//! Small neural toolkit with explicit forward and backward passes.

mod checkpoint;
mod network;

pub use checkpoint::{parse_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use network::{sigmoid, Activation, Cache, LayerSpec, Network, NetworkSpec, KERNEL};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adaptive moment estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::LengthMismatch {
                what: "optimiser state".into(),
                expected: self.m.len(),
                got: if params.len() != self.m.len() {
                    params.len()
                } else {
                    grads.len()
                },
            });
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimiserKind {
    #[default]
    Adam,
    /// Plain gradient descent.
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Optimiser {
    Adam(Adam),
    Sgd { lr: f64 },
}

impl Optimiser {
    pub fn new(kind: OptimiserKind, n_params: usize, lr: f64) -> Self {
        match kind {
            OptimiserKind::Adam => Optimiser::Adam(Adam::new(n_params, lr)),
            OptimiserKind::Sgd => Optimiser::Sgd { lr },
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        match self {
            Optimiser::Adam(a) => a.step(params, grads),
            Optimiser::Sgd { lr } => {
                if params.len() != grads.len() {
                    return Err(Error::LengthMismatch {
                        what: "gradient".into(),
                        expected: params.len(),
                        got: grads.len(),
                    });
                }
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= *lr * g;
                }
                Ok(())
            }
        }
    }
}

/// `target <- (1 - tau) target + tau online`.
pub fn soft_update(target: &mut [f64], online: &[f64], tau: f64) -> Result<()> {
    if target.len() != online.len() {
        return Err(Error::LengthMismatch {
            what: "soft update".into(),
            expected: target.len(),
            got: online.len(),
        });
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidArgument(format!("tau must lie in (0, 1], got {tau}")));
    }
    if tau == 1.0 {
        target.copy_from_slice(online);
    } else {
        for (t, o) in target.iter_mut().zip(online) {
            *t += tau * (o - *t);
        }
    }
    Ok(())
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + h;
            let up = f(&probe);
            probe[k] = x[k] - h;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a - b| / max(|a|, |b|, 1e-3)`; the floor keeps near-zero
/// gradients from amplifying rounding noise.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-3))
        .fold(0.0, f64::max)
}
