use rand::Rng;

use crate::error::{Error, Result};
use crate::neural::{
    soft_update, Activation, Cache, LayerSpec, Network, NetworkSpec, Optimiser, OptimiserKind,
};

/// Monotonic mixing network with state-conditioned hypernetworks:
///
/// `h = elu(q W1(s) + b1(s))`, `Q_tot = h . w2(s) + V(s)`, where
/// `W1 = |hyper_w1(s)|` (`[agent][unit]`) and `w2 = |hyper_w2(s)|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixer {
    pub n_agents: usize,
    pub width: usize,
    pub hyper_w1: Network,
    pub hyper_b1: Network,
    pub hyper_w2: Network,
    /// `s -> width (relu) -> 1`.
    pub value: Network,
}

pub struct MixCache {
    q: Vec<f64>,
    raw_w1: Vec<f64>,
    raw_w2: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    c_w1: Cache,
    c_b1: Cache,
    c_w2: Cache,
    c_v: Cache,
}

/// Gradients for each hypernetwork, in the order of [`Mixer::networks`].
#[derive(Debug, Clone, PartialEq)]
pub struct MixerGrads(pub [Vec<f64>; 4]);

fn linear(i: usize, o: usize) -> LayerSpec {
    LayerSpec::Dense {
        inputs: i,
        outputs: o,
        activation: Activation::Identity,
    }
}

impl Mixer {
    pub fn new<R: Rng>(n_agents: usize, state_dim: usize, width: usize, rng: &mut R) -> Result<Self> {
        let value_spec = NetworkSpec::new(
            state_dim,
            vec![
                LayerSpec::Dense {
                    inputs: state_dim,
                    outputs: width,
                    activation: Activation::Relu,
                },
                linear(width, 1),
            ],
        )?;
        Ok(Self {
            n_agents,
            width,
            hyper_w1: Network::init(
                NetworkSpec::new(state_dim, vec![linear(state_dim, n_agents * width)])?,
                rng,
            )?,
            hyper_b1: Network::init(NetworkSpec::new(state_dim, vec![linear(state_dim, width)])?, rng)?,
            hyper_w2: Network::init(NetworkSpec::new(state_dim, vec![linear(state_dim, width)])?, rng)?,
            value: Network::init(value_spec, rng)?,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.hyper_w1.spec().input
    }

    pub fn networks(&self) -> [&Network; 4] {
        [&self.hyper_w1, &self.hyper_b1, &self.hyper_w2, &self.value]
    }

    pub fn networks_mut(&mut self) -> [&mut Network; 4] {
        [
            &mut self.hyper_w1,
            &mut self.hyper_b1,
            &mut self.hyper_w2,
            &mut self.value,
        ]
    }

    pub fn zero_grads(&self) -> MixerGrads {
        MixerGrads(self.networks().map(|n| vec![0.0; n.params().len()]))
    }

    pub fn forward(&self, q: &[f64], state: &[f64]) -> Result<(f64, MixCache)> {
        if q.len() != self.n_agents {
            return Err(Error::LengthMismatch {
                what: "agent utilities".into(),
                expected: self.n_agents,
                got: q.len(),
            });
        }
        let (raw_w1, c_w1) = self.hyper_w1.forward(state)?;
        let (b1, c_b1) = self.hyper_b1.forward(state)?;
        let (raw_w2, c_w2) = self.hyper_w2.forward(state)?;
        let (v, c_v) = self.value.forward(state)?;
        let w = self.width;
        let hidden_pre: Vec<f64> = (0..w)
            .map(|e| b1[e] + (0..self.n_agents).map(|i| q[i] * raw_w1[i * w + e].abs()).sum::<f64>())
            .collect();
        let hidden: Vec<f64> = hidden_pre.iter().map(|&z| Activation::Elu.apply(z)).collect();
        let q_tot = v[0] + hidden.iter().zip(&raw_w2).map(|(h, w2)| h * w2.abs()).sum::<f64>();
        Ok((
            q_tot,
            MixCache {
                q: q.to_vec(),
                raw_w1,
                raw_w2,
                hidden_pre,
                hidden,
                c_w1,
                c_b1,
                c_w2,
                c_v,
            },
        ))
    }

    /// Accumulates `g * dQ_tot/dparams` into `grads` and returns
    /// `g * dQ_tot/dq`.
    pub fn backward(&self, cache: &MixCache, g: f64, grads: &mut MixerGrads) -> Result<Vec<f64>> {
        let w = self.width;
        let n = self.n_agents;
        let sign = |x: f64| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        };
        let mut g_raw_w2 = vec![0.0; w];
        let mut g_pre = vec![0.0; w];
        for e in 0..w {
            g_raw_w2[e] = g * cache.hidden[e] * sign(cache.raw_w2[e]);
            let gh = g * cache.raw_w2[e].abs();
            g_pre[e] = gh * Activation::Elu.derivative(cache.hidden_pre[e], cache.hidden[e]);
        }
        let mut g_raw_w1 = vec![0.0; n * w];
        let mut g_q = vec![0.0; n];
        for i in 0..n {
            for e in 0..w {
                let raw = cache.raw_w1[i * w + e];
                g_raw_w1[i * w + e] = g_pre[e] * cache.q[i] * sign(raw);
                g_q[i] += g_pre[e] * raw.abs();
            }
        }
        let [gw1, gb1, gw2, gv] = &mut grads.0;
        self.hyper_w1.backward_into(&cache.c_w1, &g_raw_w1, gw1)?;
        self.hyper_b1.backward_into(&cache.c_b1, &g_pre, gb1)?;
        self.hyper_w2.backward_into(&cache.c_w2, &g_raw_w2, gw2)?;
        self.value.backward_into(&cache.c_v, &[g], gv)?;
        Ok(g_q)
    }

    pub fn soft_update_from(&mut self, online: &Mixer, tau: f64) -> Result<()> {
        for (t, o) in self.networks_mut().into_iter().zip(online.networks()) {
            soft_update(t.params_mut(), o.params(), tau)?;
        }
        Ok(())
    }
}

/// One optimiser state per hypernetwork.
#[derive(Debug, Clone, PartialEq)]
pub struct MixerOptimiser(pub [Optimiser; 4]);

impl MixerOptimiser {
    pub fn new(mixer: &Mixer, kind: OptimiserKind, lr: f64) -> Self {
        Self(mixer.networks().map(|n| Optimiser::new(kind, n.params().len(), lr)))
    }

    pub fn step(&mut self, mixer: &mut Mixer, grads: &MixerGrads) -> Result<()> {
        for ((opt, net), g) in self.0.iter_mut().zip(mixer.networks_mut()).zip(&grads.0) {
            opt.step(net.params_mut(), g)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{central_difference, max_relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_mixer_returns_first_utility() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (n, s, w) = (3, 4, 5);
        let mut m = Mixer::new(n, s, w, &mut rng).unwrap();
        for net in m.networks_mut() {
            net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        }
        // Biases of hyper_w1 are its last n*w parameters: W1[0][e] = 1.
        let p = m.hyper_w1.params_mut();
        let bias = p.len() - n * w;
        for e in 0..w {
            p[bias + e] = 1.0;
        }
        let p = m.hyper_w2.params_mut();
        let bias = p.len() - w;
        p[bias] = 1.0;
        let state = [0.3, -1.0, 2.0, 0.5];
        for q1 in [0.0, 0.5, 2.0, 7.25] {
            let (q_tot, _) = m.forward(&[q1, -4.0, 9.0], &state).unwrap();
            assert_eq!(q_tot, q1);
        }
    }

    #[test]
    fn utilities_never_decrease_the_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = Mixer::new(4, 6, 8, &mut rng).unwrap();
        for _ in 0..500 {
            let s: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            let q: Vec<f64> = (0..4).map(|_| rng.random_range(-20.0..20.0)).collect();
            let (base, cache) = m.forward(&q, &s).unwrap();
            let g = m.backward(&cache, 1.0, &mut m.zero_grads()).unwrap();
            assert!(g.iter().all(|&v| v >= 0.0));
            for i in 0..4 {
                let mut up = q.clone();
                up[i] += rng.random_range(1e-6..1.0);
                assert!(m.forward(&up, &s).unwrap().0 >= base);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let (n, sd) = (3, 5);
            let m = Mixer::new(n, sd, 6, &mut rng).unwrap();
            let s: Vec<f64> = (0..sd).map(|_| rng.random_range(-2.0..2.0)).collect();
            let q: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (_, cache) = m.forward(&q, &s).unwrap();
            let mut grads = m.zero_grads();
            let gq = m.backward(&cache, 1.0, &mut grads).unwrap();
            let num_q = central_difference(&q, 1e-5, |qq| m.forward(qq, &s).unwrap().0);
            assert!(max_relative_error(&gq, &num_q) < 1e-4, "seed {seed}");
            for k in 0..4 {
                let mut probe = m.clone();
                let base = m.networks()[k].params().to_vec();
                let num = central_difference(&base, 1e-5, |p| {
                    probe.networks_mut()[k].params_mut().copy_from_slice(p);
                    probe.forward(&q, &s).unwrap().0
                });
                let err = max_relative_error(&grads.0[k], &num);
                assert!(err < 1e-4, "seed {seed}, net {k}: {err}");
            }
        }
    }
}
