use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
    /// Exponential linear unit with unit scale.
    Elu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
        }
    }

    /// Derivative given the pre-activation `x` and the output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
        activation: Activation,
    },
    /// Kernel 3, stride 1, zero "same" padding over the first
    /// `channels_in * length` inputs (channel-major). The remaining
    /// `passthrough` inputs are appended unchanged after the
    /// `channels_out * length` conv outputs.
    Conv1d {
        channels_in: usize,
        channels_out: usize,
        length: usize,
        passthrough: usize,
        activation: Activation,
    },
    /// Elementwise output bounds, one activation per unit; no parameters.
    Heads { activations: Vec<Activation> },
}

pub const KERNEL: usize = 3;

impl LayerSpec {
    pub fn inputs(&self) -> usize {
        match self {
            LayerSpec::Dense { inputs, .. } => *inputs,
            LayerSpec::Conv1d {
                channels_in,
                length,
                passthrough,
                ..
            } => channels_in * length + passthrough,
            LayerSpec::Heads { activations } => activations.len(),
        }
    }

    pub fn outputs(&self) -> usize {
        match self {
            LayerSpec::Dense { outputs, .. } => *outputs,
            LayerSpec::Conv1d {
                channels_out,
                length,
                passthrough,
                ..
            } => channels_out * length + passthrough,
            LayerSpec::Heads { activations } => activations.len(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            LayerSpec::Dense {
                inputs, outputs, ..
            } => inputs * outputs + outputs,
            LayerSpec::Conv1d {
                channels_in,
                channels_out,
                ..
            } => channels_out * channels_in * KERNEL + channels_out,
            LayerSpec::Heads { .. } => 0,
        }
    }

    fn fan_in(&self) -> usize {
        match self {
            LayerSpec::Dense { inputs, .. } => *inputs,
            LayerSpec::Conv1d { channels_in, .. } => channels_in * KERNEL,
            LayerSpec::Heads { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = Self { input, layers };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        let mut width = self.input;
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.inputs() != width {
                return Err(Error::Shape(format!(
                    "layer {k} expects {} inputs, previous layer gives {width}",
                    layer.inputs()
                )));
            }
            if layer.outputs() == 0 {
                return Err(Error::Shape(format!("layer {k} has no outputs")));
            }
            width = layer.outputs();
        }
        Ok(())
    }

    pub fn output(&self) -> usize {
        self.layers.last().map_or(self.input, LayerSpec::outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }
}

/// Per-layer values recorded by [`Network::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Cache {
    /// `values[k]` is the input of layer `k`; the last entry is the output.
    values: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    generation: u64,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.values.last().map_or(&[], Vec::as_slice)
    }
}

/// Parameters laid out layer by layer: weights row-major (`[out][in]`, conv
/// `[out][in][k]`), then biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    params: Vec<f64>,
    generation: u64,
}

impl Network {
    /// Fan-in scaled uniform initialisation: `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init<R: Rng>(spec: NetworkSpec, rng: &mut R) -> Result<Self> {
        spec.check()?;
        let mut params = Vec::with_capacity(spec.param_count());
        for layer in &spec.layers {
            let bound = 1.0 / (layer.fan_in() as f64).sqrt();
            for _ in 0..layer.param_count() {
                params.push(rng.random_range(-bound..=bound));
            }
        }
        Ok(Self {
            spec,
            params,
            generation: 0,
        })
    }

    pub fn from_params(spec: NetworkSpec, params: Vec<f64>) -> Result<Self> {
        spec.check()?;
        if params.len() != spec.param_count() {
            return Err(Error::LengthMismatch {
                what: "network parameters".into(),
                expected: spec.param_count(),
                got: params.len(),
            });
        }
        Ok(Self {
            spec,
            params,
            generation: 0,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameters; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.generation += 1;
        &mut self.params
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Cache)> {
        if x.len() != self.spec.input {
            return Err(Error::LengthMismatch {
                what: "network input".into(),
                expected: self.spec.input,
                got: x.len(),
            });
        }
        let mut values = Vec::with_capacity(self.spec.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.spec.layers.len());
        values.push(x.to_vec());
        let mut offset = 0;
        for layer in &self.spec.layers {
            let p = &self.params[offset..offset + layer.param_count()];
            offset += layer.param_count();
            let input = values.last().expect("input pushed above");
            let (z, y) = layer_forward(layer, p, input);
            pre.push(z);
            values.push(y);
        }
        let out = values.last().cloned().unwrap_or_default();
        Ok((
            out,
            Cache {
                values,
                pre,
                generation: self.generation,
            },
        ))
    }

    /// Output only.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Accumulates the parameter gradient into `param_grad` and returns the
    /// input gradient.
    pub fn backward_into(
        &self,
        cache: &Cache,
        grad_out: &[f64],
        param_grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        if cache.generation != self.generation || cache.values.len() != self.spec.layers.len() + 1
        {
            return Err(Error::InvalidArgument(
                "stale cache: parameters changed since the forward pass".into(),
            ));
        }
        if grad_out.len() != self.spec.output() {
            return Err(Error::LengthMismatch {
                what: "output gradient".into(),
                expected: self.spec.output(),
                got: grad_out.len(),
            });
        }
        if param_grad.len() != self.params.len() {
            return Err(Error::LengthMismatch {
                what: "parameter gradient".into(),
                expected: self.params.len(),
                got: param_grad.len(),
            });
        }
        let mut offset = self.params.len();
        let mut grad = grad_out.to_vec();
        for (k, layer) in self.spec.layers.iter().enumerate().rev() {
            let n = layer.param_count();
            offset -= n;
            grad = layer_backward(
                layer,
                &self.params[offset..offset + n],
                &cache.values[k],
                &cache.pre[k],
                &cache.values[k + 1],
                &grad,
                &mut param_grad[offset..offset + n],
            );
        }
        Ok(grad)
    }

    /// `(parameter gradient, input gradient)`.
    pub fn backward(&self, cache: &Cache, grad_out: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut g = vec![0.0; self.params.len()];
        let gi = self.backward_into(cache, grad_out, &mut g)?;
        Ok((g, gi))
    }
}

fn layer_forward(layer: &LayerSpec, p: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    match layer {
        LayerSpec::Dense {
            inputs,
            outputs,
            activation,
        } => {
            let (w, b) = p.split_at(inputs * outputs);
            let z: Vec<f64> = (0..*outputs)
                .map(|o| {
                    let row = &w[o * inputs..(o + 1) * inputs];
                    b[o] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
                })
                .collect();
            let y = z.iter().map(|&v| activation.apply(v)).collect();
            (z, y)
        }
        LayerSpec::Conv1d {
            channels_in,
            channels_out,
            length,
            passthrough: _,
            activation,
        } => {
            let (ci, co, len) = (*channels_in, *channels_out, *length);
            let (w, b) = p.split_at(co * ci * KERNEL);
            let mut z = vec![0.0; co * len];
            for o in 0..co {
                for pos in 0..len {
                    let mut acc = b[o];
                    for c in 0..ci {
                        let wk = &w[(o * ci + c) * KERNEL..(o * ci + c + 1) * KERNEL];
                        let xc = &x[c * len..(c + 1) * len];
                        for (k, &wv) in wk.iter().enumerate() {
                            // tap k reads position pos + k - 1
                            if let Some(src) = (pos + k).checked_sub(1).filter(|&s| s < len) {
                                acc += wv * xc[src];
                            }
                        }
                    }
                    z[o * len + pos] = acc;
                }
            }
            let mut y: Vec<f64> = z.iter().map(|&v| activation.apply(v)).collect();
            y.extend_from_slice(&x[ci * len..]);
            (z, y)
        }
        LayerSpec::Heads { activations } => {
            let y = x.iter().zip(activations).map(|(&v, a)| a.apply(v)).collect();
            (x.to_vec(), y)
        }
    }
}

fn layer_backward(
    layer: &LayerSpec,
    p: &[f64],
    x: &[f64],
    z: &[f64],
    y: &[f64],
    gy: &[f64],
    gp: &mut [f64],
) -> Vec<f64> {
    match layer {
        LayerSpec::Dense {
            inputs,
            outputs,
            activation,
        } => {
            let (w, _) = p.split_at(inputs * outputs);
            let (gw, gb) = gp.split_at_mut(inputs * outputs);
            let mut gx = vec![0.0; *inputs];
            for o in 0..*outputs {
                let gz = gy[o] * activation.derivative(z[o], y[o]);
                if gz == 0.0 {
                    continue;
                }
                gb[o] += gz;
                let row = &w[o * inputs..(o + 1) * inputs];
                let grow = &mut gw[o * inputs..(o + 1) * inputs];
                for j in 0..*inputs {
                    grow[j] += gz * x[j];
                    gx[j] += gz * row[j];
                }
            }
            gx
        }
        LayerSpec::Conv1d {
            channels_in,
            channels_out,
            length,
            passthrough: _,
            activation,
        } => {
            let (ci, co, len) = (*channels_in, *channels_out, *length);
            let (w, _) = p.split_at(co * ci * KERNEL);
            let (gw, gb) = gp.split_at_mut(co * ci * KERNEL);
            let mut gx = vec![0.0; x.len()];
            gx[ci * len..].copy_from_slice(&gy[co * len..]);
            for o in 0..co {
                for pos in 0..len {
                    let idx = o * len + pos;
                    let gz = gy[idx] * activation.derivative(z[idx], y[idx]);
                    if gz == 0.0 {
                        continue;
                    }
                    gb[o] += gz;
                    for c in 0..ci {
                        let base = (o * ci + c) * KERNEL;
                        for k in 0..KERNEL {
                            if let Some(src) = (pos + k).checked_sub(1).filter(|&s| s < len) {
                                gw[base + k] += gz * x[c * len + src];
                                gx[c * len + src] += gz * w[base + k];
                            }
                        }
                    }
                }
            }
            gx
        }
        LayerSpec::Heads { activations } => gy
            .iter()
            .zip(activations)
            .zip(z.iter().zip(y))
            .map(|((g, a), (&zv, &yv))| g * a.derivative(zv, yv))
            .collect(),
    }
}
