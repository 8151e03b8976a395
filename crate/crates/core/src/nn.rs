//! Small fully-connected networks with hand-written reverse-mode gradients.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{check_len, invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// `y = W·x + b`, `W` stored row-major (`outputs × inputs`) then `b`.
    Dense { inputs: usize, outputs: usize },
    /// `y = ln(1 + eˣ)`.
    Softplus,
    /// `y = 1 / (1 + e⁻ˣ)`.
    Sigmoid,
    /// Ignores its input and emits a learned vector.
    Constant { outputs: usize },
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, outputs } => (inputs + 1) * outputs,
            LayerSpec::Constant { outputs } => outputs,
            LayerSpec::Softplus | LayerSpec::Sigmoid => 0,
        }
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
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

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    input_dim: usize,
    output_dim: usize,
    layers: Vec<LayerSpec>,
    params: Vec<f64>,
}

/// Per-layer inputs recorded by a forward pass; `values[i]` feeds layer `i`
/// and the last entry is the network output.
#[derive(Debug, Clone)]
pub struct Trace {
    values: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("trace holds at least the input")
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases and constants.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, layers: Vec<LayerSpec>, rng: &mut R) -> Result<Self> {
        let output_dim = Self::check_chain(input_dim, &layers)?;
        let mut params = Vec::with_capacity(layers.iter().map(LayerSpec::param_count).sum());
        for layer in &layers {
            match *layer {
                LayerSpec::Dense { inputs, outputs } => {
                    let limit = (6.0 / (inputs + outputs) as f64).sqrt();
                    for _ in 0..inputs * outputs {
                        params.push(limit * (2.0 * rng.random::<f64>() - 1.0));
                    }
                    params.extend(core::iter::repeat_n(0.0, outputs));
                }
                LayerSpec::Constant { outputs } => params.extend(core::iter::repeat_n(0.0, outputs)),
                LayerSpec::Softplus | LayerSpec::Sigmoid => {}
            }
        }
        Ok(Self {
            input_dim,
            output_dim,
            layers,
            params,
        })
    }

    /// Rebuilds a network from stored parameters.
    pub fn from_params(input_dim: usize, layers: Vec<LayerSpec>, params: Vec<f64>) -> Result<Self> {
        let output_dim = Self::check_chain(input_dim, &layers)?;
        check_len(layers.iter().map(LayerSpec::param_count).sum(), params.len())?;
        Ok(Self {
            input_dim,
            output_dim,
            layers,
            params,
        })
    }

    fn check_chain(input_dim: usize, layers: &[LayerSpec]) -> Result<usize> {
        if input_dim == 0 {
            return Err(invalid("network input must be non-empty"));
        }
        let mut dim = input_dim;
        for layer in layers {
            match *layer {
                LayerSpec::Dense { inputs, outputs } => {
                    if inputs != dim || outputs == 0 {
                        return Err(invalid("dense layer does not match previous width"));
                    }
                    dim = outputs;
                }
                LayerSpec::Constant { outputs } => {
                    if outputs == 0 {
                        return Err(invalid("constant layer must be non-empty"));
                    }
                    dim = outputs;
                }
                LayerSpec::Softplus | LayerSpec::Sigmoid => {}
            }
        }
        Ok(dim)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(x)?.values.pop().unwrap())
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        check_len(self.input_dim, x.len())?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.to_vec());
        let mut offset = 0;
        for layer in &self.layers {
            let input = values.last().unwrap();
            let out = match *layer {
                LayerSpec::Dense { inputs, outputs } => {
                    let w = &self.params[offset..offset + inputs * outputs];
                    let b = &self.params[offset + inputs * outputs..offset + (inputs + 1) * outputs];
                    w.chunks_exact(inputs)
                        .zip(b)
                        .map(|(row, bias)| bias + row.iter().zip(input).map(|(a, v)| a * v).sum::<f64>())
                        .collect()
                }
                LayerSpec::Softplus => input.iter().map(|&v| softplus(v)).collect(),
                LayerSpec::Sigmoid => input.iter().map(|&v| sigmoid(v)).collect(),
                LayerSpec::Constant { outputs } => self.params[offset..offset + outputs].to_vec(),
            };
            offset += layer.param_count();
            values.push(out);
        }
        Ok(Trace { values })
    }

    /// Accumulates `∂L/∂params` into `grad_params` and returns `∂L/∂input`.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], grad_params: &mut [f64]) -> Result<Vec<f64>> {
        check_len(self.output_dim, grad_out.len())?;
        check_len(self.params.len(), grad_params.len())?;
        let mut grad = grad_out.to_vec();
        let mut offset = self.params.len();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            offset -= layer.param_count();
            let input = &trace.values[i];
            grad = match *layer {
                LayerSpec::Dense { inputs, outputs } => {
                    let (gw, gb) = grad_params[offset..offset + (inputs + 1) * outputs]
                        .split_at_mut(inputs * outputs);
                    let w = &self.params[offset..offset + inputs * outputs];
                    let mut gx = vec![0.0; inputs];
                    for (o, &g) in grad.iter().enumerate() {
                        gb[o] += g;
                        let row = &w[o * inputs..(o + 1) * inputs];
                        let grow = &mut gw[o * inputs..(o + 1) * inputs];
                        for ((gwi, &xi), (gxi, &wi)) in grow.iter_mut().zip(input).zip(gx.iter_mut().zip(row)) {
                            *gwi += g * xi;
                            *gxi += g * wi;
                        }
                    }
                    gx
                }
                LayerSpec::Softplus => grad.iter().zip(input).map(|(g, &x)| g * sigmoid(x)).collect(),
                LayerSpec::Sigmoid => {
                    let out = &trace.values[i + 1];
                    grad.iter().zip(out).map(|(g, &y)| g * y * (1.0 - y)).collect()
                }
                LayerSpec::Constant { outputs } => {
                    for (gp, g) in grad_params[offset..offset + outputs].iter_mut().zip(&grad) {
                        *gp += g;
                    }
                    vec![0.0; input.len()]
                }
            };
        }
        Ok(grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer state for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    hyper: AdamParams,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(param_count: usize, hyper: AdamParams) -> Self {
        Self {
            hyper,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let AdamParams { beta1, beta2, epsilon } = self.hyper;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn loss(net: &Mlp, x: &[f64], target: &[f64]) -> f64 {
        net.forward(x)
            .unwrap()
            .iter()
            .zip(target)
            .map(|(y, t)| (y - t).powi(2))
            .sum()
    }

    #[test]
    fn gradients_match_finite_differences_for_every_layer_type() {
        let mut rng = stream(7, Purpose::Init, 0);
        let layers = vec![
            LayerSpec::Dense { inputs: 3, outputs: 4 },
            LayerSpec::Softplus,
            LayerSpec::Dense { inputs: 4, outputs: 2 },
            LayerSpec::Sigmoid,
        ];
        let mut net = Mlp::new(3, layers, &mut rng).unwrap();
        for p in net.params_mut().iter_mut() {
            *p += 0.1;
        }
        let x = [0.3, -0.8, 1.1];
        let target = [0.2, 0.9];
        let trace = net.forward_trace(&x).unwrap();
        let grad_out: Vec<f64> = trace.output().iter().zip(&target).map(|(y, t)| 2.0 * (y - t)).collect();
        let mut gp = vec![0.0; net.params().len()];
        let gx = net.backward(&trace, &grad_out, &mut gp).unwrap();
        let h = 1e-6;
        for (i, &g) in gp.iter().enumerate() {
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            let fd = (loss(&plus, &x, &target) - loss(&minus, &x, &target)) / (2.0 * h);
            assert!((fd - g).abs() < 1e-7, "param {i}: {fd} vs {g}");
        }
        for i in 0..3 {
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            let fd = (loss(&net, &xp, &target) - loss(&net, &xm, &target)) / (2.0 * h);
            assert!((fd - gx[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn constant_layer_ignores_input() {
        let mut rng = stream(1, Purpose::Init, 0);
        let mut net = Mlp::new(5, vec![LayerSpec::Constant { outputs: 1 }], &mut rng).unwrap();
        net.params_mut()[0] = 2.5;
        assert_eq!(net.forward(&[1.0; 5]).unwrap(), vec![2.5]);
        assert_eq!(net.forward(&[0.0; 5]).unwrap(), vec![2.5]);
    }

    #[test]
    fn shape_checks() {
        let mut rng = stream(1, Purpose::Init, 0);
        assert!(Mlp::new(3, vec![LayerSpec::Dense { inputs: 4, outputs: 2 }], &mut rng).is_err());
        let net = Mlp::new(3, vec![LayerSpec::Dense { inputs: 3, outputs: 2 }], &mut rng).unwrap();
        assert!(net.forward(&[1.0, 2.0]).is_err());
        assert!(Mlp::from_params(3, net.layers().to_vec(), vec![0.0; 3]).is_err());
    }

    #[test]
    fn stable_activations() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((sigmoid(-800.0)).is_finite() && sigmoid(800.0) == 1.0);
    }
}
