//! Small dense networks with hand-written backprop, and the AdamW optimizer.
//!
//! Everything is `f64` and single-threaded so that training is bit-for-bit
//! reproducible under a fixed seed.

use rand::Rng;

/// Fully connected layer, `y = W x + b`, with `W` stored row-major
/// (`out_dim` rows of `in_dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Uniform init with bound `sqrt(6 / fan_in)` (He), zero bias.
    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = (6.0 / in_dim as f64).sqrt();
        let weight = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Dense {
            in_dim,
            out_dim,
            weight,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        self.weight
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| b + dot(row, x))
            .collect()
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], grad_out: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.in_dim];
        for (o, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut grad.weight[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += g * x[i];
                grad_in[i] += g * row[i];
            }
        }
        grad_in
    }
}

/// ReLU MLP with a linear output layer. `dims = [in, h1, ..., out]`; a
/// single-element `dims` is the identity map.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Inputs to every layer (the last entry is the network output).
pub struct Trace {
    pub activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace holds the input")
    }
}

impl Mlp {
    pub fn new<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        Mlp {
            layers: dims
                .windows(2)
                .map(|w| Dense::init(w[0], w[1], rng))
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    pub fn identity() -> Self {
        Mlp { layers: Vec::new() }
    }

    pub fn dims(&self) -> Option<Vec<usize>> {
        let first = self.layers.first()?;
        let mut d = vec![first.in_dim];
        d.extend(self.layers.iter().map(|l| l.out_dim));
        Some(d)
    }

    pub fn in_dim(&self) -> Option<usize> {
        self.layers.first().map(|l| l.in_dim)
    }

    pub fn out_dim(&self) -> Option<usize> {
        self.layers.last().map(|l| l.out_dim)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if i < last {
                relu(&mut h);
            }
        }
        h
    }

    pub fn forward_trace(&self, x: &[f64]) -> Trace {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            let mut h = layer.forward(activations.last().unwrap());
            if i < last {
                relu(&mut h);
            }
            activations.push(h);
        }
        Trace { activations }
    }

    /// Backprop through a recorded forward pass; accumulates into `grads`
    /// and returns the gradient with respect to the input.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], grads: &mut Mlp) -> Vec<f64> {
        let mut g = grad_out.to_vec();
        let last = self.layers.len().saturating_sub(1);
        for i in (0..self.layers.len()).rev() {
            if i < last {
                // Post-ReLU activation is zero exactly where the unit was off.
                for (gj, aj) in g.iter_mut().zip(&trace.activations[i + 1]) {
                    if *aj <= 0.0 {
                        *gj = 0.0;
                    }
                }
            }
            g = self.layers[i].backward(&trace.activations[i], &g, &mut grads.layers[i]);
        }
        g
    }

    /// Parameter buffers in a fixed order: `(weight, bias)` per layer.
    pub fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    /// Decay mask matching [`Mlp::params`]: weights decay, biases do not.
    pub fn decay_mask(&self) -> Vec<bool> {
        self.layers.iter().flat_map(|_| [true, false]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|x| x.is_finite()))
    }
}

fn relu(h: &mut [f64]) {
    for x in h {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamWConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamWConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// Adam with decoupled weight decay. Buffers are matched to parameters by
/// position, so callers must pass them in the same order every step.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        AdamW {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], decay: &[bool]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), decay.len());
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let wd = if decay[k] { c.lr * c.weight_decay } else { 0.0 };
            for i in 0..p.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= wd * p[i] + c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
    }
}
