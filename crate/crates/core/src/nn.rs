//! Fully connected action-value network: input → 64 ReLU → 32 ReLU → |A| linear.
//!
//! All parameters live in one flat vector, layer-major: `W1, b1, W2, b2, W3, b3`,
//! each weight matrix row-major with one row per output unit. Gradients and
//! Adam moments share that layout.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};

pub const HIDDEN1: usize = 64;
pub const HIDDEN2: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerShape {
    inputs: usize,
    outputs: usize,
    /// Offset of the weight block; the bias follows it.
    offset: usize,
}

impl LayerShape {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.inputs * self.outputs
    }

    fn bias(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.inputs * self.outputs;
        start..start + self.outputs
    }

    fn len(&self) -> usize {
        (self.inputs + 1) * self.outputs
    }
}

/// A value network. Cloning yields an independent deep copy.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    layers: [LayerShape; 3],
    params: Vec<f64>,
}

fn shapes(inputs: usize, outputs: usize) -> [LayerShape; 3] {
    let sizes = [inputs, HIDDEN1, HIDDEN2, outputs];
    let mut offset = 0;
    let mut layers = [LayerShape {
        inputs: 0,
        outputs: 0,
        offset: 0,
    }; 3];
    for (i, layer) in layers.iter_mut().enumerate() {
        *layer = LayerShape {
            inputs: sizes[i],
            outputs: sizes[i + 1],
            offset,
        };
        offset += layer.len();
    }
    layers
}

/// Activations kept from a forward pass for backpropagation.
struct Trace {
    h1: [f64; HIDDEN1],
    h2: [f64; HIDDEN2],
}

/// Dot product with eight independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (xa, xb) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += xa[k] * xb[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (o, (row, bias)) in out.iter_mut().zip(w.chunks_exact(n).zip(b)) {
        *o = bias + dot(row, x);
    }
}

impl ValueNet {
    /// Network with every parameter zero.
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        let layers = shapes(inputs, outputs);
        let n = layers.iter().map(LayerShape::len).sum();
        ValueNet {
            layers,
            params: vec![0.0; n],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let mut net = ValueNet::zeros(inputs, outputs);
        for layer in net.layers {
            let bound = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut net.params[layer.weights()] {
                *w = rng.gen_range(-bound..=bound);
            }
        }
        net
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn outputs(&self) -> usize {
        self.layers[2].outputs
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn layer_weights(&self, layer: usize) -> &[f64] {
        &self.params[self.layers[layer].weights()]
    }

    pub fn layer_bias(&self, layer: usize) -> &[f64] {
        &self.params[self.layers[layer].bias()]
    }

    pub fn layer_bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let r = self.layers[layer].bias();
        &mut self.params[r]
    }

    fn check_input(&self, x: &[f64]) {
        assert_eq!(
            x.len(),
            self.inputs(),
            "state has {} features, network expects {}",
            x.len(),
            self.inputs()
        );
    }

    fn forward_trace(&self, x: &[f64], q: &mut [f64]) -> Trace {
        let [l1, l2, l3] = self.layers;
        let p = &self.params;
        let mut trace = Trace {
            h1: [0.0; HIDDEN1],
            h2: [0.0; HIDDEN2],
        };
        affine(&p[l1.weights()], &p[l1.bias()], x, &mut trace.h1);
        trace.h1.iter_mut().for_each(|v| *v = v.max(0.0));
        affine(&p[l2.weights()], &p[l2.bias()], &trace.h1, &mut trace.h2);
        trace.h2.iter_mut().for_each(|v| *v = v.max(0.0));
        affine(&p[l3.weights()], &p[l3.bias()], &trace.h2, q);
        trace
    }

    /// Action values for state `x`.
    ///
    /// Panics when `x` does not match the input width.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.check_input(x);
        let mut q = vec![0.0; self.outputs()];
        self.forward_trace(x, &mut q);
        q
    }

    /// Value of a single action.
    pub fn q_value(&self, x: &[f64], action: usize) -> f64 {
        self.forward(x)[action]
    }

    /// Accumulates `scale * d/dθ (Q(x, action) - target)^2` into `grad`.
    /// Returns the residual `Q(x, action) - target`.
    pub fn accumulate_td_grad(
        &self,
        x: &[f64],
        action: usize,
        target: f64,
        scale: f64,
        grad: &mut [f64],
    ) -> f64 {
        self.check_input(x);
        assert!(action < self.outputs(), "action {action} out of range");
        assert_eq!(grad.len(), self.params.len());
        let [l1, l2, l3] = self.layers;
        let mut q = vec![0.0; self.outputs()];
        let trace = self.forward_trace(x, &mut q);
        let residual = q[action] - target;
        let dq = 2.0 * residual * scale;

        // Output layer: only row `action` receives gradient.
        let w3 = l3.weights().start + action * HIDDEN2;
        for (g, h) in grad[w3..w3 + HIDDEN2].iter_mut().zip(&trace.h2) {
            *g += dq * h;
        }
        grad[l3.bias().start + action] += dq;

        let p = &self.params;
        let mut d2 = [0.0; HIDDEN2];
        for (j, d) in d2.iter_mut().enumerate() {
            if trace.h2[j] > 0.0 {
                *d = dq * p[w3 + j];
            }
        }
        let w2 = l2.weights().start;
        let b2 = l2.bias().start;
        let mut d1 = [0.0; HIDDEN1];
        for (j, &dj) in d2.iter().enumerate() {
            if dj == 0.0 {
                continue;
            }
            let row = w2 + j * HIDDEN1;
            for (i, (g, h)) in grad[row..row + HIDDEN1]
                .iter_mut()
                .zip(&trace.h1)
                .enumerate()
            {
                *g += dj * h;
                d1[i] += dj * p[row + i];
            }
            grad[b2 + j] += dj;
        }
        let n = l1.inputs;
        let w1 = l1.weights().start;
        let b1 = l1.bias().start;
        for (i, &di) in d1.iter().enumerate() {
            if di == 0.0 || trace.h1[i] <= 0.0 {
                continue;
            }
            let row = w1 + i * n;
            for (g, xv) in grad[row..row + n].iter_mut().zip(x) {
                *g += di * xv;
            }
            grad[b1 + i] += di;
        }
        residual
    }

    /// Gradient of the squared TD error `(Q(x, action) - target)^2`.
    pub fn grad_td_loss(&self, x: &[f64], action: usize, target: f64) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.len()];
        self.accumulate_td_grad(x, action, target, 1.0, &mut grad);
        grad
    }

    /// Writes the parameters as text: a `valuenet <in> <h1> <h2> <out>` header
    /// followed by one parameter per line in layer-major order.
    pub fn dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "valuenet {} {} {} {}",
            self.inputs(),
            HIDDEN1,
            HIDDEN2,
            self.outputs()
        )?;
        let mut line = String::new();
        for p in &self.params {
            line.clear();
            let _ = write!(line, "{p:e}");
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let bad = |m: &str| Error::Config(format!("network dump: {m}"));
        let header = lines
            .next()
            .ok_or_else(|| bad("empty input"))?
            .map_err(|e| bad(&e.to_string()))?;
        let dims: Vec<usize> = header
            .strip_prefix("valuenet ")
            .ok_or_else(|| bad("missing header"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("bad dimension")))
            .collect::<Result<_>>()?;
        if dims.len() != 4 || dims[1] != HIDDEN1 || dims[2] != HIDDEN2 {
            return Err(bad("unsupported architecture"));
        }
        let mut net = ValueNet::zeros(dims[0], dims[3]);
        let mut n = 0;
        for line in lines {
            let line = line.map_err(|e| bad(&e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            if n >= net.params.len() {
                return Err(bad("too many parameters"));
            }
            net.params[n] = line.trim().parse().map_err(|_| bad("bad parameter"))?;
            n += 1;
        }
        if n != net.params.len() {
            return Err(bad("too few parameters"));
        }
        Ok(net)
    }
}

/// Adam moments for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, learning_rate: f64) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One bias-corrected Adam update of `params` along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

pub fn adam_step(net: &mut ValueNet, adam: &mut AdamState, grad: &[f64]) {
    adam.step(net.params_mut(), grad);
}
