use super::layers::{self, ConvGeom, Shape};
use super::{RegressorError, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv { out_channels: usize, kernel: usize, stride: usize },
    /// conv3×3 → ReLU → conv3×3, plus the identity skip, then ReLU.
    ResidualBlock { channels: usize },
    Relu,
    GlobalAveragePool,
    /// Fully connected over the flattened input.
    Dense { out_dim: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_size: usize,
    pub layers: Vec<LayerSpec>,
    /// Indices of layers whose parameters are held fixed and excluded from gradients.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frozen: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        use LayerSpec::*;
        Self {
            input_size: 32,
            layers: vec![
                Conv { out_channels: 8, kernel: 3, stride: 1 },
                Relu,
                ResidualBlock { channels: 8 },
                Conv { out_channels: 16, kernel: 3, stride: 2 },
                Relu,
                GlobalAveragePool,
                Dense { out_dim: 1 },
            ],
            frozen: vec![],
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Conv(ConvGeom),
    Residual(ConvGeom),
    Relu,
    Gap,
    Dense { n_in: usize, n_out: usize },
}

/// Flat parameter vector with per-layer offsets: layer `i` owns `values[offsets[i]..offsets[i + 1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub values: Vec<f64>,
    pub offsets: Vec<usize>,
}

impl Weights {
    pub fn layer(&self, i: usize) -> &[f64] {
        &self.values[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// A validated configuration with resolved shapes and parameter layout.
#[derive(Debug, Clone)]
pub struct Network {
    cfg: ModelConfig,
    ops: Vec<Op>,
    /// `shapes[i]` is the input of layer `i`; the last entry is the output.
    shapes: Vec<Shape>,
    offsets: Vec<usize>,
    trainable: Vec<bool>,
}

/// Activations recorded by a forward pass.
pub struct Tape {
    /// Input of each layer, then the network output.
    acts: Vec<Vec<f64>>,
    /// For residual layers: pre-activation of the inner conv and the skip sum.
    inner: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

impl Tape {
    pub fn output(&self) -> f64 {
        self.acts.last().expect("nonempty")[0]
    }
}

impl Network {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        let bad = |msg: String| RegressorError::InvalidConfig(msg);
        if cfg.input_size == 0 || cfg.layers.is_empty() {
            return Err(bad("empty input or layer list".into()));
        }
        let mut shape = Shape { c: 1, h: cfg.input_size, w: cfg.input_size };
        let mut shapes = vec![shape];
        let mut ops = Vec::new();
        let mut offsets = vec![0];
        for (i, spec) in cfg.layers.iter().enumerate() {
            let (op, n_params) = match *spec {
                LayerSpec::Conv { out_channels, kernel, stride } => {
                    if out_channels == 0 {
                        return Err(bad(format!("layer {i}: zero channels")));
                    }
                    let g = ConvGeom::new(shape, out_channels, kernel, stride)
                        .ok_or_else(|| bad(format!("layer {i}: kernel {kernel}/stride {stride} does not fit {shape:?}")))?;
                    (Op::Conv(g), g.n_params())
                }
                LayerSpec::ResidualBlock { channels } => {
                    if channels != shape.c {
                        return Err(bad(format!("layer {i}: residual block of {channels} channels on {} input channels", shape.c)));
                    }
                    let g = ConvGeom::new(shape, channels, 3, 1).ok_or_else(|| bad(format!("layer {i}: input too small")))?;
                    (Op::Residual(g), 2 * g.n_params())
                }
                LayerSpec::Relu => (Op::Relu, 0),
                LayerSpec::GlobalAveragePool => (Op::Gap, 0),
                LayerSpec::Dense { out_dim } => {
                    if out_dim == 0 {
                        return Err(bad(format!("layer {i}: zero outputs")));
                    }
                    (Op::Dense { n_in: shape.len(), n_out: out_dim }, shape.len() * out_dim + out_dim)
                }
            };
            shape = match op {
                Op::Conv(g) | Op::Residual(g) => g.out_shape(),
                Op::Relu => shape,
                Op::Gap => Shape { c: shape.c, h: 1, w: 1 },
                Op::Dense { n_out, .. } => Shape { c: n_out, h: 1, w: 1 },
            };
            ops.push(op);
            shapes.push(shape);
            offsets.push(offsets.last().unwrap() + n_params);
        }
        if shape.len() != 1 {
            return Err(bad(format!("network output has {} values, expected 1", shape.len())));
        }
        if let Some(&f) = cfg.frozen.iter().find(|&&f| f >= cfg.layers.len()) {
            return Err(bad(format!("frozen layer {f} does not exist")));
        }
        let trainable = (0..ops.len()).map(|i| !cfg.frozen.contains(&i)).collect();
        Ok(Self { cfg: cfg.clone(), ops, shapes, offsets, trainable })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn n_params(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Number of entries in the gradient vector (frozen layers excluded).
    pub fn n_trainable(&self) -> usize {
        (0..self.ops.len()).filter(|&i| self.trainable[i]).map(|i| self.offsets[i + 1] - self.offsets[i]).sum()
    }

    pub fn zero_weights(&self) -> Weights {
        Weights { values: vec![0.0; self.n_params()], offsets: self.offsets.clone() }
    }

    /// Glorot-uniform weights in ±sqrt(6 / (fan_in + fan_out)); zero biases.
    pub fn init_weights<R: Rng>(&self, rng: &mut R) -> Weights {
        let mut w = self.zero_weights();
        let mut fill = |vals: &mut [f64], fan_in: usize, fan_out: usize| {
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in vals {
                *v = rng.random_range(-s..=s);
            }
        };
        for (i, op) in self.ops.iter().enumerate() {
            let p = &mut w.values[self.offsets[i]..self.offsets[i + 1]];
            match *op {
                Op::Conv(g) => fill(&mut p[..g.n_weights()], g.in_c * g.k * g.k, g.out_c * g.k * g.k),
                Op::Residual(g) => {
                    let (a, b) = p.split_at_mut(g.n_params());
                    fill(&mut a[..g.n_weights()], g.in_c * 9, g.out_c * 9);
                    fill(&mut b[..g.n_weights()], g.in_c * 9, g.out_c * 9);
                }
                Op::Dense { n_in, n_out } => fill(&mut p[..n_in * n_out], n_in, n_out),
                Op::Relu | Op::Gap => {}
            }
        }
        w
    }

    fn check(&self, w: &Weights, pixels: &[f64]) -> Result<()> {
        if w.values.len() != self.n_params() || w.offsets != self.offsets {
            return Err(RegressorError::ShapeMismatch { expected: self.n_params(), got: w.values.len() });
        }
        if pixels.len() != self.shapes[0].len() {
            return Err(RegressorError::ShapeMismatch { expected: self.shapes[0].len(), got: pixels.len() });
        }
        Ok(())
    }

    pub fn forward_tape(&self, w: &Weights, pixels: &[f64]) -> Result<Tape> {
        self.check(w, pixels)?;
        let mut acts = Vec::with_capacity(self.ops.len() + 1);
        let mut inner = Vec::with_capacity(self.ops.len());
        acts.push(pixels.to_vec());
        for (i, op) in self.ops.iter().enumerate() {
            let x = acts.last().unwrap();
            let p = w.layer(i);
            let mut out = vec![0.0; self.shapes[i + 1].len()];
            let mut extra = None;
            match *op {
                Op::Conv(g) => g.forward(p, x, &mut out),
                Op::Residual(g) => {
                    let (p1, p2) = p.split_at(g.n_params());
                    let mut z1 = vec![0.0; out.len()];
                    g.forward(p1, x, &mut z1);
                    let mut a1 = vec![0.0; out.len()];
                    layers::relu_forward(&z1, &mut a1);
                    let mut sum = vec![0.0; out.len()];
                    g.forward(p2, &a1, &mut sum);
                    for (s, &v) in sum.iter_mut().zip(x) {
                        *s += v;
                    }
                    layers::relu_forward(&sum, &mut out);
                    extra = Some((z1, sum));
                }
                Op::Relu => layers::relu_forward(x, &mut out),
                Op::Gap => layers::gap_forward(self.shapes[i], x, &mut out),
                Op::Dense { n_in, n_out } => layers::dense_forward(n_in, n_out, p, x, &mut out),
            }
            acts.push(out);
            inner.push(extra);
        }
        Ok(Tape { acts, inner })
    }

    pub fn forward(&self, w: &Weights, pixels: &[f64]) -> Result<f64> {
        Ok(self.forward_tape(w, pixels)?.output())
    }

    /// Adds `dloss/doutput · doutput/dparams` into `grad` (full parameter layout).
    pub(crate) fn backward_into(&self, w: &Weights, tape: &Tape, dout: f64, grad: &mut [f64]) {
        let mut g = vec![dout];
        for i in (0..self.ops.len()).rev() {
            let x = &tape.acts[i];
            let p = w.layer(i);
            let gp = if self.trainable[i] { Some(&mut grad[self.offsets[i]..self.offsets[i + 1]]) } else { None };
            let need_gin = i > 0;
            let mut gin = vec![0.0; x.len()];
            match self.ops[i] {
                Op::Conv(conv) => conv.backward(p, x, &g, gp, need_gin.then_some(&mut gin[..])),
                Op::Residual(conv) => {
                    let (z1, sum) = tape.inner[i].as_ref().expect("residual tape");
                    let mut gsum = vec![0.0; sum.len()];
                    layers::relu_backward(sum, &g, &mut gsum);
                    let mut a1 = vec![0.0; z1.len()];
                    layers::relu_forward(z1, &mut a1);
                    let (p1, p2) = p.split_at(conv.n_params());
                    let (gp1, gp2) = match gp {
                        Some(gp) => {
                            let (a, b) = gp.split_at_mut(conv.n_params());
                            (Some(a), Some(b))
                        }
                        None => (None, None),
                    };
                    let mut ga1 = vec![0.0; a1.len()];
                    conv.backward(p2, &a1, &gsum, gp2, Some(&mut ga1));
                    let mut gz1 = vec![0.0; z1.len()];
                    layers::relu_backward(z1, &ga1, &mut gz1);
                    gin.copy_from_slice(&gsum);
                    conv.backward(p1, x, &gz1, gp1, Some(&mut gin));
                }
                Op::Relu => layers::relu_backward(x, &g, &mut gin),
                Op::Gap => layers::gap_backward(self.shapes[i], &g, &mut gin),
                Op::Dense { n_in, n_out } => layers::dense_backward(n_in, n_out, p, x, &g, gp, &mut gin),
            }
            g = gin;
        }
    }

    /// Gradient of the network output itself, restricted to trainable parameters.
    pub fn output_gradient(&self, w: &Weights, pixels: &[f64]) -> Result<Vec<f64>> {
        let tape = self.forward_tape(w, pixels)?;
        let mut grad = vec![0.0; self.n_params()];
        self.backward_into(w, &tape, 1.0, &mut grad);
        Ok(self.trainable_part(&grad))
    }

    /// Mean absolute error over a batch and its exact gradient with respect to the
    /// trainable parameters. The subgradient of |r| at r = 0 is taken as 0.
    pub fn mae_gradient(&self, w: &Weights, inputs: &[&[f64]], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
        if inputs.is_empty() {
            return Err(RegressorError::EmptyBatch);
        }
        if inputs.len() != targets.len() {
            return Err(RegressorError::ShapeMismatch { expected: inputs.len(), got: targets.len() });
        }
        let n = inputs.len() as f64;
        let mut grad = vec![0.0; self.n_params()];
        let mut loss = 0.0;
        for (x, &t) in inputs.iter().zip(targets) {
            let tape = self.forward_tape(w, x)?;
            let r = tape.output() - t;
            loss += r.abs();
            let sign = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            };
            if sign != 0.0 {
                self.backward_into(w, &tape, sign / n, &mut grad);
            }
        }
        Ok((loss / n, self.trainable_part(&grad)))
    }

    fn trainable_part(&self, full: &[f64]) -> Vec<f64> {
        (0..self.ops.len())
            .filter(|&i| self.trainable[i])
            .flat_map(|i| full[self.offsets[i]..self.offsets[i + 1]].iter().copied())
            .collect()
    }

    /// `w ← w − step · grad` over the trainable parameters.
    pub fn apply_step(&self, w: &mut Weights, grad: &[f64], step: f64) {
        let mut k = 0;
        for i in (0..self.ops.len()).filter(|&i| self.trainable[i]) {
            for v in &mut w.values[self.offsets[i]..self.offsets[i + 1]] {
                *v -= step * grad[k];
                k += 1;
            }
        }
    }

    /// Sign pattern of every ReLU input; equal patterns mean the network is
    /// smooth (piecewise linear piece unchanged) between two weight settings.
    pub fn activation_pattern(&self, w: &Weights, pixels: &[f64]) -> Result<Vec<bool>> {
        let tape = self.forward_tape(w, pixels)?;
        let mut pattern = Vec::new();
        for (i, op) in self.ops.iter().enumerate() {
            match op {
                Op::Relu => pattern.extend(tape.acts[i].iter().map(|&v| v > 0.0)),
                Op::Residual(_) => {
                    let (z1, sum) = tape.inner[i].as_ref().unwrap();
                    pattern.extend(z1.iter().chain(sum).map(|&v| v > 0.0));
                }
                _ => {}
            }
        }
        Ok(pattern)
    }

    /// Range of entries in the gradient vector belonging to layer `i`, if trainable.
    pub fn gradient_range(&self, i: usize) -> Option<std::ops::Range<usize>> {
        if !self.trainable[i] {
            return None;
        }
        let start: usize = (0..i).filter(|&j| self.trainable[j]).map(|j| self.offsets[j + 1] - self.offsets[j]).sum();
        Some(start..start + self.offsets[i + 1] - self.offsets[i])
    }

    /// Full-layout index of trainable gradient entry `k`.
    pub fn param_index(&self, k: usize) -> usize {
        let mut k = k;
        for i in (0..self.ops.len()).filter(|&i| self.trainable[i]) {
            let len = self.offsets[i + 1] - self.offsets[i];
            if k < len {
                return self.offsets[i] + k;
            }
            k -= len;
        }
        panic!("gradient index out of range");
    }
}
