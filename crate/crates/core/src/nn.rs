//! Dense multi-layer perceptrons with exact reverse-mode gradients.
//!
//! Every network in the learner shares one shape: ELU hidden layers and a
//! linear output layer. Parameters live in a single flat array laid out
//! layer by layer, input to output, each layer as its row-major weight
//! matrix (`out x in`) followed by its bias vector. Checkpoints, Adam and
//! Polyak averaging all operate on that flat view.

use rand::Rng;

use crate::error::{FacError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the pre-activation and activation.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    a + 1.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct LayerSlots {
    weight: usize,
    bias: usize,
    fan_in: usize,
    fan_out: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    layers: Vec<LayerSlots>,
    params: Vec<f64>,
}

/// Gradient of a scalar loss with respect to every parameter of one [`Mlp`],
/// in the same flat layout as [`Mlp::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle(pub Vec<f64>);

impl GradientBundle {
    pub fn zeros(n: usize) -> Self {
        GradientBundle(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }

    pub fn add_assign(&mut self, other: &GradientBundle) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for a in &mut self.0 {
            *a *= k;
        }
    }
}

/// Intermediate values of a batched forward pass, kept for backprop.
#[derive(Clone, Debug)]
pub struct Tape {
    batch: usize,
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Network outputs, row-major `batch x output_dim`.
    pub fn output(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&self.input)
    }
}

fn layout(dims: &[usize]) -> Result<(Vec<LayerSlots>, usize)> {
    if dims.len() < 2 {
        return Err(FacError::InvalidArgument(
            "an mlp needs at least an input and an output width".into(),
        ));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(FacError::InvalidArgument("layer widths must be positive".into()));
    }
    let mut layers = Vec::with_capacity(dims.len() - 1);
    let mut offset = 0;
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weight = offset;
        let bias = weight + fan_in * fan_out;
        offset = bias + fan_out;
        layers.push(LayerSlots {
            weight,
            bias,
            fan_in,
            fan_out,
        });
    }
    Ok((layers, offset))
}

/// `c (m x n) = a (m x k) * b (k x n)` with explicit strides, overwriting `c`.
#[allow(clippy::too_many_arguments)]
#[inline]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
) {
    debug_assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    debug_assert!(c.len() >= m * n);
    // SAFETY: the strides describe in-bounds views of `a`, `b`, `c` (checked above in debug builds
    // and guaranteed by the callers, which derive every stride from the layer shapes).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Mlp {
    /// All-zero network.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let (layers, n) = layout(dims)?;
        Ok(Mlp {
            dims: dims.to_vec(),
            layers,
            params: vec![0.0; n],
        })
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, zero biases.
    pub fn init_uniform<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        for slot in net.layers.clone() {
            let bound = 1.0 / (slot.fan_in as f64).sqrt();
            for w in &mut net.params[slot.weight..slot.bias] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        let (layers, n) = layout(dims)?;
        if params.len() != n {
            return Err(FacError::DimensionMismatch {
                expected: n,
                got: params.len(),
            });
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(FacError::numeric(format!("parameter {i} is not finite")));
        }
        Ok(Mlp {
            dims: dims.to_vec(),
            layers,
            params,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("layout guarantees two widths")
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
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
        let s = self.layers[layer];
        &self.params[s.weight..s.bias]
    }

    pub fn layer_bias(&self, layer: usize) -> &[f64] {
        let s = self.layers[layer];
        &self.params[s.bias..s.bias + s.fan_out]
    }

    pub fn layer_bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let s = self.layers[layer];
        &mut self.params[s.bias..s.bias + s.fan_out]
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            Activation::Linear
        } else {
            Activation::Elu
        }
    }

    fn same_shape(&self, other: &Mlp) -> bool {
        self.dims == other.dims
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(input, 1)?.output().to_vec())
    }

    /// Forward pass over `batch` row-major inputs, keeping the tape.
    pub fn forward_batch(&self, input: &[f64], batch: usize) -> Result<Tape> {
        let expected = batch * self.input_dim();
        if batch == 0 || input.len() != expected {
            return Err(FacError::DimensionMismatch {
                expected,
                got: input.len(),
            });
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (l, slot) in self.layers.iter().enumerate() {
            let x = if l == 0 { input } else { &post[l - 1] };
            let w = &self.params[slot.weight..slot.bias];
            let b = &self.params[slot.bias..slot.bias + slot.fan_out];
            let mut z = vec![0.0; batch * slot.fan_out];
            gemm(
                batch,
                slot.fan_in,
                slot.fan_out,
                x,
                (slot.fan_in, 1),
                w,
                (1, slot.fan_in),
                &mut z,
            );
            for row in z.chunks_exact_mut(slot.fan_out) {
                for (zi, bi) in row.iter_mut().zip(b) {
                    *zi += bi;
                }
            }
            let act = self.activation(l);
            let a = if act == Activation::Linear {
                z.clone()
            } else {
                z.iter().map(|&zi| act.apply(zi)).collect()
            };
            pre.push(z);
            post.push(a);
        }
        Ok(Tape {
            batch,
            input: input.to_vec(),
            pre,
            post,
        })
    }

    /// Name of the first layer whose activations are not all finite.
    fn first_bad_layer(&self, tape: &Tape) -> Option<usize> {
        tape.post
            .iter()
            .position(|a| a.iter().any(|v| !v.is_finite()))
    }

    /// Backpropagates `grad_output` (dL/d output, `batch x output_dim`) through the tape.
    /// Returns parameter gradients and dL/d input.
    pub fn backward(&self, tape: &Tape, grad_output: &[f64]) -> Result<(GradientBundle, Vec<f64>)> {
        let batch = tape.batch;
        if grad_output.len() != batch * self.output_dim() {
            return Err(FacError::DimensionMismatch {
                expected: batch * self.output_dim(),
                got: grad_output.len(),
            });
        }
        let mut grads = GradientBundle::zeros(self.params.len());
        let mut delta: Vec<f64> = grad_output.to_vec();
        for l in (0..self.layers.len()).rev() {
            let slot = self.layers[l];
            let act = self.activation(l);
            if act != Activation::Linear {
                for ((d, &z), &a) in delta.iter_mut().zip(&tape.pre[l]).zip(&tape.post[l]) {
                    *d *= act.derivative(z, a);
                }
            }
            let x = if l == 0 { &tape.input } else { &tape.post[l - 1] };
            gemm(
                slot.fan_out,
                batch,
                slot.fan_in,
                &delta,
                (1, slot.fan_out),
                x,
                (slot.fan_in, 1),
                &mut grads.0[slot.weight..slot.bias],
            );
            let gb = &mut grads.0[slot.bias..slot.bias + slot.fan_out];
            for row in delta.chunks_exact(slot.fan_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            let mut dx = vec![0.0; batch * slot.fan_in];
            gemm(
                batch,
                slot.fan_out,
                slot.fan_in,
                &delta,
                (slot.fan_out, 1),
                &self.params[slot.weight..slot.bias],
                (slot.fan_in, 1),
                &mut dx,
            );
            delta = dx;
        }
        Ok((grads, delta))
    }

    /// Gradient of a scalar batch loss. `loss` maps the `batch x output_dim`
    /// outputs to the loss value and dL/d output (already including any
    /// batch averaging).
    pub fn loss_gradients<F>(&self, input: &[f64], batch: usize, loss: F) -> Result<(f64, GradientBundle)>
    where
        F: FnOnce(&[f64]) -> (f64, Vec<f64>),
    {
        let tape = self.forward_batch(input, batch)?;
        if let Some(l) = self.first_bad_layer(&tape) {
            return Err(FacError::numeric(format!("forward pass, layer {l}")));
        }
        let (value, grad_out) = loss(tape.output());
        if !value.is_finite() {
            let layer = self.first_bad_layer(&tape).unwrap_or(self.layers.len() - 1);
            return Err(FacError::numeric(format!("loss value (output layer {layer})")));
        }
        let (grads, _) = self.backward(&tape, &grad_out)?;
        if !grads.is_finite() {
            let bad = self
                .layers
                .iter()
                .position(|s| grads.0[s.weight..s.bias + s.fan_out].iter().any(|g| !g.is_finite()))
                .unwrap_or(0);
            return Err(FacError::numeric(format!("gradient, layer {bad}")));
        }
        Ok((value, grads))
    }
}

/// Adam moments for one flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            step_count: 0,
        }
    }

    pub fn for_net(net: &Mlp) -> Self {
        Self::new(net.num_params())
    }

    /// One bias-corrected Adam descent step. Refuses non-finite gradients
    /// without touching parameters or moments.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(FacError::ShapeMismatch(format!(
                "adam over {} moments, {} params, {} grads",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        if !(lr > 0.0) {
            return Err(FacError::InvalidArgument(format!("learning rate {lr}")));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(FacError::numeric("adam step: non-finite gradient"));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            let m = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            params[i] -= lr * (m / c1) / ((v / c2).sqrt() + self.epsilon);
        }
        Ok(())
    }
}

pub fn adam_step(net: &mut Mlp, grads: &GradientBundle, opt: &mut AdamState, lr: f64) -> Result<()> {
    opt.step(&mut net.params, &grads.0, lr)
}

/// `target <- tau * online + (1 - tau) * target`.
pub fn polyak_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(FacError::InvalidArgument(format!("tau {tau} outside (0, 1]")));
    }
    if !target.same_shape(online) {
        return Err(FacError::ShapeMismatch(format!(
            "target {:?} vs online {:?}",
            target.dims, online.dims
        )));
    }
    if tau == 1.0 {
        target.params.copy_from_slice(&online.params);
        return Ok(());
    }
    for (t, o) in target.params.iter_mut().zip(&online.params) {
        *t = tau * o + (1.0 - tau) * *t;
    }
    Ok(())
}
