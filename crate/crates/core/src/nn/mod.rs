//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! All parameters of a [`Network`] live in one contiguous `Vec<f64>`; layers
//! address it through offsets. This makes flat parameter access, perturbation
//! and optimizer steps trivial. Per layer the flat order is
//! weights (row-major `out × in`), bias, then layer-norm gain and shift.
//!
//! A network may take a *side input* that is concatenated to the input of one
//! layer. The DDPG critic uses this to feed the action into its second layer.

mod adam;
mod gemm;
mod layer_norm;
mod params;

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

pub use adam::Adam;
pub use layer_norm::{layer_norm, LAYER_NORM_EPS};
pub use params::{ParamVector, Slot, TensorKind};

use crate::error::{check_finite, check_len, Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
    Softmax,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
            Activation::Softmax => "softmax",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "linear" => Ok(Activation::Linear),
            "softmax" => Ok(Activation::Softmax),
            other => Err(Error::InvalidArgument(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerConfig {
    pub units: usize,
    pub activation: Activation,
    pub layer_norm: bool,
}

/// Extra input concatenated after the regular input of layer `layer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SideInput {
    pub layer: usize,
    pub dim: usize,
}

/// Shape-only description of a network; enough to rebuild it from a flat
/// parameter list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub side_input: Option<SideInput>,
    pub layers: Vec<LayerConfig>,
}

impl Architecture {
    pub fn mlp(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        hidden_activation: Activation,
        output_activation: Activation,
        use_layer_norm: bool,
    ) -> Self {
        let mut layers: Vec<LayerConfig> = hidden
            .iter()
            .map(|&units| LayerConfig {
                units,
                activation: hidden_activation,
                layer_norm: use_layer_norm,
            })
            .collect();
        layers.push(LayerConfig {
            units: output_dim,
            activation: output_activation,
            layer_norm: false,
        });
        Self {
            input_dim,
            side_input: None,
            layers,
        }
    }

    pub fn with_side_input(mut self, layer: usize, dim: usize) -> Self {
        self.side_input = Some(SideInput { layer, dim });
        self
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidConfig("input dimension must be >= 1".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one layer".into()));
        }
        if let Some(l) = self.layers.iter().find(|l| l.units == 0) {
            return Err(Error::InvalidConfig(format!(
                "layer width must be >= 1 (got {})",
                l.units
            )));
        }
        if let Some(side) = self.side_input {
            if side.dim == 0 || side.layer >= self.layers.len() {
                return Err(Error::InvalidConfig(format!(
                    "side input {}@{} does not fit {} layers",
                    side.dim,
                    side.layer,
                    self.layers.len()
                )));
            }
        }
        Ok(())
    }

    fn layer_in_dim(&self, k: usize) -> usize {
        let base = if k == 0 {
            self.input_dim
        } else {
            self.layers[k - 1].units
        };
        match self.side_input {
            Some(side) if side.layer == k => base + side.dim,
            _ => base,
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "in={}", self.input_dim)?;
        if let Some(side) = self.side_input {
            write!(f, ";side={}@{}", side.dim, side.layer)?;
        }
        f.write_str(";")?;
        for (i, l) in self.layers.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", l.units, l.activation.name())?;
            if l.layer_norm {
                f.write_str(":ln")?;
            }
        }
        Ok(())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("malformed architecture {s:?}"));
        let mut parts = s.split(';');
        let input_dim = parts
            .next()
            .and_then(|p| p.strip_prefix("in="))
            .and_then(|p| p.parse().ok())
            .ok_or_else(bad)?;
        let mut side_input = None;
        let mut layer_part = parts.next().ok_or_else(bad)?;
        if let Some(side) = layer_part.strip_prefix("side=") {
            let (dim, layer) = side.split_once('@').ok_or_else(bad)?;
            side_input = Some(SideInput {
                dim: dim.parse().map_err(|_| bad())?,
                layer: layer.parse().map_err(|_| bad())?,
            });
            layer_part = parts.next().ok_or_else(bad)?;
        }
        if parts.next().is_some() {
            return Err(bad());
        }
        let layers = layer_part
            .split(',')
            .map(|l| {
                let fields: Vec<&str> = l.split(':').collect();
                let (units, act, ln) = match fields.as_slice() {
                    [u, a] => (u, a, false),
                    [u, a, "ln"] => (u, a, true),
                    _ => return Err(bad()),
                };
                Ok(LayerConfig {
                    units: units.parse().map_err(|_| bad())?,
                    activation: act.parse()?,
                    layer_norm: ln,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let arch = Architecture {
            input_dim,
            side_input,
            layers,
        };
        arch.validate()?;
        Ok(arch)
    }
}

#[derive(Debug, Clone)]
struct LayerGeom {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    weight: usize,
    bias: usize,
    /// Offset of the layer-norm gain; the shift follows immediately after.
    norm: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Network {
    arch: Architecture,
    geom: Vec<LayerGeom>,
    layout: Vec<Slot>,
    params: Vec<f64>,
}

/// Intermediate values of a batched forward pass, kept for [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    batch: usize,
    inputs: Vec<Vec<f64>>,
    xhat: Vec<Vec<f64>>,
    inv_std: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Network output, row-major `batch × output_dim`.
    pub fn output(&self) -> &[f64] {
        self.outputs.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn into_output(mut self) -> Vec<f64> {
        self.outputs.pop().unwrap_or_default()
    }
}

/// Gradients with respect to the network inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct InputGrads {
    pub input: Vec<f64>,
    pub side: Option<Vec<f64>>,
}

impl Network {
    /// Builds a network with weights and biases drawn uniformly from
    /// `±1/sqrt(fan_in)`, unit layer-norm gains and zero shifts.
    pub fn new(arch: Architecture, rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeroed(arch)?;
        for g in &net.geom {
            let limit = 1.0 / (g.in_dim as f64).sqrt();
            for p in &mut net.params[g.weight..g.bias + g.out_dim] {
                *p = rng.random_range(-limit..limit);
            }
            if let Some(gain) = g.norm {
                net.params[gain..gain + g.out_dim].fill(1.0);
            }
        }
        Ok(net)
    }

    /// Builds a network whose parameters are all zero (layer-norm gains too).
    pub fn zeroed(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let mut geom = Vec::with_capacity(arch.layers.len());
        let mut layout = Vec::new();
        let mut offset = 0;
        for (k, l) in arch.layers.iter().enumerate() {
            let in_dim = arch.layer_in_dim(k);
            let out_dim = l.units;
            let weight = offset;
            let bias = weight + in_dim * out_dim;
            layout.push(Slot {
                layer: k,
                kind: TensorKind::Weight,
                range: weight..bias,
            });
            layout.push(Slot {
                layer: k,
                kind: TensorKind::Bias,
                range: bias..bias + out_dim,
            });
            offset = bias + out_dim;
            let norm = if l.layer_norm {
                layout.push(Slot {
                    layer: k,
                    kind: TensorKind::NormGain,
                    range: offset..offset + out_dim,
                });
                layout.push(Slot {
                    layer: k,
                    kind: TensorKind::NormShift,
                    range: offset + out_dim..offset + 2 * out_dim,
                });
                let gain = offset;
                offset += 2 * out_dim;
                Some(gain)
            } else {
                None
            };
            geom.push(LayerGeom {
                in_dim,
                out_dim,
                activation: l.activation,
                weight,
                bias,
                norm,
            });
        }
        Ok(Self {
            arch,
            geom,
            layout,
            params: vec![0.0; offset],
        })
    }

    pub fn from_params(arch: Architecture, values: &[f64]) -> Result<Self> {
        let mut net = Self::zeroed(arch)?;
        check_len("network parameters", net.params.len(), values.len())?;
        net.params.copy_from_slice(values);
        Ok(net)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn side_dim(&self) -> usize {
        self.arch.side_input.map_or(0, |s| s.dim)
    }

    pub fn output_dim(&self) -> usize {
        self.geom.last().map_or(0, |g| g.out_dim)
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn layout(&self) -> &[Slot] {
        &self.layout
    }

    pub fn param_values(&self) -> &[f64] {
        &self.params
    }

    pub fn param_values_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Flat copy of all parameters with an all-true perturbation mask.
    pub fn params(&self) -> ParamVector {
        ParamVector::new(self.params.clone(), self.layout.clone())
            .expect("layout always covers the parameter buffer")
    }

    pub fn set_params(&mut self, p: &ParamVector) -> Result<()> {
        check_len("parameter vector", self.params.len(), p.len())?;
        if p.layout() != self.layout.as_slice() {
            return Err(Error::InvalidArgument(
                "parameter layout does not match network".into(),
            ));
        }
        self.params.copy_from_slice(p.values());
        Ok(())
    }

    pub fn copy_params_from(&mut self, other: &Network) -> Result<()> {
        check_len("parameter copy", self.params.len(), other.params.len())?;
        self.params.copy_from_slice(&other.params);
        Ok(())
    }

    /// `self ← τ·source + (1 − τ)·self`.
    pub fn soft_update_from(&mut self, source: &Network, tau: f64) -> Result<()> {
        check_len("soft update", self.params.len(), source.params.len())?;
        if tau == 1.0 {
            self.params.copy_from_slice(&source.params);
        } else if tau != 0.0 {
            for (t, &s) in self.params.iter_mut().zip(&source.params) {
                *t = tau * s + (1.0 - tau) * *t;
            }
        }
        Ok(())
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(input, None, 1)?.into_output())
    }

    pub fn forward_with_side(&self, input: &[f64], side: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(input, Some(side), 1)?.into_output())
    }

    /// Batched forward pass over `batch` row-major samples.
    pub fn forward_batch(&self, input: &[f64], side: Option<&[f64]>, batch: usize) -> Result<Tape> {
        check_len("network input", batch * self.arch.input_dim, input.len())?;
        check_finite("network input", input)?;
        match (self.arch.side_input, side) {
            (Some(s), Some(v)) => {
                check_len("network side input", batch * s.dim, v.len())?;
                check_finite("network side input", v)?;
            }
            (None, None) => {}
            (Some(s), None) => {
                return Err(Error::DimensionMismatch {
                    what: "network side input",
                    expected: batch * s.dim,
                    got: 0,
                })
            }
            (None, Some(v)) => {
                return Err(Error::DimensionMismatch {
                    what: "network side input",
                    expected: 0,
                    got: v.len(),
                })
            }
        }

        let n_layers = self.geom.len();
        let mut tape = Tape {
            batch,
            inputs: Vec::with_capacity(n_layers),
            xhat: Vec::with_capacity(n_layers),
            inv_std: Vec::with_capacity(n_layers),
            outputs: Vec::with_capacity(n_layers),
        };
        let mut x = input.to_vec();
        for (k, g) in self.geom.iter().enumerate() {
            if let (Some(s), Some(v)) = (self.arch.side_input, side) {
                if s.layer == k {
                    x = concat_rows(&x, g.in_dim - s.dim, v, s.dim, batch);
                }
            }
            let out = g.out_dim;
            let mut z = Vec::with_capacity(batch * out);
            for _ in 0..batch {
                z.extend_from_slice(&self.params[g.bias..g.bias + out]);
            }
            gemm::a_bt(
                batch,
                g.in_dim,
                out,
                &x,
                &self.params[g.weight..g.bias],
                1.0,
                &mut z,
            );

            let (xhat, inv) = if let Some(gain) = g.norm {
                let gains = &self.params[gain..gain + out];
                let shifts = &self.params[gain + out..gain + 2 * out];
                let mut xhat = vec![0.0; batch * out];
                let mut inv = Vec::with_capacity(batch);
                for (zr, hr) in z.chunks_exact_mut(out).zip(xhat.chunks_exact_mut(out)) {
                    inv.push(layer_norm::normalize(zr, LAYER_NORM_EPS, hr));
                    for ((zv, &h), (&gv, &sv)) in
                        zr.iter_mut().zip(hr.iter()).zip(gains.iter().zip(shifts))
                    {
                        *zv = gv * h + sv;
                    }
                }
                (xhat, inv)
            } else {
                (Vec::new(), Vec::new())
            };

            apply_activation(g.activation, &mut z, out);
            tape.inputs.push(x);
            tape.xhat.push(xhat);
            tape.inv_std.push(inv);
            x = z.clone();
            tape.outputs.push(z);
        }
        check_finite("network output", tape.output())?;
        Ok(tape)
    }

    /// Reverse pass for a tape produced by [`Network::forward_batch`].
    ///
    /// Parameter gradients of `Σ_b output_b · out_grad_b` are *added* into
    /// `grads` when given; input gradients are always returned.
    pub fn backward(
        &self,
        tape: &Tape,
        out_grad: &[f64],
        mut grads: Option<&mut [f64]>,
    ) -> Result<InputGrads> {
        let batch = tape.batch;
        check_len("output gradient", batch * self.output_dim(), out_grad.len())?;
        if let Some(g) = grads.as_deref() {
            check_len("gradient buffer", self.params.len(), g.len())?;
        }
        let mut dy = out_grad.to_vec();
        let mut side_grad = None;
        for (k, g) in self.geom.iter().enumerate().rev() {
            let out = g.out_dim;
            let y = &tape.outputs[k];
            activation_backward(g.activation, y, &mut dy, out);

            if let Some(gain) = g.norm {
                let xhat = &tape.xhat[k];
                let inv = &tape.inv_std[k];
                let n = out as f64;
                let gains = &self.params[gain..gain + out];
                for (row, da) in dy.chunks_exact_mut(out).enumerate() {
                    let hr = &xhat[row * out..(row + 1) * out];
                    if let Some(gr) = grads.as_deref_mut() {
                        let (dg, ds) = gr[gain..gain + 2 * out].split_at_mut(out);
                        for j in 0..out {
                            dg[j] += da[j] * hr[j];
                            ds[j] += da[j];
                        }
                    }
                    let mut sum = 0.0;
                    let mut sum_h = 0.0;
                    for j in 0..out {
                        let dh = da[j] * gains[j];
                        da[j] = dh;
                        sum += dh;
                        sum_h += dh * hr[j];
                    }
                    let scale = inv[row] / n;
                    for j in 0..out {
                        da[j] = scale * (n * da[j] - sum - hr[j] * sum_h);
                    }
                }
            }

            if let Some(gr) = grads.as_deref_mut() {
                gemm::at_b(
                    out,
                    batch,
                    g.in_dim,
                    &dy,
                    &tape.inputs[k],
                    1.0,
                    &mut gr[g.weight..g.bias],
                );
                let db = &mut gr[g.bias..g.bias + out];
                for row in dy.chunks_exact(out) {
                    for (d, &v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
            }

            let mut dx = vec![0.0; batch * g.in_dim];
            gemm::a_b(
                batch,
                out,
                g.in_dim,
                &dy,
                &self.params[g.weight..g.bias],
                0.0,
                &mut dx,
            );
            match self.arch.side_input {
                Some(s) if s.layer == k => {
                    let (main, side) = split_rows(&dx, g.in_dim - s.dim, s.dim, batch);
                    side_grad = Some(side);
                    dy = main;
                }
                _ => dy = dx,
            }
        }
        check_finite("input gradient", &dy)?;
        if let Some(g) = grads.as_deref() {
            check_finite("parameter gradient", g)?;
        }
        Ok(InputGrads {
            input: dy,
            side: side_grad,
        })
    }

    /// Gradient of `output(input) · output_grad` with respect to every
    /// parameter, for a single sample.
    pub fn backward_grads(&self, input: &[f64], output_grad: &[f64]) -> Result<Vec<f64>> {
        let tape = self.forward_batch(input, None, 1)?;
        let mut grads = vec![0.0; self.params.len()];
        self.backward(&tape, output_grad, Some(&mut grads))?;
        Ok(grads)
    }
}

/// Convenience constructor for a plain multi-layer perceptron.
pub fn build_mlp(
    input_dim: usize,
    hidden: &[usize],
    output_dim: usize,
    hidden_activation: Activation,
    output_activation: Activation,
    use_layer_norm: bool,
    seed: u64,
) -> Result<Network> {
    let arch = Architecture::mlp(
        input_dim,
        hidden,
        output_dim,
        hidden_activation,
        output_activation,
        use_layer_norm,
    );
    let mut rng = rng::stream(seed, rng::Stream::Init);
    Network::new(arch, &mut rng)
}

fn apply_activation(act: Activation, z: &mut [f64], width: usize) {
    match act {
        Activation::Linear => {}
        Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
        Activation::Softmax => {
            for row in z.chunks_exact_mut(width) {
                softmax_in_place(row);
            }
        }
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Turns `dy` (gradient w.r.t. the activation output) into the gradient
/// w.r.t. its input, given the activation output `y`.
fn activation_backward(act: Activation, y: &[f64], dy: &mut [f64], width: usize) {
    match act {
        Activation::Linear => {}
        Activation::Relu => {
            for (d, &v) in dy.iter_mut().zip(y) {
                if v <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        Activation::Tanh => {
            for (d, &v) in dy.iter_mut().zip(y) {
                *d *= 1.0 - v * v;
            }
        }
        Activation::Softmax => {
            for (dr, yr) in dy.chunks_exact_mut(width).zip(y.chunks_exact(width)) {
                let dot: f64 = dr.iter().zip(yr).map(|(d, p)| d * p).sum();
                for (d, &p) in dr.iter_mut().zip(yr) {
                    *d = p * (*d - dot);
                }
            }
        }
    }
}

fn concat_rows(a: &[f64], a_dim: usize, b: &[f64], b_dim: usize, batch: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(batch * (a_dim + b_dim));
    for r in 0..batch {
        out.extend_from_slice(&a[r * a_dim..(r + 1) * a_dim]);
        out.extend_from_slice(&b[r * b_dim..(r + 1) * b_dim]);
    }
    out
}

fn split_rows(x: &[f64], a_dim: usize, b_dim: usize, batch: usize) -> (Vec<f64>, Vec<f64>) {
    let width = a_dim + b_dim;
    let mut a = Vec::with_capacity(batch * a_dim);
    let mut b = Vec::with_capacity(batch * b_dim);
    for row in x.chunks_exact(width).take(batch) {
        a.extend_from_slice(&row[..a_dim]);
        b.extend_from_slice(&row[a_dim..]);
    }
    (a, b)
}

