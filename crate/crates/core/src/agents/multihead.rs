//! A shared trunk feeding several independent output heads.

use crate::error::{check_len, Error, Result};
use crate::nn::{Activation, Adam, Architecture, LayerConfig, Network, ParamVector, Tape, TensorKind};
use crate::noise::perturb;
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct MultiHeadNet {
    trunk: Network,
    heads: Vec<Network>,
}

/// Forward record of the trunk and of the heads that were evaluated.
#[derive(Debug)]
pub struct MultiTape {
    trunk: Tape,
    heads: Vec<Option<Tape>>,
}

impl MultiTape {
    pub fn head_output(&self, head: usize) -> &[f64] {
        self.heads[head].as_ref().map_or(&[], Tape::output)
    }
}

/// Parameter gradients laid out like a [`MultiHeadNet`].
#[derive(Debug, Clone)]
pub struct MultiGrads {
    pub trunk: Vec<f64>,
    pub heads: Vec<Vec<f64>>,
}

impl MultiHeadNet {
    /// Trunk of ReLU layers (`trunk_hidden`), then one MLP per entry of
    /// `head_outputs` with `head_hidden` ReLU layers and a linear output.
    pub fn new(
        input_dim: usize,
        trunk_hidden: &[usize],
        head_hidden: &[usize],
        head_outputs: &[usize],
        layer_norm: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        if trunk_hidden.is_empty() || head_outputs.is_empty() {
            return Err(Error::InvalidConfig("multi-head net needs a trunk layer and a head".into()));
        }
        let trunk = Network::new(
            Architecture {
                input_dim,
                side_input: None,
                layers: trunk_hidden
                    .iter()
                    .map(|&units| LayerConfig {
                        units,
                        activation: Activation::Relu,
                        layer_norm,
                    })
                    .collect(),
            },
            rng,
        )?;
        let features = trunk.output_dim();
        let heads = head_outputs
            .iter()
            .map(|&out| {
                Network::new(
                    Architecture::mlp(features, head_hidden, out, Activation::Relu, Activation::Linear, layer_norm),
                    rng,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self { trunk, heads })
    }

    pub fn from_parts(trunk: Network, heads: Vec<Network>) -> Result<Self> {
        if heads.is_empty() {
            return Err(Error::Empty("head list"));
        }
        for h in &heads {
            check_len("head input", trunk.output_dim(), h.input_dim())?;
        }
        Ok(Self { trunk, heads })
    }

    pub fn trunk(&self) -> &Network {
        &self.trunk
    }

    pub fn heads(&self) -> &[Network] {
        &self.heads
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn output_dim(&self, head: usize) -> usize {
        self.heads[head].output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.trunk.num_params() + self.heads.iter().map(Network::num_params).sum::<usize>()
    }

    pub fn forward_head(&self, x: &[f64], head: usize) -> Result<Vec<f64>> {
        self.heads[head].forward(&self.trunk.forward(x)?)
    }

    pub fn forward_all(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let features = self.trunk.forward(x)?;
        self.heads.iter().map(|h| h.forward(&features)).collect()
    }

    /// Batched forward through the trunk and the heads listed in `heads`.
    pub fn forward_batch(&self, x: &[f64], batch: usize, heads: &[usize]) -> Result<MultiTape> {
        let trunk = self.trunk.forward_batch(x, None, batch)?;
        let mut tapes: Vec<Option<Tape>> = (0..self.heads.len()).map(|_| None).collect();
        for &h in heads {
            if h >= self.heads.len() {
                return Err(Error::InvalidArgument(format!("head {h} out of range")));
            }
            if tapes[h].is_none() {
                tapes[h] = Some(self.heads[h].forward_batch(trunk.output(), None, batch)?);
            }
        }
        Ok(MultiTape { trunk, heads: tapes })
    }

    /// Output of every head for a batch, without keeping a tape.
    pub fn predict_batch(&self, x: &[f64], batch: usize, head: usize) -> Result<Vec<f64>> {
        Ok(self.forward_batch(x, batch, &[head])?.heads[head]
            .take()
            .map(Tape::into_output)
            .unwrap_or_default())
    }

    pub fn zero_grads(&self) -> MultiGrads {
        MultiGrads {
            trunk: vec![0.0; self.trunk.num_params()],
            heads: self.heads.iter().map(|h| vec![0.0; h.num_params()]).collect(),
        }
    }

    /// Accumulates gradients for output gradients given per head. The
    /// gradient reaching the trunk is multiplied by `trunk_scale`; heads in
    /// `detached` pass nothing to the trunk.
    pub fn backward(
        &self,
        tape: &MultiTape,
        head_grads: &[(usize, &[f64])],
        trunk_scale: f64,
        detached: &[usize],
        grads: &mut MultiGrads,
    ) -> Result<()> {
        let mut feature_grad = vec![0.0; tape.trunk.output().len()];
        let mut any = false;
        for &(h, g) in head_grads {
            let head_tape = tape.heads.get(h).and_then(Option::as_ref).ok_or_else(|| {
                Error::InvalidArgument(format!("head {h} was not evaluated in this tape"))
            })?;
            let input = self.heads[h].backward(head_tape, g, Some(&mut grads.heads[h]))?;
            if !detached.contains(&h) {
                any = true;
                for (f, d) in feature_grad.iter_mut().zip(&input.input) {
                    *f += trunk_scale * d;
                }
            }
        }
        if any {
            self.trunk.backward(&tape.trunk, &feature_grad, Some(&mut grads.trunk))?;
        }
        Ok(())
    }

    /// Copy with independent `N(0, σ²)` noise on every weight and bias.
    pub fn perturbed(&self, sigma: f64, rng: &mut Rng) -> Result<Self> {
        let mut out = self.clone();
        out.trunk = perturbed_network(&self.trunk, sigma, rng)?;
        for (dst, src) in out.heads.iter_mut().zip(&self.heads) {
            *dst = perturbed_network(src, sigma, rng)?;
        }
        Ok(out)
    }

    pub fn copy_from(&mut self, other: &MultiHeadNet) -> Result<()> {
        check_len("head count", self.heads.len(), other.heads.len())?;
        self.trunk.copy_params_from(&other.trunk)?;
        for (dst, src) in self.heads.iter_mut().zip(&other.heads) {
            dst.copy_params_from(src)?;
        }
        Ok(())
    }

    pub fn soft_update_from(&mut self, other: &MultiHeadNet, tau: f64) -> Result<()> {
        check_len("head count", self.heads.len(), other.heads.len())?;
        self.trunk.soft_update_from(&other.trunk, tau)?;
        for (dst, src) in self.heads.iter_mut().zip(&other.heads) {
            dst.soft_update_from(src, tau)?;
        }
        Ok(())
    }

    /// All parameters as one vector: trunk first, then heads in order.
    pub fn params(&self) -> ParamVector {
        let parts: Vec<ParamVector> = std::iter::once(&self.trunk)
            .chain(&self.heads)
            .map(Network::params)
            .collect();
        ParamVector::concat(&parts.iter().collect::<Vec<_>>())
    }

    pub fn checksum(&self) -> f64 {
        std::iter::once(&self.trunk)
            .chain(&self.heads)
            .flat_map(|n| n.param_values().iter().enumerate())
            .map(|(i, v)| v * (1.0 + (i % 7) as f64))
            .sum()
    }
}

/// One Adam optimizer per sub-network.
#[derive(Debug, Clone)]
pub struct MultiAdam {
    trunk: Adam,
    heads: Vec<Adam>,
}

impl MultiAdam {
    pub fn new(net: &MultiHeadNet, learning_rate: f64) -> Self {
        Self {
            trunk: Adam::new(net.trunk.num_params(), learning_rate),
            heads: net
                .heads
                .iter()
                .map(|h| Adam::new(h.num_params(), learning_rate))
                .collect(),
        }
    }

    pub fn step(&mut self, net: &mut MultiHeadNet, grads: &MultiGrads) -> Result<()> {
        self.trunk.step(net.trunk.param_values_mut(), &grads.trunk)?;
        for ((opt, head), g) in self.heads.iter_mut().zip(&mut net.heads).zip(&grads.heads) {
            opt.step(head.param_values_mut(), g)?;
        }
        Ok(())
    }
}

/// Copy of `net` with `N(0, σ²)` noise on weights and biases. Layer-norm
/// gains and shifts are left alone.
pub fn perturbed_network(net: &Network, sigma: f64, rng: &mut Rng) -> Result<Network> {
    let mut theta = net.params();
    theta.mask_slots(|s| matches!(s.kind, TensorKind::Weight | TensorKind::Bias));
    let mut out = net.clone();
    out.set_params(&perturb(&theta, sigma, rng)?)?;
    Ok(out)
}
