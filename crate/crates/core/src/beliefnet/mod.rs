//! Directed sigmoid belief network: the generator.
//!
//! The joint over layer states factorizes forward as
//! `p(h¹) · Π_l p_l(hˡ | hˡ⁻¹)`, where every unit is Bernoulli with a
//! logistic firing probability. Sampling walks the chain from the input
//! layer to the output; the score `∂ log p(h) / ∂θ` splits into one term per
//! layer, each depending only on the two adjacent states.

mod enumerate;
mod grad;
mod layer;

pub use enumerate::ENUMERATION_LIMIT;
pub use grad::BeliefGrad;
pub use layer::{BeliefLayer, ConvBeliefLayer, DenseBeliefLayer, LayerGrad, MapShape};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numcore::{bernoulli_vec, stable_sigmoid, BitVec, RngStream};

/// Standard deviation of the Gaussian weight initialization.
pub const INIT_STD: f64 = 0.1;

/// Biases `b¹` of the independent input layer, `p(h¹_i = 1) = σ(b¹_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InputLayerParams {
    pub bias: Vec<f64>,
}

/// Whether the input layer is sampled or fixed from outside.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InputMode {
    Free,
    /// `h¹` is supplied by the caller (e.g. a one-hot label). A stored
    /// condition is used when none is passed explicitly.
    Clamped {
        condition: Option<BitVec>,
    },
}

/// One joint realization `(h¹, …, hᴸ)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ChainSample {
    pub states: Vec<BitVec>,
}

impl ChainSample {
    /// The output layer `hᴸ`.
    pub fn output(&self) -> &BitVec {
        self.states.last().expect("chain has at least one layer")
    }
}

/// Layer recipe used to build a network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    /// Fully connected layer; `shape` optionally gives the units an image
    /// layout so that a convolutional layer may follow.
    Dense { units: usize, shape: Option<MapShape> },
    Conv {
        filters: usize,
        kernel: usize,
        stride: usize,
    },
}

/// Input width (optionally shaped) followed by the transitions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub input: usize,
    pub input_shape: Option<MapShape>,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// All-dense stack with the given widths, input first.
    pub fn dense(sizes: &[usize]) -> Self {
        Self {
            input: sizes.first().copied().unwrap_or(0),
            input_shape: None,
            layers: sizes[1.min(sizes.len())..]
                .iter()
                .map(|&units| LayerSpec::Dense { units, shape: None })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeliefNet {
    input: InputLayerParams,
    layers: Vec<BeliefLayer>,
    mode: InputMode,
}

impl BeliefNet {
    pub fn new(input: InputLayerParams, layers: Vec<BeliefLayer>) -> Result<Self> {
        if input.bias.is_empty() {
            return Err(Error::Contract("input layer must have at least one unit".into()));
        }
        let mut width = input.bias.len();
        for layer in &layers {
            if layer.input_dim() != width {
                return Err(Error::shape("belief layer chain", width, layer.input_dim()));
            }
            width = layer.output_dim();
        }
        let net = Self {
            input,
            layers,
            mode: InputMode::Free,
        };
        net.check_finite()?;
        Ok(net)
    }

    /// All parameters zero: every unit fires with probability ½.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::build(&Architecture::dense(sizes), None)
    }

    /// Dense stack with Gaussian(0, [`INIT_STD`]) weights and zero biases.
    pub fn dense(sizes: &[usize], rng: &mut RngStream) -> Result<Self> {
        Self::build(&Architecture::dense(sizes), Some(rng))
    }

    /// Builds from a layer recipe; `rng = None` gives all-zero parameters.
    pub fn build(arch: &Architecture, mut rng: Option<&mut RngStream>) -> Result<Self> {
        if let Some(shape) = arch.input_shape {
            if shape.len() != arch.input {
                return Err(Error::shape("input shape", arch.input, shape.len()));
            }
        }
        let mut width = arch.input;
        let mut shape = arch.input_shape;
        let mut layers = Vec::with_capacity(arch.layers.len());
        for spec in &arch.layers {
            let layer = match *spec {
                LayerSpec::Dense {
                    units,
                    shape: out_shape,
                } => {
                    if let Some(s) = out_shape {
                        if s.len() != units {
                            return Err(Error::shape("dense layer shape", units, s.len()));
                        }
                    }
                    shape = out_shape;
                    let d = match rng.as_deref_mut() {
                        Some(r) => DenseBeliefLayer::random(width, units, INIT_STD, r),
                        None => DenseBeliefLayer::zeros(width, units),
                    };
                    BeliefLayer::Dense(d)
                }
                LayerSpec::Conv {
                    filters,
                    kernel,
                    stride,
                } => {
                    let input = shape
                        .ok_or_else(|| Error::Contract("convolutional layer needs a shaped parent layer".into()))?;
                    let c = match rng.as_deref_mut() {
                        Some(r) => ConvBeliefLayer::random(input, filters, kernel, stride, INIT_STD, r)?,
                        None => ConvBeliefLayer::zeros(input, filters, kernel, stride)?,
                    };
                    shape = Some(c.output_shape());
                    BeliefLayer::Conv(c)
                }
            };
            width = layer.output_dim();
            layers.push(layer);
        }
        Self::new(
            InputLayerParams {
                bias: vec![0.0; arch.input],
            },
            layers,
        )
    }

    pub fn input(&self) -> &InputLayerParams {
        &self.input
    }

    pub fn input_mut(&mut self) -> &mut InputLayerParams {
        &mut self.input
    }

    pub fn layers(&self) -> &[BeliefLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [BeliefLayer] {
        &mut self.layers
    }

    pub fn mode(&self) -> &InputMode {
        &self.mode
    }

    pub fn is_clamped(&self) -> bool {
        matches!(self.mode, InputMode::Clamped { .. })
    }

    /// Layer widths `d_1, …, d_L`.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input.bias.len())
            .chain(self.layers.iter().map(BeliefLayer::output_dim))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.input.bias.len()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim(), BeliefLayer::output_dim)
    }

    /// Number of layers `L`, counting the input layer.
    pub fn depth(&self) -> usize {
        self.layers.len() + 1
    }

    /// Copy of the network with `h¹` fixed to `condition`.
    pub fn clamp_input(&self, condition: &BitVec) -> Result<Self> {
        if condition.len() != self.input_dim() {
            return Err(Error::shape("clamp condition", self.input_dim(), condition.len()));
        }
        let mut net = self.clone();
        net.mode = InputMode::Clamped {
            condition: Some(condition.clone()),
        };
        Ok(net)
    }

    /// Clamped mode without a stored condition; every sampling call must
    /// supply one.
    pub fn clamped(mut self) -> Self {
        self.mode = InputMode::Clamped { condition: None };
        self
    }

    /// Returns to free mode, where `h¹` is sampled from its own biases.
    pub fn released(mut self) -> Self {
        self.mode = InputMode::Free;
        self
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut InputLayerParams, &mut [BeliefLayer]) {
        (&mut self.input, &mut self.layers)
    }

    pub(crate) fn set_mode(&mut self, mode: InputMode) {
        self.mode = mode;
    }

    pub fn check_finite(&self) -> Result<()> {
        let ok = self.input.bias.iter().all(|v| v.is_finite())
            && self
                .layers
                .iter()
                .all(|l| l.blocks().iter().all(|b| b.iter().all(|v| v.is_finite())));
        if ok {
            Ok(())
        } else {
            Err(Error::Numerical("belief network has non-finite parameters".into()))
        }
    }

    /// Firing probabilities of layer `l + 1` (0-based transition index `l`)
    /// given its parent.
    pub fn layer_cond_prob(&self, l: usize, h_prev: &BitVec) -> Result<Vec<f64>> {
        self.transition(l)?.cond_prob(h_prev)
    }

    fn transition(&self, l: usize) -> Result<&BeliefLayer> {
        self.layers
            .get(l)
            .ok_or_else(|| Error::Usage(format!("no transition {l} in a {}-layer net", self.depth())))
    }

    fn resolve_condition<'a>(&'a self, condition: Option<&'a BitVec>) -> Result<Option<&'a BitVec>> {
        match &self.mode {
            InputMode::Free => Ok(None),
            InputMode::Clamped { condition: stored } => {
                let c = condition
                    .or(stored.as_ref())
                    .ok_or_else(|| Error::Usage("clamped-input network sampled without a condition".into()))?;
                if c.len() != self.input_dim() {
                    return Err(Error::shape("clamp condition", self.input_dim(), c.len()));
                }
                Ok(Some(c))
            }
        }
    }

    /// Ancestral sample of the whole chain.
    pub fn sample_forward(&self, rng: &mut RngStream) -> Result<ChainSample> {
        self.sample_forward_with(None, rng)
    }

    /// Ancestral sample, with `condition` overriding any stored clamp.
    pub fn sample_forward_with(&self, condition: Option<&BitVec>, rng: &mut RngStream) -> Result<ChainSample> {
        let first = match self.resolve_condition(condition)? {
            Some(c) => c.clone(),
            None => {
                let probs: Vec<f64> = self.input.bias.iter().map(|&b| stable_sigmoid(b)).collect();
                bernoulli_vec(&probs, rng)?
            }
        };
        let mut states = Vec::with_capacity(self.depth());
        states.push(first);
        for layer in &self.layers {
            let probs = layer.cond_prob(states.last().expect("nonempty"))?;
            states.push(bernoulli_vec(&probs, rng)?);
        }
        Ok(ChainSample { states })
    }

    /// Samples the chain up to `hᴸ⁻¹` and returns it with the output
    /// firing probabilities `p(hᴸ = 1 | hᴸ⁻¹)` instead of a sampled output.
    pub fn sample_output_probs(
        &self,
        condition: Option<&BitVec>,
        rng: &mut RngStream,
    ) -> Result<(ChainSample, Vec<f64>)> {
        let mut chain = self.sample_forward_with(condition, rng)?;
        if self.layers.is_empty() {
            let probs = self.input.bias.iter().map(|&b| stable_sigmoid(b)).collect();
            return Ok((chain, probs));
        }
        chain.states.pop();
        let last = self.layers.last().expect("nonempty");
        let probs = last.cond_prob(chain.states.last().expect("nonempty"))?;
        Ok((chain, probs))
    }

    fn check_chain(&self, chain: &ChainSample) -> Result<()> {
        if chain.states.len() != self.depth() {
            return Err(Error::shape("chain depth", self.depth(), chain.states.len()));
        }
        for (state, width) in chain.states.iter().zip(self.sizes()) {
            if state.len() != width {
                return Err(Error::shape("chain layer width", width, state.len()));
            }
        }
        Ok(())
    }

    /// `log p(h¹) + Σ_l log p_l(hˡ | hˡ⁻¹)`; the first term is dropped when
    /// the input is clamped.
    pub fn log_joint(&self, chain: &ChainSample) -> Result<f64> {
        self.check_chain(chain)?;
        let mut total = if self.is_clamped() {
            0.0
        } else {
            layer::bernoulli_log_prob(&self.input.bias, &chain.states[0])
        };
        for (l, layer) in self.layers.iter().enumerate() {
            total += layer.log_prob(&chain.states[l], &chain.states[l + 1])?;
        }
        Ok(total)
    }

    fn input_grad(&self, chain: &ChainSample) -> Option<Vec<f64>> {
        (!self.is_clamped()).then(|| layer::residual(&self.input.bias, &chain.states[0]))
    }

    /// `∂ log p(h) / ∂θ`, one layer after another.
    pub fn grad_log_joint(&self, chain: &ChainSample) -> Result<BeliefGrad> {
        self.check_chain(chain)?;
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(l, layer)| layer.grad(&chain.states[l], &chain.states[l + 1]))
            .collect::<Result<Vec<_>>>()?;
        Ok(BeliefGrad {
            input_bias: self.input_grad(chain),
            layers,
        })
    }

    /// Same as [`BeliefNet::grad_log_joint`] with the layers evaluated
    /// concurrently on the current rayon pool. Each layer reads only its own
    /// parameters and two adjacent states, so the result is identical.
    pub fn grad_log_joint_par(&self, chain: &ChainSample) -> Result<BeliefGrad> {
        self.check_chain(chain)?;
        let layers = self
            .layers
            .par_iter()
            .enumerate()
            .map(|(l, layer)| layer.grad(&chain.states[l], &chain.states[l + 1]))
            .collect::<Result<Vec<_>>>()?;
        Ok(BeliefGrad {
            input_bias: self.input_grad(chain),
            layers,
        })
    }

    /// `Σ_i weights[i] · ∂ log p(chains[i]) / ∂θ`, reduced in ascending `i`.
    ///
    /// With `parallel` set, layers are processed concurrently; the per-entry
    /// summation order is the same either way.
    pub fn weighted_score_sum(&self, chains: &[ChainSample], weights: &[f64], parallel: bool) -> Result<BeliefGrad> {
        if chains.len() != weights.len() {
            return Err(Error::shape("score weights", chains.len(), weights.len()));
        }
        for chain in chains {
            self.check_chain(chain)?;
        }
        let per_layer = |(l, layer): (usize, &BeliefLayer)| -> Result<LayerGrad> {
            let mut g = LayerGrad::zeros_like(layer);
            for (chain, &w) in chains.iter().zip(weights) {
                layer.accumulate_grad(&chain.states[l], &chain.states[l + 1], w, &mut g)?;
            }
            Ok(g)
        };
        let layers = if parallel {
            self.layers
                .par_iter()
                .enumerate()
                .map(per_layer)
                .collect::<Result<Vec<_>>>()?
        } else {
            self.layers
                .iter()
                .enumerate()
                .map(per_layer)
                .collect::<Result<Vec<_>>>()?
        };
        let input_bias = (!self.is_clamped()).then(|| {
            let mut g = vec![0.0; self.input_dim()];
            for (chain, &w) in chains.iter().zip(weights) {
                for (gi, r) in g.iter_mut().zip(layer::residual(&self.input.bias, &chain.states[0])) {
                    *gi += w * r;
                }
            }
            g
        });
        Ok(BeliefGrad { input_bias, layers })
    }

    /// Samples hidden layers downward from a fixed output `x`.
    ///
    /// Each `hˡ⁻¹` is drawn from `σ(Wᵀ hˡ + bˡ⁻¹)`, reusing the forward
    /// weights transposed together with the biases of the layer being
    /// sampled. This is an approximation: the true backward conditionals of
    /// the directed model are not logistic.
    pub fn sample_reverse(&self, x: &BitVec, rng: &mut RngStream) -> Result<ChainSample> {
        if x.len() != self.output_dim() {
            return Err(Error::shape("reverse sample output", self.output_dim(), x.len()));
        }
        let mut dense = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            match layer {
                BeliefLayer::Dense(d) => dense.push(d),
                BeliefLayer::Conv(_) => {
                    return Err(Error::Unsupported(
                        "reverse sampling through convolutional layers".into(),
                    ))
                }
            }
        }
        let clamp = self.resolve_condition(None).ok().flatten();
        let mut states = vec![BitVec::default(); self.depth()];
        states[self.depth() - 1] = x.clone();
        for l in (1..self.depth()).rev() {
            if l == 1 {
                if let Some(c) = clamp {
                    states[0] = c.clone();
                    break;
                }
            }
            let below_bias: &[f64] = if l == 1 { &self.input.bias } else { &dense[l - 2].bias };
            let mut a = dense[l - 1].weights.matvec_transposed_bits(&states[l])?;
            for (ai, bi) in a.iter_mut().zip(below_bias) {
                *ai += bi;
            }
            let probs: Vec<f64> = a.into_iter().map(stable_sigmoid).collect();
            states[l - 1] = bernoulli_vec(&probs, rng)?;
        }
        Ok(ChainSample { states })
    }
}
