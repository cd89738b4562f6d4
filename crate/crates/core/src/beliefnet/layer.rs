use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numcore::{log_sigmoid_pair, stable_sigmoid, BitVec, Mat, RngStream};

/// Fully connected transition `p(h | h_prev)` with logistic units.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseBeliefLayer {
    /// `out × in`; entry `(i, j)` couples unit `i` to parent unit `j`.
    pub weights: Mat,
    pub bias: Vec<f64>,
}

impl DenseBeliefLayer {
    pub fn new(weights: Mat, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::shape("DenseBeliefLayer bias", weights.rows(), bias.len()));
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Mat::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    pub fn random(inputs: usize, outputs: usize, std: f64, rng: &mut RngStream) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        Self {
            weights: Mat::from_fn(outputs, inputs, |_, _| normal.sample(rng)),
            bias: vec![0.0; outputs],
        }
    }
}

/// Shape of a channel-major feature map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MapShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl MapShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Transition whose pre-activation is a valid (unpadded) cross-correlation
/// of the parent map with a bank of square filters.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvBeliefLayer {
    input: MapShape,
    filters: usize,
    kernel: usize,
    stride: usize,
    /// `filters × channels × kernel × kernel`, row-major.
    kernels: Vec<f64>,
    /// One bias per filter.
    bias: Vec<f64>,
}

impl ConvBeliefLayer {
    pub fn new(
        input: MapShape,
        filters: usize,
        kernel: usize,
        stride: usize,
        kernels: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if kernel == 0 || stride == 0 || filters == 0 {
            return Err(Error::Contract(
                "conv filters, kernel and stride must be positive".into(),
            ));
        }
        if kernel > input.height || kernel > input.width {
            return Err(Error::Contract(format!(
                "kernel {kernel} larger than input map {}x{}",
                input.height, input.width
            )));
        }
        let expected = filters * input.channels * kernel * kernel;
        if kernels.len() != expected {
            return Err(Error::shape("ConvBeliefLayer kernels", expected, kernels.len()));
        }
        if bias.len() != filters {
            return Err(Error::shape("ConvBeliefLayer bias", filters, bias.len()));
        }
        Ok(Self {
            input,
            filters,
            kernel,
            stride,
            kernels,
            bias,
        })
    }

    pub fn zeros(input: MapShape, filters: usize, kernel: usize, stride: usize) -> Result<Self> {
        let n = filters * input.channels * kernel * kernel;
        Self::new(input, filters, kernel, stride, vec![0.0; n], vec![0.0; filters])
    }

    pub fn random(
        input: MapShape,
        filters: usize,
        kernel: usize,
        stride: usize,
        std: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let normal = Normal::new(0.0, std).expect("finite std");
        let n = filters * input.channels * kernel * kernel;
        let kernels = (0..n).map(|_| normal.sample(rng)).collect();
        Self::new(input, filters, kernel, stride, kernels, vec![0.0; filters])
    }

    pub fn input_shape(&self) -> MapShape {
        self.input
    }

    pub fn output_shape(&self) -> MapShape {
        MapShape::new(
            self.filters,
            (self.input.height - self.kernel) / self.stride + 1,
            (self.input.width - self.kernel) / self.stride + 1,
        )
    }

    pub fn filters(&self) -> usize {
        self.filters
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn kernels(&self) -> &[f64] {
        &self.kernels
    }

    pub fn kernels_mut(&mut self) -> &mut [f64] {
        &mut self.kernels
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    #[inline]
    fn kernel_index(&self, f: usize, c: usize, u: usize, v: usize) -> usize {
        ((f * self.input.channels + c) * self.kernel + u) * self.kernel + v
    }

    #[inline]
    fn input_index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.input.height + y) * self.input.width + x
    }

    fn preactivation(&self, h_prev: &[f64]) -> Vec<f64> {
        let out = self.output_shape();
        let mut a = Vec::with_capacity(out.len());
        for f in 0..self.filters {
            for oy in 0..out.height {
                for ox in 0..out.width {
                    let mut acc = self.bias[f];
                    for c in 0..self.input.channels {
                        for u in 0..self.kernel {
                            for v in 0..self.kernel {
                                let x = h_prev[self.input_index(c, oy * self.stride + u, ox * self.stride + v)];
                                acc += self.kernels[self.kernel_index(f, c, u, v)] * x;
                            }
                        }
                    }
                    a.push(acc);
                }
            }
        }
        a
    }

    /// Adds `scale · (filter, bias)` gradients for the residual map `delta`.
    fn accumulate_grad(&self, h_prev: &[f64], delta: &[f64], scale: f64, kernels: &mut [f64], bias: &mut [f64]) {
        let out = self.output_shape();
        for f in 0..self.filters {
            let map = &delta[f * out.height * out.width..(f + 1) * out.height * out.width];
            let mut bsum = 0.0;
            for d in map {
                bsum += d;
            }
            bias[f] += scale * bsum;
            for c in 0..self.input.channels {
                for u in 0..self.kernel {
                    for v in 0..self.kernel {
                        let mut acc = 0.0;
                        for oy in 0..out.height {
                            for ox in 0..out.width {
                                acc += map[oy * out.width + ox]
                                    * h_prev[self.input_index(c, oy * self.stride + u, ox * self.stride + v)];
                            }
                        }
                        kernels[self.kernel_index(f, c, u, v)] += scale * acc;
                    }
                }
            }
        }
    }
}

/// One transition of the stack.
#[derive(Clone, Debug, PartialEq)]
pub enum BeliefLayer {
    Dense(DenseBeliefLayer),
    Conv(ConvBeliefLayer),
}

/// Gradient of `log p(h | h_prev)` with respect to one layer's parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerGrad {
    Dense { weights: Mat, bias: Vec<f64> },
    Conv { kernels: Vec<f64>, bias: Vec<f64> },
}

impl LayerGrad {
    pub fn zeros_like(layer: &BeliefLayer) -> Self {
        match layer {
            BeliefLayer::Dense(d) => LayerGrad::Dense {
                weights: Mat::zeros(d.weights.rows(), d.weights.cols()),
                bias: vec![0.0; d.bias.len()],
            },
            BeliefLayer::Conv(c) => LayerGrad::Conv {
                kernels: vec![0.0; c.kernels.len()],
                bias: vec![0.0; c.bias.len()],
            },
        }
    }

    pub fn blocks(&self) -> [&[f64]; 2] {
        match self {
            LayerGrad::Dense { weights, bias } => [weights.as_slice(), bias],
            LayerGrad::Conv { kernels, bias } => [kernels, bias],
        }
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 2] {
        match self {
            LayerGrad::Dense { weights, bias } => [weights.as_mut_slice(), bias],
            LayerGrad::Conv { kernels, bias } => [kernels, bias],
        }
    }
}

impl BeliefLayer {
    pub fn input_dim(&self) -> usize {
        match self {
            BeliefLayer::Dense(d) => d.weights.cols(),
            BeliefLayer::Conv(c) => c.input.len(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            BeliefLayer::Dense(d) => d.weights.rows(),
            BeliefLayer::Conv(c) => c.output_shape().len(),
        }
    }

    pub fn blocks(&self) -> [&[f64]; 2] {
        match self {
            BeliefLayer::Dense(d) => [d.weights.as_slice(), &d.bias],
            BeliefLayer::Conv(c) => [&c.kernels, &c.bias],
        }
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 2] {
        match self {
            BeliefLayer::Dense(d) => [d.weights.as_mut_slice(), &mut d.bias],
            BeliefLayer::Conv(c) => [&mut c.kernels, &mut c.bias],
        }
    }

    fn check_input(&self, h_prev: &BitVec) -> Result<()> {
        if h_prev.len() != self.input_dim() {
            return Err(Error::shape("belief layer input", self.input_dim(), h_prev.len()));
        }
        Ok(())
    }

    /// Pre-activations `a_i = b_i + Σ_j w_ij h_j` (or the conv analogue).
    pub fn preactivation(&self, h_prev: &BitVec) -> Result<Vec<f64>> {
        self.check_input(h_prev)?;
        match self {
            BeliefLayer::Dense(d) => {
                let mut a = d.weights.matvec_bits(h_prev)?;
                for (ai, bi) in a.iter_mut().zip(&d.bias) {
                    *ai += bi;
                }
                Ok(a)
            }
            BeliefLayer::Conv(c) => Ok(c.preactivation(&h_prev.to_reals())),
        }
    }

    /// Firing probabilities `p(h_i = 1 | h_prev)`.
    pub fn cond_prob(&self, h_prev: &BitVec) -> Result<Vec<f64>> {
        Ok(self.preactivation(h_prev)?.into_iter().map(stable_sigmoid).collect())
    }

    /// `log p(h | h_prev)`.
    pub fn log_prob(&self, h_prev: &BitVec, h: &BitVec) -> Result<f64> {
        if h.len() != self.output_dim() {
            return Err(Error::shape("belief layer output", self.output_dim(), h.len()));
        }
        let a = self.preactivation(h_prev)?;
        Ok(bernoulli_log_prob(&a, h))
    }

    /// Residual `h - σ(a)`, the derivative of `log p(h | h_prev)` with respect
    /// to the pre-activations.
    pub fn residual(&self, h_prev: &BitVec, h: &BitVec) -> Result<Vec<f64>> {
        if h.len() != self.output_dim() {
            return Err(Error::shape("belief layer output", self.output_dim(), h.len()));
        }
        let a = self.preactivation(h_prev)?;
        Ok(residual(&a, h))
    }

    /// Adds `scale · ∂ log p(h | h_prev) / ∂(W, b)` into `grad`.
    pub fn accumulate_grad(&self, h_prev: &BitVec, h: &BitVec, scale: f64, grad: &mut LayerGrad) -> Result<()> {
        let delta = self.residual(h_prev, h)?;
        match (self, grad) {
            (BeliefLayer::Dense(_), LayerGrad::Dense { weights, bias }) => {
                let active: Vec<usize> = h_prev.ones().collect();
                for (i, &d) in delta.iter().enumerate() {
                    let sd = scale * d;
                    bias[i] += sd;
                    let row = weights.row_mut(i);
                    for &j in &active {
                        row[j] += sd;
                    }
                }
                Ok(())
            }
            (BeliefLayer::Conv(c), LayerGrad::Conv { kernels, bias }) => {
                c.accumulate_grad(&h_prev.to_reals(), &delta, scale, kernels, bias);
                Ok(())
            }
            _ => Err(Error::Contract("gradient kind does not match layer kind".into())),
        }
    }

    pub fn grad(&self, h_prev: &BitVec, h: &BitVec) -> Result<LayerGrad> {
        let mut g = LayerGrad::zeros_like(self);
        self.accumulate_grad(h_prev, h, 1.0, &mut g)?;
        Ok(g)
    }
}

/// `Σ_i h_i log σ(a_i) + (1 - h_i) log(1 - σ(a_i))`.
pub(crate) fn bernoulli_log_prob(a: &[f64], h: &BitVec) -> f64 {
    a.iter()
        .zip(h.iter())
        .map(|(&ai, hi)| {
            let (on, off) = log_sigmoid_pair(ai);
            if hi {
                on
            } else {
                off
            }
        })
        .sum()
}

pub(crate) fn residual(a: &[f64], h: &BitVec) -> Vec<f64> {
    a.iter()
        .zip(h.iter())
        .map(|(&ai, hi)| if hi { stable_sigmoid(-ai) } else { -stable_sigmoid(ai) })
        .collect()
}
