//! The critic: a small fully connected network with hand-written
//! backpropagation.

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numcore::{stable_sigmoid, Mat, RngStream};

pub const INIT_STD: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn tag(self) -> u32 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Sigmoid),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => stable_sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    #[inline]
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

/// Output squashing of the critic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Sigmoid,
    Identity,
}

impl Head {
    fn activation(self) -> Activation {
        match self {
            Head::Sigmoid => Activation::Sigmoid,
            Head::Identity => Activation::Identity,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscLayer {
    pub weights: Mat,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpDiscriminator {
    layers: Vec<DiscLayer>,
}

/// `∂f/∂ρ` scaled by an upstream factor, one `(weights, bias)` pair per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscGrad {
    pub layers: Vec<(Mat, Vec<f64>)>,
}

impl DiscGrad {
    pub fn zeros_like(disc: &MlpDiscriminator) -> Self {
        Self {
            layers: disc
                .layers
                .iter()
                .map(|l| (Mat::zeros(l.weights.rows(), l.weights.cols()), vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }

    pub fn add_scaled(&mut self, other: &DiscGrad, scale: f64) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::shape("DiscGrad layers", self.layers.len(), other.layers.len()));
        }
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            if a.len() != b.len() {
                return Err(Error::shape("DiscGrad block", a.len(), b.len()));
            }
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for block in self.blocks_mut() {
            for v in block {
                *v *= factor;
            }
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks().concat()
    }

    pub fn norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

impl MlpDiscriminator {
    pub fn new(layers: Vec<DiscLayer>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Contract("discriminator needs at least one layer".into()))?;
        let mut width = first.weights.cols();
        for layer in &layers {
            if layer.weights.cols() != width {
                return Err(Error::shape("discriminator chain", width, layer.weights.cols()));
            }
            if layer.bias.len() != layer.weights.rows() {
                return Err(Error::shape(
                    "discriminator bias",
                    layer.weights.rows(),
                    layer.bias.len(),
                ));
            }
            width = layer.weights.rows();
        }
        if width != 1 {
            return Err(Error::shape("discriminator output", 1, width));
        }
        Ok(Self { layers })
    }

    /// Builds a `sizes = [input, hidden…, 1]` network with ReLU hidden units,
    /// the given head, Gaussian(0, 0.1) weights and zero biases.
    pub fn random(sizes: &[usize], head: Head, rng: &mut RngStream) -> Result<Self> {
        let normal = Normal::new(0.0, INIT_STD).expect("finite std");
        Self::build(sizes, head, || normal.sample(rng))
    }

    pub fn zeros(sizes: &[usize], head: Head) -> Result<Self> {
        Self::build(sizes, head, || 0.0)
    }

    fn build(sizes: &[usize], head: Head, mut init: impl FnMut() -> f64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Contract(format!(
                "discriminator sizes {sizes:?} need an input and an output"
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::Contract(format!("discriminator sizes {sizes:?} contain a zero")));
        }
        let n = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| DiscLayer {
                weights: Mat::from_fn(w[1], w[0], |_, _| init()),
                bias: vec![0.0; w[1]],
                activation: if k + 1 == n {
                    head.activation()
                } else {
                    Activation::Relu
                },
            })
            .collect();
        Self::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn layers(&self) -> &[DiscLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DiscLayer] {
        &mut self.layers
    }

    /// Activation of the last layer.
    pub fn head(&self) -> Activation {
        self.layers.last().expect("nonempty").activation
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    /// Largest absolute parameter value.
    pub fn max_abs_param(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::shape("discriminator input", self.input_dim(), x.len()));
        }
        Ok(())
    }

    /// Pre-activations and outputs of every layer.
    fn trace(&self, x: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut trace = Vec::with_capacity(self.layers.len());
        let mut current = x.to_vec();
        for layer in &self.layers {
            let mut z = layer.weights.matvec(&current).expect("checked width");
            for (zi, bi) in z.iter_mut().zip(&layer.bias) {
                *zi += bi;
            }
            let y: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            current = y.clone();
            trace.push((z, y));
        }
        trace
    }

    /// `f_ρ(x)`.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut current = x.to_vec();
        for layer in &self.layers {
            let mut z = layer.weights.matvec(&current)?;
            for (zi, bi) in z.iter_mut().zip(&layer.bias) {
                *zi = layer.activation.apply(*zi + bi);
            }
            current = z;
        }
        Ok(current[0])
    }

    /// `upstream · ∂f_ρ(x)/∂ρ` by reverse accumulation. Also returns `f_ρ(x)`.
    pub fn backward(&self, x: &[f64], upstream: f64) -> Result<(f64, DiscGrad)> {
        self.check_input(x)?;
        let trace = self.trace(x);
        let output = trace.last().expect("nonempty").1[0];
        let mut grads: Vec<(Mat, Vec<f64>)> = Vec::with_capacity(self.layers.len());
        let mut dy = vec![upstream];
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let (z, y) = &trace[k];
            let dz: Vec<f64> = dy
                .iter()
                .zip(z.iter().zip(y))
                .map(|(d, (&zi, &yi))| d * layer.activation.derivative(zi, yi))
                .collect();
            let input: &[f64] = if k == 0 { x } else { &trace[k - 1].1 };
            grads.push((Mat::outer(&dz, input), dz.clone()));
            if k > 0 {
                dy = layer.weights.matvec_transposed(&dz)?;
            }
        }
        grads.reverse();
        Ok((output, DiscGrad { layers: grads }))
    }

    /// Projects every weight and bias into `[-c, c]`.
    pub fn clip_weights(&mut self, c: f64) -> Result<()> {
        if c.is_nan() || c <= 0.0 {
            return Err(Error::Contract(format!("clip constant {c} must be positive")));
        }
        for block in self.blocks_mut() {
            for v in block {
                *v = v.clamp(-c, c);
            }
        }
        Ok(())
    }

    pub fn clipped(&self, c: f64) -> Result<Self> {
        let mut out = self.clone();
        out.clip_weights(c)?;
        Ok(out)
    }
}

/// Critic input for a (condition, sample) pair: plain concatenation.
pub fn concat_input(condition: &[f64], sample: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(condition.len() + sample.len());
    v.extend_from_slice(condition);
    v.extend_from_slice(sample);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_scores_half() {
        let d = MlpDiscriminator::zeros(&[4, 6, 1], Head::Sigmoid).unwrap();
        assert_eq!(d.forward(&[1.0, 0.0, 1.0, 1.0]).unwrap(), 0.5);
        assert_eq!(d.forward(&[0.0; 4]).unwrap(), 0.5);
    }

    #[test]
    fn affine_identity_head() {
        let layer = DiscLayer {
            weights: Mat::from_vec(1, 2, vec![1.0, 2.0]).unwrap(),
            bias: vec![-1.0],
            activation: Activation::Identity,
        };
        let d = MlpDiscriminator::new(vec![layer]).unwrap();
        assert_eq!(d.forward(&[1.0, 1.0]).unwrap(), 2.0);
    }

    #[test]
    fn sigmoid_head_range() {
        let mut rng = RngStream::new(1, 0);
        let d = MlpDiscriminator::random(&[5, 8, 1], Head::Sigmoid, &mut rng).unwrap();
        for _ in 0..1000 {
            let x: Vec<f64> = (0..5).map(|_| rng.uniform() * 20.0 - 10.0).collect();
            let y = d.forward(&x).unwrap();
            assert!(y > 0.0 && y < 1.0);
        }
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let mut rng = RngStream::new(2, 0);
        let d = MlpDiscriminator::random(&[3, 4, 1], Head::Sigmoid, &mut rng).unwrap();
        let x = [0.3, -1.0, 2.0];
        let (_, zero) = d.backward(&x, 0.0).unwrap();
        assert!(zero.to_flat().iter().all(|&v| v == 0.0));
        let (_, one) = d.backward(&x, 1.0).unwrap();
        let (_, two) = d.backward(&x, 2.0).unwrap();
        for (a, b) in one.to_flat().iter().zip(two.to_flat()) {
            assert_eq!(2.0 * a, b);
        }
        let (out, _) = d.backward(&x, 1.0).unwrap();
        assert_eq!(out, d.forward(&x).unwrap());
    }

    #[test]
    fn clipping() {
        let layer = DiscLayer {
            weights: Mat::from_vec(1, 2, vec![0.05, -0.003]).unwrap(),
            bias: vec![-0.2],
            activation: Activation::Identity,
        };
        let d = MlpDiscriminator::new(vec![layer]).unwrap();
        let once = d.clipped(0.01).unwrap();
        assert_eq!(once.layers()[0].weights.as_slice(), &[0.01, -0.003]);
        assert_eq!(once.layers()[0].bias, vec![-0.01]);
        assert_eq!(once.clipped(0.01).unwrap(), once);
        assert_eq!(d.clipped(1.0).unwrap(), d);
        assert!(d.clipped(0.0).is_err());
        assert!(d.clipped(-1.0).is_err());
    }

    #[test]
    fn shape_errors() {
        let d = MlpDiscriminator::zeros(&[3, 1], Head::Identity).unwrap();
        assert!(d.forward(&[1.0]).is_err());
        assert!(d.backward(&[1.0; 4], 1.0).is_err());
        assert!(MlpDiscriminator::zeros(&[3, 2], Head::Identity).is_err());
        assert!(MlpDiscriminator::zeros(&[3], Head::Identity).is_err());
    }

    #[test]
    fn concatenated_condition_is_plain_plumbing() {
        let mut rng = RngStream::new(3, 0);
        let d = MlpDiscriminator::random(&[5, 4, 1], Head::Sigmoid, &mut rng).unwrap();
        let cond = [0.0, 1.0];
        let sample = [1.0, 0.0, 1.0];
        let manual = [0.0, 1.0, 1.0, 0.0, 1.0];
        assert_eq!(
            d.forward(&concat_input(&cond, &sample)).unwrap(),
            d.forward(&manual).unwrap()
        );
    }
}
