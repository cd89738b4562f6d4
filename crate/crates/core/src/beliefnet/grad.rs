use crate::error::{Error, Result};

use super::{BeliefNet, LayerGrad};

/// Gradient with respect to every generator parameter, laid out like the
/// network. `input_bias` is absent when the input layer is clamped.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefGrad {
    pub input_bias: Option<Vec<f64>>,
    pub layers: Vec<LayerGrad>,
}

impl BeliefGrad {
    pub fn zeros_like(net: &BeliefNet) -> Self {
        Self {
            input_bias: (!net.is_clamped()).then(|| vec![0.0; net.input_dim()]),
            layers: net.layers().iter().map(LayerGrad::zeros_like).collect(),
        }
    }

    /// Flat views in canonical order: input biases (if present), then each
    /// layer's weights followed by its biases.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(1 + 2 * self.layers.len());
        if let Some(b) = &self.input_bias {
            out.push(b);
        }
        for l in &self.layers {
            out.extend(l.blocks());
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(1 + 2 * self.layers.len());
        if let Some(b) = &mut self.input_bias {
            out.push(b);
        }
        for l in &mut self.layers {
            out.extend(l.blocks_mut());
        }
        out
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &BeliefGrad, scale: f64) -> Result<()> {
        let theirs = other.blocks();
        let mut ours = self.blocks_mut();
        if ours.len() != theirs.len() {
            return Err(Error::shape("BeliefGrad blocks", ours.len(), theirs.len()));
        }
        for (a, b) in ours.iter_mut().zip(theirs) {
            if a.len() != b.len() {
                return Err(Error::shape("BeliefGrad block", a.len(), b.len()));
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

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}
