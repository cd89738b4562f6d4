//! First-order update rules shared by both players.

use std::fmt;
use std::str::FromStr;

use crate::beliefnet::{BeliefGrad, BeliefNet};
use crate::discriminator::{DiscGrad, MlpDiscriminator};
use crate::error::{Error, Result};

/// Anything exposing its scalars as a fixed sequence of flat blocks.
pub trait Parameters {
    fn blocks(&self) -> Vec<&[f64]>;
    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }
}

impl Parameters for BeliefNet {
    /// Input biases are included only in free mode, mirroring [`BeliefGrad`].
    fn blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        if !self.is_clamped() {
            out.push(&self.input().bias);
        }
        for l in self.layers() {
            out.extend(l.blocks());
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let clamped = self.is_clamped();
        // Split borrows: input and layers are distinct fields behind accessors.
        let (input, layers) = self.parts_mut();
        let mut out: Vec<&mut [f64]> = Vec::new();
        if !clamped {
            out.push(&mut input.bias);
        }
        for l in layers {
            out.extend(l.blocks_mut());
        }
        out
    }
}

impl Parameters for BeliefGrad {
    fn blocks(&self) -> Vec<&[f64]> {
        BeliefGrad::blocks(self)
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        BeliefGrad::blocks_mut(self)
    }
}

impl Parameters for MlpDiscriminator {
    fn blocks(&self) -> Vec<&[f64]> {
        MlpDiscriminator::blocks(self)
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        MlpDiscriminator::blocks_mut(self)
    }
}

impl Parameters for DiscGrad {
    fn blocks(&self) -> Vec<&[f64]> {
        DiscGrad::blocks(self)
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        DiscGrad::blocks_mut(self)
    }
}

impl Parameters for Vec<f64> {
    fn blocks(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    RmsProp,
    Adam,
}

impl OptimizerKind {
    pub fn default_lr(self) -> f64 {
        match self {
            OptimizerKind::Sgd => 1e-2,
            OptimizerKind::RmsProp | OptimizerKind::Adam => 1e-3,
        }
    }

    pub fn tag(self) -> u32 {
        match self {
            OptimizerKind::Sgd => 0,
            OptimizerKind::RmsProp => 1,
            OptimizerKind::Adam => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(OptimizerKind::Sgd),
            1 => Some(OptimizerKind::RmsProp),
            2 => Some(OptimizerKind::Adam),
            _ => None,
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "rmsprop" => Ok(OptimizerKind::RmsProp),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Usage(format!("unknown optimizer `{other}`"))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::RmsProp => "rmsprop",
            OptimizerKind::Adam => "adam",
        })
    }
}

/// Which way a step moves along the gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Descend,
    Ascend,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Descend => 1.0,
            Direction::Ascend => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OptimizerState {
    Sgd,
    RmsProp {
        decay: f64,
        eps: f64,
        mean_square: Vec<f64>,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
        t: u64,
        m: Vec<f64>,
        v: Vec<f64>,
    },
}

/// `params − lr · grad`.
pub fn sgd_step(params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
    if params.len() != grad.len() {
        return Err(Error::shape("sgd_step", params.len(), grad.len()));
    }
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= lr * g;
    }
    Ok(())
}

/// `s ← γ s + (1 − γ) g²`, `params ← params − lr · g / √(s + ε)`.
pub fn rmsprop_step(
    mean_square: &mut [f64],
    params: &mut [f64],
    grad: &[f64],
    lr: f64,
    decay: f64,
    eps: f64,
) -> Result<()> {
    if params.len() != grad.len() || mean_square.len() != grad.len() {
        return Err(Error::shape("rmsprop_step", params.len(), grad.len()));
    }
    for ((s, p), &g) in mean_square.iter_mut().zip(params.iter_mut()).zip(grad) {
        *s = decay * *s + (1.0 - decay) * g * g;
        *p -= lr * g / (*s + eps).sqrt();
    }
    Ok(())
}

/// One bias-corrected Adam update at step `t` (already incremented).
#[allow(clippy::too_many_arguments)]
pub fn adam_step(
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    params: &mut [f64],
    grad: &[f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    if params.len() != grad.len() || m.len() != grad.len() || v.len() != grad.len() {
        return Err(Error::shape("adam_step", params.len(), grad.len()));
    }
    let c1 = 1.0 - beta1.powf(t as f64);
    let c2 = 1.0 - beta2.powf(t as f64);
    for (((mi, vi), p), &g) in m.iter_mut().zip(v.iter_mut()).zip(params.iter_mut()).zip(grad) {
        *mi = beta1 * *mi + (1.0 - beta1) * g;
        *vi = beta2 * *vi + (1.0 - beta2) * g * g;
        let m_hat = *mi / c1;
        let v_hat = *vi / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

impl OptimizerState {
    /// Fresh state for `n` parameters with the standard hyperparameters
    /// (RMSprop γ = 0.9, ε = 1e-8; Adam β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
    pub fn new(kind: OptimizerKind, n: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => OptimizerState::Sgd,
            OptimizerKind::RmsProp => OptimizerState::RmsProp {
                decay: 0.9,
                eps: 1e-8,
                mean_square: vec![0.0; n],
            },
            OptimizerKind::Adam => OptimizerState::Adam {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                t: 0,
                m: vec![0.0; n],
                v: vec![0.0; n],
            },
        }
    }

    pub fn for_params(kind: OptimizerKind, params: &impl Parameters) -> Self {
        Self::new(kind, params.num_params())
    }

    pub fn kind(&self) -> OptimizerKind {
        match self {
            OptimizerState::Sgd => OptimizerKind::Sgd,
            OptimizerState::RmsProp { .. } => OptimizerKind::RmsProp,
            OptimizerState::Adam { .. } => OptimizerKind::Adam,
        }
    }

    /// Applies one update to every block of `params` using the matching
    /// block of `grad`.
    pub fn step<P, G>(&mut self, params: &mut P, grad: &G, lr: f64, direction: Direction) -> Result<()>
    where
        P: Parameters + ?Sized,
        G: Parameters + ?Sized,
    {
        let grads = grad.blocks();
        let mut blocks = params.blocks_mut();
        if blocks.len() != grads.len() {
            return Err(Error::shape("optimizer blocks", blocks.len(), grads.len()));
        }
        let total: usize = grads.iter().map(|g| g.len()).sum();
        match self {
            OptimizerState::RmsProp { mean_square, .. } if mean_square.len() != total => {
                return Err(Error::shape("optimizer state", mean_square.len(), total));
            }
            OptimizerState::Adam { m, .. } if m.len() != total => {
                return Err(Error::shape("optimizer state", m.len(), total));
            }
            _ => {}
        }
        let sign = direction.sign();
        if let OptimizerState::Adam { t, .. } = self {
            *t += 1;
        }
        let mut offset = 0;
        for (p, g) in blocks.iter_mut().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::shape("optimizer block", p.len(), g.len()));
            }
            let signed: Vec<f64>;
            let g: &[f64] = if sign == 1.0 {
                g
            } else {
                signed = g.iter().map(|v| -v).collect();
                &signed
            };
            let range = offset..offset + g.len();
            match self {
                OptimizerState::Sgd => sgd_step(p, g, lr)?,
                OptimizerState::RmsProp {
                    decay,
                    eps,
                    mean_square,
                } => rmsprop_step(&mut mean_square[range], p, g, lr, *decay, *eps)?,
                OptimizerState::Adam {
                    beta1,
                    beta2,
                    eps,
                    t,
                    m,
                    v,
                } => adam_step(&mut m[range.clone()], &mut v[range], *t, p, g, lr, *beta1, *beta2, *eps)?,
            }
            offset += g.len();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_examples() {
        let mut p = vec![1.0];
        sgd_step(&mut p, &[0.5], 0.1).unwrap();
        assert_eq!(p, vec![0.95]);
        sgd_step(&mut p, &[0.0], 0.1).unwrap();
        assert_eq!(p, vec![0.95]);

        let mut one = vec![2.0];
        let mut two = vec![2.0];
        sgd_step(&mut one, &[0.5], 0.25).unwrap();
        sgd_step(&mut two, &[0.5], 0.125).unwrap();
        sgd_step(&mut two, &[0.5], 0.125).unwrap();
        assert_eq!(one, two);
        assert!(sgd_step(&mut one, &[1.0, 2.0], 0.1).is_err());
    }

    #[test]
    fn rmsprop_first_step() {
        let mut state = OptimizerState::new(OptimizerKind::RmsProp, 1);
        let mut p = vec![0.0];
        state.step(&mut p, &vec![1.0], 1e-3, Direction::Descend).unwrap();
        let OptimizerState::RmsProp { mean_square, .. } = &state else {
            unreachable!()
        };
        assert!((mean_square[0] - 0.1).abs() < 1e-16);
        let expected = -0.001 / (0.1f64 + 1e-8).sqrt();
        assert!((p[0] - expected).abs() < 1e-12);
        assert!((p[0] - -0.003_162_277_502_2).abs() < 1e-12);
    }

    #[test]
    fn rmsprop_zero_grad_decays_state() {
        let mut state = OptimizerState::new(OptimizerKind::RmsProp, 1);
        let mut p = vec![1.0];
        state.step(&mut p, &vec![2.0], 1e-3, Direction::Descend).unwrap();
        let before = p.clone();
        state.step(&mut p, &vec![0.0], 1e-3, Direction::Descend).unwrap();
        assert_eq!(p, before);
        let OptimizerState::RmsProp { mean_square, .. } = &state else {
            unreachable!()
        };
        assert!((mean_square[0] - 0.9 * 0.4).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step() {
        let mut state = OptimizerState::new(OptimizerKind::Adam, 1);
        let mut p = vec![0.0];
        state.step(&mut p, &vec![1.0], 1e-3, Direction::Descend).unwrap();
        let OptimizerState::Adam { m, v, t, .. } = &state else {
            unreachable!()
        };
        assert_eq!(*t, 1);
        assert!((m[0] - 0.1).abs() < 1e-16);
        assert!((v[0] - 0.001).abs() < 1e-16);
        assert!((p[0] - -0.000_999_999_990_000_000).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::RmsProp, OptimizerKind::Adam] {
            let mut state = OptimizerState::new(kind, 3);
            let mut p = vec![0.5, -1.0, 2.0];
            state.step(&mut p, &vec![0.0; 3], 0.1, Direction::Descend).unwrap();
            assert_eq!(p, vec![0.5, -1.0, 2.0], "{kind}");
        }
    }

    #[test]
    fn ascent_mirrors_descent() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::RmsProp, OptimizerKind::Adam] {
            let mut a = OptimizerState::new(kind, 2);
            let mut b = OptimizerState::new(kind, 2);
            let mut pa = vec![0.0, 0.0];
            let mut pb = vec![0.0, 0.0];
            a.step(&mut pa, &vec![0.3, -2.0], 0.01, Direction::Descend).unwrap();
            b.step(&mut pb, &vec![0.3, -2.0], 0.01, Direction::Ascend).unwrap();
            assert_eq!(pa[0], -pb[0]);
            assert_eq!(pa[1], -pb[1]);
        }
    }

    #[test]
    fn state_shape_is_checked() {
        let mut state = OptimizerState::new(OptimizerKind::Adam, 2);
        let mut p = vec![0.0; 3];
        assert!(state.step(&mut p, &vec![0.0; 3], 0.1, Direction::Descend).is_err());
    }

    #[test]
    fn parse_names() {
        assert_eq!("Adam".parse::<OptimizerKind>().unwrap(), OptimizerKind::Adam);
        assert_eq!("rmsprop".parse::<OptimizerKind>().unwrap(), OptimizerKind::RmsProp);
        assert!("lbfgs".parse::<OptimizerKind>().is_err());
    }
}
