//! Reference computations for tests, written independently of the library's
//! own enumeration and gradient code.
//!
//! Probabilities are formed as plain products of logistic factors and
//! differentiated in forward mode with dual numbers, one parameter at a time.

use std::ops::{Add, Mul, Sub};

use abelnet::beliefnet::{BeliefLayer, BeliefNet, ChainSample, InputMode};
use abelnet::discriminator::MlpDiscriminator;
use abelnet::numcore::{BitVec, RngStream};
use abelnet::optim::Parameters;
use rand_distr::{Distribution, Normal};

/// Central-difference step used throughout.
pub const FD_STEP: f64 = 1e-5;

/// `|a − b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(&x, &y)| rel_err(x, y)).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub du: f64,
}

impl Dual {
    pub fn constant(re: f64) -> Self {
        Dual { re, du: 0.0 }
    }

    pub fn variable(re: f64) -> Self {
        Dual { re, du: 1.0 }
    }

    pub fn sigmoid(self) -> Self {
        let s = 1.0 / (1.0 + (-self.re).exp());
        Dual {
            re: s,
            du: s * (1.0 - s) * self.du,
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            re: self.re + o.re,
            du: self.du + o.du,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual {
            re: self.re - o.re,
            du: self.du - o.du,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            re: self.re * o.re,
            du: self.re * o.du + self.du * o.re,
        }
    }
}

struct DenseLayer {
    rows: usize,
    cols: usize,
    weights: Vec<Dual>,
    bias: Vec<Dual>,
}

/// Dense network with every parameter lifted to a dual; at most one
/// parameter carries a unit tangent.
struct DualNet {
    input_bias: Vec<Dual>,
    condition: Option<BitVec>,
    layers: Vec<DenseLayer>,
}

fn dense_only(net: &BeliefNet) {
    assert!(
        net.layers().iter().all(|l| matches!(l, BeliefLayer::Dense(_))),
        "oracle handles dense layers only"
    );
}

impl DualNet {
    /// Lifts `net`, seeding parameter `seed` (canonical flat order) with
    /// tangent 1.
    fn lift(net: &BeliefNet, seed: Option<usize>) -> Self {
        dense_only(net);
        let mut k = 0usize;
        let mut next = |v: f64| {
            let d = if Some(k) == seed {
                Dual::variable(v)
            } else {
                Dual::constant(v)
            };
            k += 1;
            d
        };
        let (input_bias, condition) = match net.mode() {
            InputMode::Free => (net.input().bias.iter().map(|&b| next(b)).collect(), None),
            InputMode::Clamped { condition } => (
                net.input().bias.iter().map(|&b| Dual::constant(b)).collect(),
                Some(condition.clone().expect("oracle needs a stored condition")),
            ),
        };
        let mut layers = Vec::new();
        for l in net.layers() {
            let BeliefLayer::Dense(d) = l else { unreachable!() };
            let weights = d.weights.as_slice().iter().map(|&w| next(w)).collect();
            let bias = d.bias.iter().map(|&b| next(b)).collect();
            layers.push(DenseLayer {
                rows: d.weights.rows(),
                cols: d.weights.cols(),
                weights,
                bias,
            });
        }
        DualNet {
            input_bias,
            condition,
            layers,
        }
    }

    fn bernoulli(p: Dual, bit: bool) -> Dual {
        if bit {
            p
        } else {
            Dual::constant(1.0) - p
        }
    }

    /// Joint probability of a chain, as a product of conditional factors.
    fn joint(&self, states: &[BitVec]) -> Dual {
        let mut p = Dual::constant(1.0);
        if self.condition.is_none() {
            for (i, &b) in self.input_bias.iter().enumerate() {
                p = p * Self::bernoulli(b.sigmoid(), states[0].get(i));
            }
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let prev = &states[l];
            for i in 0..layer.rows {
                let mut a = layer.bias[i];
                for j in 0..layer.cols {
                    if prev.get(j) {
                        a = a + layer.weights[i * layer.cols + j];
                    }
                }
                p = p * Self::bernoulli(a.sigmoid(), states[l + 1].get(i));
            }
        }
        p
    }
}

/// Calls `visit` with every chain of `net` (the input layer fixed to the
/// stored condition when clamped). Codes run over the free units, first
/// layer least significant.
pub fn for_each_chain(net: &BeliefNet, mut visit: impl FnMut(&ChainSample)) {
    let sizes = net.sizes();
    let condition = match net.mode() {
        InputMode::Free => None,
        InputMode::Clamped { condition } => Some(condition.clone().expect("oracle needs a stored condition")),
    };
    let free: usize = sizes.iter().skip(condition.is_some() as usize).sum();
    assert!(free <= 24, "too many units to enumerate");
    for code in 0u64..(1 << free) {
        let mut bit = 0;
        let mut states = Vec::with_capacity(sizes.len());
        for (l, &w) in sizes.iter().enumerate() {
            if l == 0 {
                if let Some(c) = &condition {
                    states.push(c.clone());
                    continue;
                }
            }
            states.push(BitVec::from_bools((0..w).map(|i| code >> (bit + i) & 1 == 1)));
            bit += w;
        }
        visit(&ChainSample { states });
    }
}

/// Probability of a chain under a dense network.
pub fn chain_prob(net: &BeliefNet, chain: &ChainSample) -> f64 {
    DualNet::lift(net, None).joint(&chain.states).re
}

/// Output distribution of a dense network, indexed by the output code
/// (unit 0 least significant).
pub fn output_pmf(net: &BeliefNet) -> Vec<f64> {
    let lifted = DualNet::lift(net, None);
    let mut pmf = vec![0.0; 1 << net.output_dim()];
    for_each_chain(net, |c| {
        pmf[c.output().to_index() as usize] += lifted.joint(&c.states).re;
    });
    pmf
}

/// Exact `∂/∂θ Σ_x p(x) g(x)` for every generator parameter, by forward-mode
/// differentiation of the enumerated sum.
pub fn expectation_grad(net: &BeliefNet, g: impl Fn(&BitVec) -> f64) -> Vec<f64> {
    let mut values = Vec::new();
    for_each_chain(net, |c| values.push((c.clone(), g(c.output()))));
    (0..net.num_params())
        .map(|k| {
            let lifted = DualNet::lift(net, Some(k));
            values.iter().map(|(c, v)| lifted.joint(&c.states).du * v).sum()
        })
        .collect()
}

/// Central differences of `f` at `x`.
pub fn fd_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            work[i] = x[i] + FD_STEP;
            let up = f(&work);
            work[i] = x[i] - FD_STEP;
            let down = f(&work);
            work[i] = x[i];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn flat_params(p: &impl Parameters) -> Vec<f64> {
    p.blocks().concat()
}

pub fn with_params<P: Parameters + Clone>(p: &P, flat: &[f64]) -> P {
    let mut out = p.clone();
    let mut offset = 0;
    for block in out.blocks_mut() {
        let n = block.len();
        block.copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
    assert_eq!(offset, flat.len(), "parameter count mismatch");
    out
}

/// Overwrites every parameter with a fresh draw from `N(0, std²)`, so that
/// biases are nonzero too.
pub fn randomize<P: Parameters>(p: &mut P, std: f64, rng: &mut RngStream) {
    let normal = Normal::new(0.0, std).expect("finite std");
    for block in p.blocks_mut() {
        for v in block {
            *v = normal.sample(rng);
        }
    }
}

/// Finite-difference gradient of `log p(chain)` over the network parameters.
pub fn fd_log_joint_grad(net: &BeliefNet, chain: &ChainSample) -> Vec<f64> {
    fd_grad(&flat_params(net), |theta| {
        with_params(net, theta).log_joint(chain).expect("log_joint")
    })
}

/// Finite-difference gradient of `upstream · f(x)` over the critic parameters.
pub fn fd_disc_grad(disc: &MlpDiscriminator, x: &[f64], upstream: f64) -> Vec<f64> {
    fd_grad(&flat_params(disc), |rho| {
        upstream * with_params(disc, rho).forward(x).expect("forward")
    })
}
