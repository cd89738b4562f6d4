use rayon::prelude::*;

use crate::beliefnet::{BeliefGrad, BeliefNet, ChainSample};
use crate::discriminator::{concat_input, DiscGrad, MlpDiscriminator};
use crate::error::{Error, Result};
use crate::numcore::{BitVec, RngStream};

use super::LossPair;

/// Stochastic gradient `ĝ` of the objective for both players.
#[derive(Clone, Debug, PartialEq)]
pub struct GradEstimate {
    pub g_theta: BeliefGrad,
    pub g_rho: DiscGrad,
}

/// Sums `(score, grad)` pairs in ascending index order.
fn reduce_disc(disc: &MlpDiscriminator, parts: Vec<(f64, DiscGrad)>) -> Result<(DiscGrad, Vec<f64>)> {
    let mut total = DiscGrad::zeros_like(disc);
    let mut scores = Vec::with_capacity(parts.len());
    for (score, g) in parts {
        total.add_scaled(&g, 1.0)?;
        scores.push(score);
    }
    Ok((total, scores))
}

/// `(1/b) Σ φ′(f(x_i)) ∂f(x_i)/∂ρ` and the scores `f(x_i)`.
pub fn real_rho_grad(disc: &MlpDiscriminator, loss: &LossPair, xs: &[Vec<f64>]) -> Result<(DiscGrad, Vec<f64>)> {
    if xs.is_empty() {
        return Err(Error::Contract("empty real batch".into()));
    }
    let parts = xs
        .par_iter()
        .map(|x| {
            let f = disc.forward(x)?;
            let (_, g) = disc.backward(x, loss.dphi(f))?;
            Ok((f, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut g, scores) = reduce_disc(disc, parts)?;
    g.scale(1.0 / xs.len() as f64);
    Ok((g, scores))
}

/// Gradient from a batch of data points. The generator component is
/// identically zero: real samples do not depend on θ.
pub fn real_batch_grad(
    net: &BeliefNet,
    disc: &MlpDiscriminator,
    loss: &LossPair,
    xs: &[Vec<f64>],
) -> Result<GradEstimate> {
    let (g_rho, _) = real_rho_grad(disc, loss, xs)?;
    Ok(GradEstimate {
        g_theta: BeliefGrad::zeros_like(net),
        g_rho,
    })
}

/// Draws `batch` chains; chain `i` consumes `rng.split(i)` and, when given,
/// is clamped to `conditions[i]`.
pub fn sample_chains(
    net: &BeliefNet,
    batch: usize,
    rng: &RngStream,
    conditions: Option<&[BitVec]>,
) -> Result<Vec<ChainSample>> {
    if let Some(c) = conditions {
        if c.len() != batch {
            return Err(Error::shape("fake batch conditions", batch, c.len()));
        }
    }
    (0..batch)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.split(i as u64);
            net.sample_forward_with(conditions.map(|c| &c[i]), &mut r)
        })
        .collect()
}

/// Critic input for a generated chain: the output layer, preceded by the
/// condition in conditional mode.
pub fn fake_input(chain: &ChainSample, condition: Option<&BitVec>) -> Vec<f64> {
    let y = chain.output().to_reals();
    match condition {
        Some(c) => concat_input(&c.to_reals(), &y),
        None => y,
    }
}

/// What to compute from a generated batch.
#[derive(Clone, Copy, Debug, Default)]
pub struct FakeGradOptions {
    pub theta: bool,
    pub rho: bool,
    /// Subtract the leave-one-out mean of `ψ(f(y))` before weighting the
    /// scores. Off by default; this departs from the plain estimator.
    pub baseline: bool,
    /// Evaluate the per-layer score sum concurrently.
    pub layer_parallel: bool,
}

/// Result of [`fake_grads`].
#[derive(Clone, Debug)]
pub struct FakeGrads {
    pub g_theta: Option<BeliefGrad>,
    pub g_rho: Option<DiscGrad>,
    /// `f(y_i)` per chain.
    pub scores: Vec<f64>,
}

/// Score-function and critic gradients from already drawn chains:
/// `g_θ = (1/b) Σ ψ(f(y_i)) ∂ log p(h_i)/∂θ`,
/// `g_ρ = (1/b) Σ ψ′(f(y_i)) ∂f(y_i)/∂ρ`.
pub fn fake_grads(
    net: &BeliefNet,
    disc: &MlpDiscriminator,
    loss: &LossPair,
    chains: &[ChainSample],
    conditions: Option<&[BitVec]>,
    options: FakeGradOptions,
) -> Result<FakeGrads> {
    let b = chains.len();
    if b == 0 {
        return Err(Error::Contract("empty fake batch".into()));
    }
    if let Some(c) = conditions {
        if c.len() != b {
            return Err(Error::shape("fake batch conditions", b, c.len()));
        }
    }
    let per_chain = chains
        .par_iter()
        .enumerate()
        .map(|(i, chain)| {
            let x = fake_input(chain, conditions.map(|c| &c[i]));
            if options.rho {
                let f = disc.forward(&x)?;
                let (_, g) = disc.backward(&x, loss.dpsi(f))?;
                Ok((f, Some(g)))
            } else {
                Ok((disc.forward(&x)?, None))
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let scores: Vec<f64> = per_chain.iter().map(|(f, _)| *f).collect();
    let inv_b = 1.0 / b as f64;

    let g_rho = if options.rho {
        let mut total = DiscGrad::zeros_like(disc);
        for (_, g) in &per_chain {
            total.add_scaled(g.as_ref().expect("computed"), 1.0)?;
        }
        total.scale(inv_b);
        Some(total)
    } else {
        None
    };

    let g_theta = if options.theta {
        let mut weights: Vec<f64> = scores.iter().map(|&f| loss.psi(f)).collect();
        if options.baseline && b > 1 {
            let sum: f64 = weights.iter().sum();
            let n = (b - 1) as f64;
            weights = weights.iter().map(|&w| w - (sum - w) / n).collect();
        }
        let mut g = net.weighted_score_sum(chains, &weights, options.layer_parallel)?;
        g.scale(inv_b);
        Some(g)
    } else {
        None
    };

    Ok(FakeGrads { g_theta, g_rho, scores })
}

/// Samples `batch` chains and returns the full gradient estimate together
/// with the chains.
pub fn fake_batch_grad(
    net: &BeliefNet,
    disc: &MlpDiscriminator,
    loss: &LossPair,
    batch: usize,
    rng: &RngStream,
    conditions: Option<&[BitVec]>,
) -> Result<(GradEstimate, Vec<ChainSample>)> {
    if batch == 0 {
        return Err(Error::Contract("fake batch size must be at least 1".into()));
    }
    let chains = sample_chains(net, batch, rng, conditions)?;
    let grads = fake_grads(
        net,
        disc,
        loss,
        &chains,
        conditions,
        FakeGradOptions {
            theta: true,
            rho: true,
            ..Default::default()
        },
    )?;
    Ok((
        GradEstimate {
            g_theta: grads.g_theta.expect("requested"),
            g_rho: grads.g_rho.expect("requested"),
        },
        chains,
    ))
}
