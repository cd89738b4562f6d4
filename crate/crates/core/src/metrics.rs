//! Evaluation: probability tables, total variation, firing rates and the
//! total-probability log-likelihood estimate.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::beliefnet::BeliefNet;
use crate::error::{Error, Result};
use crate::numcore::{log_sigmoid_pair, BitVec, RngStream};

/// Tolerance on `Σ p = 1` accepted by [`PmfTable`].
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Probability mass over binary vectors of one width. Absent keys have
/// probability zero.
#[derive(Clone, Debug, PartialEq)]
pub struct PmfTable {
    width: usize,
    probs: BTreeMap<BitVec, f64>,
}

impl PmfTable {
    pub fn new(width: usize, probs: BTreeMap<BitVec, f64>) -> Result<Self> {
        let mut total = 0.0;
        for (x, &p) in &probs {
            if x.len() != width {
                return Err(Error::shape("PmfTable outcome", width, x.len()));
            }
            if !p.is_finite() || p < 0.0 {
                return Err(Error::Contract(format!("probability {p} for outcome {x}")));
            }
            total += p;
        }
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Contract(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { width, probs })
    }

    /// From a dense table indexed by [`BitVec::to_index`].
    pub fn from_dense(width: usize, probs: &[f64]) -> Result<Self> {
        if probs.len() != 1usize << width {
            return Err(Error::shape("dense pmf", 1usize << width, probs.len()));
        }
        let map = probs
            .iter()
            .enumerate()
            .map(|(code, &p)| (BitVec::from_index(code as u64, width), p))
            .collect();
        Self::new(width, map)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn prob(&self, x: &BitVec) -> f64 {
        self.probs.get(x).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BitVec, f64)> {
        self.probs.iter().map(|(k, &v)| (k, v))
    }

    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }

    /// `P(x_i = 1)` for every position.
    pub fn marginals(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.width];
        for (x, p) in self.iter() {
            for i in x.ones() {
                m[i] += p;
            }
        }
        m
    }
}

/// `½ Σ_x |p(x) − q(x)|`.
pub fn tv_distance(p: &PmfTable, q: &PmfTable) -> Result<f64> {
    if p.width != q.width {
        return Err(Error::shape("tv_distance widths", p.width, q.width));
    }
    let mut sum = 0.0;
    for (x, pv) in p.iter() {
        sum += (pv - q.prob(x)).abs();
    }
    for (x, qv) in q.iter() {
        if !p.probs.contains_key(x) {
            sum += qv;
        }
    }
    Ok((0.5 * sum).min(1.0))
}

fn check_samples(samples: &[BitVec]) -> Result<usize> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Contract("empty sample set".into()))?;
    let width = first.len();
    if let Some(bad) = samples.iter().find(|s| s.len() != width) {
        return Err(Error::shape("sample width", width, bad.len()));
    }
    Ok(width)
}

/// Normalized counts of the distinct samples.
pub fn empirical_pmf(samples: &[BitVec]) -> Result<PmfTable> {
    let width = check_samples(samples)?;
    let mut counts: BTreeMap<BitVec, usize> = BTreeMap::new();
    for s in samples {
        *counts.entry(s.clone()).or_default() += 1;
    }
    let n = samples.len() as f64;
    let probs = counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect();
    PmfTable::new(width, probs)
}

/// Per-position mean of binary samples.
pub fn firing_rates(samples: &[BitVec]) -> Result<Vec<f64>> {
    let width = check_samples(samples)?;
    let mut counts = vec![0usize; width];
    for s in samples {
        for i in s.ones() {
            counts[i] += 1;
        }
    }
    let n = samples.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Per-pixel means; identical to [`firing_rates`], named for image data.
pub fn marginals(samples: &[BitVec]) -> Result<Vec<f64>> {
    firing_rates(samples)
}

/// `log Σ exp(v) ` with the maximum shifted out.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn output_log_prob(a: &[f64], x: &BitVec) -> f64 {
    a.iter()
        .zip(x.iter())
        .map(|(&ai, xi)| {
            let (on, off) = log_sigmoid_pair(ai);
            if xi {
                on
            } else {
                off
            }
        })
        .sum()
}

/// Draws `samples` penultimate states and returns the output-layer
/// pre-activations for each, in draw order.
fn penultimate_preactivations(net: &BeliefNet, samples: usize, rng: &RngStream) -> Result<Vec<Vec<f64>>> {
    let Some(last) = net.layers().last() else {
        return Ok(vec![net.input().bias.clone()]);
    };
    (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut r = rng.split(s as u64);
            let (chain, _) = net.sample_output_probs(None, &mut r)?;
            last.preactivation(chain.states.last().expect("nonempty"))
        })
        .collect()
}

/// Total-probability estimate of `log p(hᴸ = x)`: the log of the mean of
/// `p(x | hᴸ⁻¹)` over `samples` ancestral draws of `hᴸ⁻¹`.
pub fn loglik_estimate(net: &BeliefNet, x: &BitVec, samples: usize, rng: &RngStream) -> Result<f64> {
    Ok(mean_loglik(net, std::slice::from_ref(x), samples, rng)?[0])
}

/// [`loglik_estimate`] for many points, sharing one set of draws.
pub fn mean_loglik(net: &BeliefNet, xs: &[BitVec], samples: usize, rng: &RngStream) -> Result<Vec<f64>> {
    if samples == 0 {
        return Err(Error::Contract("log-likelihood needs at least one sample".into()));
    }
    for x in xs {
        if x.len() != net.output_dim() {
            return Err(Error::shape("loglik point", net.output_dim(), x.len()));
        }
    }
    let pre = penultimate_preactivations(net, samples, rng)?;
    let ln_s = (pre.len() as f64).ln();
    Ok(xs
        .par_iter()
        .map(|x| {
            let terms: Vec<f64> = pre.iter().map(|a| output_log_prob(a, x)).collect();
            log_sum_exp(&terms) - ln_s
        })
        .collect())
}

/// Pearson correlation; `None` if either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&ranks(x), &ranks(y))
}

/// Writes `metric,value` rows.
pub fn write_report(path: &Path, rows: &[(String, f64)]) -> Result<()> {
    let mut out = String::from("metric,value\n");
    for (name, value) in rows {
        out.push_str(&format!("{name},{value}\n"));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}
