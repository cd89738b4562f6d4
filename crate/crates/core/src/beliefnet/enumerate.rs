use crate::error::{Error, Result};
use crate::metrics::PmfTable;
use crate::numcore::{stable_sigmoid, BitVec};

use super::{BeliefNet, InputMode};

/// Largest number of free binary units the exact enumeration will visit.
pub const ENUMERATION_LIMIT: usize = 24;

impl BeliefNet {
    /// Units whose states are summed over by exact enumeration (all units,
    /// minus the input layer when it is clamped).
    pub fn free_units(&self) -> usize {
        let total: usize = self.sizes().iter().sum();
        if self.is_clamped() {
            total - self.input_dim()
        } else {
            total
        }
    }

    /// Exact output distribution as a dense table indexed by
    /// [`BitVec::to_index`] of the output layer.
    pub fn enumerate_output_probs(&self) -> Result<Vec<f64>> {
        let units = self.free_units();
        if units > ENUMERATION_LIMIT {
            return Err(Error::GuardExceeded {
                units,
                limit: ENUMERATION_LIMIT,
            });
        }
        let mut pmf = vec![0.0; 1usize << self.output_dim()];
        match self.mode() {
            InputMode::Clamped { condition } => {
                let c = condition
                    .as_ref()
                    .ok_or_else(|| Error::Usage("enumerating a clamped network needs a stored condition".into()))?;
                self.descend(0, c, 1.0, &mut pmf)?;
            }
            InputMode::Free => {
                let p: Vec<f64> = self.input().bias.iter().map(|&b| stable_sigmoid(b)).collect();
                let q: Vec<f64> = self.input().bias.iter().map(|&b| stable_sigmoid(-b)).collect();
                for code in 0..(1u64 << self.input_dim()) {
                    let h = BitVec::from_index(code, self.input_dim());
                    self.descend(0, &h, config_prob(&p, &q, code), &mut pmf)?;
                }
            }
        }
        Ok(pmf)
    }

    /// Exact output distribution `p(hᴸ)` by summing over every hidden
    /// configuration.
    pub fn enumerate_output_pmf(&self) -> Result<PmfTable> {
        let width = self.output_dim();
        let probs = self.enumerate_output_probs()?;
        PmfTable::from_dense(width, &probs)
    }

    // Depth-first walk: `h` is the state of layer `l` (0-based), reached
    // with total probability `weight`.
    fn descend(&self, l: usize, h: &BitVec, weight: f64, pmf: &mut [f64]) -> Result<()> {
        let Some(layer) = self.layers().get(l) else {
            pmf[h.to_index() as usize] += weight;
            return Ok(());
        };
        let a = layer.preactivation(h)?;
        let p: Vec<f64> = a.iter().map(|&x| stable_sigmoid(x)).collect();
        let q: Vec<f64> = a.iter().map(|&x| stable_sigmoid(-x)).collect();
        let width = layer.output_dim();
        let last = l + 1 == self.layers().len();
        for code in 0..(1u64 << width) {
            let w = weight * config_prob(&p, &q, code);
            if last {
                pmf[code as usize] += w;
            } else {
                self.descend(l + 1, &BitVec::from_index(code, width), w, pmf)?;
            }
        }
        Ok(())
    }
}

fn config_prob(p: &[f64], q: &[f64], code: u64) -> f64 {
    p.iter()
        .zip(q)
        .enumerate()
        .map(|(i, (pi, qi))| if (code >> i) & 1 == 1 { *pi } else { *qi })
        .product()
}
