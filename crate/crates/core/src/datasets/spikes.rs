use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::{BitVec, RngStream};

use super::BinaryDataset;

/// Firing probability during a shared event, as a multiple of the base rate
/// (capped at 1).
pub const SHARED_RATE_MULTIPLIER: f64 = 10.0;

/// A frames × neurons binary matrix, stored one frame per row.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeTrains {
    neurons: usize,
    spikes: Vec<BitVec>,
    trials: Option<Vec<usize>>,
}

impl SpikeTrains {
    pub fn new(spikes: Vec<BitVec>, trials: Option<Vec<usize>>) -> Result<Self> {
        let neurons = spikes
            .first()
            .ok_or_else(|| Error::Contract("spike trains need at least one frame".into()))?
            .len();
        if let Some(bad) = spikes.iter().find(|f| f.len() != neurons) {
            return Err(Error::shape("spike frame width", neurons, bad.len()));
        }
        if let Some(t) = &trials {
            if t.windows(2).any(|w| w[0] >= w[1]) || t.last().is_some_and(|&e| e > spikes.len()) {
                return Err(Error::Contract(
                    "trial boundaries must increase and lie within the frames".into(),
                ));
            }
        }
        Ok(Self {
            neurons,
            spikes,
            trials,
        })
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn frames(&self) -> usize {
        self.spikes.len()
    }

    pub fn spikes(&self) -> &[BitVec] {
        &self.spikes
    }

    /// Start frames of each trial after the first, if recorded.
    pub fn trials(&self) -> Option<&[usize]> {
        self.trials.as_deref()
    }

    pub fn firing_rates(&self) -> Vec<f64> {
        crate::metrics::firing_rates(&self.spikes).expect("frames share one width")
    }

    /// Mean Pearson correlation over all neuron pairs with non-constant
    /// trains.
    pub fn mean_pairwise_correlation(&self) -> f64 {
        let columns: Vec<Vec<f64>> = (0..self.neurons)
            .map(|j| self.spikes.iter().map(|f| if f.get(j) { 1.0 } else { 0.0 }).collect())
            .collect();
        let mut total = 0.0;
        let mut pairs = 0usize;
        for a in 0..self.neurons {
            for b in a + 1..self.neurons {
                if let Some(r) = crate::metrics::pearson(&columns[a], &columns[b]) {
                    total += r;
                    pairs += 1;
                }
            }
        }
        if pairs == 0 {
            0.0
        } else {
            total / pairs as f64
        }
    }

    /// Each frame becomes one sample.
    pub fn to_dataset(&self) -> Result<BinaryDataset> {
        BinaryDataset::new(self.spikes.clone(), None, None)
    }
}

/// Correlated sparse spike trains. Each frame draws a shared event with
/// probability `shared_drive_prob`; neurons fire with `base_rate` outside
/// events and with `min(1, SHARED_RATE_MULTIPLIER · base_rate)` during them.
pub fn synth_spikes(
    neurons: usize,
    frames: usize,
    base_rate: f64,
    shared_drive_prob: f64,
    seed: u64,
) -> Result<SpikeTrains> {
    for (name, p) in [("base_rate", base_rate), ("shared_drive_prob", shared_drive_prob)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Contract(format!("{name} must lie in [0, 1], got {p}")));
        }
    }
    if neurons == 0 || frames == 0 {
        return Err(Error::Contract(
            "synthetic spike trains need at least one neuron and one frame".into(),
        ));
    }
    let elevated = (base_rate * SHARED_RATE_MULTIPLIER).min(1.0);
    let mut rng = RngStream::new(seed, 0);
    let spikes = (0..frames)
        .map(|_| {
            let p = if rng.bernoulli(shared_drive_prob) {
                elevated
            } else {
                base_rate
            };
            BitVec::from_bools((0..neurons).map(|_| rng.bernoulli(p)))
        })
        .collect();
    SpikeTrains::new(spikes, None)
}

pub fn load_spikes_csv(path: impl AsRef<Path>) -> Result<SpikeTrains> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_spikes_csv(&text, &path.display().to_string())
}

/// One row per frame, one 0/1 column per neuron.
pub fn parse_spikes_csv(text: &str, source_name: &str) -> Result<SpikeTrains> {
    let fail = |message: String| Error::Parse {
        source_name: source_name.to_string(),
        message,
    };
    let mut frames = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut bits = Vec::new();
        for (j, cell) in line.split(',').enumerate() {
            bits.push(match cell.trim() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(fail(format!(
                        "row {}, column {}: {other:?} is not 0 or 1",
                        i + 1,
                        j + 1
                    )))
                }
            });
        }
        if let Some(first) = frames.first().map(BitVec::len) {
            if bits.len() != first {
                return Err(fail(format!(
                    "row {}: expected {first} columns, found {}",
                    i + 1,
                    bits.len()
                )));
            }
        }
        frames.push(BitVec::from_bools(bits));
    }
    if frames.is_empty() {
        return Err(fail("no frames".into()));
    }
    SpikeTrains::new(frames, None)
}
