//! Data ingestion: IDX image sets, the 65-column 8×8 digit table, and
//! binary spike trains (synthetic or from CSV).

mod digits;
mod idx;
mod spikes;

pub use digits::{load_digits_csv, parse_digits_csv, DIGITS_THRESHOLD};
pub use idx::{load_idx, parse_idx, IdxTensor, IDX_THRESHOLD};
pub use spikes::{load_spikes_csv, parse_spikes_csv, synth_spikes, SpikeTrains, SHARED_RATE_MULTIPLIER};

use crate::error::{Error, Result};
use crate::numcore::BitVec;

/// The empirical measure over a finite set of binary samples.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryDataset {
    samples: Vec<BitVec>,
    labels: Option<Vec<usize>>,
    sample_shape: Option<(usize, usize)>,
}

impl BinaryDataset {
    pub fn new(samples: Vec<BitVec>, labels: Option<Vec<usize>>, sample_shape: Option<(usize, usize)>) -> Result<Self> {
        let width = samples.first().map_or(0, BitVec::len);
        if let Some(bad) = samples.iter().find(|s| s.len() != width) {
            return Err(Error::shape("dataset sample width", width, bad.len()));
        }
        if let Some(labels) = &labels {
            if labels.len() != samples.len() {
                return Err(Error::shape("dataset labels", samples.len(), labels.len()));
            }
        }
        if let Some((h, w)) = sample_shape {
            if h * w != width && !samples.is_empty() {
                return Err(Error::shape("dataset sample shape", width, h * w));
            }
        }
        Ok(Self {
            samples,
            labels,
            sample_shape,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn width(&self) -> usize {
        self.samples.first().map_or(0, BitVec::len)
    }

    pub fn samples(&self) -> &[BitVec] {
        &self.samples
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn sample_shape(&self) -> Option<(usize, usize)> {
        self.sample_shape
    }

    pub fn into_samples(self) -> Vec<BitVec> {
        self.samples
    }

    /// One-hot label vectors with `classes` entries each.
    pub fn one_hot_labels(&self, classes: usize) -> Result<Vec<BitVec>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::Usage("dataset has no labels".into()))?;
        labels.iter().map(|&l| one_hot(l, classes)).collect()
    }
}

/// Bit `i` is set iff `values[i] > threshold`.
pub fn binarize<T: Copy + Into<f64>>(values: &[T], threshold: f64) -> BitVec {
    BitVec::from_bools(values.iter().map(|&v| v.into() > threshold))
}

pub fn one_hot(label: usize, classes: usize) -> Result<BitVec> {
    if label >= classes {
        return Err(Error::Contract(format!(
            "label {label} out of range for {classes} classes"
        )));
    }
    let mut v = BitVec::zeros(classes);
    v.set(label, true);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binarize_is_strict() {
        assert_eq!(binarize(&[9u8, 8, 0, 16], 8.0).as_bytes(), &[1, 0, 0, 1]);
        assert_eq!(binarize(&[0u8; 64], 8.0).count_ones(), 0);
    }

    #[test]
    fn binarize_monotone_in_threshold() {
        let values: Vec<u8> = (0..=16).collect();
        for t in 0..16 {
            let lo = binarize(&values, t as f64);
            let hi = binarize(&values, t as f64 + 1.0);
            for i in 0..values.len() {
                assert!(hi.get(i) <= lo.get(i));
            }
        }
    }

    #[test]
    fn one_hot_cases() {
        assert_eq!(one_hot(3, 10).unwrap().as_bytes(), &[0, 0, 0, 1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(one_hot(0, 1).unwrap().as_bytes(), &[1]);
        assert!(one_hot(10, 10).is_err());
    }

    #[test]
    fn dataset_rejects_ragged() {
        let s = vec![BitVec::zeros(3), BitVec::zeros(4)];
        assert!(BinaryDataset::new(s, None, None).is_err());
        let s = vec![BitVec::zeros(4)];
        assert!(BinaryDataset::new(s.clone(), Some(vec![]), None).is_err());
        assert!(BinaryDataset::new(s, None, Some((2, 3))).is_err());
    }
}
