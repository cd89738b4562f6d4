use std::fmt;

use crate::error::{Error, Result};

/// A vector of binary unit states, one byte per entry.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVec(Vec<u8>);

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::Contract(format!(
                "bit {pos} has value {}, expected 0 or 1",
                bits[pos]
            )));
        }
        Ok(Self(bits.to_vec()))
    }

    pub fn from_bools(bits: impl IntoIterator<Item = bool>) -> Self {
        Self(bits.into_iter().map(u8::from).collect())
    }

    /// Bits of `code`, least significant bit first.
    pub fn from_index(code: u64, len: usize) -> Self {
        Self((0..len).map(|i| ((code >> i) & 1) as u8).collect())
    }

    /// Inverse of [`BitVec::from_index`]; only meaningful for `len <= 64`.
    pub fn to_index(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &b)| acc | (u64::from(b) << i))
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.0[i] == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.0[i] = u8::from(value);
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().map(|&b| b == 1)
    }

    /// Indices of the set bits.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b == 1).map(|(i, _)| i)
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    pub fn to_reals(&self) -> Vec<f64> {
        self.0.iter().map(|&b| f64::from(b)).collect()
    }

    pub fn concat(&self, other: &BitVec) -> BitVec {
        let mut bits = self.0.clone();
        bits.extend_from_slice(&other.0);
        BitVec(bits)
    }
}

impl fmt::Display for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        for code in 0..32 {
            assert_eq!(BitVec::from_index(code, 5).to_index(), code);
        }
        assert_eq!(BitVec::from_index(0b110, 3).as_bytes(), &[0, 1, 1]);
    }

    #[test]
    fn rejects_non_binary() {
        assert!(BitVec::from_bits(&[0, 2]).is_err());
    }
}
