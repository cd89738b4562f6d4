use std::path::Path;

use crate::error::{Error, IdxError, Result};
use crate::numcore::BitVec;

use super::{binarize, BinaryDataset};

/// Binarization threshold for 0..255 image data.
pub const IDX_THRESHOLD: f64 = 127.0;

const MAGIC_LABELS: u32 = 0x0000_0801;
const MAGIC_IMAGES: u32 = 0x0000_0803;

/// Raw unsigned-byte tensor from an IDX file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxTensor {
    pub shape: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    /// Treats the first axis as the sample axis and binarizes each item.
    pub fn to_dataset(&self, threshold: f64, labels: Option<&IdxTensor>) -> Result<BinaryDataset> {
        let n = self.shape[0];
        let item: usize = self.shape[1..].iter().product();
        let samples = (0..n)
            .map(|i| binarize(&self.data[i * item..(i + 1) * item], threshold))
            .collect::<Vec<BitVec>>();
        let labels = match labels {
            Some(l) if l.shape.len() == 1 => Some(l.data.iter().map(|&v| v as usize).collect()),
            Some(l) => return Err(Error::shape("idx label rank", 1, l.shape.len())),
            None => None,
        };
        let sample_shape = (self.shape.len() == 3).then(|| (self.shape[1], self.shape[2]));
        BinaryDataset::new(samples, labels, sample_shape)
    }
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxTensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes, &path.display().to_string())
}

/// Parses an IDX byte stream: a big-endian magic word whose low byte is the
/// rank, one big-endian u32 per dimension, then the payload.
pub fn parse_idx(bytes: &[u8], source_name: &str) -> Result<IdxTensor> {
    let fail = |kind| Error::Idx {
        source_name: source_name.to_string(),
        kind,
    };
    let word = |i: usize| -> Result<u32> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| {
                fail(IdxError::Truncated {
                    expected: 4 * i + 4,
                    actual: bytes.len(),
                })
            })
    };
    let magic = word(0)?;
    let rank = match magic {
        MAGIC_LABELS => 1,
        MAGIC_IMAGES => 3,
        other => return Err(fail(IdxError::BadMagic(other))),
    };
    let shape = (1..=rank)
        .map(|i| word(i).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 4 * (rank + 1);
    let expected = header + shape.iter().product::<usize>();
    if bytes.len() < expected {
        return Err(fail(IdxError::Truncated {
            expected,
            actual: bytes.len(),
        }));
    }
    if bytes.len() > expected {
        return Err(fail(IdxError::SizeMismatch {
            expected,
            actual: bytes.len(),
        }));
    }
    Ok(IdxTensor {
        shape,
        data: bytes[header..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_err(r: Result<IdxTensor>) -> IdxError {
        match r {
            Err(Error::Idx { kind, .. }) => kind,
            other => panic!("expected idx error, got {other:?}"),
        }
    }

    #[test]
    fn label_vector() {
        let mut b = vec![0, 0, 8, 1, 0, 0, 0, 5];
        b.extend([1, 2, 3, 4, 5]);
        let t = parse_idx(&b, "mem").unwrap();
        assert_eq!(t.shape, vec![5]);
        assert_eq!(t.data, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn image_tensor() {
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28];
        b.extend(std::iter::repeat_n(200u8, 1568));
        let t = parse_idx(&b, "mem").unwrap();
        assert_eq!(t.shape, vec![2, 28, 28]);
        let ds = t.to_dataset(IDX_THRESHOLD, None).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.sample_shape(), Some((28, 28)));
        assert_eq!(ds.samples()[1].count_ones(), 784);
    }

    #[test]
    fn distinct_failures() {
        assert_eq!(
            idx_err(parse_idx(&[0, 0, 8, 2, 0, 0, 0, 1, 7], "m")),
            IdxError::BadMagic(0x802)
        );
        let mut b = vec![0, 0, 8, 1, 0, 0, 0, 5, 1, 2];
        assert_eq!(
            idx_err(parse_idx(&b, "m")),
            IdxError::Truncated {
                expected: 13,
                actual: 10
            }
        );
        b.extend([3, 4, 5, 6]);
        assert_eq!(
            idx_err(parse_idx(&b, "m")),
            IdxError::SizeMismatch {
                expected: 13,
                actual: 14
            }
        );
        assert!(matches!(idx_err(parse_idx(&[0, 0], "m")), IdxError::Truncated { .. }));
    }
}
