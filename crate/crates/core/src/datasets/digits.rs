use std::path::Path;

use crate::error::{Error, Result};

use super::{binarize, BinaryDataset};

/// Binarization threshold on the 0..16 pixel scale.
pub const DIGITS_THRESHOLD: f64 = 8.0;

const PIXELS: usize = 64;

pub fn load_digits_csv(path: impl AsRef<Path>, threshold: f64) -> Result<BinaryDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_digits_csv(&text, threshold, &path.display().to_string())
}

/// Parses rows of 64 pixel values in 0..=16 followed by a label in 0..=9.
/// Blank lines are skipped; row numbers in errors are 1-based line numbers.
pub fn parse_digits_csv(text: &str, threshold: f64, source_name: &str) -> Result<BinaryDataset> {
    let fail = |line: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        message: format!("row {line}: {message}"),
    };
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != PIXELS + 1 {
            return Err(fail(
                line_no,
                format!("expected {} columns, found {}", PIXELS + 1, cells.len()),
            ));
        }
        let mut values = [0u8; PIXELS + 1];
        for (j, cell) in cells.iter().enumerate() {
            values[j] = cell.parse::<u8>().map_err(|_| {
                fail(
                    line_no,
                    format!("column {}: {cell:?} is not a non-negative integer", j + 1),
                )
            })?;
        }
        if let Some(j) = values[..PIXELS].iter().position(|&v| v > 16) {
            return Err(fail(
                line_no,
                format!("column {}: pixel {} outside 0..16", j + 1, values[j]),
            ));
        }
        let label = values[PIXELS];
        if label > 9 {
            return Err(fail(line_no, format!("label {label} outside 0..9")));
        }
        samples.push(binarize(&values[..PIXELS], threshold));
        labels.push(label as usize);
    }
    if samples.is_empty() {
        return Err(Error::Parse {
            source_name: source_name.to_string(),
            message: "no rows".into(),
        });
    }
    BinaryDataset::new(samples, Some(labels), Some((8, 8)))
}
