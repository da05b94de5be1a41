use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.7, valid: 0.2, test: 0.1 }
    }
}

/// Contiguous train / validation / test blocks over a common temporal axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalSplit {
    pub train_end: usize,
    pub valid_end: usize,
    pub len: usize,
}

impl TemporalSplit {
    pub fn train(&self) -> Range<usize> {
        0..self.train_end
    }

    pub fn valid(&self) -> Range<usize> {
        self.train_end..self.valid_end
    }

    pub fn test(&self) -> Range<usize> {
        self.valid_end..self.len
    }
}

/// Train and validation sizes are floored; the test block takes the rest.
pub fn split_temporal(axis_length: usize, ratios: SplitRatios) -> Result<TemporalSplit> {
    if axis_length < 10 {
        return Err(Error::invalid("series too short to split"));
    }
    let SplitRatios { train, valid, test } = ratios;
    if [train, valid, test].iter().any(|r| !(r.is_finite() && *r > 0.0))
        || ((train + valid + test) - 1.0).abs() > 1e-9
    {
        return Err(Error::config("split ratios must be positive and sum to 1"));
    }
    // The small slack keeps e.g. 0.7 * 100 from flooring to 69.
    let n = axis_length as f64;
    let train_len = (train * n + 1e-9).floor() as usize;
    let valid_len = (valid * n + 1e-9).floor() as usize;
    if train_len == 0 || valid_len == 0 || train_len + valid_len >= axis_length {
        return Err(Error::invalid("series too short to split"));
    }
    Ok(TemporalSplit {
        train_end: train_len,
        valid_end: train_len + valid_len,
        len: axis_length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_ratios() {
        let s = split_temporal(100, SplitRatios::default()).unwrap();
        assert_eq!((s.train(), s.valid(), s.test()), (0..70, 70..90, 90..100));
    }

    #[test]
    fn remainder_goes_to_test() {
        let s = split_temporal(101, SplitRatios::default()).unwrap();
        assert_eq!((s.train().len(), s.valid().len(), s.test().len()), (70, 20, 11));
    }

    #[test]
    fn too_short() {
        let err = split_temporal(9, SplitRatios::default()).unwrap_err();
        assert_eq!(err.to_string(), "invalid input: series too short to split");
    }

    #[test]
    fn blocks_partition_axis() {
        for n in 10..500 {
            let s = split_temporal(n, SplitRatios::default()).unwrap();
            assert!(s.train_end < s.valid_end && s.valid_end < s.len);
            assert_eq!(s.train().len() + s.valid().len() + s.test().len(), n);
            assert_eq!(s.train().len(), n * 7 / 10);
            assert_eq!(s.valid().len(), n * 2 / 10);
        }
    }
}
