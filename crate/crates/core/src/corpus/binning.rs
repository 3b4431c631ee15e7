use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Equal-frequency quantization of summary lengths. `boundaries` are strictly
/// ascending; a length falls in bin `b` where `b` counts boundaries strictly
/// below it, so each boundary value belongs to the bin on its left.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LengthBinning {
    boundaries: Vec<usize>,
}

impl LengthBinning {
    pub fn from_boundaries(boundaries: Vec<usize>) -> Result<Self> {
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "length boundaries must be strictly ascending: {boundaries:?}"
            )));
        }
        Ok(LengthBinning { boundaries })
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn num_bins(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn assign(&self, length: usize) -> usize {
        self.boundaries.partition_point(|&b| b < length)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        for b in &self.boundaries {
            writeln!(out, "{b}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut boundaries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            boundaries.push(line.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("bad boundary {line:?}"),
            })?);
        }
        LengthBinning::from_boundaries(boundaries)
    }
}

/// Boundaries at the `i/k` empirical quantiles of the training summary lengths.
/// Ties that make quantiles coincide collapse bins, leaving fewer effective bins.
pub fn compute_length_bins(lengths: &[usize], k: usize) -> Result<LengthBinning> {
    if lengths.is_empty() {
        return Err(Error::Empty("summary lengths"));
    }
    if k == 0 {
        return Err(Error::Config("number of length bins must be positive".into()));
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let mut boundaries: Vec<usize> = (1..k).map(|i| sorted[(i * n).div_ceil(k) - 1]).collect();
    boundaries.dedup();
    // a boundary at the maximum length would leave its right bin empty
    if boundaries.last() == sorted.last() {
        boundaries.pop();
    }
    if boundaries.len() + 1 < k {
        log::warn!(
            "length binning collapsed to {} effective bins (requested {k})",
            boundaries.len() + 1
        );
    }
    LengthBinning::from_boundaries(boundaries)
}

pub fn assign_bin(length: usize, binning: &LengthBinning) -> usize {
    binning.assign(length)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_distinct_lengths() {
        let lengths: Vec<usize> = (1..=100).collect();
        let bins = compute_length_bins(&lengths, 10).unwrap();
        assert_eq!(bins.boundaries(), &[10, 20, 30, 40, 50, 60, 70, 80, 90]);
        let mut pop = [0usize; 10];
        for &l in &lengths {
            pop[bins.assign(l)] += 1;
        }
        assert_eq!(pop, [10; 10]);
    }

    #[test]
    fn single_bin() {
        let bins = compute_length_bins(&[3, 1, 2], 1).unwrap();
        assert!(bins.boundaries().is_empty());
        assert_eq!(bins.assign(1000), 0);
    }

    #[test]
    fn all_equal_lengths_collapse() {
        let bins = compute_length_bins(&[7; 50], 10).unwrap();
        assert_eq!(bins.num_bins(), 1);
        assert_eq!(bins.assign(7), 0);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(compute_length_bins(&[], 10), Err(Error::Empty(_))));
    }

    #[test]
    fn assignment_examples() {
        let bins = LengthBinning::from_boundaries(vec![10, 20]).unwrap();
        assert_eq!(assign_bin(0, &bins), 0);
        assert_eq!(assign_bin(10, &bins), 0);
        assert_eq!(assign_bin(15, &bins), 1);
        assert_eq!(assign_bin(21, &bins), 2);
        assert!(LengthBinning::from_boundaries(vec![3, 3]).is_err());
    }
}
