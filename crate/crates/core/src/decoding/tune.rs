use crate::error::{Error, Result};
use crate::numeric::Real;

/// Pairs `(min_len, max_len)` with min in {0, 10, ..., 60}, max in {30, 50, ..., 150}
/// and max > min.
pub fn default_length_grid() -> Vec<(usize, usize)> {
    let mut grid = Vec::new();
    for min in (0..=60).step_by(10) {
        for max in (30..=150).step_by(20) {
            if max > min {
                grid.push((min, max));
            }
        }
    }
    grid
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TunedLengths {
    pub min_len: usize,
    pub max_len: usize,
    pub score: Real,
}

/// Picks the grid pair with the highest dev score from `eval(min, max)`. Ties go
/// to the smaller `max_len`, then the larger `min_len`.
pub fn tune_min_max<F>(grid: &[(usize, usize)], mut eval: F) -> Result<TunedLengths>
where
    F: FnMut(usize, usize) -> Result<Real>,
{
    let mut best: Option<TunedLengths> = None;
    for &(min_len, max_len) in grid {
        let score = eval(min_len, max_len)?;
        let better = match best {
            None => true,
            Some(b) => {
                score > b.score
                    || (score == b.score && (max_len < b.max_len || (max_len == b.max_len && min_len > b.min_len)))
            }
        };
        if better {
            best = Some(TunedLengths {
                min_len,
                max_len,
                score,
            });
        }
    }
    best.ok_or(Error::Empty("length grid"))
}

/// Index of the highest score; ties go to the lowest index.
pub fn argmax_index(scores: &[Real]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shape() {
        let g = default_length_grid();
        assert!(g.iter().all(|&(a, b)| b > a));
        assert!(g.contains(&(0, 150)));
        assert!(g.contains(&(60, 70)));
        assert!(!g.contains(&(60, 50)));
    }

    #[test]
    fn single_pair_grid() {
        let t = tune_min_max(&[(3, 9)], |_, _| Ok(0.1)).unwrap();
        assert_eq!((t.min_len, t.max_len), (3, 9));
        assert!(tune_min_max(&[], |_, _| Ok(0.0)).is_err());
    }

    #[test]
    fn ties_prefer_short_max_then_long_min() {
        let grid = [(0, 30), (10, 30), (0, 50), (20, 50)];
        let t = tune_min_max(&grid, |_, _| Ok(0.5)).unwrap();
        assert_eq!((t.min_len, t.max_len), (10, 30));
        let t = tune_min_max(&grid, |a, _| Ok(if a == 20 { 0.9 } else { 0.5 })).unwrap();
        assert_eq!((t.min_len, t.max_len), (20, 50));
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax_index(&[0.1, 0.3, 0.3]), Some(1));
        assert_eq!(argmax_index(&[]), None);
    }
}
