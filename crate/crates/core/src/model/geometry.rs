use serde::{Deserialize, Serialize};

/// Kernel lengths, filter counts and pool lengths of the text encoder's
/// convolution stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextGeometry {
    pub kernels: Vec<usize>,
    pub filters: Vec<usize>,
    pub pools: Vec<usize>,
}

impl Default for TextGeometry {
    fn default() -> Self {
        Self { kernels: vec![3, 3, 5], filters: vec![50, 30, 30], pools: vec![3, 3, 5] }
    }
}

impl TextGeometry {
    pub fn stages(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_consistent(&self) -> bool {
        let n = self.kernels.len();
        n > 0
            && self.filters.len() == n
            && self.pools.len() == n
            && self.kernels.iter().chain(&self.filters).chain(&self.pools).all(|&v| v > 0)
    }

    /// Sequence lengths after each convolution and each pooling, in order,
    /// or `None` if some stage receives fewer positions than it consumes.
    pub fn stage_lengths(&self, len: usize) -> Option<Vec<usize>> {
        let mut out = Vec::with_capacity(2 * self.stages());
        let mut n = len;
        for (&k, &p) in self.kernels.iter().zip(&self.pools) {
            if n < k {
                return None;
            }
            n = n - k + 1;
            out.push(n);
            if n < p {
                return None;
            }
            n /= p;
            out.push(n);
        }
        Some(out)
    }

    /// Length K of the flattened text features for input length `len`.
    pub fn feature_len(&self, len: usize) -> Option<usize> {
        let lengths = self.stage_lengths(len)?;
        Some(lengths.last().copied()? * self.filters.last().copied()?)
    }

    /// Smallest input length every stage accepts.
    pub fn min_len(&self) -> usize {
        // Lengths are monotone in the input, so the first admissible value
        // is the minimum. The receptive field bounds the search.
        let bound = self.kernels.iter().zip(&self.pools).rev().fold(1usize, |n, (&k, &p)| n * p + k - 1);
        (1..=bound).find(|&s| self.stage_lengths(s).is_some()).unwrap_or(bound)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_stack_at_500() {
        let g = TextGeometry::default();
        assert_eq!(g.stage_lengths(500).unwrap(), vec![498, 166, 164, 54, 50, 10]);
        assert_eq!(g.feature_len(500), Some(300));
    }

    #[test]
    fn minimum_length_of_default_stack() {
        let g = TextGeometry::default();
        // 89 → 87 → 29 → 27 → 9 → 5 → 1
        assert_eq!(g.min_len(), 89);
        assert!(g.stage_lengths(88).is_none());
        assert_eq!(g.feature_len(89), Some(30));
    }

    #[test]
    fn single_stage() {
        let g = TextGeometry { kernels: vec![2], filters: vec![4], pools: vec![3] };
        assert_eq!(g.min_len(), 4);
        assert_eq!(g.feature_len(10), Some(12));
    }
}
