//! Segment trees over `(R≥0, +)`.
//!
//! Only additions of nonnegative values are ever performed, so every range sum
//! is free of cancellation. There is deliberately no subtraction path: removing
//! a value means overwriting its leaf with zero.

use crate::error::{Error, Result};

/// Bottom-up segment tree on a power-of-two padded array.
///
/// Ranges are 0-based and half-open; `sum(i, i)` is the empty range and
/// returns 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NonnegSegmentTree {
    len: usize,
    size: usize,
    nodes: Vec<f64>,
}

impl NonnegSegmentTree {
    pub fn new(values: &[f64]) -> Result<Self> {
        if let Some(&bad) = values.iter().find(|&&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::NegativeLeaf(bad));
        }
        let len = values.len();
        let size = len.next_power_of_two();
        let mut nodes = vec![0.0; 2 * size];
        nodes[size..size + len].copy_from_slice(values);
        for i in (1..size).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        Ok(Self { len, size, nodes })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> Result<f64> {
        if i >= self.len {
            return Err(Error::IndexOutOfRange { index: i, len: self.len });
        }
        Ok(self.nodes[self.size + i])
    }

    /// Sum of leaves `lo..hi`.
    pub fn sum(&self, lo: usize, hi: usize) -> Result<f64> {
        self.sum_with_visits(lo, hi).map(|(s, _)| s)
    }

    /// Like [`sum`](Self::sum), also reporting how many nodes were read.
    pub fn sum_with_visits(&self, lo: usize, hi: usize) -> Result<(f64, usize)> {
        if hi > self.len {
            return Err(Error::IndexOutOfRange { index: hi, len: self.len });
        }
        if lo > hi {
            return Err(Error::IndexOutOfRange { index: lo, len: hi });
        }
        Ok(self.fold(lo, hi))
    }

    /// Sum of all leaves.
    pub fn total(&self) -> f64 {
        if self.len == 0 {
            0.0
        } else {
            self.nodes[1]
        }
    }

    pub fn update(&mut self, i: usize, value: f64) -> Result<()> {
        self.update_with_visits(i, value).map(|_| ())
    }

    /// Replaces leaf `i`, returning the number of nodes rewritten.
    pub fn update_with_visits(&mut self, i: usize, value: f64) -> Result<usize> {
        if i >= self.len {
            return Err(Error::IndexOutOfRange { index: i, len: self.len });
        }
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::NegativeLeaf(value));
        }
        Ok(self.set(i, value))
    }

    fn set(&mut self, i: usize, value: f64) -> usize {
        let mut node = self.size + i;
        self.nodes[node] = value;
        let mut visits = 1;
        while node > 1 {
            node >>= 1;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
            visits += 1;
        }
        visits
    }

    fn fold(&self, lo: usize, hi: usize) -> (f64, usize) {
        let mut left = 0.0;
        let mut right = 0.0;
        let mut visits = 0;
        let mut l = lo + self.size;
        let mut r = hi + self.size;
        while l < r {
            if l & 1 == 1 {
                left += self.nodes[l];
                l += 1;
                visits += 1;
            }
            if r & 1 == 1 {
                r -= 1;
                right = self.nodes[r] + right;
                visits += 1;
            }
            l >>= 1;
            r >>= 1;
        }
        (left + right, visits)
    }
}

/// A segment tree whose leaves are the non-zero rows of one sparse column.
///
/// Rows are kept in a sorted index map so queries cost `O(log nnz)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseColumnTree {
    rows: Vec<usize>,
    tree: NonnegSegmentTree,
}

impl SparseColumnTree {
    /// `entries` must be sorted by row with distinct rows.
    pub fn new(entries: &[(usize, f64)]) -> Result<Self> {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        let rows = entries.iter().map(|&(r, _)| r).collect();
        let values: Vec<f64> = entries.iter().map(|&(_, x)| x).collect();
        Ok(Self {
            rows,
            tree: NonnegSegmentTree::new(&values)?,
        })
    }

    pub fn total(&self) -> f64 {
        self.tree.total()
    }

    /// Sum over every stored row except `row`, as two range queries.
    pub fn sum_excluding(&self, row: usize) -> f64 {
        let at = self.rows.partition_point(|&r| r < row);
        let skip = if self.rows.get(at) == Some(&row) { at + 1 } else { at };
        let (a, _) = self.tree.fold(0, at);
        let (b, _) = self.tree.fold(skip, self.rows.len());
        a + b
    }

    /// Sets the leaf for `row` to zero; no-op when `row` is not stored.
    pub fn zero(&mut self, row: usize) {
        if let Ok(at) = self.rows.binary_search(&row) {
            self.tree.set(at, 0.0);
        }
    }

    pub fn get(&self, row: usize) -> f64 {
        match self.rows.binary_search(&row) {
            Ok(at) => self.tree.nodes[self.tree.size + at],
            Err(_) => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.rows.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_examples() {
        let mut t = NonnegSegmentTree::new(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.total(), 6.0);
        assert_eq!(t.sum(0, 3).unwrap(), 6.0);
        assert_eq!(t.sum(1, 2).unwrap(), 2.0);
        assert_eq!(t.sum(2, 2).unwrap(), 0.0);
        t.update(1, 0.0).unwrap();
        assert_eq!(t.sum(0, 3).unwrap(), 4.0);
        t.update(1, 0.0).unwrap();
        assert_eq!(t.sum(0, 3).unwrap(), 4.0);
    }

    #[test]
    fn empty_tree() {
        let t = NonnegSegmentTree::new(&[]).unwrap();
        assert_eq!(t.total(), 0.0);
        assert_eq!(t.sum(0, 0).unwrap(), 0.0);
        assert!(t.sum(0, 1).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(NonnegSegmentTree::new(&[1.0, -0.5]), Err(Error::NegativeLeaf(-0.5)));
        let mut t = NonnegSegmentTree::new(&[1.0]).unwrap();
        assert!(matches!(t.update(1, 1.0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(t.update(0, -1.0), Err(Error::NegativeLeaf(_))));
        assert!(matches!(t.sum(1, 0), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn large_total_matches_sequential_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..100_000).map(|_| rng.gen::<f64>()).collect();
        let t = NonnegSegmentTree::new(&values).unwrap();
        let naive: f64 = values.iter().sum();
        assert!((t.total() - naive).abs() <= 1e-12 * naive);
    }

    #[test]
    fn visit_counts_are_logarithmic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &m in &[1usize, 2, 3, 7, 64, 1000, 4097] {
            let values: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
            let mut t = NonnegSegmentTree::new(&values).unwrap();
            let bound = 2 * (m as f64).log2().ceil() as usize + 2;
            for _ in 0..200 {
                let a = rng.gen_range(0..=m);
                let b = rng.gen_range(0..=m);
                let (_, visits) = t.sum_with_visits(a.min(b), a.max(b)).unwrap();
                assert!(visits <= bound, "m={m} visits={visits}");
                let i = rng.gen_range(0..m);
                assert!(t.update_with_visits(i, 1.0).unwrap() <= bound);
            }
        }
    }

    #[test]
    fn sparse_column_excludes_a_row() {
        let mut c = SparseColumnTree::new(&[(1, 1.0), (4, 2.0), (7, 4.0)]).unwrap();
        assert_eq!(c.total(), 7.0);
        assert_eq!(c.sum_excluding(4), 5.0);
        assert_eq!(c.sum_excluding(1), 6.0);
        assert_eq!(c.sum_excluding(0), 7.0);
        assert_eq!(c.sum_excluding(9), 7.0);
        c.zero(7);
        c.zero(5);
        assert_eq!(c.total(), 3.0);
        assert_eq!(c.get(4), 2.0);
        assert_eq!(c.get(5), 0.0);
    }
}
