//! Pivoted Cholesky factorizations and `FastGreedy`.
//!
//! Two routes to the same factor: full-pivoting Gaussian elimination, which
//! keeps the dense Schur complement, and the pivoted Doolittle scheme, which
//! keeps only the diagonal `d` and rebuilds each column from inner products of
//! earlier rows. `fast_greedy` is the Doolittle scheme on `L = -KΠ` with the
//! pivot rule `argmax d_v / π_v`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::greedy::GreedyResult;
use crate::model::RateConstantMatrix;

/// Column-wise partial Cholesky factor stored by rows.
///
/// `row(u)[l]` is `C_{u,l}` for the first `row(u).len()` columns; the rest of
/// the row is either structurally zero (for pivots) or not yet computed (for
/// lazily refreshed states). The pivot selected at position `j` owns the
/// diagonal entry `row(s)[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    pivots: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl CholeskyFactor {
    pub fn new(n: usize) -> Self {
        Self {
            pivots: Vec::new(),
            rows: vec![Vec::new(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Number of accepted pivots (columns).
    pub fn k(&self) -> usize {
        self.pivots.len()
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    /// Computed prefix of row `u`.
    pub fn row(&self, u: usize) -> &[f64] {
        &self.rows[u]
    }

    /// `C_{u,j}`, reading uncomputed entries as 0.
    pub fn entry(&self, u: usize, j: usize) -> f64 {
        self.rows[u].get(j).copied().unwrap_or(0.0)
    }

    /// `C_{s^(j), j}`.
    pub fn pivot_entry(&self, j: usize) -> f64 {
        self.rows[self.pivots[j]][j]
    }

    /// Column `j` as a dense vector over all states.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n()).map(|u| self.entry(u, j)).collect()
    }

    /// `n × k` dense matrix of the factor.
    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), self.k(), |u, j| self.entry(u, j))
    }

    pub(crate) fn push(&mut self, u: usize, value: f64) {
        self.rows[u].push(value);
    }

    pub(crate) fn accept(&mut self, s: usize, diagonal: f64) {
        debug_assert_eq!(self.rows[s].len(), self.pivots.len());
        self.rows[s].push(diagonal);
        self.pivots.push(s);
    }
}

/// Inner product over the common prefix of length `len`.
#[inline]
pub(crate) fn dot_prefix(a: &[f64], b: &[f64], len: usize) -> f64 {
    a[..len].iter().zip(&b[..len]).map(|(x, y)| x * y).sum()
}

fn check_square(l: &DMatrix<f64>) -> Result<()> {
    if l.nrows() != l.ncols() {
        return Err(Error::InvalidEntry(format!(
            "matrix is {}x{}, expected square",
            l.nrows(),
            l.ncols()
        )));
    }
    Ok(())
}

fn negative_floor(l: &DMatrix<f64>) -> f64 {
    -1e-12 * l.amax()
}

/// Stop when the best remaining diagonal is below `eps`, or not positive when `eps == 0`.
fn stops(best: f64, eps: f64) -> bool {
    best < eps || (eps <= 0.0 && best <= 0.0)
}

/// Argmax over `candidates` in increasing index order; ties keep the first.
fn argmax_by(candidates: &[usize], key: impl Fn(usize) -> f64) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for (pos, &v) in candidates.iter().enumerate() {
        let x = key(v);
        if best.map_or(true, |(_, _, b)| x > b) {
            best = Some((pos, v, x));
        }
    }
    best
}

/// Pivoted Gaussian elimination on a dense PSD matrix.
pub fn gaussian_cholesky(l: &DMatrix<f64>, eps: f64) -> Result<CholeskyFactor> {
    check_square(l)?;
    let n = l.nrows();
    let floor = negative_floor(l);
    let mut work = l.clone();
    let mut factor = CholeskyFactor::new(n);
    let mut remaining: Vec<usize> = (0..n).collect();
    for _ in 0..n {
        for &v in &remaining {
            if work[(v, v)] < floor {
                return Err(Error::NegativeDiagonal { state: v, value: work[(v, v)] });
            }
        }
        let Some((pos, s, best)) = argmax_by(&remaining, |v| work[(v, v)]) else {
            break;
        };
        if stops(best, eps) {
            break;
        }
        remaining.remove(pos);
        let pivot = best.sqrt();
        let j = factor.k();
        for &u in &remaining {
            factor.push(u, work[(u, s)] / pivot);
        }
        factor.accept(s, pivot);
        // L^(j) = L^(j-1) - c c^T, in the same operation order as the Doolittle scheme
        for &v in &remaining {
            let cv = factor.rows[v][j];
            for &u in &remaining {
                work[(u, v)] -= factor.rows[u][j] * cv;
            }
        }
    }
    Ok(factor)
}

/// Pivoted Doolittle scheme on a dense PSD matrix.
pub fn doolittle_cholesky(l: &DMatrix<f64>, eps: f64) -> Result<CholeskyFactor> {
    check_square(l)?;
    let n = l.nrows();
    let floor = negative_floor(l);
    let diag: Vec<f64> = (0..n).map(|v| l[(v, v)]).collect();
    let mut clamps = 0;
    doolittle_core(
        n,
        diag,
        |s, out: &mut Vec<f64>| {
            out.clear();
            out.extend(l.column(s).iter());
        },
        |_| 1.0,
        eps,
        Some(floor),
        &mut clamps,
    )
    .map(|(factor, _, _)| factor)
}

/// Shared Doolittle loop. `column(s, buf)` fills `buf` with the dense column
/// `L_{·s}`; `weight(v)` divides the diagonal for pivot selection.
///
/// Returns the factor, the accepted ratios `d_s / weight(s)` and the first
/// rejected ratio.
fn doolittle_core(
    n: usize,
    mut d: Vec<f64>,
    mut column: impl FnMut(usize, &mut Vec<f64>),
    weight: impl Fn(usize) -> f64,
    threshold: f64,
    negative_floor: Option<f64>,
    clamps: &mut u64,
) -> Result<(CholeskyFactor, Vec<f64>, Option<f64>)> {
    let mut factor = CholeskyFactor::new(n);
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut ratios = Vec::new();
    let mut buf = Vec::with_capacity(n);
    let mut stop = None;
    while !remaining.is_empty() {
        let (pos, s, best) = argmax_by(&remaining, |v| d[v] / weight(v)).expect("non-empty");
        if stops(best, threshold) {
            stop = Some(best);
            break;
        }
        remaining.remove(pos);
        let j = factor.k();
        let pivot = d[s].sqrt();
        column(s, &mut buf);
        for &u in &remaining {
            // running subtraction, so rounding matches the Gaussian updates
            let acc = factor.rows[u][..j]
                .iter()
                .zip(&factor.rows[s][..j])
                .fold(buf[u], |acc, (x, y)| acc - x * y);
            factor.push(u, acc / pivot);
        }
        factor.accept(s, pivot);
        ratios.push(best);
        for &v in &remaining {
            let c = factor.rows[v][j];
            let next = d[v] - c * c;
            if let Some(floor) = negative_floor {
                if next < floor {
                    return Err(Error::NegativeDiagonal { state: v, value: next });
                }
            }
            if next < 0.0 {
                *clamps += 1;
                d[v] = 0.0;
            } else {
                d[v] = next;
            }
        }
    }
    Ok((factor, ratios, stop))
}

/// Result of [`fast_greedy`].
#[derive(Debug, Clone, PartialEq)]
pub struct FastGreedyOutput {
    pub result: GreedyResult,
    pub factor: CholeskyFactor,
    /// Diagonal updates that went negative and were clamped to zero.
    pub clamp_events: u64,
}

/// `FastGreedy`: Doolittle on `L = -KΠ`, pivoting on `d_v / π_v` and stopping
/// once the best ratio drops below `1 / t_max`.
pub fn fast_greedy(k: &RateConstantMatrix, t_max: f64) -> FastGreedyOutput {
    let n = k.n();
    let lap = k.laplacian();
    let pi = k.pi();
    let diag: Vec<f64> = (0..n).map(|v| lap.diagonal(v)).collect();
    let mut clamps = 0;
    let (factor, ratios, stop) = doolittle_core(
        n,
        diag,
        |s, buf: &mut Vec<f64>| {
            buf.clear();
            buf.resize(n, 0.0);
            for &(u, w) in lap.column(s) {
                buf[u] = -w;
            }
        },
        |v| pi[v],
        1.0 / t_max,
        None,
        &mut clamps,
    )
    .expect("no negative-diagonal check for Laplacian input");
    let result = GreedyResult {
        pivots: factor.pivots().to_vec(),
        pivot_diagonals: ratios,
        stop_diagonal: stop,
    };
    FastGreedyOutput {
        result,
        factor,
        clamp_events: clamps,
    }
}
