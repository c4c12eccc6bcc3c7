//! Reference times and approximate yields from a Step-1 factorization.
//!
//! For a pivot prefix `S` with remaining states `T`, the approximation puts
//!
//! ```text
//! q_T = U (p_T + (-L_TS) L_SS⁻¹ p_S)
//! q_S = Π_S L_SS⁻¹ (-L_ST) Π_T⁻¹ q_T
//! U_t = 1 / (1 + Σ_s π_s [L_SS⁻¹ (-L_ST)]_st / π_t)
//! ```
//!
//! `L_SS⁻¹` is applied through the pivot rows of the Cholesky factor, which
//! form a lower-triangular matrix with a positive diagonal and nonpositive
//! off-diagonal entries. Triangular solves against nonnegative right-hand
//! sides therefore only add nonnegative terms.

use std::time::{Duration, Instant};

use crate::cholesky::CholeskyFactor;
use crate::error::{Error, Result};
use crate::greedy::GreedyResult;
use crate::model::{RateConstantMatrix, YieldVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Every `j = 1..=k`.
    Full,
    /// Only `j = k`.
    Last,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEntry {
    /// Number of eliminated states, 1-based.
    pub j: usize,
    /// Reference time in seconds.
    pub t: f64,
    pub q: YieldVector,
    /// Wall time spent on this entry.
    pub tau: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub mode: Mode,
    pub entries: Vec<TrajectoryEntry>,
}

/// Pivot rows of the factor as a dense lower-triangular matrix in pivot order.
struct PivotBlock<'a> {
    factor: &'a CholeskyFactor,
}

impl PivotBlock<'_> {
    fn g(&self, l: usize, m: usize) -> f64 {
        self.factor.row(self.factor.pivots()[l])[m]
    }

    /// Solves `G Gᵀ x = b` on the leading `j × j` block for `b >= 0`.
    fn solve(&self, j: usize, b: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; j];
        for l in 0..j {
            let row = self.factor.row(self.factor.pivots()[l]);
            let mut acc = b[l];
            for m in 0..l {
                debug_assert!(row[m] <= 0.0);
                acc += -row[m] * y[m];
            }
            y[l] = acc / row[l];
        }
        let mut x = vec![0.0; j];
        for l in (0..j).rev() {
            let mut acc = y[l];
            for m in l + 1..j {
                acc += -self.g(m, l) * x[m];
            }
            x[l] = acc / self.g(l, l);
        }
        x
    }
}

fn check_inputs(
    k: &RateConstantMatrix,
    result: &GreedyResult,
    factor: &CholeskyFactor,
    p: &YieldVector,
) -> Result<()> {
    if factor.n() != k.n() || factor.k() < result.k() || factor.pivots()[..result.k()] != result.pivots[..] {
        return Err(Error::IncompatibleFactor);
    }
    if p.len() != k.n() {
        return Err(Error::InvalidEntry(format!(
            "initial vector has length {} but n = {}",
            p.len(),
            k.n()
        )));
    }
    for (j, &s) in result.pivots.iter().enumerate() {
        if factor.row(s).len() != j + 1 {
            return Err(Error::IncompatibleFactor);
        }
    }
    Ok(())
}

/// `q^(j)` for the prefix of `j` pivots.
fn project_prefix(
    k: &RateConstantMatrix,
    block: &PivotBlock<'_>,
    p: &[f64],
    j: usize,
    position: &[Option<usize>],
) -> Vec<f64> {
    let n = k.n();
    let lap = k.laplacian();
    let pi = k.pi();
    let pivots = &block.factor.pivots()[..j];
    let in_prefix = |v: usize| position[v].is_some_and(|l| l < j);

    let pi_s: Vec<f64> = pivots.iter().map(|&s| pi[s]).collect();
    let p_s: Vec<f64> = pivots.iter().map(|&s| p[s]).collect();
    let g = block.solve(j, &pi_s);
    let w = block.solve(j, &p_s);

    // colsum and the pushed-forward mass, both over edges leaving S
    let mut colsum = vec![0.0; n];
    let mut pushed = vec![0.0; n];
    for (l, &s) in pivots.iter().enumerate() {
        for &(t, weight) in lap.column(s) {
            if !in_prefix(t) {
                colsum[t] += g[l] * weight;
                pushed[t] += w[l] * weight;
            }
        }
    }
    let mut q = vec![0.0; n];
    for t in 0..n {
        if !in_prefix(t) {
            let u = 1.0 / (1.0 + colsum[t] / pi[t]);
            q[t] = u * (p[t] + pushed[t]);
        }
    }
    let mut rhs = vec![0.0; j];
    for (l, &s) in pivots.iter().enumerate() {
        for &(t, weight) in lap.column(s) {
            if !in_prefix(t) {
                rhs[l] += weight * (q[t] / pi[t]);
            }
        }
    }
    let z = block.solve(j, &rhs);
    for (l, &s) in pivots.iter().enumerate() {
        q[s] = pi[s] * z[l];
    }
    q
}

/// Reference times `t^(j) = 1 / pivot_diagonals[j - 1]` and yields `q^(j)`.
pub fn project(
    k: &RateConstantMatrix,
    result: &GreedyResult,
    factor: &CholeskyFactor,
    p: &YieldVector,
    mode: Mode,
) -> Result<Trajectory> {
    check_inputs(k, result, factor, p)?;
    let mut position = vec![None; k.n()];
    for (l, &s) in result.pivots.iter().enumerate() {
        position[s] = Some(l);
    }
    let block = PivotBlock { factor };
    let js: Vec<usize> = match mode {
        Mode::Full => (1..=result.k()).collect(),
        Mode::Last => (result.k() > 0).then_some(result.k()).into_iter().collect(),
    };
    let entries = js
        .into_iter()
        .map(|j| {
            let start = Instant::now();
            let q = project_prefix(k, &block, p.values(), j, &position);
            let q = YieldVector::new(q).expect("projection keeps yields nonnegative");
            TrajectoryEntry {
                j,
                t: 1.0 / result.pivot_diagonals[j - 1],
                q,
                tau: start.elapsed(),
            }
        })
        .collect();
    Ok(Trajectory { mode, entries })
}

/// `t → ∞` limit: `π` scaled to the mass of `p`.
pub fn stationary_limit(k: &RateConstantMatrix, p: &YieldVector) -> Result<YieldVector> {
    let components = k.laplacian().components();
    if components.len() > 1 {
        return Err(Error::DisconnectedNetwork { components });
    }
    if p.len() != k.n() {
        return Err(Error::InvalidEntry(format!(
            "initial vector has length {} but n = {}",
            p.len(),
            k.n()
        )));
    }
    let total: f64 = k.pi().iter().sum();
    let mass: f64 = p.values().iter().sum();
    YieldVector::new(k.pi().iter().map(|x| x * (mass / total)).collect())
}
