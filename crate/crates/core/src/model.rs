//! Rate constant matrices, graph Laplacians and small dense oracles.
//!
//! A rate constant matrix `K` is never stored directly. We keep the symmetric
//! edge weights `w_uv = -L_uv > 0` of the Laplacian `L = -K Π` together with the
//! stationary weights `π`, and derive `K_uv = w_uv / π_v` on demand. Diagonals
//! are always synthesized as sums of off-diagonal magnitudes.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative detailed-balance tolerance applied by [`RateConstantMatrix::from_rates`].
pub const DEFAULT_BALANCE_TOLERANCE: f64 = 1e-9;

/// Symmetric weighted graph Laplacian stored column-wise.
///
/// Column `v` holds `(u, w_uv)` for every neighbour `u != v`, sorted by `u`,
/// with `w_uv = -L_uv > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    cols: Vec<Vec<(usize, f64)>>,
}

impl Laplacian {
    /// Builds a Laplacian from undirected edges `(u, v, w)` with `w = -L_uv`.
    ///
    /// Zero weights are dropped. Repeated pairs, self loops, negative or
    /// non-finite weights are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(u, v, w) in edges {
            if u >= n || v >= n {
                return Err(Error::IndexOutOfRange {
                    index: u.max(v),
                    len: n,
                });
            }
            if u == v {
                return Err(Error::InvalidEntry(format!("self loop at state {u}")));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidEntry(format!(
                    "edge ({u}, {v}) has weight {w}; expected a finite value >= 0"
                )));
            }
            if w == 0.0 {
                continue;
            }
            cols[v].push((u, w));
            cols[u].push((v, w));
        }
        for (v, col) in cols.iter_mut().enumerate() {
            col.sort_by_key(|&(u, _)| u);
            if let Some(pair) = col.windows(2).find(|p| p[0].0 == p[1].0) {
                return Err(Error::InvalidEntry(format!(
                    "edge ({}, {v}) listed more than once",
                    pair[0].0
                )));
            }
        }
        Ok(Self { cols })
    }

    pub fn n(&self) -> usize {
        self.cols.len()
    }

    /// Off-diagonal magnitudes of column `v`, sorted by row.
    pub fn column(&self, v: usize) -> &[(usize, f64)] {
        &self.cols[v]
    }

    /// `w_uv = -L_uv` (0 when there is no edge or `u == v`).
    pub fn weight(&self, u: usize, v: usize) -> f64 {
        let col = &self.cols[v];
        match col.binary_search_by_key(&u, |&(r, _)| r) {
            Ok(i) => col[i].1,
            Err(_) => 0.0,
        }
    }

    /// `L_vv`, the sum of the off-diagonal magnitudes of column `v`.
    pub fn diagonal(&self, v: usize) -> f64 {
        self.cols[v].iter().map(|&(_, w)| w).sum()
    }

    pub fn entry(&self, u: usize, v: usize) -> f64 {
        if u == v {
            self.diagonal(v)
        } else {
            -self.weight(u, v)
        }
    }

    /// Number of stored off-diagonal entries (both triangles).
    pub fn nnz_offdiag(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    /// Undirected edges `(u, v, w)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.cols.iter().enumerate().flat_map(|(v, col)| {
            col.iter()
                .filter(move |&&(u, _)| u > v)
                .map(move |&(u, w)| (v, u, w))
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for v in 0..n {
            for &(u, w) in &self.cols[v] {
                m[(u, v)] = -w;
            }
            m[(v, v)] = self.diagonal(v);
        }
        m
    }

    /// Connected components of the sparsity pattern, each sorted, ordered by
    /// smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut label = vec![usize::MAX; n];
        let mut out = Vec::new();
        for root in 0..n {
            if label[root] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![root];
            label[root] = id;
            let mut stack = vec![root];
            while let Some(v) = stack.pop() {
                for &(u, _) in &self.cols[v] {
                    if label[u] == usize::MAX {
                        label[u] = id;
                        members.push(u);
                        stack.push(u);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }
}

/// A validated rate constant matrix `K = -L Π^{-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateConstantMatrix {
    laplacian: Laplacian,
    pi: Vec<f64>,
}

impl RateConstantMatrix {
    /// Builds `K` from a Laplacian and stationary weights. RCM1-3 hold by
    /// construction; only `π > 0` needs checking.
    pub fn from_laplacian(laplacian: Laplacian, pi: Vec<f64>) -> Result<Self> {
        if pi.len() != laplacian.n() {
            return Err(Error::InvalidEntry(format!(
                "pi has length {} but the network has {} states",
                pi.len(),
                laplacian.n()
            )));
        }
        check_pi(&pi)?;
        Ok(Self { laplacian, pi })
    }

    /// Convenience wrapper around [`Laplacian::from_edges`].
    pub fn from_edge_weights(n: usize, edges: &[(usize, usize, f64)], pi: Vec<f64>) -> Result<Self> {
        Self::from_laplacian(Laplacian::from_edges(n, edges)?, pi)
    }

    /// Validates raw off-diagonal rates `(u, v, K_uv)` against `π`.
    ///
    /// Any diagonal supplied by the caller is ignored; the diagonal is always
    /// rebuilt from column sums. Detailed balance is checked pairwise against
    /// `tolerance` (relative), then the Laplacian is symmetrized by averaging
    /// `K_uv π_v` and `K_vu π_u`.
    pub fn from_rates(
        n: usize,
        rates: &[(usize, usize, f64)],
        pi: Vec<f64>,
        tolerance: f64,
    ) -> Result<Self> {
        if pi.len() != n {
            return Err(Error::InvalidEntry(format!(
                "pi has length {} but n = {n}",
                pi.len()
            )));
        }
        check_pi(&pi)?;

        let mut map: HashMap<(usize, usize), f64> = HashMap::with_capacity(rates.len());
        for &(u, v, k) in rates {
            if u >= n || v >= n {
                return Err(Error::IndexOutOfRange {
                    index: u.max(v),
                    len: n,
                });
            }
            if u == v {
                continue;
            }
            if !k.is_finite() {
                return Err(Error::InvalidEntry(format!("rate K[{u}][{v}] = {k}")));
            }
            if k < 0.0 {
                return Err(Error::NegativeRate {
                    row: u,
                    col: v,
                    value: k,
                });
            }
            if map.insert((u, v), k).is_some() {
                return Err(Error::InvalidEntry(format!(
                    "rate K[{u}][{v}] listed more than once"
                )));
            }
        }
        map.retain(|_, k| *k != 0.0);

        let mut keys: Vec<(usize, usize)> = map.keys().copied().collect();
        keys.sort_unstable();
        for &(u, v) in &keys {
            if !map.contains_key(&(v, u)) {
                return Err(Error::AsymmetricPattern { row: u, col: v });
            }
        }

        let mut worst: Option<(usize, usize, f64)> = None;
        let mut edges = Vec::with_capacity(keys.len() / 2);
        for &(u, v) in keys.iter().filter(|(u, v)| u < v) {
            let forward = map[&(u, v)] * pi[v];
            let backward = map[&(v, u)] * pi[u];
            let residual = (forward - backward).abs() / forward.max(backward);
            if worst.map_or(true, |(_, _, r)| residual > r) {
                worst = Some((u, v, residual));
            }
            edges.push((u, v, 0.5 * (forward + backward)));
        }
        if let Some((row, col, residual)) = worst {
            if residual > tolerance {
                return Err(Error::DetailedBalanceViolation {
                    row,
                    col,
                    residual,
                    tolerance,
                });
            }
        }
        Self::from_edge_weights(n, &edges, pi)
    }

    pub fn n(&self) -> usize {
        self.pi.len()
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn laplacian(&self) -> &Laplacian {
        &self.laplacian
    }

    /// `K_uv`; for `u == v` the derived diagonal `-Σ_{w≠v} K_wv`.
    pub fn rate(&self, u: usize, v: usize) -> f64 {
        if u == v {
            -self.laplacian.diagonal(v) / self.pi[v]
        } else {
            self.laplacian.weight(u, v) / self.pi[v]
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut k = DMatrix::zeros(n, n);
        for v in 0..n {
            let mut out = 0.0;
            for &(u, w) in self.laplacian.column(v) {
                let r = w / self.pi[v];
                k[(u, v)] = r;
                out += r;
            }
            k[(v, v)] = -out;
        }
        k
    }

    /// Ratio between the largest and smallest non-zero off-diagonal `|K_uv|`.
    pub fn dynamic_range(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for v in 0..self.n() {
            for &(_, w) in self.laplacian.column(v) {
                let r = w / self.pi[v];
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        if hi == 0.0 {
            1.0
        } else {
            hi / lo
        }
    }
}

fn check_pi(pi: &[f64]) -> Result<()> {
    for (state, &value) in pi.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonpositivePi { state, value });
        }
    }
    Ok(())
}

/// Validates raw rate data. See [`RateConstantMatrix::from_rates`].
pub fn validate(
    n: usize,
    rates: &[(usize, usize, f64)],
    pi: Vec<f64>,
    tolerance: f64,
) -> Result<RateConstantMatrix> {
    RateConstantMatrix::from_rates(n, rates, pi, tolerance)
}

pub fn to_laplacian(k: &RateConstantMatrix) -> Laplacian {
    k.laplacian.clone()
}

/// Nonnegative amounts per state.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldVector {
    values: Vec<f64>,
    mass: f64,
}

impl YieldVector {
    pub const NEGATIVE_SLACK: f64 = 1e-12;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, &x)) = values
            .iter()
            .enumerate()
            .find(|(_, &x)| !x.is_finite() || x < -Self::NEGATIVE_SLACK)
        {
            return Err(Error::InvalidEntry(format!("yield[{i}] = {x}")));
        }
        let mass = values.iter().sum();
        Ok(Self { values, mass })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
            mass: 0.0,
        }
    }

    pub fn point_mass(n: usize, state: usize) -> Result<Self> {
        if state >= n {
            return Err(Error::IndexOutOfRange { index: state, len: n });
        }
        let mut values = vec![0.0; n];
        values[state] = 1.0;
        Ok(Self { values, mass: 1.0 })
    }

    pub fn uniform(n: usize) -> Self {
        let values = vec![1.0 / n as f64; n];
        let mass = values.iter().sum();
        Self { values, mass }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Total mass recorded at construction.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Schur complement of a pivot set, indexed by the remaining states.
#[derive(Debug, Clone, PartialEq)]
pub struct SchurComplement {
    /// Remaining states in increasing order; row/column `i` of `matrix` is `remaining[i]`.
    pub remaining: Vec<usize>,
    pub matrix: DMatrix<f64>,
}

/// `L_TT - L_TS L_SS^{-1} L_ST` by sequential elimination of `pivots` in order.
///
/// Off-diagonals are updated by rank-one steps (adding nonpositive terms) and
/// each diagonal is rebuilt as the negated off-diagonal column sum.
pub fn schur_complement_dense(l: &Laplacian, pivots: &[usize]) -> Result<SchurComplement> {
    let n = l.n();
    let mut m = l.to_dense();
    let mut active = vec![true; n];
    for &s in pivots {
        if s >= n || !active[s] {
            return Err(Error::InvalidEntry(format!("pivot {s} invalid or repeated")));
        }
        let pivot = m[(s, s)];
        if !(pivot > 0.0) {
            return Err(Error::SingularPivot { state: s, value: pivot });
        }
        active[s] = false;
        let rest: Vec<usize> = (0..n).filter(|&u| active[u]).collect();
        for &v in &rest {
            let f = m[(s, v)] / pivot;
            if f == 0.0 {
                continue;
            }
            for &u in &rest {
                if u != v {
                    m[(u, v)] -= m[(u, s)] * f;
                }
            }
        }
        for &v in &rest {
            let mut d = 0.0;
            for &u in &rest {
                if u != v {
                    d -= m[(u, v)];
                }
            }
            m[(v, v)] = d;
        }
    }
    let remaining: Vec<usize> = (0..n).filter(|&u| active[u]).collect();
    let r = remaining.len();
    let matrix = DMatrix::from_fn(r, r, |a, b| m[(remaining[a], remaining[b])]);
    Ok(SchurComplement { remaining, matrix })
}

/// Largest size accepted by [`exact_solve_small`].
pub const EXACT_SOLVE_MAX_STATES: usize = 50;
/// Largest `|K_uv|` dynamic range accepted by [`exact_solve_small`].
pub const EXACT_SOLVE_MAX_RANGE: f64 = 1e6;

/// `x(t) = exp(tK) p` through the symmetric similarity `Π^{-1/2} L Π^{-1/2}`.
///
/// Only intended as a tiny, well-conditioned reference.
pub fn exact_solve_small(k: &RateConstantMatrix, p: &YieldVector, t: f64) -> Result<YieldVector> {
    let n = k.n();
    if n > EXACT_SOLVE_MAX_STATES {
        return Err(Error::OracleOutOfRange(format!(
            "{n} states exceeds {EXACT_SOLVE_MAX_STATES}"
        )));
    }
    let range = k.dynamic_range();
    if range > EXACT_SOLVE_MAX_RANGE {
        return Err(Error::OracleOutOfRange(format!(
            "rate dynamic range {range:e} exceeds {EXACT_SOLVE_MAX_RANGE:e}"
        )));
    }
    if p.len() != n {
        return Err(Error::InvalidEntry(format!(
            "initial vector has length {} but n = {n}",
            p.len()
        )));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::OracleOutOfRange(format!("time {t} must be finite and >= 0")));
    }
    if t == 0.0 {
        return Ok(p.clone());
    }
    let sqrt_pi: Vec<f64> = k.pi().iter().map(|x| x.sqrt()).collect();
    let l = k.laplacian().to_dense();
    let a = DMatrix::from_fn(n, n, |u, v| l[(u, v)] / (sqrt_pi[u] * sqrt_pi[v]));
    let eig = a.symmetric_eigen();
    let y = DVector::from_fn(n, |u, _| p.values()[u] / sqrt_pi[u]);
    let coeff = eig.eigenvectors.transpose() * y;
    let decayed = DVector::from_fn(n, |i, _| coeff[i] * (-t * eig.eigenvalues[i].max(0.0)).exp());
    let z = &eig.eigenvectors * decayed;
    let x: Vec<f64> = (0..n).map(|u| z[u] * sqrt_pi[u]).collect();
    let mass = x.iter().sum();
    Ok(YieldVector { values: x, mass })
}
