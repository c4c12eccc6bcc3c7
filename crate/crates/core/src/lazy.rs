//! `LazyFastGreedy` and the lazy selection loop shared with the stable variants.
//!
//! Each remaining state `v` carries a possibly stale key `ρ_v = d_v^(b_v) / π_v`
//! in a max-heap. Refreshing a state completes its factor row up to the current
//! column and recomputes `d_v`; how `d_v` is recomputed is the only thing that
//! differs between variants (see [`Refresh`]).
//!
//! The loop keeps the best state refreshed in the current round aside as a
//! champion. A round ends when the champion dominates the heap top, so every
//! pop touches a stale state and a state is popped at most once per round.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::cholesky::{dot_prefix, CholeskyFactor};
use crate::greedy::GreedyResult;
use crate::model::RateConstantMatrix;

/// Per-run work counters. Round `j` is 1-based; `c[j - 1]` is `c_j`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InstrumentationCounters {
    /// Heap pops per round, including the final rejected round when there is one.
    pub c: Vec<u64>,
    /// Final staleness marker per state.
    pub b: Vec<u64>,
    /// Total inner-product length spent completing factor rows.
    pub m_offdiag: u64,
    /// Total inner-product length spent recomputing diagonals (stable variants).
    pub m_diag: u64,
    pub relax_hits: u64,
    pub relax_misses: u64,
    /// Refreshed diagonals that went negative and were clamped to 0.
    pub clamp_events: u64,
    pub heap_pops: u64,
}

/// How `m_diag` relates to `c` for the method that produced the counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagAccounting {
    /// Diagonals are refreshed by subtraction; `m_diag` is unused.
    None,
    /// Every compressed-row entry is computed by an inner product.
    Exact,
    /// Some compressed-row entries may be relaxed.
    Relaxed,
}

/// `min(k, n - 1)`. With a finite horizon the last remaining state always has
/// a zero diagonal, so `k < n`; the cap only matters for degenerate inputs.
fn effective_k(k: usize, n: usize) -> u128 {
    k.min(n.saturating_sub(1)) as u128
}

impl InstrumentationCounters {
    pub fn sum_b(&self) -> u128 {
        self.b.iter().map(|&x| x as u128).sum()
    }

    pub fn sum_c(&self) -> u128 {
        self.c.iter().map(|&x| x as u128).sum()
    }

    /// `Σ_j (j-1) c_j`.
    pub fn sum_jm1_c(&self) -> u128 {
        self.c.iter().enumerate().map(|(i, &c)| i as u128 * c as u128).sum()
    }

    /// `½ Σ_j j (j-1) c_j`.
    pub fn half_sum_jjm1_c(&self) -> u128 {
        self.c
            .iter()
            .enumerate()
            .map(|(i, &c)| (i as u128 + 1) * i as u128 * c as u128)
            .sum::<u128>()
            / 2
    }

    /// `½ Σ_v b_v (b_v - 1)`.
    pub fn offdiag_formula(&self) -> u128 {
        self.b
            .iter()
            .map(|&b| b as u128 * (b as u128).saturating_sub(1) / 2)
            .sum()
    }

    /// `(k(k-1)(k+1)/6, k(k-1)(3n-2k-2)/6)`.
    pub fn offdiag_envelope(n: usize, k: usize) -> (u128, u128) {
        let k = effective_k(k, n);
        let n = n as u128;
        let lo = k * k.saturating_sub(1) * (k + 1) / 6;
        let hi = k * k.saturating_sub(1) * (3 * n).saturating_sub(2 * k + 2) / 6;
        (lo, hi)
    }

    /// `(k(k+1)(k+2)/6, k(k+1)(k+2)(4n-3k-1)/24)` for unrelaxed runs.
    pub fn diag_envelope(n: usize, k: usize) -> (u128, u128) {
        let k = effective_k(k, n);
        let n = n as u128;
        let base = k * (k + 1) * (k + 2);
        (base / 6, base * (4 * n).saturating_sub(3 * k + 1) / 24)
    }

    /// Every identity and inequality the counters must satisfy, as
    /// `(name, holds)` pairs. All arithmetic is exact.
    pub fn checks(&self, n: usize, k: usize, diag: DiagAccounting) -> Vec<(&'static str, bool)> {
        let mut out = vec![
            ("heap pops equal sum of c_j", self.heap_pops as u128 == self.sum_c()),
            ("M_offdiag = sum b(b-1)/2", self.m_offdiag as u128 == self.offdiag_formula()),
            ("sum c_j - 1 <= sum b_v", self.sum_c().saturating_sub(1) <= self.sum_b()),
            ("sum b_v <= sum (j-1) c_j", self.sum_b() <= self.sum_jm1_c()),
            (
                "c_1 = 1 and 1 <= c_j <= n-j+1",
                self.c.first().map_or(n == 0, |&c| c == 1)
                    && self
                        .c
                        .iter()
                        .enumerate()
                        .all(|(i, &c)| c >= 1 && c as usize <= n - i),
            ),
        ];
        let (lo, hi) = Self::offdiag_envelope(n, k);
        let m = self.m_offdiag as u128;
        out.push(("M_offdiag envelope", lo <= m && m <= hi));
        let md = self.m_diag as u128;
        match diag {
            DiagAccounting::None => {}
            DiagAccounting::Exact => {
                out.push(("M_diag = sum j(j-1)c_j/2", md == self.half_sum_jjm1_c()));
                let (lo, hi) = Self::diag_envelope(n, k);
                out.push(("M_diag envelope", lo <= md && md <= hi));
                out.push(("no relaxed entries", self.relax_hits == 0));
            }
            DiagAccounting::Relaxed => {
                out.push((
                    "sum (j-1)c_j <= M_diag <= sum j(j-1)c_j/2",
                    self.sum_jm1_c() <= md && md <= self.half_sum_jjm1_c(),
                ));
            }
        }
        out
    }

    /// Names of the failed checks.
    pub fn violations(&self, n: usize, k: usize, diag: DiagAccounting) -> Vec<&'static str> {
        self.checks(n, k, diag)
            .into_iter()
            .filter(|(_, ok)| !ok)
            .map(|(name, _)| name)
            .collect()
    }
}

/// Output of the lazy selection methods.
#[derive(Debug, Clone, PartialEq)]
pub struct LazyOutput {
    pub result: GreedyResult,
    pub factor: CholeskyFactor,
    pub counters: InstrumentationCounters,
}

/// Diagonal refresh policy plugged into [`lazy_loop`].
pub(crate) trait Refresh {
    /// Data produced alongside a refreshed diagonal and handed back on acceptance.
    type Row;

    /// New `d_v^(j-1)` for a state whose factor row was just completed to
    /// length `j - 1`, given its previous marker `old_b` and diagonal `d`.
    fn refresh(
        &mut self,
        v: usize,
        j: usize,
        old_b: usize,
        d: f64,
        factor: &CholeskyFactor,
        counters: &mut InstrumentationCounters,
    ) -> (f64, Self::Row);

    /// Called after `s` became pivot `j` with factor column `j` in place.
    fn accept(&mut self, s: usize, j: usize, row: Self::Row, factor: &CholeskyFactor);
}

#[derive(Debug, Clone, Copy)]
struct Key {
    rho: f64,
    v: usize,
}

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    // larger ρ first, then smaller index
    fn cmp(&self, other: &Self) -> Ordering {
        self.rho
            .total_cmp(&other.rho)
            .then_with(|| other.v.cmp(&self.v))
    }
}

/// Completes `C_{v,l}` for columns `from..to` by
/// `C_vl = (L_{v,s} - <C_v, C_s>) / C_{s,l}` with `s = s^(l)`.
fn complete_row(
    k: &RateConstantMatrix,
    factor: &mut CholeskyFactor,
    v: usize,
    from: usize,
    to: usize,
    counters: &mut InstrumentationCounters,
) {
    let lap = k.laplacian();
    for l in from..to {
        let s = factor.pivots()[l];
        let l_vs = -lap.weight(v, s);
        let ip = dot_prefix(factor.row(v), factor.row(s), l);
        debug_assert!(l_vs <= 0.0 && ip >= 0.0);
        let c = (l_vs - ip) / factor.pivot_entry(l);
        counters.m_offdiag += l as u64;
        factor.push(v, c);
    }
}

pub(crate) fn lazy_loop<R: Refresh>(k: &RateConstantMatrix, t_max: f64, policy: &mut R) -> LazyOutput {
    let n = k.n();
    let pi = k.pi();
    let threshold = 1.0 / t_max;
    let mut d: Vec<f64> = (0..n).map(|v| k.laplacian().diagonal(v)).collect();
    let mut b = vec![0usize; n];
    let mut factor = CholeskyFactor::new(n);
    let mut counters = InstrumentationCounters::default();
    let mut result = GreedyResult {
        pivots: Vec::new(),
        pivot_diagonals: Vec::new(),
        stop_diagonal: None,
    };
    let mut heap: BinaryHeap<Key> = (0..n).map(|v| Key { rho: d[v] / pi[v], v }).collect();
    let mut champion: Option<(Key, R::Row)> = None;
    let mut j = 1;
    loop {
        let champion_wins = match (&champion, heap.peek()) {
            (Some((ch, _)), Some(top)) => *ch >= *top,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if champion_wins {
            let (ch, row) = champion.take().expect("champion present");
            if ch.rho < threshold {
                result.stop_diagonal = Some(ch.rho);
                break;
            }
            let s = ch.v;
            factor.accept(s, d[s].sqrt());
            result.pivots.push(s);
            result.pivot_diagonals.push(ch.rho);
            policy.accept(s, j, row, &factor);
            j += 1;
            continue;
        }
        let Some(popped) = heap.pop() else {
            break;
        };
        let v = popped.v;
        if counters.c.len() < j {
            counters.c.push(0);
        }
        counters.c[j - 1] += 1;
        counters.heap_pops += 1;
        let old_b = b[v];
        complete_row(k, &mut factor, v, old_b, j - 1, &mut counters);
        let (dv, row) = policy.refresh(v, j, old_b, d[v], &factor, &mut counters);
        d[v] = dv;
        b[v] = j - 1;
        let key = Key { rho: dv / pi[v], v };
        match &champion {
            Some((ch, _)) if *ch >= key => heap.push(key),
            _ => {
                if let Some((old, _)) = champion.replace((key, row)) {
                    heap.push(old);
                }
            }
        }
    }
    counters.b = b.into_iter().map(|x| x as u64).collect();
    LazyOutput {
        result,
        factor,
        counters,
    }
}

/// Refresh by `d_v^(b_v) - Σ C_vl²`: cheap, and exposed to cancellation.
struct Subtract;

impl Refresh for Subtract {
    type Row = ();

    fn refresh(
        &mut self,
        v: usize,
        j: usize,
        old_b: usize,
        d: f64,
        factor: &CholeskyFactor,
        counters: &mut InstrumentationCounters,
    ) -> (f64, ()) {
        let row = factor.row(v);
        let mut next = d;
        for &c in &row[old_b..j - 1] {
            next -= c * c;
        }
        if next < 0.0 {
            counters.clamp_events += 1;
            next = 0.0;
        }
        (next, ())
    }

    fn accept(&mut self, _: usize, _: usize, _: (), _: &CholeskyFactor) {}
}

/// `LazyFastGreedy`.
pub fn lazy_fast_greedy(k: &RateConstantMatrix, t_max: f64) -> LazyOutput {
    lazy_loop(k, t_max, &mut Subtract)
}
