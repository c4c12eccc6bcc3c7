//! Reference greedy selection on dense Schur complements.

use nalgebra::DMatrix;

use crate::cholesky::CholeskyFactor;
use crate::error::{Error, Result};
use crate::model::RateConstantMatrix;

/// Outcome of Step 1, shared by every selection method.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyResult {
    /// Accepted pivots `s^(1..k)`, 0-based.
    pub pivots: Vec<usize>,
    /// `-K^(j-1)_{ss}` at selection time, in 1/second.
    pub pivot_diagonals: Vec<f64>,
    /// Best diagonal of the first rejected round; `None` when every state was pivoted.
    pub stop_diagonal: Option<f64>,
}

impl GreedyResult {
    pub fn k(&self) -> usize {
        self.pivots.len()
    }

    /// First position where the pivot sequences differ, counting a length
    /// mismatch as a difference at the shorter length.
    pub fn divergence_from(&self, reference: &GreedyResult) -> Option<usize> {
        let common = self.k().min(reference.k());
        (0..common)
            .find(|&j| self.pivots[j] != reference.pivots[j])
            .or_else(|| (self.k() != reference.k()).then_some(common))
    }
}

/// Dense working matrix of off-diagonal rates `K^(j)_uv >= 0`.
///
/// Stored column-major over positions; `order[pos]` is the state held at
/// `pos`, and positions `0..m` are the remaining states. Diagonal slots hold 0
/// and `diag[pos] = -K^(j)_vv` is kept separately.
struct Working {
    n: usize,
    m: usize,
    a: Vec<f64>,
    diag: Vec<f64>,
    order: Vec<usize>,
}

impl Working {
    fn new(k: &RateConstantMatrix) -> Self {
        let n = k.n();
        let mut a = vec![0.0; n * n];
        let mut diag = vec![0.0; n];
        for v in 0..n {
            let inv = 1.0 / k.pi()[v];
            let mut sum = 0.0;
            for &(u, w) in k.laplacian().column(v) {
                let r = w * inv;
                a[v * n + u] = r;
                sum += r;
            }
            diag[v] = sum;
        }
        Self {
            n,
            m: n,
            a,
            diag,
            order: (0..n).collect(),
        }
    }

    /// Position of the largest diagonal, ties to the smallest state.
    fn best(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for pos in 0..self.m {
            best = match best {
                None => Some(pos),
                Some(b) => {
                    let (x, y) = (self.diag[pos], self.diag[b]);
                    if x > y || (x == y && self.order[pos] < self.order[b]) {
                        Some(pos)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        best
    }

    fn swap(&mut self, p: usize, q: usize) {
        if p == q {
            return;
        }
        let (n, m) = (self.n, self.m);
        for v in 0..m {
            self.a.swap(v * n + p, v * n + q);
        }
        let (lo, hi) = (p.min(q), p.max(q));
        let (left, right) = self.a.split_at_mut(hi * n);
        left[lo * n..lo * n + m].swap_with_slice(&mut right[..m]);
        self.diag.swap(p, q);
        self.order.swap(p, q);
    }

    /// Eliminates the state at `pos`. Off-diagonals receive the nonnegative
    /// rank-one term `K_us K_sv / d_s`; diagonals are rebuilt as column sums.
    fn eliminate(&mut self, pos: usize) {
        let last = self.m - 1;
        self.swap(pos, last);
        let n = self.n;
        let inv = 1.0 / self.diag[last];
        let (head, col_s) = self.a.split_at_mut(last * n);
        let col_s = &col_s[..last];
        for v in 0..last {
            let col = &mut head[v * n..v * n + last + 1];
            let k_sv = col[last];
            // (K_us K_sv) / d_s keeps a symmetric K bitwise symmetric
            for (x, &y) in col[..last].iter_mut().zip(col_s) {
                *x += y * k_sv * inv;
            }
            col[v] = 0.0;
            self.diag[v] = col[..last].iter().sum();
        }
        self.m = last;
    }
}

fn run(
    k: &RateConstantMatrix,
    t_max: f64,
    mut factor: Option<&mut CholeskyFactor>,
) -> GreedyResult {
    let threshold = 1.0 / t_max;
    let mut w = Working::new(k);
    let mut result = GreedyResult {
        pivots: Vec::new(),
        pivot_diagonals: Vec::new(),
        stop_diagonal: None,
    };
    while let Some(pos) = w.best() {
        let d = w.diag[pos];
        if d < threshold {
            result.stop_diagonal = Some(d);
            break;
        }
        let s = w.order[pos];
        if let Some(f) = factor.as_deref_mut() {
            let pi_s = k.pi()[s];
            let c = (d * pi_s).sqrt();
            let col = &w.a[pos * w.n..pos * w.n + w.m];
            for p in 0..w.m {
                if p != pos {
                    f.push(w.order[p], -col[p] * pi_s / c);
                }
            }
            f.accept(s, c);
        }
        result.pivots.push(s);
        result.pivot_diagonals.push(d);
        w.eliminate(pos);
    }
    result
}

/// Greedy selection with stable diagonal recomputation.
pub fn greedy(k: &RateConstantMatrix, t_max: f64) -> GreedyResult {
    run(k, t_max, None)
}

/// [`greedy`], also recording the Cholesky factor of `L = -KΠ` implied by the
/// elimination.
pub fn greedy_with_factor(k: &RateConstantMatrix, t_max: f64) -> (GreedyResult, CholeskyFactor) {
    let mut factor = CholeskyFactor::new(k.n());
    let result = run(k, t_max, Some(&mut factor));
    (result, factor)
}

/// `-K^(j)` on the remaining states after eliminating `pivots` in order,
/// indexed by the remaining states in increasing order.
pub fn greedy_working_matrix(k: &RateConstantMatrix, pivots: &[usize]) -> (Vec<usize>, DMatrix<f64>) {
    let mut w = Working::new(k);
    for &s in pivots {
        let pos = w.order[..w.m].iter().position(|&v| v == s).expect("pivot remaining");
        w.eliminate(pos);
    }
    let mut remaining: Vec<(usize, usize)> = (0..w.m).map(|p| (w.order[p], p)).collect();
    remaining.sort_unstable();
    let r = remaining.len();
    let n = w.n;
    let m = DMatrix::from_fn(r, r, |a, b| {
        let (pa, pb) = (remaining[a].1, remaining[b].1);
        if a == b {
            w.diag[pb]
        } else {
            -w.a[pb * n + pa]
        }
    });
    (remaining.into_iter().map(|(v, _)| v).collect(), m)
}

/// `log det (-K)_{S+v} - log det (-K)_S` from explicit determinants.
pub fn marginal_gain_logdet(k: &RateConstantMatrix, set: &[usize], v: usize) -> Result<f64> {
    let n = k.n();
    if v >= n {
        return Err(Error::IndexOutOfRange { index: v, len: n });
    }
    if set.contains(&v) {
        return Err(Error::InvalidArgument(format!("state {v} already in the set")));
    }
    let det = |states: &[usize]| -> f64 {
        let m = DMatrix::from_fn(states.len(), states.len(), |a, b| {
            -k.rate(states[a], states[b])
        });
        m.determinant()
    };
    let base = det(set);
    if base == 0.0 {
        return Err(Error::SingularPrefix);
    }
    let mut with = set.to_vec();
    with.push(v);
    let aug = det(&with);
    if aug <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(aug.ln() - base.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{schur_complement_dense, validate, DEFAULT_BALANCE_TOLERANCE};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn three_state() -> RateConstantMatrix {
        RateConstantMatrix::from_edge_weights(3, &[(0, 1, 1.0), (0, 2, 2.0)], vec![1.0; 3]).unwrap()
    }

    fn two_state() -> RateConstantMatrix {
        validate(2, &[(0, 1, 2.0), (1, 0, 1.0)], vec![2.0, 1.0], DEFAULT_BALANCE_TOLERANCE).unwrap()
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, density: f64) -> RateConstantMatrix {
        let mut edges = Vec::new();
        for v in 1..n {
            edges.push((rng.gen_range(0..v), v, 10f64.powf(rng.gen_range(-2.0..2.0))));
        }
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen_bool(density) && !edges.iter().any(|&(a, b, _)| (a, b) == (u, v)) {
                    edges.push((u, v, 10f64.powf(rng.gen_range(-2.0..2.0))));
                }
            }
        }
        let pi = (0..n).map(|_| 10f64.powf(rng.gen_range(-1.0..1.0))).collect();
        RateConstantMatrix::from_edge_weights(n, &edges, pi).unwrap()
    }

    #[test]
    fn three_state_example() {
        let r = greedy(&three_state(), 10.0);
        assert_eq!(r.pivots, vec![0, 1]);
        assert_eq!(r.k(), 2);
        assert_eq!(r.pivot_diagonals[0], 3.0);
        assert_relative_eq!(r.pivot_diagonals[1], 2.0 / 3.0, max_relative = 1e-15);
        assert_eq!(r.stop_diagonal, Some(0.0));
    }

    #[test]
    fn two_state_example() {
        for t_max in [1.0, 1e3, 1e300] {
            let r = greedy(&two_state(), t_max);
            assert_eq!(r.pivots, vec![1]);
            assert_eq!(r.pivot_diagonals, vec![2.0]);
            assert_eq!(r.stop_diagonal, Some(0.0));
        }
    }

    #[test]
    fn nothing_above_threshold() {
        let r = greedy(&three_state(), 0.1);
        assert_eq!(r.k(), 0);
        assert_eq!(r.stop_diagonal, Some(3.0));
        // equality accepts
        let r = greedy(&three_state(), 1.0 / 3.0);
        assert_eq!(r.pivots, vec![0]);
    }

    #[test]
    fn isolated_and_empty() {
        let k = RateConstantMatrix::from_edge_weights(1, &[], vec![1.0]).unwrap();
        let r = greedy(&k, 1e9);
        assert_eq!(r.k(), 0);
        assert_eq!(r.stop_diagonal, Some(0.0));
        let k = RateConstantMatrix::from_edge_weights(0, &[], vec![]).unwrap();
        let r = greedy(&k, 1.0);
        assert_eq!((r.k(), r.stop_diagonal), (0, None));
    }

    #[test]
    fn divergence_index() {
        let a = GreedyResult { pivots: vec![1, 2, 3], pivot_diagonals: vec![], stop_diagonal: None };
        let mut b = a.clone();
        assert_eq!(a.divergence_from(&b), None);
        b.pivots[1] = 0;
        assert_eq!(a.divergence_from(&b), Some(1));
        b.pivots = vec![1, 2];
        assert_eq!(a.divergence_from(&b), Some(2));
    }

    #[test]
    fn marginal_gains() {
        let k = three_state();
        assert_relative_eq!(marginal_gain_logdet(&k, &[], 0).unwrap(), 3f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(
            marginal_gain_logdet(&k, &[0], 1).unwrap(),
            (2.0f64 / 3.0).ln(),
            max_relative = 1e-12
        );
        let iso = RateConstantMatrix::from_edge_weights(2, &[], vec![1.0; 2]).unwrap();
        assert_eq!(marginal_gain_logdet(&iso, &[], 0).unwrap(), f64::NEG_INFINITY);
        assert_eq!(marginal_gain_logdet(&two_state(), &[0, 1], 1), Err(Error::InvalidArgument("state 1 already in the set".into())));
        let k = RateConstantMatrix::from_edge_weights(3, &[(0, 1, 1.0)], vec![1.0; 3]).unwrap();
        assert_eq!(marginal_gain_logdet(&k, &[0, 1], 2), Err(Error::SingularPrefix));
    }

    #[test]
    fn gains_match_pivot_diagonals() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let k = random_instance(&mut rng, 10, 0.2);
            let r = greedy(&k, 1e3);
            for j in 0..r.k() {
                let s = r.pivots[j];
                let gain = marginal_gain_logdet(&k, &r.pivots[..j], s).unwrap();
                assert_relative_eq!(gain.exp(), r.pivot_diagonals[j], max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn gains_are_submodular_along_prefixes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let k = random_instance(&mut rng, 9, 0.3);
            let r = greedy(&k, 1e4);
            for a in 0..r.k() {
                for b in a..r.k() {
                    for v in (0..9).filter(|v| !r.pivots[..b].contains(v)) {
                        let small = marginal_gain_logdet(&k, &r.pivots[..a], v).unwrap();
                        let big = marginal_gain_logdet(&k, &r.pivots[..b], v).unwrap();
                        assert!(small >= big - 1e-8, "{small} < {big}");
                    }
                }
            }
        }
    }

    #[test]
    fn working_matrix_is_scaled_schur_complement() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let n = 12;
            let k = random_instance(&mut rng, n, 0.25);
            let r = greedy(&k, 1e3);
            for j in 0..=r.k() {
                let (rem, w) = greedy_working_matrix(&k, &r.pivots[..j]);
                let sc = schur_complement_dense(k.laplacian(), &r.pivots[..j]).unwrap();
                assert_eq!(rem, sc.remaining);
                for a in 0..rem.len() {
                    for b in 0..rem.len() {
                        let expect = sc.matrix[(a, b)] / k.pi()[rem[b]];
                        let got = w[(a, b)];
                        let scale = w.column(b).amax();
                        assert!(
                            (got - expect).abs() <= 1e-10 * got.abs().max(expect.abs()) + 1e-14 * scale,
                            "j={j} ({a},{b}): {got} vs {expect}"
                        );
                    }
                }
                // closure: Laplacian sign pattern and zero column sums
                for b in 0..rem.len() {
                    let col_sum: f64 = w.column(b).sum();
                    assert!(col_sum.abs() <= 1e-12 * w.column(b).amax().max(1e-300));
                }
            }
        }
    }

    #[test]
    fn factor_matches_doolittle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let k = random_instance(&mut rng, 15, 0.2);
            let (r, f) = greedy_with_factor(&k, 1e2);
            let fast = crate::cholesky::fast_greedy(&k, 1e2);
            assert_eq!(r.pivots, fast.result.pivots);
            for j in 0..r.k() {
                for u in 0..k.n() {
                    let (x, y) = (f.entry(u, j), fast.factor.entry(u, j));
                    assert!((x - y).abs() <= 1e-10 * x.abs().max(y.abs()) + 1e-14, "{x} vs {y}");
                }
            }
        }
    }
}
