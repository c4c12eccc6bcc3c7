//! Seeded synthetic networks with a controllable dynamic range.
//!
//! A uniformly random recursive spanning tree over a shuffled labelling keeps
//! the graph connected; extra distinct edges are added until the requested
//! average degree is met. Edge weights are `10^U[lo, hi]` and stationary
//! weights `10^U[pi_lo, pi_hi]`. The PRNG is ChaCha8 seeded with `seed`.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::RateConstantMatrix;

pub const GENERATOR_NAME: &str = "chacha8-spanning-tree-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub n: usize,
    /// Target average degree; the tree alone gives `2 (n - 1) / n`.
    pub degree: f64,
    pub seed: u64,
    /// `log10` range of the edge weights `w_uv = -L_uv`.
    pub weight_log10: (f64, f64),
    /// `log10` range of `π`.
    pub pi_log10: (f64, f64),
}

impl GeneratorSpec {
    /// Well-conditioned defaults: weights in `[1e-3, 1e3]`, `π` in `[0.1, 10]`.
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            degree: 3.0,
            seed,
            weight_log10: (-3.0, 3.0),
            pi_log10: (-1.0, 1.0),
        }
    }

    pub fn with_degree(mut self, degree: f64) -> Self {
        self.degree = degree;
        self
    }

    pub fn with_weight_range(mut self, lo: f64, hi: f64) -> Self {
        self.weight_log10 = (lo, hi);
        self
    }

    pub fn with_pi_range(mut self, lo: f64, hi: f64) -> Self {
        self.pi_log10 = (lo, hi);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidSpec("n must be at least 1".into()));
        }
        if !(self.degree >= 0.0) || !self.degree.is_finite() {
            return Err(Error::InvalidSpec(format!("degree {} must be finite and >= 0", self.degree)));
        }
        for (name, (lo, hi)) in [("weight", self.weight_log10), ("pi", self.pi_log10)] {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidSpec(format!("{name} range [{lo}, {hi}] is empty")));
            }
            // keep every value a finite, normal f64
            if lo < -300.0 || hi > 300.0 {
                return Err(Error::InvalidSpec(format!("{name} range [{lo}, {hi}] exceeds 1e±300")));
            }
        }
        Ok(())
    }

    /// Comment lines describing how an instance was produced.
    pub fn header(&self) -> Vec<String> {
        vec![
            format!("generator {GENERATOR_NAME} seed {}", self.seed),
            format!(
                "n {} degree {} weight_log10 [{}, {}] pi_log10 [{}, {}]",
                self.n, self.degree, self.weight_log10.0, self.weight_log10.1, self.pi_log10.0, self.pi_log10.1
            ),
        ]
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    10f64.powf(rng.gen_range(lo..=hi))
}

/// Builds the instance described by `spec`; identical specs give identical output.
pub fn generate(spec: &GeneratorSpec) -> Result<RateConstantMatrix> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels: Vec<usize> = (0..n).collect();
    labels.shuffle(&mut rng);

    let max_edges = n * (n - 1) / 2;
    let target = ((n as f64 * spec.degree / 2.0).round() as usize).clamp(n - 1, max_edges);
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(target);
    let mut seen = HashSet::with_capacity(target);
    for i in 1..n {
        let parent = rng.gen_range(0..i);
        let (a, b) = (labels[parent], labels[i]);
        let pair = (a.min(b), a.max(b));
        seen.insert(pair);
        pairs.push(pair);
    }
    while pairs.len() < target {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        let pair = (a.min(b), a.max(b));
        if seen.insert(pair) {
            pairs.push(pair);
        }
    }
    let edges: Vec<_> = pairs
        .into_iter()
        .map(|(u, v)| (u, v, log_uniform(&mut rng, spec.weight_log10)))
        .collect();
    let pi = (0..n).map(|_| log_uniform(&mut rng, spec.pi_log10)).collect();
    RateConstantMatrix::from_edge_weights(n, &edges, pi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{parse_native, write_native};

    #[test]
    fn degenerate_range_gives_unit_weights() {
        let spec = GeneratorSpec::new(4, 7).with_degree(2.0).with_weight_range(0.0, 0.0);
        let k = generate(&spec).unwrap();
        assert_eq!(k.laplacian().components().len(), 1);
        assert!(k.laplacian().edges().all(|(_, _, w)| w == 1.0));
        assert_eq!(k.laplacian().edges().count(), 4);
    }

    #[test]
    fn deterministic_files() {
        let spec = GeneratorSpec::new(200, 99).with_weight_range(-150.0, 150.0);
        let a = write_native(&generate(&spec).unwrap(), &spec.header());
        let b = write_native(&generate(&spec).unwrap(), &spec.header());
        assert_eq!(a, b);
        assert!(a.starts_with("# generator chacha8-spanning-tree-v1 seed 99\n"));
        assert_eq!(parse_native(&a).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn connected_and_sized() {
        for seed in 0..20 {
            let spec = GeneratorSpec::new(50, seed).with_degree(4.0);
            let k = generate(&spec).unwrap();
            assert_eq!(k.laplacian().components().len(), 1);
            assert_eq!(k.laplacian().edges().count(), 100);
        }
        let k = generate(&GeneratorSpec::new(1, 0)).unwrap();
        assert_eq!(k.n(), 1);
        // degree larger than the complete graph allows
        let k = generate(&GeneratorSpec::new(5, 0).with_degree(100.0)).unwrap();
        assert_eq!(k.laplacian().edges().count(), 10);
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&GeneratorSpec::new(0, 0)).is_err());
        assert!(generate(&GeneratorSpec::new(3, 0).with_weight_range(1.0, 0.0)).is_err());
        assert!(generate(&GeneratorSpec::new(3, 0).with_pi_range(-400.0, 0.0)).is_err());
        assert!(generate(&GeneratorSpec::new(3, 0).with_degree(f64::NAN)).is_err());
    }
}
