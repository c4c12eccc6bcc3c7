//! Method dispatch, timing, comparison and export used by the command line.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cholesky::{fast_greedy, CholeskyFactor};
use crate::error::{Error, Result};
use crate::greedy::{greedy_with_factor, GreedyResult};
use crate::lazy::{lazy_fast_greedy, DiagAccounting, InstrumentationCounters};
use crate::model::{RateConstantMatrix, YieldVector};
use crate::projection::{project, Mode, Trajectory};
use crate::stable::stable_lazy_fast_greedy;

pub const REPORT_VERSION: u32 = 1;
pub const DEFAULT_T_MAX: f64 = 86400.0;
/// Trajectories wider than this are written as sparse `state:value` pairs.
pub const DENSE_CSV_MAX_STATES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Greedy,
    Fast,
    LazyFast,
    Stable,
    Relaxed(f64),
}

impl Method {
    pub const NAMES: [&'static str; 5] = ["greedy", "fast", "lazyfast", "stable", "relaxed"];

    /// Parses a method name; `eps` is only used by `relaxed`.
    pub fn parse(name: &str, eps: f64) -> Result<Self> {
        match name {
            "greedy" => Ok(Self::Greedy),
            "fast" => Ok(Self::Fast),
            "lazyfast" => Ok(Self::LazyFast),
            "stable" => Ok(Self::Stable),
            "relaxed" => {
                if !(eps >= 0.0) || !eps.is_finite() {
                    return Err(Error::InvalidArgument(format!("relaxation tolerance {eps} must be >= 0")));
                }
                Ok(Self::Relaxed(eps))
            }
            other => Err(Error::InvalidArgument(format!(
                "unknown method {other:?}; expected one of {}",
                Self::NAMES.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Greedy => "greedy",
            Self::Fast => "fast",
            Self::LazyFast => "lazyfast",
            Self::Stable => "stable",
            Self::Relaxed(_) => "relaxed",
        }
    }

    pub fn diag_accounting(&self) -> DiagAccounting {
        match self {
            Self::Stable => DiagAccounting::Exact,
            Self::Relaxed(_) => DiagAccounting::Relaxed,
            _ => DiagAccounting::None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Relaxed(eps) => write!(f, "relaxed(eps={eps:e})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Outcome of Step 1 with any method.
#[derive(Debug, Clone)]
pub struct Step1 {
    pub method: Method,
    pub result: GreedyResult,
    pub factor: CholeskyFactor,
    /// Present for the lazy methods.
    pub counters: Option<InstrumentationCounters>,
    pub clamp_events: u64,
    pub elapsed: Duration,
}

pub fn check_t_max(t_max: f64) -> Result<()> {
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidArgument(format!("t_max = {t_max} must be finite and positive")));
    }
    Ok(())
}

pub fn run_step1(k: &RateConstantMatrix, t_max: f64, method: Method) -> Result<Step1> {
    check_t_max(t_max)?;
    let start = Instant::now();
    let (result, factor, counters, clamp_events) = match method {
        Method::Greedy => {
            let (r, f) = greedy_with_factor(k, t_max);
            (r, f, None, 0)
        }
        Method::Fast => {
            let out = fast_greedy(k, t_max);
            (out.result, out.factor, None, out.clamp_events)
        }
        Method::LazyFast => {
            let out = lazy_fast_greedy(k, t_max);
            let clamps = out.counters.clamp_events;
            (out.result, out.factor, Some(out.counters), clamps)
        }
        Method::Stable => {
            let out = stable_lazy_fast_greedy(k, t_max, None);
            (out.result, out.factor, Some(out.counters), 0)
        }
        Method::Relaxed(eps) => {
            let out = stable_lazy_fast_greedy(k, t_max, Some(eps));
            (out.result, out.factor, Some(out.counters), 0)
        }
    };
    Ok(Step1 {
        method,
        result,
        factor,
        counters,
        clamp_events,
        elapsed: start.elapsed(),
    })
}

/// Order-sensitive SHA-256 over the pivots as little-endian `u64`s.
pub fn pivot_digest(pivots: &[usize]) -> String {
    let mut h = Sha256::new();
    for &p in pivots {
        h.update((p as u64).to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Initial yield source.
#[derive(Debug, Clone, PartialEq)]
pub enum PSource {
    Uniform,
    /// 0-based state.
    Point(usize),
    File(PathBuf),
}

impl Default for PSource {
    fn default() -> Self {
        Self::Point(0)
    }
}

impl FromStr for PSource {
    type Err = Error;

    /// `uniform`, `point:IDX` (1-based) or `file:PATH`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "uniform" {
            return Ok(Self::Uniform);
        }
        if let Some(idx) = s.strip_prefix("point:") {
            let i: usize = idx
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad state index {idx:?}")))?;
            if i == 0 {
                return Err(Error::InvalidArgument("states are numbered from 1".into()));
            }
            return Ok(Self::Point(i - 1));
        }
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(Self::File(PathBuf::from(path)));
        }
        Err(Error::InvalidArgument(format!(
            "initial vector {s:?}: expected uniform, point:IDX or file:PATH"
        )))
    }
}

impl PSource {
    /// Materializes the vector for `n` states. Files hold `n` whitespace-separated values.
    pub fn load(&self, n: usize) -> Result<YieldVector> {
        match self {
            Self::Uniform => Ok(YieldVector::uniform(n)),
            Self::Point(i) => YieldVector::point_mass(n, *i),
            Self::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                let values = text
                    .split_whitespace()
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| Error::InvalidArgument(format!("bad yield value {t:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                if values.len() != n {
                    return Err(Error::InvalidArgument(format!(
                        "{} holds {} values, expected {n}",
                        path.display(),
                        values.len()
                    )));
                }
                YieldVector::new(values)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bounds {
    pub lo: u128,
    pub hi: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterReport {
    pub c: Vec<u64>,
    pub sum_b: u128,
    pub m_offdiag: u64,
    pub m_offdiag_bounds: Bounds,
    pub m_diag: u64,
    /// Unrelaxed envelope for stable runs, per-run envelope for relaxed runs.
    pub m_diag_bounds: Option<Bounds>,
    pub relax_hits: u64,
    pub relax_misses: u64,
    pub clamp_events: u64,
    pub heap_pops: u64,
    pub violations: Vec<String>,
}

impl CounterReport {
    pub fn new(counters: &InstrumentationCounters, n: usize, k: usize, accounting: DiagAccounting) -> Self {
        let (lo, hi) = InstrumentationCounters::offdiag_envelope(n, k);
        let m_diag_bounds = match accounting {
            DiagAccounting::None => None,
            DiagAccounting::Exact => {
                let (lo, hi) = InstrumentationCounters::diag_envelope(n, k);
                Some(Bounds { lo, hi })
            }
            DiagAccounting::Relaxed => Some(Bounds {
                lo: counters.sum_jm1_c(),
                hi: counters.half_sum_jjm1_c(),
            }),
        };
        Self {
            c: counters.c.clone(),
            sum_b: counters.sum_b(),
            m_offdiag: counters.m_offdiag,
            m_offdiag_bounds: Bounds { lo, hi },
            m_diag: counters.m_diag,
            m_diag_bounds,
            relax_hits: counters.relax_hits,
            relax_misses: counters.relax_misses,
            clamp_events: counters.clamp_events,
            heap_pops: counters.heap_pops,
            violations: counters
                .violations(n, k, accounting)
                .into_iter()
                .map(String::from)
                .collect(),
        }
    }
}

/// Machine-readable summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub version: u32,
    pub method: String,
    pub eps_relax: Option<f64>,
    pub n: usize,
    pub t_max: f64,
    pub k: usize,
    pub pivots_digest: String,
    /// 1-based, present on request.
    pub pivots: Option<Vec<usize>>,
    pub stop_diagonal: Option<f64>,
    pub t_step1_seconds: f64,
    pub t_step2_seconds: Option<f64>,
    pub tau_seconds: Vec<f64>,
    pub clamp_events: u64,
    pub counters: Option<CounterReport>,
    pub divergence_index: Option<usize>,
}

impl RunReport {
    pub fn new(k: &RateConstantMatrix, t_max: f64, step1: &Step1, reference: Option<&GreedyResult>) -> Self {
        let n = k.n();
        let kk = step1.result.k();
        let eps_relax = match step1.method {
            Method::Relaxed(eps) => Some(eps),
            _ => None,
        };
        Self {
            version: REPORT_VERSION,
            method: step1.method.name().to_string(),
            eps_relax,
            n,
            t_max,
            k: kk,
            pivots_digest: pivot_digest(&step1.result.pivots),
            pivots: None,
            stop_diagonal: step1.result.stop_diagonal,
            t_step1_seconds: step1.elapsed.as_secs_f64(),
            t_step2_seconds: None,
            tau_seconds: Vec::new(),
            clamp_events: step1.clamp_events,
            counters: step1
                .counters
                .as_ref()
                .map(|c| CounterReport::new(c, n, kk, step1.method.diag_accounting())),
            divergence_index: reference.and_then(|r| step1.result.divergence_from(r)),
        }
    }

    pub fn with_pivots(mut self, pivots: &[usize]) -> Self {
        self.pivots = Some(pivots.iter().map(|p| p + 1).collect());
        self
    }

    pub fn with_trajectory(mut self, traj: &Trajectory, elapsed: Duration) -> Self {
        self.t_step2_seconds = Some(elapsed.as_secs_f64());
        self.tau_seconds = traj.entries.iter().map(|e| e.tau.as_secs_f64()).collect();
        self
    }
}

/// Step 1 followed by Step 2.
pub struct Simulation {
    pub step1: Step1,
    pub trajectory: Trajectory,
    pub report: RunReport,
}

pub fn simulate(
    k: &RateConstantMatrix,
    p: &YieldVector,
    t_max: f64,
    method: Method,
    mode: Mode,
) -> Result<Simulation> {
    let step1 = run_step1(k, t_max, method)?;
    let start = Instant::now();
    let trajectory = project(k, &step1.result, &step1.factor, p, mode)?;
    let elapsed = start.elapsed();
    let report = RunReport::new(k, t_max, &step1, None)
        .with_pivots(&step1.result.pivots)
        .with_trajectory(&trajectory, elapsed);
    Ok(Simulation {
        step1,
        trajectory,
        report,
    })
}

/// Runs every method against the greedy reference; needs at least two methods.
/// `with_pivots` adds the full pivot lists to the reports.
pub fn compare(
    k: &RateConstantMatrix,
    t_max: f64,
    methods: &[Method],
    with_pivots: bool,
) -> Result<Vec<RunReport>> {
    if methods.len() < 2 {
        return Err(Error::InvalidArgument("comparison needs at least two methods".into()));
    }
    check_t_max(t_max)?;
    let runs = methods
        .iter()
        .map(|&m| run_step1(k, t_max, m))
        .collect::<Result<Vec<_>>>()?;
    let reference = match runs.iter().find(|r| r.method == Method::Greedy) {
        Some(r) => r.result.clone(),
        None => run_step1(k, t_max, Method::Greedy)?.result,
    };
    Ok(runs
        .iter()
        .map(|r| {
            let report = RunReport::new(k, t_max, r, Some(&reference));
            if with_pivots {
                report.with_pivots(&r.result.pivots)
            } else {
                report
            }
        })
        .collect())
}

/// One benchmark row per (method, t_max).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub n: usize,
    pub t_max: f64,
    pub k: usize,
    pub t_step1: f64,
    pub t_step2_full: f64,
    pub m_offdiag: Option<u64>,
    pub m_diag: Option<u64>,
    pub m_offdiag_lo: Option<u128>,
    pub m_offdiag_hi: Option<u128>,
    pub m_diag_lo: Option<u128>,
    pub m_diag_hi: Option<u128>,
    /// `t_step1(greedy) / t_step1(method)`.
    pub speedup: Option<f64>,
}

pub fn bench(k: &RateConstantMatrix, t_maxes: &[f64], methods: &[Method]) -> Result<Vec<BenchRow>> {
    let p = YieldVector::uniform(k.n());
    let mut rows = Vec::new();
    for &t_max in t_maxes {
        check_t_max(t_max)?;
        let greedy_time = run_step1(k, t_max, Method::Greedy)?.elapsed.as_secs_f64();
        for &method in methods {
            let step1 = run_step1(k, t_max, method)?;
            let start = Instant::now();
            project(k, &step1.result, &step1.factor, &p, Mode::Full)?;
            let t_step2 = start.elapsed().as_secs_f64();
            let kk = step1.result.k();
            let report = step1
                .counters
                .as_ref()
                .map(|c| CounterReport::new(c, k.n(), kk, method.diag_accounting()));
            let t_step1 = step1.elapsed.as_secs_f64();
            rows.push(BenchRow {
                method: method.name().to_string(),
                n: k.n(),
                t_max,
                k: kk,
                t_step1,
                t_step2_full: t_step2,
                m_offdiag: report.as_ref().map(|r| r.m_offdiag),
                m_diag: report.as_ref().and_then(|r| r.m_diag_bounds.as_ref().map(|_| r.m_diag)),
                m_offdiag_lo: report.as_ref().map(|r| r.m_offdiag_bounds.lo),
                m_offdiag_hi: report.as_ref().map(|r| r.m_offdiag_bounds.hi),
                m_diag_lo: report.as_ref().and_then(|r| r.m_diag_bounds.as_ref().map(|b| b.lo)),
                m_diag_hi: report.as_ref().and_then(|r| r.m_diag_bounds.as_ref().map(|b| b.hi)),
                speedup: (method != Method::Greedy).then(|| greedy_time / t_step1.max(1e-12)),
            });
        }
    }
    Ok(rows)
}

fn opt<T: fmt::Display>(x: &Option<T>) -> String {
    x.as_ref().map(|v| v.to_string()).unwrap_or_default()
}

pub const BENCH_CSV_HEADER: &str =
    "method,n,t_max,k,t_step1,t_step2_full,M_offdiag,M_diag,M_offdiag_lo,M_offdiag_hi,M_diag_lo,M_diag_hi,speedup";

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:e},{},{:.6e},{:.6e},{},{},{},{},{},{},{}",
            r.method,
            r.n,
            r.t_max,
            r.k,
            r.t_step1,
            r.t_step2_full,
            opt(&r.m_offdiag),
            opt(&r.m_diag),
            opt(&r.m_offdiag_lo),
            opt(&r.m_offdiag_hi),
            opt(&r.m_diag_lo),
            opt(&r.m_diag_hi),
            r.speedup.map(|s| format!("{s:.3}")).unwrap_or_default(),
        );
    }
    out
}

/// `j,t_seconds,q_1..q_n`, or `j,t_seconds,v:value...` over the non-zero
/// entries when `n` exceeds [`DENSE_CSV_MAX_STATES`].
pub fn trajectory_csv(traj: &Trajectory, n: usize) -> String {
    let sparse = n > DENSE_CSV_MAX_STATES;
    let mut out = String::from("j,t_seconds");
    if sparse {
        out.push_str(",q");
    } else {
        for v in 1..=n {
            let _ = write!(out, ",q_{v}");
        }
    }
    out.push('\n');
    for e in &traj.entries {
        let _ = write!(out, "{},{:e}", e.j, e.t);
        for (v, &x) in e.q.values().iter().enumerate() {
            if !sparse {
                let _ = write!(out, ",{x:e}");
            } else if x != 0.0 {
                let _ = write!(out, ",{}:{x:e}", v + 1);
            }
        }
        out.push('\n');
    }
    out
}
