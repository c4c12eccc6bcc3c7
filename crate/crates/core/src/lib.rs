//! Rate constant matrix contraction for first-order kinetics on reaction networks.

pub mod cholesky;
pub mod error;
pub mod generate;
pub mod greedy;
pub mod harness;
pub mod io;
pub mod lazy;
pub mod model;
pub mod projection;
pub mod segtree;
pub mod stable;

pub use cholesky::{doolittle_cholesky, fast_greedy, gaussian_cholesky, CholeskyFactor, FastGreedyOutput};
pub use error::{Error, Result};
pub use greedy::{greedy, greedy_with_factor, marginal_gain_logdet, GreedyResult};
pub use lazy::{lazy_fast_greedy, DiagAccounting, InstrumentationCounters, LazyOutput};
pub use model::{
    exact_solve_small, schur_complement_dense, to_laplacian, validate, Laplacian,
    RateConstantMatrix, SchurComplement, YieldVector,
};
pub use segtree::{NonnegSegmentTree, SparseColumnTree};
pub use stable::{
    stable_lazy_fast_greedy, stably_compute_diagonal, subtraction_error_bound, CompressedRow,
    SegmentTreeBank, SubtractionDecision, DEFAULT_RELAX_EPS,
};
pub use projection::{project, stationary_limit, Mode, Trajectory, TrajectoryEntry};
pub use generate::{generate, GeneratorSpec, GENERATOR_NAME};
pub use harness::{
    bench, compare, run_step1, simulate, BenchRow, Method, PSource, RunReport, Simulation, Step1,
};
pub use io::{parse_native, parse_raw_rates, read_instance, write_native, InputFormat};
