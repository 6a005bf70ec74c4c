//! Greedy symmetric kernel collocation for parametric elliptic boundary
//! value problems.
//!
//! A PDE `-Δ_x u(x, mu) = f` in `Ω(mu)`, `u = g` on `∂Ω(mu)` is written as a
//! family of linear functionals. Representers of a greedily selected subset
//! span the trial space of a kernel surrogate `s_n(x, mu)` that is evaluable
//! for any position and parameter.
//!
//! * [`kernels`]: base kernels and operator-applied Gram entries.
//! * [`problem`]: benchmark problems and candidate sampling.
//! * [`greedy`]: the β-greedy selection loop (Newton basis).
//! * [`surrogate`]: kernel expansions and dense symmetric collocation.
//! * [`tuning`]: grid search, active subspaces, anisotropic kernels.
//! * [`cli`]: experiment driver behind the `pde-greedy` binary.

// Comparisons are written `!(a > b)` so that NaN fails the test.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod greedy;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod problem;
pub mod surrogate;
pub mod tuning;

pub use error::{Error, Result};
pub use greedy::{run_greedy, GreedyConfig, GreedySolver, GreedyState, History, StopCause};
pub use kernels::{DiffOp, PositionKernel, ProductKernel, Site};
pub use problem::{make_problem, CandidateSet, Functional, ParametricProblem};
pub use surrogate::{full_collocation_solve, Surrogate};
