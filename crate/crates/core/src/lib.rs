//! Parallel-in-time probabilistic ODE solvers.
//!
//! An integrated Wiener process prior is conditioned on the ODE through
//! iterated extended Kalman smoothing. The inner linear smoother runs either
//! sequentially or as two associative scans over time, in square-root form.

pub mod error;
pub mod ieks;
pub mod jet;
pub mod linalg;
pub mod parallel;
pub mod pool;
pub mod prior;
pub mod problems;
pub mod sequential;
pub mod statespace;

pub use nalgebra;

pub use error::{Error, Result};
pub use ieks::{
    eks_solve, para_ieks, seq_ieks, solve, IeksConfig, Linearization, Method, SolverReport,
};
pub use jet::{FieldScalar, Jet};
pub use linalg::{tria, LowerTriangularSqrt};
pub use parallel::{para_rts, ParaRtsOutput, ScanDirection, ScanStats};
pub use pool::WorkPool;
pub use prior::{iwp_transition, preconditioner, taylor_init, IwpPrior, Preconditioner, Projection, TransitionModel};
pub use problems::{by_name, rmse, NamedProblem, PROBLEM_NAMES};
pub use sequential::{seq_rts, RtsOutput};
pub use statespace::{uniform_grid, AffineObservation, GaussianSqrt, GenericField, IvProblem, StateTrajectory};
