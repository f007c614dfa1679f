//! Parallel sampling for first-order diffusion samplers.
//!
//! Autoregressive sampling `x_{t-1} = a_t x_t + b_t eps(x_t, t) + c_{t-1} xi_{t-1}`
//! is a triangular nonlinear system in the unknowns `x_0..x_{T-1}`. This
//! crate solves it with Jacobi fixed-point iteration over a sliding window,
//! optionally accelerated by multisecant (Anderson) updates, including a
//! block-upper-triangular variant that never feeds information from earlier
//! timesteps into later ones. Analytic Gaussian-mixture score models make
//! every solve verifiable against the exact sequential recursion.

pub mod anderson;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod schedule;
pub mod score;
pub mod system;
pub mod trajectory_io;

pub use anderson::{AAConfig, HistoryBuffer, Variant};
pub use engine::{solve_parallel, SolveReport, SolveStatus, SolverConfig};
pub use error::{Error, Result};
pub use schedule::{build_beta_schedule, build_coefficients, BetaSchedule, CoefficientTable};
pub use score::{apply_guidance, eval_batch, GaussianMixtureModel, GuidedModel, ScoreModel};
pub use system::{
    f_order_k, fixed_point_step, noise_bank, residuals, sequential_solve, verify_equivalence,
    ResidualVector, TrajectoryState,
};
