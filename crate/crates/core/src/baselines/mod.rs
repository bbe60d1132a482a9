//! Comparison solvers and ground truth.
//!
//! * [`exact`]: brute-force enumeration of log Z and marginals.
//! * [`message`]: tree-reweighted message passing with optional log-domain
//!   damping.
//! * [`gradient`]: full-gradient descent on the dual with backtracking.

pub mod exact;
pub mod gradient;
pub mod message;

pub use exact::{exact_log_partition, exact_marginals, MAX_ASSIGNMENTS};
pub use gradient::{solve_gradient_descent, GdConfig, GdSolution};
pub use message::{run_trw_mp, trw_mp_beliefs, trw_mp_sweep, MessageSet, MpConfig, MpSolution};
