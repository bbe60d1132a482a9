//! Tree-reweighted variational inference for discrete pairwise MRFs.
//!
//! The centerpiece is a convergent coordinate solver for the unconstrained
//! dual of the tree-reweighted free energy ([`trwgp`]). Around it sit the
//! model and file formats ([`model`]), root/edge probabilities of uniform
//! directed spanning trees ([`spanning`]), dual and primal evaluators
//! ([`dual`]) and comparison solvers plus an exact oracle ([`baselines`]).

pub mod baselines;
pub mod dual;
pub mod error;
pub mod math;
pub mod model;
pub mod spanning;
pub mod trace;
pub mod trwgp;

pub use dual::{DualState, EntropyForm, PrimalMarginals};
pub use error::{Error, Result};
pub use model::{gen_ising_grid, Graph, IsingSpec, PairwiseMrf, ValidationReport};
pub use spanning::{uniform_tree_probs, DirectedTree, EdgeProbabilities};
pub use trace::{SolveStatus, SolveTrace, TraceRecord};
pub use trwgp::{solve, GpConfig, GpSolution, GpSolver};
