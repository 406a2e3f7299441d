//! Solvers for maximizing `x'Qx / x'Px` over a polyhedron, with `Q` positive
//! semidefinite of low rank and `P` positive definite.
//!
//! The numerator is split into rank-one terms `Q = sum q_m q_m'`, the
//! feasible set into the sign regions of the `<q_m, x>`, and a
//! quadratic-transform ascent is run inside each region where it is a
//! concave problem. Global optimality is certified (or restored) through
//! the Dinkelbach function `pi(lambda) = max x'(Q - lambda P)x`, computed by
//! a spatial branch-and-bound.

pub mod bench;
pub mod decomposition;
pub mod dinkelbach;
pub mod error;
pub mod generator;
pub mod io;
pub mod linalg;
pub mod model;
pub mod nonconvex;
pub mod oracle;
pub mod polyhedron;
pub mod qp;
pub mod region;
pub mod scalar;
pub mod shen_yu;

pub use decomposition::RankOneDecomposition;
pub use error::{Error, Result};
pub use generator::{generate, Family, GeneratorSpec};
pub use io::{read_instance, write_instance, write_solution};
pub use model::{
    Algorithm, DecompMode, ProblemInstance, SolveOutcome, SolveStatus, SolverConfig,
};
pub use polyhedron::{Interior, Polyhedron, Region, SignPattern};
pub use region::{solve, solve_exact, solve_fast, solve_ibaraki, solve_rank_one, verify_or_improve};
pub use scalar::Scalar;

/// Double-precision problem instance.
pub type Instance = ProblemInstance<f64>;
/// Double-precision feasible set.
pub type Feasible = Polyhedron<f64>;
/// Double-precision rank-one decomposition.
pub type Decomposition = RankOneDecomposition<f64>;
