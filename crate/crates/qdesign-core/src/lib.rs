//! Bayesian c- and L-optimal experimental design through the quadratic
//! (group) lasso reformulation.
//!
//! The crate is organized around a standardized [`ProblemInstance`]
//! (feature matrix, target vector or matrix, positive regularizer) and
//! provides:
//!
//! * the design-side objective `phi` and the primal/dual lasso objectives,
//!   together with the mappings between designs and lasso points
//!   ([`problem`], [`duality`]);
//! * safe screening rules that certify candidates as inessential
//!   ([`screening`]);
//! * iterative solvers (coordinate descent, FISTA, multiplicative weight
//!   updates, Frank-Wolfe) with a periodic-screening driver ([`solvers`]);
//! * an exact homotopy algorithm for the c-case ([`homotopy`]);
//! * brute-force oracles used to validate everything else at desk scale
//!   ([`oracle`]).

pub mod duality;
pub mod error;
pub mod homotopy;
pub mod oracle;
pub mod problem;
pub mod screening;
pub mod solvers;
pub mod synth;

pub use duality::{
    design_delta, dual_certificate_from_design, dual_certificate_from_primal, dual_objective,
    hat_w, hat_x, kkt_residual, primal_objective, CertSource, DualCertificate, OptimalityReport,
    PrimalPoint,
};
pub use error::Error;
pub use homotopy::{lasso_path, segment_weights, solve_homotopy, Breakpoint, HomotopyPath};
pub use oracle::{
    oracle_design_grid, oracle_group_supports, oracle_qlasso_signs, verify_mappings,
    verify_optimal_pair, MappingReport, OracleMethod, OracleSolution,
};
pub use problem::{
    information_matrix, phi, prior_transform, Design, PriorSpec, ProblemInstance, Target,
};
pub use screening::{bound_b, screen_d0, screen_d1, screen_d2, sup_ball_correlation, Rule, ScreeningMask};
pub use solvers::{
    prox_sq_l1, prox_sq_l1_rows, run_with_screening, solve_cd, solve_fista, solve_fw, solve_mwu,
    Algo, ScreenRule, Solution, SolverOptions, SolverTrace, TraceRecord, TraceSink,
};
