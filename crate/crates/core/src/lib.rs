//! Global polynomial optimization via moment-matrix relaxations.
//!
//! The pipeline: parse a polynomial optimization problem, build the
//! moment/localizing-matrix SDP relaxation of a given order, solve it with the
//! embedded dense interior-point solver, and recover the finite set of
//! minimizers from the Hankel operator of a generic (maximum-rank) optimal
//! pseudo-moment sequence. Equality devices for exactness — level-set
//! constraints, KKT systems and polar ideals — are provided for problems
//! where the plain hierarchy is not exact at a reachable order.

pub mod driver;
pub mod extract;
#[cfg(test)]
pub(crate) mod fixtures;
pub mod moments;
pub mod polar;
pub mod polyparse;
pub mod polyring;
pub mod relaxation;
pub mod sdpsolve;

pub use driver::{
    finite_minimizers, level_extract, minimize, parse_problem_file, polar_minimize, report_json,
    write_report, DriverError, MinimizeOutcome, OrderTrace, RunConfig, RunReport, RunStatus,
};
pub use extract::{
    extract_measure, verify_measure, ExtractOpts, ExtractedMeasure, ExtractionFailure,
    FailureReason,
};
pub use moments::{
    hankel_matrix, kernel_basis, localizing_matrix, moments_of_points, HankelMatrix, KernelBasis,
    MomentError, MomentVector,
};
pub use polar::{
    jacobian_minors, kkt_system, polar_generators, PolarBranchSystem, PolarCaps, PolarError,
    PolarMode, PolarSystem,
};
pub use polyparse::{format_polynomial, parse_polynomial, ParseError, VariableTable};
pub use polyring::{monomials_up_to, Monomial, Polynomial};
pub use relaxation::{
    add_level_constraint, build_mom_relaxation, expand_preordering, PopInstance, RelaxError,
    RelaxationMode, SdpProblem,
};
pub use sdpsolve::{
    generic_point, phase1, solve, solve_logged, sos_certificate, Phase1Point, SdpError,
    SolveResult, SolveStatus, SolverOptions, SosCertificate,
};
