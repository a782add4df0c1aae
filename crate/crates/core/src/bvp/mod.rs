//! The free-boundary problem on the customization region: a Neumann–Poisson
//! solve for a given interface, the constant-strip refutation and the
//! interface calibration.

mod calibrate;
mod domain;
mod poisson;
mod refute;

pub use domain::PolygonalDomain;
pub use poisson::{
    extra_neumann_residual, solve_bvp, BvpProblem, BvpSolution, DirichletData, Edge, ExtraResidual, NeumannData,
    LINEAR_TOL,
};
pub use refute::{
    bound_lhs, constant_strip_ansatz, refute_rc, AnsatzSolution, RefutationReport, BOUND_RHS, REQUIRED_JUMP,
    SLOPE_MARGIN, VERDICT_INCONSISTENT, VERDICT_NOT_REFUTED,
};
pub use calibrate::{
    ansatz_evaluation, assemble, calibrate, calibrate_from_direct, convexity_penalty, evaluate, interface_jump,
    seed_candidate, Assembled, CalibrationReport, Candidate, CandidateStatus, Evaluation, SearchConfig, Seed,
};
