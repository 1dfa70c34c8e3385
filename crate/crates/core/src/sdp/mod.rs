//! Moment relaxation of the estimation problem and a small SDP solver.

pub mod ipm;
pub mod moment;
pub mod poly;
pub mod pop;
pub mod sdpa;

pub use ipm::{solve_sdp, solve_sdp_warm, SdpOptions, SdpSolution, SdpStatus, SDP_VAR_LIMIT};
pub use moment::{
    build_basis, build_moment_sdp, localizing_matrix, moment_matrix, MomentVector, MonomialBasis,
    PopConstraint, PopProblem, SdpEntry, SdpProblem, Sense,
};
pub use poly::{Monomial, Poly};
pub use sdpa::{export_sdpa, parse_sdpa};
pub use pop::{estimation_pop, extract_candidate, rank_one_point, EstimationPop, RANK_TOL};
