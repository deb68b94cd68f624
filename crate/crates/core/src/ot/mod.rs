//! Transport plans, entropic solvers and the exact LP oracle.

mod exact;
mod plan;
mod sinkhorn;

pub use exact::{exact_ot_lp, EXACT_CAP};
pub use plan::{transport_cost, TransportPlan, SERIALIZE_FLOOR};
pub(crate) use sinkhorn::fit_marginals;
pub use sinkhorn::{
    sinkhorn, sinkhorn_relaxed, EntropicSolver, ScalingState, SinkhornOutput, SolverParams, DIV_FLOOR,
    MAX_RHO,
};
