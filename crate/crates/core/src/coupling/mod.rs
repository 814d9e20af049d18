//! Feedback constructions that create off-diagonal interconnection between
//! energy storages: the energy router between two lossless systems and the
//! interconnection-and-damping-assignment redesign of the actuator.

mod ida_pbc;
mod router;

pub use ida_pbc::{ida_pbc_actuator, FeedbackEquivalence, IdaPbcDesign};
pub use router::{
    compose_router, router_feedback, router_scenario, PowerSplit, RouterCoupling, RouterRun,
    RouterScenario,
};
