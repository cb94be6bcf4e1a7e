//! Action selection: the ε-greedy baseline, Feedback Arbitration (FA) and
//! Newtonian Action Advice (NAA).

mod advice;
mod arbitration;
mod dqn;

pub use advice::{AdviceEvent, AdviceQueue, AdviceSource};
pub use arbitration::{
    cardinal_to_action, choose_action_baseline, fa_choose_action, naa_choose_action, relative_cost, ActiveAdvice,
    AgentKind, Arbiter, ArbitrationConfig, Decision, DecisionSource,
};
pub use dqn::DqnAgent;
