//! Pure numerical targets, losses and corrections used by the learners.
//! Each loss returns its value together with the exact gradient with
//! respect to its differentiable input.

mod distributional;
mod mcts;
mod mpo;
mod policy;
mod value;
mod vtrace;

pub use distributional::{categorical_ce_loss, categorical_mean, categorical_project, CategoricalSupport};
pub use mcts::{mcts_search, MctsConfig, SearchResult, SearchTree};
pub use mpo::{
    gaussian_kl, mpo_alpha_step, mpo_discrete_policy_loss, mpo_temperature_loss, mpo_weights, MpoDuals, MpoLoss,
    DEFAULT_EPSILON_ETA, DEFAULT_KL_EPSILON, MIN_TEMPERATURE,
};
pub use policy::{
    bc_loss_continuous, bc_loss_discrete, dpg_gradient, entropy, impala_policy_gradient, mcts_imitation_loss,
    PolicyGradientTerms, DEFAULT_POLICY_FLOOR,
};
pub use value::{
    discounted_return, double_q_target, nstep_double_q_target, r2d2_priority, returns_recursive, td_loss, TdLoss,
    DEFAULT_PRIORITY_MIX,
};
pub use vtrace::{vtrace, VTraceOutput};
