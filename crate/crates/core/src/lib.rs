//! Actor/learner/replay reinforcement learning framework.
//!
//! Agents are assembled from a small set of pieces: environments produce
//! [`TimeStep`]s, actors choose actions and forward experience to adders,
//! adders write items into a rate-limited replay [`Table`], and learners
//! sample from it and publish versioned [`ParameterSnapshot`]s that actors
//! poll. The same actor and learner code runs single-process or across
//! concurrent workers (see [`runtime`]).

pub mod actors;
pub mod adders;
pub mod agents;
pub mod environment_loop;
pub mod environments;
pub mod error;
pub mod interfaces;
pub mod kernels;
pub mod neural;
pub mod replay;
pub mod runtime;
pub mod variables;

pub use error::{Error, Result};
pub use interfaces::{
    Action, ActionSpec, Actor, Environment, LoopResult, NamedTensor, ObservationSpec,
    ParameterSnapshot, StepKind, TimeStep,
};
pub use replay::{Table, TableConfig};
