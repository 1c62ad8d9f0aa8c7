//! Distributed seeking of variational generalized Nash equilibria under
//! partial-decision information.
//!
//! Agents minimize coupled costs subject to local sets and shared affine
//! constraints, but each agent only observes its neighbors on a communication
//! graph. Every agent keeps an estimate of the full decision profile; a
//! consensus term with gain `c` pulls the estimates together while projected
//! primal-dual dynamics drive own actions and local multipliers toward a KKT
//! point of the variational GNE problem. The crate provides the game and
//! graph descriptions, the single- and double-integrator closed loops, the
//! gain certificate, a full-information oracle for verification, and ready
//! scenario constructors.

pub mod analysis;
pub mod config;
pub mod error;
pub mod flow;
pub mod game;
pub mod graph;
pub mod scenarios;
pub mod sets;

pub use error::{CoreError, Result};
pub use flow::{
    from_zeta, simulate_double, simulate_single, step_single, to_zeta, vector_field_double,
    vector_field_single, Channels, DoubleState, FlowParams, GainsH, SingleState, StateLayout,
    StopInfo, StopReason, Trajectory,
};
pub use game::{
    consensus_embed, AgentSpec, CostGradient, GameConstants, GameSpec, GradFn, QuadraticCost,
};
pub use graph::CommGraph;
pub use sets::ConvexSet;
