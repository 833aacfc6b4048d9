//! Simulation and learning stack for maneuvering a double-Ackermann-steering
//! mobile robot to goal positions around an obstacle.
//!
//! - [`kinematics`]: closed-form steering geometry and its inverse.
//! - [`environment`]: goal-conditioned episodic simulator with sparse reward.
//! - [`replay`]: episode-aware replay buffer with "future" goal relabeling.
//! - [`neural`]: dense networks, batch renormalization, Gaussian policy head, Adam.
//! - [`agent`]: SAC with batch-normalized critics and no target networks.
//! - [`eval`]: success rate, final error and SPL evaluation.

pub mod agent;
pub mod environment;
pub mod eval;
pub mod kinematics;
pub mod neural;
pub mod replay;
pub mod rng;
