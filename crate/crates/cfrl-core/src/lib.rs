//! Counterfactual data augmentation for off-policy RL on a synthetic
//! interactive-recommendation environment.
//!
//! - [`numkit`]: dense linear algebra, MLPs with analytic backprop, Adam,
//!   Polyak updates, seedable forkable RNG.
//! - [`envsim`]: the recommendation environment with explicit causal
//!   structure and exact snapshot/restore for interventions.
//! - [`agents`]: DDPG, TD3 and SAC with a shared replay buffer.
//! - [`csp`]: training of the counterfactual synthesis policy against a
//!   frozen pretrained policy.
//! - [`augment`]: deploying a trained synthesis policy as replay-buffer
//!   augmentation inside any agent's training loop.

pub mod agents;
pub mod augment;
pub mod csp;
pub mod envsim;
pub mod numkit;
