//! Actor-critic learning: MLPs with exact backprop, action heads, Adam,
//! advantage estimation and clipped / unclipped policy-gradient updates.

mod adam;
pub mod dist;
mod gae;
mod mlp;
mod policy;

pub use adam::Adam;
pub use dist::{Action, ActionSpec};
pub use gae::gae;
pub use mlp::{Dense, Mlp, MlpCache};
pub use policy::{
    actor_objective, critic_objective, ActorObjective, Algo, Policy, PpoConfig, RolloutBuffer, Sample,
    UpdateStats,
};
