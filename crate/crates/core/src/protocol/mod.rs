//! Player state machines. A player sees its own index, its own rewards and
//! the shared constants (M, K, δ, feedback mode) and nothing else.

pub mod codec;
pub mod graph;
mod player;
pub mod recursion;
pub mod ucb;

pub use codec::{BlockLayout, FrameKind, MessageFrame};
pub use graph::ConnectivityGraph;
pub use player::{
    listener_candidates, coordinator_candidates, signal_sessions, Event, EventKind, Globals, Phase,
    Player, PlayerOptions, StepTag, SyncKey,
};
pub use recursion::{recursion_step, RecursionState};
pub use ucb::Ucb;
