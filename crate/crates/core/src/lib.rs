//! Decentralized multi-player bandits with shareable, capacity-limited arms:
//! environment, schedules, confidence machinery, player protocol and an
//! experiment harness.

pub mod cli;
pub mod env;
pub mod harness;
pub mod protocol;
pub mod rng;
pub mod schedule;
pub mod stats;
