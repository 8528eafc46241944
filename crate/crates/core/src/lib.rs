//! Slot-level simulation of split federated learning rounds between a base
//! station and mobile UAV clients.
//!
//! The crate covers the scenario data ([`profiles`]), air-to-ground links and
//! mobility ([`airspace`]), per-step latency and energy ([`latency`]), an
//! event-driven round simulator for eight training paradigms
//! ([`paradigms`]), closed-form latency bounds ([`analytics`]), exhaustive
//! scheduling references ([`oracle`]), a PPO agent that picks split points and
//! resource shares ([`agent`]) and the experiment drivers behind the CLI
//! ([`experiments`]).

pub mod agent;
pub mod airspace;
pub mod analytics;
pub mod error;
pub mod experiments;
pub mod latency;
pub mod oracle;
pub mod paradigms;
pub mod profiles;

pub use error::{ConfigError, Result, SimError};
