//! Event-driven simulation of one training round under each paradigm.

mod engine;
mod export;
mod queue;
mod timer;
mod training;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use engine::{simulate, Bar, Event, EventKind, RoundTrace};
pub use export::{gantt_json, write_events_csv};
pub use queue::{GradientQueueEntry, QueuePolicy};
pub use timer::{FixedTimer, PhysicalTimer, StepKind, StepTimer};
pub use training::{run_training, simulate_round, PlanSource, RoundOutcome, UniformPlans};

use crate::error::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Paradigm {
    SflPp,
    VanillaSflPs,
    CpsflNoAt,
    CpsflNoPs,
    Cpsfl,
    PipeSfl,
    PipeSflNoAt,
    PipeSflNoPs,
}

/// How the server and the downlink are shared and which queue discipline
/// orders the shared resource.
#[derive(Debug, Clone, PartialEq)]
pub struct Discipline {
    pub server_parallel: bool,
    pub downlink_parallel: bool,
    pub queue: QueuePolicy,
}

impl Paradigm {
    pub const ALL: [Paradigm; 8] = [
        Paradigm::SflPp,
        Paradigm::VanillaSflPs,
        Paradigm::CpsflNoAt,
        Paradigm::CpsflNoPs,
        Paradigm::Cpsfl,
        Paradigm::PipeSfl,
        Paradigm::PipeSflNoAt,
        Paradigm::PipeSflNoPs,
    ];

    /// Display name.
    pub fn name(self) -> &'static str {
        match self {
            Paradigm::SflPp => "SFL-PP",
            Paradigm::VanillaSflPs => "Vanilla SFL-PS",
            Paradigm::CpsflNoAt => "CPSFL w/o AT",
            Paradigm::CpsflNoPs => "CPSFL w/o PS",
            Paradigm::Cpsfl => "CPSFL",
            Paradigm::PipeSfl => "PipeSFL",
            Paradigm::PipeSflNoAt => "PipeSFL w/o AT",
            Paradigm::PipeSflNoPs => "PipeSFL w/o PS",
        }
    }

    /// Identifier used on the command line and in CSV files.
    pub fn slug(self) -> &'static str {
        match self {
            Paradigm::SflPp => "sfl-pp",
            Paradigm::VanillaSflPs => "vanilla-sfl-ps",
            Paradigm::CpsflNoAt => "cpsfl-no-at",
            Paradigm::CpsflNoPs => "cpsfl-no-ps",
            Paradigm::Cpsfl => "cpsfl",
            Paradigm::PipeSfl => "pipesfl",
            Paradigm::PipeSflNoAt => "pipesfl-no-at",
            Paradigm::PipeSflNoPs => "pipesfl-no-ps",
        }
    }

    /// Parallel-downlink paradigms carry a power split.
    pub fn needs_rho(self) -> bool {
        matches!(self, Paradigm::SflPp | Paradigm::PipeSfl | Paradigm::PipeSflNoAt | Paradigm::PipeSflNoPs)
    }

    pub fn discipline(self) -> Discipline {
        use QueuePolicy::*;
        let (server_parallel, downlink_parallel, queue) = match self {
            Paradigm::SflPp => (true, true, Fcfs),
            Paradigm::VanillaSflPs => (true, false, SyncBatch { lag_order: false }),
            Paradigm::CpsflNoAt => (true, false, SyncBatch { lag_order: true }),
            Paradigm::CpsflNoPs => (true, false, Fcfs),
            Paradigm::Cpsfl => (true, false, Priority),
            Paradigm::PipeSfl => (false, true, Priority),
            Paradigm::PipeSflNoAt => (false, true, SyncBatch { lag_order: true }),
            Paradigm::PipeSflNoPs => (false, true, Fcfs),
        };
        Discipline {
            server_parallel,
            downlink_parallel,
            queue,
        }
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for Paradigm {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', ' '], "-").replace("w/o-", "no-");
        Paradigm::ALL
            .into_iter()
            .find(|p| p.slug() == norm || p.name().to_ascii_lowercase().replace(' ', "-").replace("w/o-", "no-") == norm)
            .ok_or_else(|| SimError::InvalidPlan(format!("unknown paradigm {s:?}")))
    }
}
