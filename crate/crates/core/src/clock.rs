use std::fmt;

use serde::{Deserialize, Serialize};

/// Simulated time in whole days since genesis.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const GENESIS: SimTime = SimTime(0);

    pub fn days(self) -> u64 {
        self.0
    }

    pub fn plus_days(self, days: u64) -> SimTime {
        SimTime(self.0.saturating_add(days))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "day {}", self.0)
    }
}
