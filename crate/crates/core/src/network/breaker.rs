use serde::{Deserialize, Serialize};

/// PCC breaker. Transitions happen at step boundaries only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakerState {
    pub closed: bool,
    pub last_transition_time: f64,
}

impl BreakerState {
    pub fn new(closed: bool) -> Self {
        Self {
            closed,
            last_transition_time: 0.0,
        }
    }
}

/// Repeated identical commands are no-ops and keep the original timestamp.
pub fn set_breaker(state: BreakerState, closed: bool, t: f64) -> BreakerState {
    if state.closed == closed {
        state
    } else {
        BreakerState {
            closed,
            last_transition_time: t,
        }
    }
}
