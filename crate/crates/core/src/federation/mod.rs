//! Message frames, simulated links, scenario counters and the two clocks
//! (deterministic simulated time and paced wall-clock time).

mod clock;
mod frame;
mod link;
mod realtime;
mod runtime;
mod staleness;

pub use clock::{ClockMode, FederateId, FederationClock, ScheduleInPast};
pub use frame::{decode_frame, encode_frame, FrameError, FrameKind, MessageFrame};
pub use link::{link_send, DropReason, Latency, Link, LinkDecision, LinkError, LinkModel};
pub use realtime::run_realtime;
pub use runtime::{
    run_simulated, ChannelId, ChannelKind, ChannelSpec, Ctx, Direction, Effect, EventRow, Federate,
    MemoryRecorder, Payload, Recorder, RunError,
};
pub use staleness::{staleness_check, CounterTracker, Staleness};

/// Length of one control interval, seconds.
pub const CONTROL_INTERVAL_S: f64 = 300.0;

/// Scenario counter for simulation time `t`: 1 during the first interval.
pub fn scenario_counter(t: f64) -> u64 {
    (t.max(0.0) / CONTROL_INTERVAL_S).floor() as u64 + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counter_starts_at_one() {
        assert_eq!(scenario_counter(0.0), 1);
        assert_eq!(scenario_counter(299.9), 1);
        assert_eq!(scenario_counter(300.0), 2);
    }
}
