//! Scenario files, the two grid simulators, run loop and outputs.

mod hil;
mod run;
mod scenario;
mod telemetry;

pub use hil::{
    DistributionHil, DistributionHilWiring, FeederSetup, HardwarePort, TickPlan, TransmissionHil,
    TransmissionHilWiring,
};
pub use run::{
    build_federation, run_scenario, write_outputs, Federation, OrchestratorError, RunOptions, RunOutput,
    DISTRIBUTION_HIL, DIST_CONTROLLER, EVENTS_FILE, INVERTER, SUMMARY_FILE, TELEMETRY_FILE, TRANSMISSION_HIL,
    TRANS_CONTROLLER,
};
pub use scenario::{
    link_seed, load_scenario, parse_scenario, ControllerSettings, FeederSpec, InverterSpec, LinkSpec, RunSettings,
    ScenarioError, ScenarioSpec, SeverWindow, CHANNEL_CLASSES,
};
pub use telemetry::{
    node_stream_feeder, read_events_csv, read_telemetry_csv, summarize, write_events_csv, write_telemetry_csv,
    IntervalRow, ReadError, RunLog, Summary, TelemetryRecord, EVENTS_HEADER, TELEMETRY_HEADER,
};
