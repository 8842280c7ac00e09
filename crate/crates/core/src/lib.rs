//! Software federation of transmission, distribution, PV-inverter and
//! Volt-VAR controller simulators exchanging telemetry frames over simulated
//! communication links.
//!
//! The building blocks are usable on their own:
//!
//! * [`grid`]: network data model, text formats, load profiles.
//! * [`powerflow`]: feeder sweep, transmission Newton-Raphson, sensitivities.
//! * [`inverter`]: PV inverter reactive capability and federate.
//! * [`federation`]: wire frames, link models, event clock.
//! * [`controllers`]: transmission and distribution Volt-VAR control.
//! * [`orchestrator`]: scenarios, run loop, telemetry and summaries.

pub mod grid;
pub mod powerflow;
pub mod inverter;
pub mod federation;
pub mod controllers;
pub mod orchestrator;

pub use grid::{GridError, GridModel, Phase, PhaseSet};
pub use federation::{FederateId, MessageFrame, LinkModel};
pub use inverter::{InverterParams, InverterState};
pub use powerflow::{FeederAggregate, PhasorState, PowerFlowError, Vsm};
pub use orchestrator::{run_scenario, ScenarioSpec, Summary, TelemetryRecord};
