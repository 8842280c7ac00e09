//! Builds the federation for a scenario and runs it.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use crate::controllers::{
    DistController, DistControllerConfig, DistWiring, DrCapacity, HardwareSpec, LocalMsg, TransController,
    TransControllerConfig, TransWiring, TransmissionSettings,
};
use crate::federation::{
    run_realtime, run_simulated, ChannelId, ChannelKind, ChannelSpec, ClockMode, Federate, FederateId, RunError,
};
use crate::inverter::{Inverter, InverterFederate, InverterParams};

use super::hil::{
    DistributionHil, DistributionHilWiring, FeederSetup, HardwarePort, TickPlan, TransmissionHil,
    TransmissionHilWiring,
};
use super::scenario::{ScenarioError, ScenarioSpec};
use super::telemetry::{summarize, write_events_csv, write_telemetry_csv, RunLog, Summary};

pub const DIST_CONTROLLER: FederateId = FederateId(0);
pub const TRANS_CONTROLLER: FederateId = FederateId(1);
pub const TRANSMISSION_HIL: FederateId = FederateId(2);
pub const DISTRIBUTION_HIL: FederateId = FederateId(3);
pub const INVERTER: FederateId = FederateId(4);

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("federate `{federate}` failed to initialize: {msg}")]
    Setup { federate: String, msg: String },
    #[error("{path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub mode: ClockMode,
    pub seed: u64,
}

impl RunOptions {
    pub fn from_spec(spec: &ScenarioSpec) -> Self {
        RunOptions { mode: spec.run.mode, seed: spec.run.seed }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: RunLog,
    pub summary: Summary,
}

/// Channel table and federates of one run.
pub struct Federation {
    pub channels: Vec<ChannelSpec>,
    pub federates: Vec<Box<dyn Federate<LocalMsg>>>,
}

struct Channels<'a> {
    spec: &'a ScenarioSpec,
    seed: u64,
    list: Vec<ChannelSpec>,
}

impl Channels<'_> {
    fn wire(&mut self, name: String, from: FederateId, to: FederateId) -> ChannelId {
        let link = self.spec.link_for(&name, self.seed);
        let addr = self.spec.link_addr(&name);
        self.list.push(ChannelSpec { name, from, to, kind: ChannelKind::Wire { link, addr } });
        self.list.len() - 1
    }

    fn local(&mut self, name: &str, from: FederateId, to: FederateId) -> ChannelId {
        self.list.push(ChannelSpec { name: name.into(), from, to, kind: ChannelKind::Local });
        self.list.len() - 1
    }
}

fn setup_err(federate: &str) -> impl Fn(String) -> OrchestratorError + '_ {
    move |msg| OrchestratorError::Setup { federate: federate.to_string(), msg }
}

/// Wires every federate and channel of `spec`. Link random streams derive
/// from `seed` and the channel name.
pub fn build_federation(spec: &ScenarioSpec, seed: u64) -> Result<Federation, OrchestratorError> {
    let c = &spec.controllers;
    let n = spec.feeders.len();
    let mut ch = Channels { spec, seed, list: Vec::new() };

    let mut down = Vec::with_capacity(n);
    let mut up = Vec::with_capacity(n);
    let mut constraints = Vec::with_capacity(n);
    let mut requests = Vec::with_capacity(n);
    for f in &spec.feeders {
        down.push(ch.wire(format!("boundary_down.{}", f.name), TRANSMISSION_HIL, DISTRIBUTION_HIL));
        up.push(ch.wire(format!("boundary_up.{}", f.name), DISTRIBUTION_HIL, TRANSMISSION_HIL));
        constraints.push(ch.wire(format!("constraints.{}", f.name), DIST_CONTROLLER, TRANS_CONTROLLER));
        requests.push(ch.wire(format!("request.{}", f.name), TRANS_CONTROLLER, DIST_CONTROLLER));
    }
    let dist_pull = ch.local("local.dist_pull", DIST_CONTROLLER, DISTRIBUTION_HIL);
    let dist_meas = ch.local("local.dist_measurement", DISTRIBUTION_HIL, DIST_CONTROLLER);
    let trans_pull = ch.local("local.trans_pull", TRANS_CONTROLLER, TRANSMISSION_HIL);
    let trans_meas = ch.local("local.trans_measurement", TRANSMISSION_HIL, TRANS_CONTROLLER);
    let hw_channels = spec
        .inverter
        .as_ref()
        .map(|_| (ch.wire("pv_command".into(), DIST_CONTROLLER, INVERTER), ch.wire("pv_response".into(), INVERTER, DISTRIBUTION_HIL)));

    let hardware = match &spec.inverter {
        Some(inv) => {
            let params = InverterParams::new(inv.s_rating, c.k).map_err(|e| setup_err("inverter")(e.to_string()))?;
            let feeder = spec.feeder_index(&inv.feeder).expect("validated");
            Some(HardwareSpec { id: inv.id.clone(), feeder, bus: inv.bus.clone(), phase: inv.phase, params })
        }
        None => None,
    };

    let dist_ctrl = DistController::new(
        DistControllerConfig {
            id: DIST_CONTROLLER,
            interval_s: c.interval_s,
            compute_delay_s: c.dist_compute_delay_s,
            dvvc_delay_s: c.dvvc_delay_s,
            request_deadline_s: c.request_deadline_s,
            hold_intervals: c.hold_intervals,
            v_lower: c.v_lower,
            v_upper: c.v_upper,
            vsm_delta: c.vsm_delta,
            k: c.k,
        },
        DistWiring {
            to_hil: dist_pull,
            from_hil: dist_meas,
            constraints: constraints.clone(),
            requests: requests.clone(),
            pv_command: hw_channels.map(|h| h.0),
        },
        spec.feeders
            .iter()
            .map(|f| (f.name.clone(), f.model.clone(), c.dr.get(&f.name).copied().unwrap_or(DrCapacity::default())))
            .collect(),
        hardware.clone(),
    );

    let trans_ctrl = TransController::new(
        TransControllerConfig {
            id: TRANS_CONTROLLER,
            interval_s: c.interval_s,
            compute_delay_s: c.trans_compute_delay_s,
            constraints_deadline_s: c.constraints_deadline_s,
            hold_intervals: c.hold_intervals,
            settings: TransmissionSettings {
                v_target: c.v_target,
                v_lower: c.v_lower,
                v_upper: c.v_upper,
                gen_step: c.gen_step,
                probe_kva: c.probe_kva,
            },
            boundary_bus: spec.boundary_bus.clone(),
            feeder_names: spec.feeders.iter().map(|f| f.name.clone()).collect(),
            feeder_base_kva: spec.feeders.iter().map(|f| f.model.base_kva()).collect(),
        },
        TransWiring {
            to_hil: trans_pull,
            from_hil: trans_meas,
            constraints,
            requests,
        },
        spec.transmission.clone(),
    );

    let ticks = TickPlan::new(spec.run.boundary_period_s, spec.run.telemetry_period_s);
    let trans_hil = TransmissionHil::new(
        TRANSMISSION_HIL,
        spec.transmission.clone(),
        spec.boundary_bus.clone(),
        ticks,
        spec.feeders.iter().map(|f| f.name.clone()).collect(),
        TransmissionHilWiring { down: down.clone(), up: up.clone(), to_ctrl: trans_meas, from_ctrl: trans_pull },
    );

    let profile = |id: &str| spec.profiles[id].clone();
    let setups = spec
        .feeders
        .iter()
        .map(|f| FeederSetup {
            name: f.name.clone(),
            model: f.model.clone(),
            head_load: profile(&f.load_profile),
            solar: f.model.solar.iter().map(|s| profile(&s.profile_id)).collect(),
        })
        .collect();
    let port = match (&hardware, &spec.inverter, hw_channels) {
        (Some(hw), Some(inv), Some((_, response))) => Some((
            HardwarePort {
                feeder: hw.feeder,
                params: hw.params,
                irradiance: profile(&inv.profile),
                timeout_s: c.hw_timeout_s,
                response_channel: response,
            },
            hw.clone(),
        )),
        _ => None,
    };
    let dist_hil = DistributionHil::new(
        DISTRIBUTION_HIL,
        ticks,
        setups,
        c.k,
        port,
        DistributionHilWiring { down, up, to_ctrl: dist_meas, from_ctrl: dist_pull },
    )
    .map_err(setup_err("distribution_hil"))?;

    let mut federates: Vec<Box<dyn Federate<LocalMsg>>> =
        vec![Box::new(dist_ctrl), Box::new(trans_ctrl), Box::new(trans_hil), Box::new(dist_hil)];
    if let (Some(hw), Some(inv), Some((command, response))) = (&hardware, &spec.inverter, hw_channels) {
        federates.push(Box::new(InverterFederate::new(
            INVERTER,
            Inverter::new(hw.params, c.inverter_settle_s),
            profile(&inv.profile),
            c.inverter_response_s,
            command,
            response,
        )));
    }
    Ok(Federation { channels: ch.list, federates })
}

/// Runs `spec` for its configured duration.
pub fn run_scenario(spec: &ScenarioSpec, opts: RunOptions) -> Result<RunOutput, OrchestratorError> {
    let fed = build_federation(spec, opts.seed)?;
    let until = spec.duration_s();
    let log = match opts.mode {
        ClockMode::Simulated => {
            let mut log = RunLog::default();
            run_simulated(fed.federates, &fed.channels, until, &mut log)?;
            log
        }
        ClockMode::Realtime => {
            let shared = Arc::new(Mutex::new(RunLog::default()));
            run_realtime(fed.federates, &fed.channels, until, spec.run.speedup, shared.clone())?;
            let mut log = std::mem::take(&mut *shared.lock().unwrap());
            log.sort_by_time();
            log
        }
    };
    let summary = summarize(&log.telemetry, spec.controllers.v_lower, spec.controllers.v_upper);
    Ok(RunOutput { log, summary })
}

pub const TELEMETRY_FILE: &str = "telemetry.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Writes `telemetry.csv`, `events.csv` and `summary.txt` into `dir`.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<(), OrchestratorError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source: std::io::Error| OrchestratorError::Output { path: path.clone(), source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let csv_io = |path: &Path| {
        let path = path.to_path_buf();
        move |e: csv::Error| OrchestratorError::Output { path: path.clone(), source: e.into() }
    };

    let p = dir.join(TELEMETRY_FILE);
    write_telemetry_csv(BufWriter::new(File::create(&p).map_err(io(&p))?), &out.log.telemetry).map_err(csv_io(&p))?;
    let p = dir.join(EVENTS_FILE);
    write_events_csv(BufWriter::new(File::create(&p).map_err(io(&p))?), &out.log.events).map_err(csv_io(&p))?;
    let p = dir.join(SUMMARY_FILE);
    std::fs::write(&p, out.summary.to_string()).map_err(io(&p))?;
    Ok(())
}
