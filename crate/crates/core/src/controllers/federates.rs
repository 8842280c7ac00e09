//! Controller federates and the in-process messages they exchange with the
//! simulators they supervise.

use crate::federation::{
    scenario_counter, ChannelId, CounterTracker, Ctx, Federate, FederateId, MessageFrame, Payload, Staleness,
};
use crate::grid::{GridModel, Phase};
use crate::inverter::InverterParams;
use crate::powerflow::{all_nodes, compute_vsm, Actuator, BoundaryLoad, FeederCase, PhasorState, Vsm};

use super::distribution::{distribution_vvc, shunt_actuator_id, DispatchPlan, DistributionInput, ShuntUnit};
use super::envelope::{compute_der_envelope, DerEnvelope, DrCapacity, PvReading, PvUnit};
use super::transmission::{transmission_vvc, FeederRequest, TransmissionSettings};
use super::{feeder_pv_units, feeder_shunt_units};

/// Messages on local (in-process, zero-latency) channels.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalMsg {
    Pull { ctr: u64 },
    Measurement(Vec<FeederMeasurement>),
    /// Setpoints for one feeder's directly controlled devices. `pv_q` and
    /// `pv_p_curtail` follow the feeder's PV unit order; a hardware entry is
    /// ignored by the simulator.
    Commands { feeder: usize, pv_q: Vec<f64>, pv_p_curtail: Vec<f64>, shunt_blocks_on: Vec<u32> },
    TransPull,
    TransMeasurement(TransMeasurement),
    GeneratorSetpoints(Vec<f64>),
}

/// Snapshot of one feeder as its simulator sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederMeasurement {
    pub case: FeederCase,
    pub state: PhasorState,
    /// Per PV unit, in unit order.
    pub readings: Vec<PvReading>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransMeasurement {
    /// Feeder aggregates as currently applied at the boundary.
    pub boundary: Vec<BoundaryLoad>,
    /// Generator voltage setpoints in force, model order.
    pub gen_v_set: Vec<f64>,
}

/// The single-phase PV inverter reached over the file link.
#[derive(Debug, Clone, PartialEq)]
pub struct HardwareSpec {
    pub id: String,
    pub feeder: usize,
    pub bus: String,
    pub phase: Phase,
    pub params: InverterParams,
}

pub fn timer_key(kind: u32, value: u32) -> u64 {
    ((kind as u64) << 32) | value as u64
}

fn split_key(key: u64) -> (u32, u32) {
    ((key >> 32) as u32, key as u32)
}

fn interval_start(k: u64, interval: f64) -> f64 {
    k as f64 * interval
}

// ---------------------------------------------------------------- distribution

#[derive(Debug, Clone, PartialEq)]
pub struct DistControllerConfig {
    pub id: FederateId,
    pub interval_s: f64,
    pub compute_delay_s: f64,
    /// Delay between a request arriving and the dispatch going out.
    pub dvvc_delay_s: f64,
    /// After this long into an interval without a request, dispatch in
    /// degraded mode.
    pub request_deadline_s: f64,
    pub hold_intervals: u64,
    pub v_lower: f64,
    pub v_upper: f64,
    pub vsm_delta: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistWiring {
    pub to_hil: ChannelId,
    pub from_hil: ChannelId,
    /// Per feeder, outgoing.
    pub constraints: Vec<ChannelId>,
    /// Per feeder, incoming.
    pub requests: Vec<ChannelId>,
    pub pv_command: Option<ChannelId>,
}

struct FeederCtl {
    name: String,
    model: GridModel,
    units: Vec<PvUnit>,
    shunts: Vec<ShuntUnit>,
    actuators: Vec<Actuator>,
    nodes: Vec<(usize, Phase)>,
    dr: DrCapacity,
    meas: Option<FeederMeasurement>,
    vsm: Option<Vsm>,
    envelope: DerEnvelope,
    tracker: CounterTracker,
    /// Last accepted request (kVAR, kW) and the interval it arrived in.
    held: Option<(f64, f64, u64)>,
    got_request: bool,
    /// Request dispatched in the current interval and the resulting plan.
    applied: Option<(f64, DispatchPlan)>,
}

const D_PULL: u32 = 1;
const D_CONSTRAINTS: u32 = 2;
const D_DEADLINE: u32 = 3;
const D_DISPATCH: u32 = 4;

pub struct DistController {
    cfg: DistControllerConfig,
    wiring: DistWiring,
    feeders: Vec<FeederCtl>,
    ctr: u64,
}

impl DistController {
    /// `feeders` are `(name, model, dr capacity)` in feeder order.
    pub fn new(
        cfg: DistControllerConfig,
        wiring: DistWiring,
        feeders: Vec<(String, GridModel, DrCapacity)>,
        hardware: Option<HardwareSpec>,
    ) -> Self {
        let feeders = feeders
            .into_iter()
            .enumerate()
            .map(|(f, (name, model, dr))| {
                let hw = hardware.as_ref().filter(|h| h.feeder == f);
                let units = feeder_pv_units(&model, cfg.k, hw);
                let shunts = feeder_shunt_units(&model);
                let mut actuators: Vec<Actuator> =
                    units.iter().map(|u| Actuator { id: u.id.clone(), bus: u.bus.clone(), phases: u.phases }).collect();
                actuators.extend(model.shunts.iter().map(|s| Actuator {
                    id: shunt_actuator_id(&s.id),
                    bus: s.bus.clone(),
                    phases: s.phases,
                }));
                let nodes = all_nodes(&model);
                FeederCtl {
                    name,
                    model,
                    units,
                    shunts,
                    actuators,
                    nodes,
                    dr,
                    meas: None,
                    vsm: None,
                    envelope: DerEnvelope::default(),
                    tracker: CounterTracker::default(),
                    held: None,
                    got_request: false,
                    applied: None,
                }
            })
            .collect();
        DistController { cfg, wiring, feeders, ctr: 0 }
    }

    fn on_measurement(&mut self, meas: Vec<FeederMeasurement>, ctx: &mut Ctx<LocalMsg>) {
        let delta = self.cfg.vsm_delta;
        for (fc, m) in self.feeders.iter_mut().zip(meas) {
            // tracking over the interval that just ended
            if let Some((q_req, plan)) = &fc.applied {
                let delivered: f64 = m.readings.iter().map(|r| r.q_out).sum();
                ctx.telemetry(format!("{}.q_req", fc.name), *q_req, "kVAR");
                ctx.telemetry(format!("{}.q_delivered", fc.name), delivered, "kVAR");
                ctx.telemetry(format!("{}.q_error", fc.name), q_req - delivered, "kVAR");
                ctx.telemetry(format!("{}.shortfall", fc.name), plan.shortfall_kvar, "kVAR");
                if let Some(hw) = fc.units.iter().position(|u| u.hardware) {
                    ctx.telemetry(format!("{}.hw_alloc", fc.name), plan.pv_q[hw], "kVAR");
                }
            }
            fc.applied = None;
            fc.got_request = false;

            if !m.state.converged {
                ctx.action("measurement_unusable", format!("feeder={}", fc.name));
                fc.vsm = None;
                fc.meas = None;
                continue;
            }
            match compute_vsm(&fc.model, &m.case, &m.state, &fc.nodes, &fc.actuators, delta) {
                Ok(v) => fc.vsm = Some(v),
                Err(e) => {
                    ctx.action("vsm_failed", format!("feeder={}|{e}", fc.name));
                    fc.vsm = None;
                }
            }
            match compute_der_envelope(&fc.model, &m.state, &fc.units, &m.readings, fc.dr) {
                Ok(env) => fc.envelope = env,
                Err(e) => ctx.action("envelope_failed", format!("feeder={}|{e}", fc.name)),
            }
            if let Some(on) = &m.case.injections.shunt_blocks_on {
                for (s, &b) in fc.shunts.iter_mut().zip(on) {
                    s.blocks_on = b;
                }
            }
            fc.meas = Some(m);
        }
        let now = ctx.now();
        ctx.timer(now + self.cfg.compute_delay_s, timer_key(D_CONSTRAINTS, self.ctr as u32));
        ctx.timer(now + self.cfg.request_deadline_s, timer_key(D_DEADLINE, self.ctr as u32));
    }

    fn send_constraints(&mut self, ctx: &mut Ctx<LocalMsg>) {
        ctx.action("constraints_sent", format!("ctr={}", self.ctr));
        for (f, fc) in self.feeders.iter().enumerate() {
            let e = fc.envelope;
            ctx.send(
                self.wiring.constraints[f],
                MessageFrame::DtConstraints {
                    sim_time: ctx.now(),
                    pv_p_curtail_max: e.pv_p_curtail_max,
                    pv_q_max: e.pv_q_max,
                    pv_q_min: e.pv_q_min,
                    dr_p_max: e.dr_p_max,
                    dr_p_min: e.dr_p_min,
                    losses: e.losses,
                },
            );
        }
    }

    fn on_request(&mut self, f: usize, frame: MessageFrame, ctx: &mut Ctx<LocalMsg>) {
        let MessageFrame::TdRequest { p_curtail_req, q_req, scenario_ctr, .. } = frame else { return };
        let fc = &mut self.feeders[f];
        match fc.tracker.observe(scenario_ctr) {
            Staleness::Stale => {
                ctx.action("stale_request", format!("feeder={}|ctr={scenario_ctr}", fc.name));
                return;
            }
            Staleness::Gap { missed } => {
                ctx.action("request_gap", format!("feeder={}|missed={missed}", fc.name));
            }
            Staleness::Fresh => {}
        }
        if scenario_ctr < self.ctr {
            // a late request for an earlier interval; the deadline already handled it
            ctx.action("late_request", format!("feeder={}|ctr={scenario_ctr}", fc.name));
            return;
        }
        let base = fc.model.base_kva();
        fc.held = Some((q_req * base, p_curtail_req * base, self.ctr));
        fc.got_request = true;
        ctx.timer(ctx.now() + self.cfg.dvvc_delay_s, timer_key(D_DISPATCH, f as u32));
    }

    fn on_deadline(&mut self, ctr: u64, ctx: &mut Ctx<LocalMsg>) {
        if ctr != self.ctr {
            return;
        }
        for f in 0..self.feeders.len() {
            let fc = &mut self.feeders[f];
            if fc.got_request {
                continue;
            }
            let mode = match fc.held {
                Some((_, _, at)) if self.ctr - at <= self.cfg.hold_intervals => "hold",
                _ => {
                    fc.held = Some((0.0, 0.0, self.ctr));
                    "zero"
                }
            };
            ctx.action("degraded", format!("feeder={}|ctr={}|mode={mode}", fc.name, self.ctr));
            self.dispatch(f, ctx);
        }
    }

    fn dispatch(&mut self, f: usize, ctx: &mut Ctx<LocalMsg>) {
        let cfg = &self.cfg;
        let fc = &mut self.feeders[f];
        let (Some(meas), Some(vsm), Some((q_req, p_req, _))) = (&fc.meas, &fc.vsm, fc.held) else {
            ctx.action("dispatch_skipped", format!("feeder={}|ctr={}", fc.name, self.ctr));
            return;
        };
        let magnitudes: Vec<f64> =
            fc.nodes.iter().map(|&(b, p)| meas.state.magnitude(b, p).unwrap_or(f64::NAN)).collect();
        let input = DistributionInput {
            ctr: self.ctr,
            q_req_kvar: q_req,
            p_curtail_kw: p_req,
            units: &fc.units,
            readings: &meas.readings,
            shunts: &fc.shunts,
            vsm,
            magnitudes: &magnitudes,
            base_kva: fc.model.base_kva(),
            v_lower: cfg.v_lower,
            v_upper: cfg.v_upper,
        };
        let plan = match distribution_vvc(&input) {
            Ok(plan) => plan,
            Err(e) => {
                ctx.action("dispatch_failed", format!("feeder={}|{e}", fc.name));
                return;
            }
        };
        ctx.action(
            "distribution_vvc",
            format!(
                "feeder={}|ctr={}|q_req={:.3}|q_alloc={:.3}|shortfall={:.3}",
                fc.name,
                self.ctr,
                q_req,
                plan.total_q(),
                plan.shortfall_kvar
            ),
        );
        if plan.shortfall_kvar.abs() > 1e-6 {
            ctx.action("shortfall", format!("feeder={}|kvar={:.3}", fc.name, plan.shortfall_kvar));
        }
        if plan.predicted_violation {
            ctx.action("predicted_violation", format!("feeder={}", fc.name));
        }
        ctx.send_local(
            self.wiring.to_hil,
            LocalMsg::Commands {
                feeder: f,
                pv_q: plan.pv_q.clone(),
                pv_p_curtail: plan.pv_p_curtail.clone(),
                shunt_blocks_on: plan.shunt_blocks_on.clone(),
            },
        );
        if let (Some(q_pu), Some(ch)) = (plan.hardware_q_pu, self.wiring.pv_command) {
            ctx.send(ch, MessageFrame::DpvCommand { sim_time: ctx.now(), q_req: q_pu });
        }
        fc.applied = Some((q_req, plan));
    }
}

impl Federate<LocalMsg> for DistController {
    fn id(&self) -> FederateId {
        self.cfg.id
    }

    fn name(&self) -> &str {
        "dist_controller"
    }

    fn init(&mut self, ctx: &mut Ctx<LocalMsg>) -> Result<(), String> {
        if self.wiring.constraints.len() != self.feeders.len() || self.wiring.requests.len() != self.feeders.len() {
            return Err("one constraints and one request channel per feeder required".into());
        }
        ctx.timer(0.0, timer_key(D_PULL, 0));
        Ok(())
    }

    fn on_timer(&mut self, key: u64, ctx: &mut Ctx<LocalMsg>) {
        match split_key(key) {
            (D_PULL, k) => {
                self.ctr = k as u64 + 1;
                ctx.action("measurement_pull", format!("ctr={}", self.ctr));
                ctx.send_local(self.wiring.to_hil, LocalMsg::Pull { ctr: self.ctr });
                ctx.timer(interval_start(k as u64 + 1, self.cfg.interval_s), timer_key(D_PULL, k + 1));
            }
            (D_CONSTRAINTS, ctr) if ctr as u64 == self.ctr => self.send_constraints(ctx),
            (D_DEADLINE, ctr) => self.on_deadline(ctr as u64, ctx),
            (D_DISPATCH, f) => self.dispatch(f as usize, ctx),
            _ => {}
        }
    }

    fn on_message(&mut self, channel: ChannelId, payload: Payload<LocalMsg>, ctx: &mut Ctx<LocalMsg>) {
        match payload {
            Payload::Local(LocalMsg::Measurement(m)) if channel == self.wiring.from_hil => self.on_measurement(m, ctx),
            Payload::Frame(frame @ MessageFrame::TdRequest { .. }) => {
                if let Some(f) = self.wiring.requests.iter().position(|&c| c == channel) {
                    self.on_request(f, frame, ctx);
                }
            }
            _ => {}
        }
    }
}

// ---------------------------------------------------------------- transmission

#[derive(Debug, Clone, PartialEq)]
pub struct TransControllerConfig {
    pub id: FederateId,
    pub interval_s: f64,
    pub compute_delay_s: f64,
    /// Give up waiting for constraints this long into the interval.
    pub constraints_deadline_s: f64,
    pub hold_intervals: u64,
    pub settings: TransmissionSettings,
    pub boundary_bus: String,
    pub feeder_names: Vec<String>,
    /// Power base of each feeder, kVA; requests travel in p.u. of it.
    pub feeder_base_kva: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransWiring {
    pub to_hil: ChannelId,
    pub from_hil: ChannelId,
    /// Per feeder, incoming.
    pub constraints: Vec<ChannelId>,
    /// Per feeder, outgoing.
    pub requests: Vec<ChannelId>,
}

const T_STEP: u32 = 1;
const T_DEADLINE: u32 = 2;
const T_SOLVE: u32 = 3;

pub struct TransController {
    cfg: TransControllerConfig,
    wiring: TransWiring,
    model: GridModel,
    envelopes: Vec<Option<(DerEnvelope, u64)>>,
    received: Vec<bool>,
    started: bool,
    ctr: u64,
    prev_q_total: f64,
    pending_gen: Option<Vec<f64>>,
    meas: Option<TransMeasurement>,
    last_requests: Vec<FeederRequest>,
}

impl TransController {
    pub fn new(cfg: TransControllerConfig, wiring: TransWiring, model: GridModel) -> Self {
        let n = cfg.feeder_names.len();
        TransController {
            cfg,
            wiring,
            model,
            envelopes: vec![None; n],
            received: vec![false; n],
            started: false,
            ctr: 0,
            prev_q_total: 0.0,
            pending_gen: None,
            meas: None,
            last_requests: vec![FeederRequest::default(); n],
        }
    }

    fn start_compute(&mut self, ctx: &mut Ctx<LocalMsg>) {
        self.started = true;
        ctx.send_local(self.wiring.to_hil, LocalMsg::TransPull);
        ctx.timer(ctx.now() + self.cfg.compute_delay_s, timer_key(T_SOLVE, self.ctr as u32));
    }

    fn solve(&mut self, ctx: &mut Ctx<LocalMsg>) {
        let mut envs = Vec::with_capacity(self.envelopes.len());
        for (f, slot) in self.envelopes.iter().enumerate() {
            let name = &self.cfg.feeder_names[f];
            let env = match slot {
                Some((e, _)) if self.received[f] => *e,
                Some((e, at)) if self.ctr - at <= self.cfg.hold_intervals => {
                    ctx.action("degraded", format!("feeder={name}|ctr={}|mode=hold", self.ctr));
                    *e
                }
                _ => {
                    ctx.action("degraded", format!("feeder={name}|ctr={}|mode=zero", self.ctr));
                    DerEnvelope::default()
                }
            };
            envs.push(env);
        }
        let Some(meas) = &self.meas else {
            ctx.action("transmission_vvc_skipped", format!("ctr={}", self.ctr));
            return;
        };
        for (g, &v) in self.model.generators.iter_mut().zip(&meas.gen_v_set) {
            g.v_set = v;
        }
        let plan =
            transmission_vvc(&self.model, &meas.boundary, &self.cfg.boundary_bus, &envs, self.prev_q_total, &self.cfg.settings);
        match plan {
            Ok(plan) => {
                ctx.action(
                    "transmission_vvc",
                    format!(
                        "ctr={}|v_boundary={:.6}|error={:.6}|q_total={:.3}|p_curtail={:.3}",
                        self.ctr, plan.v_boundary, plan.error, plan.q_total_kvar, plan.p_curtail_total_kw
                    ),
                );
                ctx.telemetry("transmission.q_request_total", plan.q_total_kvar, "kVAR");
                self.prev_q_total = plan.q_total_kvar;
                self.pending_gen = Some(plan.gen_v_set);
                self.last_requests = plan.requests;
            }
            Err(e) => {
                ctx.action("transmission_vvc_failed", format!("ctr={}|{e}|reusing last plan", self.ctr));
            }
        }
        for (f, r) in self.last_requests.iter().enumerate() {
            let base = self.cfg.feeder_base_kva[f];
            ctx.send(
                self.wiring.requests[f],
                MessageFrame::TdRequest {
                    sim_time: ctx.now(),
                    p_curtail_req: r.p_curtail_kw / base,
                    q_req: r.q_kvar / base,
                    scenario_ctr: self.ctr,
                },
            );
        }
    }
}

impl Federate<LocalMsg> for TransController {
    fn id(&self) -> FederateId {
        self.cfg.id
    }

    fn name(&self) -> &str {
        "trans_controller"
    }

    fn init(&mut self, ctx: &mut Ctx<LocalMsg>) -> Result<(), String> {
        let n = self.cfg.feeder_names.len();
        if self.wiring.constraints.len() != n || self.wiring.requests.len() != n || self.cfg.feeder_base_kva.len() != n {
            return Err("one constraints channel, request channel and base per feeder required".into());
        }
        if self.model.bus_index(&self.cfg.boundary_bus).is_none() {
            return Err(format!("boundary bus {} not in the transmission model", self.cfg.boundary_bus));
        }
        ctx.timer(0.0, timer_key(T_STEP, 0));
        Ok(())
    }

    fn on_timer(&mut self, key: u64, ctx: &mut Ctx<LocalMsg>) {
        match split_key(key) {
            (T_STEP, k) => {
                self.ctr = k as u64 + 1;
                self.started = false;
                self.received.iter_mut().for_each(|r| *r = false);
                match self.pending_gen.take() {
                    Some(v_set) => {
                        let list = v_set.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(";");
                        ctx.action("generator_commands", format!("ctr={}|v_set={list}", self.ctr));
                        ctx.send_local(self.wiring.to_hil, LocalMsg::GeneratorSetpoints(v_set));
                    }
                    None => ctx.action("generator_commands", format!("ctr={}|hold", self.ctr)),
                }
                let now = ctx.now();
                ctx.timer(now + self.cfg.constraints_deadline_s, timer_key(T_DEADLINE, self.ctr as u32));
                ctx.timer(interval_start(k as u64 + 1, self.cfg.interval_s), timer_key(T_STEP, k + 1));
            }
            (T_DEADLINE, ctr) if ctr as u64 == self.ctr && !self.started => {
                ctx.action("constraints_deadline", format!("ctr={}", self.ctr));
                self.start_compute(ctx);
            }
            (T_SOLVE, ctr) if ctr as u64 == self.ctr => self.solve(ctx),
            _ => {}
        }
    }

    fn on_message(&mut self, channel: ChannelId, payload: Payload<LocalMsg>, ctx: &mut Ctx<LocalMsg>) {
        match payload {
            Payload::Local(LocalMsg::TransMeasurement(m)) if channel == self.wiring.from_hil => self.meas = Some(m),
            Payload::Frame(MessageFrame::DtConstraints {
                sim_time,
                pv_p_curtail_max,
                pv_q_max,
                pv_q_min,
                dr_p_max,
                dr_p_min,
                losses,
            }) => {
                let Some(f) = self.wiring.constraints.iter().position(|&c| c == channel) else { return };
                if scenario_counter(sim_time) < self.ctr {
                    ctx.action("stale_constraints", format!("feeder={}", self.cfg.feeder_names[f]));
                    return;
                }
                let env = DerEnvelope { pv_p_curtail_max, pv_q_max, pv_q_min, dr_p_max, dr_p_min, losses };
                self.envelopes[f] = Some((env, self.ctr));
                self.received[f] = true;
                if !self.started && self.received.iter().all(|&r| r) {
                    self.start_compute(ctx);
                }
            }
            _ => {}
        }
    }
}
