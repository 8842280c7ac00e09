//! Software stand-ins for the two real-time grid simulators.
//!
//! Both tick on the boundary period. The transmission simulator re-solves
//! only when its inputs changed and publishes the boundary voltage to every
//! feeder; the distribution simulator does the same for each feeder and
//! publishes head aggregates upward. Between ticks they answer measurement
//! pulls and apply setpoints from their controllers over local channels.

use num_complex::Complex64;

use crate::controllers::{
    feeder_pv_units, FeederMeasurement, HardwareSpec, LocalMsg, PvReading, PvUnit, TransMeasurement,
};
use crate::federation::{
    scenario_counter, ChannelId, CounterTracker, Ctx, Federate, FederateId, MessageFrame, Payload, Staleness,
};
use crate::grid::{disaggregate_feeder_profile, GridModel, Phase, Profile};
use crate::inverter::{apply_q_command, InverterParams};
use crate::powerflow::{
    all_nodes, balanced_head, feeder_aggregate, solve_feeder, solve_transmission, BoundaryLoad, DeviceInjection,
    FeederAggregate, FeederCase, FeederInjections, PhasorState,
};

/// Tick bookkeeping shared by both simulators.
#[derive(Debug, Clone, Copy)]
pub struct TickPlan {
    pub period_s: f64,
    /// Telemetry is emitted on every `telemetry_every`-th tick after the first.
    pub telemetry_every: u64,
}

impl TickPlan {
    pub fn new(period_s: f64, telemetry_period_s: f64) -> Self {
        let every = (telemetry_period_s / period_s).round().max(1.0) as u64;
        TickPlan { period_s, telemetry_every: every }
    }

    fn time(&self, n: u64) -> f64 {
        n as f64 * self.period_s
    }

    fn reports(&self, n: u64) -> bool {
        n > 0 && n % self.telemetry_every == 0
    }
}

// ---------------------------------------------------------------- transmission

pub struct TransmissionHil {
    id: FederateId,
    model: GridModel,
    boundary_bus: String,
    bus: usize,
    ticks: TickPlan,
    feeder_names: Vec<String>,
    down: Vec<ChannelId>,
    up: Vec<ChannelId>,
    to_ctrl: ChannelId,
    from_ctrl: ChannelId,
    held: Vec<(f64, f64)>,
    trackers: Vec<CounterTracker>,
    dirty: bool,
    /// Boundary magnitude and phase-a angle of the last good solve.
    solution: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct TransmissionHilWiring {
    /// Per feeder, outgoing boundary voltage.
    pub down: Vec<ChannelId>,
    /// Per feeder, incoming head aggregates.
    pub up: Vec<ChannelId>,
    pub to_ctrl: ChannelId,
    pub from_ctrl: ChannelId,
}

impl TransmissionHil {
    pub fn new(
        id: FederateId,
        model: GridModel,
        boundary_bus: String,
        ticks: TickPlan,
        feeder_names: Vec<String>,
        wiring: TransmissionHilWiring,
    ) -> Self {
        let n = feeder_names.len();
        let bus = model.bus_index(&boundary_bus).unwrap_or(usize::MAX);
        TransmissionHil {
            id,
            model,
            boundary_bus,
            bus,
            ticks,
            feeder_names,
            down: wiring.down,
            up: wiring.up,
            to_ctrl: wiring.to_ctrl,
            from_ctrl: wiring.from_ctrl,
            held: vec![(0.0, 0.0); n],
            trackers: vec![CounterTracker::default(); n],
            dirty: true,
            solution: (1.0, 0.0),
        }
    }

    fn boundary(&self) -> Vec<BoundaryLoad> {
        self.held
            .iter()
            .map(|&(p, q)| BoundaryLoad { bus: self.boundary_bus.clone(), p_kw: p, q_kvar: q })
            .collect()
    }

    fn resolve(&mut self) -> Result<(), String> {
        if !self.dirty {
            return Ok(());
        }
        self.dirty = false;
        let sol = solve_transmission(&self.model, &self.boundary()).map_err(|e| e.to_string())?;
        self.solution = (sol.magnitude(self.bus), sol.angle_deg(self.bus));
        Ok(())
    }
}

impl Federate<LocalMsg> for TransmissionHil {
    fn id(&self) -> FederateId {
        self.id
    }

    fn name(&self) -> &str {
        "transmission_hil"
    }

    fn init(&mut self, ctx: &mut Ctx<LocalMsg>) -> Result<(), String> {
        if self.bus == usize::MAX {
            return Err(format!("boundary bus {} not in model", self.boundary_bus));
        }
        let n = self.feeder_names.len();
        if self.down.len() != n || self.up.len() != n {
            return Err("one boundary channel pair per feeder required".into());
        }
        self.resolve().map_err(|e| format!("initial solve failed: {e}"))?;
        ctx.timer(0.0, 0);
        Ok(())
    }

    fn on_timer(&mut self, n: u64, ctx: &mut Ctx<LocalMsg>) {
        let t = self.ticks.time(n);
        if let Err(e) = self.resolve() {
            ctx.action("transmission_solve_failed", e);
        }
        let (v_mag, v_angle_a) = self.solution;
        let ctr = scenario_counter(t);
        for &ch in &self.down {
            ctx.send(ch, MessageFrame::TdBoundary { sim_time: t, v_mag, v_angle_a, scenario_ctr: ctr });
        }
        if self.ticks.reports(n) {
            ctx.telemetry("transmission.v_boundary", v_mag, "pu");
        }
        ctx.timer(self.ticks.time(n + 1), n + 1);
    }

    fn on_message(&mut self, channel: ChannelId, payload: Payload<LocalMsg>, ctx: &mut Ctx<LocalMsg>) {
        match payload {
            Payload::Frame(MessageFrame::DtBoundary { p_total, q_total, scenario_ctr, .. }) => {
                let Some(f) = self.up.iter().position(|&c| c == channel) else { return };
                if self.trackers[f].observe(scenario_ctr) == Staleness::Stale {
                    ctx.action("stale_boundary", format!("feeder={}|ctr={scenario_ctr}", self.feeder_names[f]));
                    return;
                }
                if self.held[f] != (p_total, q_total) {
                    self.held[f] = (p_total, q_total);
                    self.dirty = true;
                }
            }
            Payload::Local(LocalMsg::TransPull) if channel == self.from_ctrl => {
                if let Err(e) = self.resolve() {
                    ctx.action("transmission_solve_failed", e);
                }
                let m = TransMeasurement {
                    boundary: self.boundary(),
                    gen_v_set: self.model.generators.iter().map(|g| g.v_set).collect(),
                };
                ctx.send_local(self.to_ctrl, LocalMsg::TransMeasurement(m));
            }
            Payload::Local(LocalMsg::GeneratorSetpoints(v)) if channel == self.from_ctrl => {
                for (g, v) in self.model.generators.iter_mut().zip(v) {
                    if g.v_set != v {
                        g.v_set = v;
                        self.dirty = true;
                    }
                }
            }
            _ => {}
        }
    }
}

// ---------------------------------------------------------------- distribution

/// Setup of the hardware inverter as seen from the distribution simulator.
#[derive(Debug, Clone)]
pub struct HardwarePort {
    pub feeder: usize,
    pub params: InverterParams,
    /// Available power as a fraction of the rating.
    pub irradiance: Profile,
    /// Responses older than this are no longer applied to the network.
    pub timeout_s: f64,
    pub response_channel: ChannelId,
}

/// One feeder and its operating inputs.
pub struct FeederSetup {
    pub name: String,
    pub model: GridModel,
    /// Feeder-head active load, kW.
    pub head_load: Profile,
    /// Per solar farm in model order, fraction of the rating.
    pub solar: Vec<Profile>,
}

struct FeederSim {
    name: String,
    model: GridModel,
    nodes: Vec<(usize, Phase)>,
    load_shares: Vec<Vec<f64>>,
    load_step: Profile,
    units: Vec<PvUnit>,
    solar: Vec<Profile>,
    q_cmd: Vec<f64>,
    curtail: Vec<f64>,
    shunt_on: Vec<u32>,
    head: [Complex64; 3],
    tracker: CounterTracker,
    case: Option<FeederCase>,
    state: Option<PhasorState>,
    readings: Vec<PvReading>,
    aggregate: FeederAggregate,
    failed: bool,
}

impl FeederSim {
    fn new(setup: FeederSetup, k: f64, hardware: Option<(&HardwarePort, &HardwareSpec)>) -> Result<Self, String> {
        let shares = disaggregate_feeder_profile(setup.head_load.values(), &setup.model.loads)
            .map_err(|e| format!("feeder {}: {e}", setup.name))?;
        let units = feeder_pv_units(&setup.model, k, hardware.map(|h| h.1));
        let n = units.len();
        Ok(FeederSim {
            nodes: all_nodes(&setup.model),
            load_shares: shares,
            load_step: setup.head_load,
            q_cmd: vec![0.0; n],
            curtail: vec![0.0; n],
            shunt_on: setup.model.shunts.iter().map(|s| s.blocks_on).collect(),
            units,
            solar: setup.solar,
            head: balanced_head(1.0, 0.0),
            tracker: CounterTracker::default(),
            case: None,
            state: None,
            readings: Vec::new(),
            aggregate: FeederAggregate::default(),
            failed: false,
            name: setup.name,
            model: setup.model,
        })
    }

    fn build_case(&self, t: f64, hw: Option<(f64, f64, f64)>) -> (FeederCase, Vec<PvReading>) {
        let idx = self.load_step.index_at(t);
        let loads = self
            .model
            .loads
            .iter()
            .zip(&self.load_shares)
            .map(|(l, s)| {
                let p = s[idx];
                let q = if l.rated_p > 0.0 { p * l.rated_q / l.rated_p } else { l.rated_q };
                (p, q)
            })
            .collect();
        let mut devices = Vec::with_capacity(self.units.len());
        let mut readings = Vec::with_capacity(self.units.len());
        for (i, u) in self.units.iter().enumerate() {
            let reading = if u.hardware {
                let (p_avail, p_out, q_out) = hw.unwrap_or_default();
                PvReading { p_avail, p_out, q_out }
            } else {
                let p_avail = self.solar[i].value_at(t) * u.params.s_rating;
                let (p, q) = apply_q_command(self.q_cmd[i], (p_avail - self.curtail[i]).max(0.0), &u.params);
                PvReading { p_avail, p_out: p, q_out: q }
            };
            devices.push(DeviceInjection {
                id: u.id.clone(),
                bus: u.bus.clone(),
                phases: u.phases,
                p_kw: reading.p_out,
                q_kvar: reading.q_out,
            });
            readings.push(reading);
        }
        let case = FeederCase {
            head: self.head,
            injections: FeederInjections { loads: Some(loads), devices, shunt_blocks_on: Some(self.shunt_on.clone()) },
        };
        (case, readings)
    }

    /// Re-solves if anything feeding the case changed. Returns an error
    /// description the first time a solve fails.
    fn refresh(&mut self, t: f64, hw: Option<(f64, f64, f64)>) -> Option<String> {
        let (case, readings) = self.build_case(t, hw);
        if self.case.as_ref() == Some(&case) {
            return None;
        }
        let result = solve_feeder(&self.model, &case.head, &case.injections)
            .map_err(|e| e.to_string())
            .and_then(|s| {
                let agg = feeder_aggregate(&s, &self.model, t).map_err(|e| e.to_string())?;
                Ok((s, agg))
            });
        self.case = Some(case);
        self.readings = readings;
        match result {
            Ok((state, agg)) => {
                self.state = Some(state);
                self.aggregate = agg;
                self.failed = false;
                None
            }
            Err(e) => {
                // keep the last good aggregate flowing upstream
                if let Some(s) = &mut self.state {
                    s.converged = false;
                }
                let first = !self.failed;
                self.failed = true;
                first.then(|| format!("feeder={}|{e}", self.name))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct DistributionHilWiring {
    /// Per feeder, incoming boundary voltage.
    pub down: Vec<ChannelId>,
    /// Per feeder, outgoing head aggregates.
    pub up: Vec<ChannelId>,
    pub to_ctrl: ChannelId,
    pub from_ctrl: ChannelId,
}

pub struct DistributionHil {
    id: FederateId,
    ticks: TickPlan,
    feeders: Vec<FeederSim>,
    wiring: DistributionHilWiring,
    hardware: Option<HardwarePort>,
    /// Last hardware response, p.u., and when it arrived.
    last_response: Option<(f64, f64)>,
}

impl DistributionHil {
    pub fn new(
        id: FederateId,
        ticks: TickPlan,
        feeders: Vec<FeederSetup>,
        k: f64,
        hardware: Option<(HardwarePort, HardwareSpec)>,
        wiring: DistributionHilWiring,
    ) -> Result<Self, String> {
        let sims = feeders
            .into_iter()
            .enumerate()
            .map(|(f, s)| {
                let hw = hardware.as_ref().filter(|h| h.0.feeder == f).map(|h| (&h.0, &h.1));
                FeederSim::new(s, k, hw)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DistributionHil {
            id,
            ticks,
            feeders: sims,
            wiring,
            hardware: hardware.map(|h| h.0),
            last_response: None,
        })
    }

    /// Hardware operating point `(p_avail, p_out, q_out)` at `t`.
    fn hardware_point(&self, t: f64) -> Option<(usize, (f64, f64, f64))> {
        let hw = self.hardware.as_ref()?;
        let s = hw.params.s_rating;
        let q = match self.last_response {
            Some((q_pu, at)) if t - at <= hw.timeout_s => q_pu * s,
            _ => 0.0,
        };
        let p_avail = hw.irradiance.value_at(t) * s;
        let (p, _) = apply_q_command(q, p_avail, &hw.params);
        Some((hw.feeder, (p_avail, p, q)))
    }

    fn refresh(&mut self, t: f64, ctx: &mut Ctx<LocalMsg>) {
        let hw = self.hardware_point(t);
        for (f, sim) in self.feeders.iter_mut().enumerate() {
            let point = hw.filter(|h| h.0 == f).map(|h| h.1);
            if let Some(e) = sim.refresh(t, point) {
                ctx.action("feeder_solve_failed", e);
            }
        }
    }

    fn report(&self, ctx: &mut Ctx<LocalMsg>) {
        for sim in &self.feeders {
            let Some(state) = &sim.state else { continue };
            for &(b, p) in &sim.nodes {
                if let Some(v) = state.magnitude(b, p) {
                    ctx.telemetry(format!("{}.node.{}.{}.v_mag", sim.name, sim.model.buses[b].id, p.as_char()), v, "pu");
                }
            }
            ctx.telemetry(format!("{}.v_max", sim.name), state.max_magnitude(), "pu");
            ctx.telemetry(format!("{}.v_min", sim.name), state.min_magnitude(), "pu");
            ctx.telemetry(format!("{}.p_total", sim.name), sim.aggregate.p_total, "kW");
            ctx.telemetry(format!("{}.q_total", sim.name), sim.aggregate.q_total, "kVAR");
            ctx.telemetry(format!("{}.pv_q", sim.name), sim.readings.iter().map(|r| r.q_out).sum::<f64>(), "kVAR");
        }
    }
}

impl Federate<LocalMsg> for DistributionHil {
    fn id(&self) -> FederateId {
        self.id
    }

    fn name(&self) -> &str {
        "distribution_hil"
    }

    fn init(&mut self, ctx: &mut Ctx<LocalMsg>) -> Result<(), String> {
        let n = self.feeders.len();
        if self.wiring.down.len() != n || self.wiring.up.len() != n {
            return Err("one boundary channel pair per feeder required".into());
        }
        let hw = self.hardware_point(0.0);
        for (f, sim) in self.feeders.iter_mut().enumerate() {
            if let Some(e) = sim.refresh(0.0, hw.filter(|h| h.0 == f).map(|h| h.1)) {
                return Err(format!("initial solve failed: {e}"));
            }
        }
        ctx.timer(0.0, 0);
        Ok(())
    }

    fn on_timer(&mut self, n: u64, ctx: &mut Ctx<LocalMsg>) {
        let t = self.ticks.time(n);
        self.refresh(t, ctx);
        let ctr = scenario_counter(t);
        for (sim, &ch) in self.feeders.iter().zip(&self.wiring.up) {
            ctx.send(
                ch,
                MessageFrame::DtBoundary {
                    sim_time: t,
                    p_total: sim.aggregate.p_total,
                    q_total: sim.aggregate.q_total,
                    scenario_ctr: ctr,
                },
            );
        }
        if self.ticks.reports(n) {
            self.report(ctx);
        }
        ctx.timer(self.ticks.time(n + 1), n + 1);
    }

    fn on_message(&mut self, channel: ChannelId, payload: Payload<LocalMsg>, ctx: &mut Ctx<LocalMsg>) {
        match payload {
            Payload::Frame(MessageFrame::TdBoundary { v_mag, v_angle_a, scenario_ctr, .. }) => {
                let Some(f) = self.wiring.down.iter().position(|&c| c == channel) else { return };
                let sim = &mut self.feeders[f];
                if sim.tracker.observe(scenario_ctr) == Staleness::Stale {
                    ctx.action("stale_boundary", format!("feeder={}|ctr={scenario_ctr}", sim.name));
                    return;
                }
                sim.head = balanced_head(v_mag, v_angle_a);
            }
            Payload::Frame(MessageFrame::PvdResponse { q_resp, .. }) => {
                if self.hardware.as_ref().is_some_and(|h| h.response_channel == channel) {
                    self.last_response = Some((q_resp, ctx.now()));
                }
            }
            Payload::Local(LocalMsg::Pull { .. }) if channel == self.wiring.from_ctrl => {
                self.refresh(ctx.now(), ctx);
                let meas = self
                    .feeders
                    .iter()
                    .map(|sim| FeederMeasurement {
                        case: sim.case.clone().expect("solved at init"),
                        state: sim.state.clone().expect("solved at init"),
                        readings: sim.readings.clone(),
                    })
                    .collect();
                ctx.send_local(self.wiring.to_ctrl, LocalMsg::Measurement(meas));
            }
            Payload::Local(LocalMsg::Commands { feeder, pv_q, pv_p_curtail, shunt_blocks_on })
                if channel == self.wiring.from_ctrl =>
            {
                let Some(sim) = self.feeders.get_mut(feeder) else { return };
                for (i, u) in sim.units.iter().enumerate() {
                    if u.hardware {
                        continue;
                    }
                    sim.q_cmd[i] = pv_q.get(i).copied().unwrap_or(0.0);
                    sim.curtail[i] = pv_p_curtail.get(i).copied().unwrap_or(0.0);
                }
                for (on, b) in sim.shunt_on.iter_mut().zip(shunt_blocks_on) {
                    *on = b;
                }
            }
            _ => {}
        }
    }
}
