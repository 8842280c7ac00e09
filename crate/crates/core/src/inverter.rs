//! PV inverter with an elliptical P/Q capability region.
//!
//! With apparent power rating `S` and reactive improvement factor `k`, the
//! operating point must satisfy `(P/S)² + (Q/(k·S))² ≤ 1`. A reactive command
//! takes priority: Q is clamped to `±k·S`, then P is limited to what the
//! ellipse leaves over and to the available (irradiance-limited) power.

/// Default reactive improvement factor for a two-level IGBT inverter.
pub const DEFAULT_K: f64 = 1.1;

use crate::federation::{ChannelId, Ctx, Federate, FederateId, MessageFrame, Payload};
use crate::grid::Profile;

const CAPABILITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverterParams {
    /// Apparent power rating, kVA.
    pub s_rating: f64,
    /// Reactive improvement factor, dimensionless, `>= 1`.
    pub k: f64,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum InverterError {
    #[error("inverter rating must be positive, got {0}")]
    Rating(f64),
    #[error("reactive improvement factor must be >= 1, got {0}")]
    Factor(f64),
}

impl InverterParams {
    pub fn new(s_rating: f64, k: f64) -> Result<Self, InverterError> {
        if !(s_rating > 0.0) {
            return Err(InverterError::Rating(s_rating));
        }
        if !(k >= 1.0) {
            return Err(InverterError::Factor(k));
        }
        Ok(InverterParams { s_rating, k })
    }

    /// Largest reactive output magnitude, `k·S`.
    pub fn q_limit(&self) -> f64 {
        self.k * self.s_rating
    }
}

/// Operating point for reactive command `q_cm` (kVAR) with `p_avail` kW
/// available. Returns `(p_out, q_out)`.
pub fn apply_q_command(q_cm: f64, p_avail: f64, params: &InverterParams) -> (f64, f64) {
    let limit = params.q_limit();
    let q_out = q_cm.min(limit).max(-limit);
    let s = params.s_rating;
    let reduced = q_out / params.k;
    let p_room = (s * s - reduced * reduced).max(0.0).sqrt();
    (p_room.min(p_avail.max(0.0)), q_out)
}

/// Whether `(p, q)` lies inside the capability ellipse.
pub fn capability_ok(p: f64, q: f64, params: &InverterParams) -> bool {
    let s = params.s_rating;
    let x = p / s;
    let y = q / (params.k * s);
    x * x + y * y <= 1.0 + CAPABILITY_TOL
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InverterState {
    /// Irradiance-limited available power, kW.
    pub p_avail: f64,
    /// Last received reactive command, kVAR.
    pub q_cmd: f64,
    /// Settled active output, kW.
    pub p_out: f64,
    /// Settled reactive output, kVAR.
    pub q_out: f64,
    /// Reactive value in the last response sent, kVAR.
    pub q_reported: f64,
}

/// Inverter device: capability model plus first-order settling of the
/// reactive output toward each new command.
#[derive(Debug, Clone)]
pub struct Inverter {
    pub params: InverterParams,
    pub state: InverterState,
    /// Time for the output to settle on a new command, seconds. Zero means
    /// the output steps immediately.
    pub settle_s: f64,
    q_before: f64,
    command_time: f64,
}

impl Inverter {
    pub fn new(params: InverterParams, settle_s: f64) -> Self {
        Inverter { params, state: InverterState::default(), settle_s: settle_s.max(0.0), q_before: 0.0, command_time: 0.0 }
    }

    /// New available-power sample; capped at the rating and floored at zero.
    pub fn update_irradiance(&mut self, sample_kw: f64) {
        self.state.p_avail = sample_kw.clamp(0.0, self.params.s_rating);
        self.recompute();
    }

    pub fn receive_command(&mut self, q_cmd_kvar: f64, now: f64) {
        self.q_before = self.q_at(now);
        self.command_time = now;
        self.state.q_cmd = q_cmd_kvar;
        self.recompute();
    }

    fn recompute(&mut self) {
        let (p, q) = apply_q_command(self.state.q_cmd, self.state.p_avail, &self.params);
        self.state.p_out = p;
        self.state.q_out = q;
    }

    /// Reactive output at `now`, following a first-order response with time
    /// constant `settle_s / 5` that snaps to the target once `settle_s` has
    /// elapsed.
    pub fn q_at(&self, now: f64) -> f64 {
        let elapsed = now - self.command_time;
        if self.settle_s == 0.0 || elapsed >= self.settle_s {
            return self.state.q_out;
        }
        let frac = 1.0 - (-5.0 * elapsed.max(0.0) / self.settle_s).exp();
        self.q_before + (self.state.q_out - self.q_before) * frac
    }

    /// Active output consistent with the reactive output at `now`.
    pub fn p_at(&self, now: f64) -> f64 {
        apply_q_command(self.q_at(now), self.state.p_avail, &self.params).0
    }

    /// Value to report in a response emitted at `now`; records it as reported.
    pub fn report(&mut self, now: f64) -> f64 {
        self.state.q_reported = self.q_at(now);
        self.state.q_reported
    }
}

/// Inverter as a federate: applies DPV_COMMAND frames, follows its
/// irradiance profile and emits a PVD_RESPONSE every `response_period_s`.
/// Command and response values are in p.u. of the rating.
pub struct InverterFederate {
    id: FederateId,
    pub device: Inverter,
    /// Available power as a fraction of the rating, sampled on each response.
    irradiance: Profile,
    response_period_s: f64,
    command_channel: ChannelId,
    response_channel: ChannelId,
}

impl InverterFederate {
    pub fn new(
        id: FederateId,
        device: Inverter,
        irradiance: Profile,
        response_period_s: f64,
        command_channel: ChannelId,
        response_channel: ChannelId,
    ) -> Self {
        InverterFederate { id, device, irradiance, response_period_s, command_channel, response_channel }
    }
}

impl<L: Send> Federate<L> for InverterFederate {
    fn id(&self) -> FederateId {
        self.id
    }

    fn name(&self) -> &str {
        "inverter"
    }

    fn init(&mut self, ctx: &mut Ctx<L>) -> Result<(), String> {
        if !(self.response_period_s > 0.0) {
            return Err("response period must be positive".into());
        }
        let s = self.device.params.s_rating;
        self.device.update_irradiance(self.irradiance.value_at(0.0) * s);
        ctx.timer(self.response_period_s, 1);
        Ok(())
    }

    fn on_timer(&mut self, key: u64, ctx: &mut Ctx<L>) {
        let now = ctx.now();
        let s = self.device.params.s_rating;
        self.device.update_irradiance(self.irradiance.value_at(now) * s);
        let q = self.device.report(now);
        ctx.telemetry("inverter.q_out", q, "kVAR");
        ctx.telemetry("inverter.p_out", self.device.p_at(now), "kW");
        ctx.send(self.response_channel, MessageFrame::PvdResponse { exec_time: now, q_resp: q / s });
        ctx.timer((key + 1) as f64 * self.response_period_s, key + 1);
    }

    fn on_message(&mut self, channel: ChannelId, payload: Payload<L>, ctx: &mut Ctx<L>) {
        if channel != self.command_channel {
            return;
        }
        if let Payload::Frame(MessageFrame::DpvCommand { q_req, .. }) = payload {
            let s = self.device.params.s_rating;
            self.device.receive_command(q_req * s, ctx.now());
            ctx.action("inverter_command", format!("q_req={q_req:.6}"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> InverterParams {
        InverterParams::new(1.0, 1.1).unwrap()
    }

    #[test]
    fn zero_command_passes_power() {
        assert_eq!(apply_q_command(0.0, 0.8, &unit()), (0.8, 0.0));
    }

    #[test]
    fn saturating_command() {
        let (p, q) = apply_q_command(2.0, 0.5, &unit());
        assert!((q - 1.1).abs() < 1e-12);
        assert!(p.abs() < 1e-9);
        let (p, q) = apply_q_command(-1.5, 0.3, &unit());
        assert!((q + 1.1).abs() < 1e-12);
        assert!(p.abs() < 1e-9);
    }

    #[test]
    fn partial_command() {
        let (p, q) = apply_q_command(0.5, 1.0, &unit());
        assert_eq!(q, 0.5);
        let expected = (1.0f64 - (0.5f64 / 1.1).powi(2)).sqrt();
        assert!((p - expected).abs() < 1e-12);
        assert!((p - 0.8907).abs() < 1e-4);
    }

    #[test]
    fn capability_boundary() {
        let params = unit();
        assert!(capability_ok(0.0, 0.0, &params));
        assert!(capability_ok(1.0, 0.0, &params));
        assert!(!capability_ok(1.0, 0.01, &params));
        assert!(!capability_ok(1.0, -0.01, &params));
        // (0.6)² + (0.88/1.1)² = 0.36 + 0.64
        assert!(capability_ok(0.6, 0.88, &params));
        assert!(!capability_ok(0.6, 0.8801, &params));
    }

    #[test]
    fn k_one_is_circle() {
        let circle = InverterParams::new(2.0, 1.0).unwrap();
        let (p, q) = apply_q_command(1.2, 5.0, &circle);
        assert!((p * p + q * q - 4.0).abs() < 1e-12);
    }

    #[test]
    fn params_validated() {
        assert!(InverterParams::new(0.0, 1.1).is_err());
        assert!(InverterParams::new(1.0, 0.9).is_err());
    }

    #[test]
    fn irradiance_updates() {
        let mut inv = Inverter::new(unit(), 0.0);
        inv.update_irradiance(1.0);
        assert_eq!(inv.state.p_out, 1.0);
        inv.update_irradiance(0.2);
        assert_eq!(inv.state.p_out, 0.2);
        inv.update_irradiance(3.0);
        assert_eq!(inv.state.p_avail, 1.0);

        let mut inv = Inverter::new(unit(), 0.0);
        inv.receive_command(1.1, 0.0);
        inv.update_irradiance(0.9);
        assert!(inv.state.p_out.abs() < 1e-9);
    }

    #[test]
    fn settling_reaches_command_within_cycle() {
        let mut inv = Inverter::new(unit(), 30.0);
        inv.update_irradiance(0.5);
        inv.receive_command(0.6, 100.0);
        let mid = inv.q_at(106.0);
        assert!(mid > 0.0 && mid < 0.6);
        assert_eq!(inv.q_at(130.0), 0.6);
        assert_eq!(inv.report(160.0), 0.6);
        assert_eq!(inv.state.q_reported, 0.6);
        assert!(capability_ok(inv.p_at(106.0), mid, &inv.params));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]
        #[test]
        fn output_stays_in_ellipse(
            q_cm in -2.2f64..2.2,
            p_avail in 0.0f64..1.2,
            s in 0.1f64..10.0,
            k in 1.0f64..1.5,
        ) {
            let params = InverterParams::new(s, k).unwrap();
            let (p, q) = apply_q_command(q_cm * s, p_avail * s, &params);
            prop_assert!(capability_ok(p, q, &params));
            prop_assert!(q.abs() <= k * s);
            prop_assert!(p <= p_avail * s && p >= 0.0);
            if (q_cm * s).abs() <= k * s {
                prop_assert_eq!(q, q_cm * s);
            }
        }

        #[test]
        fn more_reactive_never_more_active(a in 0.0f64..1.1, b in 0.0f64..1.1, p_avail in 0.0f64..1.2) {
            let params = unit();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let (p_lo, _) = apply_q_command(lo, p_avail, &params);
            let (p_hi, _) = apply_q_command(-hi, p_avail, &params);
            prop_assert!(p_hi <= p_lo);
        }
    }

    mod federate {
        use super::*;
        use crate::federation::{run_simulated, ChannelKind, ChannelSpec, LinkModel, MemoryRecorder};

        /// Sends one command at a fixed time and collects responses.
        struct Commander {
            at: f64,
            q: f64,
            seen: Vec<(f64, f64)>,
        }

        impl Federate<()> for Commander {
            fn id(&self) -> FederateId {
                FederateId(0)
            }
            fn name(&self) -> &str {
                "commander"
            }
            fn init(&mut self, ctx: &mut Ctx<()>) -> Result<(), String> {
                ctx.timer(self.at, 0);
                Ok(())
            }
            fn on_timer(&mut self, _: u64, ctx: &mut Ctx<()>) {
                ctx.send(0, MessageFrame::DpvCommand { sim_time: ctx.now(), q_req: self.q });
            }
            fn on_message(&mut self, _: ChannelId, payload: Payload<()>, ctx: &mut Ctx<()>) {
                if let Payload::Frame(MessageFrame::PvdResponse { exec_time, q_resp }) = payload {
                    self.seen.push((exec_time, q_resp));
                    ctx.telemetry("seen", q_resp, "pu");
                }
            }
        }

        fn run(at: f64, sever: Vec<(f64, f64)>) -> MemoryRecorder {
            let inv = Inverter::new(InverterParams::new(100.0, 1.1).unwrap(), 30.0);
            let profile = Profile::new(vec![0.5]).unwrap();
            let feds: Vec<Box<dyn Federate<()>>> = vec![
                Box::new(Commander { at, q: 0.4, seen: vec![] }),
                Box::new(InverterFederate::new(FederateId(4), inv, profile, 60.0, 0, 1)),
            ];
            let link = |w: Vec<(f64, f64)>| ChannelKind::Wire {
                link: LinkModel::new(crate::federation::Latency::Fixed(0.0), 0.0, w, 1).unwrap(),
                addr: None,
            };
            let channels = vec![
                ChannelSpec { name: "cmd".into(), from: FederateId(0), to: FederateId(4), kind: link(vec![]) },
                ChannelSpec { name: "resp".into(), from: FederateId(4), to: FederateId(0), kind: link(sever) },
            ];
            let mut rec = MemoryRecorder::default();
            run_simulated(feds, &channels, 200.0, &mut rec).unwrap();
            rec
        }

        #[test]
        fn first_response_after_one_period_carries_command() {
            let rec = run(0.0, vec![]);
            let seen: Vec<(f64, f64)> =
                rec.samples.iter().filter(|s| s.1 == "seen").map(|s| (s.0, s.2)).collect();
            assert_eq!(seen, vec![(60.0, 0.4), (120.0, 0.4), (180.0, 0.4)]);
        }

        #[test]
        fn no_command_reports_zero() {
            let rec = run(1000.0, vec![]);
            assert!(rec.samples.iter().filter(|s| s.1 == "seen").all(|s| s.2 == 0.0));
        }

        #[test]
        fn severed_responses_are_generated_not_delivered() {
            let rec = run(0.0, vec![(100.0, 200.0)]);
            let seen = rec.samples.iter().filter(|s| s.1 == "seen").count();
            let produced = rec.samples.iter().filter(|s| s.1 == "inverter.q_out").count();
            assert_eq!((seen, produced), (1, 3));
        }
    }
}
