//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any criterion fails. Scenario runs go through the `tdsim`
//! binary in simulated mode.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use tdsim_core::federation::{decode_frame, Direction, EventRow, Latency, Link, LinkDecision, LinkModel};
use tdsim_core::grid::{parse_grid_file, ParseMode, Phase};
use tdsim_core::inverter::{apply_q_command, InverterParams};
use tdsim_core::orchestrator::{
    load_scenario, read_events_csv, read_telemetry_csv, summarize, TelemetryRecord, EVENTS_FILE, TELEMETRY_FILE,
};
use tdsim_core::powerflow::{
    all_nodes, balanced_head, compute_vsm, feeder_aggregate, solve_feeder, Actuator, DeviceInjection, FeederCase,
    FeederInjections, DEFAULT_VSM_DELTA,
};
use tdsim_core::{MessageFrame, MessageFrame as F, ScenarioSpec};

// Pinned tolerances and budgets.
const INVERTER_SAMPLES: usize = 20_000;
const INVERTER_TOL: f64 = 1e-12;
const INVERTER_EXAMPLE_TOL: f64 = 1e-9;
const INVERTER_BUDGET: Duration = Duration::from_secs(1);
const PF_NETWORKS: u64 = 200;
const PF_TOL: f64 = 1e-6;
const PF_TWO_BUS: f64 = 0.9795;
const PF_TWO_BUS_TOL: f64 = 1e-4;
const PF_BALANCE_TOL: f64 = 1e-6;
const PF_BUDGET: Duration = Duration::from_secs(10);
const VSM_REL_TOL: f64 = 0.05;
const LINK_MESSAGES: usize = 10_000;
const LINK_SE_MULTIPLE: f64 = 3.0;
const VPN_MEAN_S: f64 = 0.110;
const VPN_SD_S: f64 = 0.02;
const TRACK_REL: f64 = 0.01;
const TRACK_ABS_KVAR: f64 = 1.0;
const TRACK_BUDGET: Duration = Duration::from_secs(60);
const DEFICIT_TOL_KVAR: f64 = 1.0;
const TIMELINE_TOL_S: f64 = 1e-3;
const SEED: u64 = 42;

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/desk").join(name)
}

struct RunArtifacts {
    dir: tempfile::TempDir,
    elapsed: Duration,
    telemetry: Vec<TelemetryRecord>,
    events: Vec<EventRow>,
}

impl RunArtifacts {
    fn file(&self, name: &str) -> Vec<u8> {
        std::fs::read(self.dir.path().join(name)).unwrap()
    }
}

fn run_cli(scenario: &str) -> Result<RunArtifacts, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let started = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_tdsim"))
        .args(["run", "--mode", "sim", "--seed", &SEED.to_string(), "--out"])
        .arg(dir.path())
        .arg(scenario_path(scenario))
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    if !status.success() {
        return Err(format!("tdsim run {scenario} exited with {status}"));
    }
    let telemetry = read_telemetry_csv(std::fs::File::open(dir.path().join(TELEMETRY_FILE)).unwrap())
        .map_err(|e| e.to_string())?;
    let events =
        read_events_csv(std::fs::File::open(dir.path().join(EVENTS_FILE)).unwrap()).map_err(|e| e.to_string())?;
    Ok(RunArtifacts { dir, elapsed, telemetry, events })
}

fn healthy() -> &'static Result<RunArtifacts, String> {
    static RUN: OnceLock<Result<RunArtifacts, String>> = OnceLock::new();
    RUN.get_or_init(|| run_cli("healthy.scn"))
}

fn sever() -> &'static Result<RunArtifacts, String> {
    static RUN: OnceLock<Result<RunArtifacts, String>> = OnceLock::new();
    RUN.get_or_init(|| run_cli("sever.scn"))
}

fn spec(name: &str) -> ScenarioSpec {
    load_scenario(&scenario_path(name)).unwrap()
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn inverter_capability() -> Check {
    let started = Instant::now();
    let mut rng = oracle::Stream::new(7);
    let mut worst: f64 = 0.0;
    for _ in 0..INVERTER_SAMPLES {
        let s = rng.range(1.0, 1000.0);
        let params = InverterParams::new(s, 1.1).unwrap();
        let q_cm = rng.range(-2.0 * 1.1 * s, 2.0 * 1.1 * s);
        let p_avail = rng.range(0.0, 1.2 * s);
        let (p, q) = apply_q_command(q_cm, p_avail, &params);
        let excess = (p / s).powi(2) + (q / (1.1 * s)).powi(2) - 1.0;
        worst = worst.max(excess);
        ensure(excess <= INVERTER_TOL, || format!("outside ellipse by {excess:e} at q_cm={q_cm}, p_avail={p_avail}"))?;
        ensure(p >= 0.0 && p <= p_avail + INVERTER_TOL, || format!("p={p} exceeds available {p_avail}"))?;
        ensure(q == q_cm.clamp(-1.1 * s, 1.1 * s), || format!("q={q} is not the clamped command {q_cm}"))?;
    }

    let unit = InverterParams::new(1.0, 1.1).unwrap();
    let examples = [
        ((2.0, 0.5), (0.0, 1.1)),
        ((0.5, 1.0), ((1.0f64 - (0.5f64 / 1.1).powi(2)).sqrt(), 0.5)),
        ((-1.5, 0.3), (0.0, -1.1)),
    ];
    for ((q_cm, p_avail), (p_want, q_want)) in examples {
        let (p, q) = apply_q_command(q_cm, p_avail, &unit);
        ensure((p - p_want).abs() < INVERTER_EXAMPLE_TOL && (q - q_want).abs() < INVERTER_EXAMPLE_TOL, || {
            format!("({q_cm}, {p_avail}) gave ({p}, {q}), expected ({p_want}, {q_want})")
        })?;
    }

    let circle = InverterParams::new(1.0, 1.0).unwrap();
    for i in 0..=100 {
        let q_cm = -1.0 + 0.02 * i as f64;
        let (p, q) = apply_q_command(q_cm, 10.0, &circle);
        ensure((p * p + q * q - 1.0).abs() < INVERTER_TOL, || format!("k=1 point ({p}, {q}) off the semicircle"))?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < INVERTER_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("{INVERTER_SAMPLES} samples, worst excess {worst:.1e}, 3 examples, semicircle, {elapsed:.2?}"))
}

fn power_flow_oracle() -> Check {
    let started = Instant::now();
    let mut worst_v: f64 = 0.0;
    let mut worst_balance: f64 = 0.0;
    for seed in 0..PF_NETWORKS {
        let (model, inj) = oracle::random_feeder(seed);
        let head = balanced_head(1.0 + 0.0003 * (seed % 100) as f64, 0.0);
        let st = solve_feeder(&model, &head, &inj).map_err(|e| format!("network {seed}: {e}"))?;
        ensure(st.converged, || format!("network {seed} did not converge"))?;
        let o = oracle::nodal_oracle(&model, &head, &inj);
        for (k, &(b, p)) in o.nodes.iter().enumerate() {
            worst_v = worst_v.max((st.voltage(b, p).unwrap() - o.v[k]).norm());
        }
        let agg = feeder_aggregate(&st, &model, 0.0).unwrap();
        let base = model.base_kva();
        let head_pu = Complex64::new(agg.p_total, agg.q_total) / base;
        let net = Complex64::new(agg.load_p - agg.injection_p, agg.load_q - agg.injection_q) / base;
        let losses = Complex64::new(agg.losses, agg.q_losses) / base;
        worst_balance = worst_balance.max((head_pu - net - losses).norm()).max((head_pu - o.head_power).norm());
    }
    ensure(worst_v < PF_TOL, || format!("voltage mismatch {worst_v:e}"))?;
    ensure(worst_balance < PF_BALANCE_TOL, || format!("energy imbalance {worst_balance:e}"))?;

    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/grids/two_bus.grid"))
        .unwrap();
    let model = parse_grid_file(&text, ParseMode::Radial).map_err(|e| e.to_string())?;
    let head = balanced_head(1.0, 0.0);
    let st = solve_feeder(&model, &head, &FeederInjections::default()).map_err(|e| e.to_string())?;
    let v2 = st.magnitude(1, Phase::A).unwrap();
    let o = oracle::nodal_oracle(&model, &head, &FeederInjections::default());
    let v2_oracle = o.v[1].norm();
    ensure((v2 - v2_oracle).abs() < PF_TWO_BUS_TOL && (v2 - PF_TWO_BUS).abs() < PF_TWO_BUS_TOL, || {
        format!("two-bus |V2| = {v2}, oracle {v2_oracle}")
    })?;
    let elapsed = started.elapsed();
    ensure(elapsed < PF_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{PF_NETWORKS} networks, max |dV| {worst_v:.1e}, max imbalance {worst_balance:.1e}, |V2| {v2:.6}, {elapsed:.2?}"
    ))
}

fn vsm_check() -> Check {
    let doc = "[buses]\nh, abc, 12.47, slack\nn1, abc, 12.47, pq\nn2, abc, 12.47, pq\n\
               [branches]\nh, n1, 0.02, 0.04\nn1, n2, 0.03, 0.05\n\
               [loads]\nn1, abc, P, 600, 250\nn2, abc, Z, 400, 150\n";
    let model = parse_grid_file(doc, ParseMode::Radial).unwrap();
    let case = FeederCase { head: balanced_head(1.0, 0.0), injections: FeederInjections::default() };
    let state = solve_feeder(&model, &case.head, &case.injections).unwrap();
    let nodes: Vec<_> = all_nodes(&model).into_iter().filter(|&(b, _)| b != 0).collect();
    let acts: Vec<Actuator> = ["n1", "n2"]
        .iter()
        .map(|b| Actuator { id: b.to_string(), bus: b.to_string(), phases: tdsim_core::PhaseSet::ABC })
        .collect();
    let h = DEFAULT_VSM_DELTA;
    let vsm = compute_vsm(&model, &case, &state, &nodes, &acts, h).map_err(|e| e.to_string())?;
    let kvar = h * model.base_kva();
    let mut worst: f64 = 0.0;
    for (a, act) in acts.iter().enumerate() {
        let solve = |q: f64| {
            let inj = FeederInjections {
                devices: vec![DeviceInjection { id: "d".into(), bus: act.bus.clone(), phases: act.phases, p_kw: 0.0, q_kvar: q }],
                ..Default::default()
            };
            solve_feeder(&model, &case.head, &inj).unwrap()
        };
        let (up, down) = (solve(kvar), solve(-kvar));
        for (n, &(b, p)) in nodes.iter().enumerate() {
            let central = (up.magnitude(b, p).unwrap() - down.magnitude(b, p).unwrap()) / (2.0 * h);
            let rel = (vsm.q[n][a] - central).abs() / central.abs();
            worst = worst.max(rel);
            ensure(vsm.q[n][a] > 0.0, || format!("dV/dQ at {b}/{p:?} for {} is not positive", act.id))?;
        }
    }
    ensure(worst <= VSM_REL_TOL, || format!("relative error {worst:.3}"))?;
    Ok(format!("{} entries, worst relative error {:.2}%", nodes.len() * acts.len(), 100.0 * worst))
}

fn determinism() -> Check {
    let first = healthy().as_ref()?;
    let second = run_cli("healthy.scn")?;
    for name in [TELEMETRY_FILE, EVENTS_FILE] {
        let (a, b) = (first.file(name), second.file(name));
        ensure(a == b, || format!("{name} differs between runs"))?;
    }
    Ok(format!(
        "telemetry.csv ({} rows) and events.csv ({} rows) identical",
        first.telemetry.len(),
        first.events.len()
    ))
}

/// Replays every wire channel of a run through a fresh link built from the
/// scenario and seed. Checks that each send's fate matches the log, that
/// deliveries arrive in send order at the replayed time, and that nothing
/// sent inside a sever window arrives.
fn replay_links(spec: &ScenarioSpec, events: &[EventRow]) -> Result<usize, String> {
    let until = spec.duration_s();
    let mut per_channel: BTreeMap<&str, Vec<&EventRow>> = BTreeMap::new();
    for e in events.iter().filter(|e| e.direction != Direction::Action) {
        per_channel.entry(e.channel.as_str()).or_default().push(e);
    }
    let mut checked = 0;
    for (name, rows) in per_channel {
        let mut link = Link::new(spec.link_for(name, SEED));
        let mut expected = VecDeque::new();
        let recvs: Vec<&&EventRow> = rows.iter().filter(|e| e.direction == Direction::Recv).collect();
        let drops = rows.iter().filter(|e| e.direction == Direction::Drop).count();
        let mut predicted_drops = 0;
        for e in rows.iter().filter(|e| e.direction == Direction::Send) {
            match link.send(e.time) {
                LinkDecision::Deliver { at, .. } => {
                    ensure(!link.model.is_severed(e.time), || format!("{name}: delivery inside sever window"))?;
                    if at <= until {
                        expected.push_back((at, e.text.clone()));
                    }
                }
                LinkDecision::Drop(_) => predicted_drops += 1,
            }
        }
        ensure(predicted_drops == drops, || format!("{name}: {drops} drops logged, {predicted_drops} replayed"))?;
        ensure(expected.len() == recvs.len(), || {
            format!("{name}: {} receptions logged, {} replayed", recvs.len(), expected.len())
        })?;
        for (r, (at, text)) in recvs.iter().zip(expected) {
            ensure(r.text == text, || format!("{name}: out-of-order delivery at {}", r.time))?;
            ensure((r.time - at).abs() < TIMELINE_TOL_S, || format!("{name}: recv at {} vs replay {at}", r.time))?;
            checked += 1;
        }
    }
    Ok(checked)
}

fn link_statistics() -> Check {
    let mut link = Link::new(LinkModel::vpn(SEED));
    let samples: Vec<f64> = (0..LINK_MESSAGES)
        .filter_map(|i| match link.send(i as f64) {
            LinkDecision::Deliver { sampled_latency, .. } => Some(sampled_latency),
            LinkDecision::Drop(_) => None,
        })
        .collect();
    ensure(samples.len() == LINK_MESSAGES, || "vpn dropped messages".into())?;
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let se = VPN_SD_S / (LINK_MESSAGES as f64).sqrt();
    ensure((mean - VPN_MEAN_S).abs() < LINK_SE_MULTIPLE * se, || format!("vpn mean {mean:.6} s"))?;

    // a severed fixed-latency link delivers nothing sent inside its window
    let mut severed = Link::new(LinkModel::new(Latency::Fixed(0.11), 0.0, vec![(100.0, 200.0)], SEED).unwrap());
    for i in 0..LINK_MESSAGES {
        let t = i as f64 * 0.03;
        let delivered = matches!(severed.send(t), LinkDecision::Deliver { .. });
        ensure(delivered != (100.0..200.0).contains(&t), || format!("wrong fate for send at {t}"))?;
    }

    // FIFO per channel under jitter larger than the send spacing
    let mut jitter = Link::new(LinkModel::vpn(SEED + 1));
    let mut last = f64::NEG_INFINITY;
    for i in 0..LINK_MESSAGES {
        if let LinkDecision::Deliver { at, .. } = jitter.send(i as f64 * 0.005) {
            ensure(at >= last, || format!("reordered delivery at {at}"))?;
            last = at;
        }
    }

    // and in the logged runs, including the severed inverter links
    let mut replayed = 0;
    for (name, run) in [("healthy.scn", healthy()), ("sever.scn", sever())] {
        replayed += replay_links(&spec(name), &run.as_ref()?.events)?;
    }
    Ok(format!("vpn mean {:.2} ms (3 SE = {:.2} ms), {replayed} logged deliveries replayed in order", mean * 1e3, 3e3 * se))
}

fn q_tracking() -> Check {
    let run = healthy().as_ref()?;
    let sp = spec("healthy.scn");
    let s = summarize(&run.telemetry, sp.controllers.v_lower, sp.controllers.v_upper);
    let expected_rows = (sp.duration_s() / sp.controllers.interval_s) as usize * sp.feeders.len();
    ensure(s.intervals.len() == expected_rows, || format!("{} interval rows, expected {expected_rows}", s.intervals.len()))?;
    for r in &s.intervals {
        let allowed = (TRACK_REL * r.q_req.abs()).max(TRACK_ABS_KVAR);
        ensure(r.q_error.abs() < allowed, || {
            format!("{} at {} s: |q_error| {} >= {allowed}", r.feeder, r.time_s, r.q_error.abs())
        })?;
    }
    ensure(s.violations == 0, || format!("{} band violations", s.violations))?;
    ensure(run.elapsed < TRACK_BUDGET, || format!("run took {:?}", run.elapsed))?;
    Ok(format!(
        "{} intervals, max |q_error| {:.3} kVAR, 0 violations over {} samples, {:.2?}",
        s.intervals.len(),
        s.max_abs_q_error,
        s.node_samples,
        run.elapsed
    ))
}

fn sever_window() -> Check {
    let run = sever().as_ref()?;
    let sp = spec("sever.scn");
    let c = &sp.controllers;
    let inv = sp.inverter.as_ref().ok_or("scenario has no hardware inverter")?;
    let window = sp
        .faults
        .iter()
        .find(|f| f.channel == "pv_command")
        .map(|f| (f.start_s, f.end_s))
        .ok_or("no pv_command sever window")?;
    // the distribution side falls back to zero once responses are older than the timeout
    let settled = window.0 + c.hw_timeout_s;
    let commands: Vec<(f64, f64)> = run
        .events
        .iter()
        .filter(|e| e.channel == "pv_command" && e.direction == Direction::Send)
        .map(|e| match decode_frame(e.text.as_bytes()) {
            Ok(MessageFrame::DpvCommand { q_req, .. }) => Ok((e.time, q_req * inv.s_rating)),
            other => Err(format!("bad pv_command frame {other:?}")),
        })
        .collect::<Result<_, _>>()?;
    let s = summarize(&run.telemetry, c.v_lower, c.v_upper);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for r in s.intervals.iter().filter(|r| r.feeder == inv.feeder) {
        if r.time_s - c.interval_s < settled || r.time_s > window.1 {
            continue;
        }
        let alloc = commands.iter().rev().find(|(t, _)| *t <= r.time_s).map(|c| c.1).ok_or("no command before interval")?;
        let miss = (r.q_error - alloc).abs();
        worst = worst.max(miss);
        ensure(miss < DEFICIT_TOL_KVAR, || {
            format!("at {} s deficit {} vs commanded allocation {alloc}", r.time_s, r.q_error)
        })?;
        checked += 1;
    }
    ensure(checked > 0, || "no interval lies inside the window".into())?;

    let over = run
        .telemetry
        .iter()
        .filter(|t| tdsim_core::orchestrator::node_stream_feeder(&t.stream) == Some(inv.feeder.as_str()))
        .filter(|t| t.time_s >= window.0 && t.time_s < window.1 && t.value > c.v_upper)
        .count();
    ensure(over > 0, || format!("no {} node above {}", inv.feeder, c.v_upper))?;
    for (feeder, n) in &s.violations_by_feeder {
        ensure(feeder == &inv.feeder || *n == 0, || format!("{feeder} has {n} violations"))?;
    }
    Ok(format!(
        "{checked} intervals, deficit matches allocation within {worst:.3} kVAR, {over} {} samples above {:.2}, others in band",
        inv.feeder, c.v_upper
    ))
}

/// `key=value` field of an action row.
fn field<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.split('|').find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
}

fn timeline() -> Check {
    let run = healthy().as_ref()?;
    let sp = spec("healthy.scn");
    let c = &sp.controllers;
    replay_links(&sp, &run.events)?;
    let inv = sp.inverter.as_ref().ok_or("no hardware inverter")?;
    let intervals = (sp.duration_s() / c.interval_s) as u64;
    let close = |a: f64, b: f64| (a - b).abs() < TIMELINE_TOL_S;
    let action = |name: &str, ctr: u64, extra: Option<(&str, &str)>| -> Result<&EventRow, String> {
        run.events
            .iter()
            .find(|e| {
                e.direction == Direction::Action
                    && e.text.starts_with(&format!("{name}|"))
                    && field(&e.text, "ctr") == Some(&ctr.to_string())
                    && extra.is_none_or(|(k, v)| field(&e.text, k) == Some(v))
            })
            .ok_or_else(|| format!("interval {ctr}: no {name} action"))
    };
    let wire = |channel: &str, dir: Direction, from: f64| {
        run.events.iter().find(|e| e.channel == channel && e.direction == dir && e.time >= from - TIMELINE_TOL_S)
    };

    for k in 0..intervals {
        let ctr = k + 1;
        let t0 = k as f64 * c.interval_s;
        let pull = action("measurement_pull", ctr, None)?;
        let gens = action("generator_commands", ctr, None)?;
        ensure(close(pull.time, t0) && close(gens.time, t0), || format!("interval {ctr}: pull/commands not at {t0}"))?;

        let mut last_constraints: f64 = 0.0;
        for f in &sp.feeders {
            let ch = format!("constraints.{}", f.name);
            let send = wire(&ch, Direction::Send, t0).ok_or_else(|| format!("interval {ctr}: no {ch} send"))?;
            ensure(close(send.time, t0 + c.dist_compute_delay_s), || format!("{ch} sent at {}", send.time))?;
            let recv = wire(&ch, Direction::Recv, send.time).ok_or_else(|| format!("{ch} never arrived"))?;
            last_constraints = last_constraints.max(recv.time);
        }
        let tvvc = action("transmission_vvc", ctr, None)?;
        ensure(close(tvvc.time, last_constraints + c.trans_compute_delay_s), || {
            format!("interval {ctr}: transmission_vvc at {} vs {}", tvvc.time, last_constraints + c.trans_compute_delay_s)
        })?;

        for f in &sp.feeders {
            let ch = format!("request.{}", f.name);
            let send = wire(&ch, Direction::Send, t0).ok_or_else(|| format!("interval {ctr}: no {ch} send"))?;
            ensure(close(send.time, tvvc.time), || format!("{ch} sent at {}", send.time))?;
            let recv = wire(&ch, Direction::Recv, send.time).ok_or_else(|| format!("{ch} never arrived"))?;
            let dvvc = action("distribution_vvc", ctr, Some(("feeder", &f.name)))?;
            ensure(close(dvvc.time, recv.time + c.dvvc_delay_s), || {
                format!("interval {ctr}: distribution_vvc for {} at {} vs {}", f.name, dvvc.time, recv.time + c.dvvc_delay_s)
            })?;
            if f.name != inv.feeder {
                continue;
            }
            let cmd = wire("pv_command", Direction::Send, t0).ok_or_else(|| format!("interval {ctr}: no pv_command"))?;
            ensure(close(cmd.time, dvvc.time), || format!("pv_command sent at {}", cmd.time))?;
            let Ok(F::DpvCommand { q_req, .. }) = decode_frame(cmd.text.as_bytes()) else {
                return Err(format!("bad frame {}", cmd.text));
            };
            let arrive = wire("pv_command", Direction::Recv, cmd.time).ok_or("pv_command never arrived")?;
            let ready = arrive.time + c.inverter_settle_s;
            let due = (ready / c.inverter_response_s).ceil() * c.inverter_response_s;
            let response = run
                .events
                .iter()
                .find(|e| e.channel == "pv_response" && e.direction == Direction::Send && e.time >= ready - TIMELINE_TOL_S)
                .ok_or("no inverter response after the command")?;
            ensure(close(response.time, due), || format!("response at {} vs {due}", response.time))?;
            let Ok(F::PvdResponse { q_resp, .. }) = decode_frame(response.text.as_bytes()) else {
                return Err(format!("bad frame {}", response.text));
            };
            ensure((q_resp - q_req).abs() < 1e-6, || format!("response {q_resp} does not carry command {q_req}"))?;
            let back = run
                .events
                .iter()
                .find(|e| e.channel == "pv_response" && e.direction == Direction::Recv && e.text == response.text)
                .ok_or("inverter response never arrived")?;
            ensure(back.time > dvvc.time, || "response arrived before dispatch".into())?;
        }
    }
    Ok(format!("{intervals} intervals in order, every offset within {} ms", TIMELINE_TOL_S * 1e3))
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Check); 8] = [
        ("inverter capability", inverter_capability),
        ("power-flow oracle equivalence", power_flow_oracle),
        ("VSM finite differences", vsm_check),
        ("federation determinism", determinism),
        ("link statistics", link_statistics),
        ("closed-loop tracking", q_tracking),
        ("sever window", sever_window),
        ("timeline conformance", timeline),
    ];
    let total = checks.len();
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", total - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
