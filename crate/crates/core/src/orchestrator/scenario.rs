//! Scenario documents.
//!
//! Same lexical rules as network files. Paths are relative to the scenario
//! file. Times in `[faults]` are hours.
//!
//! ```text
//! [run]
//! duration_h, 2
//! seed, 42
//! mode, sim                      # sim | realtime
//! boundary_period_s, 0.1
//! telemetry_period_s, 60
//! speedup, 600                   # realtime only
//!
//! [federates]
//! transmission, trans.grid, b5                       # grid file, boundary bus
//! feeder, f1, feeder1.grid, load_f1                  # name, grid file, head-load profile
//! inverter, hw1, f1, n11, a, 250, solar_hw           # id, feeder, bus, phase, kVA, irradiance profile
//!
//! [links]
//! constraints, vpn                                   # preset
//! pv_command, uniform, 30, 90                        # fixed x | uniform lo hi | normal mean sd
//! pv_response, fileshare, drop=0.0, addr=127.0.0.1:7101
//!
//! [controllers]
//! dist_compute_delay_s, 10
//! dr, f1, -50, 50
//!
//! [faults]
//! sever, pv_command, 1.5, 2.5
//!
//! [profiles]
//! load_f1, profiles/load_f1.csv
//! ```

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use crate::controllers::DrCapacity;
use crate::federation::{ClockMode, Latency, LinkModel, CONTROL_INTERVAL_S};
use crate::grid::sections::{lex, parse_decimal, Record};
use crate::grid::{parse_grid_file, GridError, GridModel, ParseMode, Phase, Profile};

const SECTIONS: &[&str] = &["run", "federates", "links", "controllers", "faults", "profiles"];

/// Channel classes; the first four exist once per feeder.
pub const CHANNEL_CLASSES: &[&str] =
    &["boundary_down", "boundary_up", "constraints", "request", "pv_command", "pv_response"];

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Grid { path: PathBuf, source: GridError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ScenarioError {
    fn at(r: &Record, msg: impl Into<String>) -> Self {
        ScenarioError::Syntax { line: r.line, msg: msg.into() }
    }
}

impl From<GridError> for ScenarioError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::Syntax { line, msg } => ScenarioError::Syntax { line, msg },
            other => ScenarioError::Invalid(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub duration_h: f64,
    pub seed: u64,
    pub mode: ClockMode,
    pub boundary_period_s: f64,
    pub telemetry_period_s: f64,
    pub speedup: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            duration_h: 1.0,
            seed: 0,
            mode: ClockMode::Simulated,
            boundary_period_s: 0.1,
            telemetry_period_s: 60.0,
            speedup: 600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeederSpec {
    pub name: String,
    pub grid_path: PathBuf,
    pub model: GridModel,
    /// Feeder-head active load, kW.
    pub load_profile: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverterSpec {
    pub id: String,
    pub feeder: String,
    pub bus: String,
    pub phase: Phase,
    pub s_rating: f64,
    /// Available power as a fraction of the rating.
    pub profile: String,
}

/// Latency configuration of one channel class or channel, before seeding.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub latency: Latency,
    pub drop_prob: f64,
    pub addr: Option<SocketAddr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSettings {
    pub interval_s: f64,
    pub dist_compute_delay_s: f64,
    pub trans_compute_delay_s: f64,
    pub dvvc_delay_s: f64,
    pub request_deadline_s: f64,
    pub constraints_deadline_s: f64,
    pub hold_intervals: u64,
    pub v_target: f64,
    pub v_lower: f64,
    pub v_upper: f64,
    pub gen_step: f64,
    pub probe_kva: f64,
    pub vsm_delta: f64,
    pub k: f64,
    pub inverter_settle_s: f64,
    pub inverter_response_s: f64,
    /// Age after which the simulator stops trusting the last inverter response.
    pub hw_timeout_s: f64,
    pub dr: BTreeMap<String, DrCapacity>,
}

impl Default for ControllerSettings {
    fn default() -> Self {
        ControllerSettings {
            interval_s: 300.0,
            dist_compute_delay_s: 10.0,
            trans_compute_delay_s: 10.0,
            dvvc_delay_s: 0.0,
            request_deadline_s: 120.0,
            constraints_deadline_s: 60.0,
            hold_intervals: 2,
            v_target: 1.0,
            v_lower: 0.95,
            v_upper: 1.05,
            gen_step: 0.005,
            probe_kva: 100.0,
            vsm_delta: crate::powerflow::DEFAULT_VSM_DELTA,
            k: crate::inverter::DEFAULT_K,
            inverter_settle_s: 30.0,
            inverter_response_s: 60.0,
            hw_timeout_s: 180.0,
            dr: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeverWindow {
    /// A channel class (`pv_command`) or one feeder's channel (`request.f1`).
    pub channel: String,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub path: PathBuf,
    pub run: RunSettings,
    pub transmission: GridModel,
    pub transmission_path: PathBuf,
    pub boundary_bus: String,
    pub feeders: Vec<FeederSpec>,
    pub inverter: Option<InverterSpec>,
    /// Keyed by channel class or `class.feeder`.
    pub links: BTreeMap<String, LinkSpec>,
    pub controllers: ControllerSettings,
    pub faults: Vec<SeverWindow>,
    pub profiles: BTreeMap<String, Profile>,
}

impl ScenarioSpec {
    pub fn duration_s(&self) -> f64 {
        self.run.duration_h * 3600.0
    }

    pub fn feeder_index(&self, name: &str) -> Option<usize> {
        self.feeders.iter().position(|f| f.name == name)
    }

    /// Link model of a concrete channel such as `request.f2` or `pv_command`.
    pub fn link_for(&self, channel: &str, seed: u64) -> LinkModel {
        let class = channel.split('.').next().unwrap_or(channel);
        let spec = self.links.get(channel).or_else(|| self.links.get(class)).cloned().unwrap_or(LinkSpec {
            latency: default_latency(class),
            drop_prob: 0.0,
            addr: None,
        });
        let windows = self
            .faults
            .iter()
            .filter(|w| w.channel == channel || w.channel == class)
            .map(|w| (w.start_s, w.end_s))
            .collect();
        LinkModel::new(spec.latency, spec.drop_prob, windows, link_seed(seed, channel)).expect("validated at parse")
    }

    pub fn link_addr(&self, channel: &str) -> Option<SocketAddr> {
        self.links.get(channel).and_then(|l| l.addr)
    }
}

fn default_latency(class: &str) -> Latency {
    match class {
        "pv_command" | "pv_response" => LinkModel::fileshare(0).latency,
        _ => LinkModel::vpn(0).latency,
    }
}

/// Seed of a channel's random stream: the scenario seed mixed with a stable
/// hash of the channel name.
pub fn link_seed(seed: u64, channel: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in channel.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    // splitmix64 finalizer
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })
}

fn num(r: &Record, i: usize) -> Result<f64, ScenarioError> {
    Ok(parse_decimal(r.field(i)?, r.line)?)
}

fn positive(r: &Record, i: usize, what: &str) -> Result<f64, ScenarioError> {
    let x = num(r, i)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(ScenarioError::at(r, format!("{what} must be positive")))
    }
}

fn non_negative(r: &Record, i: usize, what: &str) -> Result<f64, ScenarioError> {
    let x = num(r, i)?;
    if x >= 0.0 {
        Ok(x)
    } else {
        Err(ScenarioError::at(r, format!("{what} must not be negative")))
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioSpec, ScenarioError> {
    let text = read(path)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_scenario(&text, &dir, path)
}

/// Parses a scenario and loads every file it references.
pub fn parse_scenario(text: &str, dir: &Path, path: &Path) -> Result<ScenarioSpec, ScenarioError> {
    let sections = lex(text, SECTIONS)?;
    let records = |name: &str| -> &[Record] {
        sections.iter().find(|s| s.name == name).map(|s| s.records.as_slice()).unwrap_or(&[])
    };

    let mut run = RunSettings::default();
    for r in records("run") {
        r.expect_len(&[2])?;
        match r.field(0)? {
            "duration_h" => run.duration_h = non_negative(r, 1, "duration")?,
            "seed" => {
                run.seed = r.field(1)?.parse().map_err(|_| ScenarioError::at(r, "seed must be an unsigned integer"))?
            }
            "mode" => run.mode = r.field(1)?.parse().map_err(|e: String| ScenarioError::at(r, e))?,
            "boundary_period_s" => run.boundary_period_s = positive(r, 1, "boundary period")?,
            "telemetry_period_s" => run.telemetry_period_s = positive(r, 1, "telemetry period")?,
            "speedup" => run.speedup = positive(r, 1, "speedup")?,
            other => return Err(ScenarioError::at(r, format!("unknown run key `{other}`"))),
        }
    }

    let mut profiles = BTreeMap::new();
    for r in records("profiles") {
        r.expect_len(&[2])?;
        let id = r.field(0)?.to_string();
        let p = dir.join(r.field(1)?);
        let profile =
            Profile::from_csv(&read(&p)?).map_err(|source| ScenarioError::Grid { path: p.clone(), source })?;
        if profiles.insert(id.clone(), profile).is_some() {
            return Err(ScenarioError::at(r, format!("profile `{id}` defined twice")));
        }
    }
    let need_profile = |r: &Record, id: &str| -> Result<(), ScenarioError> {
        if profiles.contains_key(id) {
            Ok(())
        } else {
            Err(ScenarioError::at(r, format!("unknown profile `{id}`")))
        }
    };

    let mut transmission = None;
    let mut feeders: Vec<FeederSpec> = Vec::new();
    let mut inverter = None;
    for r in records("federates") {
        match r.field(0)? {
            "transmission" => {
                r.expect_len(&[3])?;
                if transmission.is_some() {
                    return Err(ScenarioError::at(r, "only one transmission federate is supported"));
                }
                let p = dir.join(r.field(1)?);
                let model = parse_grid_file(&read(&p)?, ParseMode::Meshed)
                    .map_err(|source| ScenarioError::Grid { path: p.clone(), source })?;
                let bus = r.field(2)?.to_string();
                if model.bus_index(&bus).is_none() {
                    return Err(ScenarioError::at(r, format!("boundary bus `{bus}` not in {}", p.display())));
                }
                transmission = Some((model, p, bus));
            }
            "feeder" => {
                r.expect_len(&[4])?;
                let name = r.field(1)?.to_string();
                if name.contains(['.', '|', '=']) {
                    return Err(ScenarioError::at(r, "feeder names may not contain `.`, `|` or `=`"));
                }
                if feeders.iter().any(|f| f.name == name) {
                    return Err(ScenarioError::at(r, format!("feeder `{name}` defined twice")));
                }
                let p = dir.join(r.field(2)?);
                let model = parse_grid_file(&read(&p)?, ParseMode::Radial)
                    .map_err(|source| ScenarioError::Grid { path: p.clone(), source })?;
                let load_profile = r.field(3)?.to_string();
                need_profile(r, &load_profile)?;
                if model.loads.iter().map(|l| l.rated_p).sum::<f64>() <= 0.0 {
                    return Err(ScenarioError::at(r, format!("feeder `{name}` has no rated load to scale")));
                }
                for s in &model.solar {
                    if !profiles.contains_key(&s.profile_id) {
                        return Err(ScenarioError::at(
                            r,
                            format!("solar farm `{}` uses unknown profile `{}`", s.id, s.profile_id),
                        ));
                    }
                }
                feeders.push(FeederSpec { name, grid_path: p, model, load_profile });
            }
            "inverter" => {
                r.expect_len(&[7])?;
                if inverter.is_some() {
                    return Err(ScenarioError::at(r, "only one hardware inverter is supported"));
                }
                let phase = {
                    let f = r.field(4)?;
                    let mut cs = f.chars();
                    match (cs.next().and_then(Phase::from_char), cs.next()) {
                        (Some(p), None) => p,
                        _ => return Err(ScenarioError::at(r, format!("bad phase `{f}`"))),
                    }
                };
                let profile = r.field(6)?.to_string();
                need_profile(r, &profile)?;
                inverter = Some(InverterSpec {
                    id: r.field(1)?.to_string(),
                    feeder: r.field(2)?.to_string(),
                    bus: r.field(3)?.to_string(),
                    phase,
                    s_rating: positive(r, 5, "inverter rating")?,
                    profile,
                });
            }
            other => return Err(ScenarioError::at(r, format!("unknown federate kind `{other}`"))),
        }
    }
    let (transmission, transmission_path, boundary_bus) =
        transmission.ok_or_else(|| ScenarioError::Invalid("no transmission federate".into()))?;
    if feeders.is_empty() {
        return Err(ScenarioError::Invalid("no feeder federates".into()));
    }
    if let Some(inv) = &inverter {
        let f = feeders
            .iter()
            .find(|f| f.name == inv.feeder)
            .ok_or_else(|| ScenarioError::Invalid(format!("inverter on unknown feeder `{}`", inv.feeder)))?;
        let bus = f
            .model
            .bus_index(&inv.bus)
            .ok_or_else(|| ScenarioError::Invalid(format!("inverter bus `{}` not on feeder `{}`", inv.bus, f.name)))?;
        if !f.model.buses[bus].phases.contains(inv.phase) {
            return Err(ScenarioError::Invalid(format!("bus `{}` has no phase {:?}", inv.bus, inv.phase)));
        }
        if f.model.solar.iter().any(|s| s.id == inv.id) {
            return Err(ScenarioError::Invalid(format!("inverter id `{}` clashes with a solar farm", inv.id)));
        }
    }

    let known_channel = |name: &str| -> bool {
        match name.split_once('.') {
            None => CHANNEL_CLASSES.contains(&name),
            Some((class, feeder)) => {
                CHANNEL_CLASSES[..4].contains(&class) && feeders.iter().any(|f| f.name == feeder)
            }
        }
    };

    let mut links = BTreeMap::new();
    for r in records("links") {
        let name = r.field(0)?.to_string();
        if !known_channel(&name) {
            return Err(ScenarioError::at(r, format!("unknown channel `{name}`")));
        }
        let mut pos = 2;
        let latency = match r.field(1)? {
            "vpn" | "fileshare" | "ideal" => LinkModel::preset(r.field(1)?, 0).expect("preset").latency,
            "fixed" => {
                pos = 3;
                Latency::Fixed(non_negative(r, 2, "latency")?)
            }
            "uniform" => {
                pos = 4;
                Latency::Uniform { lo: num(r, 2)?, hi: num(r, 3)? }
            }
            "normal" => {
                pos = 4;
                Latency::Normal { mean: num(r, 2)?, sd: num(r, 3)? }
            }
            other => return Err(ScenarioError::at(r, format!("unknown latency kind `{other}`"))),
        };
        let mut spec = LinkSpec { latency, drop_prob: 0.0, addr: None };
        for extra in r.fields.iter().skip(pos) {
            match extra.split_once('=') {
                Some(("drop", v)) => spec.drop_prob = parse_decimal(v, r.line)?,
                Some(("addr", v)) => {
                    spec.addr = Some(v.parse().map_err(|_| ScenarioError::at(r, format!("bad address `{v}`")))?)
                }
                _ => return Err(ScenarioError::at(r, format!("unexpected link field `{extra}`"))),
            }
        }
        LinkModel::new(spec.latency, spec.drop_prob, vec![], 0).map_err(|e| ScenarioError::at(r, e.to_string()))?;
        if links.insert(name.clone(), spec).is_some() {
            return Err(ScenarioError::at(r, format!("link `{name}` configured twice")));
        }
    }

    let mut c = ControllerSettings::default();
    for r in records("controllers") {
        let key = r.field(0)?;
        if key == "dr" {
            r.expect_len(&[4])?;
            let feeder = r.field(1)?.to_string();
            if !feeders.iter().any(|f| f.name == feeder) {
                return Err(ScenarioError::at(r, format!("dr for unknown feeder `{feeder}`")));
            }
            let cap = DrCapacity { p_min: num(r, 2)?, p_max: num(r, 3)? };
            if cap.p_min > cap.p_max {
                return Err(ScenarioError::at(r, "dr lower limit above upper limit"));
            }
            c.dr.insert(feeder, cap);
            continue;
        }
        r.expect_len(&[2])?;
        match key {
            "interval_s" => c.interval_s = positive(r, 1, key)?,
            "dist_compute_delay_s" => c.dist_compute_delay_s = non_negative(r, 1, key)?,
            "trans_compute_delay_s" => c.trans_compute_delay_s = non_negative(r, 1, key)?,
            "dvvc_delay_s" => c.dvvc_delay_s = non_negative(r, 1, key)?,
            "request_deadline_s" => c.request_deadline_s = non_negative(r, 1, key)?,
            "constraints_deadline_s" => c.constraints_deadline_s = non_negative(r, 1, key)?,
            "hold_intervals" => {
                c.hold_intervals = r.field(1)?.parse().map_err(|_| ScenarioError::at(r, "expected an integer"))?
            }
            "v_target" => c.v_target = positive(r, 1, key)?,
            "v_lower" => c.v_lower = positive(r, 1, key)?,
            "v_upper" => c.v_upper = positive(r, 1, key)?,
            "gen_step" => c.gen_step = non_negative(r, 1, key)?,
            "probe_kva" => c.probe_kva = positive(r, 1, key)?,
            "vsm_delta" => c.vsm_delta = positive(r, 1, key)?,
            "k" => c.k = positive(r, 1, key)?,
            "inverter_settle_s" => c.inverter_settle_s = non_negative(r, 1, key)?,
            "inverter_response_s" => c.inverter_response_s = positive(r, 1, key)?,
            "hw_timeout_s" => c.hw_timeout_s = positive(r, 1, key)?,
            "tie_break" => {
                if r.field(1)? != "id" {
                    return Err(ScenarioError::at(r, "only `id` tie-breaking is supported"));
                }
            }
            other => return Err(ScenarioError::at(r, format!("unknown controller key `{other}`"))),
        }
    }
    if c.interval_s != CONTROL_INTERVAL_S {
        return Err(ScenarioError::Invalid(format!("control interval is fixed at {CONTROL_INTERVAL_S} s")));
    }
    if c.v_lower >= c.v_upper {
        return Err(ScenarioError::Invalid("v_lower must be below v_upper".into()));
    }
    if c.k < 1.0 {
        return Err(ScenarioError::Invalid("k must be at least 1".into()));
    }
    if c.inverter_settle_s > c.inverter_response_s {
        return Err(ScenarioError::Invalid("inverter must settle within one response period".into()));
    }

    let duration_s = run.duration_h * 3600.0;
    let mut faults = Vec::new();
    for r in records("faults") {
        r.expect_len(&[4])?;
        if r.field(0)? != "sever" {
            return Err(ScenarioError::at(r, format!("unknown fault kind `{}`", r.field(0)?)));
        }
        let channel = r.field(1)?.to_string();
        if !known_channel(&channel) {
            return Err(ScenarioError::at(r, format!("unknown channel `{channel}`")));
        }
        let (start_s, end_s) = (num(r, 2)? * 3600.0, num(r, 3)? * 3600.0);
        if !(start_s >= 0.0 && start_s < end_s && end_s <= duration_s) {
            return Err(ScenarioError::at(r, "fault window must lie within the run duration"));
        }
        faults.push(SeverWindow { channel, start_s, end_s });
    }

    Ok(ScenarioSpec {
        path: path.to_path_buf(),
        run,
        transmission,
        transmission_path,
        boundary_bus,
        feeders,
        inverter,
        links,
        controllers: c,
        faults,
        profiles,
    })
}
