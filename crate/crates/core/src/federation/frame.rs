//! Canonical text framing.
//!
//! A frame is one UTF-8 line `TYPE|name=value|...` terminated by `\n`. Fields
//! appear in a fixed order per type; real numbers carry exactly six decimal
//! places and counters are plain integers.

use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MessageFrame {
    /// Transmission to distribution, every 100 ms.
    TdBoundary { sim_time: f64, v_mag: f64, v_angle_a: f64, scenario_ctr: u64 },
    /// Transmission to distribution controller, every control interval.
    TdRequest { sim_time: f64, p_curtail_req: f64, q_req: f64, scenario_ctr: u64 },
    /// Distribution to transmission, every 100 ms. kW / kVAR.
    DtBoundary { sim_time: f64, p_total: f64, q_total: f64, scenario_ctr: u64 },
    /// Distribution controller to transmission controller. kW / kVAR.
    DtConstraints {
        sim_time: f64,
        pv_p_curtail_max: f64,
        pv_q_max: f64,
        pv_q_min: f64,
        dr_p_max: f64,
        dr_p_min: f64,
        losses: f64,
    },
    /// Distribution controller to PV inverter; p.u. of the inverter rating.
    DpvCommand { sim_time: f64, q_req: f64 },
    /// PV inverter to distribution; p.u. of the inverter rating.
    PvdResponse { exec_time: f64, q_resp: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameKind {
    TdBoundary,
    TdRequest,
    DtBoundary,
    DtConstraints,
    DpvCommand,
    PvdResponse,
}

impl FrameKind {
    pub const ALL: [FrameKind; 6] = [
        FrameKind::TdBoundary,
        FrameKind::TdRequest,
        FrameKind::DtBoundary,
        FrameKind::DtConstraints,
        FrameKind::DpvCommand,
        FrameKind::PvdResponse,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            FrameKind::TdBoundary => "TD_BOUNDARY",
            FrameKind::TdRequest => "TD_REQUEST",
            FrameKind::DtBoundary => "DT_BOUNDARY",
            FrameKind::DtConstraints => "DT_CONSTRAINTS",
            FrameKind::DpvCommand => "DPV_COMMAND",
            FrameKind::PvdResponse => "PVD_RESPONSE",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        FrameKind::ALL.into_iter().find(|k| k.tag() == tag)
    }

    /// Field names in wire order.
    pub fn fields(self) -> &'static [&'static str] {
        match self {
            FrameKind::TdBoundary => &["sim_time", "v_mag", "v_angle_a", "scenario_ctr"],
            FrameKind::TdRequest => &["sim_time", "p_curtail_req", "q_req", "scenario_ctr"],
            FrameKind::DtBoundary => &["sim_time", "p_total", "q_total", "scenario_ctr"],
            FrameKind::DtConstraints => &[
                "sim_time",
                "pv_p_curtail_max",
                "pv_q_max",
                "pv_q_min",
                "dr_p_max",
                "dr_p_min",
                "losses",
            ],
            FrameKind::DpvCommand => &["sim_time", "q_req"],
            FrameKind::PvdResponse => &["exec_time", "q_resp"],
        }
    }

    /// Nominal update period in seconds.
    pub fn cadence_s(self) -> f64 {
        match self {
            FrameKind::TdBoundary | FrameKind::DtBoundary => 0.1,
            FrameKind::TdRequest | FrameKind::DtConstraints | FrameKind::DpvCommand => 300.0,
            FrameKind::PvdResponse => 60.0,
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("frame is not valid UTF-8")]
    Utf8,
    #[error("unknown frame type `{0}`")]
    UnknownType(String),
    #[error("{kind} frame is missing field `{field}`")]
    MissingField { kind: &'static str, field: &'static str },
    #[error("{kind} frame: expected field `{expected}` at position {position}, found `{found}`")]
    FieldOrder { kind: &'static str, position: usize, expected: &'static str, found: String },
    #[error("field `{field}` has non-numeric value `{value}`")]
    NonNumeric { field: &'static str, value: String },
    #[error("{kind} frame has unexpected trailing field `{0}`", kind = .1)]
    ExtraField(String, &'static str),
    #[error("malformed frame: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy)]
enum Value {
    Real(f64),
    Count(u64),
}

impl MessageFrame {
    pub fn kind(&self) -> FrameKind {
        match self {
            MessageFrame::TdBoundary { .. } => FrameKind::TdBoundary,
            MessageFrame::TdRequest { .. } => FrameKind::TdRequest,
            MessageFrame::DtBoundary { .. } => FrameKind::DtBoundary,
            MessageFrame::DtConstraints { .. } => FrameKind::DtConstraints,
            MessageFrame::DpvCommand { .. } => FrameKind::DpvCommand,
            MessageFrame::PvdResponse { .. } => FrameKind::PvdResponse,
        }
    }

    fn values(&self) -> Vec<Value> {
        use Value::*;
        match *self {
            MessageFrame::TdBoundary { sim_time, v_mag, v_angle_a, scenario_ctr } => {
                vec![Real(sim_time), Real(v_mag), Real(v_angle_a), Count(scenario_ctr)]
            }
            MessageFrame::TdRequest { sim_time, p_curtail_req, q_req, scenario_ctr } => {
                vec![Real(sim_time), Real(p_curtail_req), Real(q_req), Count(scenario_ctr)]
            }
            MessageFrame::DtBoundary { sim_time, p_total, q_total, scenario_ctr } => {
                vec![Real(sim_time), Real(p_total), Real(q_total), Count(scenario_ctr)]
            }
            MessageFrame::DtConstraints {
                sim_time,
                pv_p_curtail_max,
                pv_q_max,
                pv_q_min,
                dr_p_max,
                dr_p_min,
                losses,
            } => vec![
                Real(sim_time),
                Real(pv_p_curtail_max),
                Real(pv_q_max),
                Real(pv_q_min),
                Real(dr_p_max),
                Real(dr_p_min),
                Real(losses),
            ],
            MessageFrame::DpvCommand { sim_time, q_req } => vec![Real(sim_time), Real(q_req)],
            MessageFrame::PvdResponse { exec_time, q_resp } => vec![Real(exec_time), Real(q_resp)],
        }
    }

    pub fn sim_time(&self) -> f64 {
        match *self {
            MessageFrame::TdBoundary { sim_time, .. }
            | MessageFrame::TdRequest { sim_time, .. }
            | MessageFrame::DtBoundary { sim_time, .. }
            | MessageFrame::DtConstraints { sim_time, .. }
            | MessageFrame::DpvCommand { sim_time, .. } => sim_time,
            MessageFrame::PvdResponse { exec_time, .. } => exec_time,
        }
    }

    /// Canonical line without the trailing newline.
    pub fn canonical(&self) -> String {
        let kind = self.kind();
        let mut out = String::from(kind.tag());
        for (name, value) in kind.fields().iter().zip(self.values()) {
            match value {
                Value::Real(x) => {
                    let x = if x == 0.0 { 0.0 } else { x };
                    let mut s = format!("{x:.6}");
                    if s == "-0.000000" {
                        s = "0.000000".into();
                    }
                    let _ = write!(out, "|{name}={s}");
                }
                Value::Count(n) => {
                    let _ = write!(out, "|{name}={n}");
                }
            }
        }
        out
    }
}

pub fn encode_frame(frame: &MessageFrame) -> Vec<u8> {
    let mut line = frame.canonical();
    line.push('\n');
    line.into_bytes()
}

pub fn decode_frame(bytes: &[u8]) -> Result<MessageFrame, FrameError> {
    let text = std::str::from_utf8(bytes).map_err(|_| FrameError::Utf8)?;
    let text = text.trim_end();
    if text.contains('\n') {
        return Err(FrameError::Malformed("more than one line".into()));
    }
    let mut parts = text.split('|');
    let tag = parts.next().unwrap_or("");
    let kind = FrameKind::from_tag(tag).ok_or_else(|| FrameError::UnknownType(tag.to_string()))?;
    let expected = kind.fields();
    let mut reals = Vec::with_capacity(expected.len());
    let mut count = 0u64;
    for (position, &name) in expected.iter().enumerate() {
        let part = parts.next().ok_or(FrameError::MissingField { kind: kind.tag(), field: name })?;
        let (found, raw) = part
            .split_once('=')
            .ok_or_else(|| FrameError::Malformed(format!("field `{part}` has no `=`")))?;
        if found != name {
            if expected.contains(&found) {
                return Err(FrameError::FieldOrder {
                    kind: kind.tag(),
                    position,
                    expected: name,
                    found: found.to_string(),
                });
            }
            return Err(FrameError::MissingField { kind: kind.tag(), field: name });
        }
        let non_numeric = || FrameError::NonNumeric { field: name, value: raw.to_string() };
        if name == "scenario_ctr" {
            count = raw.parse::<u64>().map_err(|_| non_numeric())?;
        } else {
            let x = raw.parse::<f64>().map_err(|_| non_numeric())?;
            if !x.is_finite() || raw.contains(['e', 'E']) {
                return Err(non_numeric());
            }
            reals.push(x);
        }
    }
    if let Some(extra) = parts.next() {
        return Err(FrameError::ExtraField(extra.to_string(), kind.tag()));
    }

    let r = |i: usize| reals[i];
    Ok(match kind {
        FrameKind::TdBoundary => MessageFrame::TdBoundary {
            sim_time: r(0),
            v_mag: r(1),
            v_angle_a: r(2),
            scenario_ctr: count,
        },
        FrameKind::TdRequest => MessageFrame::TdRequest {
            sim_time: r(0),
            p_curtail_req: r(1),
            q_req: r(2),
            scenario_ctr: count,
        },
        FrameKind::DtBoundary => MessageFrame::DtBoundary {
            sim_time: r(0),
            p_total: r(1),
            q_total: r(2),
            scenario_ctr: count,
        },
        FrameKind::DtConstraints => MessageFrame::DtConstraints {
            sim_time: r(0),
            pv_p_curtail_max: r(1),
            pv_q_max: r(2),
            pv_q_min: r(3),
            dr_p_max: r(4),
            dr_p_min: r(5),
            losses: r(6),
        },
        FrameKind::DpvCommand => MessageFrame::DpvCommand { sim_time: r(0), q_req: r(1) },
        FrameKind::PvdResponse => MessageFrame::PvdResponse { exec_time: r(0), q_resp: r(1) },
    })
}
