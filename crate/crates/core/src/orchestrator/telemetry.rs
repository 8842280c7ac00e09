//! Run outputs: telemetry samples, the event log and the summary.
//!
//! Values are rounded to the printed precision as they are recorded, so a
//! summary computed in memory equals one recomputed from `telemetry.csv`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use crate::federation::{Direction, EventRow, Recorder};

pub const TELEMETRY_HEADER: [&str; 4] = ["time_s", "stream", "value", "unit"];
pub const EVENTS_HEADER: [&str; 4] = ["time_s", "channel", "direction", "frame"];

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRecord {
    pub time_s: f64,
    pub stream: String,
    pub value: f64,
    pub unit: String,
}

fn fixed(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

fn rounded(x: f64) -> f64 {
    fixed(x).parse().unwrap_or(x)
}

/// In-memory recorder for a whole run.
#[derive(Debug, Default, Clone)]
pub struct RunLog {
    pub events: Vec<EventRow>,
    pub telemetry: Vec<TelemetryRecord>,
}

impl Recorder for RunLog {
    fn event(&mut self, row: EventRow) {
        self.events.push(row);
    }

    fn telemetry(&mut self, time: f64, stream: &str, value: f64, unit: &'static str) {
        self.telemetry.push(TelemetryRecord {
            time_s: rounded(time),
            stream: stream.to_string(),
            value: rounded(value),
            unit: unit.to_string(),
        });
    }
}

impl RunLog {
    /// Orders rows by time, keeping arrival order among equal times. A no-op
    /// for simulated runs; realtime runs interleave rows from several threads.
    pub fn sort_by_time(&mut self) {
        self.events.sort_by(|a, b| a.time.total_cmp(&b.time));
        self.telemetry.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
    }
}

pub fn write_telemetry_csv<W: Write>(out: W, records: &[TelemetryRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TELEMETRY_HEADER)?;
    for r in records {
        w.write_record([fixed(r.time_s).as_str(), &r.stream, &fixed(r.value), &r.unit])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_events_csv<W: Write>(out: W, events: &[EventRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EVENTS_HEADER)?;
    for e in events {
        w.write_record([fixed(e.time).as_str(), &e.channel, e.direction.as_str(), &e.text])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
}

pub fn read_telemetry_csv<R: Read>(input: R) -> Result<Vec<TelemetryRecord>, ReadError> {
    let mut rd = csv::Reader::from_reader(input);
    if rd.headers()?.iter().ne(TELEMETRY_HEADER) {
        return Err(ReadError::Row { row: 0, msg: "unexpected header".into() });
    }
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64, ReadError> {
            rec.get(k)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| ReadError::Row { row: i + 1, msg: format!("bad number in column {k}") })
        };
        out.push(TelemetryRecord {
            time_s: num(0)?,
            stream: rec.get(1).unwrap_or_default().to_string(),
            value: num(2)?,
            unit: rec.get(3).unwrap_or_default().to_string(),
        });
    }
    Ok(out)
}

pub fn read_events_csv<R: Read>(input: R) -> Result<Vec<EventRow>, ReadError> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = |msg: &str| ReadError::Row { row: i + 1, msg: msg.into() };
        let direction = match rec.get(2) {
            Some("send") => Direction::Send,
            Some("recv") => Direction::Recv,
            Some("drop") => Direction::Drop,
            Some("action") => Direction::Action,
            _ => return Err(bad("bad direction")),
        };
        out.push(EventRow {
            time: rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad time"))?,
            channel: rec.get(1).unwrap_or_default().to_string(),
            direction,
            text: rec.get(3).unwrap_or_default().to_string(),
        });
    }
    Ok(out)
}

/// Requested against delivered reactive power for one feeder, evaluated at
/// the measurement that closes the interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRow {
    pub time_s: f64,
    pub feeder: String,
    pub q_req: f64,
    pub q_delivered: f64,
    pub q_error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub v_lower: f64,
    pub v_upper: f64,
    /// Highest node voltage and its stream.
    pub v_max: Option<(f64, String)>,
    pub v_min: Option<(f64, String)>,
    pub node_samples: usize,
    pub violations: usize,
    pub violations_by_feeder: BTreeMap<String, usize>,
    pub max_abs_q_error: f64,
    pub intervals: Vec<IntervalRow>,
}

/// Feeder name of a node-voltage stream (`f1.node.n3.a.v_mag`).
pub fn node_stream_feeder(stream: &str) -> Option<&str> {
    let (feeder, rest) = stream.split_once(".node.")?;
    rest.ends_with(".v_mag").then_some(feeder)
}

/// Pure reduction of telemetry against a voltage band.
pub fn summarize(records: &[TelemetryRecord], v_lower: f64, v_upper: f64) -> Summary {
    let mut s = Summary { v_lower, v_upper, ..Default::default() };
    let mut rows: BTreeMap<(u64, String), IntervalRow> = BTreeMap::new();
    for r in records {
        if let Some(feeder) = node_stream_feeder(&r.stream) {
            s.node_samples += 1;
            if s.v_max.as_ref().is_none_or(|m| r.value > m.0) {
                s.v_max = Some((r.value, r.stream.clone()));
            }
            if s.v_min.as_ref().is_none_or(|m| r.value < m.0) {
                s.v_min = Some((r.value, r.stream.clone()));
            }
            let count = s.violations_by_feeder.entry(feeder.to_string()).or_default();
            if r.value > v_upper || r.value < v_lower {
                *count += 1;
                s.violations += 1;
            }
            continue;
        }
        let Some((feeder, field)) = r.stream.split_once('.') else { continue };
        if !matches!(field, "q_req" | "q_delivered" | "q_error") {
            continue;
        }
        let row = rows.entry((r.time_s.to_bits(), feeder.to_string())).or_insert_with(|| IntervalRow {
            time_s: r.time_s,
            feeder: feeder.to_string(),
            q_req: 0.0,
            q_delivered: 0.0,
            q_error: 0.0,
        });
        match field {
            "q_req" => row.q_req = r.value,
            "q_delivered" => row.q_delivered = r.value,
            _ => {
                row.q_error = r.value;
                s.max_abs_q_error = s.max_abs_q_error.max(r.value.abs());
            }
        }
    }
    s.intervals = rows.into_values().collect();
    s.intervals.sort_by(|a, b| a.time_s.total_cmp(&b.time_s).then_with(|| a.feeder.cmp(&b.feeder)));
    s
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "voltage band: [{:.4}, {:.4}] pu", self.v_lower, self.v_upper)?;
        match (&self.v_max, &self.v_min) {
            (Some(max), Some(min)) => {
                writeln!(f, "max node voltage: {} pu ({})", fixed(max.0), max.1)?;
                writeln!(f, "min node voltage: {} pu ({})", fixed(min.0), min.1)?;
            }
            _ => writeln!(f, "max node voltage: n/a\nmin node voltage: n/a")?,
        }
        writeln!(f, "node voltage samples: {}", self.node_samples)?;
        writeln!(f, "band violations: {}", self.violations)?;
        for (feeder, n) in &self.violations_by_feeder {
            writeln!(f, "  {feeder}: {n}")?;
        }
        writeln!(f, "max |q_error|: {} kVAR", fixed(self.max_abs_q_error))?;
        writeln!(f, "intervals:")?;
        writeln!(f, "  time_s,feeder,q_req_kvar,q_delivered_kvar,q_error_kvar")?;
        for r in &self.intervals {
            writeln!(
                f,
                "  {},{},{},{},{}",
                fixed(r.time_s),
                r.feeder,
                fixed(r.q_req),
                fixed(r.q_delivered),
                fixed(r.q_error)
            )?;
        }
        Ok(())
    }
}
