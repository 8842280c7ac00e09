//! Network file reader and writer.
//!
//! ```text
//! [system]
//! base_mva, 1.0
//! [buses]
//! # id, phases, base_kv, kind(slack|pq|pv)
//! [branches]
//! # from, to, r, x                       uniform self impedance on shared phases
//! # from, to, r11, x11, r21, x21, ...    lower triangle over shared phases
//! [loads]
//! # bus, phases, kind(P|I|Z), p_kw, q_kvar
//! [shunts]
//! # id, bus, phases, kvar_per_block, blocks, blocks_on
//! [generators]
//! # bus, p_mw (or - on the slack bus), v_set_pu, q_min_mvar, q_max_mvar
//! [solar]
//! # id, bus, s_kva, profile_id
//! ```

use std::fmt::Write as _;

use num_complex::Complex64;

use super::sections::{lex, Record};
use super::{
    Branch, Bus, BusKind, Generator, GridError, GridModel, PhaseSet, Shunt, SolarFarm, ZMatrix,
    ZipKind, ZipLoad, DEFAULT_FEEDER_BASE_MVA,
};

const SECTIONS: &[&str] = &["system", "buses", "branches", "loads", "shunts", "generators", "solar"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    /// Distribution feeder: must be radial from the slack bus.
    Radial,
    /// Transmission network: any topology.
    Meshed,
}

pub fn parse_grid_file(text: &str, mode: ParseMode) -> Result<GridModel, GridError> {
    let sections = lex(text, SECTIONS)?;
    let records = |name: &str| -> &[Record] {
        sections.iter().find(|s| s.name == name).map(|s| s.records.as_slice()).unwrap_or(&[])
    };

    let mut base_mva = DEFAULT_FEEDER_BASE_MVA;
    for r in records("system") {
        r.expect_len(&[2])?;
        match r.field(0)? {
            "base_mva" => {
                base_mva = r.number(1)?;
                if base_mva <= 0.0 {
                    return Err(invalid(r, "base_mva must be positive"));
                }
            }
            other => return Err(invalid(r, format!("unknown system key `{other}`"))),
        }
    }

    let mut buses: Vec<Bus> = Vec::new();
    let mut slack_seen = false;
    for r in records("buses") {
        r.expect_len(&[4])?;
        let id = r.field(0)?.to_string();
        if buses.iter().any(|b| b.id == id) {
            return Err(GridError::Duplicate { line: r.line, id });
        }
        let phases = PhaseSet::parse(r.field(1)?)
            .ok_or_else(|| invalid(r, format!("bad phase set `{}`", r.fields[1])))?;
        let base_kv = r.number(2)?;
        if base_kv <= 0.0 {
            return Err(invalid(r, "base_kv must be positive"));
        }
        let kind = match r.field(3)?.to_ascii_lowercase().as_str() {
            "slack" => BusKind::Slack,
            "pq" => BusKind::Pq,
            "pv" => BusKind::Pv,
            other => return Err(invalid(r, format!("unknown bus kind `{other}`"))),
        };
        if kind == BusKind::Slack {
            if slack_seen {
                return Err(GridError::MultipleSlack { line: r.line, bus: id });
            }
            slack_seen = true;
        }
        buses.push(Bus { id, phases, base_kv, kind });
    }
    if !slack_seen {
        return Err(GridError::NoSlack);
    }
    let bus_ref = |r: &Record, i: usize| -> Result<&Bus, GridError> {
        let id = r.field(i)?;
        buses
            .iter()
            .find(|b| b.id == id)
            .ok_or_else(|| GridError::DanglingBus { line: r.line, bus: id.to_string() })
    };

    let mut branches = Vec::new();
    for r in records("branches") {
        let from = bus_ref(r, 0)?;
        let to = bus_ref(r, 1)?;
        if from.id == to.id {
            return Err(invalid(r, "branch connects a bus to itself"));
        }
        let shared = from
            .phases
            .intersect(to.phases)
            .ok_or_else(|| invalid(r, "branch endpoints share no phase"))?;
        let nums = (2..r.fields.len()).map(|i| r.number(i)).collect::<Result<Vec<_>, _>>()?;
        if nums.len() % 2 != 0 {
            return Err(invalid(r, "impedance entries must come in r,x pairs"));
        }
        let zs = nums.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect::<Vec<_>>();
        let dim = shared.len();
        let z = if zs.len() == 1 {
            ZMatrix::uniform(shared, zs[0])
        } else {
            ZMatrix::from_lower(shared, &zs).ok_or_else(|| {
                invalid(
                    r,
                    format!(
                        "{} impedance entries do not match {} shared phases (need 1 or {})",
                        zs.len(),
                        dim,
                        dim * (dim + 1) / 2
                    ),
                )
            })?
        };
        if (0..dim).any(|i| z.get(i, i) == Complex64::new(0.0, 0.0)) {
            return Err(invalid(r, "zero diagonal impedance"));
        }
        branches.push(Branch { from_bus: from.id.clone(), to_bus: to.id.clone(), z });
    }

    let mut loads = Vec::new();
    for r in records("loads") {
        r.expect_len(&[5])?;
        let bus = bus_ref(r, 0)?;
        let phases = PhaseSet::parse(r.field(1)?)
            .ok_or_else(|| invalid(r, format!("bad phase set `{}`", r.fields[1])))?;
        if !phases.is_subset_of(bus.phases) {
            return Err(invalid(r, format!("load phases {phases} not present on bus {}", bus.id)));
        }
        let kind = ZipKind::parse(r.field(2)?)
            .ok_or_else(|| invalid(r, format!("unknown load kind `{}`", r.fields[2])))?;
        let rated_p = r.number(3)?;
        if rated_p < 0.0 {
            return Err(invalid(r, "rated_p must be non-negative"));
        }
        loads.push(ZipLoad { bus: bus.id.clone(), phases, kind, rated_p, rated_q: r.number(4)? });
    }

    let mut shunts: Vec<Shunt> = Vec::new();
    for r in records("shunts") {
        r.expect_len(&[6])?;
        let id = r.field(0)?.to_string();
        if shunts.iter().any(|s| s.id == id) {
            return Err(GridError::Duplicate { line: r.line, id });
        }
        let bus = bus_ref(r, 1)?;
        let phases = PhaseSet::parse(r.field(2)?)
            .ok_or_else(|| invalid(r, format!("bad phase set `{}`", r.fields[2])))?;
        if !phases.is_subset_of(bus.phases) {
            return Err(invalid(r, "shunt phases not present on bus"));
        }
        let block_kvar = r.number(3)?;
        let blocks = count(r, 4)?;
        let blocks_on = count(r, 5)?;
        if block_kvar <= 0.0 || blocks_on > blocks {
            return Err(invalid(r, "need kvar_per_block > 0 and blocks_on <= blocks"));
        }
        shunts.push(Shunt { id, bus: bus.id.clone(), phases, block_kvar, blocks, blocks_on });
    }

    let mut generators = Vec::new();
    for r in records("generators") {
        r.expect_len(&[5])?;
        let bus = bus_ref(r, 0)?;
        let p_set = match r.field(1)? {
            "-" => None,
            _ => Some(r.number(1)?),
        };
        match (bus.kind, p_set) {
            (BusKind::Slack, Some(_)) => {
                return Err(invalid(r, "slack generator takes `-` for p_mw"));
            }
            (BusKind::Pv, None) => return Err(invalid(r, "pv generator needs p_mw")),
            (BusKind::Pq, _) => {
                return Err(invalid(r, format!("generator on pq bus {}", bus.id)));
            }
            _ => {}
        }
        let v_set = r.number(2)?;
        let (q_min, q_max) = (r.number(3)?, r.number(4)?);
        if v_set <= 0.0 || q_min > q_max {
            return Err(invalid(r, "need v_set > 0 and q_min <= q_max"));
        }
        generators.push(Generator { bus: bus.id.clone(), p_set, v_set, q_min, q_max });
    }
    for b in buses.iter().filter(|b| b.kind == BusKind::Pv) {
        if !generators.iter().any(|g| g.bus == b.id) {
            return Err(GridError::Invalid { line: 0, msg: format!("pv bus {} has no generator", b.id) });
        }
    }

    let mut solar: Vec<SolarFarm> = Vec::new();
    for r in records("solar") {
        r.expect_len(&[4])?;
        let id = r.field(0)?.to_string();
        if solar.iter().any(|s| s.id == id) {
            return Err(GridError::Duplicate { line: r.line, id });
        }
        let bus = bus_ref(r, 1)?;
        if bus.phases != PhaseSet::ABC {
            return Err(invalid(r, format!("solar farm on non-three-phase bus {}", bus.id)));
        }
        let s_rating = r.number(2)?;
        if s_rating <= 0.0 {
            return Err(invalid(r, "s_kva must be positive"));
        }
        solar.push(SolarFarm {
            id,
            bus: bus.id.clone(),
            s_rating,
            profile_id: r.field(3)?.to_string(),
        });
    }

    let model = GridModel { base_mva, buses, branches, loads, shunts, generators, solar };
    if mode == ParseMode::Radial {
        model.check_radial()?;
    }
    Ok(model)
}

/// Writes a model in the canonical text form accepted by [`parse_grid_file`].
pub fn serialize_grid(model: &GridModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[system]\nbase_mva, {}", model.base_mva);
    let _ = writeln!(out, "[buses]");
    for b in &model.buses {
        let _ = writeln!(out, "{}, {}, {}, {}", b.id, b.phases, b.base_kv, b.kind.as_str());
    }
    let _ = writeln!(out, "[branches]");
    for br in &model.branches {
        let zs = if br.z.is_uniform_diagonal() { vec![br.z.get(0, 0)] } else { br.z.lower() };
        let nums = zs.iter().map(|z| format!("{}, {}", z.re, z.im)).collect::<Vec<_>>().join(", ");
        let _ = writeln!(out, "{}, {}, {}", br.from_bus, br.to_bus, nums);
    }
    let _ = writeln!(out, "[loads]");
    for l in &model.loads {
        let _ =
            writeln!(out, "{}, {}, {}, {}, {}", l.bus, l.phases, l.kind.code(), l.rated_p, l.rated_q);
    }
    let _ = writeln!(out, "[shunts]");
    for s in &model.shunts {
        let _ = writeln!(
            out,
            "{}, {}, {}, {}, {}, {}",
            s.id, s.bus, s.phases, s.block_kvar, s.blocks, s.blocks_on
        );
    }
    let _ = writeln!(out, "[generators]");
    for g in &model.generators {
        let p = g.p_set.map(|p| p.to_string()).unwrap_or_else(|| "-".into());
        let _ = writeln!(out, "{}, {}, {}, {}, {}", g.bus, p, g.v_set, g.q_min, g.q_max);
    }
    let _ = writeln!(out, "[solar]");
    for s in &model.solar {
        let _ = writeln!(out, "{}, {}, {}, {}", s.id, s.bus, s.s_rating, s.profile_id);
    }
    out
}

fn invalid(r: &Record, msg: impl Into<String>) -> GridError {
    GridError::Invalid { line: r.line, msg: msg.into() }
}

fn count(r: &Record, i: usize) -> Result<u32, GridError> {
    let s = r.field(i)?;
    s.parse::<u32>().map_err(|_| GridError::Syntax {
        line: r.line,
        msg: format!("`{s}` is not a non-negative integer"),
    })
}
