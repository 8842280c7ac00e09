//! Greedy sensitivity-ranked reactive dispatch inside one feeder.

use crate::powerflow::Vsm;

use super::envelope::{PvReading, PvUnit};
use super::ControlError;

/// Voltage considered a violation once it leaves the band by more than this.
const BAND_TOL: f64 = 1e-9;

/// Switchable capacitor bank.
#[derive(Debug, Clone, PartialEq)]
pub struct ShuntUnit {
    pub id: String,
    pub block_kvar: f64,
    pub blocks: u32,
    pub blocks_on: u32,
}

/// Actuator id used for a shunt's sensitivity column.
pub fn shunt_actuator_id(shunt_id: &str) -> String {
    format!("shunt:{shunt_id}")
}

#[derive(Debug, Clone)]
pub struct DistributionInput<'a> {
    pub ctr: u64,
    /// Total PV reactive output requested, kVAR (positive injects).
    pub q_req_kvar: f64,
    /// Active power curtailment requested, kW.
    pub p_curtail_kw: f64,
    pub units: &'a [PvUnit],
    pub readings: &'a [PvReading],
    pub shunts: &'a [ShuntUnit],
    pub vsm: &'a Vsm,
    /// Measured magnitudes aligned with `vsm.nodes`.
    pub magnitudes: &'a [f64],
    /// Power base the VSM columns are expressed in, kVA.
    pub base_kva: f64,
    pub v_lower: f64,
    pub v_upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchPlan {
    pub ctr: u64,
    /// Reactive setpoint per PV unit, kVAR, in unit order.
    pub pv_q: Vec<f64>,
    /// Active power curtailment per PV unit, kW, in unit order.
    pub pv_p_curtail: Vec<f64>,
    pub shunt_blocks_on: Vec<u32>,
    pub dr_p_kw: f64,
    /// Share of the hardware unit, p.u. of its rating, if one exists.
    pub hardware_q_pu: Option<f64>,
    /// Unit indices in allocation order.
    pub order: Vec<usize>,
    /// Request minus allocation, kVAR.
    pub shortfall_kvar: f64,
    /// Predicted voltages still leave the band.
    pub predicted_violation: bool,
    pub predicted: Vec<f64>,
}

impl DispatchPlan {
    pub fn total_q(&self) -> f64 {
        self.pv_q.iter().sum()
    }
}

/// Allocation order: descending VSM Q-column norm, ties by unit id.
pub fn allocation_order(units: &[PvUnit], vsm: &Vsm) -> Result<Vec<usize>, ControlError> {
    let norms = vsm.q_column_norms();
    let mut keyed = Vec::with_capacity(units.len());
    for (i, u) in units.iter().enumerate() {
        let col = vsm.actuator_index(&u.id).ok_or_else(|| ControlError::Input(format!("no VSM column for {}", u.id)))?;
        keyed.push((norms[col], u.id.as_str(), i));
    }
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    Ok(keyed.into_iter().map(|k| k.2).collect())
}

fn worst_violation(pred: &[f64], lo: f64, hi: f64) -> Option<(usize, f64, f64)> {
    let mut worst: Option<(usize, f64, f64)> = None;
    for (n, &v) in pred.iter().enumerate() {
        let (excess, dir) = if v > hi + BAND_TOL {
            (v - hi, 1.0)
        } else if v < lo - BAND_TOL {
            (lo - v, -1.0)
        } else {
            continue;
        };
        if worst.is_none_or(|w| excess > w.1) {
            worst = Some((n, excess, dir));
        }
    }
    worst
}

pub fn distribution_vvc(input: &DistributionInput<'_>) -> Result<DispatchPlan, ControlError> {
    let DistributionInput { units, readings, shunts, vsm, magnitudes, base_kva, .. } = *input;
    if readings.len() != units.len() {
        return Err(ControlError::Input("one reading per PV unit required".into()));
    }
    if magnitudes.len() != vsm.nodes.len() {
        return Err(ControlError::Input("magnitudes must align with the VSM rows".into()));
    }
    if !(base_kva > 0.0) {
        return Err(ControlError::Input("base must be positive".into()));
    }
    let col = |id: &str| vsm.actuator_index(id).ok_or_else(|| ControlError::Input(format!("no VSM column for {id}")));
    let unit_cols = units.iter().map(|u| col(&u.id)).collect::<Result<Vec<_>, _>>()?;

    // greedy fill
    let order = allocation_order(units, vsm)?;
    let mut alloc = vec![0.0; units.len()];
    let mut remaining = input.q_req_kvar;
    for &i in &order {
        if remaining == 0.0 {
            break;
        }
        let limit = units[i].params.q_limit();
        let take = remaining.clamp(-limit, limit);
        alloc[i] = take;
        remaining -= take;
    }

    let mut pred: Vec<f64> = magnitudes.to_vec();
    for (i, &c) in unit_cols.iter().enumerate() {
        let dq = (alloc[i] - readings[i].q_out) / base_kva;
        for (n, p) in pred.iter_mut().enumerate() {
            *p += vsm.q[n][c] * dq;
        }
    }

    // trim the unit pushing hardest toward the worst violation
    let mut by_id: Vec<usize> = (0..units.len()).collect();
    by_id.sort_by(|&a, &b| units[a].id.cmp(&units[b].id));
    for _ in 0..(4 * units.len() * pred.len().max(1) + 8) {
        let Some((n, excess, dir)) = worst_violation(&pred, input.v_lower, input.v_upper) else { break };
        let mut pick: Option<(usize, f64)> = None;
        for &i in &by_id {
            let s = alloc[i].signum();
            let sens = vsm.q[n][unit_cols[i]];
            if alloc[i] == 0.0 || sens * s * dir <= 0.0 {
                continue;
            }
            let push = sens * alloc[i] * dir;
            if pick.is_none_or(|p| push > p.1) {
                pick = Some((i, push));
            }
        }
        let Some((i, _)) = pick else { break };
        let sens = vsm.q[n][unit_cols[i]];
        let delta = alloc[i].abs().min(excess * base_kva / sens.abs());
        let step = -alloc[i].signum() * delta;
        alloc[i] += step;
        if alloc[i].abs() < 1e-12 {
            alloc[i] = 0.0;
        }
        for (m, p) in pred.iter_mut().enumerate() {
            *p += vsm.q[m][unit_cols[i]] * step / base_kva;
        }
    }

    // capacitor blocks only when the PV range could not restore the band
    let mut blocks_on: Vec<u32> = shunts.iter().map(|s| s.blocks_on).collect();
    let shunt_cols = shunts.iter().map(|s| col(&shunt_actuator_id(&s.id))).collect::<Result<Vec<_>, _>>()?;
    for _ in 0..(shunts.iter().map(|s| s.blocks as usize).sum::<usize>() * 2 + 1) {
        let Some((n, _, dir)) = worst_violation(&pred, input.v_lower, input.v_upper) else { break };
        let mut pick: Option<(usize, f64)> = None;
        for (k, s) in shunts.iter().enumerate() {
            let can = if dir > 0.0 { blocks_on[k] > 0 } else { blocks_on[k] < s.blocks };
            let effect = vsm.q[n][shunt_cols[k]];
            if can && effect > 0.0 && pick.is_none_or(|p| effect > p.1) {
                pick = Some((k, effect));
            }
        }
        let Some((k, _)) = pick else { break };
        let dq = if dir > 0.0 { -shunts[k].block_kvar } else { shunts[k].block_kvar };
        blocks_on[k] = if dir > 0.0 { blocks_on[k] - 1 } else { blocks_on[k] + 1 };
        for (m, p) in pred.iter_mut().enumerate() {
            *p += vsm.q[m][shunt_cols[k]] * dq / base_kva;
        }
    }
    let predicted_violation = worst_violation(&pred, input.v_lower, input.v_upper).is_some();

    let p_total: f64 = readings.iter().map(|r| r.p_out.max(0.0)).sum();
    let curtail = input.p_curtail_kw.clamp(0.0, p_total);
    let pv_p_curtail = readings
        .iter()
        .map(|r| if p_total > 0.0 { curtail * r.p_out.max(0.0) / p_total } else { 0.0 })
        .collect();

    let hardware_q_pu = units.iter().position(|u| u.hardware).map(|i| alloc[i] / units[i].params.s_rating);
    let shortfall_kvar = input.q_req_kvar - alloc.iter().sum::<f64>();
    Ok(DispatchPlan {
        ctr: input.ctr,
        pv_q: alloc,
        pv_p_curtail,
        shunt_blocks_on: blocks_on,
        dr_p_kw: 0.0,
        hardware_q_pu,
        order,
        shortfall_kvar,
        predicted_violation,
        predicted: pred,
    })
}
