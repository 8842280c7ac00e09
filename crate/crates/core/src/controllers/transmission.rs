//! Boundary-voltage regulation from the transmission side.

use crate::grid::GridModel;
use crate::powerflow::{solve_transmission, BoundaryLoad};

use super::envelope::DerEnvelope;
use super::ControlError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionSettings {
    pub v_target: f64,
    pub v_lower: f64,
    pub v_upper: f64,
    /// Largest generator voltage setpoint change per interval, p.u.
    pub gen_step: f64,
    /// Size of the boundary injection used to measure sensitivities, kVAR / kW.
    pub probe_kva: f64,
}

impl Default for TransmissionSettings {
    fn default() -> Self {
        TransmissionSettings { v_target: 1.0, v_lower: 0.95, v_upper: 1.05, gen_step: 0.005, probe_kva: 100.0 }
    }
}

/// Per-feeder request, kW / kVAR. Positive `q_kvar` asks the feeder to inject.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeederRequest {
    pub q_kvar: f64,
    pub p_curtail_kw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionPlan {
    pub v_boundary: f64,
    /// `v_target - |V_boundary|`, p.u.
    pub error: f64,
    /// Boundary voltage change per kVAR injected, p.u./kVAR.
    pub s_vq: f64,
    pub q_total_kvar: f64,
    pub p_curtail_total_kw: f64,
    pub requests: Vec<FeederRequest>,
    /// New voltage setpoint per generator, in model order.
    pub gen_v_set: Vec<f64>,
}

fn boundary_magnitude(model: &GridModel, loads: &[BoundaryLoad], bus: usize) -> Result<f64, ControlError> {
    let sol = solve_transmission(model, loads).map_err(ControlError::PowerFlow)?;
    Ok(sol.magnitude(bus))
}

/// Plans the next interval.
///
/// The voltage error is converted into a reactive request through the
/// measured sensitivity and added to `prev_q_total`, the request already in
/// effect, so a boundary sitting at target keeps its current support instead
/// of dropping it. With `prev_q_total = 0` the request is `e / s_vq`.
pub fn transmission_vvc(
    model: &GridModel,
    boundary: &[BoundaryLoad],
    boundary_bus: &str,
    envelopes: &[DerEnvelope],
    prev_q_total: f64,
    settings: &TransmissionSettings,
) -> Result<TransmissionPlan, ControlError> {
    let bus = model
        .bus_index(boundary_bus)
        .ok_or_else(|| ControlError::Input(format!("unknown boundary bus {boundary_bus}")))?;
    let v = boundary_magnitude(model, boundary, bus)?;
    let probe = settings.probe_kva;

    let mut with = boundary.to_vec();
    with.push(BoundaryLoad { bus: boundary_bus.to_string(), p_kw: 0.0, q_kvar: -probe });
    let s_vq = (boundary_magnitude(model, &with, bus)? - v) / probe;
    if !(s_vq.is_finite() && s_vq > 0.0) {
        return Err(ControlError::Sensitivity(s_vq));
    }

    let q_min: f64 = envelopes.iter().map(|e| e.pv_q_min).sum();
    let q_max: f64 = envelopes.iter().map(|e| e.pv_q_max).sum();
    let error = settings.v_target - v;
    let q_total = (prev_q_total + error / s_vq).clamp(q_min, q_max);

    let exhausted = q_total <= q_min + 1e-9;
    let curtail_max: f64 = envelopes.iter().map(|e| e.pv_p_curtail_max).sum();
    let p_total = if v > settings.v_upper && exhausted && curtail_max > 0.0 {
        let mut with = boundary.to_vec();
        with.push(BoundaryLoad { bus: boundary_bus.to_string(), p_kw: -probe, q_kvar: 0.0 });
        let s_vp = (boundary_magnitude(model, &with, bus)? - v) / probe;
        if s_vp > 0.0 {
            ((v - settings.v_upper) / s_vp).clamp(0.0, curtail_max)
        } else {
            0.0
        }
    } else {
        0.0
    };

    let q_weight: f64 = envelopes.iter().map(|e| e.pv_q_max).sum();
    let requests = envelopes
        .iter()
        .map(|e| FeederRequest {
            q_kvar: if q_weight > 0.0 { q_total * e.pv_q_max / q_weight } else { 0.0 },
            p_curtail_kw: if curtail_max > 0.0 { p_total * e.pv_p_curtail_max / curtail_max } else { 0.0 },
        })
        .collect();

    let gen_v_set = model
        .generators
        .iter()
        .map(|g| {
            let step = (settings.v_target - g.v_set).clamp(-settings.gen_step, settings.gen_step);
            (g.v_set + step).clamp(settings.v_lower, settings.v_upper)
        })
        .collect();

    Ok(TransmissionPlan {
        v_boundary: v,
        error,
        s_vq,
        q_total_kvar: q_total,
        p_curtail_total_kw: p_total,
        requests,
        gen_v_set,
    })
}
