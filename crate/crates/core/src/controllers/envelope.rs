use crate::grid::{GridModel, PhaseSet};
use crate::inverter::InverterParams;
use crate::powerflow::{feeder_aggregate, PhasorState};

use super::ControlError;

/// Flexibility a feeder offers upward, in kW / kVAR.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DerEnvelope {
    pub pv_p_curtail_max: f64,
    pub pv_q_max: f64,
    pub pv_q_min: f64,
    pub dr_p_max: f64,
    pub dr_p_min: f64,
    pub losses: f64,
}

impl DerEnvelope {
    pub fn is_valid(&self) -> bool {
        self.pv_q_min <= self.pv_q_max && self.dr_p_min <= self.dr_p_max && self.pv_p_curtail_max >= 0.0
    }
}

/// Demand-response range configured for a feeder, kW.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DrCapacity {
    pub p_min: f64,
    pub p_max: f64,
}

/// A PV unit as the distribution controller sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct PvUnit {
    pub id: String,
    pub bus: String,
    pub phases: PhaseSet,
    pub params: InverterParams,
    /// Commanded over the file link rather than directly.
    pub hardware: bool,
}

/// Current operating point of a PV unit, kW / kVAR.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PvReading {
    pub p_avail: f64,
    pub p_out: f64,
    pub q_out: f64,
}

pub fn compute_der_envelope(
    model: &GridModel,
    state: &PhasorState,
    pvs: &[PvUnit],
    readings: &[PvReading],
    dr: DrCapacity,
) -> Result<DerEnvelope, ControlError> {
    if !state.converged {
        return Err(ControlError::NotConverged);
    }
    if pvs.len() != readings.len() {
        return Err(ControlError::Input(format!(
            "{} PV units but {} readings",
            pvs.len(),
            readings.len()
        )));
    }
    let q_max: f64 = pvs.iter().map(|u| u.params.q_limit()).sum();
    let p_out: f64 = readings.iter().map(|r| r.p_out.max(0.0)).sum();
    let losses = feeder_aggregate(state, model, 0.0).map_err(ControlError::PowerFlow)?.losses;
    Ok(DerEnvelope {
        pv_p_curtail_max: p_out,
        pv_q_max: q_max,
        pv_q_min: -q_max,
        dr_p_max: dr.p_max,
        dr_p_min: dr.p_min,
        losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{parse_grid_file, ParseMode};
    use crate::powerflow::{balanced_head, solve_feeder, FeederInjections};

    const IDLE: &str = "\
[buses]
h, abc, 12.47, slack
n1, abc, 12.47, pq
[branches]
h, n1, 0.01, 0.02
";

    fn unit(id: &str, s: f64) -> PvUnit {
        PvUnit {
            id: id.into(),
            bus: "n1".into(),
            phases: PhaseSet::ABC,
            params: InverterParams::new(s, 1.1).unwrap(),
            hardware: false,
        }
    }

    fn setup() -> (GridModel, PhasorState) {
        let model = parse_grid_file(IDLE, ParseMode::Radial).unwrap();
        let state = solve_feeder(&model, &balanced_head(1.0, 0.0), &FeederInjections::default()).unwrap();
        (model, state)
    }

    #[test]
    fn empty_is_zero() {
        let (m, s) = setup();
        let env = compute_der_envelope(&m, &s, &[], &[], DrCapacity::default()).unwrap();
        assert_eq!(env, DerEnvelope::default());
    }

    #[test]
    fn one_mva_unit() {
        let (m, s) = setup();
        let env = compute_der_envelope(&m, &s, &[unit("a", 1000.0)], &[PvReading::default()], DrCapacity::default())
            .unwrap();
        assert!((env.pv_q_max - 1100.0).abs() < 1e-9);
        assert_eq!(env.pv_q_min, -env.pv_q_max);
        assert!(env.is_valid());
    }

    #[test]
    fn additive() {
        let (m, s) = setup();
        let r = PvReading { p_avail: 300.0, p_out: 300.0, q_out: 0.0 };
        let one = compute_der_envelope(&m, &s, &[unit("a", 500.0)], &[r], DrCapacity::default()).unwrap();
        let two = compute_der_envelope(&m, &s, &[unit("a", 500.0), unit("b", 500.0)], &[r, r], DrCapacity::default())
            .unwrap();
        assert_eq!(two.pv_q_max, 2.0 * one.pv_q_max);
        assert_eq!(two.pv_p_curtail_max, 2.0 * one.pv_p_curtail_max);
    }

    #[test]
    fn rejects_unconverged() {
        let (m, mut s) = setup();
        s.converged = false;
        assert!(compute_der_envelope(&m, &s, &[], &[], DrCapacity::default()).is_err());
    }
}
