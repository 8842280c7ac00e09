//! Voltage-sensitivity matrix by one-sided perturbation of the feeder solver.

use super::sweep::solve_with_topology;
use super::{DeviceInjection, FeederCase, PhasorState, PowerFlowError, RadialTopology};
use crate::grid::{GridModel, Phase, PhaseSet};

/// Default perturbation size, p.u. of the feeder base.
pub const DEFAULT_VSM_DELTA: f64 = 0.01;

/// Injection point perturbed when building a [`Vsm`] column.
#[derive(Debug, Clone, PartialEq)]
pub struct Actuator {
    pub id: String,
    pub bus: String,
    pub phases: PhaseSet,
}

/// `∂|V_node| / ∂Q_actuator` and `∂|V_node| / ∂P_actuator`, in p.u. voltage per
/// p.u. of total actuator injection.
#[derive(Debug, Clone, PartialEq)]
pub struct Vsm {
    pub nodes: Vec<(usize, Phase)>,
    pub actuators: Vec<String>,
    /// `q[node][actuator]`
    pub q: Vec<Vec<f64>>,
    /// `p[node][actuator]`
    pub p: Vec<Vec<f64>>,
    /// Actuators whose perturbed re-solve failed; their columns are zero.
    pub failed: Vec<bool>,
}

impl Vsm {
    /// Euclidean norm of each Q column.
    pub fn q_column_norms(&self) -> Vec<f64> {
        (0..self.actuators.len())
            .map(|a| self.q.iter().map(|row| row[a] * row[a]).sum::<f64>().sqrt())
            .collect()
    }

    pub fn actuator_index(&self, id: &str) -> Option<usize> {
        self.actuators.iter().position(|a| a == id)
    }
}

/// Builds the sensitivity matrix around `state`, which must be the converged
/// solution of `case`. One re-solve per actuator and quantity.
pub fn compute_vsm(
    model: &GridModel,
    case: &FeederCase,
    state: &PhasorState,
    monitored: &[(usize, Phase)],
    actuators: &[Actuator],
    delta: f64,
) -> Result<Vsm, PowerFlowError> {
    if !state.converged {
        return Err(PowerFlowError::NotConverged);
    }
    if !(delta > 0.0) {
        return Err(PowerFlowError::InvalidInput("perturbation must be positive".into()));
    }
    let base_mag = monitored
        .iter()
        .map(|&(b, p)| {
            state.magnitude(b, p).ok_or_else(|| {
                PowerFlowError::InvalidInput(format!("monitored node {b}/{p:?} not in state"))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let topo = RadialTopology::build(model)?;
    let kva = delta * model.base_kva();
    let mut q = vec![vec![0.0; actuators.len()]; monitored.len()];
    let mut p = vec![vec![0.0; actuators.len()]; monitored.len()];
    let mut failed = vec![false; actuators.len()];

    for (a, act) in actuators.iter().enumerate() {
        for (active, target) in [(false, &mut q), (true, &mut p)] {
            let mut inj = case.injections.clone();
            inj.devices.push(DeviceInjection {
                id: format!("{}#perturb", act.id),
                bus: act.bus.clone(),
                phases: act.phases,
                p_kw: if active { kva } else { 0.0 },
                q_kvar: if active { 0.0 } else { kva },
            });
            let perturbed = solve_with_topology(model, &topo, &case.head, &inj)?;
            if !perturbed.converged {
                failed[a] = true;
                continue;
            }
            for (n, &(b, ph)) in monitored.iter().enumerate() {
                let m = perturbed.magnitude(b, ph).unwrap_or(base_mag[n]);
                target[n][a] = (m - base_mag[n]) / delta;
            }
        }
        if failed[a] {
            for n in 0..monitored.len() {
                q[n][a] = 0.0;
                p[n][a] = 0.0;
            }
        }
    }
    Ok(Vsm {
        nodes: monitored.to_vec(),
        actuators: actuators.iter().map(|a| a.id.clone()).collect(),
        q,
        p,
        failed,
    })
}

/// Every bus-phase present in `model`, in bus order.
pub fn all_nodes(model: &GridModel) -> Vec<(usize, Phase)> {
    model.buses.iter().enumerate().flat_map(|(i, b)| b.phases.iter().map(move |p| (i, p))).collect()
}
