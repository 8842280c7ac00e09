//! Transmission and distribution Volt-VAR controllers.
//!
//! The algorithms ([`compute_der_envelope`], [`transmission_vvc`],
//! [`distribution_vvc`]) are plain functions. [`DistController`] and
//! [`TransController`] wrap them as federates that follow the per-interval
//! coordination sequence: measurement pull, generator commands, constraints
//! upward, transmission solve and request downward, distribution dispatch.

mod distribution;
mod envelope;
mod federates;
mod transmission;

pub use distribution::{
    allocation_order, distribution_vvc, shunt_actuator_id, DispatchPlan, DistributionInput, ShuntUnit,
};
pub use envelope::{compute_der_envelope, DerEnvelope, DrCapacity, PvReading, PvUnit};
pub use federates::{
    timer_key, DistController, DistControllerConfig, DistWiring, FeederMeasurement, HardwareSpec, LocalMsg,
    TransController, TransControllerConfig, TransMeasurement, TransWiring,
};
pub use transmission::{transmission_vvc, FeederRequest, TransmissionPlan, TransmissionSettings};

use crate::grid::GridModel;
use crate::inverter::InverterParams;
use crate::powerflow::PowerFlowError;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("input state is not converged")]
    NotConverged,
    #[error(transparent)]
    PowerFlow(PowerFlowError),
    #[error("invalid controller input: {0}")]
    Input(String),
    #[error("boundary sensitivity {0} is not usable")]
    Sensitivity(f64),
}

/// PV units of a feeder in the order both the controller and the simulator
/// use: the feeder's solar farms in file order, then the hardware unit if it
/// sits on this feeder.
pub fn feeder_pv_units(model: &GridModel, k: f64, hardware: Option<&HardwareSpec>) -> Vec<PvUnit> {
    let mut units: Vec<PvUnit> = model
        .solar
        .iter()
        .map(|s| PvUnit {
            id: s.id.clone(),
            bus: s.bus.clone(),
            phases: model.buses[model.bus_index(&s.bus).expect("validated")].phases,
            params: InverterParams { s_rating: s.s_rating, k },
            hardware: false,
        })
        .collect();
    if let Some(hw) = hardware {
        units.push(PvUnit {
            id: hw.id.clone(),
            bus: hw.bus.clone(),
            phases: crate::grid::PhaseSet::single(hw.phase),
            params: hw.params,
            hardware: true,
        });
    }
    units
}

/// Capacitor banks of a feeder as switchable units, in model order.
pub fn feeder_shunt_units(model: &GridModel) -> Vec<ShuntUnit> {
    model
        .shunts
        .iter()
        .map(|s| ShuntUnit { id: s.id.clone(), block_kvar: s.block_kvar, blocks: s.blocks, blocks_on: s.blocks_on })
        .collect()
}
