//! Quasi-static phasor power flow.
//!
//! Feeders are solved per phase with a backward/forward sweep over the radial
//! tree; the transmission network is solved as a balanced positive-sequence
//! system with polar Newton-Raphson.

mod aggregate;
mod newton;
mod sweep;
mod topology;
mod vsm;
mod zip;

use num_complex::Complex64;

use crate::grid::{GridError, Phase, PhaseSet};

pub use aggregate::{feeder_aggregate, FeederAggregate};
pub use newton::{solve_transmission, BoundaryLoad, TransmissionSolution};
pub use sweep::solve_feeder;
pub use topology::RadialTopology;
pub use vsm::{all_nodes, compute_vsm, Actuator, Vsm, DEFAULT_VSM_DELTA};
pub use zip::{evaluate_zip, zip_scale};

/// Maximum voltage change between sweeps at convergence (p.u.).
pub const SWEEP_TOLERANCE: f64 = 1e-8;
pub const SWEEP_MAX_ITER: usize = 100;
/// Power mismatch infinity norm at convergence (p.u.).
pub const NR_TOLERANCE: f64 = 1e-8;
pub const NR_MAX_ITER: usize = 30;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PowerFlowError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("zero voltage magnitude")]
    ZeroVoltage,
    #[error("Jacobian is singular at iteration {0}")]
    SingularJacobian(usize),
    #[error("Newton-Raphson did not converge in {iterations} iterations (mismatch {mismatch:e})")]
    Diverged { iterations: usize, mismatch: f64 },
    #[error("state is not converged")]
    NotConverged,
}

/// Solved per-bus, per-phase voltages. Absent phases are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasorState {
    pub voltages: Vec<[Option<Complex64>; 3]>,
    pub iterations: usize,
    pub converged: bool,
    /// Last voltage change (sweep) or power mismatch (Newton-Raphson).
    pub residual: f64,
    /// Per-bus, per-phase consumption of loads and shunts at the solution (p.u.).
    pub consumption: Vec<[Complex64; 3]>,
    /// Per-bus, per-phase device generation at the solution (p.u.).
    pub generation: Vec<[Complex64; 3]>,
    /// Per-branch series current in the branch's phase order (p.u.); empty
    /// for transmission solutions.
    pub branch_currents: Vec<Vec<Complex64>>,
}

impl PhasorState {
    pub fn voltage(&self, bus: usize, phase: Phase) -> Option<Complex64> {
        self.voltages.get(bus).and_then(|v| v[phase.index()])
    }

    pub fn magnitude(&self, bus: usize, phase: Phase) -> Option<f64> {
        self.voltage(bus, phase).map(|v| v.norm())
    }

    /// All `(bus, phase, |V|)` triples present in the state.
    pub fn magnitudes(&self) -> impl Iterator<Item = (usize, Phase, f64)> + '_ {
        self.voltages.iter().enumerate().flat_map(|(b, v)| {
            Phase::ALL.into_iter().filter_map(move |p| v[p.index()].map(|x| (b, p, x.norm())))
        })
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitudes().map(|(_, _, m)| m).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_magnitude(&self) -> f64 {
        self.magnitudes().map(|(_, _, m)| m).fold(f64::INFINITY, f64::min)
    }
}

/// Device injection into a feeder; positive P and Q flow into the grid.
/// Power is split equally across `phases`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceInjection {
    pub id: String,
    pub bus: String,
    pub phases: PhaseSet,
    pub p_kw: f64,
    pub q_kvar: f64,
}

/// Operating inputs for one feeder solve on top of its [`GridModel`](crate::grid::GridModel).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeederInjections {
    /// Rated (nominal-voltage) kW/kVAR per load, in model order. `None`
    /// keeps the model's ratings.
    pub loads: Option<Vec<(f64, f64)>>,
    pub devices: Vec<DeviceInjection>,
    /// Blocks switched on per shunt, in model order. `None` keeps the model's.
    pub shunt_blocks_on: Option<Vec<u32>>,
}

/// Everything needed to repeat a feeder solve.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederCase {
    pub head: [Complex64; 3],
    pub injections: FeederInjections,
}

/// Head phasors from a magnitude and phase-a angle with b/c at -120/+120 degrees.
pub fn balanced_head(magnitude: f64, angle_a_deg: f64) -> [Complex64; 3] {
    Phase::ALL.map(|p| Complex64::from_polar(magnitude, (angle_a_deg + p.offset_deg()).to_radians()))
}
