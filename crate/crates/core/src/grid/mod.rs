//! Electrical network data model.
//!
//! A [`GridModel`] describes one network, either a balanced transmission
//! system or an unbalanced radial distribution feeder. Impedances are given in
//! per-unit directly; powers are given in physical units (kW, kVAR, MW, MVAr)
//! and converted with [`GridModel::base_mva`] by the solvers.
//!
//! Per-phase quantities in feeders use a per-phase power base equal to
//! `base_mva`, so a 1000 kW single-phase load on a 1 MVA feeder is 1.0 p.u.

mod parse;
mod profile;
pub(crate) mod sections;

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;

pub use parse::{parse_grid_file, serialize_grid, ParseMode};
pub use profile::{disaggregate_feeder_profile, Profile, PROFILE_STEP_S};

/// Default feeder power base.
pub const DEFAULT_FEEDER_BASE_MVA: f64 = 1.0;
/// Default transmission power base.
pub const DEFAULT_TRANSMISSION_BASE_MVA: f64 = 100.0;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GridError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: reference to undeclared bus \"{bus}\"")]
    DanglingBus { line: usize, bus: String },
    #[error("line {line}: duplicate id \"{id}\"")]
    Duplicate { line: usize, id: String },
    #[error("line {line}: second slack bus \"{bus}\"")]
    MultipleSlack { line: usize, bus: String },
    #[error("no slack bus declared")]
    NoSlack,
    #[error("network is not radial: {0}")]
    NonRadial(String),
    #[error("line {line}: {msg}")]
    Invalid { line: usize, msg: String },
    #[error("profile error: {0}")]
    Profile(String),
    #[error("disaggregation error: {0}")]
    Disaggregation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Nominal angle offset in degrees relative to phase a.
    pub fn offset_deg(self) -> f64 {
        match self {
            Phase::A => 0.0,
            Phase::B => -120.0,
            Phase::C => 120.0,
        }
    }

    pub fn from_char(c: char) -> Option<Phase> {
        match c.to_ascii_lowercase() {
            'a' => Some(Phase::A),
            'b' => Some(Phase::B),
            'c' => Some(Phase::C),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Phase::A => 'a',
            Phase::B => 'b',
            Phase::C => 'c',
        }
    }
}

/// Nonempty subset of {a, b, c}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const ABC: PhaseSet = PhaseSet(0b111);

    pub fn single(p: Phase) -> Self {
        PhaseSet(1 << p.index())
    }

    pub fn from_phases(phases: &[Phase]) -> Option<Self> {
        let bits = phases.iter().fold(0u8, |acc, p| acc | (1 << p.index()));
        (bits != 0).then_some(PhaseSet(bits))
    }

    pub fn parse(s: &str) -> Option<Self> {
        let mut bits = 0u8;
        for c in s.chars() {
            let p = Phase::from_char(c)?;
            if bits & (1 << p.index()) != 0 {
                return None;
            }
            bits |= 1 << p.index();
        }
        (bits != 0).then_some(PhaseSet(bits))
    }

    pub fn contains(self, p: Phase) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn intersect(self, other: PhaseSet) -> Option<PhaseSet> {
        let bits = self.0 & other.0;
        (bits != 0).then_some(PhaseSet(bits))
    }

    pub fn is_subset_of(self, other: PhaseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    /// Position of `p` within this set, in a-b-c order.
    pub fn position(self, p: Phase) -> Option<usize> {
        self.iter().position(|q| q == p)
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BusKind {
    Slack,
    Pq,
    Pv,
}

impl BusKind {
    fn as_str(self) -> &'static str {
        match self {
            BusKind::Slack => "slack",
            BusKind::Pq => "pq",
            BusKind::Pv => "pv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub phases: PhaseSet,
    /// Line-to-line kV.
    pub base_kv: f64,
    pub kind: BusKind,
}

/// Symmetric per-phase series impedance matrix in per-unit, indexed by the
/// position of each phase within `phases`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZMatrix {
    pub phases: PhaseSet,
    dim: usize,
    entries: Vec<Complex64>,
}

impl ZMatrix {
    /// Diagonal matrix with the same self impedance on every phase.
    pub fn uniform(phases: PhaseSet, z: Complex64) -> Self {
        let dim = phases.len();
        let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = z;
        }
        ZMatrix { phases, dim, entries }
    }

    /// Builds from the lower triangle in row-major order
    /// (z11, z21, z22, z31, z32, z33).
    pub fn from_lower(phases: PhaseSet, lower: &[Complex64]) -> Option<Self> {
        let dim = phases.len();
        if lower.len() != dim * (dim + 1) / 2 {
            return None;
        }
        let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
        let mut k = 0;
        for i in 0..dim {
            for j in 0..=i {
                entries[i * dim + j] = lower[k];
                entries[j * dim + i] = lower[k];
                k += 1;
            }
        }
        Some(ZMatrix { phases, dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.dim + j]
    }

    pub fn lower(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.dim * (self.dim + 1) / 2);
        for i in 0..self.dim {
            for j in 0..=i {
                out.push(self.get(i, j));
            }
        }
        out
    }

    pub fn is_uniform_diagonal(&self) -> bool {
        let d = self.get(0, 0);
        (0..self.dim).all(|i| {
            (0..self.dim).all(|j| {
                let v = self.get(i, j);
                if i == j {
                    v == d
                } else {
                    v == Complex64::new(0.0, 0.0)
                }
            })
        })
    }

    /// Positive-sequence impedance `Zs - Zm` using mean self and mutual terms.
    pub fn positive_sequence(&self) -> Complex64 {
        let n = self.dim;
        let zs: Complex64 = (0..n).map(|i| self.get(i, i)).sum::<Complex64>() / n as f64;
        if n == 1 {
            return zs;
        }
        let mut zm = Complex64::new(0.0, 0.0);
        let mut count = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    zm += self.get(i, j);
                    count += 1.0;
                }
            }
        }
        zs - zm / count
    }

    /// `Z * i` for a current vector in this matrix's phase order.
    pub fn mul_vec(&self, current: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * current[j]).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from_bus: String,
    pub to_bus: String,
    pub z: ZMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ZipKind {
    ConstantPower,
    ConstantCurrent,
    ConstantImpedance,
}

impl ZipKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p" | "constant_power" => Some(ZipKind::ConstantPower),
            "i" | "constant_current" => Some(ZipKind::ConstantCurrent),
            "z" | "constant_impedance" => Some(ZipKind::ConstantImpedance),
            _ => None,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            ZipKind::ConstantPower => "P",
            ZipKind::ConstantCurrent => "I",
            ZipKind::ConstantImpedance => "Z",
        }
    }

    /// Voltage exponent of the load law `S = S_rated * |V|^n`.
    pub fn exponent(self) -> i32 {
        match self {
            ZipKind::ConstantPower => 0,
            ZipKind::ConstantCurrent => 1,
            ZipKind::ConstantImpedance => 2,
        }
    }
}

/// Wye-connected spot load; rated power is split equally across its phases.
#[derive(Debug, Clone, PartialEq)]
pub struct ZipLoad {
    pub bus: String,
    pub phases: PhaseSet,
    pub kind: ZipKind,
    /// kW at nominal voltage.
    pub rated_p: f64,
    /// kVAR at nominal voltage.
    pub rated_q: f64,
}

/// Bank of identical switchable capacitor blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Shunt {
    pub id: String,
    pub bus: String,
    pub phases: PhaseSet,
    /// kVAR per block at nominal voltage.
    pub block_kvar: f64,
    pub blocks: u32,
    pub blocks_on: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: String,
    /// MW; `None` on the slack bus.
    pub p_set: Option<f64>,
    pub v_set: f64,
    pub q_min: f64,
    pub q_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolarFarm {
    pub id: String,
    pub bus: String,
    /// Apparent power rating in kVA.
    pub s_rating: f64,
    pub profile_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub loads: Vec<ZipLoad>,
    pub shunts: Vec<Shunt>,
    pub generators: Vec<Generator>,
    pub solar: Vec<SolarFarm>,
}

impl GridModel {
    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn bus_indices(&self) -> HashMap<&str, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id.as_str(), i)).collect()
    }

    pub fn slack_index(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.kind == BusKind::Slack)
    }

    /// kVA per per-unit of power.
    pub fn base_kva(&self) -> f64 {
        self.base_mva * 1000.0
    }

    /// Checks that every bus is reached from the slack bus by exactly one
    /// path and that each branch feeds a subset of its parent's phases.
    pub fn check_radial(&self) -> Result<(), GridError> {
        crate::powerflow::RadialTopology::build(self).map(|_| ())
    }
}
