//! Dense nodal reference solution for radial feeders, and a seeded generator
//! of random feeders to feed it. Shared with the acceptance target.
//!
//! The oracle stamps every branch into a full bus-phase admittance matrix and
//! iterates `V = Ynn⁻¹ (I(V) - Yns Vs)` with nalgebra's LU. It shares nothing
//! with the sweep apart from the model types.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use tdsim_core::grid::{Branch, Bus, BusKind, GridModel, Phase, PhaseSet, ZMatrix, ZipKind, ZipLoad};
use tdsim_core::powerflow::{DeviceInjection, FeederInjections};

type C = Complex64;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

pub struct Oracle {
    /// `(bus, phase)` per matrix row.
    pub nodes: Vec<(usize, Phase)>,
    pub v: Vec<C>,
    /// Complex power entering at the head, p.u.
    pub head_power: C,
    /// Series losses, p.u.
    pub losses: C,
}

fn node_of(nodes: &[(usize, Phase)], bus: usize, p: Phase) -> usize {
    nodes.iter().position(|&n| n == (bus, p)).unwrap()
}

pub fn nodal_oracle(model: &GridModel, head: &[C; 3], inj: &FeederInjections) -> Oracle {
    let base = model.base_kva();
    let nodes: Vec<(usize, Phase)> = model
        .buses
        .iter()
        .enumerate()
        .flat_map(|(b, bus)| bus.phases.iter().map(move |p| (b, p)))
        .collect();
    let n = nodes.len();
    let mut y = DMatrix::from_element(n, n, c(0.0, 0.0));
    let mut branch_y = Vec::new();
    for br in &model.branches {
        let d = br.z.dim();
        let z = DMatrix::from_fn(d, d, |i, j| br.z.get(i, j));
        let yb = z.try_inverse().expect("branch impedance invertible");
        let f = model.bus_index(&br.from_bus).unwrap();
        let t = model.bus_index(&br.to_bus).unwrap();
        let ph: Vec<Phase> = br.z.phases.iter().collect();
        for i in 0..d {
            for j in 0..d {
                let (fi, fj) = (node_of(&nodes, f, ph[i]), node_of(&nodes, f, ph[j]));
                let (ti, tj) = (node_of(&nodes, t, ph[i]), node_of(&nodes, t, ph[j]));
                y[(fi, fj)] += yb[(i, j)];
                y[(ti, tj)] += yb[(i, j)];
                y[(fi, tj)] -= yb[(i, j)];
                y[(ti, fj)] -= yb[(i, j)];
            }
        }
        branch_y.push((f, t, ph, yb));
    }

    let root = model.slack_index().unwrap();
    let slack: Vec<usize> = (0..n).filter(|&k| nodes[k].0 == root).collect();
    let free: Vec<usize> = (0..n).filter(|&k| nodes[k].0 != root).collect();
    let ynn = DMatrix::from_fn(free.len(), free.len(), |i, j| y[(free[i], free[j])]);
    let yns = DMatrix::from_fn(free.len(), slack.len(), |i, j| y[(free[i], slack[j])]);
    let vs = DVector::from_iterator(slack.len(), slack.iter().map(|&k| head[nodes[k].1.index()]));
    let lu = ynn.lu();

    let loads: Vec<(f64, f64)> =
        inj.loads.clone().unwrap_or_else(|| model.loads.iter().map(|l| (l.rated_p, l.rated_q)).collect());
    let mut v: Vec<C> = nodes.iter().map(|&(_, p)| head[p.index()]).collect();
    // net per-node power drawn, as a function of the voltages
    let demand = |v: &[C]| -> Vec<C> {
        let mut s = vec![c(0.0, 0.0); n];
        for (l, &(p, q)) in model.loads.iter().zip(&loads) {
            let b = model.bus_index(&l.bus).unwrap();
            let share = c(p, q) / base / l.phases.len() as f64;
            for ph in l.phases.iter() {
                let k = node_of(&nodes, b, ph);
                let m = v[k].norm();
                let scale = match l.kind {
                    ZipKind::ConstantPower => 1.0,
                    ZipKind::ConstantCurrent => m,
                    ZipKind::ConstantImpedance => m * m,
                };
                s[k] += share * scale;
            }
        }
        for d in &inj.devices {
            let b = model.bus_index(&d.bus).unwrap();
            let share = c(d.p_kw, d.q_kvar) / base / d.phases.len() as f64;
            for ph in d.phases.iter() {
                s[node_of(&nodes, b, ph)] -= share;
            }
        }
        s
    };
    for _ in 0..500 {
        let s = demand(&v);
        let rhs = DVector::from_iterator(free.len(), free.iter().map(|&k| -(s[k] / v[k]).conj())) - &yns * &vs;
        let next = lu.solve(&rhs).expect("nodal matrix invertible");
        let step = free.iter().enumerate().map(|(i, &k)| (next[i] - v[k]).norm()).fold(0.0, f64::max);
        for (i, &k) in free.iter().enumerate() {
            v[k] = next[i];
        }
        if step < 1e-13 {
            break;
        }
    }

    let current = &y * DVector::from_vec(v.clone());
    let s = demand(&v);
    let head_power = slack.iter().map(|&k| v[k] * current[k].conj() + s[k]).sum();
    let mut losses = c(0.0, 0.0);
    for (f, t, ph, yb) in &branch_y {
        let dv = DVector::from_iterator(
            ph.len(),
            ph.iter().map(|&p| v[node_of(&nodes, *f, p)] - v[node_of(&nodes, *t, p)]),
        );
        let i = yb * &dv;
        losses += dv.iter().zip(i.iter()).map(|(a, b)| a * b.conj()).sum::<C>();
    }
    Oracle { nodes, v, head_power, losses }
}

/// splitmix64 stream, enough to shape test networks without a rand dependency.
pub struct Stream(u64);

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

fn subsets_of(parent: PhaseSet) -> Vec<PhaseSet> {
    ["a", "b", "c", "ab", "bc", "ac", "abc"]
        .iter()
        .map(|s| PhaseSet::parse(s).unwrap())
        .filter(|s| s.is_subset_of(parent))
        .collect()
}

fn zmatrix(phases: PhaseSet, z: C, mutual: f64) -> ZMatrix {
    let d = phases.len();
    let mut lower = Vec::new();
    for i in 0..d {
        for j in 0..=i {
            lower.push(if i == j { z } else { z * mutual });
        }
    }
    ZMatrix::from_lower(phases, &lower).unwrap()
}

/// Radial feeder with 2 to 6 buses, random phasing and coupled impedances,
/// one ZIP load of random kind per bus and a PV-like device injection.
pub fn random_feeder(seed: u64) -> (GridModel, FeederInjections) {
    let mut rng = Stream::new(seed);
    let n = 2 + rng.below(5);
    let mut buses = vec![Bus { id: "h".into(), phases: PhaseSet::ABC, base_kv: 12.47, kind: BusKind::Slack }];
    let mut branches = Vec::new();
    let mut loads = Vec::new();
    for i in 1..n {
        let parent = rng.below(i);
        let options = subsets_of(buses[parent].phases);
        let phases = options[rng.below(options.len())];
        let id = format!("n{i}");
        let z = c(rng.range(0.002, 0.03), rng.range(0.002, 0.05));
        branches.push(Branch {
            from_bus: buses[parent].id.clone(),
            to_bus: id.clone(),
            z: zmatrix(phases, z, rng.range(0.0, 0.35)),
        });
        let load_phases = subsets_of(phases);
        loads.push(ZipLoad {
            bus: id.clone(),
            phases: load_phases[rng.below(load_phases.len())],
            kind: [ZipKind::ConstantPower, ZipKind::ConstantCurrent, ZipKind::ConstantImpedance][rng.below(3)],
            rated_p: rng.range(0.0, 250.0),
            rated_q: rng.range(-80.0, 120.0),
        });
        buses.push(Bus { id, phases, base_kv: 12.47, kind: BusKind::Pq });
    }
    let at = &buses[1 + rng.below(n - 1)];
    let devices = vec![DeviceInjection {
        id: "pv".into(),
        bus: at.id.clone(),
        phases: at.phases,
        p_kw: rng.range(0.0, 400.0),
        q_kvar: rng.range(-150.0, 150.0),
    }];
    let model = GridModel {
        base_mva: 1.0,
        buses,
        branches,
        loads,
        shunts: vec![],
        generators: vec![],
        solar: vec![],
    };
    (model, FeederInjections { devices, ..Default::default() })
}
