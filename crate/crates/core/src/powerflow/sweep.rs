//! Unbalanced backward/forward sweep.

use num_complex::Complex64;

use super::{
    zip_scale, FeederInjections, PhasorState, PowerFlowError, RadialTopology, SWEEP_MAX_ITER,
    SWEEP_TOLERANCE,
};
use crate::grid::{GridModel, Phase, PhaseSet, ZipKind};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Per-phase rated power of one element attached to a bus.
struct Attachment {
    bus: usize,
    phases: PhaseSet,
    /// Per-phase power in p.u.; consumption for loads, generation for devices.
    per_phase: Complex64,
    kind: ZipKind,
}

fn attachments(
    model: &GridModel,
    inj: &FeederInjections,
) -> Result<(Vec<Attachment>, Vec<Attachment>), PowerFlowError> {
    let index = model.bus_indices();
    let base = model.base_kva();
    let lookup = |id: &str| {
        index.get(id).copied().ok_or_else(|| {
            PowerFlowError::InvalidInput(format!("injection references unknown bus {id}"))
        })
    };

    if let Some(ratings) = &inj.loads {
        if ratings.len() != model.loads.len() {
            return Err(PowerFlowError::InvalidInput(format!(
                "{} load ratings for {} loads",
                ratings.len(),
                model.loads.len()
            )));
        }
    }
    let mut consumers = Vec::with_capacity(model.loads.len() + model.shunts.len());
    for (i, load) in model.loads.iter().enumerate() {
        let (p, q) = inj.loads.as_ref().map(|r| r[i]).unwrap_or((load.rated_p, load.rated_q));
        consumers.push(Attachment {
            bus: lookup(&load.bus)?,
            phases: load.phases,
            per_phase: Complex64::new(p, q) / (base * load.phases.len() as f64),
            kind: load.kind,
        });
    }
    if let Some(on) = &inj.shunt_blocks_on {
        if on.len() != model.shunts.len() {
            return Err(PowerFlowError::InvalidInput("shunt state length mismatch".into()));
        }
    }
    for (i, sh) in model.shunts.iter().enumerate() {
        let on = inj.shunt_blocks_on.as_ref().map(|s| s[i]).unwrap_or(sh.blocks_on);
        if on > sh.blocks {
            return Err(PowerFlowError::InvalidInput(format!("shunt {} over its block count", sh.id)));
        }
        if on == 0 {
            continue;
        }
        let kvar = sh.block_kvar * on as f64;
        consumers.push(Attachment {
            bus: lookup(&sh.bus)?,
            phases: sh.phases,
            per_phase: Complex64::new(0.0, -kvar) / (base * sh.phases.len() as f64),
            kind: ZipKind::ConstantImpedance,
        });
    }

    let mut generators = Vec::with_capacity(inj.devices.len());
    for d in &inj.devices {
        let bus = lookup(&d.bus)?;
        if !d.phases.is_subset_of(model.buses[bus].phases) {
            return Err(PowerFlowError::InvalidInput(format!(
                "device {} phases {} not on bus {}",
                d.id, d.phases, d.bus
            )));
        }
        generators.push(Attachment {
            bus,
            phases: d.phases,
            per_phase: Complex64::new(d.p_kw, d.q_kvar) / (base * d.phases.len() as f64),
            kind: ZipKind::ConstantPower,
        });
    }
    Ok((consumers, generators))
}

/// Net consumption and generation per bus-phase at voltages `v`.
fn bus_powers(
    n: usize,
    v: &[[Option<Complex64>; 3]],
    consumers: &[Attachment],
    generators: &[Attachment],
) -> (Vec<[Complex64; 3]>, Vec<[Complex64; 3]>) {
    let mut cons = vec![[ZERO; 3]; n];
    let mut gen = vec![[ZERO; 3]; n];
    for a in consumers {
        for p in a.phases.iter() {
            let mag = v[a.bus][p.index()].map(|x| x.norm()).unwrap_or(0.0);
            cons[a.bus][p.index()] += a.per_phase * zip_scale(a.kind, mag);
        }
    }
    for a in generators {
        for p in a.phases.iter() {
            gen[a.bus][p.index()] += a.per_phase;
        }
    }
    (cons, gen)
}

/// Backward pass: branch currents from bus power balances at voltages `v`.
fn branch_currents(
    model: &GridModel,
    topo: &RadialTopology,
    v: &[[Option<Complex64>; 3]],
    cons: &[[Complex64; 3]],
    gen: &[[Complex64; 3]],
) -> (Vec<[Complex64; 3]>, Vec<Vec<Complex64>>) {
    let n = model.buses.len();
    // accumulated current leaving each bus toward its subtree, by phase
    let mut through = vec![[ZERO; 3]; n];
    for &b in &topo.order {
        for p in model.buses[b].phases.iter() {
            let i = p.index();
            let vb = v[b][i].unwrap_or(ZERO);
            let s = cons[b][i] - gen[b][i];
            if vb != ZERO {
                through[b][i] = (s / vb).conj();
            }
        }
    }
    let mut currents = vec![Vec::new(); model.branches.len()];
    for &b in topo.order.iter().rev() {
        let (Some(k), Some(parent)) = (topo.parent_branch[b], topo.parent_bus[b]) else {
            continue;
        };
        let phases = model.branches[k].z.phases;
        currents[k] = phases.iter().map(|p| through[b][p.index()]).collect();
        for p in phases.iter() {
            let add = through[b][p.index()];
            through[parent][p.index()] += add;
        }
    }
    (through, currents)
}

/// Solves a radial feeder by backward/forward sweep from the head phasors.
///
/// Returns a state flagged `converged: false` when the iteration cap is hit
/// or the iteration blows up; it never returns a diverged state as converged.
pub fn solve_feeder(
    model: &GridModel,
    head: &[Complex64; 3],
    inj: &FeederInjections,
) -> Result<PhasorState, PowerFlowError> {
    let topo = RadialTopology::build(model)?;
    solve_with_topology(model, &topo, head, inj)
}

pub(crate) fn solve_with_topology(
    model: &GridModel,
    topo: &RadialTopology,
    head: &[Complex64; 3],
    inj: &FeederInjections,
) -> Result<PhasorState, PowerFlowError> {
    for p in model.buses[topo.root].phases.iter() {
        let m = head[p.index()].norm();
        if !(m > 0.5 && m < 1.5) {
            return Err(PowerFlowError::InvalidInput(format!(
                "head voltage magnitude {m} on phase {} outside (0.5, 1.5)",
                p.as_char()
            )));
        }
    }
    let (consumers, generators) = attachments(model, inj)?;
    let n = model.buses.len();

    let mut v: Vec<[Option<Complex64>; 3]> = model
        .buses
        .iter()
        .map(|b| Phase::ALL.map(|p| b.phases.contains(p).then(|| head[p.index()])))
        .collect();

    let mut converged = false;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < SWEEP_MAX_ITER {
        iterations += 1;
        let (cons, gen) = bus_powers(n, &v, &consumers, &generators);
        let (_, currents) = branch_currents(model, topo, &v, &cons, &gen);

        let mut max_change: f64 = 0.0;
        for &b in topo.order.iter().skip(1) {
            let (k, parent) = (topo.parent_branch[b].unwrap(), topo.parent_bus[b].unwrap());
            let z = &model.branches[k].z;
            let drop = z.mul_vec(&currents[k]);
            for (pos, p) in z.phases.iter().enumerate() {
                let i = p.index();
                let new = v[parent][i].unwrap() - drop[pos];
                max_change = max_change.max((new - v[b][i].unwrap()).norm());
                v[b][i] = Some(new);
            }
        }
        residual = max_change;
        if !residual.is_finite() {
            break;
        }
        if residual < SWEEP_TOLERANCE {
            converged = true;
            break;
        }
    }

    let (consumption, generation) = bus_powers(n, &v, &consumers, &generators);
    let (_, currents) = branch_currents(model, topo, &v, &consumption, &generation);
    Ok(PhasorState {
        voltages: v,
        iterations,
        converged,
        residual,
        consumption,
        generation,
        branch_currents: currents,
    })
}
