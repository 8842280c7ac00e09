use num_complex::Complex64;

use super::{PhasorState, PowerFlowError, RadialTopology};
use crate::grid::GridModel;

/// Feeder-head totals reported upstream.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeederAggregate {
    /// kW entering the feeder at the head; negative under reverse flow.
    pub p_total: f64,
    /// kVAR entering the feeder at the head.
    pub q_total: f64,
    /// Series I²R losses, kW.
    pub losses: f64,
    /// Series I²X reactive losses, kVAR.
    pub q_losses: f64,
    pub load_p: f64,
    pub load_q: f64,
    pub injection_p: f64,
    pub injection_q: f64,
    pub sim_time: f64,
}

pub fn feeder_aggregate(
    state: &PhasorState,
    model: &GridModel,
    sim_time: f64,
) -> Result<FeederAggregate, PowerFlowError> {
    if !state.converged {
        return Err(PowerFlowError::NotConverged);
    }
    let topo = RadialTopology::build(model)?;
    let base = model.base_kva();
    let root = topo.root;

    let mut head = Complex64::new(0.0, 0.0);
    for p in model.buses[root].phases.iter() {
        let i = p.index();
        let v = state.voltages[root][i].ok_or(PowerFlowError::NotConverged)?;
        let mut current = ((state.consumption[root][i] - state.generation[root][i]) / v).conj();
        for (k, br) in model.branches.iter().enumerate() {
            let child = model.bus_index(&br.to_bus).unwrap();
            let parent = model.bus_index(&br.from_bus).unwrap();
            let feeds_from_root = topo.parent_branch[child] == Some(k) && parent == root
                || topo.parent_branch[parent] == Some(k) && child == root;
            if feeds_from_root {
                if let Some(pos) = br.z.phases.position(p) {
                    current += state.branch_currents[k][pos];
                }
            }
        }
        head += v * current.conj();
    }

    let mut loss = Complex64::new(0.0, 0.0);
    for (k, br) in model.branches.iter().enumerate() {
        let i = &state.branch_currents[k];
        let drop = br.z.mul_vec(i);
        loss += drop.iter().zip(i).map(|(dv, c)| dv * c.conj()).sum::<Complex64>();
    }

    let load: Complex64 = state.consumption.iter().flatten().sum();
    let gen: Complex64 = state.generation.iter().flatten().sum();
    Ok(FeederAggregate {
        p_total: head.re * base,
        q_total: head.im * base,
        losses: loss.re * base,
        q_losses: loss.im * base,
        load_p: load.re * base,
        load_q: load.im * base,
        injection_p: gen.re * base,
        injection_q: gen.im * base,
        sim_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{parse_grid_file, ParseMode, PhaseSet};
    use crate::powerflow::{balanced_head, solve_feeder, DeviceInjection, FeederInjections};

    const CHAIN: &str = "\
[buses]
h, abc, 12.47, slack
a, abc, 12.47, pq
b, abc, 12.47, pq
[branches]
h, a, 0.01, 0.03
a, b, 0.02, 0.04
[loads]
a, abc, P, 600, 200
b, abc, I, 300, 100
";

    #[test]
    fn zero_load_aggregate() {
        let doc = "[buses]\nh, abc, 1, slack\nx, abc, 1, pq\n[branches]\nh, x, 0.1, 0.1\n";
        let m = parse_grid_file(doc, ParseMode::Radial).unwrap();
        let st = solve_feeder(&m, &balanced_head(1.0, 0.0), &FeederInjections::default()).unwrap();
        let agg = feeder_aggregate(&st, &m, 0.0).unwrap();
        assert_eq!((agg.p_total, agg.q_total, agg.losses), (0.0, 0.0, 0.0));
    }

    #[test]
    fn two_bus_balance() {
        let doc = "[buses]\nS, a, 12.47, slack\nL, a, 12.47, pq\n[branches]\nS, L, 0.01, 0.02\n\
                   [loads]\nL, a, P, 1000, 500\n";
        let m = parse_grid_file(doc, ParseMode::Radial).unwrap();
        let st = solve_feeder(&m, &balanced_head(1.0, 0.0), &FeederInjections::default()).unwrap();
        let agg = feeder_aggregate(&st, &m, 0.0).unwrap();
        let v2 = st.voltage(1, crate::grid::Phase::A).unwrap();
        let i = (Complex64::new(1.0, 0.5) / v2).conj();
        let i2r = i.norm_sqr() * 0.01 * 1000.0;
        assert!((agg.p_total - (1000.0 + i2r)).abs() < 1e-6);
        assert!(agg.losses > 0.0);
    }

    #[test]
    fn energy_balance_and_reverse_flow() {
        let m = parse_grid_file(CHAIN, ParseMode::Radial).unwrap();
        let inj = FeederInjections {
            devices: vec![DeviceInjection {
                id: "pv".into(),
                bus: "b".into(),
                phases: PhaseSet::ABC,
                p_kw: 1500.0,
                q_kvar: 0.0,
            }],
            ..Default::default()
        };
        let st = solve_feeder(&m, &balanced_head(1.02, -3.0), &inj).unwrap();
        let agg = feeder_aggregate(&st, &m, 12.5).unwrap();
        let base = m.base_kva();
        let dp = agg.p_total - (agg.load_p + agg.losses - agg.injection_p);
        let dq = agg.q_total - (agg.load_q + agg.q_losses - agg.injection_q);
        assert!(dp.abs() / base < 1e-6 && dq.abs() / base < 1e-6, "{dp} {dq}");
        assert!(agg.p_total < 0.0, "reverse flow expected, got {}", agg.p_total);
        assert_eq!(agg.sim_time, 12.5);
    }

    #[test]
    fn rejects_unconverged() {
        let m = parse_grid_file(CHAIN, ParseMode::Radial).unwrap();
        let mut st = solve_feeder(&m, &balanced_head(1.0, 0.0), &FeederInjections::default()).unwrap();
        st.converged = false;
        assert_eq!(feeder_aggregate(&st, &m, 0.0), Err(PowerFlowError::NotConverged));
    }
}
