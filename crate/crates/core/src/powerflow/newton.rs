//! Balanced positive-sequence Newton-Raphson with generator reactive limits.
//!
//! Loads are treated as constant power at their rated values. Shunt blocks
//! that are switched on enter the admittance matrix as capacitive
//! susceptance.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{PhasorState, PowerFlowError, NR_MAX_ITER, NR_TOLERANCE};
use crate::grid::{BusKind, GridModel, Phase};

/// Extra constant-power load at a bus, e.g. the aggregate of the feeders
/// hanging below it.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryLoad {
    pub bus: String,
    pub p_kw: f64,
    pub q_kvar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionSolution {
    pub state: PhasorState,
    /// Final bus kinds; pv buses demoted on a reactive limit read `Pq`.
    pub kinds: Vec<BusKind>,
    pub gen_p_mw: Vec<f64>,
    pub gen_q_mvar: Vec<f64>,
    /// Indices of generators pinned at a reactive limit.
    pub limited: Vec<usize>,
}

impl TransmissionSolution {
    pub fn magnitude(&self, bus: usize) -> f64 {
        self.state.magnitude(bus, Phase::A).unwrap_or(0.0)
    }

    pub fn angle_deg(&self, bus: usize) -> f64 {
        self.state.voltage(bus, Phase::A).map(|v| v.arg().to_degrees()).unwrap_or(0.0)
    }
}

fn admittance(model: &GridModel) -> DMatrix<Complex64> {
    let n = model.buses.len();
    let index = model.bus_indices();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for br in &model.branches {
        let (f, t) = (index[br.from_bus.as_str()], index[br.to_bus.as_str()]);
        let ys = Complex64::new(1.0, 0.0) / br.z.positive_sequence();
        y[(f, f)] += ys;
        y[(t, t)] += ys;
        y[(f, t)] -= ys;
        y[(t, f)] -= ys;
    }
    for sh in &model.shunts {
        let b = sh.block_kvar * sh.blocks_on as f64 / model.base_kva();
        let k = index[sh.bus.as_str()];
        y[(k, k)] += Complex64::new(0.0, b);
    }
    y
}

fn injections(y: &DMatrix<Complex64>, v: &[Complex64]) -> Vec<Complex64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let current: Complex64 = (0..n).map(|k| y[(i, k)] * v[k]).sum();
            v[i] * current.conj()
        })
        .collect()
}

/// Solves the transmission network with `boundary` loads added to the model's.
pub fn solve_transmission(
    model: &GridModel,
    boundary: &[BoundaryLoad],
) -> Result<TransmissionSolution, PowerFlowError> {
    let n = model.buses.len();
    let index = model.bus_indices();
    let base = model.base_mva;
    let slack = model.slack_index().ok_or(crate::grid::GridError::NoSlack)?;

    let mut demand = vec![Complex64::new(0.0, 0.0); n];
    for l in &model.loads {
        demand[index[l.bus.as_str()]] += Complex64::new(l.rated_p, l.rated_q) / model.base_kva();
    }
    for b in boundary {
        let k = *index.get(b.bus.as_str()).ok_or_else(|| {
            PowerFlowError::InvalidInput(format!("boundary load on unknown bus {}", b.bus))
        })?;
        demand[k] += Complex64::new(b.p_kw, b.q_kvar) / model.base_kva();
    }

    let mut kinds: Vec<BusKind> = model.buses.iter().map(|b| b.kind).collect();
    let mut p_gen = vec![0.0; n];
    let mut v_set = vec![1.0; n];
    let mut q_lim = vec![(0.0, 0.0); n];
    for g in &model.generators {
        let k = index[g.bus.as_str()];
        p_gen[k] += g.p_set.unwrap_or(0.0) / base;
        v_set[k] = g.v_set;
        q_lim[k].0 += g.q_min / base;
        q_lim[k].1 += g.q_max / base;
    }
    // reactive generation pinned on demoted pv buses
    let mut q_fixed = vec![0.0; n];

    let y = admittance(model);
    let mut vm: Vec<f64> = (0..n)
        .map(|i| if kinds[i] == BusKind::Pq { 1.0 } else { v_set[i] })
        .collect();
    let mut va = vec![0.0; n];
    let mut total_iter = 0;
    let mut limited_buses = Vec::new();
    let mut residual;

    loop {
        let (iters, res) = newton(&y, &kinds, &p_gen, &q_fixed, &demand, &mut vm, &mut va)?;
        total_iter += iters;
        residual = res;

        let v = phasors(&vm, &va);
        let s = injections(&y, &v);
        let mut changed = false;
        for i in 0..n {
            if kinds[i] != BusKind::Pv {
                continue;
            }
            let qg = s[i].im + demand[i].im;
            let (lo, hi) = q_lim[i];
            let pinned = if qg > hi + NR_TOLERANCE {
                Some(hi)
            } else if qg < lo - NR_TOLERANCE {
                Some(lo)
            } else {
                None
            };
            if let Some(q) = pinned {
                kinds[i] = BusKind::Pq;
                q_fixed[i] = q;
                limited_buses.push(i);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let v = phasors(&vm, &va);
    let s = injections(&y, &v);
    let mut gen_p_mw = Vec::with_capacity(model.generators.len());
    let mut gen_q_mvar = Vec::with_capacity(model.generators.len());
    let mut limited = Vec::new();
    for (gi, g) in model.generators.iter().enumerate() {
        let k = index[g.bus.as_str()];
        let at_bus: Vec<_> = model.generators.iter().filter(|h| h.bus == g.bus).collect();
        let bus_q = (s[k].im + demand[k].im) * base;
        let share = if at_bus.len() == 1 {
            1.0
        } else {
            let range: f64 = at_bus.iter().map(|h| h.q_max - h.q_min).sum();
            if range > 0.0 {
                (g.q_max - g.q_min) / range
            } else {
                1.0 / at_bus.len() as f64
            }
        };
        let bus_p = if k == slack { (s[k].re + demand[k].re) * base } else { g.p_set.unwrap_or(0.0) };
        gen_p_mw.push(if k == slack { bus_p / at_bus.len() as f64 } else { bus_p });
        gen_q_mvar.push(bus_q * share);
        if limited_buses.contains(&k) {
            limited.push(gi);
        }
    }

    let voltages = v
        .iter()
        .map(|&va| Phase::ALL.map(|p| Some(va * Complex64::from_polar(1.0, p.offset_deg().to_radians()))))
        .collect();
    let zero = [Complex64::new(0.0, 0.0); 3];
    Ok(TransmissionSolution {
        state: PhasorState {
            voltages,
            iterations: total_iter,
            converged: true,
            residual,
            consumption: demand.iter().map(|d| [*d, *d, *d]).collect(),
            generation: vec![zero; n],
            branch_currents: Vec::new(),
        },
        kinds,
        gen_p_mw,
        gen_q_mvar,
        limited,
    })
}

fn phasors(vm: &[f64], va: &[f64]) -> Vec<Complex64> {
    vm.iter().zip(va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect()
}

/// Inner Newton loop for fixed bus kinds. Returns (iterations, final mismatch).
fn newton(
    y: &DMatrix<Complex64>,
    kinds: &[BusKind],
    p_gen: &[f64],
    q_fixed: &[f64],
    demand: &[Complex64],
    vm: &mut [f64],
    va: &mut [f64],
) -> Result<(usize, f64), PowerFlowError> {
    let n = vm.len();
    let angle_vars: Vec<usize> = (0..n).filter(|&i| kinds[i] != BusKind::Slack).collect();
    let mag_vars: Vec<usize> = (0..n).filter(|&i| kinds[i] == BusKind::Pq).collect();
    let (na, nm) = (angle_vars.len(), mag_vars.len());
    let dim = na + nm;
    if dim == 0 {
        return Ok((0, 0.0));
    }

    for iter in 0..=NR_MAX_ITER {
        let v = phasors(vm, va);
        let s = injections(y, &v);
        let mut mismatch = DVector::zeros(dim);
        for (r, &i) in angle_vars.iter().enumerate() {
            mismatch[r] = p_gen[i] - demand[i].re - s[i].re;
        }
        for (r, &i) in mag_vars.iter().enumerate() {
            mismatch[na + r] = q_fixed[i] - demand[i].im - s[i].im;
        }
        let norm = mismatch.amax();
        if !norm.is_finite() {
            return Err(PowerFlowError::Diverged { iterations: iter, mismatch: norm });
        }
        if norm < NR_TOLERANCE {
            return Ok((iter, norm));
        }
        if iter == NR_MAX_ITER {
            return Err(PowerFlowError::Diverged { iterations: iter, mismatch: norm });
        }

        // Polar Jacobian: rows dP (angle vars), dQ (pq buses); columns dθ, d|V|.
        let mut jac = DMatrix::zeros(dim, dim);
        let g = |i: usize, k: usize| y[(i, k)].re;
        let b = |i: usize, k: usize| y[(i, k)].im;
        for (r, &i) in angle_vars.iter().chain(mag_vars.iter()).enumerate() {
            let is_q = r >= na;
            let (pi, qi) = (s[i].re, s[i].im);
            for (c, &k) in angle_vars.iter().chain(mag_vars.iter()).enumerate() {
                let wrt_mag = c >= na;
                let value = if i == k {
                    let (gii, bii, vi) = (g(i, i), b(i, i), vm[i]);
                    match (is_q, wrt_mag) {
                        (false, false) => -qi - bii * vi * vi,
                        (false, true) => pi / vi + gii * vi,
                        (true, false) => pi - gii * vi * vi,
                        (true, true) => qi / vi - bii * vi,
                    }
                } else {
                    let th = va[i] - va[k];
                    let (gik, bik) = (g(i, k), b(i, k));
                    let (sn, cs) = th.sin_cos();
                    match (is_q, wrt_mag) {
                        (false, false) => vm[i] * vm[k] * (gik * sn - bik * cs),
                        (false, true) => vm[i] * (gik * cs + bik * sn),
                        (true, false) => -vm[i] * vm[k] * (gik * cs + bik * sn),
                        (true, true) => vm[i] * (gik * sn - bik * cs),
                    }
                };
                jac[(r, c)] = value;
            }
        }
        let step = jac.lu().solve(&mismatch).ok_or(PowerFlowError::SingularJacobian(iter))?;
        if step.iter().any(|x| !x.is_finite()) {
            return Err(PowerFlowError::SingularJacobian(iter));
        }
        for (r, &i) in angle_vars.iter().enumerate() {
            va[i] += step[r];
        }
        for (r, &i) in mag_vars.iter().enumerate() {
            vm[i] += step[na + r];
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{parse_grid_file, ParseMode};

    pub(crate) const THREE_BUS: &str = "\
[system]
base_mva, 100
[buses]
1, abc, 138, slack
2, abc, 138, pv
3, abc, 138, pq
[branches]
1, 2, 0.02, 0.06
1, 3, 0.08, 0.24
2, 3, 0.06, 0.18
[loads]
3, abc, P, 60000, 25000
[generators]
1, -, 1.02, -100, 100
2, 30, 1.01, -20, 20
";

    #[test]
    fn no_load_flat_solution() {
        let doc = "[system]\nbase_mva, 100\n[buses]\n1, abc, 138, slack\n2, abc, 138, pq\n\
                   3, abc, 138, pq\n[branches]\n1, 2, 0.01, 0.1\n2, 3, 0.01, 0.1\n\
                   [generators]\n1, -, 1.03, -10, 10\n";
        let m = parse_grid_file(doc, ParseMode::Meshed).unwrap();
        let sol = solve_transmission(&m, &[]).unwrap();
        for i in 0..3 {
            assert!((sol.magnitude(i) - 1.03).abs() < 1e-8);
        }
    }

    #[test]
    fn converges_and_balances() {
        let m = parse_grid_file(THREE_BUS, ParseMode::Meshed).unwrap();
        let sol = solve_transmission(&m, &[]).unwrap();
        assert!(sol.state.residual < NR_TOLERANCE);
        assert!((sol.magnitude(0) - 1.02).abs() < 1e-12);
        assert!((sol.magnitude(1) - 1.01).abs() < 1e-12);
        // slack covers load minus pv output plus losses
        let slack_p = sol.gen_p_mw[0];
        assert!(slack_p > 30.0 && slack_p < 35.0, "slack {slack_p}");
        assert!(sol.limited.is_empty());
    }

    #[test]
    fn boundary_load_depresses_voltage() {
        let m = parse_grid_file(THREE_BUS, ParseMode::Meshed).unwrap();
        let base = solve_transmission(&m, &[]).unwrap();
        let loaded = solve_transmission(
            &m,
            &[BoundaryLoad { bus: "3".into(), p_kw: 5000.0, q_kvar: 2000.0 }],
        )
        .unwrap();
        assert!(loaded.magnitude(2) < base.magnitude(2));
        assert!(solve_transmission(&m, &[BoundaryLoad { bus: "9".into(), p_kw: 0.0, q_kvar: 0.0 }])
            .is_err());
    }

    #[test]
    fn islanded_bus_is_singular() {
        let doc = "[buses]\n1, abc, 1, slack\n2, abc, 1, pq\n3, abc, 1, pq\n\
                   [branches]\n1, 2, 0.01, 0.1\n[loads]\n3, abc, P, 10, 0\n";
        let m = parse_grid_file(doc, ParseMode::Meshed).unwrap();
        assert!(matches!(
            solve_transmission(&m, &[]),
            Err(PowerFlowError::SingularJacobian(_)) | Err(PowerFlowError::Diverged { .. })
        ));
    }
}
