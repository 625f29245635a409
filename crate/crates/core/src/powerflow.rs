//! Unbalanced three-phase radial power flow (backward/forward sweep).
//!
//! The backward pass accumulates branch currents from the constant-power
//! injections evaluated at the current voltage estimate; the forward pass
//! re-applies the slack voltage, regulator ratios and line drops. Iteration
//! stops when the largest complex-power mismatch falls below the tolerance.
//!
//! Internals run in physical volts and amps; results are reported in per
//! unit on each bus's declared line-to-neutral base.

use num_complex::Complex64;

use crate::model::{EdgeKind, NetworkModel, Phase, Topology};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Convergence threshold on the max complex-power mismatch, p.u.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Per-phase power base used to express the mismatch, kVA.
    pub s_base_kva: f64,
    /// Consecutive mismatch increases before declaring divergence.
    pub divergence_window: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-6,
            max_iter: 100,
            s_base_kva: 100.0,
            divergence_window: 5,
        }
    }
}

/// Scaled operating point: what every load, PV and capacitor does right now.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionState {
    pub load_kw: Vec<f64>,
    pub load_kvar: Vec<f64>,
    pub pv_kw: Vec<f64>,
    /// Signed: injection positive, absorption negative.
    pub pv_kvar: Vec<f64>,
    pub cap_on: Vec<bool>,
}

impl InjectionState {
    /// All loads at nameplate (kw_peak at declared pf), PVs at nameplate
    /// active output with zero reactive, all capacitor banks on.
    pub fn peak(model: &NetworkModel) -> InjectionState {
        let load_kw: Vec<f64> = model.loads().iter().map(|l| l.kw_peak).collect();
        let load_kvar = model
            .loads()
            .iter()
            .map(|l| l.kw_peak * (1.0 / (l.pf * l.pf) - 1.0).max(0.0).sqrt())
            .collect();
        InjectionState {
            load_kw,
            load_kvar,
            pv_kw: model.pvs().iter().map(|p| p.p_mpp_kw).collect(),
            pv_kvar: vec![0.0; model.pv_count()],
            cap_on: vec![true; model.capacitors().len()],
        }
    }

    /// Everything off: zero load, zero PV, capacitors switched out.
    pub fn zero(model: &NetworkModel) -> InjectionState {
        InjectionState {
            load_kw: vec![0.0; model.loads().len()],
            load_kvar: vec![0.0; model.loads().len()],
            pv_kw: vec![0.0; model.pv_count()],
            pv_kvar: vec![0.0; model.pv_count()],
            cap_on: vec![false; model.capacitors().len()],
        }
    }

    /// Checks the injection invariants against the model's PV ratings.
    pub fn check_limits(&self, model: &NetworkModel) -> Result<(), String> {
        for (j, pv) in model.pvs().iter().enumerate() {
            if self.pv_kw[j] > pv.p_mpp_kw + 1e-9 {
                return Err(format!(
                    "pv '{}' active output {} kW exceeds p_mpp {} kW",
                    pv.id, self.pv_kw[j], pv.p_mpp_kw
                ));
            }
            if self.pv_kvar[j].abs() > pv.q_max_kvar + 1e-9 {
                return Err(format!(
                    "pv '{}' reactive {} kVAr exceeds q_max {} kVAr",
                    pv.id, self.pv_kvar[j], pv.q_max_kvar
                ));
            }
        }
        Ok(())
    }
}

/// Converged voltage state from one power-flow solve.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageSolution {
    /// Complex voltage per phase node, p.u. on the node's bus base.
    pub v_complex: Vec<Complex64>,
    pub v_mag_pu: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final max complex-power mismatch, p.u.
    pub max_mismatch: f64,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum FlowError {
    #[error("power flow diverged after {iterations} iterations (mismatch trace: {trace:?})")]
    Diverged { iterations: usize, trace: Vec<f64> },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Simple min/max regulation band, p.u.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VoltageBand {
    pub v_min: f64,
    pub v_max: f64,
}

impl VoltageBand {
    pub const ANSI: VoltageBand = VoltageBand {
        v_min: 0.95,
        v_max: 1.05,
    };
}

/// Violation counts and voltage extrema of one solution.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ViolationSummary {
    pub over: usize,
    pub under: usize,
    /// Largest magnitude anywhere, p.u. (not only among violating nodes).
    pub worst_hi: f64,
    /// Smallest magnitude anywhere, p.u.
    pub worst_lo: f64,
}

pub fn count_violations(sol: &VoltageSolution, band: VoltageBand) -> ViolationSummary {
    let mut over = 0;
    let mut under = 0;
    let mut worst_hi = f64::NEG_INFINITY;
    let mut worst_lo = f64::INFINITY;
    for &v in &sol.v_mag_pu {
        if v > band.v_max {
            over += 1;
        }
        if v < band.v_min {
            under += 1;
        }
        worst_hi = worst_hi.max(v);
        worst_lo = worst_lo.min(v);
    }
    ViolationSummary {
        over,
        under,
        worst_hi,
        worst_lo,
    }
}

fn rot(phase: Phase) -> Complex64 {
    Complex64::from_polar(1.0, phase.nominal_angle())
}

/// Flat start: every node at the slack magnitude on its own base, at the
/// nominal phase angle.
fn flat_start(model: &NetworkModel, topo: &Topology) -> Vec<Complex64> {
    let slack = model.slack_voltage_pu();
    (0..topo.node_base_v.len())
        .map(|n| rot(topo.node_phase[n]) * (slack * topo.node_base_v[n]))
        .collect()
}

/// Solves from a flat start.
pub fn solve(
    model: &NetworkModel,
    inj: &InjectionState,
    opts: &SolverOptions,
) -> Result<VoltageSolution, FlowError> {
    let topo = model.topology()?;
    let v0 = flat_start(model, topo);
    sweep(model, topo, inj, opts, v0)
}

/// Solves warm-started from a previous solution (used inside the dispatch
/// loop where consecutive operating points differ only slightly).
pub fn solve_warm(
    model: &NetworkModel,
    inj: &InjectionState,
    opts: &SolverOptions,
    prev: &VoltageSolution,
) -> Result<VoltageSolution, FlowError> {
    let topo = model.topology()?;
    if prev.v_complex.len() != topo.node_base_v.len() {
        let v0 = flat_start(model, topo);
        return sweep(model, topo, inj, opts, v0);
    }
    let v0: Vec<Complex64> = prev
        .v_complex
        .iter()
        .enumerate()
        .map(|(n, v)| v * topo.node_base_v[n])
        .collect();
    sweep(model, topo, inj, opts, v0)
}

/// Per-node net absorbed apparent power in VA at the given voltages.
fn absorbed_va(
    topo: &Topology,
    inj: &InjectionState,
    v: &[Complex64],
    out: &mut [Complex64],
) {
    for s in out.iter_mut() {
        *s = Complex64::new(0.0, 0.0);
    }
    for (l, att) in topo.loads.iter().enumerate() {
        let s = Complex64::new(inj.load_kw[l], inj.load_kvar[l]) * 1e3;
        for &(n, share) in &att.nodes {
            out[n] += s * share;
        }
    }
    for (j, att) in topo.pvs.iter().enumerate() {
        let s = Complex64::new(inj.pv_kw[j], inj.pv_kvar[j]) * 1e3;
        for &(n, share) in &att.nodes {
            out[n] -= s * share;
        }
    }
    for (c, att) in topo.caps.iter().enumerate() {
        if !inj.cap_on[c] {
            continue;
        }
        for &(n, b) in att {
            // constant admittance: generated Q scales with |V|^2
            out[n] -= Complex64::new(0.0, b * v[n].norm_sqr());
        }
    }
}

fn sweep(
    model: &NetworkModel,
    topo: &Topology,
    inj: &InjectionState,
    opts: &SolverOptions,
    mut v: Vec<Complex64>,
) -> Result<VoltageSolution, FlowError> {
    let n_nodes = v.len();
    let slack_v: Vec<Complex64> = topo
        .slack_nodes
        .iter()
        .map(|&n| rot(topo.node_phase[n]) * (model.slack_voltage_pu() * topo.node_base_v[n]))
        .collect();

    let s_base_va = opts.s_base_kva * 1e3;
    let mut s_abs = vec![Complex64::new(0.0, 0.0); n_nodes];
    let mut i_node = vec![Complex64::new(0.0, 0.0); n_nodes];
    let mut i_acc = vec![Complex64::new(0.0, 0.0); n_nodes];
    let mut edge_current: Vec<Vec<Complex64>> = topo
        .edges
        .iter()
        .map(|e| vec![Complex64::new(0.0, 0.0); e.node_pairs.len()])
        .collect();

    let mut trace: Vec<f64> = Vec::new();
    let mut rising = 0usize;

    for iter in 1..=opts.max_iter {
        // node currents drawn from the network at the present voltages
        absorbed_va(topo, inj, &v, &mut s_abs);
        for n in 0..n_nodes {
            i_node[n] = if v[n].norm_sqr() > 0.0 {
                (s_abs[n] / v[n]).conj()
            } else {
                Complex64::new(0.0, 0.0)
            };
        }

        // backward: accumulate currents leaves -> root
        i_acc.copy_from_slice(&i_node);
        for &bus in topo.bus_order.iter().rev() {
            let Some(ei) = topo.parent_edge[bus] else {
                continue;
            };
            let edge = &topo.edges[ei];
            match &edge.kind {
                EdgeKind::Line { .. } => {
                    for (k, &(pn, cn)) in edge.node_pairs.iter().enumerate() {
                        let i = i_acc[cn];
                        edge_current[ei][k] = i;
                        i_acc[pn] += i;
                    }
                }
                EdgeKind::Regulator { ratio } => {
                    for (k, &(pn, cn)) in edge.node_pairs.iter().enumerate() {
                        let i = i_acc[cn];
                        edge_current[ei][k] = i;
                        i_acc[pn] += i * ratio[k];
                    }
                }
            }
        }

        // forward: propagate voltages root -> leaves
        for (k, &n) in topo.slack_nodes.iter().enumerate() {
            v[n] = slack_v[k];
        }
        for &bus in &topo.bus_order {
            let Some(ei) = topo.parent_edge[bus] else {
                continue;
            };
            let edge = &topo.edges[ei];
            match &edge.kind {
                EdgeKind::Line { z } => {
                    for (r, &(pn, cn)) in edge.node_pairs.iter().enumerate() {
                        let mut drop = Complex64::new(0.0, 0.0);
                        for c in 0..edge.node_pairs.len() {
                            drop += z[r][c] * edge_current[ei][c];
                        }
                        v[cn] = v[pn] - drop;
                    }
                }
                EdgeKind::Regulator { ratio } => {
                    for (k, &(pn, cn)) in edge.node_pairs.iter().enumerate() {
                        v[cn] = v[pn] * ratio[k];
                    }
                }
            }
        }

        // mismatch: specified power at the new voltages vs power delivered by
        // the currents the passes actually used
        absorbed_va(topo, inj, &v, &mut s_abs);
        let mut max_mismatch = 0.0f64;
        for n in 0..n_nodes {
            let delivered = v[n] * i_node[n].conj();
            let mm = (s_abs[n] - delivered).norm() / s_base_va;
            max_mismatch = max_mismatch.max(mm);
        }
        trace.push(max_mismatch);

        if !max_mismatch.is_finite() {
            return Err(FlowError::Diverged {
                iterations: iter,
                trace,
            });
        }
        if max_mismatch < opts.tolerance {
            return Ok(finish(topo, v, iter, max_mismatch));
        }
        if iter >= 2 && trace[iter - 1] > trace[iter - 2] {
            rising += 1;
            if rising >= opts.divergence_window {
                return Err(FlowError::Diverged {
                    iterations: iter,
                    trace,
                });
            }
        } else {
            rising = 0;
        }
    }

    Err(FlowError::Diverged {
        iterations: opts.max_iter,
        trace,
    })
}

fn finish(
    topo: &Topology,
    v_volts: Vec<Complex64>,
    iterations: usize,
    max_mismatch: f64,
) -> VoltageSolution {
    let v_complex: Vec<Complex64> = v_volts
        .iter()
        .enumerate()
        .map(|(n, v)| v / topo.node_base_v[n])
        .collect();
    let v_mag_pu = v_complex.iter().map(|v| v.norm()).collect();
    VoltageSolution {
        v_complex,
        v_mag_pu,
        iterations,
        converged: true,
        max_mismatch,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        Bus, LineSegment, LoadPoint, NetworkModel, NetworkParts, Phase, PhaseSet, PhaseSpec,
        RegPhase, Regulator, Zone,
    };
    use num_complex::Complex64;

    /// Two buses, one single-phase line of 0.01 + j0.02 ohm on a 1 kV / 1 MVA
    /// per-unit system (Zbase = 1 ohm).
    fn two_bus(load_kw: f64, load_kvar: f64) -> (NetworkModel, InjectionState) {
        let parts = NetworkParts {
            buses: vec![
                Bus {
                    id: "src".into(),
                    phases: PhaseSet::single(Phase::A),
                    base_kv: 1.0,
                    zone: Zone::Near,
                },
                Bus {
                    id: "t".into(),
                    phases: PhaseSet::single(Phase::A),
                    base_kv: 1.0,
                    zone: Zone::Far,
                },
            ],
            lines: vec![LineSegment {
                id: "l".into(),
                from_bus: "src".into(),
                to_bus: "t".into(),
                phases: PhaseSet::single(Phase::A),
                z_matrix: vec![vec![Complex64::new(0.01, 0.02)]],
            }],
            loads: vec![LoadPoint {
                id: "ld".into(),
                bus_id: "t".into(),
                phase: PhaseSpec::Single(Phase::A),
                kw_peak: load_kw,
                pf: 0.9,
                profile_id: "load_0".into(),
            }],
            slack_bus: "src".into(),
            slack_voltage_pu: 1.0,
            ..Default::default()
        };
        let model = NetworkModel::new(parts);
        assert!(model.is_valid(), "{:?}", model.validate());
        let inj = InjectionState {
            load_kw: vec![load_kw],
            load_kvar: vec![load_kvar],
            pv_kw: vec![],
            pv_kvar: vec![],
            cap_on: vec![],
        };
        (model, inj)
    }

    /// |V2| root of u^2 + (2(PR+QX)-1)u + (P^2+Q^2)(R^2+X^2) = 0, high branch.
    fn two_bus_quadratic(p: f64, q: f64, r: f64, x: f64) -> f64 {
        let b = 2.0 * (p * r + q * x) - 1.0;
        let c = (p * p + q * q) * (r * r + x * x);
        let disc = b * b - 4.0 * c;
        assert!(disc >= 0.0);
        (((-b) + disc.sqrt()) / 2.0).sqrt()
    }

    #[test]
    fn two_bus_matches_closed_form() {
        // P = 0.5 pu, Q = 0.2 pu on the 1 MVA base -> 500 kW, 200 kVAr
        let (model, inj) = two_bus(500.0, 200.0);
        let sol = solve(&model, &inj, &SolverOptions::default()).unwrap();
        let expected = two_bus_quadratic(0.5, 0.2, 0.01, 0.02);
        let got = sol.v_mag_pu[model.node_position("t", Phase::A).unwrap()];
        assert!(
            (got - expected).abs() <= 1e-6,
            "got {got}, closed form {expected}"
        );
    }

    #[test]
    fn zero_injection_is_flat_through_ratios() {
        let mut parts = NetworkParts {
            buses: vec![
                Bus {
                    id: "a".into(),
                    phases: PhaseSet::ABC,
                    base_kv: 2.4,
                    zone: Zone::Near,
                },
                Bus {
                    id: "b".into(),
                    phases: PhaseSet::ABC,
                    base_kv: 2.4,
                    zone: Zone::Far,
                },
                Bus {
                    id: "c".into(),
                    phases: PhaseSet::single(Phase::B),
                    base_kv: 2.4,
                    zone: Zone::Far,
                },
            ],
            regulators: vec![Regulator {
                id: "r1".into(),
                from_bus: "a".into(),
                to_bus: "b".into(),
                phase: RegPhase::Gang,
                tap_ratio: 1.03125,
                tap_step: 0.00625,
            }],
            slack_bus: "a".into(),
            slack_voltage_pu: 1.0,
            ..Default::default()
        };
        parts.lines.push(LineSegment {
            id: "l".into(),
            from_bus: "b".into(),
            to_bus: "c".into(),
            phases: PhaseSet::single(Phase::B),
            z_matrix: vec![vec![Complex64::new(0.2, 0.4)]],
        });
        let model = NetworkModel::new(parts);
        assert!(model.is_valid(), "{:?}", model.validate());
        let inj = InjectionState::zero(&model);
        let sol = solve(&model, &inj, &SolverOptions::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        for node in model.node_index() {
            let expected = if node.bus_id == "a" { 1.0 } else { 1.03125 };
            assert!(
                (sol.v_mag_pu[node.index] - expected).abs() < 1e-12,
                "{}.{} = {}",
                node.bus_id,
                node.phase,
                sol.v_mag_pu[node.index]
            );
        }
    }

    #[test]
    fn violation_counting() {
        let sol = VoltageSolution {
            v_complex: vec![],
            v_mag_pu: vec![1.0, 1.0, 1.0],
            iterations: 1,
            converged: true,
            max_mismatch: 0.0,
        };
        let s = count_violations(&sol, VoltageBand::ANSI);
        assert_eq!((s.over, s.under), (0, 0));
        assert_eq!((s.worst_hi, s.worst_lo), (1.0, 1.0));

        let sol = VoltageSolution {
            v_mag_pu: vec![1.0, 1.0681, 0.93],
            ..sol
        };
        let s = count_violations(&sol, VoltageBand::ANSI);
        assert_eq!((s.over, s.under), (1, 1));
        assert_eq!(s.worst_hi, 1.0681);
        assert_eq!(s.worst_lo, 0.93);
    }

    #[test]
    fn injection_limit_checks() {
        let (model, _) = two_bus(100.0, 30.0);
        let mut parts = model.to_parts();
        parts.pvs.push(crate::model::PvSystem {
            id: "pv".into(),
            bus_id: "t".into(),
            phase: PhaseSpec::Single(Phase::A),
            p_mpp_kw: 10.0,
            s_rating_kva: 11.111,
            q_max_kvar: 4.843221048378526,
            profile_id: "pv_0".into(),
            index: 0,
        });
        let model = NetworkModel::new(parts);
        let mut inj = InjectionState::peak(&model);
        assert!(inj.check_limits(&model).is_ok());
        inj.pv_kvar[0] = -6.0;
        assert!(inj.check_limits(&model).unwrap_err().contains("q_max"));
        inj.pv_kvar[0] = 0.0;
        inj.pv_kw[0] = 12.0;
        assert!(inj.check_limits(&model).unwrap_err().contains("p_mpp"));
    }

    #[test]
    fn solutions_are_bit_identical_across_runs() {
        let (model, inj) = two_bus(350.0, 120.0);
        let a = solve(&model, &inj, &SolverOptions::default()).unwrap();
        let b = solve(&model, &inj, &SolverOptions::default()).unwrap();
        assert_eq!(a.v_complex, b.v_complex);
        assert_eq!(a.iterations, b.iterations);
    }
}
