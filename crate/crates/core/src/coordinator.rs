//! Coordinated reactive dispatch: the iterative loop that rebuilds the
//! sensitivity matrix at the current operating point, solves a linear
//! program for the minimum reactive intervention, applies it, and re-solves
//! the power flow until every node is back inside the thresholds. Active
//! power is never modified.
//!
//! Also carries the per-phase "zoned" variant, which optimizes each phase
//! independently on the same-phase submatrices and only validates the
//! combined result afterwards.

use serde::{Deserialize, Serialize};

use crate::lp::{self, LinearProgram, LpStatus, Relation};
use crate::model::{effective_q_max_at, NetworkModel, Phase, PhaseSpec};
use crate::powerflow::{
    self, count_violations, FlowError, InjectionState, SolverOptions, VoltageBand,
    VoltageSolution,
};
use crate::sensitivity::{self, PhaseSubmatrix, SensitivityMatrix};

/// Loop-trigger thresholds and the guard-banded LP targets. Targets sit
/// strictly inside the thresholds so linearization error cannot leave a
/// "mitigated" point still violating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageLimits {
    pub v_th_min: f64,
    pub v_th_max: f64,
    pub v_pu_min: f64,
    pub v_pu_max: f64,
}

impl Default for VoltageLimits {
    fn default() -> Self {
        VoltageLimits {
            v_th_min: 0.95,
            v_th_max: 1.05,
            v_pu_min: 0.955,
            v_pu_max: 1.045,
        }
    }
}

impl VoltageLimits {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.v_th_min < 1.0 && 1.0 < self.v_th_max) {
            return Err(format!(
                "thresholds must straddle 1.0, got [{}, {}]",
                self.v_th_min, self.v_th_max
            ));
        }
        if !(self.v_pu_min > self.v_th_min && self.v_pu_max < self.v_th_max) {
            return Err(format!(
                "targets [{}, {}] must be strictly inside thresholds [{}, {}]",
                self.v_pu_min, self.v_pu_max, self.v_th_min, self.v_th_max
            ));
        }
        Ok(())
    }

    /// Band used for the loop trigger and violation reporting.
    pub fn threshold_band(&self) -> VoltageBand {
        VoltageBand {
            v_min: self.v_th_min,
            v_max: self.v_th_max,
        }
    }

    /// Thresholds with a symmetric guard band carved out for the LP targets.
    pub fn with_guard_band(v_th_min: f64, v_th_max: f64, guard: f64) -> VoltageLimits {
        VoltageLimits {
            v_th_min,
            v_th_max,
            v_pu_min: v_th_min + guard,
            v_pu_max: v_th_max - guard,
        }
    }
}

/// Objective reading for the dispatch LP. The literal sum in the source
/// formulation is sign-degenerate, so the default minimizes total |Q|.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispatchObjective {
    /// Minimize sum of |Q_j + dQ_j| via auxiliary variables.
    MinTotalAbs,
    /// Minimize sum of (Q_j + dQ_j) literally, for comparison runs.
    LiteralSum,
}

/// Which active-power value bounds the reactive headroom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QLimitBasis {
    /// sqrt(S^2 - Pmpp^2): nameplate headroom, constant across hours.
    Nameplate,
    /// sqrt(S^2 - P_now^2): wider band when the PV runs below rating.
    ActualPower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchOptions {
    pub max_iterations: usize,
    /// Sensitivity perturbation size, kVAr.
    pub delta_q: f64,
    pub objective: DispatchObjective,
    pub q_limit_basis: QLimitBasis,
    pub solver: SolverOptions,
}

impl Default for DispatchOptions {
    fn default() -> Self {
        DispatchOptions {
            max_iterations: 3,
            delta_q: sensitivity::DEFAULT_DELTA_Q_KVAR,
            objective: DispatchObjective::MinTotalAbs,
            q_limit_basis: QLimitBasis::Nameplate,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DispatchStatus {
    Mitigated,
    LpInfeasible,
    IterationLimit,
    FlowDiverged,
}

/// One row of the iteration history, CSV-ready.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub violations: usize,
    pub max_vpu: f64,
    pub min_vpu: f64,
    pub total_abs_q_kvar: f64,
    /// Fingerprint of the sensitivity matrix used this iteration (absent for
    /// the base record).
    pub sm_fingerprint: Option<u64>,
    pub lp_status: Option<String>,
}

/// Reactive state of the dispatch across iterations; q is injection-positive
/// kvar, one entry per PV.
#[derive(Debug, Clone)]
pub struct DispatchState {
    pub q: Vec<f64>,
    pub q_initial: Vec<f64>,
    pub iteration: usize,
    pub history: Vec<IterationRecord>,
}

#[derive(Debug, Clone)]
pub struct DispatchResult {
    pub status: DispatchStatus,
    pub final_state: DispatchState,
    pub final_solution: VoltageSolution,
    /// Injection actually applied at exit; pv_kw is bit-identical to the
    /// request (no active power curtailment, in any status).
    pub final_injection: InjectionState,
}

#[derive(Debug, thiserror::Error)]
pub enum DispatchError {
    #[error("base power flow diverged before dispatch could start")]
    BaseFlowDiverged(#[source] FlowError),
    #[error(transparent)]
    Lp(#[from] lp::LpError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Builds the dispatch LP from the sensitivity matrix at the current point.
///
/// Variables are the injection-positive reactive steps dQ_j, plus one
/// auxiliary t_j per PV under the absolute-value objective. Voltage rows
/// demand `v_pu_min <= V_i - sum_j sm_ij dQ_j <= v_pu_max` for every node
/// (the matrix is absorption-referenced, hence the minus), and box bounds
/// keep every Q_j + dQ_j within its headroom.
pub fn assemble_lp(
    sm: &SensitivityMatrix,
    v: &[f64],
    q: &[f64],
    q_max: &[f64],
    limits: &VoltageLimits,
    objective: DispatchObjective,
) -> LinearProgram {
    let m = q.len();
    assert_eq!(sm.num_pvs(), m, "sensitivity column count mismatch");
    assert_eq!(sm.num_nodes(), v.len(), "sensitivity row count mismatch");
    assert_eq!(q_max.len(), m);

    let with_aux = objective == DispatchObjective::MinTotalAbs;
    let n_vars = if with_aux { 2 * m } else { m };

    let mut cost = vec![0.0; n_vars];
    if with_aux {
        for t in cost.iter_mut().skip(m) {
            *t = 1.0;
        }
    } else {
        for c in cost.iter_mut().take(m) {
            *c = 1.0;
        }
    }

    let mut constraints: Vec<(Vec<f64>, Relation, f64)> = Vec::new();
    for (i, row) in sm.entries.iter().enumerate() {
        let mut le = vec![0.0; n_vars];
        let mut ge = vec![0.0; n_vars];
        for j in 0..m {
            le[j] = -row[j];
            ge[j] = -row[j];
        }
        constraints.push((le, Relation::Le, limits.v_pu_max - v[i]));
        constraints.push((ge, Relation::Ge, limits.v_pu_min - v[i]));
    }
    if with_aux {
        for j in 0..m {
            // t_j >= Q_j + dQ_j  and  t_j >= -(Q_j + dQ_j)
            let mut up = vec![0.0; n_vars];
            up[m + j] = 1.0;
            up[j] = -1.0;
            constraints.push((up, Relation::Ge, q[j]));
            let mut dn = vec![0.0; n_vars];
            dn[m + j] = 1.0;
            dn[j] = 1.0;
            constraints.push((dn, Relation::Ge, -q[j]));
        }
    }

    let mut variable_bounds = Vec::with_capacity(n_vars);
    for j in 0..m {
        variable_bounds.push((-q_max[j] - q[j], q_max[j] - q[j]));
    }
    if with_aux {
        for _ in 0..m {
            variable_bounds.push((0.0, f64::INFINITY));
        }
    }

    LinearProgram {
        objective: cost,
        constraints,
        variable_bounds,
    }
}

fn q_limits(model: &NetworkModel, inj: &InjectionState, basis: QLimitBasis) -> Vec<f64> {
    model
        .pvs()
        .iter()
        .enumerate()
        .map(|(j, pv)| match basis {
            QLimitBasis::Nameplate => pv.q_max_kvar,
            QLimitBasis::ActualPower => {
                effective_q_max_at(pv, inj.pv_kw[j]).unwrap_or(pv.q_max_kvar)
            }
        })
        .collect()
}

fn record(
    state: &mut DispatchState,
    sol: &VoltageSolution,
    band: VoltageBand,
    sm_fingerprint: Option<u64>,
    lp_status: Option<String>,
) {
    let summary = count_violations(sol, band);
    state.history.push(IterationRecord {
        iteration: state.iteration,
        violations: summary.over + summary.under,
        max_vpu: summary.worst_hi,
        min_vpu: summary.worst_lo,
        total_abs_q_kvar: state.q.iter().map(|q| q.abs()).sum(),
        sm_fingerprint,
        lp_status,
    });
}

/// Runs the full coordinated dispatch loop for one operating point.
pub fn dispatch(
    model: &NetworkModel,
    base: &InjectionState,
    limits: &VoltageLimits,
    opts: &DispatchOptions,
) -> Result<DispatchResult, DispatchError> {
    dispatch_filtered(model, base, limits, opts, None)
}

/// Dispatch restricted to a node/PV subset: the zoned per-phase loop. When
/// `zone` is None the full network participates.
fn dispatch_filtered(
    model: &NetworkModel,
    base: &InjectionState,
    limits: &VoltageLimits,
    opts: &DispatchOptions,
    zone: Option<Phase>,
) -> Result<DispatchResult, DispatchError> {
    let band = limits.threshold_band();
    let mut inj = base.clone();
    let mut sol =
        powerflow::solve(model, &inj, &opts.solver).map_err(DispatchError::BaseFlowDiverged)?;

    let mut state = DispatchState {
        q: inj.pv_kvar.clone(),
        q_initial: inj.pv_kvar.clone(),
        iteration: 0,
        history: Vec::new(),
    };
    record(&mut state, &sol, band, None, None);

    // node rows the trigger condition watches
    let watched: Vec<usize> = match zone {
        None => (0..model.node_count()).collect(),
        Some(p) => model
            .node_index()
            .iter()
            .filter(|n| n.phase == p)
            .map(|n| n.index)
            .collect(),
    };

    loop {
        let out_of_band = watched.iter().any(|&i| {
            let v = sol.v_mag_pu[i];
            v > limits.v_th_max || v < limits.v_th_min
        });
        if !out_of_band {
            return Ok(finish(DispatchStatus::Mitigated, state, sol, inj));
        }
        if state.iteration >= opts.max_iterations {
            return Ok(finish(DispatchStatus::IterationLimit, state, sol, inj));
        }

        // refresh the sensitivities at the current Q operating point
        let sm_full = match sensitivity::build(model, &inj, opts.delta_q, &opts.solver) {
            Ok(sm) => sm,
            Err(sensitivity::SensitivityError::BaseFlowDiverged(_))
            | Err(sensitivity::SensitivityError::PerturbedFlowDiverged { .. }) => {
                return Ok(finish(DispatchStatus::FlowDiverged, state, sol, inj));
            }
            Err(sensitivity::SensitivityError::Model(e)) => return Err(e.into()),
            Err(sensitivity::SensitivityError::BadDeltaQ(d)) => {
                return Err(DispatchError::Lp(lp::LpError::Malformed(format!(
                    "bad delta_q {d}"
                ))))
            }
        };

        let q_max_all = q_limits(model, &inj, opts.q_limit_basis);
        let (lp_instance, pv_cols, fingerprint) = match zone {
            None => {
                let fp = sm_full.fingerprint();
                let cols: Vec<usize> = (0..model.pv_count()).collect();
                let q: Vec<f64> = inj.pv_kvar.clone();
                (
                    assemble_lp(&sm_full, &sol.v_mag_pu, &q, &q_max_all, limits, opts.objective),
                    cols,
                    fp,
                )
            }
            Some(p) => {
                let subs = sensitivity::per_phase_submatrices(&sm_full, model);
                let sub: &PhaseSubmatrix = subs.iter().find(|s| s.phase == p).unwrap();
                let fp = sub.sm.fingerprint();
                let v: Vec<f64> = sub.node_rows.iter().map(|&i| sol.v_mag_pu[i]).collect();
                let q: Vec<f64> = sub.pv_cols.iter().map(|&j| inj.pv_kvar[j]).collect();
                let qm: Vec<f64> = sub.pv_cols.iter().map(|&j| q_max_all[j]).collect();
                (
                    assemble_lp(&sub.sm, &v, &q, &qm, limits, opts.objective),
                    sub.pv_cols.clone(),
                    fp,
                )
            }
        };

        let lp_sol = lp::solve_lp(&lp_instance)?;
        if lp_sol.status != LpStatus::Optimal {
            state.iteration += 1;
            record(
                &mut state,
                &sol,
                band,
                Some(fingerprint),
                Some(format!("{:?}", lp_sol.status)),
            );
            return Ok(finish(DispatchStatus::LpInfeasible, state, sol, inj));
        }

        // apply Q^n = Q + dQ, clamped so LP feasibility slack can never
        // push a setpoint past its physical headroom
        for (k, &j) in pv_cols.iter().enumerate() {
            let updated = inj.pv_kvar[j] + lp_sol.x[k];
            inj.pv_kvar[j] = updated.clamp(-q_max_all[j], q_max_all[j]);
        }
        state.q = inj.pv_kvar.clone();

        match powerflow::solve_warm(model, &inj, &opts.solver, &sol) {
            Ok(next) => sol = next,
            Err(_) => {
                state.iteration += 1;
                record(&mut state, &sol, band, Some(fingerprint), Some("Optimal".into()));
                return Ok(finish(DispatchStatus::FlowDiverged, state, sol, inj));
            }
        }
        state.iteration += 1;
        record(&mut state, &sol, band, Some(fingerprint), Some("Optimal".into()));
    }
}

fn finish(
    status: DispatchStatus,
    state: DispatchState,
    sol: VoltageSolution,
    inj: InjectionState,
) -> DispatchResult {
    DispatchResult {
        status,
        final_state: state,
        final_solution: sol,
        final_injection: inj,
    }
}

/// Zoned dispatch output: the three independent per-phase runs, the combined
/// reactive vector, and the single full-network validation flow.
#[derive(Debug)]
pub struct ZonedDispatchResult {
    pub per_phase: [DispatchResult; 3],
    pub combined_q: Vec<f64>,
    pub validation: VoltageSolution,
    pub residual_violations: usize,
}

/// Runs the dispatch loop once per phase, each on its own same-phase
/// submatrices and blind to the other phases, then validates the combined
/// reactive vector with one full power flow. Three-phase PVs take no part
/// and keep their base setpoints.
pub fn dispatch_zoned(
    model: &NetworkModel,
    base: &InjectionState,
    limits: &VoltageLimits,
    opts: &DispatchOptions,
) -> Result<ZonedDispatchResult, DispatchError> {
    let a = dispatch_filtered(model, base, limits, opts, Some(Phase::A))?;
    let b = dispatch_filtered(model, base, limits, opts, Some(Phase::B))?;
    let c = dispatch_filtered(model, base, limits, opts, Some(Phase::C))?;

    let mut combined = base.clone();
    for (j, pv) in model.pvs().iter().enumerate() {
        let source = match pv.phase {
            PhaseSpec::Single(Phase::A) => &a,
            PhaseSpec::Single(Phase::B) => &b,
            PhaseSpec::Single(Phase::C) => &c,
            PhaseSpec::ThreePhase => continue,
        };
        combined.pv_kvar[j] = source.final_injection.pv_kvar[j];
    }

    let validation =
        powerflow::solve(model, &combined, &opts.solver).map_err(DispatchError::BaseFlowDiverged)?;
    let summary = count_violations(&validation, limits.threshold_band());

    Ok(ZonedDispatchResult {
        per_phase: [a, b, c],
        combined_q: combined.pv_kvar,
        validation,
        residual_violations: summary.over + summary.under,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_limits_validate() {
        assert!(VoltageLimits::default().validate().is_ok());
        let bad = VoltageLimits {
            v_pu_max: 1.06,
            ..VoltageLimits::default()
        };
        assert!(bad.validate().is_err());
    }

    fn toy_sm(entries: Vec<Vec<f64>>, v: &[f64]) -> SensitivityMatrix {
        SensitivityMatrix {
            entries,
            base_voltages: v.to_vec(),
            base_q: vec![0.0],
            delta_q: 1.0,
        }
    }

    #[test]
    fn in_band_lp_optimum_is_zero() {
        let limits = VoltageLimits::default();
        let v = vec![1.0, 1.01];
        let sm = toy_sm(vec![vec![-0.002], vec![-0.001]], &v);
        let program = assemble_lp(
            &sm,
            &v,
            &[0.0],
            &[10.0],
            &limits,
            DispatchObjective::MinTotalAbs,
        );
        let sol = lp::solve_lp(&program).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(sol.objective_value.abs() < 1e-9);
        assert!(sol.x[0].abs() < 1e-9);
    }

    #[test]
    fn single_binding_row_ratio() {
        // one node 0.01 over the target, sm = -0.002 p.u./kVAr
        let limits = VoltageLimits::default();
        let v = vec![limits.v_pu_max + 0.01];
        let sm = toy_sm(vec![vec![-0.002]], &v);
        let program = assemble_lp(
            &sm,
            &v,
            &[0.0],
            &[100.0],
            &limits,
            DispatchObjective::MinTotalAbs,
        );
        let sol = lp::solve_lp(&program).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(
            (sol.x[0] - (-5.0)).abs() < 1e-7,
            "expected dQ = -5 kVAr, got {}",
            sol.x[0]
        );
    }

    #[test]
    fn literal_objective_flag_changes_cost() {
        let limits = VoltageLimits::default();
        let v = vec![1.0];
        let sm = toy_sm(vec![vec![-0.002]], &v);
        let program = assemble_lp(&sm, &v, &[0.0], &[5.0], &limits, DispatchObjective::LiteralSum);
        // the literal sum is sign-degenerate: it pays to absorb maximally
        // even with no violation anywhere
        let sol = lp::solve_lp(&program).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(sol.x[0] < -4.9, "literal objective absorbs maximally: {}", sol.x[0]);
    }
}
