//! Voltage-reactive-power sensitivity matrix, built by per-inverter
//! perturbation at the current operating point.
//!
//! Sign convention: entries are the per-node voltage response to one kVAr of
//! *additional absorption* at one PV. In-phase entries therefore come out
//! negative (absorbing lowers the local voltage) and cross-phase entries on
//! an unbalanced feeder are frequently positive -- absorbing on one phase
//! can raise a neighbouring node of another phase. All downstream consumers
//! (prediction, dispatch assembly) use the same absorption-positive delta-Q
//! orientation; the power-flow layer keeps injection-positive kvar and the
//! coordinator translates at the boundary.

use rayon::prelude::*;

use crate::model::{NetworkModel, Phase};
use crate::powerflow::{self, FlowError, InjectionState, SolverOptions, VoltageSolution};

/// Default perturbation size: unit reactive perturbation, one-sided.
pub const DEFAULT_DELTA_Q_KVAR: f64 = 1.0;
/// Halving retries when a perturbed flow diverges.
const DIVERGED_RETRIES: usize = 2;

/// N x M real matrix of voltage responses, p.u. per kVAr of absorption,
/// together with the operating point it was computed against.
#[derive(Debug, Clone)]
pub struct SensitivityMatrix {
    /// Row-major entries: `entries[i][j]` is node i's response to PV j.
    pub entries: Vec<Vec<f64>>,
    /// Voltage magnitudes of the base solve, p.u.
    pub base_voltages: Vec<f64>,
    /// Injection-positive PV kvar vector at computation time.
    pub base_q: Vec<f64>,
    /// Perturbation magnitude used, kVAr.
    pub delta_q: f64,
}

impl SensitivityMatrix {
    pub fn num_nodes(&self) -> usize {
        self.entries.len()
    }

    pub fn num_pvs(&self) -> usize {
        self.entries.first().map_or(0, |row| row.len())
    }

    /// Stable fingerprint of the entries, for iteration traces.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the raw bit patterns
        let mut h: u64 = 0xcbf29ce484222325;
        for row in &self.entries {
            for v in row {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        }
        h
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum SensitivityError {
    #[error("base power flow diverged")]
    BaseFlowDiverged(#[source] FlowError),
    #[error("perturbed power flow diverged for pv column {pv_index} (after {retries} half-step retries)")]
    PerturbedFlowDiverged { pv_index: usize, retries: usize },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error("delta_q must be positive, got {0}")]
    BadDeltaQ(f64),
}

/// Builds the matrix with one base solve plus one perturbed solve per PV
/// (M+1 flows). Perturbation direction is toward the available headroom:
/// more absorption by default, flipped to injection when the PV already
/// sits near its absorption limit. Columns are computed in parallel and a
/// diverging column is retried at delta_q/2 before giving up.
pub fn build(
    model: &NetworkModel,
    inj: &InjectionState,
    delta_q: f64,
    opts: &SolverOptions,
) -> Result<SensitivityMatrix, SensitivityError> {
    if !(delta_q > 0.0) {
        return Err(SensitivityError::BadDeltaQ(delta_q));
    }
    let base = powerflow::solve(model, inj, opts).map_err(SensitivityError::BaseFlowDiverged)?;

    let q_max: Vec<f64> = model.pvs().iter().map(|pv| pv.q_max_kvar).collect();
    let columns: Vec<Result<Vec<f64>, SensitivityError>> = (0..model.pv_count())
        .into_par_iter()
        .map(|j| build_column(model, inj, &base, delta_q, q_max[j], j, opts))
        .collect();

    let n = model.node_count();
    let mut entries = vec![vec![0.0; model.pv_count()]; n];
    for (j, col) in columns.into_iter().enumerate() {
        let col = col?;
        for i in 0..n {
            entries[i][j] = col[i];
        }
    }

    Ok(SensitivityMatrix {
        entries,
        base_voltages: base.v_mag_pu.clone(),
        base_q: inj.pv_kvar.clone(),
        delta_q,
    })
}

fn build_column(
    model: &NetworkModel,
    inj: &InjectionState,
    base: &VoltageSolution,
    delta_q: f64,
    q_max: f64,
    j: usize,
    opts: &SolverOptions,
) -> Result<Vec<f64>, SensitivityError> {
    let mut step = delta_q;
    for retry in 0..=DIVERGED_RETRIES {
        // absorption-positive step: subtracts from the injection-positive kvar
        let q0 = inj.pv_kvar[j];
        let dq_abs = if q0 - step >= -q_max { step } else { -step };
        let mut perturbed = inj.clone();
        perturbed.pv_kvar[j] = q0 - dq_abs;

        match powerflow::solve_warm(model, &perturbed, opts, base) {
            Ok(sol) => {
                let col = sol
                    .v_mag_pu
                    .iter()
                    .zip(&base.v_mag_pu)
                    .map(|(v, v0)| (v - v0) / dq_abs)
                    .collect();
                return Ok(col);
            }
            Err(_) if retry < DIVERGED_RETRIES => {
                step /= 2.0;
            }
            Err(_) => break,
        }
    }
    Err(SensitivityError::PerturbedFlowDiverged {
        pv_index: j,
        retries: DIVERGED_RETRIES,
    })
}

/// Linear superposition estimate of the voltage change for a vector of
/// *absorption-positive* reactive steps, p.u. per node.
pub fn predict(sm: &SensitivityMatrix, delta_q_abs: &[f64]) -> Vec<f64> {
    assert_eq!(delta_q_abs.len(), sm.num_pvs(), "delta-q length mismatch");
    sm.entries
        .iter()
        .map(|row| row.iter().zip(delta_q_abs).map(|(s, dq)| s * dq).sum())
        .collect()
}

/// Same-phase restriction of the matrix: rows filtered to nodes of `phase`,
/// columns to single-phase PVs on `phase`. Cross-phase information is
/// discarded -- that loss is the defining property of the zoned variant.
#[derive(Debug, Clone)]
pub struct PhaseSubmatrix {
    pub phase: Phase,
    /// Full-matrix row index per kept row.
    pub node_rows: Vec<usize>,
    /// Full-matrix column (PV index) per kept column.
    pub pv_cols: Vec<usize>,
    pub sm: SensitivityMatrix,
}

pub fn per_phase_submatrices(sm: &SensitivityMatrix, model: &NetworkModel) -> [PhaseSubmatrix; 3] {
    Phase::ALL.map(|phase| {
        let node_rows: Vec<usize> = model
            .node_index()
            .iter()
            .filter(|n| n.phase == phase)
            .map(|n| n.index)
            .collect();
        let pv_cols: Vec<usize> = model
            .pvs()
            .iter()
            .filter(|pv| pv.phase == crate::model::PhaseSpec::Single(phase))
            .map(|pv| pv.index)
            .collect();
        let entries: Vec<Vec<f64>> = node_rows
            .iter()
            .map(|&i| pv_cols.iter().map(|&j| sm.entries[i][j]).collect())
            .collect();
        let base_voltages = node_rows.iter().map(|&i| sm.base_voltages[i]).collect();
        let base_q = pv_cols.iter().map(|&j| sm.base_q[j]).collect();
        PhaseSubmatrix {
            phase,
            node_rows,
            pv_cols,
            sm: SensitivityMatrix {
                entries,
                base_voltages,
                base_q,
                delta_q: sm.delta_q,
            },
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        Bus, LineSegment, LoadPoint, NetworkModel, NetworkParts, PhaseSet, PhaseSpec, PvSystem,
        Zone,
    };
    use num_complex::Complex64;

    fn two_bus_pv() -> (NetworkModel, InjectionState) {
        let p_mpp = 80.0;
        let s = p_mpp / 0.9;
        let parts = NetworkParts {
            buses: vec![
                Bus {
                    id: "src".into(),
                    phases: PhaseSet::single(Phase::A),
                    base_kv: 2.4,
                    zone: Zone::Near,
                },
                Bus {
                    id: "t".into(),
                    phases: PhaseSet::single(Phase::A),
                    base_kv: 2.4,
                    zone: Zone::Far,
                },
            ],
            lines: vec![LineSegment {
                id: "l".into(),
                from_bus: "src".into(),
                to_bus: "t".into(),
                phases: PhaseSet::single(Phase::A),
                z_matrix: vec![vec![Complex64::new(0.8, 1.6)]],
            }],
            loads: vec![LoadPoint {
                id: "ld".into(),
                bus_id: "t".into(),
                phase: PhaseSpec::Single(Phase::A),
                kw_peak: 30.0,
                pf: 0.95,
                profile_id: "load_0".into(),
            }],
            pvs: vec![PvSystem {
                id: "pv".into(),
                bus_id: "t".into(),
                phase: PhaseSpec::Single(Phase::A),
                p_mpp_kw: p_mpp,
                s_rating_kva: s,
                q_max_kvar: (s * s - p_mpp * p_mpp).sqrt(),
                profile_id: "pv_0".into(),
                index: 0,
            }],
            slack_bus: "src".into(),
            slack_voltage_pu: 1.0,
            ..Default::default()
        };
        let model = NetworkModel::new(parts);
        assert!(model.is_valid(), "{:?}", model.validate());
        let mut inj = InjectionState::peak(&model);
        inj.pv_kw[0] = p_mpp;
        (model, inj)
    }

    #[test]
    fn slack_row_is_zero() {
        let (model, inj) = two_bus_pv();
        let sm = build(&model, &inj, 1.0, &SolverOptions::default()).unwrap();
        let slack_row = model.node_position("src", Phase::A).unwrap();
        assert_eq!(sm.entries[slack_row][0], 0.0);
    }

    #[test]
    fn matches_central_difference_magnitude() {
        let (model, inj) = two_bus_pv();
        let opts = SolverOptions {
            tolerance: 1e-10,
            ..SolverOptions::default()
        };
        let sm = build(&model, &inj, 1.0, &opts).unwrap();
        let node = model.node_position("t", Phase::A).unwrap();

        // central difference of the injection-positive derivative
        let delta = 1.0;
        let mut up = inj.clone();
        up.pv_kvar[0] += delta;
        let mut dn = inj.clone();
        dn.pv_kvar[0] -= delta;
        let v_up = powerflow::solve(&model, &up, &opts).unwrap().v_mag_pu[node];
        let v_dn = powerflow::solve(&model, &dn, &opts).unwrap().v_mag_pu[node];
        let central = (v_up - v_dn) / (2.0 * delta);

        // absorption-referenced entry is the negated derivative
        assert!(
            (sm.entries[node][0] + central).abs() < 1e-6,
            "sm {} vs central {central}",
            sm.entries[node][0]
        );
        // own-node entry is negative: absorbing lowers the local voltage
        assert!(sm.entries[node][0] < 0.0);
    }

    #[test]
    fn predict_zero_is_zero() {
        let (model, inj) = two_bus_pv();
        let sm = build(&model, &inj, 1.0, &SolverOptions::default()).unwrap();
        let dv = predict(&sm, &[0.0]);
        assert!(dv.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn predict_round_trips_the_build_perturbation() {
        let (model, inj) = two_bus_pv();
        let opts = SolverOptions::default();
        let delta = 1.0;
        let sm = build(&model, &inj, delta, &opts).unwrap();

        // re-run the exact build perturbation: absorption of delta kVAr
        let mut perturbed = inj.clone();
        perturbed.pv_kvar[0] -= delta;
        let base = powerflow::solve(&model, &inj, &opts).unwrap();
        let resolved = powerflow::solve_warm(&model, &perturbed, &opts, &base).unwrap();

        let dv = predict(&sm, &[delta]);
        for (i, &pred) in dv.iter().enumerate() {
            let actual = resolved.v_mag_pu[i] - base.v_mag_pu[i];
            assert!(
                (pred - actual).abs() < 1e-12,
                "node {i}: predicted {pred}, recorded {actual}"
            );
        }
    }

    #[test]
    fn build_is_deterministic() {
        let (model, inj) = two_bus_pv();
        let a = build(&model, &inj, 1.0, &SolverOptions::default()).unwrap();
        let b = build(&model, &inj, 1.0, &SolverOptions::default()).unwrap();
        assert_eq!(a.entries, b.entries);
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn single_phase_network_restricts_to_phase_a() {
        let (model, inj) = two_bus_pv();
        let sm = build(&model, &inj, 1.0, &SolverOptions::default()).unwrap();
        let [a, b, c] = per_phase_submatrices(&sm, &model);
        assert_eq!(a.sm.entries.len(), 2);
        assert_eq!(a.sm.entries[0].len(), 1);
        assert_eq!(a.sm.entries[1][0], sm.entries[1][0]);
        assert!(b.sm.entries.is_empty() || b.sm.entries.iter().all(|r| r.is_empty()));
        assert!(c.node_rows.is_empty() && c.pv_cols.is_empty());
    }
}
