//! Local (uncoordinated) inverter control policies used as baselines:
//! unity power factor, fixed power factor, and volt-VAr droop.

use serde::{Deserialize, Serialize};

use crate::model::{effective_q_max, NetworkModel};
use crate::powerflow::{self, FlowError, InjectionState, SolverOptions, VoltageSolution};

/// Piecewise-linear volt-VAr curve. Injects q1 * S below v1, holds zero in
/// the deadband [v2, v3], absorbs down to q4 * S above v4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltVarCurve {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v4: f64,
    /// Injection fraction of s_rating at and below v1 (>= 0).
    pub q1: f64,
    /// Absorption fraction of s_rating at and above v4 (<= 0).
    pub q4: f64,
}

impl Default for VoltVarCurve {
    fn default() -> Self {
        // maximum absorption only reached at 1.08 p.u.
        VoltVarCurve {
            v1: 0.92,
            v2: 0.98,
            v3: 1.02,
            v4: 1.08,
            q1: 0.44,
            q4: -0.44,
        }
    }
}

impl VoltVarCurve {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.v1 < self.v2 && self.v2 <= self.v3 && self.v3 < self.v4) {
            return Err(format!(
                "breakpoints must satisfy v1 < v2 <= v3 < v4, got {} {} {} {}",
                self.v1, self.v2, self.v3, self.v4
            ));
        }
        if !(self.q1 >= 0.0 && self.q4 <= 0.0) {
            return Err(format!("need q1 >= 0 >= q4, got q1={} q4={}", self.q1, self.q4));
        }
        Ok(())
    }
}

/// Curve response in kilovars for a PCC voltage and an inverter rating.
pub fn vv_q(curve: &VoltVarCurve, v_pcc: f64, s_rating_kva: f64) -> f64 {
    debug_assert!(v_pcc > 0.0);
    let frac = if v_pcc <= curve.v1 {
        curve.q1
    } else if v_pcc < curve.v2 {
        curve.q1 * (curve.v2 - v_pcc) / (curve.v2 - curve.v1)
    } else if v_pcc <= curve.v3 {
        0.0
    } else if v_pcc < curve.v4 {
        curve.q4 * (v_pcc - curve.v3) / (curve.v4 - curve.v3)
    } else {
        curve.q4
    };
    frac * s_rating_kva
}

/// Inverter operating policy for baseline runs.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlMode {
    /// Active power only, zero reactive.
    UnityPf,
    /// Constant power factor; `absorb` picks the reactive sign.
    FixedPf { pf: f64, absorb: bool },
    /// Local droop on the PCC voltage.
    VoltVar(VoltVarCurve),
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum EquilibriumError {
    #[error("volt-var loop did not settle after {cycles} cycles (max dq {max_dq_kvar} kVAr)")]
    VvOscillation { cycles: usize, max_dq_kvar: f64 },
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Damping factor on Q updates in the volt-VAr fixed-point loop.
pub const VV_DAMPING: f64 = 0.5;
/// Mutual-consistency tolerance: the loop is settled when re-evaluating the
/// curve moves no inverter by more than this.
pub const VV_TOLERANCE_KVAR: f64 = 0.01;
/// Cycle budget before reporting oscillation.
pub const VV_MAX_CYCLES: usize = 50;

/// Solves the power flow with every PV operating under `mode`, iterating to
/// mutual consistency for volt-VAr. Returns the final solution and the
/// injection state actually applied.
pub fn equilibrium_solve(
    model: &NetworkModel,
    base: &InjectionState,
    mode: &ControlMode,
    opts: &SolverOptions,
) -> Result<(VoltageSolution, InjectionState), EquilibriumError> {
    let mut inj = base.clone();
    let q_caps: Vec<f64> = model
        .pvs()
        .iter()
        .map(|pv| effective_q_max(pv).unwrap_or(0.0))
        .collect();

    match mode {
        ControlMode::UnityPf => {
            for q in inj.pv_kvar.iter_mut() {
                *q = 0.0;
            }
            let sol = powerflow::solve(model, &inj, opts)?;
            Ok((sol, inj))
        }
        ControlMode::FixedPf { pf, absorb } => {
            let tan_phi = (1.0 / (pf * pf) - 1.0).max(0.0).sqrt();
            let sign = if *absorb { -1.0 } else { 1.0 };
            for (j, q) in inj.pv_kvar.iter_mut().enumerate() {
                let want = sign * inj.pv_kw[j] * tan_phi;
                *q = want.clamp(-q_caps[j], q_caps[j]);
            }
            let sol = powerflow::solve(model, &inj, opts)?;
            Ok((sol, inj))
        }
        ControlMode::VoltVar(curve) => {
            for q in inj.pv_kvar.iter_mut() {
                *q = 0.0;
            }
            let mut sol = powerflow::solve(model, &inj, opts)?;
            let mut max_dq = f64::INFINITY;
            for _cycle in 0..VV_MAX_CYCLES {
                let targets = vv_targets(model, curve, &sol, &q_caps);
                max_dq = targets
                    .iter()
                    .zip(&inj.pv_kvar)
                    .map(|(t, q)| (t - q).abs())
                    .fold(0.0, f64::max);
                if max_dq < VV_TOLERANCE_KVAR {
                    return Ok((sol, inj));
                }
                for (j, q) in inj.pv_kvar.iter_mut().enumerate() {
                    *q += VV_DAMPING * (targets[j] - *q);
                }
                sol = powerflow::solve_warm(model, &inj, opts, &sol)?;
            }
            Err(EquilibriumError::VvOscillation {
                cycles: VV_MAX_CYCLES,
                max_dq_kvar: max_dq,
            })
        }
    }
}

/// Curve targets per PV at the present voltages, clamped to the reactive
/// headroom of the rating.
fn vv_targets(
    model: &NetworkModel,
    curve: &VoltVarCurve,
    sol: &VoltageSolution,
    q_caps: &[f64],
) -> Vec<f64> {
    model
        .pvs()
        .iter()
        .enumerate()
        .map(|(j, pv)| {
            let v = pcc_voltage(model, sol, j);
            vv_q(curve, v, pv.s_rating_kva).clamp(-q_caps[j], q_caps[j])
        })
        .collect()
}

/// PCC voltage seen by a PV: its phase node, or the mean magnitude over the
/// three phases for three-phase machines.
pub fn pcc_voltage(model: &NetworkModel, sol: &VoltageSolution, pv_index: usize) -> f64 {
    let pv = &model.pvs()[pv_index];
    let phases: Vec<_> = pv.phase.phases().iter().collect();
    let sum: f64 = phases
        .iter()
        .map(|&p| sol.v_mag_pu[model.node_position(&pv.bus_id, p).unwrap()])
        .sum();
    sum / phases.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deadband_yields_zero() {
        let c = VoltVarCurve::default();
        assert_eq!(vv_q(&c, 1.00, 11.111), 0.0);
        assert_eq!(vv_q(&c, 0.98, 11.111), 0.0);
        assert_eq!(vv_q(&c, 1.02, 11.111), 0.0);
    }

    #[test]
    fn max_absorption_at_1_08() {
        let c = VoltVarCurve::default();
        let q = vv_q(&c, 1.08, 10.0);
        assert!((q - (-4.4)).abs() < 1e-12, "{q}");
        // and saturates beyond
        assert_eq!(vv_q(&c, 1.10, 10.0), q);
    }

    #[test]
    fn midpoint_is_linear() {
        let c = VoltVarCurve {
            v3: 1.02,
            v4: 1.08,
            q4: -0.44,
            ..VoltVarCurve::default()
        };
        let q = vv_q(&c, 1.05, 1.0);
        assert!((q - (-0.22)).abs() < 1e-12, "{q}");
    }

    #[test]
    fn curve_is_monotone_and_bounded() {
        let c = VoltVarCurve::default();
        let mut prev = f64::INFINITY;
        let s = 7.5;
        for i in 0..=600 {
            let v = 0.85 + i as f64 * 0.0005;
            let q = vv_q(&c, v, s);
            assert!(q <= prev + 1e-12, "not non-increasing at v={v}");
            assert!(q <= c.q1 * s + 1e-12 && q >= c.q4 * s - 1e-12);
            prev = q;
        }
    }

    #[test]
    fn curve_validation() {
        let mut c = VoltVarCurve::default();
        assert!(c.validate().is_ok());
        c.v2 = 0.9;
        assert!(c.validate().is_err());
    }
}
