//! Plot-ready CSV and JSON outputs. Every writer is deterministic: fixed
//! headers, fixed row order, and a positional significant-digit formatter,
//! so identical runs emit byte-identical files.

use std::fmt::Write as _;

use crate::coordinator::{DispatchResult, ZonedDispatchResult};
use crate::model::NetworkModel;
use crate::powerflow::VoltageSolution;
use crate::sensitivity::SensitivityMatrix;

/// Formats with `sig` significant digits in plain positional notation.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (sig as i32 - 1 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Voltage dump: `bus,phase,vmag_pu,vang_deg`, one row per phase node in
/// node-index order, 9 significant digits.
pub fn voltage_csv(model: &NetworkModel, sol: &VoltageSolution) -> String {
    let mut out = String::from("bus,phase,vmag_pu,vang_deg\n");
    for node in model.node_index() {
        let v = sol.v_complex[node.index];
        writeln!(
            out,
            "{},{},{},{}",
            node.bus_id,
            node.phase,
            fmt_sig(sol.v_mag_pu[node.index], 9),
            fmt_sig(v.arg().to_degrees(), 9),
        )
        .unwrap();
    }
    out
}

/// Sensitivity dump: rows are phase nodes, columns the PV ids, entries in
/// p.u. per kVAr of absorption, 6 significant digits.
pub fn sensitivity_csv(model: &NetworkModel, sm: &SensitivityMatrix) -> String {
    let mut out = String::from("bus,phase");
    for pv in model.pvs() {
        write!(out, ",{}", pv.id).unwrap();
    }
    out.push('\n');
    for node in model.node_index() {
        write!(out, "{},{}", node.bus_id, node.phase).unwrap();
        for j in 0..sm.num_pvs() {
            write!(out, ",{}", fmt_sig(sm.entries[node.index][j], 6)).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Per-iteration dispatch trace:
/// `iteration,violations,max_vpu,min_vpu,total_abs_q_kvar,lp_status`.
pub fn trace_csv(result: &DispatchResult) -> String {
    let mut out = String::from("iteration,violations,max_vpu,min_vpu,total_abs_q_kvar,lp_status\n");
    for rec in &result.final_state.history {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            rec.iteration,
            rec.violations,
            fmt_sig(rec.max_vpu, 9),
            fmt_sig(rec.min_vpu, 9),
            fmt_sig(rec.total_abs_q_kvar, 9),
            rec.lp_status.as_deref().unwrap_or("-"),
        )
        .unwrap();
    }
    out
}

/// Final reactive setpoints: `pv,bus,phase,q_kvar,q_max_kvar`.
pub fn dispatch_csv(model: &NetworkModel, result: &DispatchResult) -> String {
    let mut out = String::from("pv,bus,phase,q_kvar,q_max_kvar\n");
    for (j, pv) in model.pvs().iter().enumerate() {
        let phase = match pv.phase {
            crate::model::PhaseSpec::Single(p) => p.to_string(),
            crate::model::PhaseSpec::ThreePhase => "ABC".to_string(),
        };
        writeln!(
            out,
            "{},{},{},{},{}",
            pv.id,
            pv.bus_id,
            phase,
            fmt_sig(result.final_state.q[j], 9),
            fmt_sig(pv.q_max_kvar, 9),
        )
        .unwrap();
    }
    out
}

/// Side-by-side zoned-vs-full comparison:
/// `pv,bus,phase,q_zoned_kvar,q_full_kvar,divergence_kvar`.
pub fn zoned_divergence_csv(
    model: &NetworkModel,
    zoned: &ZonedDispatchResult,
    full: &DispatchResult,
) -> String {
    let mut out = String::from("pv,bus,phase,q_zoned_kvar,q_full_kvar,divergence_kvar\n");
    for (j, pv) in model.pvs().iter().enumerate() {
        let phase = match pv.phase {
            crate::model::PhaseSpec::Single(p) => p.to_string(),
            crate::model::PhaseSpec::ThreePhase => "ABC".to_string(),
        };
        let qz = zoned.combined_q[j];
        let qf = full.final_state.q[j];
        writeln!(
            out,
            "{},{},{},{},{},{}",
            pv.id,
            pv.bus_id,
            phase,
            fmt_sig(qz, 9),
            fmt_sig(qf, 9),
            fmt_sig(qz - qf, 9),
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig_digit_formatting() {
        assert_eq!(fmt_sig(1.0456789123, 9), "1.04567891");
        assert_eq!(fmt_sig(-120.123456789, 9), "-120.123457");
        assert_eq!(fmt_sig(0.0, 9), "0");
        assert_eq!(fmt_sig(0.00012345678, 6), "0.000123457");
        assert_eq!(fmt_sig(1.0, 9), "1.00000000");
        assert_eq!(fmt_sig(123456.0, 3), "123456");
    }

    #[test]
    fn sig_digits_round_not_truncate() {
        assert_eq!(fmt_sig(1.99999999999, 6), "2.00000");
    }
}
