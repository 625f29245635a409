//! Reference implementations used as independent oracles by the voltq test
//! suites. Nothing here shares code with the production solvers.

pub mod feedergen;
pub mod newton;
pub mod vertex;

use num_complex::Complex64;
use voltq_core::model::{NetworkModel, Phase};
use voltq_core::powerflow::{InjectionState, VoltageSolution};

/// Closed-form |V2| of the single-phase two-bus feeder: the high-voltage
/// root of u^2 + (2(PR+QX) - 1)u + (P^2+Q^2)(R^2+X^2) = 0 with u = |V2|^2,
/// everything in per unit and V1 = 1.
pub fn two_bus_voltage(p: f64, q: f64, r: f64, x: f64) -> f64 {
    let b = 2.0 * (p * r + q * x) - 1.0;
    let c = (p * p + q * q) * (r * r + x * x);
    let disc = b * b - 4.0 * c;
    assert!(disc >= 0.0, "two-bus case has no real solution");
    ((-b + disc.sqrt()) / 2.0).sqrt()
}

/// Independent power ledger of a converged solution, all in kW/kVAr.
/// Near-zero residual iff the solution satisfies nodal power balance.
#[derive(Debug, Clone, Copy)]
pub struct PowerLedger {
    pub slack_kw: f64,
    pub slack_kvar: f64,
    pub load_kw: f64,
    pub load_kvar: f64,
    pub pv_kw: f64,
    pub pv_kvar: f64,
    pub cap_kvar: f64,
    pub loss_kw: f64,
    pub loss_kvar: f64,
}

impl PowerLedger {
    /// Residual of slack + pv + cap - load - loss, complex kVA.
    pub fn residual(&self) -> Complex64 {
        Complex64::new(
            self.slack_kw + self.pv_kw - self.load_kw - self.loss_kw,
            self.slack_kvar + self.pv_kvar + self.cap_kvar - self.load_kvar - self.loss_kvar,
        )
    }
}

fn line_admittance(line: &voltq_core::model::LineSegment) -> nalgebra::DMatrix<Complex64> {
    let k = line.phases.len();
    let mut z = nalgebra::DMatrix::<Complex64>::zeros(k, k);
    for r in 0..k {
        for c in 0..k {
            z[(r, c)] = line.z_matrix[r][c];
        }
    }
    z.try_inverse().expect("singular line matrix")
}

/// Recomputes every term of the power balance from the voltage solution and
/// the model, independently of the sweep's internal bookkeeping. Line flows
/// come from inverting each segment's impedance matrix directly. The slack
/// infeed is taken from the flows on the slack bus's own series elements, so
/// a slack bus feeding directly through a regulator is not supported.
pub fn power_ledger(
    model: &NetworkModel,
    inj: &InjectionState,
    sol: &VoltageSolution,
) -> PowerLedger {
    let node_of = |bus: &str, p: Phase| model.node_position(bus, p).unwrap();
    let volts = |bus: &str, p: Phase| -> Complex64 {
        let base = model.bus(bus).unwrap().base_kv * 1000.0;
        sol.v_complex[node_of(bus, p)] * base
    };

    let load_kw: f64 = inj.load_kw.iter().sum();
    let load_kvar: f64 = inj.load_kvar.iter().sum();
    let pv_kw: f64 = inj.pv_kw.iter().sum();
    let pv_kvar: f64 = inj.pv_kvar.iter().sum();

    let mut cap_kvar = 0.0;
    for (ci, cap) in model.capacitors().iter().enumerate() {
        if !inj.cap_on[ci] {
            continue;
        }
        for p in cap.phases.iter() {
            let n = node_of(&cap.bus_id, p);
            cap_kvar += cap.kvar_per_phase * sol.v_mag_pu[n] * sol.v_mag_pu[n];
        }
    }

    // series losses; ideal regulators are lossless by construction
    let mut loss = Complex64::new(0.0, 0.0);
    for line in model.lines() {
        let phases: Vec<Phase> = line.phases.iter().collect();
        let y = line_admittance(line);
        let vf: Vec<Complex64> = phases.iter().map(|&p| volts(&line.from_bus, p)).collect();
        let vt: Vec<Complex64> = phases.iter().map(|&p| volts(&line.to_bus, p)).collect();
        for r in 0..phases.len() {
            let mut i = Complex64::new(0.0, 0.0);
            for c in 0..phases.len() {
                i += y[(r, c)] * (vf[c] - vt[c]);
            }
            loss += (vf[r] - vt[r]) * i.conj();
        }
    }

    let slack_id = model.slack_bus();
    let mut slack = Complex64::new(0.0, 0.0);
    for line in model.lines() {
        let from_here = if line.from_bus == slack_id {
            true
        } else if line.to_bus == slack_id {
            false
        } else {
            continue;
        };
        let phases: Vec<Phase> = line.phases.iter().collect();
        let y = line_admittance(line);
        let vf: Vec<Complex64> = phases.iter().map(|&p| volts(&line.from_bus, p)).collect();
        let vt: Vec<Complex64> = phases.iter().map(|&p| volts(&line.to_bus, p)).collect();
        for r in 0..phases.len() {
            let mut i = Complex64::new(0.0, 0.0);
            for c in 0..phases.len() {
                i += y[(r, c)] * (vf[c] - vt[c]);
            }
            slack += if from_here {
                vf[r] * i.conj()
            } else {
                vt[r] * (-i).conj()
            };
        }
    }
    for reg in model.regulators() {
        assert!(
            reg.from_bus != slack_id && reg.to_bus != slack_id,
            "power_ledger does not support a slack bus feeding through a regulator"
        );
    }

    // equipment on the slack bus itself is part of the slack-side flow
    for (l, load) in model.loads().iter().enumerate() {
        if load.bus_id == slack_id {
            slack += Complex64::new(inj.load_kw[l], inj.load_kvar[l]) * 1e3;
        }
    }
    for (j, pv) in model.pvs().iter().enumerate() {
        if pv.bus_id == slack_id {
            slack -= Complex64::new(inj.pv_kw[j], inj.pv_kvar[j]) * 1e3;
        }
    }

    PowerLedger {
        slack_kw: slack.re / 1e3,
        slack_kvar: slack.im / 1e3,
        load_kw,
        load_kvar,
        pv_kw,
        pv_kvar,
        cap_kvar,
        loss_kw: loss.re / 1e3,
        loss_kvar: loss.im / 1e3,
    }
}
