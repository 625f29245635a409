//! Independent Newton-Raphson reference solver for the full complex
//! nodal-injection equations.
//!
//! Deliberately shares nothing with the production sweep: the network is
//! assembled as a nodal admittance system (regulators as ideal ratio
//! branches with explicit current unknowns), the mismatch is iterated with
//! a finite-difference Jacobian in real variables, and the linear steps go
//! through nalgebra's LU. Slow and simple on purpose.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use voltq_core::model::{NetworkModel, Phase, RegPhase};
use voltq_core::powerflow::InjectionState;

#[derive(Debug)]
pub struct NewtonSolution {
    /// Complex p.u. voltage per phase node, in node-index order.
    pub v_complex: Vec<Complex64>,
    pub v_mag_pu: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum NewtonError {
    #[error("model invalid: {0}")]
    Model(String),
    #[error("newton iteration did not converge (residual {residual})")]
    NoConvergence { residual: f64 },
    #[error("singular jacobian")]
    Singular,
}

struct System {
    /// node count
    n: usize,
    /// regulator branch-current unknowns
    t: usize,
    y: DMatrix<Complex64>,
    /// (primary node, secondary node, total ratio) per regulator phase
    regs: Vec<(usize, usize, f64)>,
    /// constant-power absorbed VA per node (loads - PVs), at unit scale
    s_const: Vec<Complex64>,
    /// shunt susceptance per node (capacitors), siemens
    b_shunt: Vec<f64>,
    slack: Vec<(usize, Complex64)>,
    base_v: Vec<f64>,
}

fn phase_rot(p: Phase) -> Complex64 {
    Complex64::from_polar(1.0, p.nominal_angle())
}

fn assemble(model: &NetworkModel, inj: &InjectionState) -> Result<System, NewtonError> {
    if !model.is_valid() {
        return Err(NewtonError::Model(format!("{:?}", model.validate())));
    }
    let nodes = model.node_index();
    let n = nodes.len();
    let pos: HashMap<(String, Phase), usize> = nodes
        .iter()
        .map(|nd| ((nd.bus_id.clone(), nd.phase), nd.index))
        .collect();
    let node_of = |bus: &str, p: Phase| pos[&(bus.to_string(), p)];

    let base_v: Vec<f64> = nodes
        .iter()
        .map(|nd| model.bus(&nd.bus_id).unwrap().base_kv * 1000.0)
        .collect();

    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for line in model.lines() {
        let phases: Vec<Phase> = line.phases.iter().collect();
        let k = phases.len();
        let mut z = DMatrix::<Complex64>::zeros(k, k);
        for r in 0..k {
            for c in 0..k {
                z[(r, c)] = line.z_matrix[r][c];
            }
        }
        let yb = z.try_inverse().ok_or(NewtonError::Singular)?;
        let from: Vec<usize> = phases.iter().map(|&p| node_of(&line.from_bus, p)).collect();
        let to: Vec<usize> = phases.iter().map(|&p| node_of(&line.to_bus, p)).collect();
        for r in 0..k {
            for c in 0..k {
                y[(from[r], from[c])] += yb[(r, c)];
                y[(to[r], to[c])] += yb[(r, c)];
                y[(from[r], to[c])] -= yb[(r, c)];
                y[(to[r], from[c])] -= yb[(r, c)];
            }
        }
    }

    let mut b_shunt = vec![0.0; n];
    for (ci, cap) in model.capacitors().iter().enumerate() {
        if !inj.cap_on[ci] {
            continue;
        }
        for p in cap.phases.iter() {
            let ni = node_of(&cap.bus_id, p);
            b_shunt[ni] += cap.kvar_per_phase * 1000.0 / (base_v[ni] * base_v[ni]);
        }
    }

    let mut regs = Vec::new();
    for reg in model.regulators() {
        let from_bus = model.bus(&reg.from_bus).unwrap();
        let to_bus = model.bus(&reg.to_bus).unwrap();
        let base_ratio = to_bus.base_kv / from_bus.base_kv;
        for p in from_bus.phases.intersect(to_bus.phases).iter() {
            let regulated = match reg.phase {
                RegPhase::Gang => true,
                RegPhase::Single(rp) => rp == p,
            };
            let tap = if regulated { reg.tap_ratio } else { 1.0 };
            regs.push((
                node_of(&reg.from_bus, p),
                node_of(&reg.to_bus, p),
                tap * base_ratio,
            ));
        }
    }

    let mut s_const = vec![Complex64::new(0.0, 0.0); n];
    for (li, load) in model.loads().iter().enumerate() {
        let phases: Vec<Phase> = load.phase.phases().iter().collect();
        let share = 1.0 / phases.len() as f64;
        for &p in &phases {
            s_const[node_of(&load.bus_id, p)] +=
                Complex64::new(inj.load_kw[li], inj.load_kvar[li]) * 1e3 * share;
        }
    }
    for (ji, pv) in model.pvs().iter().enumerate() {
        let phases: Vec<Phase> = pv.phase.phases().iter().collect();
        let share = 1.0 / phases.len() as f64;
        for &p in &phases {
            s_const[node_of(&pv.bus_id, p)] -=
                Complex64::new(inj.pv_kw[ji], inj.pv_kvar[ji]) * 1e3 * share;
        }
    }

    let slack_bus = model.bus(model.slack_bus()).unwrap();
    let slack = slack_bus
        .phases
        .iter()
        .map(|p| {
            let ni = node_of(&slack_bus.id, p);
            (
                ni,
                phase_rot(p) * (model.slack_voltage_pu() * base_v[ni]),
            )
        })
        .collect();

    Ok(System {
        n,
        t: regs.len(),
        y,
        regs,
        s_const,
        b_shunt,
        slack,
        base_v,
    })
}

impl System {
    fn unknown_count(&self) -> usize {
        2 * (self.n + self.t)
    }

    fn decode(&self, x: &DVector<f64>) -> (Vec<Complex64>, Vec<Complex64>) {
        let v: Vec<Complex64> = (0..self.n)
            .map(|i| Complex64::new(x[2 * i], x[2 * i + 1]))
            .collect();
        let it: Vec<Complex64> = (0..self.t)
            .map(|k| Complex64::new(x[2 * self.n + 2 * k], x[2 * self.n + 2 * k + 1]))
            .collect();
        (v, it)
    }

    /// Residual of the full real system: KCL per non-slack node, fixed
    /// voltage per slack node, ratio constraint per regulator phase.
    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let (v, it) = self.decode(x);
        let mut kcl: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); self.n];

        for i in 0..self.n {
            let mut sum = Complex64::new(0.0, 0.0);
            for j in 0..self.n {
                let yij = self.y[(i, j)];
                if yij != Complex64::new(0.0, 0.0) {
                    sum += yij * v[j];
                }
            }
            // shunt current plus constant-power draw, minus nothing injected
            let i_cp = if v[i].norm_sqr() > 1e-12 {
                (self.s_const[i] / v[i]).conj()
            } else {
                Complex64::new(0.0, 0.0)
            };
            kcl[i] = sum + Complex64::new(0.0, self.b_shunt[i]) * v[i] + i_cp;
        }
        // regulator branch currents: I_t into secondary, a*I_t out of primary
        for (k, &(p, s, a)) in self.regs.iter().enumerate() {
            kcl[s] -= it[k];
            kcl[p] += it[k] * a;
        }

        let mut f = DVector::<f64>::zeros(self.unknown_count());
        // current-scale normalization keeps entries O(1)
        let i_scale: Vec<f64> = self.base_v.iter().map(|bv| 1e5 / bv).collect();
        for i in 0..self.n {
            f[2 * i] = kcl[i].re / i_scale[i];
            f[2 * i + 1] = kcl[i].im / i_scale[i];
        }
        for &(ni, vs) in &self.slack {
            f[2 * ni] = (v[ni] - vs).re / self.base_v[ni];
            f[2 * ni + 1] = (v[ni] - vs).im / self.base_v[ni];
        }
        for (k, &(p, s, a)) in self.regs.iter().enumerate() {
            let c = v[s] - v[p] * a;
            f[2 * self.n + 2 * k] = c.re / self.base_v[s];
            f[2 * self.n + 2 * k + 1] = c.im / self.base_v[s];
        }
        f
    }
}

/// Solves the nodal equations by damped Newton with a finite-difference
/// Jacobian, from a flat start.
pub fn solve_newton(
    model: &NetworkModel,
    inj: &InjectionState,
    tol: f64,
    max_iter: usize,
) -> Result<NewtonSolution, NewtonError> {
    let sys = assemble(model, inj)?;
    let m = sys.unknown_count();

    let mut x = DVector::<f64>::zeros(m);
    for (i, node) in model.node_index().iter().enumerate() {
        let v = phase_rot(node.phase) * (model.slack_voltage_pu() * sys.base_v[i]);
        x[2 * i] = v.re;
        x[2 * i + 1] = v.im;
    }
    // regulator currents start at zero

    let mut f = sys.residual(&x);
    for iter in 1..=max_iter {
        let norm = f.amax();
        if norm < tol {
            let (v, _) = sys.decode(&x);
            let v_complex: Vec<Complex64> = v
                .iter()
                .zip(&sys.base_v)
                .map(|(vi, bv)| vi / bv)
                .collect();
            let v_mag_pu = v_complex.iter().map(|v| v.norm()).collect();
            return Ok(NewtonSolution {
                v_complex,
                v_mag_pu,
                iterations: iter - 1,
            });
        }

        // forward-difference Jacobian, column by column
        let mut jac = DMatrix::<f64>::zeros(m, m);
        for col in 0..m {
            let scale = x[col].abs().max(sys.base_v[(col / 2).min(sys.n - 1)]);
            let h = 1e-7 * scale;
            let mut xp = x.clone();
            xp[col] += h;
            let fp = sys.residual(&xp);
            for row in 0..m {
                jac[(row, col)] = (fp[row] - f[row]) / h;
            }
        }

        let lu = jac.lu();
        let step = lu.solve(&(-&f)).ok_or(NewtonError::Singular)?;

        // backtracking keeps the iteration from overshooting on stiff cases
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..6 {
            let xn = &x + &step * alpha;
            let fn_ = sys.residual(&xn);
            if fn_.amax() < f.amax() || alpha < 0.05 {
                x = xn;
                f = fn_;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            x += &step;
            f = sys.residual(&x);
        }
    }

    Err(NewtonError::NoConvergence { residual: f.amax() })
}
