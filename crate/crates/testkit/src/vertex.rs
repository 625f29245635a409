//! Brute-force LP oracle: enumerate candidate vertices of the feasible
//! polytope (all n-subsets of constraint/bound hyperplanes), keep the
//! feasible ones, take the best objective. Exponential and only suitable
//! for the tiny instances used in tests.

use nalgebra::{DMatrix, DVector};
use voltq_core::lp::{LinearProgram, Relation};

#[derive(Debug, Clone, PartialEq)]
pub enum VertexOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
}

const FEAS_TOL: f64 = 1e-7;

fn feasible(lp: &LinearProgram, x: &[f64]) -> bool {
    for (coeffs, rel, rhs) in &lp.constraints {
        let lhs: f64 = coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        let ok = match rel {
            Relation::Le => lhs <= rhs + FEAS_TOL,
            Relation::Ge => lhs >= rhs - FEAS_TOL,
            Relation::Eq => (lhs - rhs).abs() <= FEAS_TOL,
        };
        if !ok {
            return false;
        }
    }
    for (k, &(lo, hi)) in lp.variable_bounds.iter().enumerate() {
        if x[k] < lo - FEAS_TOL || x[k] > hi + FEAS_TOL {
            return false;
        }
    }
    true
}

/// Solves min c'x over the LP by vertex enumeration. Bounds must be finite
/// (the polytope has to be a bounded box intersection for this to be sound).
pub fn solve_by_vertex_enumeration(lp: &LinearProgram) -> VertexOutcome {
    let n = lp.objective.len();
    assert!(
        lp.variable_bounds
            .iter()
            .all(|&(lo, hi)| lo.is_finite() && hi.is_finite()),
        "vertex enumeration needs finite bounds"
    );

    // hyperplane list: every constraint as equality, then both bound faces
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for (coeffs, _, rhs) in &lp.constraints {
        planes.push((coeffs.clone(), *rhs));
    }
    for (k, &(lo, hi)) in lp.variable_bounds.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        planes.push((e.clone(), lo));
        planes.push((e, hi));
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut subset: Vec<usize> = (0..n).collect();

    // iterate over all n-combinations of plane indices
    loop {
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for (row, &pi) in subset.iter().enumerate() {
            for col in 0..n {
                a[(row, col)] = planes[pi].0[col];
            }
            b[row] = planes[pi].1;
        }
        if let Some(x) = a.clone().lu().solve(&b) {
            // reject spurious solutions of near-singular systems
            let residual = (&a * &x - &b).amax();
            if residual < 1e-6 {
                let xv: Vec<f64> = x.iter().copied().collect();
                if xv.iter().all(|v| v.is_finite()) && feasible(lp, &xv) {
                    let obj: f64 = lp.objective.iter().zip(&xv).map(|(c, v)| c * v).sum();
                    if best.as_ref().map_or(true, |(_, bo)| obj < *bo) {
                        best = Some((xv, obj));
                    }
                }
            }
        }

        // next combination in lexicographic order
        let total = planes.len();
        let mut i = n;
        loop {
            if i == 0 {
                return match best {
                    Some((x, objective)) => VertexOutcome::Optimal { x, objective },
                    None => VertexOutcome::Infeasible,
                };
            }
            i -= 1;
            if subset[i] != i + total - n {
                subset[i] += 1;
                for j in (i + 1)..n {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}
