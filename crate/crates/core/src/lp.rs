//! Self-contained dense linear-program solver: two-phase primal simplex
//! with Bland's rule. No external solver dependency; instance sizes here
//! are hundreds of rows at most, so a dense tableau is the right tool and
//! gives exact vertex answers for oracle comparison.

/// Feasibility tolerance: a point is accepted as feasible when every
/// constraint holds to within this slack. Sensitivity entries are around
/// 1e-4 p.u./kVAr, so dispatch needs tight LP tolerances.
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Optimality tolerance on reduced costs.
pub const OPTIMALITY_TOL: f64 = 1e-9;
/// Pivots smaller than this are numerical breakdown, not progress.
pub const PIVOT_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl std::fmt::Display for Relation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

/// Minimization problem: min c'x subject to row constraints and per-variable
/// bounds (either side may be infinite).
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<(Vec<f64>, Relation, f64)>,
    pub variable_bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn well_formed(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.variable_bounds.len() != n {
            return Err(LpError::Malformed("bounds length != variable count".into()));
        }
        for (coeffs, _, rhs) in &self.constraints {
            if coeffs.len() != n {
                return Err(LpError::Malformed("row length != variable count".into()));
            }
            if coeffs.iter().any(|v| !v.is_finite()) || !rhs.is_finite() {
                return Err(LpError::Malformed("non-finite coefficient".into()));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(LpError::Malformed("non-finite objective".into()));
        }
        for &(lo, hi) in &self.variable_bounds {
            if lo > hi {
                return Err(LpError::Malformed(format!("bound lo {lo} > hi {hi}")));
            }
        }
        Ok(())
    }

    /// Plain-text dump in a fixed format (objective / rows / bounds) for
    /// offline cross-checking.
    pub fn debug_dump(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        write!(s, "min").unwrap();
        for c in &self.objective {
            write!(s, " {c:.12e}").unwrap();
        }
        s.push('\n');
        for (coeffs, rel, rhs) in &self.constraints {
            write!(s, "row").unwrap();
            for c in coeffs {
                write!(s, " {c:.12e}").unwrap();
            }
            writeln!(s, " {rel} {rhs:.12e}").unwrap();
        }
        for &(lo, hi) in &self.variable_bounds {
            writeln!(s, "bound {lo:.12e} {hi:.12e}").unwrap();
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Variable values in the original space; empty unless Optimal.
    pub x: Vec<f64>,
    pub objective_value: f64,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum LpError {
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("malformed program: {0}")]
    Malformed(String),
}

// Standard-form variable provenance, for mapping solutions back.
#[derive(Debug, Clone, Copy)]
enum VarOrigin {
    /// x_std = original shifted by lo: orig = lo + x_std
    Shifted { orig: usize, lo: f64 },
    /// x_std mirrors below a finite upper bound: orig = hi - x_std
    Mirrored { orig: usize, hi: f64 },
    /// positive part of a free variable
    FreePos { orig: usize },
    /// negative part of a free variable
    FreeNeg { orig: usize },
    Slack,
    Artificial,
}

struct Tableau {
    /// m rows of length n_total + 1; the last column is the rhs.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    origins: Vec<VarOrigin>,
    artificial_start: usize,
}

impl Tableau {
    fn n_total(&self) -> usize {
        self.rows[0].len() - 1
    }

    fn x_std(&self) -> Vec<f64> {
        let rhs = self.n_total();
        let mut x = vec![0.0; rhs];
        for (i, &b) in self.basis.iter().enumerate() {
            x[b] = self.rows[i][rhs];
        }
        x
    }
}

/// Optimality evidence in standard form: the primal point and the final
/// reduced costs (the dual slacks c - A'y). Used by the complementary
/// slackness checks in the test suite.
#[cfg_attr(not(test), allow(dead_code))]
struct Certificate {
    x_std: Vec<f64>,
    reduced_costs: Vec<f64>,
    /// Columns at and past this index are artificials: excluded from phase 2
    /// and from dual-feasibility claims.
    artificial_start: usize,
}

/// Solves the program. Deterministic: Bland's rule fixes the pivot order.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_with_certificate(lp).map(|(s, _)| s)
}

fn solve_with_certificate(
    lp: &LinearProgram,
) -> Result<(LpSolution, Option<Certificate>), LpError> {
    lp.well_formed()?;
    let n = lp.num_vars();

    // --- standardize variables ---
    let mut origins: Vec<VarOrigin> = Vec::new();
    let mut col_of_orig: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, &(lo, hi)) in lp.variable_bounds.iter().enumerate() {
        match (lo.is_finite(), hi.is_finite()) {
            (true, _) => {
                col_of_orig[k].push(origins.len());
                origins.push(VarOrigin::Shifted { orig: k, lo });
            }
            (false, true) => {
                col_of_orig[k].push(origins.len());
                origins.push(VarOrigin::Mirrored { orig: k, hi });
            }
            (false, false) => {
                col_of_orig[k].push(origins.len());
                origins.push(VarOrigin::FreePos { orig: k });
                col_of_orig[k].push(origins.len());
                origins.push(VarOrigin::FreeNeg { orig: k });
            }
        }
    }
    let n_structural = origins.len();

    struct StdRow {
        coeffs: Vec<f64>,
        rel: Relation,
        rhs: f64,
    }
    let mut std_rows: Vec<StdRow> = Vec::new();

    let project = |coeffs: &[f64], rhs: f64| -> (Vec<f64>, f64) {
        let mut row = vec![0.0; n_structural];
        let mut b = rhs;
        for (k, &a) in coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for &col in &col_of_orig[k] {
                match origins[col] {
                    VarOrigin::Shifted { lo, .. } => {
                        row[col] += a;
                        b -= a * lo;
                    }
                    VarOrigin::Mirrored { hi, .. } => {
                        row[col] -= a;
                        b -= a * hi;
                    }
                    VarOrigin::FreePos { .. } => row[col] += a,
                    VarOrigin::FreeNeg { .. } => row[col] -= a,
                    _ => unreachable!(),
                }
            }
        }
        (row, b)
    };

    for (coeffs, rel, rhs) in &lp.constraints {
        let (row, b) = project(coeffs, *rhs);
        std_rows.push(StdRow {
            coeffs: row,
            rel: *rel,
            rhs: b,
        });
    }
    // doubly-bounded variables get an explicit upper-bound row in shifted form
    for (k, &(lo, hi)) in lp.variable_bounds.iter().enumerate() {
        if lo.is_finite() && hi.is_finite() {
            let mut coeffs = vec![0.0; n_structural];
            coeffs[col_of_orig[k][0]] = 1.0;
            std_rows.push(StdRow {
                coeffs,
                rel: if hi > lo { Relation::Le } else { Relation::Eq },
                rhs: hi - lo,
            });
        }
    }

    // flip rows to non-negative rhs
    for r in std_rows.iter_mut() {
        if r.rhs < 0.0 {
            for a in r.coeffs.iter_mut() {
                *a = -*a;
            }
            r.rhs = -r.rhs;
            r.rel = match r.rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
    }

    // --- tableau with slacks and artificials ---
    let m = std_rows.len();
    let mut n_total = n_structural;
    let mut slack_col: Vec<Option<(usize, f64)>> = vec![None; m];
    for (i, r) in std_rows.iter().enumerate() {
        match r.rel {
            Relation::Le => {
                slack_col[i] = Some((n_total, 1.0));
                n_total += 1;
            }
            Relation::Ge => {
                slack_col[i] = Some((n_total, -1.0));
                n_total += 1;
            }
            Relation::Eq => {}
        }
    }
    let artificial_start = n_total;
    let mut art_col: Vec<Option<usize>> = vec![None; m];
    for (i, r) in std_rows.iter().enumerate() {
        // <= rows start with their slack basic; = and >= need an artificial
        if !matches!(r.rel, Relation::Le) {
            art_col[i] = Some(n_total);
            n_total += 1;
        }
    }

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut basis = vec![0usize; m];
    let mut all_origins = origins;
    all_origins.resize(n_total, VarOrigin::Slack);
    for col in artificial_start..n_total {
        all_origins[col] = VarOrigin::Artificial;
    }

    for (i, r) in std_rows.iter().enumerate() {
        let mut row = vec![0.0; n_total + 1];
        row[..n_structural].copy_from_slice(&r.coeffs);
        if let Some((c, sign)) = slack_col[i] {
            row[c] = sign;
        }
        if let Some(c) = art_col[i] {
            row[c] = 1.0;
        }
        row[n_total] = r.rhs;
        basis[i] = match (art_col[i], slack_col[i]) {
            (Some(c), _) => c,
            (None, Some((c, _))) => c,
            (None, None) => unreachable!("every relation introduces a unit column"),
        };
        rows.push(row);
    }

    let mut tab = Tableau {
        rows,
        basis,
        origins: all_origins,
        artificial_start,
    };

    // --- phase 1: minimize the artificial sum ---
    if artificial_start < n_total {
        let mut cost = vec![0.0; n_total];
        for c in cost.iter_mut().skip(artificial_start) {
            *c = 1.0;
        }
        let status = simplex_iterate(&mut tab, &cost, true)?;
        debug_assert!(status != LpStatus::Unbounded, "phase 1 is bounded below");
        let phase1_obj = objective_of(&tab, &cost);
        if phase1_obj > FEASIBILITY_TOL {
            return Ok((
                LpSolution {
                    status: LpStatus::Infeasible,
                    x: Vec::new(),
                    objective_value: f64::NAN,
                },
                None,
            ));
        }
        drive_out_artificials(&mut tab);
    }

    // --- phase 2: original objective over the standard variables ---
    let mut cost = vec![0.0; tab.n_total()];
    for (col, origin) in tab.origins.iter().enumerate() {
        match *origin {
            VarOrigin::Shifted { orig, .. } => cost[col] += lp.objective[orig],
            VarOrigin::Mirrored { orig, .. } => cost[col] -= lp.objective[orig],
            VarOrigin::FreePos { orig } => cost[col] += lp.objective[orig],
            VarOrigin::FreeNeg { orig } => cost[col] -= lp.objective[orig],
            _ => {}
        }
    }
    let status = simplex_iterate(&mut tab, &cost, false)?;
    if status == LpStatus::Unbounded {
        return Ok((
            LpSolution {
                status,
                x: Vec::new(),
                objective_value: f64::NEG_INFINITY,
            },
            None,
        ));
    }

    // --- recover original variables ---
    let x_std = tab.x_std();
    let mut x = vec![0.0; n];
    for (col, origin) in tab.origins.iter().enumerate() {
        match *origin {
            VarOrigin::Shifted { orig, lo } => x[orig] = lo + x_std[col],
            VarOrigin::Mirrored { orig, hi } => x[orig] = hi - x_std[col],
            VarOrigin::FreePos { orig } => x[orig] += x_std[col],
            VarOrigin::FreeNeg { orig } => x[orig] -= x_std[col],
            _ => {}
        }
    }
    let objective_value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let certificate = Certificate {
        reduced_costs: reduced_costs(&tab, &cost),
        artificial_start: tab.artificial_start,
        x_std,
    };
    Ok((
        LpSolution {
            status: LpStatus::Optimal,
            x,
            objective_value,
        },
        Some(certificate),
    ))
}

fn objective_of(tab: &Tableau, cost: &[f64]) -> f64 {
    let rhs = tab.n_total();
    tab.basis
        .iter()
        .enumerate()
        .map(|(i, &b)| cost[b] * tab.rows[i][rhs])
        .sum()
}

/// Reduced costs c_j - c_B B^-1 A_j, read off the current tableau.
fn reduced_costs(tab: &Tableau, cost: &[f64]) -> Vec<f64> {
    let n_total = tab.n_total();
    let mut red = cost.to_vec();
    for (i, &b) in tab.basis.iter().enumerate() {
        let cb = cost[b];
        if cb != 0.0 {
            for (j, r) in red.iter_mut().enumerate().take(n_total) {
                *r -= cb * tab.rows[i][j];
            }
        }
    }
    red
}

/// Primal simplex iterations. Pricing is Dantzig's rule (most negative
/// reduced cost, smallest index on ties) for speed; after a degenerate
/// stall the phase falls back to Bland's rule, whose fixed order breaks
/// cycling. Both rules are deterministic. Artificials never re-enter
/// outside phase 1.
fn simplex_iterate(tab: &mut Tableau, cost: &[f64], phase1: bool) -> Result<LpStatus, LpError> {
    let n_total = tab.n_total();
    let m = tab.rows.len();
    let max_pivots = 400 * (n_total + m) + 20_000;
    // consecutive pivots without objective improvement before Bland takes over
    const STALL_LIMIT: usize = 30;
    let mut stalled = 0usize;
    let mut bland = false;
    let mut last_obj = objective_of(tab, cost);

    for _ in 0..max_pivots {
        let red = reduced_costs(tab, cost);

        let eligible = |j: usize| phase1 || j < tab.artificial_start;
        let enter = if bland {
            (0..n_total).find(|&j| eligible(j) && red[j] < -OPTIMALITY_TOL)
        } else {
            let mut best: Option<(usize, f64)> = None;
            for (j, &rc) in red.iter().enumerate().take(n_total) {
                if eligible(j) && rc < -OPTIMALITY_TOL && best.map_or(true, |(_, b)| rc < b) {
                    best = Some((j, rc));
                }
            }
            best.map(|(j, _)| j)
        };
        let Some(enter) = enter else {
            return Ok(LpStatus::Optimal);
        };

        // leaving: min ratio over positive column entries, ties to the
        // smallest basic variable index (Bland)
        let rhs_col = n_total;
        let mut leave: Option<(usize, f64)> = None;
        let mut best_tiny = 0.0f64;
        for i in 0..m {
            let a = tab.rows[i][enter];
            if a > PIVOT_TOL {
                let ratio = tab.rows[i][rhs_col] / a;
                let better = match leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < lr - 1e-12
                            || ((ratio - lr).abs() <= 1e-12 && tab.basis[i] < tab.basis[li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            } else if a > 0.0 {
                best_tiny = best_tiny.max(a);
            }
        }
        let Some((leave, _)) = leave else {
            if best_tiny > 0.0 {
                return Err(LpError::NumericalBreakdown(format!(
                    "largest usable pivot {best_tiny:.3e} in column {enter} is below {PIVOT_TOL:.0e}"
                )));
            }
            return Ok(LpStatus::Unbounded);
        };

        pivot(tab, leave, enter);

        let obj = objective_of(tab, cost);
        if obj < last_obj - 1e-12 {
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= STALL_LIMIT {
                bland = true;
            }
        }
        last_obj = obj;
    }
    Err(LpError::NumericalBreakdown("pivot limit exceeded".into()))
}

fn pivot(tab: &mut Tableau, row: usize, col: usize) {
    let width = tab.rows[0].len();
    let p = tab.rows[row][col];
    for v in tab.rows[row].iter_mut() {
        *v /= p;
    }
    let pivot_row = tab.rows[row].clone();
    for (i, r) in tab.rows.iter_mut().enumerate() {
        if i == row {
            continue;
        }
        let factor = r[col];
        if factor != 0.0 {
            for j in 0..width {
                r[j] -= factor * pivot_row[j];
            }
            r[col] = 0.0;
        }
    }
    tab.basis[row] = col;
}

/// After phase 1, any artificial still basic sits at zero; pivot it out on a
/// non-artificial column, or drop the (redundant) row if none exists.
fn drive_out_artificials(tab: &mut Tableau) {
    let n_total = tab.n_total();
    let mut drop_rows = Vec::new();
    for i in 0..tab.rows.len() {
        if tab.basis[i] < tab.artificial_start {
            continue;
        }
        let col = (0..tab.artificial_start).find(|&j| tab.rows[i][j].abs() > PIVOT_TOL);
        match col {
            Some(j) => pivot(tab, i, j),
            None => drop_rows.push(i),
        }
    }
    for &i in drop_rows.iter().rev() {
        debug_assert!(tab.rows[i][n_total].abs() <= FEASIBILITY_TOL);
        tab.rows.remove(i);
        tab.basis.remove(i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(
        objective: Vec<f64>,
        constraints: Vec<(Vec<f64>, Relation, f64)>,
        variable_bounds: Vec<(f64, f64)>,
    ) -> LinearProgram {
        LinearProgram {
            objective,
            constraints,
            variable_bounds,
        }
    }

    #[test]
    fn simple_cover() {
        // min x1 + x2 s.t. x1 + x2 >= 1, x >= 0
        let p = lp(
            vec![1.0, 1.0],
            vec![(vec![1.0, 1.0], Relation::Ge, 1.0)],
            vec![(0.0, f64::INFINITY), (0.0, f64::INFINITY)],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective_value - 1.0).abs() < 1e-9, "{}", s.objective_value);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        // x >= 1 and x <= 0
        let p = lp(
            vec![1.0],
            vec![
                (vec![1.0], Relation::Ge, 1.0),
                (vec![1.0], Relation::Le, 0.0),
            ],
            vec![(f64::NEG_INFINITY, f64::INFINITY)],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_direction_detected() {
        let p = lp(
            vec![-1.0],
            vec![(vec![1.0], Relation::Ge, 0.0)],
            vec![(0.0, f64::INFINITY)],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_and_free_variables() {
        // min x + 2y s.t. x + y = 3, x - y <= 1, y free
        let p = lp(
            vec![1.0, 2.0],
            vec![
                (vec![1.0, 1.0], Relation::Eq, 3.0),
                (vec![1.0, -1.0], Relation::Le, 1.0),
            ],
            vec![(0.0, f64::INFINITY), (f64::NEG_INFINITY, f64::INFINITY)],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        // cheapest split of x + y = 3 given x - y <= 1: x = 2, y = 1
        assert!((s.x[0] - 2.0).abs() < 1e-8);
        assert!((s.x[1] - 1.0).abs() < 1e-8);
        assert!((s.objective_value - 4.0).abs() < 1e-8);
    }

    #[test]
    fn negative_bounds_shift_correctly() {
        let p = lp(vec![1.0], vec![], vec![(-5.0, -2.0)]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] + 5.0).abs() < 1e-9);
    }

    #[test]
    fn mirrored_upper_bound_only() {
        // max x (min -x), x <= 7 with no lower bound
        let p = lp(
            vec![-1.0],
            vec![(vec![1.0], Relation::Ge, -100.0)],
            vec![(f64::NEG_INFINITY, 7.0)],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 7.0).abs() < 1e-9);
    }

    #[test]
    fn objective_scaling_preserves_argmin() {
        let rows = vec![
            (vec![2.0, 1.0], Relation::Ge, 4.0),
            (vec![1.0, 3.0], Relation::Ge, 6.0),
        ];
        let bounds = vec![(0.0, 10.0), (0.0, 10.0)];
        let a = solve_lp(&lp(vec![3.0, 2.0], rows.clone(), bounds.clone())).unwrap();
        let b = solve_lp(&lp(vec![30.0, 20.0], rows, bounds)).unwrap();
        assert_eq!(a.status, LpStatus::Optimal);
        for (va, vb) in a.x.iter().zip(&b.x) {
            assert!((va - vb).abs() < 1e-8);
        }
        assert!((10.0 * a.objective_value - b.objective_value).abs() < 1e-6);
    }

    #[test]
    fn fixed_variable_bounds() {
        let p = lp(vec![1.0], vec![], vec![(2.0, 2.0)]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn solution_satisfies_constraints_to_tolerance() {
        let p = lp(
            vec![1.0, 1.0, 1.0],
            vec![
                (vec![1.0, 2.0, 0.5], Relation::Ge, 3.0),
                (vec![2.0, -1.0, 1.0], Relation::Le, 5.0),
                (vec![1.0, 1.0, 1.0], Relation::Eq, 4.0),
            ],
            vec![(0.0, 10.0); 3],
        );
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        for (coeffs, rel, rhs) in &p.constraints {
            let lhs: f64 = coeffs.iter().zip(&s.x).map(|(a, v)| a * v).sum();
            match rel {
                Relation::Ge => assert!(lhs >= rhs - FEASIBILITY_TOL),
                Relation::Le => assert!(lhs <= rhs + FEASIBILITY_TOL),
                Relation::Eq => assert!((lhs - rhs).abs() <= FEASIBILITY_TOL),
            }
        }
    }

    /// Complementary slackness against the simplex-derived duals: in
    /// standard form the reduced costs are the dual slacks, so optimality
    /// requires dual feasibility (all reduced costs >= -tol) and
    /// x_j * rc_j = 0 for every variable.
    #[test]
    fn complementary_slackness_holds() {
        let cases = vec![
            lp(
                vec![2.0, 3.0, 1.0],
                vec![
                    (vec![1.0, 1.0, 0.0], Relation::Ge, 2.0),
                    (vec![0.0, 1.0, 1.0], Relation::Ge, 3.0),
                    (vec![1.0, 0.0, 2.0], Relation::Le, 8.0),
                ],
                vec![(0.0, 6.0); 3],
            ),
            lp(
                vec![1.0, -2.0],
                vec![
                    (vec![1.0, 1.0], Relation::Le, 4.0),
                    (vec![-1.0, 2.0], Relation::Le, 2.0),
                ],
                vec![(-1.0, 5.0), (-3.0, 5.0)],
            ),
        ];
        for (ci, p) in cases.iter().enumerate() {
            let (s, cert) = solve_with_certificate(p).unwrap();
            assert_eq!(s.status, LpStatus::Optimal, "case {ci}");
            let cert = cert.unwrap();
            for (j, (&xj, &rcj)) in cert.x_std.iter().zip(&cert.reduced_costs).enumerate() {
                if j >= cert.artificial_start {
                    continue;
                }
                assert!(rcj >= -1e-6, "case {ci} col {j}: dual infeasible rc {rcj}");
                assert!(
                    (xj * rcj).abs() <= 1e-6 * xj.abs().max(1.0),
                    "case {ci} col {j}: x {xj} rc {rcj} violates complementary slackness"
                );
            }
        }
    }

    #[test]
    fn determinism_bitwise() {
        let p = lp(
            vec![1.0, 0.5, 2.0, -0.25],
            vec![
                (vec![1.0, 1.0, 1.0, 1.0], Relation::Ge, 2.0),
                (vec![0.5, -1.0, 2.0, 0.0], Relation::Le, 3.0),
                (vec![1.0, 2.0, 0.0, 1.0], Relation::Eq, 2.5),
            ],
            vec![(-2.0, 4.0); 4],
        );
        let a = solve_lp(&p).unwrap();
        let b = solve_lp(&p).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.objective_value.to_bits(), b.objective_value.to_bits());
    }
}
