//! Hosting-capacity protocol: baseline regulator/capacitor tuning over a
//! 24-hour day, incremental PV additions in a seeded placement order, and
//! the per-mode sweep that stops at the first unmitigated violation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::coordinator::{self, DispatchOptions, DispatchStatus, VoltageLimits};
use crate::inverter::{self, ControlMode, EquilibriumError};
use crate::model::{NetworkModel, TAP_RATIO_MAX, TAP_RATIO_MIN};
use crate::powerflow::{self, count_violations, SolverOptions};
use crate::scenario::{self, PlacementSpec, Scenario, ScenarioMode};

/// Frozen per-month settings: one tap per regulator (model order) and one
/// switch state per capacitor bank.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineSettings {
    pub taps: Vec<f64>,
    pub cap_on: Vec<bool>,
    /// Violations remaining over the 24 tuning flows at the chosen settings.
    pub residual_violations: usize,
}

impl BaselineSettings {
    pub fn as_declared(model: &NetworkModel) -> BaselineSettings {
        BaselineSettings {
            taps: model.regulators().iter().map(|r| r.tap_ratio).collect(),
            cap_on: vec![true; model.capacitors().len()],
            residual_violations: 0,
        }
    }
}

/// Model with regulator taps replaced by the settings.
pub fn apply_taps(model: &NetworkModel, taps: &[f64]) -> NetworkModel {
    let mut parts = model.to_parts();
    for (r, tap) in parts.regulators.iter_mut().zip(taps) {
        r.tap_ratio = *tap;
    }
    NetworkModel::new(parts)
}

/// Violation objective for one candidate setting: OV + UV counts summed over
/// the 24 hourly flows of the tuning day. Diverged hours count as the whole
/// node set violating.
fn tuning_objective(
    model: &NetworkModel,
    scenario: &Scenario,
    month: u8,
    cap_on: &[bool],
    limits: &VoltageLimits,
    opts: &SolverOptions,
) -> usize {
    let band = limits.threshold_band();
    (0u8..24)
        .map(|hour| {
            let inj = scenario::injection_at(model, scenario, month, hour, cap_on);
            match powerflow::solve(model, &inj, opts) {
                Ok(sol) => {
                    let s = count_violations(&sol, band);
                    s.over + s.under
                }
                Err(_) => model.node_count(),
            }
        })
        .sum()
}

/// Greedy coordinate search over discrete tap steps and capacitor on/off
/// states. Accepts a move when it reduces the lexicographic objective
/// (violations, distance of taps from neutral, banks switched on); ties
/// therefore settle toward neutral taps and capacitors off. Terminates at a
/// one-step local optimum. Zero residual violations are not guaranteed.
pub fn tune_baseline(
    model: &NetworkModel,
    scenario: &Scenario,
    month: u8,
    limits: &VoltageLimits,
    opts: &SolverOptions,
) -> BaselineSettings {
    // taps tracked as integer step counts so candidates stay exactly on the
    // 1 + k*step grid
    let mut steps: Vec<i32> = model
        .regulators()
        .iter()
        .map(|r| ((r.tap_ratio - 1.0) / r.tap_step).round() as i32)
        .collect();
    let mut cap_on = vec![true; model.capacitors().len()];

    let taps_of = |steps: &[i32]| -> Vec<f64> {
        model
            .regulators()
            .iter()
            .zip(steps)
            .map(|(r, &k)| 1.0 + k as f64 * r.tap_step)
            .collect()
    };
    let objective = |steps: &[i32], cap_on: &[bool]| -> (usize, i64, usize) {
        let taps = taps_of(steps);
        let m = apply_taps(model, &taps);
        let violations = tuning_objective(&m, scenario, month, cap_on, limits, opts);
        let step_distance: i64 = steps.iter().map(|&k| k.unsigned_abs() as i64).sum();
        let banks_on = cap_on.iter().filter(|&&b| b).count();
        (violations, step_distance, banks_on)
    };

    let mut best = objective(&steps, &cap_on);
    loop {
        let mut improved = false;

        for (ri, reg) in model.regulators().iter().enumerate() {
            for dir in [-1i32, 1] {
                let k = steps[ri] + dir;
                let candidate = 1.0 + k as f64 * reg.tap_step;
                if !(TAP_RATIO_MIN - 1e-9..=TAP_RATIO_MAX + 1e-9).contains(&candidate) {
                    continue;
                }
                let mut s = steps.clone();
                s[ri] = k;
                let score = objective(&s, &cap_on);
                if better(score, best) {
                    steps = s;
                    best = score;
                    improved = true;
                }
            }
        }
        for ci in 0..cap_on.len() {
            let mut c = cap_on.clone();
            c[ci] = !c[ci];
            let score = objective(&steps, &c);
            if better(score, best) {
                cap_on = c;
                best = score;
                improved = true;
            }
        }

        if !improved {
            break;
        }
    }

    BaselineSettings {
        taps: taps_of(&steps),
        cap_on,
        residual_violations: best.0,
    }
}

/// Lexicographic acceptance: fewer violations, then taps closer to neutral,
/// then fewer banks switched on.
fn better(a: (usize, i64, usize), b: (usize, i64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && (a.1 < b.1 || (a.1 == b.1 && a.2 < b.2)))
}

/// Evaluation of one (month, hour) cell under a control mode.
#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub month: u8,
    pub hour: u8,
    pub violations: usize,
    pub max_vpu: f64,
    pub total_q_kvar: f64,
    /// True when the mode failed to keep (or bring) the cell inside the
    /// thresholds: a bare violation for local modes, an unmitigated outcome
    /// for the coordinated ones.
    pub unmitigated: bool,
    pub worst_node: Option<String>,
}

/// How one sweep ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepStop {
    FirstViolation,
    FlowDiverged,
    CandidateCapReached,
}

#[derive(Debug, Clone, Serialize)]
pub struct HcReport {
    pub mode: ScenarioMode,
    pub placement: scenario::PlacementKind,
    /// New PV capacity added before the first violating addition, kW.
    pub added_kw_at_first_violation: f64,
    /// Total nameplate including pre-existing PV, kW.
    pub hc_kw: f64,
    /// hc_kw over the feeder's peak load.
    pub hc_percent: f64,
    pub peak_load_kw: f64,
    pub existing_pv_kw: f64,
    pub stop: SweepStop,
    /// (month, hour, node, v_pu) of the first unmitigated violation.
    pub limiting: Option<(u8, u8, String, f64)>,
    /// Per-level evaluation rows for the sweep CSV.
    pub levels: Vec<LevelRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelRow {
    pub level_kw: f64,
    pub month: u8,
    pub hour: u8,
    pub violations: usize,
    pub max_vpu: f64,
    pub total_q_kvar: f64,
}

fn evaluate_cell(
    model: &NetworkModel,
    scenario: &Scenario,
    settings: &BaselineSettings,
    mode: &ScenarioMode,
    month: u8,
    hour: u8,
    limits: &VoltageLimits,
    opts: &DispatchOptions,
) -> CellResult {
    let band = limits.threshold_band();
    let inj = scenario::injection_at(model, scenario, month, hour, &settings.cap_on);

    let outcome: Result<(usize, f64, f64, bool, Option<usize>), ()> = match mode {
        ScenarioMode::Upf | ScenarioMode::VoltVar | ScenarioMode::FixedPf { .. } => {
            let control = match mode {
                ScenarioMode::Upf => ControlMode::UnityPf,
                ScenarioMode::VoltVar => ControlMode::VoltVar(scenario.volt_var_curve),
                ScenarioMode::FixedPf { pf, absorb } => ControlMode::FixedPf {
                    pf: *pf,
                    absorb: *absorb,
                },
                _ => unreachable!(),
            };
            match inverter::equilibrium_solve(model, &inj, &control, &opts.solver) {
                Ok((sol, applied)) => {
                    let s = count_violations(&sol, band);
                    let total_q = applied.pv_kvar.iter().map(|q| q.abs()).sum();
                    let worst = worst_node(model, &sol.v_mag_pu);
                    Ok((s.over + s.under, s.worst_hi, total_q, s.over + s.under > 0, worst))
                }
                Err(EquilibriumError::VvOscillation { .. }) | Err(EquilibriumError::Flow(_)) => {
                    Err(())
                }
            }
        }
        ScenarioMode::Coordinated => match coordinator::dispatch(model, &inj, limits, opts) {
            Ok(result) => {
                let s = count_violations(&result.final_solution, band);
                let total_q = result.final_state.q.iter().map(|q| q.abs()).sum();
                let worst = worst_node(model, &result.final_solution.v_mag_pu);
                Ok((
                    s.over + s.under,
                    s.worst_hi,
                    total_q,
                    result.status != DispatchStatus::Mitigated,
                    worst,
                ))
            }
            Err(_) => Err(()),
        },
        ScenarioMode::Zoned => match coordinator::dispatch_zoned(model, &inj, limits, opts) {
            Ok(result) => {
                let s = count_violations(&result.validation, band);
                let total_q = result.combined_q.iter().map(|q| q.abs()).sum();
                let worst = worst_node(model, &result.validation.v_mag_pu);
                Ok((
                    s.over + s.under,
                    s.worst_hi,
                    total_q,
                    result.residual_violations > 0,
                    worst,
                ))
            }
            Err(_) => Err(()),
        },
    };

    match outcome {
        Ok((violations, max_vpu, total_q_kvar, unmitigated, worst)) => CellResult {
            month,
            hour,
            violations,
            max_vpu,
            total_q_kvar,
            unmitigated,
            worst_node: worst.map(|i| {
                let n = &model.node_index()[i];
                format!("{}.{}", n.bus_id, n.phase)
            }),
        },
        Err(()) => CellResult {
            month,
            hour,
            violations: model.node_count(),
            max_vpu: f64::NAN,
            total_q_kvar: 0.0,
            unmitigated: true,
            worst_node: None,
        },
    }
}

fn worst_node(model: &NetworkModel, v: &[f64]) -> Option<usize> {
    let _ = model;
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
}

/// Incremental PV additions in placement order until the first addition
/// whose grid evaluation leaves an unmitigated violation. Settings must be
/// provided per grid month and stay frozen throughout.
pub fn hc_sweep(
    base_model: &NetworkModel,
    scenario: &Scenario,
    placement: &PlacementSpec,
    mode: &ScenarioMode,
    settings_per_month: &BTreeMap<u8, BaselineSettings>,
    limits: &VoltageLimits,
    opts: &DispatchOptions,
) -> HcReport {
    let peak_load_kw = base_model.peak_load_kw();
    let existing_pv_kw = base_model.installed_pv_kw();

    let mut levels: Vec<LevelRow> = Vec::new();
    let mut last_safe_kw = 0.0;
    let mut stop = SweepStop::CandidateCapReached;
    let mut limiting = None;

    for units in 1..=placement.max_units {
        let added_kw = units as f64 * placement.unit_kw;
        let model = scenario::apply_placement_units(base_model, placement, units);
        if !model.is_valid() {
            stop = SweepStop::FlowDiverged;
            break;
        }

        // grid cells are independent at a fixed level
        let mut cells: Vec<CellResult> = scenario
            .grid
            .months
            .iter()
            .flat_map(|&m| scenario.grid.hours.iter().map(move |&h| (m, h)))
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&(month, hour)| {
                let settings = settings_per_month
                    .get(&month)
                    .expect("settings supplied for every grid month");
                let tapped = apply_taps(&model, &settings.taps);
                evaluate_cell(&tapped, scenario, settings, mode, month, hour, limits, opts)
            })
            .collect();
        cells.sort_by_key(|c| (c.month, c.hour));

        for c in &cells {
            levels.push(LevelRow {
                level_kw: added_kw,
                month: c.month,
                hour: c.hour,
                violations: c.violations,
                max_vpu: c.max_vpu,
                total_q_kvar: c.total_q_kvar,
            });
        }

        if let Some(bad) = cells.iter().find(|c| c.unmitigated) {
            stop = if bad.max_vpu.is_nan() {
                SweepStop::FlowDiverged
            } else {
                SweepStop::FirstViolation
            };
            limiting = Some((
                bad.month,
                bad.hour,
                bad.worst_node.clone().unwrap_or_default(),
                bad.max_vpu,
            ));
            break;
        }
        last_safe_kw = added_kw;
    }

    HcReport::with_totals(
        *mode,
        placement.kind,
        last_safe_kw,
        peak_load_kw,
        existing_pv_kw,
        stop,
        limiting,
        levels,
    )
}

impl HcReport {
    /// Assembles a report from the sweep outcome; total capacity counts the
    /// pre-existing PV, and the percentage is taken against peak load.
    #[allow(clippy::too_many_arguments)]
    pub fn with_totals(
        mode: ScenarioMode,
        placement: scenario::PlacementKind,
        added_kw_at_first_violation: f64,
        peak_load_kw: f64,
        existing_pv_kw: f64,
        stop: SweepStop,
        limiting: Option<(u8, u8, String, f64)>,
        levels: Vec<LevelRow>,
    ) -> HcReport {
        let hc_kw = existing_pv_kw + added_kw_at_first_violation;
        HcReport {
            mode,
            placement,
            added_kw_at_first_violation,
            hc_kw,
            hc_percent: hc_kw / peak_load_kw,
            peak_load_kw,
            existing_pv_kw,
            stop,
            limiting,
            levels,
        }
    }
}


/// Worst hour of each month at a fixed PV level: violation counts broken
/// down by phase, secondary circuit, and PV-connected nodes. Defined for
/// the local control modes (the table characterizes uncoordinated
/// worst cases); coordinated runs are described by their iteration traces.
#[derive(Debug, Clone, Serialize)]
pub struct WorstCaseRow {
    pub month: u8,
    pub hour: u8,
    pub phase_a: usize,
    pub phase_b: usize,
    pub phase_c: usize,
    pub secondary: usize,
    pub pv_nodes: usize,
    pub max_vpu: f64,
}

/// Buses below this base are counted as secondary circuit.
pub const SECONDARY_BASE_KV_MAX: f64 = 1.0;

pub fn worst_case_table(
    model: &NetworkModel,
    scenario: &Scenario,
    mode: &ControlMode,
    settings_per_month: &BTreeMap<u8, BaselineSettings>,
    limits: &VoltageLimits,
    opts: &SolverOptions,
) -> Vec<WorstCaseRow> {
    let band = limits.threshold_band();
    let mut rows = Vec::new();

    for &month in &scenario.grid.months {
        let settings = settings_per_month
            .get(&month)
            .expect("settings supplied for every grid month");
        let tapped = apply_taps(model, &settings.taps);

        let mut worst: Option<WorstCaseRow> = None;
        for &hour in &scenario.grid.hours {
            let inj = scenario::injection_at(&tapped, scenario, month, hour, &settings.cap_on);
            let Ok((sol, _)) = inverter::equilibrium_solve(&tapped, &inj, mode, opts) else {
                continue;
            };
            let row = breakdown_row(&tapped, &sol.v_mag_pu, band, month, hour);
            let count = row.phase_a + row.phase_b + row.phase_c;
            let keep = match &worst {
                None => true,
                Some(w) => count > w.phase_a + w.phase_b + w.phase_c,
            };
            if keep {
                worst = Some(row);
            }
        }
        if let Some(row) = worst {
            rows.push(row);
        }
    }
    rows
}

/// Per-phase / secondary / PV-node breakdown of one voltage vector.
pub fn breakdown_row(
    model: &NetworkModel,
    vmags: &[f64],
    band: crate::powerflow::VoltageBand,
    month: u8,
    hour: u8,
) -> WorstCaseRow {
    let pv_node_set: std::collections::BTreeSet<usize> = model
        .pvs()
        .iter()
        .flat_map(|pv| {
            pv.phase
                .phases()
                .iter()
                .filter_map(|p| model.node_position(&pv.bus_id, p))
                .collect::<Vec<_>>()
        })
        .collect();

    let mut row = WorstCaseRow {
        month,
        hour,
        phase_a: 0,
        phase_b: 0,
        phase_c: 0,
        secondary: 0,
        pv_nodes: 0,
        max_vpu: f64::NEG_INFINITY,
    };
    for node in model.node_index() {
        let v = vmags[node.index];
        row.max_vpu = row.max_vpu.max(v);
        if v > band.v_max || v < band.v_min {
            match node.phase {
                crate::model::Phase::A => row.phase_a += 1,
                crate::model::Phase::B => row.phase_b += 1,
                crate::model::Phase::C => row.phase_c += 1,
            }
            let bus = model.bus(&node.bus_id).unwrap();
            if bus.base_kv < SECONDARY_BASE_KV_MAX {
                row.secondary += 1;
            }
            if pv_node_set.contains(&node.index) {
                row.pv_nodes += 1;
            }
        }
    }
    row
}
