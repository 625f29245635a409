//! Scenario files: one JSON document naming the feeder, the time instance,
//! the control mode, limits, and every solver knob, plus the seed that makes
//! the whole run reproducible. Parsing fills documented defaults; validation
//! reports *all* failures, and unresolved references are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coordinator::{DispatchObjective, DispatchOptions, QLimitBasis, VoltageLimits};
use crate::inverter::{ControlMode, VoltVarCurve};
use crate::model::{self, NetworkModel, PvSystem, Zone};
use crate::powerflow::{InjectionState, SolverOptions};
use crate::profiles::{
    assign_profiles, generate_month_profiles, Profile, ProfileAssignment, ProfileKind,
};

/// Seasonal scaling of load demand, indexed by month 1..=12.
pub const LOAD_SEASON: [f64; 12] = [
    0.95, 0.92, 0.88, 0.85, 0.86, 0.92, 1.00, 1.00, 0.93, 0.87, 0.90, 0.97,
];
/// Seasonal scaling of PV output, indexed by month 1..=12.
pub const PV_SEASON: [f64; 12] = [
    0.70, 0.78, 0.88, 0.95, 1.00, 1.00, 0.98, 0.97, 0.90, 0.82, 0.72, 0.66,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioMode {
    Upf,
    VoltVar,
    FixedPf { pf: f64, absorb: bool },
    Coordinated,
    Zoned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementKind {
    All,
    Near,
    Far,
}

/// PV placement parameters; the ordered candidate list itself is derived
/// deterministically by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementSpec {
    pub kind: PlacementKind,
    pub seed: u64,
    #[serde(default = "default_unit_kw")]
    pub unit_kw: f64,
    /// Power factor used to size S from P (S = P / ratio).
    #[serde(default = "default_unit_pf")]
    pub unit_pf_sizing: f64,
    /// Units already installed before single-shot commands run.
    #[serde(default)]
    pub preinstalled_units: usize,
    /// Hard cap on additions during a hosting-capacity sweep.
    #[serde(default = "default_max_units")]
    pub max_units: usize,
}

fn default_unit_kw() -> f64 {
    10.0
}
fn default_unit_pf() -> f64 {
    0.9
}
fn default_max_units() -> usize {
    200
}

impl Default for PlacementSpec {
    fn default() -> Self {
        PlacementSpec {
            kind: PlacementKind::All,
            seed: 1,
            unit_kw: default_unit_kw(),
            unit_pf_sizing: default_unit_pf(),
            preinstalled_units: 0,
            max_units: default_max_units(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilesSpec {
    #[serde(default = "default_count_load")]
    pub count_load: usize,
    #[serde(default = "default_count_pv")]
    pub count_pv: usize,
    /// Explicit profiles override the generated set when present.
    #[serde(default)]
    pub inline: Option<Vec<Profile>>,
}

fn default_count_load() -> usize {
    5
}
fn default_count_pv() -> usize {
    6
}

impl Default for ProfilesSpec {
    fn default() -> Self {
        ProfilesSpec {
            count_load: default_count_load(),
            count_pv: default_count_pv(),
            inline: None,
        }
    }
}

/// How profiles attach to equipment: the seeded randomization, or the
/// profile ids written in the feeder file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentMode {
    #[default]
    Randomized,
    FromFeeder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(default = "default_months")]
    pub months: Vec<u8>,
    #[serde(default = "default_hours")]
    pub hours: Vec<u8>,
}

fn default_months() -> Vec<u8> {
    vec![5, 6, 7, 8, 9, 10]
}
fn default_hours() -> Vec<u8> {
    (7..=17).collect()
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            months: default_months(),
            hours: default_hours(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSpec {
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_delta_q")]
    pub delta_q_kvar: f64,
    #[serde(default = "default_objective")]
    pub objective: DispatchObjective,
    #[serde(default = "default_basis")]
    pub q_limit_basis: QLimitBasis,
}

fn default_max_iterations() -> usize {
    3
}
fn default_delta_q() -> f64 {
    1.0
}
fn default_objective() -> DispatchObjective {
    DispatchObjective::MinTotalAbs
}
fn default_basis() -> QLimitBasis {
    QLimitBasis::Nameplate
}

impl Default for DispatchSpec {
    fn default() -> Self {
        DispatchSpec {
            max_iterations: default_max_iterations(),
            delta_q_kvar: default_delta_q(),
            objective: default_objective(),
            q_limit_basis: default_basis(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tolerance() -> f64 {
    1e-6
}
fn default_max_iter() -> usize {
    100
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            tolerance: default_tolerance(),
            max_iter: default_max_iter(),
        }
    }
}

/// One fully-specified evaluation setup. Everything an entry point needs is
/// reachable from here plus the feeder file it names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Feeder file path, relative to the scenario file's directory.
    pub feeder: String,
    pub seed: u64,
    #[serde(default = "default_month")]
    pub month: u8,
    #[serde(default = "default_hour")]
    pub hour: u8,
    #[serde(default = "default_mode")]
    pub mode: ScenarioMode,
    #[serde(default)]
    pub profiles: ProfilesSpec,
    #[serde(default)]
    pub assignment: AssignmentMode,
    #[serde(default)]
    pub placement: PlacementSpec,
    #[serde(default)]
    pub limits: VoltageLimits,
    #[serde(default)]
    pub volt_var_curve: VoltVarCurve,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub dispatch: DispatchSpec,
    #[serde(default)]
    pub grid: GridSpec,
}

fn default_month() -> u8 {
    8
}
fn default_hour() -> u8 {
    12
}
fn default_mode() -> ScenarioMode {
    ScenarioMode::Upf
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read '{path}': {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse '{path}': {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("scenario validation failed:\n{}", failures.join("\n"))]
    Validation { failures: Vec<String> },
    #[error(transparent)]
    Feeder(#[from] model::io::FeederFileError),
}

impl Scenario {
    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tolerance: self.solver.tolerance,
            max_iter: self.solver.max_iter,
            ..SolverOptions::default()
        }
    }

    pub fn dispatch_options(&self) -> DispatchOptions {
        DispatchOptions {
            max_iterations: self.dispatch.max_iterations,
            delta_q: self.dispatch.delta_q_kvar,
            objective: self.dispatch.objective,
            q_limit_basis: self.dispatch.q_limit_basis,
            solver: self.solver_options(),
        }
    }

    pub fn control_mode(&self) -> Option<ControlMode> {
        match self.mode {
            ScenarioMode::Upf => Some(ControlMode::UnityPf),
            ScenarioMode::VoltVar => Some(ControlMode::VoltVar(self.volt_var_curve)),
            ScenarioMode::FixedPf { pf, absorb } => Some(ControlMode::FixedPf { pf, absorb }),
            ScenarioMode::Coordinated | ScenarioMode::Zoned => None,
        }
    }
}

/// A loaded scenario with its feeder resolved and the placement's
/// preinstalled units applied.
#[derive(Debug)]
pub struct ScenarioContext {
    pub scenario: Scenario,
    /// Feeder exactly as loaded from disk.
    pub base_model: NetworkModel,
    /// Feeder plus any preinstalled placement units.
    pub model: NetworkModel,
    pub scenario_dir: PathBuf,
}

/// Parses and fully validates a scenario file and its feeder.
pub fn load_scenario(path: &Path) -> Result<ScenarioContext, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let scenario: Scenario =
        serde_json::from_str(&text).map_err(|source| ScenarioError::Parse {
            path: path.display().to_string(),
            source,
        })?;
    let scenario_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let feeder_path = scenario_dir.join(&scenario.feeder);
    let base_model = model::io::load_feeder(&feeder_path)?;

    let mut failures: Vec<String> = Vec::new();
    for v in base_model.validate() {
        failures.push(format!("feeder: {v}"));
    }
    if let Err(e) = scenario.limits.validate() {
        failures.push(format!("limits: {e}"));
    }
    if let Err(e) = scenario.volt_var_curve.validate() {
        failures.push(format!("volt_var_curve: {e}"));
    }
    if !(1..=12).contains(&scenario.month) {
        failures.push(format!("month {} outside 1..=12", scenario.month));
    }
    if scenario.hour > 23 {
        failures.push(format!("hour {} outside 0..=23", scenario.hour));
    }
    for m in &scenario.grid.months {
        if !(1..=12).contains(m) {
            failures.push(format!("grid month {m} outside 1..=12"));
        }
    }
    for h in &scenario.grid.hours {
        if *h > 23 {
            failures.push(format!("grid hour {h} outside 0..=23"));
        }
    }
    if !(scenario.placement.unit_pf_sizing > 0.0 && scenario.placement.unit_pf_sizing <= 1.0) {
        failures.push(format!(
            "placement unit_pf_sizing {} outside (0, 1]",
            scenario.placement.unit_pf_sizing
        ));
    }

    let profiles = month_profiles(&scenario, scenario.month);
    for p in &profiles {
        if let Err(e) = p.validate() {
            failures.push(format!("profile: {e}"));
        }
    }
    if !profiles.iter().any(|p| p.kind == ProfileKind::Load) {
        failures.push("no load profiles available".into());
    }
    if !profiles.iter().any(|p| p.kind == ProfileKind::Pv) {
        failures.push("no pv profiles available".into());
    }
    if scenario.assignment == AssignmentMode::FromFeeder {
        for l in base_model.loads() {
            if !profiles.iter().any(|p| p.id == l.profile_id) {
                failures.push(format!(
                    "load '{}' references missing profile id '{}'",
                    l.id, l.profile_id
                ));
            }
        }
        for pv in base_model.pvs() {
            if !profiles.iter().any(|p| p.id == pv.profile_id) {
                failures.push(format!(
                    "pv '{}' references missing profile id '{}'",
                    pv.id, pv.profile_id
                ));
            }
        }
    }

    if !failures.is_empty() {
        return Err(ScenarioError::Validation { failures });
    }

    let model = if scenario.placement.preinstalled_units > 0 {
        let m = apply_placement_units(
            &base_model,
            &scenario.placement,
            scenario.placement.preinstalled_units,
        );
        if !m.is_valid() {
            return Err(ScenarioError::Validation {
                failures: m.validate().iter().map(|v| v.to_string()).collect(),
            });
        }
        m
    } else {
        base_model.clone()
    };

    Ok(ScenarioContext {
        scenario,
        base_model,
        model,
        scenario_dir,
    })
}

/// Profile set for a month: inline profiles verbatim, or the month-streamed
/// synthetic set.
pub fn month_profiles(scenario: &Scenario, month: u8) -> Vec<Profile> {
    if let Some(inline) = &scenario.profiles.inline {
        inline.clone()
    } else {
        generate_month_profiles(
            scenario.seed,
            month,
            scenario.profiles.count_load,
            scenario.profiles.count_pv,
        )
    }
}

/// Ordered candidate bus list for PV additions: the load-bearing buses of
/// the requested zone, in a seeded random permutation. Additions beyond the
/// list length wrap around (several units on one bus).
pub fn placement_candidates(model: &NetworkModel, spec: &PlacementSpec) -> Vec<String> {
    use rand::seq::SliceRandom;
    use rand_chacha::rand_core::SeedableRng;

    let mut pool: Vec<String> = Vec::new();
    for load in model.loads() {
        let bus = model.bus(&load.bus_id).expect("validated");
        let zone_ok = match spec.kind {
            PlacementKind::All => true,
            PlacementKind::Near => bus.zone == Zone::Near,
            PlacementKind::Far => bus.zone == Zone::Far,
        };
        if zone_ok && !pool.contains(&load.bus_id) {
            pool.push(load.bus_id.clone());
        }
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed);
    pool.shuffle(&mut rng);
    pool
}

/// Model with the first `units` placement PVs added. Each unit lands on the
/// next candidate bus, on the phase of that bus's first load, named
/// `pv_add_NNNN`, sized S = unit_kw / unit_pf_sizing.
pub fn apply_placement_units(
    model: &NetworkModel,
    spec: &PlacementSpec,
    units: usize,
) -> NetworkModel {
    let candidates = placement_candidates(model, spec);
    assert!(
        !candidates.is_empty() || units == 0,
        "placement has no candidate buses in the requested zone"
    );
    let mut parts = model.to_parts();
    let s = spec.unit_kw / spec.unit_pf_sizing;
    let q_max = (s * s - spec.unit_kw * spec.unit_kw).sqrt();
    for u in 0..units {
        let bus_id = &candidates[u % candidates.len()];
        let phase = parts
            .loads
            .iter()
            .find(|l| &l.bus_id == bus_id)
            .map(|l| match l.phase {
                model::PhaseSpec::Single(p) => model::PhaseSpec::Single(p),
                model::PhaseSpec::ThreePhase => model::PhaseSpec::ThreePhase,
            })
            .expect("candidate buses carry loads");
        parts.pvs.push(PvSystem {
            id: format!("pv_add_{u:04}"),
            bus_id: bus_id.clone(),
            phase,
            p_mpp_kw: spec.unit_kw,
            s_rating_kva: s,
            q_max_kvar: q_max,
            profile_id: "pv_0".into(),
            index: 0,
        });
    }
    NetworkModel::new(parts)
}

/// Operating point for one (month, hour) cell: profile-scaled loads and PV
/// active power, zero PV reactive, capacitors as given.
pub fn injection_at(
    model: &NetworkModel,
    scenario: &Scenario,
    month: u8,
    hour: u8,
    cap_on: &[bool],
) -> InjectionState {
    let profiles = month_profiles(scenario, month);
    let assignment = resolve_assignment(model, scenario, &profiles);

    let find = |id: &str| -> &Profile {
        profiles
            .iter()
            .find(|p| p.id == id)
            .expect("assignment references validated profiles")
    };

    let load_season = LOAD_SEASON[(month as usize - 1) % 12];
    let pv_season = PV_SEASON[(month as usize - 1) % 12];

    let mut load_kw = Vec::with_capacity(model.loads().len());
    let mut load_kvar = Vec::with_capacity(model.loads().len());
    for (l, load) in model.loads().iter().enumerate() {
        let shape = find(&assignment.load_profile[l]).at_hour(hour as usize);
        let kw = load.kw_peak * load_season * shape;
        let tan_phi = (1.0 / (load.pf * load.pf) - 1.0).max(0.0).sqrt();
        load_kw.push(kw);
        load_kvar.push(kw * tan_phi);
    }

    let mut pv_kw = Vec::with_capacity(model.pv_count());
    for (j, pv) in model.pvs().iter().enumerate() {
        let shape = find(&assignment.pv_profile[j]).at_hour(hour as usize);
        pv_kw.push(pv.p_mpp_kw * pv_season * shape);
    }

    InjectionState {
        load_kw,
        load_kvar,
        pv_kw,
        pv_kvar: vec![0.0; model.pv_count()],
        cap_on: cap_on.to_vec(),
    }
}

/// Assignment under the scenario's mode: seeded randomization or the feeder's
/// own profile ids.
pub fn resolve_assignment(
    model: &NetworkModel,
    scenario: &Scenario,
    profiles: &[Profile],
) -> ProfileAssignment {
    match scenario.assignment {
        AssignmentMode::Randomized => assign_profiles(model, profiles, scenario.seed),
        AssignmentMode::FromFeeder => ProfileAssignment {
            load_profile: model.loads().iter().map(|l| l.profile_id.clone()).collect(),
            pv_profile: model.pvs().iter().map(|p| p.profile_id.clone()).collect(),
        },
    }
}
