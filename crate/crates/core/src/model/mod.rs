//! Immutable data model of an unbalanced radial distribution feeder.
//!
//! A [`NetworkModel`] holds buses, series elements (lines and regulators) and
//! shunt equipment (capacitors, loads, PV systems). Construction never fails;
//! [`NetworkModel::validate`] reports every invariant breach as a diagnostic,
//! and the power-flow topology is only available when the model is clean.

mod topology;
mod validate;

pub mod io;

pub use topology::{EdgeKind, TopoEdge, Topology};
pub use validate::{Violation, ViolationCode};

use serde::{Deserialize, Serialize};

/// One of the three phases of the feeder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    /// Nominal angle of this phase in radians (A=0, B=-120deg, C=+120deg).
    pub fn nominal_angle(self) -> f64 {
        match self {
            Phase::A => 0.0,
            Phase::B => -2.0 * std::f64::consts::FRAC_PI_3,
            Phase::C => 2.0 * std::f64::consts::FRAC_PI_3,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Phase::A => 'A',
            Phase::B => 'B',
            Phase::C => 'C',
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Distance class used for PV placement ("near" vs "far" half of the feeder).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    Near,
    Far,
}

/// Non-empty subset of {A, B, C}, kept sorted A < B < C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const ABC: PhaseSet = PhaseSet(0b111);

    pub fn empty() -> Self {
        PhaseSet(0)
    }

    pub fn single(p: Phase) -> Self {
        PhaseSet(1 << (p as u8))
    }

    pub fn from_slice(phases: &[Phase]) -> Self {
        let mut s = PhaseSet(0);
        for &p in phases {
            s.0 |= 1 << (p as u8);
        }
        s
    }

    pub fn contains(self, p: Phase) -> bool {
        self.0 & (1 << (p as u8)) != 0
    }

    pub fn is_subset_of(self, other: PhaseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Phases in fixed A < B < C order.
    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |&p| self.contains(p))
    }
}

impl From<Phase> for PhaseSet {
    fn from(p: Phase) -> Self {
        PhaseSet::single(p)
    }
}

/// Phase connection of a load or PV: a single phase or all three.
///
/// Three-phase equipment is modeled as three equal single-phase attachments;
/// rated powers are totals and split evenly across the attachments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhaseSpec {
    Single(Phase),
    ThreePhase,
}

impl PhaseSpec {
    pub fn phases(self) -> PhaseSet {
        match self {
            PhaseSpec::Single(p) => PhaseSet::single(p),
            PhaseSpec::ThreePhase => PhaseSet::ABC,
        }
    }

    pub fn attachment_count(self) -> usize {
        match self {
            PhaseSpec::Single(_) => 1,
            PhaseSpec::ThreePhase => 3,
        }
    }
}

/// Phases a regulator acts on: one phase or a gang over all shared phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegPhase {
    Single(Phase),
    Gang,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub phases: PhaseSet,
    /// Line-to-neutral base, kilovolts.
    pub base_kv: f64,
    pub zone: Zone,
}

/// One (bus, phase) pair with its dense index into the voltage vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseNode {
    pub bus_id: String,
    pub phase: Phase,
    pub index: usize,
}

/// Series impedance segment. `z_matrix[r][c]` is the complex ohm coupling
/// between the r-th and c-th phase of `phases` (A < B < C order), neutral
/// Kron-reduced into the phase quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSegment {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    pub phases: PhaseSet,
    pub z_matrix: Vec<Vec<num_complex::Complex64>>,
}

/// Tap-ratio device. Between buses of equal base the tap is the whole story;
/// between different bases it additionally applies the nominal base ratio,
/// which lets the same element model a fixed-tap service transformer.
#[derive(Debug, Clone, PartialEq)]
pub struct Regulator {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    pub phase: RegPhase,
    pub tap_ratio: f64,
    pub tap_step: f64,
}

pub const DEFAULT_TAP_STEP: f64 = 0.00625;
pub const TAP_RATIO_MIN: f64 = 0.9;
pub const TAP_RATIO_MAX: f64 = 1.1;

#[derive(Debug, Clone, PartialEq)]
pub struct CapacitorBank {
    pub id: String,
    pub bus_id: String,
    pub phases: PhaseSet,
    /// Kilovars per phase at nominal voltage; actual injection scales with |V|^2.
    pub kvar_per_phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadPoint {
    pub id: String,
    pub bus_id: String,
    pub phase: PhaseSpec,
    pub kw_peak: f64,
    /// Power factor in (0, 1]; loads are constant-power (PQ).
    pub pf: f64,
    pub profile_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvSystem {
    pub id: String,
    pub bus_id: String,
    pub phase: PhaseSpec,
    /// Maximum-power-point active rating, kilowatts.
    pub p_mpp_kw: f64,
    /// Inverter apparent-power rating, kilovolt-amperes.
    pub s_rating_kva: f64,
    /// Reactive headroom at nameplate active output, kilovars.
    pub q_max_kvar: f64,
    pub profile_id: String,
    /// Dense 0..M-1 index, assigned in model order.
    pub index: usize,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum ModelError {
    #[error("apparent rating {s_kva} kVA is below active rating {p_kw} kW")]
    RatingBelowActive { s_kva: f64, p_kw: f64 },
    #[error("model is not valid for power flow: {0} violation(s), first: {1}")]
    Invalid(usize, String),
}

/// Reactive headroom sqrt(S^2 - P^2) of an inverter at its nameplate output.
pub fn effective_q_max(pv: &PvSystem) -> Result<f64, ModelError> {
    effective_q_max_at(pv, pv.p_mpp_kw)
}

/// Reactive headroom with the instantaneous active output substituted for the
/// nameplate value. Grows the available band when the PV runs below rating.
pub fn effective_q_max_at(pv: &PvSystem, p_now_kw: f64) -> Result<f64, ModelError> {
    if pv.s_rating_kva < p_now_kw {
        return Err(ModelError::RatingBelowActive {
            s_kva: pv.s_rating_kva,
            p_kw: p_now_kw,
        });
    }
    Ok((pv.s_rating_kva * pv.s_rating_kva - p_now_kw * p_now_kw).sqrt())
}

/// All raw parts of a feeder model, before validation.
#[derive(Debug, Clone, Default)]
pub struct NetworkParts {
    pub buses: Vec<Bus>,
    pub lines: Vec<LineSegment>,
    pub regulators: Vec<Regulator>,
    pub capacitors: Vec<CapacitorBank>,
    pub loads: Vec<LoadPoint>,
    pub pvs: Vec<PvSystem>,
    pub slack_bus: String,
    pub slack_voltage_pu: f64,
}

/// Immutable feeder description. Safe to share across threads; all solver
/// entry points take it by shared reference.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    parts: NetworkParts,
    violations: Vec<Violation>,
    node_index: Vec<PhaseNode>,
    topology: Option<Topology>,
}

impl NetworkModel {
    /// Builds the model, assigning dense PV indices in input order and
    /// compiling the power-flow topology when the parts are valid.
    pub fn new(mut parts: NetworkParts) -> Self {
        for (j, pv) in parts.pvs.iter_mut().enumerate() {
            pv.index = j;
        }
        let node_index = Self::build_node_index(&parts);
        let violations = validate::check(&parts);
        let topology = if violations.is_empty() {
            Some(Topology::build(&parts, &node_index))
        } else {
            None
        };
        NetworkModel {
            parts,
            violations,
            node_index,
            topology,
        }
    }

    fn build_node_index(parts: &NetworkParts) -> Vec<PhaseNode> {
        let mut order: Vec<&Bus> = parts.buses.iter().collect();
        order.sort_by(|a, b| a.id.cmp(&b.id));
        let mut nodes = Vec::new();
        for bus in order {
            for phase in bus.phases.iter() {
                nodes.push(PhaseNode {
                    bus_id: bus.id.clone(),
                    phase,
                    index: nodes.len(),
                });
            }
        }
        nodes
    }

    /// Every invariant breach found at construction; empty iff the model is
    /// usable by the power flow.
    pub fn validate(&self) -> Vec<Violation> {
        self.violations.clone()
    }

    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// Deterministic phase-node ordering: lexicographic by bus id, then
    /// phase A < B < C. Stable across runs for the same model.
    pub fn node_index(&self) -> &[PhaseNode] {
        &self.node_index
    }

    pub fn node_count(&self) -> usize {
        self.node_index.len()
    }

    pub fn pv_count(&self) -> usize {
        self.parts.pvs.len()
    }

    /// Position of a (bus, phase) pair in the node index.
    pub fn node_position(&self, bus_id: &str, phase: Phase) -> Option<usize> {
        self.node_index
            .binary_search_by(|n| {
                n.bus_id
                    .as_str()
                    .cmp(bus_id)
                    .then(n.phase.cmp(&phase))
            })
            .ok()
    }

    pub fn buses(&self) -> &[Bus] {
        &self.parts.buses
    }

    pub fn lines(&self) -> &[LineSegment] {
        &self.parts.lines
    }

    pub fn regulators(&self) -> &[Regulator] {
        &self.parts.regulators
    }

    pub fn capacitors(&self) -> &[CapacitorBank] {
        &self.parts.capacitors
    }

    pub fn loads(&self) -> &[LoadPoint] {
        &self.parts.loads
    }

    pub fn pvs(&self) -> &[PvSystem] {
        &self.parts.pvs
    }

    pub fn slack_bus(&self) -> &str {
        &self.parts.slack_bus
    }

    pub fn slack_voltage_pu(&self) -> f64 {
        self.parts.slack_voltage_pu
    }

    pub fn bus(&self, id: &str) -> Option<&Bus> {
        self.parts.buses.iter().find(|b| b.id == id)
    }

    /// Total connected load at nameplate, kilowatts.
    pub fn peak_load_kw(&self) -> f64 {
        self.parts.loads.iter().map(|l| l.kw_peak).sum()
    }

    /// Total installed PV nameplate, kilowatts.
    pub fn installed_pv_kw(&self) -> f64 {
        self.parts.pvs.iter().map(|p| p.p_mpp_kw).sum()
    }

    /// Compiled tree for the sweep solver; errors if the model is invalid.
    pub fn topology(&self) -> Result<&Topology, ModelError> {
        self.topology.as_ref().ok_or_else(|| {
            let first = self
                .violations
                .first()
                .map(|v| v.to_string())
                .unwrap_or_default();
            ModelError::Invalid(self.violations.len(), first)
        })
    }

    /// Copy of the raw parts, for building derived models (added PVs,
    /// re-tapped regulators). Indices are reassigned by `new`.
    pub fn to_parts(&self) -> NetworkParts {
        self.parts.clone()
    }
}
