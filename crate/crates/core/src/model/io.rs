//! Feeder description file: JSON with top-level keys `buses`, `lines`,
//! `regulators`, `capacitors`, `loads`, `pvs`, `slack`. Impedances are
//! `[[ [r, x], ... ], ...]` ohm matrices. See `fixtures/schema/feeder.schema.json`.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    Bus, CapacitorBank, LineSegment, LoadPoint, NetworkModel, NetworkParts, Phase, PhaseSet,
    PhaseSpec, PvSystem, RegPhase, Regulator, Zone, DEFAULT_TAP_STEP,
};

#[derive(Debug, thiserror::Error)]
pub enum FeederFileError {
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
    #[error("bad phase string '{0}': expected A, B, C, or ABC")]
    BadPhase(String),
    #[error("bad regulator phase '{0}': expected A, B, C, or gang")]
    BadRegPhase(String),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FeederFile {
    pub buses: Vec<BusEntry>,
    #[serde(default)]
    pub lines: Vec<LineEntry>,
    #[serde(default)]
    pub regulators: Vec<RegulatorEntry>,
    #[serde(default)]
    pub capacitors: Vec<CapacitorEntry>,
    #[serde(default)]
    pub loads: Vec<LoadEntry>,
    #[serde(default)]
    pub pvs: Vec<PvEntry>,
    pub slack: SlackEntry,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BusEntry {
    pub id: String,
    pub phases: Vec<Phase>,
    pub base_kv: f64,
    pub zone: Zone,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LineEntry {
    pub id: String,
    pub from: String,
    pub to: String,
    pub phases: Vec<Phase>,
    /// Square matrix of [r, x] ohm pairs over `phases`.
    pub z_ohm: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegulatorEntry {
    pub id: String,
    pub from: String,
    pub to: String,
    /// "A" | "B" | "C" | "gang"
    pub phase: String,
    pub tap_ratio: f64,
    #[serde(default = "default_tap_step")]
    pub tap_step: f64,
}

fn default_tap_step() -> f64 {
    DEFAULT_TAP_STEP
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CapacitorEntry {
    pub id: String,
    pub bus: String,
    pub phases: Vec<Phase>,
    pub kvar_per_phase: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LoadEntry {
    pub id: String,
    pub bus: String,
    /// "A" | "B" | "C" | "ABC"
    pub phase: String,
    pub kw_peak: f64,
    pub pf: f64,
    pub profile: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PvEntry {
    pub id: String,
    pub bus: String,
    /// "A" | "B" | "C" | "ABC"
    pub phase: String,
    pub p_mpp_kw: f64,
    pub s_rating_kva: f64,
    pub q_max_kvar: f64,
    pub profile: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SlackEntry {
    pub bus: String,
    pub voltage_pu: f64,
}

fn parse_phase_spec(s: &str) -> Result<PhaseSpec, FeederFileError> {
    match s {
        "A" => Ok(PhaseSpec::Single(Phase::A)),
        "B" => Ok(PhaseSpec::Single(Phase::B)),
        "C" => Ok(PhaseSpec::Single(Phase::C)),
        "ABC" => Ok(PhaseSpec::ThreePhase),
        other => Err(FeederFileError::BadPhase(other.to_string())),
    }
}

fn parse_reg_phase(s: &str) -> Result<RegPhase, FeederFileError> {
    match s {
        "A" => Ok(RegPhase::Single(Phase::A)),
        "B" => Ok(RegPhase::Single(Phase::B)),
        "C" => Ok(RegPhase::Single(Phase::C)),
        "gang" => Ok(RegPhase::Gang),
        other => Err(FeederFileError::BadRegPhase(other.to_string())),
    }
}

impl FeederFile {
    pub fn into_parts(self) -> Result<NetworkParts, FeederFileError> {
        let buses = self
            .buses
            .into_iter()
            .map(|b| Bus {
                id: b.id,
                phases: PhaseSet::from_slice(&b.phases),
                base_kv: b.base_kv,
                zone: b.zone,
            })
            .collect();
        let lines = self
            .lines
            .into_iter()
            .map(|l| LineSegment {
                id: l.id,
                from_bus: l.from,
                to_bus: l.to,
                phases: PhaseSet::from_slice(&l.phases),
                z_matrix: l
                    .z_ohm
                    .into_iter()
                    .map(|row| row.into_iter().map(|[r, x]| Complex64::new(r, x)).collect())
                    .collect(),
            })
            .collect();
        let regulators = self
            .regulators
            .into_iter()
            .map(|r| {
                Ok(Regulator {
                    id: r.id,
                    from_bus: r.from,
                    to_bus: r.to,
                    phase: parse_reg_phase(&r.phase)?,
                    tap_ratio: r.tap_ratio,
                    tap_step: r.tap_step,
                })
            })
            .collect::<Result<Vec<_>, FeederFileError>>()?;
        let capacitors = self
            .capacitors
            .into_iter()
            .map(|c| CapacitorBank {
                id: c.id,
                bus_id: c.bus,
                phases: PhaseSet::from_slice(&c.phases),
                kvar_per_phase: c.kvar_per_phase,
            })
            .collect();
        let loads = self
            .loads
            .into_iter()
            .map(|l| {
                Ok(LoadPoint {
                    id: l.id,
                    bus_id: l.bus,
                    phase: parse_phase_spec(&l.phase)?,
                    kw_peak: l.kw_peak,
                    pf: l.pf,
                    profile_id: l.profile,
                })
            })
            .collect::<Result<Vec<_>, FeederFileError>>()?;
        let pvs = self
            .pvs
            .into_iter()
            .map(|p| {
                Ok(PvSystem {
                    id: p.id,
                    bus_id: p.bus,
                    phase: parse_phase_spec(&p.phase)?,
                    p_mpp_kw: p.p_mpp_kw,
                    s_rating_kva: p.s_rating_kva,
                    q_max_kvar: p.q_max_kvar,
                    profile_id: p.profile,
                    index: 0,
                })
            })
            .collect::<Result<Vec<_>, FeederFileError>>()?;
        Ok(NetworkParts {
            buses,
            lines,
            regulators,
            capacitors,
            loads,
            pvs,
            slack_bus: self.slack.bus,
            slack_voltage_pu: self.slack.voltage_pu,
        })
    }
}

/// Reads and parses a feeder file. Parsing succeeds even for models that
/// later fail validation; diagnostics come from [`NetworkModel::validate`].
pub fn load_feeder(path: &Path) -> Result<NetworkModel, FeederFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| FeederFileError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let file: FeederFile =
        serde_json::from_str(&text).map_err(|source| FeederFileError::Parse {
            path: path.display().to_string(),
            source,
        })?;
    Ok(NetworkModel::new(file.into_parts()?))
}
