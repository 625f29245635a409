//! Topology and equipment invariant checks.

use std::collections::{HashMap, HashSet};

use super::{NetworkParts, PhaseSet, RegPhase, TAP_RATIO_MAX, TAP_RATIO_MIN};

/// Machine-readable diagnostic code for one invariant breach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum ViolationCode {
    DuplicateBusId,
    DuplicateEquipmentId,
    EmptyPhaseSet,
    NonPositiveBaseKv,
    UnknownBus,
    PhaseNotAtBus,
    BaseKvMismatch,
    ZMatrixDimension,
    ZMatrixAsymmetric,
    ZMatrixNonPositiveResistance,
    TapRatioOutOfRange,
    TapNotOnStep,
    NegativeKvar,
    NegativeKwPeak,
    PowerFactorOutOfRange,
    SRatingBelowPmpp,
    QmaxInconsistent,
    UnknownSlackBus,
    NonPositiveSlackVoltage,
    NonRadialTopology,
    DisconnectedBus,
    UnfedPhase,
}

/// One diagnostic: the code plus a human-readable locator.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}: {}", self.code, self.detail)
    }
}

fn push(out: &mut Vec<Violation>, code: ViolationCode, detail: impl Into<String>) {
    out.push(Violation {
        code,
        detail: detail.into(),
    });
}

/// Runs every check and returns all breaches; empty iff the model is usable
/// by the power flow.
pub fn check(parts: &NetworkParts) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut bus_ids: HashMap<&str, &super::Bus> = HashMap::new();
    for bus in &parts.buses {
        if bus_ids.insert(bus.id.as_str(), bus).is_some() {
            push(&mut out, ViolationCode::DuplicateBusId, format!("bus '{}'", bus.id));
        }
        if bus.phases.is_empty() {
            push(&mut out, ViolationCode::EmptyPhaseSet, format!("bus '{}'", bus.id));
        }
        if !(bus.base_kv > 0.0) {
            push(
                &mut out,
                ViolationCode::NonPositiveBaseKv,
                format!("bus '{}' base_kv {}", bus.id, bus.base_kv),
            );
        }
    }

    let mut seen: HashSet<&str> = HashSet::new();
    for id in parts
        .lines
        .iter()
        .map(|l| &l.id)
        .chain(parts.regulators.iter().map(|r| &r.id))
        .chain(parts.capacitors.iter().map(|c| &c.id))
        .chain(parts.loads.iter().map(|l| &l.id))
        .chain(parts.pvs.iter().map(|p| &p.id))
    {
        if !seen.insert(id.as_str()) {
            push(
                &mut out,
                ViolationCode::DuplicateEquipmentId,
                format!("equipment '{id}'"),
            );
        }
    }

    let bus_phases = |id: &str| bus_ids.get(id).map(|b| b.phases);
    let bus_base = |id: &str| bus_ids.get(id).map(|b| b.base_kv);

    let require_bus = |out: &mut Vec<Violation>, owner: &str, id: &str| -> bool {
        if bus_ids.contains_key(id) {
            true
        } else {
            push(out, ViolationCode::UnknownBus, format!("{owner} references bus '{id}'"));
            false
        }
    };

    for line in &parts.lines {
        let from_ok = require_bus(&mut out, &format!("line '{}'", line.id), &line.from_bus);
        let to_ok = require_bus(&mut out, &format!("line '{}'", line.id), &line.to_bus);
        if line.phases.is_empty() {
            push(&mut out, ViolationCode::EmptyPhaseSet, format!("line '{}'", line.id));
        }
        for (ok, bus) in [(from_ok, &line.from_bus), (to_ok, &line.to_bus)] {
            if ok {
                let at_bus = bus_phases(bus).unwrap_or(PhaseSet::ABC);
                if !line.phases.is_subset_of(at_bus) {
                    push(
                        &mut out,
                        ViolationCode::PhaseNotAtBus,
                        format!("line '{}' phase missing at bus '{bus}'", line.id),
                    );
                }
            }
        }
        if from_ok && to_ok {
            let (bf, bt) = (bus_base(&line.from_bus), bus_base(&line.to_bus));
            if let (Some(bf), Some(bt)) = (bf, bt) {
                if (bf - bt).abs() > 1e-9 {
                    push(
                        &mut out,
                        ViolationCode::BaseKvMismatch,
                        format!(
                            "line '{}' joins bases {} kV and {} kV; voltage changes only through regulators",
                            line.id, bf, bt
                        ),
                    );
                }
            }
        }
        let k = line.phases.len();
        if line.z_matrix.len() != k || line.z_matrix.iter().any(|row| row.len() != k) {
            push(
                &mut out,
                ViolationCode::ZMatrixDimension,
                format!("line '{}' z matrix is not {k}x{k}", line.id),
            );
            continue;
        }
        for r in 0..k {
            if !(line.z_matrix[r][r].re > 0.0) {
                push(
                    &mut out,
                    ViolationCode::ZMatrixNonPositiveResistance,
                    format!("line '{}' diagonal [{r}]", line.id),
                );
            }
            for c in (r + 1)..k {
                let d = line.z_matrix[r][c] - line.z_matrix[c][r];
                if d.norm() > 1e-12 {
                    push(
                        &mut out,
                        ViolationCode::ZMatrixAsymmetric,
                        format!("line '{}' entries [{r}][{c}] vs [{c}][{r}]", line.id),
                    );
                }
            }
        }
    }

    for reg in &parts.regulators {
        let from_ok = require_bus(&mut out, &format!("regulator '{}'", reg.id), &reg.from_bus);
        let to_ok = require_bus(&mut out, &format!("regulator '{}'", reg.id), &reg.to_bus);
        if !(TAP_RATIO_MIN..=TAP_RATIO_MAX).contains(&reg.tap_ratio) {
            push(
                &mut out,
                ViolationCode::TapRatioOutOfRange,
                format!("regulator '{}' tap {}", reg.id, reg.tap_ratio),
            );
        }
        let steps = (reg.tap_ratio - 1.0) / reg.tap_step;
        if (steps - steps.round()).abs() > 1e-6 {
            push(
                &mut out,
                ViolationCode::TapNotOnStep,
                format!(
                    "regulator '{}' tap {} is not 1 + k*{}",
                    reg.id, reg.tap_ratio, reg.tap_step
                ),
            );
        }
        if let (true, true, RegPhase::Single(p)) = (from_ok, to_ok, reg.phase) {
            for bus in [&reg.from_bus, &reg.to_bus] {
                if !bus_phases(bus).unwrap_or(PhaseSet::ABC).contains(p) {
                    push(
                        &mut out,
                        ViolationCode::PhaseNotAtBus,
                        format!("regulator '{}' phase {p} missing at bus '{bus}'", reg.id),
                    );
                }
            }
        }
    }

    for cap in &parts.capacitors {
        let ok = require_bus(&mut out, &format!("capacitor '{}'", cap.id), &cap.bus_id);
        if cap.phases.is_empty() {
            push(&mut out, ViolationCode::EmptyPhaseSet, format!("capacitor '{}'", cap.id));
        }
        if cap.kvar_per_phase < 0.0 {
            push(
                &mut out,
                ViolationCode::NegativeKvar,
                format!("capacitor '{}' kvar {}", cap.id, cap.kvar_per_phase),
            );
        }
        if ok && !cap.phases.is_subset_of(bus_phases(&cap.bus_id).unwrap_or(PhaseSet::ABC)) {
            push(
                &mut out,
                ViolationCode::PhaseNotAtBus,
                format!("capacitor '{}' at bus '{}'", cap.id, cap.bus_id),
            );
        }
    }

    for load in &parts.loads {
        let ok = require_bus(&mut out, &format!("load '{}'", load.id), &load.bus_id);
        if load.kw_peak < 0.0 {
            push(
                &mut out,
                ViolationCode::NegativeKwPeak,
                format!("load '{}' kw_peak {}", load.id, load.kw_peak),
            );
        }
        if !(load.pf > 0.0 && load.pf <= 1.0) {
            push(
                &mut out,
                ViolationCode::PowerFactorOutOfRange,
                format!("load '{}' pf {}", load.id, load.pf),
            );
        }
        if ok
            && !load
                .phase
                .phases()
                .is_subset_of(bus_phases(&load.bus_id).unwrap_or(PhaseSet::ABC))
        {
            push(
                &mut out,
                ViolationCode::PhaseNotAtBus,
                format!("load '{}' at bus '{}'", load.id, load.bus_id),
            );
        }
    }

    for pv in &parts.pvs {
        let ok = require_bus(&mut out, &format!("pv '{}'", pv.id), &pv.bus_id);
        if pv.s_rating_kva < pv.p_mpp_kw {
            push(
                &mut out,
                ViolationCode::SRatingBelowPmpp,
                format!("pv '{}' S {} kVA < P {} kW", pv.id, pv.s_rating_kva, pv.p_mpp_kw),
            );
        } else {
            let expected = (pv.s_rating_kva * pv.s_rating_kva - pv.p_mpp_kw * pv.p_mpp_kw).sqrt();
            let scale = expected.abs().max(1.0);
            if (pv.q_max_kvar - expected).abs() > 1e-9 * scale {
                push(
                    &mut out,
                    ViolationCode::QmaxInconsistent,
                    format!(
                        "pv '{}' q_max {} kVAr, sqrt(S^2-P^2) = {expected} kVAr",
                        pv.id, pv.q_max_kvar
                    ),
                );
            }
        }
        if ok
            && !pv
                .phase
                .phases()
                .is_subset_of(bus_phases(&pv.bus_id).unwrap_or(PhaseSet::ABC))
        {
            push(
                &mut out,
                ViolationCode::PhaseNotAtBus,
                format!("pv '{}' at bus '{}'", pv.id, pv.bus_id),
            );
        }
    }

    if !bus_ids.contains_key(parts.slack_bus.as_str()) {
        push(
            &mut out,
            ViolationCode::UnknownSlackBus,
            format!("slack bus '{}'", parts.slack_bus),
        );
    }
    if !(parts.slack_voltage_pu > 0.0) {
        push(
            &mut out,
            ViolationCode::NonPositiveSlackVoltage,
            format!("slack voltage {}", parts.slack_voltage_pu),
        );
    }

    // Topology checks only make sense once references resolve.
    if out.iter().any(|v| {
        matches!(
            v.code,
            ViolationCode::UnknownBus | ViolationCode::DuplicateBusId | ViolationCode::UnknownSlackBus
        )
    }) {
        return out;
    }

    check_topology(parts, &mut out);
    out
}

/// Radiality (|edges| = |buses| - 1), connectivity from the slack, and that
/// every phase of a non-slack bus is fed by its parent edge.
fn check_topology(parts: &NetworkParts, out: &mut Vec<Violation>) {
    let n = parts.buses.len();
    let pos: HashMap<&str, usize> = parts
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.as_str(), i))
        .collect();

    struct Edge<'a> {
        from: usize,
        to: usize,
        phases: PhaseSet,
        what: String,
        from_id: &'a str,
        to_id: &'a str,
    }

    let mut edges: Vec<Edge> = Vec::new();
    for line in &parts.lines {
        edges.push(Edge {
            from: pos[line.from_bus.as_str()],
            to: pos[line.to_bus.as_str()],
            phases: line.phases,
            what: format!("line '{}'", line.id),
            from_id: &line.from_bus,
            to_id: &line.to_bus,
        });
    }
    for reg in &parts.regulators {
        let shared = {
            let pf = parts.buses[pos[reg.from_bus.as_str()]].phases;
            let pt = parts.buses[pos[reg.to_bus.as_str()]].phases;
            PhaseSet::from_slice(&pf.iter().filter(|&p| pt.contains(p)).collect::<Vec<_>>())
        };
        edges.push(Edge {
            from: pos[reg.from_bus.as_str()],
            to: pos[reg.to_bus.as_str()],
            phases: shared,
            what: format!("regulator '{}'", reg.id),
            from_id: &reg.from_bus,
            to_id: &reg.to_bus,
        });
    }

    if edges.len() + 1 != n {
        push(
            out,
            ViolationCode::NonRadialTopology,
            format!("{} buses but {} series edges; a radial tree needs {}", n, edges.len(), n - 1),
        );
    }

    // BFS from the slack over the undirected edge set.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (ei, e) in edges.iter().enumerate() {
        adj[e.from].push(ei);
        adj[e.to].push(ei);
    }
    let slack = pos[parts.slack_bus.as_str()];
    let mut seen = vec![false; n];
    let mut fed_by: Vec<Option<usize>> = vec![None; n];
    seen[slack] = true;
    let mut queue = std::collections::VecDeque::from([slack]);
    let mut used_edges = 0usize;
    while let Some(b) = queue.pop_front() {
        for &ei in &adj[b] {
            let e = &edges[ei];
            let other = if e.from == b { e.to } else { e.from };
            if !seen[other] {
                seen[other] = true;
                fed_by[other] = Some(ei);
                used_edges += 1;
                queue.push_back(other);
            }
        }
    }
    for (i, bus) in parts.buses.iter().enumerate() {
        if !seen[i] {
            push(out, ViolationCode::DisconnectedBus, format!("bus '{}'", bus.id));
        }
    }
    if used_edges < edges.len() && edges.len() + 1 == n {
        // same counts but some edge closed a cycle among reached buses
        push(out, ViolationCode::NonRadialTopology, "cycle detected".to_string());
    }

    // Parent edge of each reached non-slack bus must carry all of its phases.
    for (i, bus) in parts.buses.iter().enumerate() {
        if i == slack || !seen[i] {
            continue;
        }
        if let Some(ei) = fed_by[i] {
            let e = &edges[ei];
            if !bus.phases.is_subset_of(e.phases) {
                let missing: Vec<String> = bus
                    .phases
                    .iter()
                    .filter(|&p| !e.phases.contains(p))
                    .map(|p| p.to_string())
                    .collect();
                push(
                    out,
                    ViolationCode::UnfedPhase,
                    format!(
                        "bus '{}' phase(s) {} not carried by {} ({} -> {})",
                        bus.id,
                        missing.join(","),
                        e.what,
                        e.from_id,
                        e.to_id
                    ),
                );
            }
        }
    }
}
