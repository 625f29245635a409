//! Compiled tree structure for the sweep solver.
//!
//! Built once per model (only when validation passes) so repeated solves pay
//! no graph or index work. Everything is resolved to dense indices: buses to
//! a slack-rooted order, equipment to phase-node attachment lists.

use std::collections::HashMap;

use num_complex::Complex64;

use super::{NetworkParts, Phase, PhaseNode, PhaseSet, RegPhase};

/// Series element of the tree, oriented parent -> child.
#[derive(Debug, Clone)]
pub enum EdgeKind {
    /// Impedance segment: V_child = V_parent - Z * I.
    Line { z: Vec<Vec<Complex64>> },
    /// Ideal ratio device: V_child = a * V_parent, I_parent = a * I_child,
    /// with `a` = tap (where regulated) times the nominal base ratio.
    Regulator { ratio: Vec<f64> },
}

/// One tree edge with its per-phase node endpoints (parent side, child side).
#[derive(Debug, Clone)]
pub struct TopoEdge {
    pub child_bus: usize,
    pub parent_bus: usize,
    /// (parent node index, child node index) per carried phase, A < B < C.
    pub node_pairs: Vec<(usize, usize)>,
    pub kind: EdgeKind,
    /// Position in `parts.regulators`, when the edge is one.
    pub regulator_pos: Option<usize>,
}

/// Equipment resolved to (phase-node index, share) attachments. Shares are
/// the fraction of the equipment total carried by that node (1 or 1/3).
#[derive(Debug, Clone)]
pub struct Attachment {
    pub nodes: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct Topology {
    /// Bus visit order, slack first; children always after their parent.
    pub bus_order: Vec<usize>,
    /// Parent edge per bus (index into `edges`), None for the slack.
    pub parent_edge: Vec<Option<usize>>,
    pub edges: Vec<TopoEdge>,
    /// Phase-node indices per bus, A < B < C.
    pub bus_nodes: Vec<Vec<usize>>,
    /// Line-to-neutral base volts per phase node.
    pub node_base_v: Vec<f64>,
    /// Phase of each phase node.
    pub node_phase: Vec<Phase>,
    /// Slack phase-node indices.
    pub slack_nodes: Vec<usize>,
    pub slack_bus: usize,
    pub loads: Vec<Attachment>,
    pub pvs: Vec<Attachment>,
    /// Capacitor attachments with per-node susceptance (siemens) at rated kvar.
    pub caps: Vec<Vec<(usize, f64)>>,
}

impl Topology {
    pub(super) fn build(parts: &NetworkParts, nodes: &[PhaseNode]) -> Topology {
        let bus_pos: HashMap<&str, usize> = parts
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.as_str(), i))
            .collect();

        let mut node_pos: HashMap<(usize, Phase), usize> = HashMap::new();
        for n in nodes {
            node_pos.insert((bus_pos[n.bus_id.as_str()], n.phase), n.index);
        }
        let mut bus_nodes = vec![Vec::new(); parts.buses.len()];
        let mut node_base_v = vec![0.0; nodes.len()];
        let mut node_phase = vec![Phase::A; nodes.len()];
        for (bi, bus) in parts.buses.iter().enumerate() {
            for p in bus.phases.iter() {
                let ni = node_pos[&(bi, p)];
                bus_nodes[bi].push(ni);
                node_base_v[ni] = bus.base_kv * 1000.0;
                node_phase[ni] = p;
            }
        }

        // Undirected adjacency over lines + regulators, then root at slack.
        enum Raw<'a> {
            Line(&'a super::LineSegment),
            Reg(usize, &'a super::Regulator),
        }
        let mut raw: Vec<(usize, usize, Raw)> = Vec::new();
        for line in &parts.lines {
            raw.push((
                bus_pos[line.from_bus.as_str()],
                bus_pos[line.to_bus.as_str()],
                Raw::Line(line),
            ));
        }
        for (ri, reg) in parts.regulators.iter().enumerate() {
            raw.push((
                bus_pos[reg.from_bus.as_str()],
                bus_pos[reg.to_bus.as_str()],
                Raw::Reg(ri, reg),
            ));
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); parts.buses.len()];
        for (ei, (f, t, _)) in raw.iter().enumerate() {
            adj[*f].push(ei);
            adj[*t].push(ei);
        }

        let slack_bus = bus_pos[parts.slack_bus.as_str()];
        let mut bus_order = vec![slack_bus];
        let mut parent_edge: Vec<Option<usize>> = vec![None; parts.buses.len()];
        let mut edges: Vec<TopoEdge> = Vec::new();
        let mut seen = vec![false; parts.buses.len()];
        seen[slack_bus] = true;
        let mut queue = std::collections::VecDeque::from([slack_bus]);
        while let Some(parent) = queue.pop_front() {
            // deterministic child order: adjacency follows input order
            for &ei in &adj[parent] {
                let (f, t, ref r) = raw[ei];
                let child = if f == parent { t } else { f };
                if seen[child] {
                    continue;
                }
                seen[child] = true;
                let flipped = t == parent;

                let edge = match r {
                    Raw::Line(line) => {
                        // symmetric Z: orientation does not matter
                        let pairs: Vec<(usize, usize)> = line
                            .phases
                            .iter()
                            .map(|p| (node_pos[&(parent, p)], node_pos[&(child, p)]))
                            .collect();
                        TopoEdge {
                            child_bus: child,
                            parent_bus: parent,
                            node_pairs: pairs,
                            kind: EdgeKind::Line {
                                z: line.z_matrix.clone(),
                            },
                            regulator_pos: None,
                        }
                    }
                    Raw::Reg(ri, reg) => {
                        let shared: Vec<Phase> = parts.buses[parent]
                            .phases
                            .iter()
                            .filter(|&p| parts.buses[child].phases.contains(p))
                            .collect();
                        let base_ratio =
                            parts.buses[child].base_kv / parts.buses[parent].base_kv;
                        let pairs: Vec<(usize, usize)> = shared
                            .iter()
                            .map(|&p| (node_pos[&(parent, p)], node_pos[&(child, p)]))
                            .collect();
                        let ratio: Vec<f64> = shared
                            .iter()
                            .map(|&p| {
                                let regulated = match reg.phase {
                                    RegPhase::Gang => true,
                                    RegPhase::Single(rp) => rp == p,
                                };
                                let tap = if regulated { reg.tap_ratio } else { 1.0 };
                                // declared semantics: V(to) = tap * base_ratio * V(from);
                                // a flipped tree edge inverts the tap
                                if flipped {
                                    base_ratio / tap
                                } else {
                                    tap * base_ratio
                                }
                            })
                            .collect();
                        TopoEdge {
                            child_bus: child,
                            parent_bus: parent,
                            node_pairs: pairs,
                            kind: EdgeKind::Regulator { ratio },
                            regulator_pos: Some(*ri),
                        }
                    }
                };
                parent_edge[child] = Some(edges.len());
                edges.push(edge);
                bus_order.push(child);
                queue.push_back(child);
            }
        }

        let attach = |bus_id: &str, spec: super::PhaseSpec| -> Attachment {
            let bi = bus_pos[bus_id];
            let phases: Vec<Phase> = spec.phases().iter().collect();
            let share = 1.0 / phases.len() as f64;
            Attachment {
                nodes: phases
                    .iter()
                    .map(|&p| (node_pos[&(bi, p)], share))
                    .collect(),
            }
        };

        let loads = parts
            .loads
            .iter()
            .map(|l| attach(&l.bus_id, l.phase))
            .collect();
        let pvs = parts
            .pvs
            .iter()
            .map(|p| attach(&p.bus_id, p.phase))
            .collect();
        let caps = parts
            .capacitors
            .iter()
            .map(|c| {
                let bi = bus_pos[c.bus_id.as_str()];
                c.phases
                    .iter()
                    .map(|p| {
                        let ni = node_pos[&(bi, p)];
                        let v_nom = node_base_v[ni];
                        // susceptance delivering kvar_per_phase at nominal volts
                        (ni, c.kvar_per_phase * 1000.0 / (v_nom * v_nom))
                    })
                    .collect()
            })
            .collect();

        let slack_nodes = bus_nodes[slack_bus].clone();

        Topology {
            bus_order,
            parent_edge,
            edges,
            bus_nodes,
            node_base_v,
            node_phase,
            slack_nodes,
            slack_bus,
            loads,
            pvs,
            caps,
        }
    }

    /// Phases carried by an edge, for iteration alongside `node_pairs`.
    pub fn edge_phases(&self, edge: &TopoEdge) -> Vec<Phase> {
        edge.node_pairs
            .iter()
            .map(|&(_, child)| self.node_phase[child])
            .collect()
    }
}

impl PhaseSet {
    /// Intersection of two sets.
    pub fn intersect(self, other: PhaseSet) -> PhaseSet {
        let phases: Vec<Phase> = self.iter().filter(|&p| other.contains(p)).collect();
        PhaseSet::from_slice(&phases)
    }
}
