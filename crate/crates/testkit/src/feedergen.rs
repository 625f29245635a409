//! Seeded random radial feeder generator for oracle comparisons.
//!
//! Produces small unbalanced trees with coupled line matrices, a regulator
//! or two, capacitors, loads and PVs. Everything derives from one ChaCha8
//! seed so failures replay exactly.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voltq_core::model::{
    Bus, CapacitorBank, LineSegment, LoadPoint, NetworkModel, NetworkParts, Phase, PhaseSet,
    PhaseSpec, PvSystem, RegPhase, Regulator, Zone,
};
use voltq_core::powerflow::InjectionState;

pub struct GeneratorConfig {
    pub max_buses: usize,
    pub base_kv: f64,
    /// Scales all load/PV power; keep modest so random cases stay feasible.
    pub load_scale: f64,
    pub with_regulator: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            max_buses: 12,
            base_kv: 2.4,
            load_scale: 1.0,
            with_regulator: true,
        }
    }
}

fn random_phases(rng: &mut ChaCha8Rng, parent: PhaseSet) -> PhaseSet {
    let avail: Vec<Phase> = parent.iter().collect();
    loop {
        let picked: Vec<Phase> = avail
            .iter()
            .copied()
            .filter(|_| rng.gen_bool(0.7))
            .collect();
        if !picked.is_empty() {
            return PhaseSet::from_slice(&picked);
        }
    }
}

fn random_z(rng: &mut ChaCha8Rng, k: usize) -> Vec<Vec<Complex64>> {
    let mut z = vec![vec![Complex64::new(0.0, 0.0); k]; k];
    for r in 0..k {
        z[r][r] = Complex64::new(rng.gen_range(0.05..0.4), rng.gen_range(0.15..0.8));
    }
    for r in 0..k {
        for c in (r + 1)..k {
            let m = Complex64::new(rng.gen_range(0.01..0.1), rng.gen_range(0.05..0.35));
            z[r][c] = m;
            z[c][r] = m;
        }
    }
    z
}

/// Builds a random valid feeder and a matching operating point.
pub fn random_feeder(seed: u64, cfg: &GeneratorConfig) -> (NetworkModel, InjectionState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_buses = rng.gen_range(4..=cfg.max_buses.max(5));

    let mut buses = vec![Bus {
        id: "b000".into(),
        phases: PhaseSet::ABC,
        base_kv: cfg.base_kv,
        zone: Zone::Near,
    }];
    let mut lines = Vec::new();
    let mut regulators = Vec::new();
    let mut reg_budget = if cfg.with_regulator { 2 } else { 0 };

    for i in 1..n_buses {
        let parent = rng.gen_range(0..buses.len());
        let parent_phases = buses[parent].phases;
        let phases = random_phases(&mut rng, parent_phases);
        let id = format!("b{i:03}");
        let zone = if i > n_buses / 2 { Zone::Far } else { Zone::Near };
        buses.push(Bus {
            id: id.clone(),
            phases,
            base_kv: cfg.base_kv,
            zone,
        });
        let parent_id = buses[parent].id.clone();
        // never hang a regulator directly off the slack: power_ledger reads
        // the slack infeed from line flows only
        let use_reg =
            reg_budget > 0 && parent != 0 && phases == parent_phases && rng.gen_bool(0.25);
        if use_reg {
            reg_budget -= 1;
            let steps = rng.gen_range(-4i32..=8);
            regulators.push(Regulator {
                id: format!("r{i:03}"),
                from_bus: parent_id,
                to_bus: id,
                phase: RegPhase::Gang,
                tap_ratio: 1.0 + steps as f64 * 0.00625,
                tap_step: 0.00625,
            });
        } else {
            lines.push(LineSegment {
                id: format!("l{i:03}"),
                from_bus: parent_id,
                to_bus: id,
                phases,
                z_matrix: random_z(&mut rng, phases.len()),
            });
        }
    }

    let mut loads = Vec::new();
    let mut pvs = Vec::new();
    let mut capacitors = Vec::new();
    for (bi, bus) in buses.iter().enumerate().skip(1) {
        let phases: Vec<Phase> = bus.phases.iter().collect();
        if rng.gen_bool(0.8) {
            let p = phases[rng.gen_range(0..phases.len())];
            loads.push(LoadPoint {
                id: format!("ld{bi:03}"),
                bus_id: bus.id.clone(),
                phase: PhaseSpec::Single(p),
                kw_peak: rng.gen_range(5.0..60.0) * cfg.load_scale,
                pf: rng.gen_range(0.85..0.99),
                profile_id: "load_0".into(),
            });
        }
        if rng.gen_bool(0.4) {
            let p = phases[rng.gen_range(0..phases.len())];
            let p_mpp: f64 = rng.gen_range(5.0..30.0) * cfg.load_scale;
            let s = p_mpp / 0.9;
            pvs.push(PvSystem {
                id: format!("pv{bi:03}"),
                bus_id: bus.id.clone(),
                phase: PhaseSpec::Single(p),
                p_mpp_kw: p_mpp,
                s_rating_kva: s,
                q_max_kvar: (s * s - p_mpp * p_mpp).sqrt(),
                profile_id: "pv_0".into(),
                index: 0,
            });
        }
        if capacitors.is_empty() && rng.gen_bool(0.3) {
            capacitors.push(CapacitorBank {
                id: format!("cap{bi:03}"),
                bus_id: bus.id.clone(),
                phases: bus.phases,
                kvar_per_phase: rng.gen_range(10.0..40.0) * cfg.load_scale,
            });
        }
    }

    let parts = NetworkParts {
        buses,
        lines,
        regulators,
        capacitors,
        loads,
        pvs,
        slack_bus: "b000".into(),
        slack_voltage_pu: 1.0,
    };
    let model = NetworkModel::new(parts);
    assert!(
        model.is_valid(),
        "generator produced invalid model (seed {seed}): {:?}",
        model.validate()
    );

    let mut inj = InjectionState::peak(&model);
    for (j, pv) in model.pvs().iter().enumerate() {
        inj.pv_kw[j] = pv.p_mpp_kw * rng.gen_range(0.5..1.0);
        inj.pv_kvar[j] = rng.gen_range(-0.8..0.8) * pv.q_max_kvar;
    }
    for q in inj.load_kw.iter_mut() {
        *q *= rng.gen_range(0.4..1.0);
    }
    (model, inj)
}
