//! Sweep solver vs the independent Newton nodal reference, plus the
//! physics invariants that hold for any converged solution.

use voltq_core::model::{NetworkModel, PhaseSpec, PvSystem};
use voltq_core::powerflow::{self, InjectionState, SolverOptions};
use voltq_testkit::feedergen::{random_feeder, GeneratorConfig};
use voltq_testkit::newton::solve_newton;
use voltq_testkit::power_ledger;

fn tight_opts() -> SolverOptions {
    SolverOptions {
        tolerance: 1e-9,
        ..SolverOptions::default()
    }
}

#[test]
fn sweep_matches_newton_on_randomized_unbalanced_feeders() {
    let start = std::time::Instant::now();
    for seed in [11u64, 23, 37, 41, 59] {
        let (model, inj) = random_feeder(
            seed,
            &GeneratorConfig {
                max_buses: 14,
                ..GeneratorConfig::default()
            },
        );
        assert!(model.node_count() <= 40, "seed {seed} grew too large");

        let sweep = powerflow::solve(&model, &inj, &tight_opts())
            .unwrap_or_else(|e| panic!("sweep diverged on seed {seed}: {e}"));
        let newton = solve_newton(&model, &inj, 1e-9, 60)
            .unwrap_or_else(|e| panic!("newton failed on seed {seed}: {e}"));

        for (i, node) in model.node_index().iter().enumerate() {
            let d = (sweep.v_mag_pu[i] - newton.v_mag_pu[i]).abs();
            assert!(
                d <= 1e-5,
                "seed {seed} node {}.{}: sweep {} vs newton {} (|d| = {d:.2e})",
                node.bus_id,
                node.phase,
                sweep.v_mag_pu[i],
                newton.v_mag_pu[i]
            );
        }
    }
    assert!(
        start.elapsed().as_secs() < 10,
        "oracle suite took {:?}",
        start.elapsed()
    );
}

#[test]
fn power_balance_holds_at_convergence() {
    for seed in [3u64, 17, 29] {
        let (model, inj) = random_feeder(seed, &GeneratorConfig::default());
        let sol = powerflow::solve(&model, &inj, &tight_opts()).unwrap();
        let ledger = power_ledger(&model, &inj, &sol);
        let residual = ledger.residual();
        assert!(
            residual.norm() < 1e-3,
            "seed {seed}: power imbalance {residual} kVA (ledger {ledger:?})"
        );
    }
}

#[test]
fn adding_leaf_pv_power_never_lowers_leaf_voltage() {
    for seed in [5u64, 13, 31, 43] {
        let (model, inj) = random_feeder(seed, &GeneratorConfig::default());

        // attach a fresh PV at some leaf-ish load bus
        let Some(load) = model.loads().last() else {
            continue;
        };
        let bus = load.bus_id.clone();
        let phase = match load.phase {
            PhaseSpec::Single(p) => p,
            PhaseSpec::ThreePhase => voltq_core::model::Phase::A,
        };
        let mut parts = model.to_parts();
        parts.pvs.push(PvSystem {
            id: "probe_pv".into(),
            bus_id: bus.clone(),
            phase: PhaseSpec::Single(phase),
            p_mpp_kw: 20.0,
            s_rating_kva: 20.0 / 0.9,
            q_max_kvar: ((20.0f64 / 0.9).powi(2) - 400.0).sqrt(),
            profile_id: "pv_0".into(),
            index: 0,
        });
        let model2 = NetworkModel::new(parts);
        assert!(model2.is_valid());

        let mut inj_off = InjectionState {
            load_kw: inj.load_kw.clone(),
            load_kvar: inj.load_kvar.clone(),
            pv_kw: inj.pv_kw.clone(),
            pv_kvar: inj.pv_kvar.clone(),
            cap_on: inj.cap_on.clone(),
        };
        inj_off.pv_kw.push(0.0);
        inj_off.pv_kvar.push(0.0);
        let mut inj_on = inj_off.clone();
        *inj_on.pv_kw.last_mut().unwrap() = 20.0;

        let node = model2.node_position(&bus, phase).unwrap();
        let v_off = powerflow::solve(&model2, &inj_off, &tight_opts()).unwrap().v_mag_pu[node];
        let v_on = powerflow::solve(&model2, &inj_on, &tight_opts()).unwrap().v_mag_pu[node];
        assert!(
            v_on >= v_off - 1e-9,
            "seed {seed}: active injection at {bus}.{phase} lowered |V| from {v_off} to {v_on}"
        );
    }
}

#[test]
fn warm_start_agrees_with_flat_start() {
    let (model, inj) = random_feeder(71, &GeneratorConfig::default());
    let flat = powerflow::solve(&model, &inj, &tight_opts()).unwrap();

    let mut nudged = inj.clone();
    for q in nudged.load_kw.iter_mut() {
        *q *= 1.01;
    }
    let from_flat = powerflow::solve(&model, &nudged, &tight_opts()).unwrap();
    let from_warm = powerflow::solve_warm(&model, &nudged, &tight_opts(), &flat).unwrap();
    for i in 0..model.node_count() {
        assert!((from_flat.v_mag_pu[i] - from_warm.v_mag_pu[i]).abs() < 1e-7);
    }
    assert!(from_warm.iterations <= from_flat.iterations);
}

#[test]
fn sweep_matches_newton_on_the_shipped_feeder() {
    let fixtures = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let ctx =
        voltq_core::scenario::load_scenario(&fixtures.join("scenarios/desk30_ov.json")).unwrap();
    let sc = &ctx.scenario;
    let cap_on = vec![true; ctx.model.capacitors().len()];
    let inj = voltq_core::scenario::injection_at(&ctx.model, sc, sc.month, sc.hour, &cap_on);

    let sweep = powerflow::solve(&ctx.model, &inj, &tight_opts()).unwrap();
    let newton = solve_newton(&ctx.model, &inj, 1e-9, 60).unwrap();
    for i in 0..ctx.model.node_count() {
        let d = (sweep.v_mag_pu[i] - newton.v_mag_pu[i]).abs();
        assert!(d <= 1e-5, "node {i}: |d| = {d:.2e}");
    }
}
