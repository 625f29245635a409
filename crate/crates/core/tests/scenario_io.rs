//! Scenario file handling: the shipped fixture round-trips byte-for-byte,
//! unresolved references fail loudly, and the seeded profile assignment is
//! statistically uniform.

use std::path::PathBuf;

use voltq_core::model::{io::load_feeder, LoadPoint, NetworkModel, Phase, PhaseSpec};
use voltq_core::profiles::{assign_profiles, generate_profiles};
use voltq_core::scenario::{self, Scenario};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

#[test]
fn shipped_scenario_reserializes_byte_stable() {
    for name in ["desk30_aug.json", "desk30_ov.json", "desk30_hc.json", "twobus.json"] {
        let path = fixtures().join("scenarios").join(name);
        let original = std::fs::read_to_string(&path).unwrap();
        let parsed: Scenario = serde_json::from_str(&original).unwrap();
        let reserialized = serde_json::to_string_pretty(&parsed).unwrap() + "\n";
        assert_eq!(
            original, reserialized,
            "{name} must round-trip byte-for-byte"
        );
    }
}

#[test]
fn shipped_scenarios_load_and_validate() {
    for name in ["desk30_aug.json", "desk30_ov.json", "desk30_hc.json", "twobus.json"] {
        let ctx = scenario::load_scenario(&fixtures().join("scenarios").join(name))
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(ctx.model.is_valid());
        assert_eq!(
            ctx.model.pv_count(),
            ctx.base_model.pv_count() + ctx.scenario.placement.preinstalled_units
        );
    }
}

#[test]
fn missing_profile_reference_is_a_validation_error_naming_the_id() {
    // feeder references profile ids that the generated set does not contain
    let dir = std::env::temp_dir().join("voltq_scenario_io_test");
    std::fs::create_dir_all(&dir).unwrap();
    let feeder_src = std::fs::read_to_string(fixtures().join("feeders/twobus.json")).unwrap();
    let feeder_bad = feeder_src.replace("\"load_0\"", "\"ghost_profile\"");
    std::fs::write(dir.join("feeder_bad.json"), feeder_bad).unwrap();
    std::fs::write(
        dir.join("scenario_bad.json"),
        r#"{
            "feeder": "feeder_bad.json",
            "seed": 1,
            "assignment": "from_feeder",
            "profiles": { "count_load": 1, "count_pv": 1 }
        }"#,
    )
    .unwrap();

    let err = scenario::load_scenario(&dir.join("scenario_bad.json")).unwrap_err();
    let message = err.to_string();
    assert!(
        message.contains("ghost_profile"),
        "error must name the unresolved id, got: {message}"
    );
}

#[test]
fn randomized_assignment_is_uniform_chi_square() {
    // 1000 loads, 5 profiles: chi-square against uniform with 4 dof
    let mut parts = load_feeder(&fixtures().join("feeders/twobus.json"))
        .unwrap()
        .to_parts();
    parts.loads.clear();
    for i in 0..1000 {
        parts.loads.push(LoadPoint {
            id: format!("ld{i:04}"),
            bus_id: "t".into(),
            phase: PhaseSpec::Single(Phase::A),
            kw_peak: 1.0,
            pf: 0.95,
            profile_id: String::new(),
        });
    }
    let model = NetworkModel::new(parts);
    let profiles = generate_profiles(5, 5, 1);

    let assignment = assign_profiles(&model, &profiles, 12345);
    let mut counts = std::collections::BTreeMap::new();
    for id in &assignment.load_profile {
        *counts.entry(id.clone()).or_insert(0usize) += 1;
    }
    assert_eq!(counts.len(), 5, "every profile should be drawn at least once");
    let expected = 1000.0 / 5.0;
    let chi2: f64 = counts
        .values()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    // chi-square 4 dof: p > 0.01 means chi2 < 13.28
    assert!(chi2 < 13.28, "chi-square {chi2} rejects uniformity at p = 0.01");

    // identical seed reproduces the exact map
    let again = assign_profiles(&model, &profiles, 12345);
    assert_eq!(assignment, again);
}

#[test]
fn single_profile_of_a_kind_is_assigned_everywhere() {
    let model = load_feeder(&fixtures().join("feeders/desk30.json")).unwrap();
    let profiles = generate_profiles(9, 1, 1);
    let assignment = assign_profiles(&model, &profiles, 7);
    assert!(assignment.load_profile.iter().all(|p| p == "load_0"));
    assert!(assignment.pv_profile.iter().all(|p| p == "pv_0"));
}

#[test]
fn injection_respects_profiles_and_season() {
    let ctx = scenario::load_scenario(&fixtures().join("scenarios/twobus.json")).unwrap();
    let sc = &ctx.scenario;
    // twobus assigns from the feeder: load_0 / pv_0
    let midnight = scenario::injection_at(&ctx.model, sc, 8, 0, &[]);
    assert_eq!(midnight.pv_kw[0], 0.0, "no generation at night");
    let noon = scenario::injection_at(&ctx.model, sc, 8, 12, &[]);
    assert!(noon.pv_kw[0] > 0.0);
    assert!(noon.load_kw[0] > 0.0);
    assert!(noon.pv_kvar[0] == 0.0, "base injections carry no reactive");
}
