//! Property tests over randomized inputs: curve shape invariants, node
//! indexing bijectivity, and formatter/round-trip properties.

use proptest::prelude::*;
use voltq_core::inverter::{vv_q, VoltVarCurve};
use voltq_core::model::{Bus, NetworkModel, NetworkParts, Phase, PhaseSet, Zone};

fn arbitrary_curve() -> impl Strategy<Value = VoltVarCurve> {
    // v1 < v2 <= v3 < v4 built from positive gaps; deadband may be empty
    (
        0.88f64..0.96,
        0.005f64..0.06,
        0.0f64..0.05,
        0.005f64..0.06,
        0.0f64..0.6,
        0.0f64..0.6,
    )
        .prop_map(|(v1, g1, g2, g3, q1, q4)| VoltVarCurve {
            v1,
            v2: v1 + g1,
            v3: v1 + g1 + g2,
            v4: v1 + g1 + g2 + g3,
            q1,
            q4: -q4,
        })
}

proptest! {
    #[test]
    fn vv_q_is_monotone_bounded_and_dead_in_band(
        curve in arbitrary_curve(),
        s in 1.0f64..50.0,
        v_lo in 0.85f64..1.15,
        step in 0.0001f64..0.02,
    ) {
        prop_assume!(curve.validate().is_ok());
        let v_hi = v_lo + step;
        let q_lo = vv_q(&curve, v_lo, s);
        let q_hi = vv_q(&curve, v_hi, s);
        // monotone non-increasing
        prop_assert!(q_hi <= q_lo + 1e-12);
        // bounded by the saturation fractions
        for q in [q_lo, q_hi] {
            prop_assert!(q <= curve.q1 * s + 1e-12);
            prop_assert!(q >= curve.q4 * s - 1e-12);
        }
        // exactly zero inside the deadband
        if v_lo >= curve.v2 && v_hi <= curve.v3 {
            prop_assert_eq!(q_lo, 0.0);
        }
        // continuity at the scale of the step: the slope is bounded by the
        // steepest segment
        let max_slope = (curve.q1 * s) / (curve.v2 - curve.v1).max(1e-9)
            + (curve.q4.abs() * s) / (curve.v4 - curve.v3).max(1e-9);
        prop_assert!((q_hi - q_lo).abs() <= max_slope * step + 1e-9);
    }

    #[test]
    fn node_index_is_a_stable_bijection(
        ids in proptest::collection::btree_set("[a-z][a-z0-9]{0,6}", 1..12),
        phase_mask in proptest::collection::vec(1u8..8, 12),
    ) {
        let buses: Vec<Bus> = ids
            .iter()
            .zip(&phase_mask)
            .map(|(id, &mask)| Bus {
                id: id.clone(),
                phases: {
                    let phases: Vec<Phase> = Phase::ALL
                        .into_iter()
                        .enumerate()
                        .filter(|(k, _)| mask & (1 << k) != 0)
                        .map(|(_, p)| p)
                        .collect();
                    PhaseSet::from_slice(&phases)
                },
                base_kv: 2.4,
                zone: Zone::Near,
            })
            .collect();
        let slack = buses[0].id.clone();
        let parts = NetworkParts {
            buses,
            slack_bus: slack,
            slack_voltage_pu: 1.0,
            ..Default::default()
        };
        let model = NetworkModel::new(parts.clone());
        let index = model.node_index();

        // dense, bijective indices
        for (k, node) in index.iter().enumerate() {
            prop_assert_eq!(node.index, k);
        }
        let mut pairs: Vec<(String, Phase)> = index
            .iter()
            .map(|n| (n.bus_id.clone(), n.phase))
            .collect();
        let total: usize = model.buses().iter().map(|b| b.phases.len()).sum();
        prop_assert_eq!(pairs.len(), total);
        pairs.dedup();
        prop_assert_eq!(pairs.len(), total, "(bus, phase) pairs must be unique");

        // lexicographic by bus id, then A < B < C
        for w in index.windows(2) {
            let key0 = (&w[0].bus_id, w[0].phase);
            let key1 = (&w[1].bus_id, w[1].phase);
            prop_assert!(key0 < key1);
        }

        // rebuilding yields the identical ordering
        let again = NetworkModel::new(parts);
        prop_assert_eq!(again.node_index(), index);
    }

    #[test]
    fn fmt_sig_parses_back_within_precision(x in -1e6f64..1e6, sig in 6usize..10) {
        prop_assume!(x != 0.0);
        let s = voltq_core::report::fmt_sig(x, sig);
        let parsed: f64 = s.parse().unwrap();
        let rel = ((parsed - x) / x).abs();
        prop_assert!(rel < 10f64.powi(-(sig as i32) + 1), "{s} vs {x}");
    }
}
