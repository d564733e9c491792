mod common;

use std::collections::HashSet;

use cfx_core::encoding::split_indices;
use cfx_core::generate::describe_counterfactual;
use cfx_core::loss::{binary_penalty, unary_penalty, BinaryParams};
use cfx_core::{check_constraint, fit_encoding, BinaryMode, EncodingState, Instance};
use common::{synth_schema, synth_table};
use proptest::prelude::*;

fn state() -> EncodingState {
    fit_encoding(&synth_table(400, 9), &synth_schema()).unwrap()
}

fn instance() -> impl Strategy<Value = Instance> {
    (18.0..69.0f64, 10.0..59.0f64, 0..3usize, 0..3usize, any::<bool>()).prop_map(|(age, hours, l, c, g)| {
        Instance::new()
            .with("age", age)
            .with("hours", hours)
            .with("level", ["low", "mid", "high"][l])
            .with("color", ["blue", "green", "red"][c])
            .with("group", if g { "a" } else { "b" })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn encoding_round_trips_within_unit_box(x in instance()) {
        let s = state();
        let v = s.encode(&x).unwrap();
        prop_assert_eq!(v.len(), s.width);
        prop_assert!(v.iter().all(|c| (0.0..=1.0).contains(c)));
        let back = s.decode(&v).unwrap();
        for (name, value) in x.iter() {
            let got = back.get(name).unwrap();
            match (value.as_number(), got.as_number()) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9),
                _ => prop_assert_eq!(value, got),
            }
        }
    }

    #[test]
    fn splits_partition_the_rows(n in 10usize..2000, seed in any::<u64>()) {
        let s = split_indices(n, seed).unwrap();
        prop_assert_eq!(s.train.len() + s.validation.len() + s.test.len(), n);
        let all: HashSet<_> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        prop_assert_eq!(all.len(), n);
        prop_assert!(all.iter().all(|&i| i < n));
    }

    #[test]
    fn constraints_hold_for_unchanged_instances(x in instance()) {
        let schema = synth_schema();
        for c in &schema.constraints {
            prop_assert!(check_constraint(&x, &x, c, &schema).unwrap());
        }
    }

    #[test]
    fn unary_penalty_shrinks_as_the_counterfactual_rises(x in 0.0..1.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(unary_penalty(x, hi) <= unary_penalty(x, lo));
        prop_assert!(unary_penalty(x, lo) >= 0.0);
    }

    #[test]
    fn hinge_binary_penalty_is_monotone_in_the_effect(
        x1 in 0.0..1.0f64, x1c in 0.0..1.0f64, x2 in 0.0..1.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64,
    ) {
        let p = BinaryParams { c1: 0.0, c2: 0.1, mode: BinaryMode::Hinge };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(binary_penalty(x1, x1c, x2, hi, p) <= binary_penalty(x1, x1c, x2, lo, p) + 1e-12);
    }

    #[test]
    fn sparsity_never_exceeds_mutable_features(x in instance(), y in instance()) {
        let schema = synth_schema();
        let s = state();
        // Immutable features are copied back, as the generator does.
        let y = y.with("group", x.get("group").unwrap().clone());
        let (xv, yv) = (s.encode(&x).unwrap(), s.encode(&y).unwrap());
        let r = describe_counterfactual(&schema, &s, &x, &xv, &yv, 0, 1, 1).unwrap();
        prop_assert!(r.sparsity_count <= s.mutable_feature_count());
        prop_assert_eq!(r.sparsity_count, r.changed_features.len());
    }
}
