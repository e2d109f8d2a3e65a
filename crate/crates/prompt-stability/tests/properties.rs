//! Property-based invariants of the agreement measure and the bootstrap.

mod common;

use common::{oracle_alpha, table_from_rows, OracleScale};
use prompt_stability::resampling::{bootstrap_alpha, BootstrapConfig, CiMethod};
use prompt_stability::{alpha, Scale};
use proptest::prelude::*;

/// Random sparse label matrix: units x coders of optional category indices.
fn matrix(
    categories: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = Vec<Vec<Option<String>>>> {
    (2usize..=15, 2usize..=5, categories).prop_flat_map(|(units, coders, cats)| {
        proptest::collection::vec(
            proptest::collection::vec(
                proptest::option::weighted(0.7, 0..cats).prop_map(|c| c.map(|c| c.to_string())),
                coders,
            ),
            units,
        )
    })
}

fn has_pairable(rows: &[Vec<Option<String>>]) -> bool {
    rows.iter()
        .any(|r| r.iter().flatten().count() >= 2)
}

proptest! {
    #[test]
    fn matches_pairwise_oracle_nominal(rows in matrix(1..=5)) {
        let expected = oracle_alpha(&rows, OracleScale::Nominal);
        let got = alpha(&table_from_rows(&rows, Scale::Nominal)).ok();
        match (expected, got) {
            (None, None) => {}
            (Some(e), Some(g)) => prop_assert!((e - g).abs() < 1e-12, "oracle {e} vs {g}"),
            other => prop_assert!(false, "divergent definedness: {other:?}"),
        }
    }

    #[test]
    fn matches_pairwise_oracle_interval(rows in matrix(1..=5)) {
        let expected = oracle_alpha(&rows, OracleScale::Interval);
        let got = alpha(&table_from_rows(&rows, Scale::Interval)).ok();
        match (expected, got) {
            (None, None) => {}
            (Some(e), Some(g)) => prop_assert!((e - g).abs() < 1e-12, "oracle {e} vs {g}"),
            other => prop_assert!(false, "divergent definedness: {other:?}"),
        }
    }

    #[test]
    fn unit_order_is_irrelevant(rows in matrix(1..=4), seed in any::<u64>()) {
        prop_assume!(has_pairable(&rows));
        let base = alpha(&table_from_rows(&rows, Scale::Nominal)).unwrap();
        let mut shuffled = rows.clone();
        // Deterministic Fisher-Yates driven by the seed.
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let j = (state >> 33) as usize % (i + 1);
            shuffled.swap(i, j);
        }
        let permuted = alpha(&table_from_rows(&shuffled, Scale::Nominal)).unwrap();
        prop_assert!((base - permuted).abs() < 1e-12);
    }

    #[test]
    fn nominal_alpha_survives_label_renaming(rows in matrix(1..=4)) {
        prop_assume!(has_pairable(&rows));
        let base = alpha(&table_from_rows(&rows, Scale::Nominal)).unwrap();
        let renamed: Vec<Vec<Option<String>>> = rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|c| c.as_ref().map(|v| format!("category-{v}-renamed")))
                    .collect()
            })
            .collect();
        let renamed = alpha(&table_from_rows(&renamed, Scale::Nominal)).unwrap();
        prop_assert!((base - renamed).abs() < 1e-12);
    }

    #[test]
    fn interval_alpha_is_affine_invariant(
        rows in matrix(1..=5),
        a in 1i64..=7,
        b in -50i64..=50,
    ) {
        prop_assume!(has_pairable(&rows));
        let base = alpha(&table_from_rows(&rows, Scale::Interval)).unwrap();
        let mapped: Vec<Vec<Option<String>>> = rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|c| {
                        c.as_ref()
                            .map(|v| (a * v.parse::<i64>().unwrap() + b).to_string())
                    })
                    .collect()
            })
            .collect();
        let mapped = alpha(&table_from_rows(&mapped, Scale::Interval)).unwrap();
        prop_assert!((base - mapped).abs() < 1e-12, "base {base} mapped {mapped}");
    }

    #[test]
    fn bootstrap_interval_brackets_its_mean(rows in matrix(2..=3), seed in any::<u64>()) {
        let table = table_from_rows(&rows, Scale::Nominal);
        prop_assume!(table.pairable_units() >= 2);
        let cfg = BootstrapConfig {
            samples: 100,
            confidence: 0.9,
            method: CiMethod::Percentile,
            seed,
        };
        if let Ok(est) = bootstrap_alpha(&table, &cfg) {
            prop_assert!(est.ci_lower <= est.ci_upper);
            prop_assert!(est.mean_alpha >= est.ci_lower - 1e-9);
            prop_assert!(est.mean_alpha <= est.ci_upper + 1e-9);
            prop_assert!(est.samples_used + est.degenerate_samples == 100);
        }
    }
}
