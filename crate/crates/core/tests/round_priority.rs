use cpsfl_core::experiments::verify_round_priority;

/// Descending-lag asynchronous priority against every static ranking, with
/// download times spanning three decades. Counterexamples exist when the
/// download dominates the round, so this stays opt-in.
#[test]
#[ignore = "descending lag is not round-optimal for long downloads"]
fn descending_lag_is_round_optimal_over_wide_download_range() {
    let c = verify_round_priority(100, 1, (0.01, 10.0), true).unwrap();
    assert!(c.passed(), "{c}");
}

#[test]
fn descending_lag_is_round_optimal_for_short_downloads() {
    for seed in [1, 2] {
        let c = verify_round_priority(100, seed, (0.01, 0.1), true).unwrap();
        assert!(c.passed(), "{c}");
        assert_eq!(c.checked, 100);
    }
}
