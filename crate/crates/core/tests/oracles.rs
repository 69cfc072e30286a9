use iag_core::oracle::{check_fps, check_gradients, check_metrics, check_normalization, OracleCheck};

fn assert_all(checks: &[OracleCheck]) {
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(ToString::to_string).collect();
    assert!(failed.is_empty(), "{failed:#?}");
}

#[test]
fn gradients_hold_across_seeds() {
    for seed in 10..14 {
        assert_all(&check_gradients(seed).unwrap());
    }
}

#[test]
fn metrics_and_sampling_match_references() {
    for seed in [21, 22] {
        assert_all(&check_metrics(300, seed).unwrap());
        assert_all(&[check_fps(150, seed).unwrap()]);
    }
}

#[test]
fn normalisation_survives_other_draws() {
    assert_all(&check_normalization(250, 31).unwrap());
}
