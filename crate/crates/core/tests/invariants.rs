mod common;

use common::*;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn run(check: fn(&mut StdRng) -> Check, seed: u64) -> Result<(), TestCaseError> {
    check(&mut StdRng::seed_from_u64(seed)).map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ac_trace_identities(seed in any::<u64>()) {
        run(check_ac_trace_identities, seed)?;
    }

    #[test]
    fn dc_trace_identities(seed in any::<u64>()) {
        run(check_dc_trace_identities, seed)?;
    }

    #[test]
    fn recovery_round_trip(seed in any::<u64>()) {
        run(check_recovery_round_trip, seed)?;
    }

    #[test]
    fn gauge_invariance(seed in any::<u64>()) {
        run(check_gauge_invariance, seed)?;
    }

    #[test]
    fn reconstruction_bound(seed in any::<u64>()) {
        run(check_reconstruction_bound, seed)?;
    }
}

#[test]
fn solver_is_deterministic() {
    for name in ["ac3", "dc3", "hybrid4"] {
        check_determinism(name).unwrap();
    }
}

#[test]
fn objective_scaling_leaves_argmin() {
    for name in ["ac3", "dc3", "hybrid4"] {
        for k in [0.1, 7.0] {
            check_objective_scaling(name, k).unwrap();
        }
    }
}

#[test]
fn oracle_dominates_on_small_cases() {
    for name in SMALL_CASES {
        check_oracle_dominance(name).unwrap();
    }
}
