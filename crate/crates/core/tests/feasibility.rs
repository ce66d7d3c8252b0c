mod common;

use common::*;
use pcsched::feasibility::{solve_powers, verify, VerifyOptions};
use pcsched::rate_model::RateCurve;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Rates delivered by any admissible power vector are feasible, and the
    // computed powers never exceed the ones that produced them.
    #[test]
    fn solved_powers_are_minimal(seed in 0u64..100_000, n in 2usize..=5) {
        let curve = RateCurve::default();
        let inst = random_instance(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let x = sample_feasible_powers(&inst, &mut rng);
        let rates = rates_for(&x, &inst, &curve);
        // rates pinned at zero or saturation do not determine the power
        prop_assume!(rates.iter().zip(&x).all(|(r, p)| (*p == 0.0) == (*r == 0.0) && *r < curve.saturation));
        let sol = solve_powers(&rates, &inst, &curve).unwrap();
        prop_assert!(sol.is_feasible(), "{:?}", sol.verdict);
        for (p, q) in sol.powers.iter().zip(&x) {
            prop_assert!(*p <= q * (1.0 + 1e-9) + 1e-300);
        }
        let report = verify(&sol.powers, &rates, &inst, &curve, &VerifyOptions::default());
        prop_assert!(report.is_ok(), "{}", report);
    }

    #[test]
    fn feasible_set_is_downward_closed(seed in 0u64..100_000, n in 2usize..=4, shrink in prop::collection::vec(0.0f64..=1.0, 4)) {
        let curve = RateCurve::default();
        let inst = random_instance(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = sample_feasible_powers(&inst, &mut rng);
        let rates = rates_for(&x, &inst, &curve);
        prop_assume!(rates.iter().all(|r| *r < curve.saturation));
        let lower: Vec<f64> = rates.iter().zip(&shrink).map(|(r, t)| r * t).collect();
        prop_assert!(solve_powers(&lower, &inst, &curve).unwrap().is_feasible());
    }

    // Scaling noise, caps and threshold together rescales the powers and
    // leaves the verdict alone.
    #[test]
    fn common_scaling_is_invisible(seed in 0u64..100_000, n in 2usize..=4, log_factor in -3.0f64..3.0, frac in prop::collection::vec(0.0f64..1.0, 4)) {
        let curve = RateCurve::default();
        let inst = random_instance(n, seed);
        let factor = 10f64.powf(log_factor);
        let scaled = inst.scaled_powers(factor).unwrap();
        let targets: Vec<f64> = frac.iter().take(n).map(|f| f * 45.0).collect();
        let a = solve_powers(&targets, &inst, &curve).unwrap();
        let b = solve_powers(&targets, &scaled, &curve).unwrap();
        prop_assert_eq!(a.is_feasible(), b.is_feasible());
        if a.is_feasible() {
            for (p, q) in a.powers.iter().zip(&b.powers) {
                prop_assert!((p * factor - q).abs() <= 1e-9 * q.abs().max(1e-300));
            }
        }
    }
}

#[test]
fn tampered_powers_fail_verification() {
    let curve = RateCurve::default();
    let inst = random_instance(3, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (x, rates) = loop {
        let x = sample_feasible_powers(&inst, &mut rng);
        let rates = rates_for(&x, &inst, &curve);
        if rates.iter().all(|r| *r > 1.0) {
            break (x, rates);
        }
    };
    let mut bad = x.clone();
    bad[1] *= 0.5;
    let report = verify(&bad, &rates, &inst, &curve, &VerifyOptions::default());
    assert!(report.violates("sinr_shortfall"), "{report}");
    bad[1] = 2.0 * MAX_POWER_MW;
    let report = verify(&bad, &rates, &inst, &curve, &VerifyOptions::default());
    assert!(report.violates("power_cap"), "{report}");
}
