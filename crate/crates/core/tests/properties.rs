use neyman_core::allocation::{
    clairvoyant_integer_allocation, competitive_ratio, half_half_ratio, proxy_mse, Allocation, ArmMoments,
};
use neyman_core::bounds::ThreePointDist;
use neyman_core::designs::{DesignConfig, DesignState};
use neyman_core::montecarlo::{run_trajectory, Population};
use neyman_core::oracle::{enumerate_sample_variance_moments, exhaustive_best_allocation};
use neyman_core::tuning::thm3_schedule;
use proptest::prelude::*;

proptest! {
    #[test]
    fn integer_clairvoyant_attains_the_exhaustive_optimum(
        s1 in 0.01f64..100.0,
        s0 in 0.01f64..100.0,
        t in 2u64..2000,
    ) {
        let m = ArmMoments::new(s1, s0).unwrap();
        let ours = proxy_mse(&clairvoyant_integer_allocation(&m, t), &m).unwrap();
        let best = proxy_mse(&exhaustive_best_allocation(&m, t).unwrap(), &m).unwrap();
        prop_assert!((ours - best).abs() <= 1e-12 * best);
    }

    #[test]
    fn no_split_beats_the_benchmark(s1 in 0.0f64..50.0, s0 in 0.01f64..50.0, t in 2u64..5000, frac in 0.0f64..1.0) {
        let m = ArmMoments::new(s1, s0).unwrap();
        let t1 = ((t as f64 * frac) as u64).clamp(1, t - 1);
        let r = competitive_ratio(&Allocation::new(t1, t - t1), &m, t).unwrap();
        prop_assert!(r >= 1.0 - 1e-12);
    }

    #[test]
    fn even_split_ratio_matches_closed_form(rho in 0.0f64..1e3, half in 1u64..10_000) {
        let m = ArmMoments::new(rho, 1.0).unwrap();
        let r = competitive_ratio(&Allocation::new(half, half), &m, 2 * half).unwrap();
        prop_assert!((r - half_half_ratio(rho)).abs() <= 1e-12 * r);
    }

    #[test]
    fn enumerated_second_moment_dominates_squared_variance(
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
        n in 2usize..=6,
    ) {
        let p_neg = a * (1.0 - b);
        let d = ThreePointDist::new(p_neg, 1.0 - a, a * b).unwrap();
        let (first, second) = enumerate_sample_variance_moments(&d, n).unwrap();
        prop_assert!(second + 1e-15 >= first * first);
    }

    #[test]
    fn simulated_totals_fill_the_horizon(seed in any::<u64>(), index in 0u64..1_000_000, rho in 0.0f64..10.0) {
        let pop = Population::gaussian(0.5, rho, 0.0, 1.0).unwrap();
        let design = DesignConfig::multi_stage(400, &thm3_schedule(3).unwrap()).unwrap();
        let r = run_trajectory(&design, &pop, seed, index).unwrap();
        prop_assert_eq!(r.totals.t1 + r.totals.t0, 400);
        prop_assert_eq!(r.case_path.len(), 3);
    }
}

#[test]
fn state_survives_a_json_round_trip_mid_experiment() {
    let design = DesignConfig::multi_stage(1000, &thm3_schedule(3).unwrap()).unwrap();
    let (mut state, first) = DesignState::start(design).unwrap();
    let treated: Vec<f64> = (0..first.t1).map(|i| (i % 7) as f64).collect();
    let control: Vec<f64> = (0..first.t0).map(|i| (i % 3) as f64).collect();
    let second = state.submit(&treated, &control).unwrap().unwrap();

    let mut restored: DesignState = serde_json::from_str(&serde_json::to_string(&state).unwrap()).unwrap();
    let t: Vec<f64> = (0..second.t1).map(|i| (i % 5) as f64).collect();
    let c: Vec<f64> = (0..second.t0).map(|i| (i % 2) as f64).collect();
    assert_eq!(restored.submit(&t, &c).unwrap(), state.submit(&t, &c).unwrap());
    assert_eq!(restored.case_path(), state.case_path());
}
