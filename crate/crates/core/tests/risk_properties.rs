use drtopo::cost::AnalyticCost;
use drtopo::dro::{cvar_minimize, wasserstein_dual_value, WassersteinConfig};
use drtopo::oracle::cvar_tail_average;
use drtopo::uncertainty::{draw_coupling_samples, NominalLaw, ParameterSpace, ReferenceKernel};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cvar_is_nondecreasing_in_the_level(
        costs in proptest::collection::vec(-5.0f64..5.0, 1..40), a in 0.0f64..0.98, b in 0.0f64..0.98
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let c_lo = cvar_minimize(&costs, lo).unwrap().cvar;
        let c_hi = cvar_minimize(&costs, hi).unwrap().cvar;
        prop_assert!(c_lo <= c_hi + 1e-12);
        let mean = costs.iter().sum::<f64>() / costs.len() as f64;
        let max = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(c_lo >= mean - 1e-9 && c_hi <= max + 1e-9);
    }

    #[test]
    fn cvar_minimization_matches_the_tail_average(
        costs in proptest::collection::vec(-5.0f64..5.0, 1..40), beta in 0.0f64..0.98
    ) {
        let w = vec![1.0 / costs.len() as f64; costs.len()];
        let direct = cvar_tail_average(&costs, &w, beta).unwrap();
        prop_assert!((cvar_minimize(&costs, beta).unwrap().cvar - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
    }

    #[test]
    fn wasserstein_dual_shifts_with_the_cost(
        shift in -3.0f64..3.0, lambda in 0.05f64..20.0, m in 0.0f64..2.0, seed in 0u64..1000
    ) {
        let base = AnalyticCost::fixed(1, |x| (x[0] - 0.2).powi(2));
        let moved = AnalyticCost::fixed(1, move |x| (x[0] - 0.2).powi(2) + shift);
        let kernel = ReferenceKernel::new(0.2, ParameterSpace::ball(vec![0.0], 5.0).unwrap()).unwrap();
        let law = NominalLaw::empirical(vec![vec![0.0], vec![0.5]]).unwrap();
        let batch = draw_coupling_samples(&law, &kernel, 16, seed, 0).unwrap();
        let cfg = WassersteinConfig::new(m, 0.1).unwrap();
        let d0 = wasserstein_dual_value(&base, &[], lambda, &cfg, &batch).unwrap();
        let d1 = wasserstein_dual_value(&moved, &[], lambda, &cfg, &batch).unwrap();
        prop_assert!((d1 - d0 - shift).abs() <= 1e-9 * (1.0 + d0.abs()));
    }

    #[test]
    fn wasserstein_dual_is_nondecreasing_in_the_radius(
        lambda in 0.05f64..20.0, a in 0.0f64..3.0, b in 0.0f64..3.0, seed in 0u64..1000
    ) {
        let cost = AnalyticCost::fixed(1, |x| x[0].sin() + 0.5 * x[0] * x[0]);
        let kernel = ReferenceKernel::new(0.5, ParameterSpace::ball(vec![0.0], 6.0).unwrap()).unwrap();
        let law = NominalLaw::empirical(vec![vec![0.3]]).unwrap();
        let batch = draw_coupling_samples(&law, &kernel, 12, seed, 1).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let d = |m: f64| wasserstein_dual_value(&cost, &[], lambda, &WassersteinConfig::new(m, 0.05).unwrap(), &batch).unwrap();
        prop_assert!(d(lo) <= d(hi) + 1e-12);
    }
}
