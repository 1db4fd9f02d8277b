use flumn::model::{emission_logpdf, emission_moments, ModelVariant};
use flumn::synthetic::{generate_panel, ScenarioSpec};
use proptest::prelude::*;

/// Average emission log density of the drawn growth under the true phases,
/// against its analytic expectation `-(ln 2πv + 1)/2` per cell. Each cell's
/// log density has variance 1/2, so the average over `n` cells has standard
/// deviation `(2n)^-1/2`. Pooled over a fixed seed list so the check is
/// deterministic.
fn emission_score(variant: ModelVariant, seeds: std::ops::Range<u64>) -> (f64, f64, f64) {
    let (mut total, mut expected, mut n) = (0.0, 0.0, 0usize);
    for seed in seeds {
        let spec = ScenarioSpec { variant, ..ScenarioSpec::reference(seed) };
        let sim = generate_panel(&spec).unwrap();
        for i in 0..sim.growth.n_regions() {
            for t in 0..sim.growth.n_steps() {
                let (z, day) = (sim.true_phases.get(i, t), sim.growth.day(t));
                total += emission_logpdf(sim.growth.get(i, t), z, day, &spec.daily, &spec.dynamics, &variant).unwrap();
                let (_, var) = emission_moments(z, day, &spec.daily, &spec.dynamics, &variant);
                expected -= 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + 1.0);
                n += 1;
            }
        }
    }
    let n = n as f64;
    (total / n, expected / n, (2.0 * n).sqrt().recip())
}

#[test]
fn drawn_growth_scores_like_its_emissions() {
    for v in [ModelVariant::FLU_MN, ModelVariant::TIME_HMM, ModelVariant::FLU_MN_R] {
        let (avg, expected, sd) = emission_score(v, 0..12);
        assert!((avg - expected).abs() < 3.0 * sd, "{v}: average {avg:.5}, expected {expected:.5} ± {sd:.5}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn panel_shape_and_determinism(seed in any::<u64>()) {
        let spec = ScenarioSpec::reference(seed);
        let a = generate_panel(&spec).unwrap();
        let b = generate_panel(&spec).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.panel.n_days(), spec.n_days);
        prop_assert_eq!(a.true_phases.n_steps(), spec.n_days - 1);
        prop_assert_eq!(a.growth.n_steps(), spec.n_days - 1);
        // Every season starts outside the epidemic more often than not.
        let ne_starts = (0..spec.n_regions).filter(|&i| a.true_phases.get(i, 0) == 0).count();
        prop_assert!(ne_starts * 2 >= spec.n_regions);
    }
}
