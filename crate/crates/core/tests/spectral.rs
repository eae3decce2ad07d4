use bdqsd::model::{example3, linear, logistic, power};
use bdqsd::spectral::{xi1_two_level, Trend, Xi1Options};
use bdqsd::{conditioned_semigroup, qsd_family, s_diagnostic, truncated_decay_oracle, tv_distance, xi1, BirthDeathModel};

fn builtins() -> Vec<BirthDeathModel> {
    vec![linear(1.0, 2.0), power(1.0, 4.0, 1.0), logistic(2.0, 1.0, 1.0), example3()]
}

#[test]
fn bisection_agrees_with_truncated_oracle() {
    for model in builtins() {
        let bis = xi1(&model, 2000, 1e-8).unwrap();
        let oracle = truncated_decay_oracle(&model, 2000).unwrap();
        assert!(
            (bis.xi1 - oracle.xi1_upper).abs() < 1e-4,
            "{model}: {} vs {}",
            bis.xi1,
            oracle.xi1_upper
        );
    }
}

#[test]
fn qsd_family_at_decay_parameter_matches_oracle_eigenvector() {
    for model in [logistic(2.0, 1.0, 1.0), linear(1.0, 2.0), example3()] {
        let oracle = truncated_decay_oracle(&model, 2000).unwrap();
        let bis = xi1(&model, 2000, 1e-12).unwrap();
        let rho = qsd_family(&model, bis.lo, 40, None).unwrap();
        let a = rho.to_measure().unwrap();
        let b = oracle.qsd.to_measure().unwrap();
        assert!(tv_distance(&a, &b) < 1e-5, "{model}: {}", tv_distance(&a, &b));
    }
}

#[test]
fn logistic_qsd_is_a_fixed_point_of_the_semigroup() {
    let model = logistic(2.0, 1.0, 1.0);
    let bis = xi1(&model, 2000, 1e-12).unwrap();
    let rho = qsd_family(&model, bis.lo, 60, Some(1e-9)).unwrap();
    let mu = rho.to_measure().unwrap();
    for t in [0.1, 1.0] {
        let out = conditioned_semigroup(&model, &mu, t, 80).unwrap();
        let max_err = (1..=60u64)
            .map(|i| (out.law.weight(i) - mu.get(i)).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-6, "t={t}: {max_err}");
    }
}

#[test]
fn two_level_policy_agrees_on_builtins() {
    for model in builtins() {
        let two = xi1_two_level(&model, &Xi1Options::default()).unwrap();
        assert!(two.agree, "{model}");
    }
}

#[test]
fn entrance_series_diagnostic() {
    // Logistic deaths grow quadratically, so the series converges; for the
    // linear process it diverges like the harmonic series.
    let log = s_diagnostic(&logistic(2.0, 1.0, 1.0), 400).unwrap();
    assert_eq!(log.trend, Trend::Converging);
    let lin = s_diagnostic(&linear(1.0, 2.0), 400).unwrap();
    assert_eq!(lin.trend, Trend::Diverging);
    assert!(lin.partial_sum > log.partial_sum);
}
