use proptest::prelude::*;

use fedro_core::aggregation::{
    aggregate, average, certify_robustness, cw_median, cw_trimmed_mean, geometric_median, kappa_empirical,
    nnm_transform, AggregatorConfig, Rule,
};
use fedro_core::ParameterVector;

fn rules() -> Vec<Rule> {
    vec![
        Rule::Average,
        Rule::CwTrimmedMean,
        Rule::CwMedian,
        Rule::GeometricMedian,
        Rule::NnmThen(Box::new(Rule::CwTrimmedMean)),
        Rule::NnmThen(Box::new(Rule::CwMedian)),
    ]
}

fn instance(max_n: usize, dim: usize) -> impl Strategy<Value = Vec<ParameterVector>> {
    prop::collection::vec(prop::collection::vec(-50.0f64..50.0, dim), 1..=max_n)
        .prop_map(|rows| rows.into_iter().map(ParameterVector::new).collect())
}

fn sum_of_distances(z: &[f64], inputs: &[ParameterVector]) -> f64 {
    inputs
        .iter()
        .map(|w| w.as_slice().iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .sum()
}

/// Compass search on the sum of distances, shrinking the step when no move helps.
fn geometric_median_oracle(inputs: &[ParameterVector]) -> Vec<f64> {
    let dim = inputs[0].dim();
    let mut z = average(inputs).unwrap().into_inner();
    let mut step = 10.0;
    let mut best = sum_of_distances(&z, inputs);
    while step > 1e-10 {
        let mut moved = false;
        for j in 0..dim {
            for sign in [1.0, -1.0] {
                let mut trial = z.clone();
                trial[j] += sign * step;
                let value = sum_of_distances(&trial, inputs);
                if value < best {
                    best = value;
                    z = trial;
                    moved = true;
                }
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    z
}

#[test]
fn geometric_median_matches_descent_oracle() {
    let fixed = vec![
        ParameterVector::new(vec![0.0, 0.0]),
        ParameterVector::new(vec![1.0, 0.0]),
        ParameterVector::new(vec![0.0, 1.0]),
    ];
    let oracle = geometric_median_oracle(&fixed);
    assert!((oracle[0] - 0.2113).abs() < 1e-4 && (oracle[1] - 0.2113).abs() < 1e-4);
    let got = geometric_median(&fixed, 1e-8, 200).unwrap();
    for j in 0..2 {
        assert!((got[j] - oracle[j]).abs() < 1e-4);
    }
}

#[test]
fn kappa_example_and_certification() {
    let inputs: Vec<ParameterVector> = [1.0, 2.0, 3.0, 100.0].iter().map(|&v| ParameterVector::new(vec![v])).collect();
    let cfg = AggregatorConfig::new(Rule::CwTrimmedMean);
    let report = kappa_empirical(&inputs, 1, &cfg).unwrap();
    assert!((report.kappa_hat - 0.49996).abs() < 1e-4);
    let witness: Vec<f64> = report.witness_subset.iter().map(|&i| inputs[i][0]).collect();
    assert_eq!(witness, vec![2.0, 3.0, 100.0]);
    assert_eq!(report.instances_tested, 4);

    let avg = certify_robustness(&AggregatorConfig::new(Rule::Average), 8, 0, 0.0, 200, 3).unwrap();
    assert!(avg.holds);
    assert!(avg.max_ratio.abs() <= 1e-12);
}

#[test]
fn median_claim_calibrated_then_held_out() {
    let cfg = AggregatorConfig::new(Rule::CwMedian);
    let calibration = certify_robustness(&cfg, 5, 2, f64::INFINITY, 200, 100).unwrap();
    let claim = calibration.max_ratio * 1.5;
    let holdout = certify_robustness(&cfg, 5, 2, claim, 200, 200).unwrap();
    assert!(holdout.holds, "{} > {claim}", holdout.max_ratio);
}

#[test]
fn trimmed_mean_rejects_too_small_claim() {
    let report = certify_robustness(&AggregatorConfig::new(Rule::CwTrimmedMean), 4, 1, 0.1, 50, 0).unwrap();
    assert!(!report.holds);
    assert_eq!(report.witness_subset.len(), 3);
}

#[test]
fn nnm_against_trimmed_mean_frequency() {
    let plain = AggregatorConfig::new(Rule::CwTrimmedMean);
    let mixed = AggregatorConfig::new(Rule::NnmThen(Box::new(Rule::CwTrimmedMean)));
    let total = 200usize;
    let wins = (0..total)
        .filter(|&index| {
            let a = certify_robustness(&mixed, 8, 2, f64::INFINITY, 1, index as u64).unwrap().max_ratio;
            let b = certify_robustness(&plain, 8, 2, f64::INFINITY, 1, index as u64).unwrap().max_ratio;
            a <= b
        })
        .count();
    // reported only: on Gaussian instances mixing often raises the per-instance ratio
    println!("nnm_then_cw_trimmed_mean <= cw_trimmed_mean on {wins}/{total} instances");

}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rules_are_permutation_invariant(inputs in instance(9, 3), seed in any::<u64>()) {
        let b_hat = (inputs.len() - 1) / 2;
        let mut shuffled = inputs.clone();
        let k = shuffled.len();
        shuffled.rotate_left((seed as usize) % k);
        if seed % 2 == 0 {
            shuffled.reverse();
        }
        for rule in rules() {
            let cfg = AggregatorConfig::new(rule.clone());
            prop_assert_eq!(aggregate(&inputs, b_hat, &cfg).unwrap(), aggregate(&shuffled, b_hat, &cfg).unwrap(), "{}", rule.name());
        }
    }

    #[test]
    fn rules_are_translation_equivariant(inputs in instance(9, 3), shift in prop::collection::vec(-20.0f64..20.0, 3)) {
        let b_hat = (inputs.len() - 1) / 2;
        let c = ParameterVector::new(shift);
        let moved: Vec<ParameterVector> = inputs.iter().map(|w| w.add(&c)).collect();
        for rule in [Rule::Average, Rule::CwTrimmedMean, Rule::CwMedian, Rule::GeometricMedian] {
            let cfg = AggregatorConfig::new(rule.clone());
            let base = aggregate(&inputs, b_hat, &cfg).unwrap().add(&c);
            let got = aggregate(&moved, b_hat, &cfg).unwrap();
            // the Weiszfeld stopping rule is relative, so allow its tolerance
            let tol = if rule == Rule::GeometricMedian { 1e-6 * (1.0 + base.norm()) } else { 1e-9 };
            prop_assert!(base.dist_sq(&got).sqrt() <= tol, "{}: {:?} vs {:?}", rule.name(), base, got);
        }
    }

    #[test]
    fn agreement_returns_the_common_vector(v in prop::collection::vec(-1e3f64..1e3, 1..5), n in 1usize..10) {
        let w = ParameterVector::new(v);
        let inputs = vec![w.clone(); n];
        let b_hat = (n - 1) / 2;
        for rule in rules() {
            let cfg = AggregatorConfig::new(rule.clone());
            prop_assert_eq!(&aggregate(&inputs, b_hat, &cfg).unwrap(), &w, "{}", rule.name());
            if n <= 12 {
                prop_assert_eq!(kappa_empirical(&inputs, b_hat, &cfg).unwrap().kappa_hat, 0.0);
            }
        }
        prop_assert_eq!(nnm_transform(&inputs, b_hat).unwrap(), inputs);
    }

    #[test]
    fn average_has_zero_kappa_without_byzantine_slots(inputs in instance(10, 2)) {
        let report = kappa_empirical(&inputs, 0, &AggregatorConfig::new(Rule::Average)).unwrap();
        prop_assert!(report.kappa_hat <= 1e-12, "{}", report.kappa_hat);
    }

    #[test]
    fn witness_ratio_recomputes_independently(inputs in instance(8, 2), rule_ix in 0usize..6) {
        prop_assume!(inputs.len() >= 3);
        let b_hat = (inputs.len() - 1) / 2;
        let cfg = AggregatorConfig::new(rules()[rule_ix].clone());
        let report = kappa_empirical(&inputs, b_hat, &cfg).unwrap();
        let out = aggregate(&inputs, b_hat, &cfg).unwrap();
        let s = &report.witness_subset;
        let dim = inputs[0].dim();
        let mut mean = vec![0.0; dim];
        for &i in s {
            for j in 0..dim {
                mean[j] += inputs[i][j] / s.len() as f64;
            }
        }
        let dev: f64 = (0..dim).map(|j| (out[j] - mean[j]).powi(2)).sum();
        let spread: f64 = s.iter().map(|&i| (0..dim).map(|j| (inputs[i][j] - mean[j]).powi(2)).sum::<f64>()).sum();
        prop_assume!(spread > 1e-9);
        let ratio = dev * s.len() as f64 / spread;
        prop_assert!((ratio - report.kappa_hat).abs() <= 1e-9 * report.kappa_hat.max(1.0), "{} vs {}", ratio, report.kappa_hat);
        prop_assert!(report.kappa_hat >= 0.0);
    }

    #[test]
    fn trimmed_mean_lies_between_median_bounds(inputs in instance(9, 1)) {
        let b_hat = (inputs.len() - 1) / 2;
        let mut xs: Vec<f64> = inputs.iter().map(|w| w[0]).collect();
        xs.sort_by(f64::total_cmp);
        let t = cw_trimmed_mean(&inputs, b_hat).unwrap()[0];
        prop_assert!(t >= xs[b_hat] - 1e-12 && t <= xs[xs.len() - 1 - b_hat] + 1e-12);
        let m = cw_median(&inputs).unwrap()[0];
        prop_assert!(m >= xs[0] && m <= xs[xs.len() - 1]);
    }
}
