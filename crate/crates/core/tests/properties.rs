use approx::assert_relative_eq;
use proptest::prelude::*;

use classgain::baselines::{brute_force_integer, kmeans};
use classgain::evaluation::false_classification_ratios;
use classgain::gain::{
    classification_gain, classified_distortion, distortion_sum, grad_log_objective, log_objective,
    optimal_rate_allocation,
};
use classgain::model::{
    class_stats, spread_about, ClassificationScheme, MembershipMatrix, SampleSet,
};
use classgain::rounding::{random_round, round_best_of_k};
use classgain::solver::{project_row_to_simplex, solve_relaxation, SolverConfig};

const CASES: u32 = 256;

/// Signal plus a strictly positive soft membership (rows bounded away from 0).
fn instance(max_n: usize, max_j: usize) -> impl Strategy<Value = (Vec<f64>, usize, Vec<f64>)> {
    (2..=max_j, 3..=max_n).prop_flat_map(|(j, n)| {
        (
            prop::collection::vec(-100.0f64..100.0, n),
            Just(j),
            prop::collection::vec(0.1f64..1.0, n * j),
        )
    })
}

fn normalized(raw: &[f64], j: usize) -> Vec<f64> {
    raw.chunks(j)
        .flat_map(|r| {
            let s: f64 = r.iter().sum();
            r.iter().map(move |v| v / s)
        })
        .collect()
}

fn spread(values: &[f64]) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

fn build(x: &[f64], j: usize, raw: &[f64]) -> (SampleSet<f64>, MembershipMatrix<f64>) {
    let a = MembershipMatrix::new(x.len(), j, normalized(raw, j)).unwrap();
    (SampleSet::new(x.to_vec()).unwrap(), a)
}

/// Plain-loop class statistics `(p_i, mu_i, sigma_i^2)` and `(mu_x, sigma_x^2)`.
fn oracle_stats(x: &[f64], a: &[f64], j: usize) -> (Vec<(f64, f64, f64)>, f64, f64) {
    let n = x.len() as f64;
    let mu_x = x.iter().sum::<f64>() / n;
    let var_x = x.iter().map(|v| (v - mu_x).powi(2)).sum::<f64>() / n;
    let classes = (0..j)
        .map(|i| {
            let s: f64 = (0..x.len()).map(|k| a[k * j + i]).sum();
            let mu = (0..x.len()).map(|k| a[k * j + i] * x[k]).sum::<f64>() / s;
            let var = (0..x.len())
                .map(|k| a[k * j + i] * (x[k] - mu).powi(2))
                .sum::<f64>()
                / s;
            (s / n, mu, var)
        })
        .collect();
    (classes, mu_x, var_x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn statistics_match_plain_loops((x, j, raw) in instance(40, 5)) {
        prop_assume!(spread(&x) > 1e-3);
        let (xs, a) = build(&x, j, &raw);
        let stats = class_stats(&xs, &a).unwrap();
        let (oracle, mu_x, var_x) = oracle_stats(&x, a.as_slice(), j);
        for (i, &(p, mu, var)) in oracle.iter().enumerate() {
            assert_relative_eq!(stats.weights[i], p, max_relative = 1e-10);
            assert_relative_eq!(stats.mean(i).unwrap(), mu, epsilon = 1e-9, max_relative = 1e-9);
            assert_relative_eq!(stats.variance(i).unwrap(), var, epsilon = 1e-9, max_relative = 1e-9);
        }
        assert_relative_eq!(stats.mean_x, mu_x, epsilon = 1e-9);
        assert_relative_eq!(stats.variance_x, var_x, max_relative = 1e-10);
    }

    #[test]
    fn total_variance_splits_into_within_and_between((x, j, raw) in instance(40, 5)) {
        prop_assume!(spread(&x) > 1e-3);
        let (xs, a) = build(&x, j, &raw);
        let stats = class_stats(&xs, &a).unwrap();
        let within: f64 = (0..j).map(|i| stats.weights[i] * stats.variance(i).unwrap()).sum();
        let between: f64 = (0..j)
            .map(|i| stats.weights[i] * (stats.mean(i).unwrap() - stats.mean_x).powi(2))
            .sum();
        assert_relative_eq!(within + between, stats.variance_x, max_relative = 1e-9);
    }

    #[test]
    fn spread_about_any_reference_adds_squared_offset(
        (x, j, raw) in instance(30, 4),
        reference in -150.0f64..150.0,
    ) {
        let (xs, a) = build(&x, j, &raw);
        let stats = class_stats(&xs, &a).unwrap();
        for i in 0..j {
            let lhs = spread_about(&xs, &a, i, reference).unwrap();
            let rhs = stats.variance(i).unwrap() + (reference - stats.mean(i).unwrap()).powi(2);
            assert_relative_eq!(lhs, rhs, epsilon = 1e-9, max_relative = 1e-9);
            prop_assert!(lhs >= stats.variance(i).unwrap() - 1e-9);
        }
    }

    #[test]
    fn gain_times_exp_objective_is_signal_variance((x, j, raw) in instance(40, 5)) {
        prop_assume!(spread(&x) > 1e-2);
        let (xs, a) = build(&x, j, &raw);
        let g = classification_gain(&xs, &a).unwrap();
        let f = log_objective(&xs, &a).unwrap();
        assert_relative_eq!(f.exp2() * g, xs.variance(), max_relative = 1e-9);
    }

    #[test]
    fn high_rate_closed_form_equals_water_filling_sum(
        (x, j, raw) in instance(30, 4),
        extra in 0.5f64..6.0,
    ) {
        prop_assume!(spread(&x) > 1e-2);
        let (xs, a) = build(&x, j, &raw);
        let stats = class_stats(&xs, &a).unwrap();
        let vars: Vec<f64> = (0..j).map(|i| stats.variance(i).unwrap()).collect();
        let vmax = vars.iter().copied().fold(0.0, f64::max);
        let vmin = vars.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assume!(vmin > 1e-6);
        let entropy: f64 = stats.weights.iter().map(|p| -p * p.log2()).sum();
        // Enough rate that every class stays active.
        let rate = entropy + 0.5 * (vmax / vmin).log2() + extra;
        let alloc = optimal_rate_allocation(&stats, rate).unwrap();
        let spent: f64 = stats.weights.iter().zip(&alloc.rates).map(|(p, r)| p * r).sum();
        assert_relative_eq!(spent, rate - entropy, epsilon = 1e-8);
        prop_assert!(alloc.rates.iter().all(|&r| r > 0.0));
        let closed = classified_distortion(&stats, rate).unwrap();
        prop_assert!(closed.high_rate);
        assert_relative_eq!(closed.value, distortion_sum(&stats, &alloc.rates), max_relative = 1e-9);
        let log_prod: f64 = (0..j).map(|i| stats.weights[i] * vars[i].log2()).sum();
        let oracle = (log_prod - 2.0 * rate + 2.0 * entropy).exp2();
        assert_relative_eq!(closed.value, oracle, max_relative = 1e-9);
    }

    #[test]
    fn projection_is_feasible_and_idempotent(v in prop::collection::vec(-1e3f64..1e3, 1..12)) {
        let p = project_row_to_simplex(&v);
        prop_assert!(p.iter().all(|&w| w >= 0.0));
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let again = project_row_to_simplex(&p);
        for (u, w) in p.iter().zip(&again) {
            assert_relative_eq!(*u, *w, epsilon = 1e-12);
        }
        // Optimality: no feasible point is closer.
        let d = |w: &[f64]| w.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let mut corner = vec![0.0; v.len()];
        corner[0] = 1.0;
        prop_assert!(d(&p) <= d(&corner) + 1e-9);
        let flat = vec![1.0 / v.len() as f64; v.len()];
        prop_assert!(d(&p) <= d(&flat) + 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences(
        (x, j, raw) in instance(20, 4),
        pick in any::<prop::sample::Index>(),
        to in any::<prop::sample::Index>(),
    ) {
        prop_assume!(spread(&x) > 1.0);
        let (xs, a) = build(&x, j, &raw);
        let n = x.len();
        let row = pick.index(n);
        let from = pick.index(j);
        let to = (from + 1 + to.index(j - 1)) % j;
        let g = grad_log_objective(&xs, &a).unwrap();
        // Move mass along a feasible edge of the row's simplex.
        let h = 1e-6;
        let shifted = |t: f64| {
            let mut d = a.as_slice().to_vec();
            d[row * j + from] -= t;
            d[row * j + to] += t;
            log_objective(&xs, &MembershipMatrix::new(n, j, d).unwrap()).unwrap()
        };
        let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
        let analytic = g[row * j + to] - g[row * j + from];
        prop_assert!(
            (numeric - analytic).abs() <= 1e-5 * analytic.abs().max(1.0 / n as f64),
            "numeric {numeric} vs analytic {analytic}"
        );
    }

    #[test]
    fn objective_ignores_class_order(
        (x, j, raw) in instance(30, 5),
        perm in Just((0..5usize).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        prop_assume!(spread(&x) > 1e-2);
        let perm: Vec<usize> = perm.into_iter().filter(|&c| c < j).collect();
        let (xs, a) = build(&x, j, &raw);
        let b = a.permute_columns(&perm).unwrap();
        assert_relative_eq!(log_objective(&xs, &a).unwrap(), log_objective(&xs, &b).unwrap(), epsilon = 1e-10);
        assert_relative_eq!(
            classification_gain(&xs, &a).unwrap(),
            classification_gain(&xs, &b).unwrap(),
            max_relative = 1e-10
        );
        let ga = grad_log_objective(&xs, &a).unwrap();
        let gb = grad_log_objective(&xs, &b).unwrap();
        for k in 0..x.len() {
            for c in 0..j {
                // Column c of b is column perm[c] of a.
                assert_relative_eq!(gb[k * j + c], ga[k * j + perm[c]], epsilon = 1e-10, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn gain_is_affine_invariant(
        (x, j, raw) in instance(30, 4),
        scale in prop_oneof![-50.0f64..-0.02, 0.02f64..50.0],
        offset in -1e3f64..1e3,
    ) {
        prop_assume!(spread(&x) > 1e-2);
        let (xs, a) = build(&x, j, &raw);
        let moved = SampleSet::new(x.iter().map(|v| scale * v + offset).collect()).unwrap();
        assert_relative_eq!(
            classification_gain(&xs, &a).unwrap(),
            classification_gain(&moved, &a).unwrap(),
            max_relative = 1e-7
        );
    }

    #[test]
    fn relaxed_solution_is_feasible_and_descends(
        x in prop::collection::vec(-50.0f64..50.0, 4..40),
        j in 2usize..4,
        seed in any::<u64>(),
    ) {
        prop_assume!(spread(&x) > 1e-2);
        let xs = SampleSet::new(x.clone()).unwrap();
        let cfg = SolverConfig { restarts: 4, seed, ..SolverConfig::default() };
        let report = solve_relaxation(&xs, j, &cfg).unwrap();
        for row in report.best_membership.iter_rows() {
            prop_assert!(row.iter().all(|&v| v >= -1e-12));
            assert_relative_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
        assert_relative_eq!(
            report.best_f,
            log_objective(&xs, &report.best_membership).unwrap(),
            epsilon = 1e-9
        );
        let lowest = report.restarts.iter().map(|r| r.final_f).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(report.best_f, lowest);
        for r in &report.restarts {
            prop_assert!(r.trajectory.windows(2).all(|w| w[1].1 <= w[0].1));
            prop_assert_eq!(r.trajectory.last().map(|t| t.1), Some(r.final_f));
        }
    }

    #[test]
    fn best_of_k_never_loses_to_its_first_draw(
        (x, j, raw) in instance(30, 4),
        seed in any::<u64>(),
        k in 1usize..8,
    ) {
        let (xs, a) = build(&x, j, &raw);
        let best = round_best_of_k(&a, &xs, k, seed, None).unwrap();
        let first = random_round(&a, seed).unwrap();
        let f_first = log_objective(&xs, &first.to_membership()).unwrap();
        prop_assert!(best.hard_f <= f_first + 1e-12);
        prop_assert_eq!(best.trials, k);
    }

    #[test]
    fn error_ratios_ignore_estimated_label_names(
        labels in prop::collection::vec(0usize..3, 1..60),
        truth in prop::collection::vec(0usize..3, 60),
        perm in Just(vec![0usize, 1, 2]).prop_shuffle(),
    ) {
        let est = ClassificationScheme::new(labels.clone(), 3).unwrap();
        let truth = ClassificationScheme::new(truth[..labels.len()].to_vec(), 3).unwrap();
        let a = false_classification_ratios(&est, &truth, 3).unwrap();
        let b = false_classification_ratios(&est.relabel(&perm).unwrap(), &truth, 3).unwrap();
        prop_assert_eq!(a.overall_error, b.overall_error);
        prop_assert!(a.overall_error <= 1.0 - 1.0 / 3.0 + 1e-12);
        let self_match = false_classification_ratios(&truth, &truth, 3).unwrap();
        prop_assert_eq!(self_match.overall_error, 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn brute_force_is_a_lower_bound(
        x in prop::collection::vec(-20.0f64..20.0, 2..9),
        j in 2usize..4,
        seed in any::<u64>(),
    ) {
        prop_assume!(spread(&x) > 1e-2);
        let xs = SampleSet::new(x).unwrap();
        let (_, f_opt) = brute_force_integer(&xs, j).unwrap();
        let km = kmeans(&xs, j, seed, 100).unwrap().to_membership();
        prop_assert!(f_opt <= log_objective(&xs, &km).unwrap() + 1e-9);
        let report = solve_relaxation(&xs, j, &SolverConfig { seed, ..SolverConfig::default() }).unwrap();
        let hard = round_best_of_k(&report.best_membership, &xs, 8, seed, None).unwrap();
        prop_assert!(f_opt <= hard.hard_f + 1e-9);
    }
}

#[test]
fn single_precision_matches_double() {
    let x64: Vec<f64> = (0..64)
        .map(|k| ((k * 37) % 29) as f64 + if k < 32 { 0.0 } else { 60.0 })
        .collect();
    let x32: Vec<f32> = x64.iter().map(|&v| v as f32).collect();
    let labels: Vec<usize> = (0..64).map(|k| usize::from(k >= 32)).collect();
    let z = ClassificationScheme::new(labels, 2).unwrap();
    let g64 =
        classification_gain(&SampleSet::new(x64).unwrap(), &z.to_membership::<f64>()).unwrap();
    let g32 = classification_gain(
        &SampleSet::new(x32.clone()).unwrap(),
        &z.to_membership::<f32>(),
    )
    .unwrap();
    assert_relative_eq!(g32 as f64, g64, max_relative = 1e-4);
    let report =
        solve_relaxation(&SampleSet::new(x32).unwrap(), 2, &SolverConfig::default()).unwrap();
    let found = report.best_membership.argmax_scheme();
    assert_eq!(
        false_classification_ratios(&found, &z, 2)
            .unwrap()
            .overall_error,
        0.0
    );
}
