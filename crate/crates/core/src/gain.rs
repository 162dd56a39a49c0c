//! Gaussian rate-distortion arithmetic and the classification-gain objective.
//!
//! The solver minimizes the base-2 logarithm of
//! `prod_i (sigma_i^2)^{p_i} * 2^{2 H(p)}`:
//!
//! ```text
//! F(a) = sum_i p_i log2(sigma_i^2) + 2 H(p_1, .., p_J)
//! ```
//!
//! so that `G = sigma_x^2 / 2^F`. Inside the logarithm each class variance is
//! floored at `1e-12 * max(sigma_x^2, 1)`; empty classes contribute nothing.

use crate::error::{invalid, Error, Result};
use crate::model::{class_stats, class_stats_unchecked, ClassStats, MembershipMatrix, SampleSet};
use crate::scalar::Scalar;

/// Relative size of the variance floor used inside `log2(sigma_i^2)`.
pub const VARIANCE_FLOOR_REL: f64 = 1e-12;

/// `sigma^2 * 2^(-2R)`.
pub fn gaussian_distortion<T: Scalar>(variance: T, rate: T) -> T {
    variance * (-T::lit(2.0) * rate).exp2()
}

/// Base-2 entropy with `0 log 0 = 0`.
pub fn entropy_bits<T: Scalar>(p: &[T]) -> T {
    p.iter()
        .filter(|&&pi| pi > T::zero())
        .map(|&pi| -pi * pi.log2())
        .sum()
}

/// Water-filling solution for a total rate budget.
#[derive(Debug, Clone, PartialEq)]
pub struct RateAllocation<T> {
    /// Bits per sample for each class; zero for empty classes.
    pub rates: Vec<T>,
    /// Water level.
    pub lambda: T,
    pub total_rate: T,
    pub entropy: T,
}

fn rates_for_level<T: Scalar>(p: &[T], var: &[T], lambda: T) -> Vec<T> {
    p.iter()
        .zip(var)
        .map(|(&pi, &v)| {
            if pi > T::zero() && v > lambda {
                T::lit(0.5) * (v / lambda).log2()
            } else {
                T::zero()
            }
        })
        .collect()
}

fn weighted_sum<T: Scalar>(p: &[T], r: &[T]) -> T {
    p.iter().zip(r).map(|(&pi, &ri)| pi * ri).sum()
}

/// Rate allocation `R_i = max(0.5 log2(sigma_i^2 / lambda), 0)` meeting
/// `sum_i p_i R_i = R - H(p)`.
///
/// `lambda` is located by bisection on `log lambda`, starting from the bracket
/// `[min sigma_i^2 2^{-2RJ}, max sigma_i^2]` (widened downward if needed), and
/// then snapped to the closed form on the detected active set.
pub fn optimal_rate_allocation<T: Scalar>(
    stats: &ClassStats<T>,
    rate: T,
) -> Result<RateAllocation<T>> {
    let p = &stats.weights;
    let mut var = Vec::with_capacity(p.len());
    for (i, (&pi, m)) in p.iter().zip(&stats.moments).enumerate() {
        match m {
            Some(m) => var.push(m.variance),
            None if pi > T::zero() => return Err(Error::UndefinedClass(i)),
            None => var.push(T::zero()),
        }
    }
    let entropy = entropy_bits(p);
    if !(rate > entropy) {
        return Err(Error::InfeasibleRate {
            rate: rate.as_f64(),
            entropy: entropy.as_f64(),
        });
    }
    let active_var = || {
        p.iter()
            .zip(&var)
            .filter(|(&pi, &v)| pi > T::zero() && v > T::zero())
            .map(|(_, &v)| v)
    };
    let hi_var = active_var().fold(T::zero(), T::max);
    if hi_var <= T::zero() {
        return Err(Error::DegenerateSource);
    }
    let lo_var = active_var().fold(T::infinity(), T::min);
    let budget = rate - entropy;
    let j = T::from_count(p.len());

    let excess =
        |log_lambda: T| weighted_sum(p, &rates_for_level(p, &var, log_lambda.exp2())) - budget;
    let mut hi = hi_var.log2();
    let mut lo = lo_var.log2() - T::lit(2.0) * rate * j;
    while excess(lo) < T::zero() {
        lo = lo - (hi - lo).max(T::one());
        if !lo.is_finite() {
            return Err(Error::Numerical("rate allocation bracket diverged".into()));
        }
    }
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(8.0));
    // Relative tolerance on lambda is an absolute one on log2(lambda).
    while hi - lo > tol * T::LN_2().recip() {
        let mid = (lo + hi) * T::lit(0.5);
        if excess(mid) > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut lambda = ((lo + hi) * T::lit(0.5)).exp2();

    // Closed form on the active set: log2 lambda = (sum p_i log2 v_i - 2B) / P.
    let (mass, acc) = p
        .iter()
        .zip(&var)
        .filter(|(&pi, &v)| pi > T::zero() && v > lambda)
        .fold((T::zero(), T::zero()), |(m, s), (&pi, &v)| {
            (m + pi, s + pi * v.log2())
        });
    if mass > T::zero() {
        let exact = ((acc - T::lit(2.0) * budget) / mass).exp2();
        let same_set = p
            .iter()
            .zip(&var)
            .all(|(&pi, &v)| pi <= T::zero() || (v > lambda) == (v > exact));
        if same_set {
            lambda = exact;
        }
    }
    Ok(RateAllocation {
        rates: rates_for_level(p, &var, lambda),
        lambda,
        total_rate: rate,
        entropy,
    })
}

/// Distortion achieved by per-class coding at total rate `R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifiedDistortion<T> {
    pub value: T,
    /// True when every non-empty class received a positive rate, so the
    /// product form `prod (sigma_i^2)^{p_i} 2^{-2R + 2H}` applies.
    pub high_rate: bool,
}

/// Optimal distortion of classified coding.
///
/// In the high-rate regime the closed product form is returned; otherwise the
/// water-filling sum `sum p_i sigma_i^2 2^{-2 R_i}` with `high_rate = false`.
pub fn classified_distortion<T: Scalar>(
    stats: &ClassStats<T>,
    rate: T,
) -> Result<ClassifiedDistortion<T>> {
    let alloc = optimal_rate_allocation(stats, rate)?;
    let high_rate = stats
        .weights
        .iter()
        .zip(&alloc.rates)
        .all(|(&pi, &ri)| pi <= T::zero() || ri > T::zero());
    let value = if high_rate {
        let log_prod: T = stats
            .weights
            .iter()
            .zip(&stats.moments)
            .filter(|(&pi, _)| pi > T::zero())
            .map(|(&pi, m)| pi * m.map_or(T::zero(), |m| m.variance).log2())
            .sum();
        (log_prod - T::lit(2.0) * rate + T::lit(2.0) * alloc.entropy).exp2()
    } else {
        distortion_sum(stats, &alloc.rates)
    };
    Ok(ClassifiedDistortion { value, high_rate })
}

/// `sum_i p_i sigma_i^2 2^{-2 R_i}` for an arbitrary allocation.
pub fn distortion_sum<T: Scalar>(stats: &ClassStats<T>, rates: &[T]) -> T {
    stats
        .weights
        .iter()
        .zip(&stats.moments)
        .zip(rates)
        .filter(|((&pi, _), _)| pi > T::zero())
        .map(|((&pi, m), &ri)| pi * gaussian_distortion(m.map_or(T::zero(), |m| m.variance), ri))
        .sum()
}

fn variance_floor<T: Scalar>(variance_x: T) -> T {
    T::lit(VARIANCE_FLOOR_REL) * variance_x.max(T::one())
}

/// `sigma_x^2 / (2^{2H} prod (sigma_i^2)^{p_i})`, evaluated without the variance floor.
///
/// Returns `+inf` when a non-empty class has zero variance on a non-constant signal.
pub fn classification_gain<T: Scalar>(x: &SampleSet<T>, a: &MembershipMatrix<T>) -> Result<T> {
    let stats = class_stats(x, a)?;
    gain_from_stats(&stats)
}

pub fn gain_from_stats<T: Scalar>(stats: &ClassStats<T>) -> Result<T> {
    if !(stats.variance_x > T::zero()) {
        return Err(Error::UndefinedGain);
    }
    let mut log_denominator = T::lit(2.0) * entropy_bits(&stats.weights);
    for (&pi, m) in stats.weights.iter().zip(&stats.moments) {
        if let (true, Some(m)) = (pi > T::zero(), m) {
            if m.variance <= T::zero() {
                return Ok(T::infinity());
            }
            log_denominator += pi * m.variance.log2();
        }
    }
    Ok((stats.variance_x.log2() - log_denominator).exp2())
}

/// The relaxed objective `F(a)` (base-2 log of the product objective).
pub fn log_objective<T: Scalar>(x: &SampleSet<T>, a: &MembershipMatrix<T>) -> Result<T> {
    check_shape(x, a)?;
    Ok(Objective::new(x.values()).value(a))
}

/// `dF / da_ni`, row-major `N x J`.
///
/// With `v_i = max(sigma_i^2, floor)`:
///
/// ```text
/// dF/da_ni = ( log2 v_i + ((x_n - mu_i)^2 - sigma_i^2) / (v_i ln 2)
///              - 2 log2 p_i - 2 / ln 2 ) / N
/// ```
///
/// Floored classes keep the `1 / v_i` factor (so `1 / floor`). For an empty
/// class `p_i` is replaced by the smallest positive scalar and the variance
/// term is dropped.
pub fn grad_log_objective<T: Scalar>(x: &SampleSet<T>, a: &MembershipMatrix<T>) -> Result<Vec<T>> {
    check_shape(x, a)?;
    let mut g = vec![T::zero(); a.as_slice().len()];
    Objective::new(x.values()).gradient(a, &mut g);
    Ok(g)
}

fn check_shape<T: Scalar>(x: &SampleSet<T>, a: &MembershipMatrix<T>) -> Result<()> {
    if a.rows() != x.len() {
        return Err(invalid(format!(
            "membership has {} rows but the signal has {} samples",
            a.rows(),
            x.len()
        )));
    }
    Ok(())
}

/// Objective evaluator bound to one signal; shared by the solver and the
/// public wrappers.
#[derive(Debug, Clone)]
pub(crate) struct Objective<'a, T> {
    x: &'a [T],
    floor: T,
}

impl<'a, T: Scalar> Objective<'a, T> {
    pub(crate) fn new(x: &'a [T]) -> Self {
        let n = T::from_count(x.len());
        let mean = x.iter().copied().sum::<T>() / n;
        let variance = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        Self {
            x,
            floor: variance_floor(variance),
        }
    }

    pub(crate) fn value(&self, a: &MembershipMatrix<T>) -> T {
        let stats = class_stats_unchecked(self.x, a);
        self.value_from_stats(&stats)
    }

    pub(crate) fn value_from_stats(&self, stats: &ClassStats<T>) -> T {
        self.value_from_parts(
            stats
                .weights
                .iter()
                .zip(&stats.moments)
                .filter_map(|(&pi, m)| m.filter(|_| pi > T::zero()).map(|m| (pi, m.variance))),
        )
    }

    /// `F` from `(p_i, sigma_i^2)` of the non-empty classes.
    pub(crate) fn value_from_parts(&self, classes: impl Iterator<Item = (T, T)>) -> T {
        classes
            .map(|(pi, var)| pi * var.max(self.floor).log2() - T::lit(2.0) * pi * pi.log2())
            .sum()
    }

    pub(crate) fn gradient(&self, a: &MembershipMatrix<T>, out: &mut [T]) {
        let stats = class_stats_unchecked(self.x, a);
        let j = a.classes();
        let n = T::from_count(self.x.len());
        let two = T::lit(2.0);
        let inv_ln2 = T::LN_2().recip();
        // Per-class constant part and the coefficient of the (x_n - mu_i)^2 term.
        let mut base = vec![T::zero(); j];
        let mut quad = vec![T::zero(); j];
        let mut mean = vec![T::zero(); j];
        for i in 0..j {
            let pi = stats.weights[i];
            match stats.moments[i] {
                Some(m) if pi > T::zero() => {
                    let v = m.variance.max(self.floor);
                    base[i] = v.log2() - m.variance / v * inv_ln2 - two * pi.log2() - two * inv_ln2;
                    quad[i] = inv_ln2 / v;
                    mean[i] = m.mean;
                }
                _ => {
                    base[i] =
                        self.floor.log2() - two * T::min_positive_value().log2() - two * inv_ln2;
                }
            }
        }
        for (row, &xn) in out.chunks_mut(j).zip(self.x) {
            for i in 0..j {
                let d = xn - mean[i];
                row[i] = (base[i] + quad[i] * d * d) / n;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ClassificationScheme;
    use approx::assert_relative_eq;

    fn stats(p: &[f64], var: &[f64]) -> ClassStats<f64> {
        ClassStats::from_parts(p.to_vec(), var.to_vec(), vec![0.0; p.len()], 1.0)
    }

    #[test]
    fn distortion_rate_values() {
        assert_eq!(gaussian_distortion(4.0, 1.0), 1.0);
        assert_eq!(gaussian_distortion(1.0, 0.0), 1.0);
        assert_relative_eq!(gaussian_distortion(2500.0, 3.0), 39.0625);
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy_bits(&[0.5, 0.5]), 1.0);
        assert_eq!(entropy_bits(&[1.0, 0.0]), 0.0);
        let expected = -(0.25f64 * 0.25f64.log2() + 0.75 * 0.75f64.log2());
        assert_relative_eq!(entropy_bits(&[0.25, 0.75]), expected, max_relative = 1e-15);
        assert_relative_eq!(
            entropy_bits(&[0.25, 0.75]),
            0.811_278_124_459_132_8,
            max_relative = 1e-14
        );
    }

    #[test]
    fn two_class_water_filling() {
        let alloc = optimal_rate_allocation(&stats(&[0.5, 0.5], &[4.0, 1.0]), 2.0).unwrap();
        assert_relative_eq!(alloc.lambda, 0.5, max_relative = 1e-10);
        assert_relative_eq!(alloc.rates[0], 1.5, max_relative = 1e-10);
        assert_relative_eq!(alloc.rates[1], 0.5, max_relative = 1e-10);
        assert_eq!(alloc.entropy, 1.0);
    }

    #[test]
    fn single_class_takes_whole_budget() {
        let alloc = optimal_rate_allocation(&stats(&[1.0], &[7.0]), 3.0).unwrap();
        assert_relative_eq!(alloc.rates[0], 3.0, max_relative = 1e-10);
        assert_relative_eq!(alloc.lambda, 7.0 * 2f64.powi(-6), max_relative = 1e-10);
    }

    #[test]
    fn equal_variances_split_evenly() {
        let alloc = optimal_rate_allocation(&stats(&[0.5, 0.5], &[1.0, 1.0]), 3.0).unwrap();
        assert_relative_eq!(alloc.rates[0], 2.0, max_relative = 1e-10);
        assert_relative_eq!(alloc.rates[1], 2.0, max_relative = 1e-10);
    }

    #[test]
    fn low_rate_switches_off_quiet_class() {
        // Budget 0.25 bits: the quiet class cannot be served.
        let s = stats(&[0.5, 0.5], &[16.0, 1.0]);
        let alloc = optimal_rate_allocation(&s, 1.25).unwrap();
        assert_eq!(alloc.rates[1], 0.0);
        assert_relative_eq!(0.5 * alloc.rates[0], 0.25, max_relative = 1e-9);
        let d = classified_distortion(&s, 1.25).unwrap();
        assert!(!d.high_rate);
        assert_relative_eq!(
            d.value,
            distortion_sum(&s, &alloc.rates),
            max_relative = 1e-12
        );
    }

    #[test]
    fn allocation_errors() {
        assert!(matches!(
            optimal_rate_allocation(&stats(&[0.5, 0.5], &[4.0, 1.0]), 1.0),
            Err(Error::InfeasibleRate { .. })
        ));
        assert!(matches!(
            optimal_rate_allocation(&stats(&[0.5, 0.5], &[0.0, 0.0]), 4.0),
            Err(Error::DegenerateSource)
        ));
    }

    #[test]
    fn classified_distortion_forms_agree() {
        let s = stats(&[0.5, 0.5], &[4.0, 1.0]);
        let d = classified_distortion(&s, 2.0).unwrap();
        assert!(d.high_rate);
        assert_relative_eq!(d.value, 0.5, max_relative = 1e-12);
        let alloc = optimal_rate_allocation(&s, 2.0).unwrap();
        assert_relative_eq!(distortion_sum(&s, &alloc.rates), 0.5, max_relative = 1e-9);

        let j1 = stats(&[1.0], &[9.0]);
        assert_relative_eq!(
            classified_distortion(&j1, 2.5).unwrap().value,
            gaussian_distortion(9.0, 2.5),
            max_relative = 1e-12
        );

        // Equal variances, uniform weights: s J^2 2^{-2R}.
        let s4 = stats(&[0.25; 4], &[3.0; 4]);
        let d4 = classified_distortion(&s4, 5.0).unwrap();
        assert_relative_eq!(d4.value, 3.0 * 16.0 * 2f64.powi(-10), max_relative = 1e-12);
        let a4 = optimal_rate_allocation(&s4, 5.0).unwrap();
        assert_relative_eq!(
            distortion_sum(&s4, &a4.rates),
            d4.value,
            max_relative = 1e-9
        );
    }

    fn four_point() -> (SampleSet<f64>, MembershipMatrix<f64>) {
        let x = SampleSet::new(vec![-1.0, 1.0, 9.0, 11.0]).unwrap();
        let a = ClassificationScheme::new(vec![0, 0, 1, 1], 2)
            .unwrap()
            .to_membership();
        (x, a)
    }

    #[test]
    fn gain_of_four_point_split() {
        let (x, a) = four_point();
        assert_relative_eq!(
            classification_gain(&x, &a).unwrap(),
            6.5,
            max_relative = 1e-12
        );
        assert_relative_eq!(log_objective(&x, &a).unwrap(), 2.0, max_relative = 1e-12);
        let swapped = a.permute_columns(&[1, 0]).unwrap();
        assert_relative_eq!(
            classification_gain(&x, &swapped).unwrap(),
            6.5,
            max_relative = 1e-12
        );
    }

    #[test]
    fn single_class_gain_is_one() {
        let x = SampleSet::new(vec![3.0f64, -2.0, 5.5, 0.25]).unwrap();
        let a = MembershipMatrix::new(4, 1, vec![1.0; 4]).unwrap();
        assert_relative_eq!(
            classification_gain(&x, &a).unwrap(),
            1.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            log_objective(&x, &a).unwrap(),
            x.variance().log2(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn gain_edge_cases() {
        let x = SampleSet::new(vec![0.0, 0.0, 2.0, 2.0]).unwrap();
        let a = ClassificationScheme::new(vec![0, 0, 1, 1], 2)
            .unwrap()
            .to_membership();
        assert_eq!(classification_gain(&x, &a).unwrap(), f64::INFINITY);
        assert!(log_objective(&x, &a).unwrap().is_finite());
        let flat = SampleSet::new(vec![1.0; 3]).unwrap();
        assert!(matches!(
            classification_gain(&flat, &MembershipMatrix::uniform(3, 2)),
            Err(Error::UndefinedGain)
        ));
    }

    #[test]
    fn empty_class_contributes_nothing() {
        let x = SampleSet::new(vec![1.0f64, 2.0, 4.0]).unwrap();
        let one = MembershipMatrix::new(3, 1, vec![1.0; 3]).unwrap();
        let two = ClassificationScheme::new(vec![1, 1, 1], 2)
            .unwrap()
            .to_membership();
        assert_relative_eq!(
            log_objective(&x, &two).unwrap(),
            log_objective(&x, &one).unwrap()
        );
        let g = grad_log_objective(&x, &two).unwrap();
        assert!(g.iter().all(|v| v.is_finite()));
        // Moving mass into the empty class is strongly penalized.
        assert!(g[0] > g[1]);
    }

    #[test]
    fn gradient_columns_mirror_under_symmetry() {
        let x = SampleSet::new(vec![-3.0, -1.0, 1.0, 3.0]).unwrap();
        let a = MembershipMatrix::uniform(4, 2);
        let g = grad_log_objective(&x, &a).unwrap();
        for row in g.chunks(2) {
            assert_relative_eq!(row[0], row[1], max_relative = 1e-12);
        }
        for n in 0..4 {
            assert_relative_eq!(g[2 * n], g[2 * (3 - n)], max_relative = 1e-12);
        }
    }
}
