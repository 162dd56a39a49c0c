//! Random rounding of a relaxed membership, typicality checks, and the
//! Azuma-type bound on the probability of an atypical rounding.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gain::Objective;
use crate::model::{class_stats_unchecked, ClassificationScheme, MembershipMatrix, SampleSet};
use crate::rng;
use crate::scalar::Scalar;

/// Tolerances of `(eps1, eps2, eps3)`-typicality: class mass, first moment
/// (signal units) and centered second moment (signal units squared), each
/// per sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypicalityEpsilons {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
}

impl TypicalityEpsilons {
    pub fn new(eps1: f64, eps2: f64, eps3: f64) -> Result<Self> {
        let eps = Self { eps1, eps2, eps3 };
        eps.validate()?;
        Ok(eps)
    }

    /// `eps1 = eps2 / V = eps3 / V^2 = N^{-1/3}`.
    pub fn default_for(n: usize, range: f64) -> Self {
        let e = (n.max(1) as f64).powf(-1.0 / 3.0);
        Self {
            eps1: e,
            eps2: e * range,
            eps3: e * range * range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.eps1, self.eps2, self.eps3]
            .iter()
            .all(|&e| e > 0.0 && e.is_finite())
        {
            Ok(())
        } else {
            Err(invalid(format!(
                "typicality tolerances must be positive: {self:?}"
            )))
        }
    }
}

/// Outcome of a typicality check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Typicality {
    pub typical: bool,
    /// Largest `|deviation| / N` over classes, per condition.
    pub max_residuals: [f64; 3],
    /// Classes whose relaxed mass is zero; conditions 2 and 3 were skipped for them.
    pub skipped_classes: Vec<usize>,
}

/// Draws `z_n = i` with probability `a*_{ni}`, independently per sample.
pub fn random_round<T: Scalar>(
    a_star: &MembershipMatrix<T>,
    seed: u64,
) -> Result<ClassificationScheme> {
    check_rows(a_star)?;
    Ok(round_stream(a_star, seed, 0))
}

fn check_rows<T: Scalar>(a: &MembershipMatrix<T>) -> Result<()> {
    // Matrices built through the public constructors are already feasible,
    // but the solver output bypasses them.
    let tol = T::feasibility_tol();
    for (n, row) in a.iter_rows().enumerate() {
        let sum: T = row.iter().copied().sum();
        if (sum - T::one()).abs() > tol || row.iter().any(|&v| v < T::zero()) {
            return Err(invalid(format!("membership row {n} is not a distribution")));
        }
    }
    Ok(())
}

fn round_stream<T: Scalar>(a: &MembershipMatrix<T>, seed: u64, trial: u64) -> ClassificationScheme {
    let mut rng = rng::generator(seed, trial);
    let labels = a
        .iter_rows()
        .map(|row| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut last = 0;
            for (i, &p) in row.iter().enumerate() {
                let p = p.as_f64();
                if p > 0.0 {
                    last = i;
                }
                acc += p;
                if u < acc {
                    return i;
                }
            }
            last
        })
        .collect();
    ClassificationScheme::new(labels, a.classes()).expect("labels drawn within range")
}

/// Checks the three typicality conditions of `z` relative to `a_star`.
pub fn is_typical<T: Scalar>(
    z: &ClassificationScheme,
    a_star: &MembershipMatrix<T>,
    x: &SampleSet<T>,
    eps: &TypicalityEpsilons,
) -> Result<Typicality> {
    eps.validate()?;
    if z.len() != x.len() || a_star.rows() != x.len() || z.classes() != a_star.classes() {
        return Err(invalid("scheme, membership and signal shapes disagree"));
    }
    let relaxed = class_stats_unchecked(x.values(), a_star);
    let j = a_star.classes();
    let n = x.len() as f64;
    // Accumulate per class: mass, first moment, centered second moment.
    let mut dev = vec![[0.0f64; 3]; j];
    let centers: Vec<Option<f64>> = relaxed
        .moments
        .iter()
        .map(|m| m.map(|m| m.mean.as_f64()))
        .collect();
    for ((row, &label), &xn) in a_star.iter_rows().zip(z.labels()).zip(x.values()) {
        let xn = xn.as_f64();
        for i in 0..j {
            let d = f64::from(u8::from(label == i)) - row[i].as_f64();
            dev[i][0] += d;
            dev[i][1] += d * xn;
            if let Some(mu) = centers[i] {
                dev[i][2] += d * (xn - mu) * (xn - mu);
            }
        }
    }
    let mut max_residuals = [0.0f64; 3];
    let mut skipped_classes = Vec::new();
    for i in 0..j {
        let conditions = if centers[i].is_some() { 3 } else { 1 };
        if conditions == 1 {
            skipped_classes.push(i);
        }
        for k in 0..conditions {
            max_residuals[k] = max_residuals[k].max(dev[i][k].abs() / n);
        }
    }
    let limits = [eps.eps1, eps.eps2, eps.eps3];
    let typical = max_residuals.iter().zip(limits).all(|(&r, l)| r <= l);
    Ok(Typicality {
        typical,
        max_residuals,
        skipped_classes,
    })
}

/// `2J exp(-2 eps1^2 N) + 2J exp(-2 eps2^2 N / V^2) + 2J exp(-2 eps3^2 N / V^4)`.
///
/// Not clipped to 1.
pub fn azuma_bound(n: usize, classes: usize, range: f64, eps: &TypicalityEpsilons) -> Result<f64> {
    if n == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    if !(range > 0.0) {
        return Err(Error::DegenerateSignal);
    }
    eps.validate()?;
    let n = n as f64;
    let two_j = 2.0 * classes as f64;
    let v2 = range * range;
    Ok(two_j
        * ((-2.0 * eps.eps1 * eps.eps1 * n).exp()
            + (-2.0 * eps.eps2 * eps.eps2 * n / v2).exp()
            + (-2.0 * eps.eps3 * eps.eps3 * n / (v2 * v2)).exp()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundingReport<T> {
    pub scheme: ClassificationScheme,
    /// Objective of the hard membership encoded by `scheme`.
    pub hard_f: T,
    pub winning_trial: usize,
    pub trials: usize,
    pub eps: Option<TypicalityEpsilons>,
    /// `None` for a constant signal, where typicality tolerances are meaningless.
    pub typicality: Option<Typicality>,
    pub azuma_bound: Option<f64>,
}

/// Rounds `k` times and keeps the scheme with the lowest hard objective
/// (ties go to the earliest trial).
///
/// Trial `t` uses stream `t` of `seed`, so `k = 1` reproduces
/// [`random_round`]. Typicality of the winner is checked under `eps`, or
/// under [`TypicalityEpsilons::default_for`] when `eps` is `None`.
pub fn round_best_of_k<T: Scalar>(
    a_star: &MembershipMatrix<T>,
    x: &SampleSet<T>,
    k: usize,
    seed: u64,
    eps: Option<TypicalityEpsilons>,
) -> Result<RoundingReport<T>> {
    if k == 0 {
        return Err(invalid("at least one rounding trial is required"));
    }
    if a_star.rows() != x.len() {
        return Err(invalid("membership and signal lengths differ"));
    }
    check_rows(a_star)?;
    let objective = Objective::new(x.values());
    let scored: Vec<(ClassificationScheme, T)> = (0..k)
        .into_par_iter()
        .map(|t| {
            let z = round_stream(a_star, seed, t as u64);
            let f =
                objective.value_from_stats(&class_stats_unchecked(x.values(), &z.to_membership()));
            (z, f)
        })
        .collect();
    let (winner, _) = scored
        .iter()
        .enumerate()
        .fold(
            (0, T::infinity()),
            |best, (t, (_, f))| if *f < best.1 { (t, *f) } else { best },
        );
    let (scheme, hard_f) = scored.into_iter().nth(winner).expect("winner in range");

    let range = x.range().as_f64();
    let eps = match eps {
        Some(e) => Some(e),
        None if range > 0.0 => Some(TypicalityEpsilons::default_for(x.len(), range)),
        None => None,
    };
    let typicality = eps
        .map(|e| is_typical(&scheme, a_star, x, &e))
        .transpose()?;
    let azuma = match eps {
        Some(e) if range > 0.0 => Some(azuma_bound(x.len(), a_star.classes(), range, &e)?),
        _ => None,
    };
    Ok(RoundingReport {
        scheme,
        hard_f,
        winning_trial: winner,
        trials: k,
        eps,
        typicality,
        azuma_bound: azuma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gain::log_objective;
    use approx::assert_relative_eq;

    fn signal(n: usize) -> SampleSet<f64> {
        SampleSet::new((0..n).map(|i| ((i * 37) % 11) as f64).collect()).unwrap()
    }

    #[test]
    fn hard_membership_rounds_to_itself() {
        let z = ClassificationScheme::new(vec![0, 2, 1, 1, 0], 3).unwrap();
        let a: MembershipMatrix<f64> = z.to_membership();
        for seed in 0..5 {
            assert_eq!(random_round(&a, seed).unwrap(), z);
        }
        let x = signal(5);
        let t = is_typical(
            &z,
            &a,
            &x,
            &TypicalityEpsilons::new(1e-12, 1e-12, 1e-12).unwrap(),
        )
        .unwrap();
        assert!(t.typical);
        assert_eq!(t.max_residuals, [0.0; 3]);
        let report = round_best_of_k(&a, &x, 7, 3, None).unwrap();
        assert_eq!(report.scheme, z);
        assert_relative_eq!(report.hard_f, log_objective(&x, &a).unwrap());
    }

    #[test]
    fn deterministic_row_always_picks_its_class() {
        let a = MembershipMatrix::new(3, 2, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(random_round(&a, 42).unwrap().labels(), &[1, 1, 1]);
    }

    #[test]
    fn fair_rows_split_evenly() {
        let a = MembershipMatrix::<f64>::uniform(10_000, 2);
        let z = random_round(&a, 2024).unwrap();
        let ones = z.counts()[0];
        assert!((4700..=5300).contains(&ones), "{ones}");
    }

    #[test]
    fn bad_rows_are_rejected() {
        let a = MembershipMatrix::from_raw(1, 2, vec![0.3, 0.3]);
        assert!(random_round(&a, 0).is_err());
    }

    #[test]
    fn alternating_scheme_matches_counts_exactly() {
        let n = 10;
        let a = MembershipMatrix::<f64>::uniform(n, 2);
        let z = ClassificationScheme::new((0..n).map(|i| i % 2).collect(), 2).unwrap();
        let x = signal(n);
        let t = is_typical(
            &z,
            &a,
            &x,
            &TypicalityEpsilons::new(0.5, 100.0, 1e4).unwrap(),
        )
        .unwrap();
        assert_eq!(t.max_residuals[0], 0.0);
        assert!(t.typical);
    }

    #[test]
    fn tiny_tolerances_are_not_met_by_soft_rounding() {
        let n = 200;
        let a = MembershipMatrix::<f64>::uniform(n, 2);
        let x = signal(n);
        let z = random_round(&a, 5).unwrap();
        let eps = TypicalityEpsilons::new(1e-15, 1e-15, 1e-15).unwrap();
        let t = is_typical(&z, &a, &x, &eps).unwrap();
        assert!(!t.typical);
        assert!(t.max_residuals.iter().any(|&r| r > 1e-15));
    }

    #[test]
    fn empty_relaxed_class_skips_moment_conditions() {
        let a = MembershipMatrix::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let z = ClassificationScheme::new(vec![0, 0], 2).unwrap();
        let x = signal(2);
        let t = is_typical(&z, &a, &x, &TypicalityEpsilons::new(0.1, 0.1, 0.1).unwrap()).unwrap();
        assert_eq!(t.skipped_classes, vec![1]);
    }

    #[test]
    fn azuma_bound_values() {
        let eps = TypicalityEpsilons::new(0.1, 0.1, 0.1).unwrap();
        let b = azuma_bound(256, 2, 1.0, &eps).unwrap();
        assert_relative_eq!(b, 12.0 * (-5.12f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(b, 0.0715, max_relative = 1e-2);
        let mut prev = f64::INFINITY;
        for n in [10, 100, 1000, 10_000, 100_000] {
            let v = azuma_bound(n, 3, 2.0, &eps).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-6);
        let tiny = TypicalityEpsilons::new(1e-9, 1e-9, 1e-9).unwrap();
        assert_relative_eq!(
            azuma_bound(50, 4, 1.0, &tiny).unwrap(),
            24.0,
            max_relative = 1e-9
        );
        assert!(matches!(
            azuma_bound(5, 2, 0.0, &eps),
            Err(Error::DegenerateSignal)
        ));
    }

    #[test]
    fn one_trial_equals_single_rounding() {
        let x = signal(12);
        let a = MembershipMatrix::new(
            12,
            2,
            (0..12)
                .flat_map(|i| {
                    let p = (i as f64 + 1.0) / 14.0;
                    [p, 1.0 - p]
                })
                .collect(),
        )
        .unwrap();
        let report = round_best_of_k(&a, &x, 1, 99, None).unwrap();
        let single = random_round(&a, 99).unwrap();
        assert_eq!(report.scheme, single);
        assert_relative_eq!(
            report.hard_f,
            log_objective(&x, &single.to_membership()).unwrap()
        );
    }
}
