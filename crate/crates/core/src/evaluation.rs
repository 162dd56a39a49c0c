//! False-classification ratios and multi-seed experiment orchestration.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{brute_force_integer, em_gmm, kmeans};
use crate::error::{invalid, Result};
use crate::gain::{classification_gain, log_objective};
use crate::model::{
    generate_shaped, ClassificationScheme, Component, Layout, MixtureSpec, SampleSet, Shape,
};
use crate::rounding::{round_best_of_k, TypicalityEpsilons};
use crate::scalar::Scalar;
use crate::solver::{solve_relaxation, SolverConfig};

/// Largest class count for exhaustive label matching.
pub const MAX_MATCHED_CLASSES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassError {
    /// `n_i`: samples whose true class is `i`.
    pub truth_count: usize,
    /// `m_i`: of those, samples assigned elsewhere.
    pub misclassified: usize,
    /// `r_c = m_i / n_i`; `None` when `n_i = 0`.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub per_class: Vec<ClassError>,
    pub overall_error: f64,
    /// Estimated label `e` is matched to true label `permutation[e]`.
    pub permutation: Vec<usize>,
    pub gain: Option<f64>,
    pub seed: Option<u64>,
}

impl EvalResult {
    pub fn ratios(&self) -> Vec<Option<f64>> {
        self.per_class.iter().map(|c| c.ratio).collect()
    }
}

/// Per-class false-classification ratios under the label matching that
/// minimizes total errors (ties go to the lexicographically first permutation).
pub fn false_classification_ratios(
    estimated: &ClassificationScheme,
    truth: &ClassificationScheme,
    classes: usize,
) -> Result<EvalResult> {
    if classes == 0 || classes > MAX_MATCHED_CLASSES {
        return Err(invalid(format!(
            "label matching supports 1..={MAX_MATCHED_CLASSES} classes, got {classes}"
        )));
    }
    if estimated.len() != truth.len() {
        return Err(invalid(format!(
            "estimated scheme has {} labels, truth has {}",
            estimated.len(),
            truth.len()
        )));
    }
    if estimated.classes() > classes || truth.classes() > classes {
        return Err(invalid("scheme uses more classes than requested"));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&e, &t) in estimated.labels().iter().zip(truth.labels()) {
        confusion[e][t] += 1;
    }
    let mut perm: Vec<usize> = (0..classes).collect();
    let mut best_perm = perm.clone();
    let mut best_hits = 0;
    loop {
        let hits: usize = perm.iter().enumerate().map(|(e, &t)| confusion[e][t]).sum();
        if hits > best_hits {
            best_hits = hits;
            best_perm.copy_from_slice(&perm);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let truth_counts: Vec<usize> = (0..classes)
        .map(|t| confusion.iter().map(|row| row[t]).sum())
        .collect();
    let per_class = (0..classes)
        .map(|t| {
            let e = best_perm.iter().position(|&p| p == t).expect("bijection");
            let n_i = truth_counts[t];
            let m_i = n_i - confusion[e][t];
            ClassError {
                truth_count: n_i,
                misclassified: m_i,
                ratio: (n_i > 0).then(|| m_i as f64 / n_i as f64),
            }
        })
        .collect();
    let n = truth.len().max(1);
    Ok(EvalResult {
        per_class,
        overall_error: (truth.len() - best_hits) as f64 / n as f64,
        permutation: best_perm,
        gain: None,
        seed: None,
    })
}

/// Lexicographic successor; false once the last permutation was reached.
fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len())
        .rev()
        .find(|&j| p[j] > p[i - 1])
        .expect("pivot exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Relaxation,
    KMeans,
    Em,
    BruteForce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Its `seed` is replaced by the experiment seed for every run.
    pub solver: SolverConfig,
    pub round_k: usize,
    /// Typicality tolerances; the `N^{-1/3}` schedule when `None`.
    pub eps: Option<TypicalityEpsilons>,
    pub kmeans_iters: usize,
    pub em_iters: usize,
    pub em_tol: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            round_k: 32,
            eps: None,
            kmeans_iters: 100,
            em_iters: 500,
            em_tol: 1e-10,
        }
    }
}

/// Relaxation diagnostics kept per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationSummary {
    pub best_f: f64,
    pub hard_f: f64,
    pub converged_restarts: usize,
    pub iterations_used: usize,
    pub typical: Option<bool>,
    pub azuma_bound: Option<f64>,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub eval: EvalResult,
    /// Objective of the estimated hard scheme.
    pub objective: f64,
    /// Relaxation only: the same solve rounded once instead of best-of-k.
    pub single_draw: Option<EvalResult>,
    pub relaxation: Option<RelaxationSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let k = sorted.len();
        let median = if k % 2 == 1 {
            sorted[k / 2]
        } else {
            0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
        };
        Some(Self {
            mean: sorted.iter().sum::<f64>() / k as f64,
            median,
            min: sorted[0],
            max: sorted[k - 1],
            count: k,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub method: Method,
    pub outcomes: Vec<SeedOutcome>,
    pub overall_error: Summary,
    /// Per true class; `None` when no seed had samples of that class.
    pub class_ratios: Vec<Option<Summary>>,
    pub single_draw_class_ratios: Option<Vec<Option<Summary>>>,
    pub wall_time_ms: f64,
}

fn class_summaries<'a>(
    classes: usize,
    evals: impl Iterator<Item = &'a EvalResult> + Clone,
) -> Vec<Option<Summary>> {
    (0..classes)
        .map(|c| {
            let vals: Vec<f64> = evals.clone().filter_map(|e| e.per_class[c].ratio).collect();
            Summary::of(&vals)
        })
        .collect()
}

/// Generates one signal per seed, classifies it with `method` and scores it
/// against the generating labels. Seeds run in parallel; results are kept in
/// seed order.
pub fn run_experiment<T: Scalar>(
    spec: &MixtureSpec,
    shape: Shape,
    method: Method,
    seeds: &[u64],
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    if seeds.is_empty() {
        return Err(invalid("at least one seed is required"));
    }
    spec.validate(shape.len())?;
    let started = Instant::now();
    let classes = spec.classes();
    let outcomes = seeds
        .par_iter()
        .map(|&seed| run_seed::<T>(spec, shape, method, seed, cfg))
        .collect::<Result<Vec<_>>>()?;
    let overall: Vec<f64> = outcomes.iter().map(|o| o.eval.overall_error).collect();
    let single_draw_class_ratios = (method == Method::Relaxation).then(|| {
        class_summaries(
            classes,
            outcomes.iter().filter_map(|o| o.single_draw.as_ref()),
        )
    });
    Ok(ExperimentReport {
        method,
        overall_error: Summary::of(&overall).expect("non-empty seeds"),
        class_ratios: class_summaries(classes, outcomes.iter().map(|o| &o.eval)),
        single_draw_class_ratios,
        outcomes,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

fn run_seed<T: Scalar>(
    spec: &MixtureSpec,
    shape: Shape,
    method: Method,
    seed: u64,
    cfg: &ExperimentConfig,
) -> Result<SeedOutcome> {
    let (x, truth) = generate_shaped::<T>(&spec.with_seed(seed), shape)?;
    let classes = spec.classes();
    let (scheme, single_draw, relaxation) = classify(&x, classes, method, seed, cfg)?;
    let single_draw = single_draw
        .map(|z| score(&x, &z, &truth, classes, seed))
        .transpose()?;
    Ok(SeedOutcome {
        seed,
        objective: log_objective(&x, &scheme.to_membership())?.as_f64(),
        eval: score(&x, &scheme, &truth, classes, seed)?,
        single_draw,
        relaxation,
    })
}

/// Runs one classifier. For the relaxation also returns the single-draw rounding.
pub fn classify<T: Scalar>(
    x: &SampleSet<T>,
    classes: usize,
    method: Method,
    seed: u64,
    cfg: &ExperimentConfig,
) -> Result<(
    ClassificationScheme,
    Option<ClassificationScheme>,
    Option<RelaxationSummary>,
)> {
    Ok(match method {
        Method::Relaxation => {
            let solver = SolverConfig {
                seed,
                ..cfg.solver.clone()
            };
            let report = solve_relaxation(x, classes, &solver)?;
            let best = round_best_of_k(&report.best_membership, x, cfg.round_k, seed, cfg.eps)?;
            let single = round_best_of_k(&report.best_membership, x, 1, seed, cfg.eps)?;
            let summary = RelaxationSummary {
                best_f: report.best_f.as_f64(),
                hard_f: best.hard_f.as_f64(),
                converged_restarts: report.restarts.iter().filter(|r| r.converged).count(),
                iterations_used: report.iterations_used,
                typical: best.typicality.as_ref().map(|t| t.typical),
                azuma_bound: best.azuma_bound,
                wall_time_ms: report.wall_time.as_secs_f64() * 1e3,
            };
            (best.scheme, Some(single.scheme), Some(summary))
        }
        Method::KMeans => (kmeans(x, classes, seed, cfg.kmeans_iters)?, None, None),
        Method::Em => (
            em_gmm(x, classes, seed, cfg.em_iters, cfg.em_tol)?.scheme,
            None,
            None,
        ),
        Method::BruteForce => (brute_force_integer(x, classes)?.0, None, None),
    })
}

fn score<T: Scalar>(
    x: &SampleSet<T>,
    z: &ClassificationScheme,
    truth: &ClassificationScheme,
    classes: usize,
    seed: u64,
) -> Result<EvalResult> {
    let mut eval = false_classification_ratios(z, truth, classes)?;
    eval.gain = classification_gain(x, &z.to_membership())
        .ok()
        .map(Scalar::as_f64);
    eval.seed = Some(seed);
    Ok(eval)
}

/// The four built-in two-class experiments and their single-run reference ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BuiltinCase {
    /// Means 128 / 16, variances 16 / 16, N = 256.
    One,
    /// Means 128 / 128, variances 2500 / 25, N = 256.
    Two,
    /// Means 50 / 5, variances 2500 / 25, N = 256.
    Three,
    /// 32 x 32 image, means 200 / 5, variances 400 / 400.
    TwoDim,
}

impl BuiltinCase {
    pub const ALL: [BuiltinCase; 4] = [Self::One, Self::Two, Self::Three, Self::TwoDim];

    pub fn name(self) -> &'static str {
        match self {
            Self::One => "one",
            Self::Two => "two",
            Self::Three => "three",
            Self::TwoDim => "twodim",
        }
    }

    pub fn shape(self) -> Shape {
        match self {
            Self::TwoDim => Shape::Grid {
                height: 32,
                width: 32,
            },
            _ => Shape::Linear(256),
        }
    }

    /// Equal-size contiguous blocks; for the image the top half is class 1.
    pub fn spec(self, seed: u64) -> MixtureSpec {
        let ((m1, v1), (m2, v2)) = match self {
            Self::One => ((128.0, 16.0), (16.0, 16.0)),
            Self::Two => ((128.0, 2500.0), (128.0, 25.0)),
            Self::Three => ((50.0, 2500.0), (5.0, 25.0)),
            Self::TwoDim => ((200.0, 400.0), (5.0, 400.0)),
        };
        let half = self.shape().len() / 2;
        MixtureSpec {
            components: vec![
                Component {
                    mean: m1,
                    variance: v1,
                    weight: 0.5,
                },
                Component {
                    mean: m2,
                    variance: v2,
                    weight: 0.5,
                },
            ],
            layout: Layout::Blocks(vec![(0, half), (1, half)]),
            seed,
        }
    }

    /// Reference per-class false-classification ratios (single run), in percent.
    pub fn reported_ratios(self) -> [f64; 2] {
        match self {
            Self::One => [0.0, 0.0],
            Self::Two => [16.41, 6.25],
            Self::Three => [10.16, 3.91],
            Self::TwoDim => [1.93, 0.52],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scheme(labels: &[usize]) -> ClassificationScheme {
        ClassificationScheme::new(labels.to_vec(), 2).unwrap()
    }

    #[test]
    fn identical_and_swapped_labels_score_zero() {
        let truth = scheme(&[0, 0, 1, 1, 0]);
        let same = false_classification_ratios(&truth, &truth, 2).unwrap();
        assert_eq!(same.ratios(), vec![Some(0.0), Some(0.0)]);
        assert_eq!(same.permutation, vec![0, 1]);
        let swapped = truth.relabel(&[1, 0]).unwrap();
        let r = false_classification_ratios(&swapped, &truth, 2).unwrap();
        assert_eq!(r.ratios(), vec![Some(0.0), Some(0.0)]);
        assert_eq!(r.permutation, vec![1, 0]);
        assert_eq!(r.overall_error, 0.0);
    }

    #[test]
    fn four_sample_case() {
        let r =
            false_classification_ratios(&scheme(&[0, 1, 1, 1]), &scheme(&[0, 0, 1, 1]), 2).unwrap();
        assert_eq!(r.permutation, vec![0, 1]);
        assert_eq!(r.ratios(), vec![Some(0.5), Some(0.0)]);
        assert_eq!(r.per_class[0].misclassified, 1);
        assert_eq!(r.overall_error, 0.25);
    }

    #[test]
    fn empty_truth_class_is_flagged() {
        let r = false_classification_ratios(&scheme(&[0, 1]), &scheme(&[0, 0]), 2).unwrap();
        assert_eq!(r.per_class[1].truth_count, 0);
        assert_eq!(r.per_class[1].ratio, None);
    }

    #[test]
    fn matching_rejects_bad_input() {
        assert!(false_classification_ratios(&scheme(&[0]), &scheme(&[0, 1]), 2).is_err());
        let nine = ClassificationScheme::new(vec![0; 3], 9).unwrap();
        assert!(false_classification_ratios(&nine, &nine, 9).is_err());
    }

    #[test]
    fn permutations_enumerate_in_order() {
        let mut p = vec![0, 1, 2];
        let mut all = vec![p.clone()];
        while next_permutation(&mut p) {
            all.push(p.clone());
        }
        assert_eq!(all.len(), 6);
        assert_eq!(all[1], vec![0, 2, 1]);
        assert_eq!(all[5], vec![2, 1, 0]);
    }

    #[test]
    fn summary_statistics() {
        let s = Summary::of(&[3.0, 1.0, 2.0, 10.0]).unwrap();
        assert_eq!(s.median, 2.5);
        assert_eq!(s.mean, 4.0);
        assert_eq!((s.min, s.max, s.count), (1.0, 10.0, 4));
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn builtin_specs_are_valid() {
        for case in BuiltinCase::ALL {
            case.spec(0).validate(case.shape().len()).unwrap();
        }
        assert_eq!(BuiltinCase::TwoDim.shape().len(), 1024);
    }

    #[test]
    fn case_one_experiment_is_error_free() {
        let report = run_experiment::<f64>(
            &BuiltinCase::One.spec(0),
            BuiltinCase::One.shape(),
            Method::Relaxation,
            &[1, 2, 3],
            &ExperimentConfig::default(),
        )
        .unwrap();
        assert_eq!(report.overall_error.max, 0.0);
        assert_eq!(report.outcomes.len(), 3);
        assert!(report.single_draw_class_ratios.is_some());
        assert!(report.outcomes.iter().all(|o| o.eval.gain.unwrap() > 1.0));
    }

    #[test]
    fn brute_force_objective_never_loses_to_relaxation() {
        let spec = MixtureSpec::blocks(BuiltinCase::Three.spec(0).components, 12, 0);
        let seeds: Vec<u64> = (0..5).collect();
        let cfg = ExperimentConfig::default();
        let shape = Shape::Linear(12);
        let brute = run_experiment::<f64>(&spec, shape, Method::BruteForce, &seeds, &cfg).unwrap();
        let relax = run_experiment::<f64>(&spec, shape, Method::Relaxation, &seeds, &cfg).unwrap();
        for (b, r) in brute.outcomes.iter().zip(&relax.outcomes) {
            assert!(b.objective <= r.objective + 1e-9);
        }
    }
}
