//! Projected-gradient solver for the box-relaxed classification program.
//!
//! Each membership row lives on the probability simplex. Iterates move along
//! `-grad F`, are projected back row by row and accepted under an Armijo
//! sufficient-decrease test. Several independently initialized restarts run
//! (in parallel when possible) and the lowest final objective wins.

use std::time::{Duration, Instant};

use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gain::{gain_from_stats, Objective};
use crate::model::{class_stats_unchecked, MembershipMatrix, SampleSet};
use crate::rng;
use crate::scalar::Scalar;

/// Euclidean projection onto `{w : w_i >= 0, sum w_i = 1}` (sort and threshold).
pub fn project_row_to_simplex<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut out = v.to_vec();
    project_in_place(&mut out, &mut Vec::with_capacity(v.len()));
    out
}

fn project_in_place<T: Scalar>(v: &mut [T], scratch: &mut Vec<T>) {
    match v.len() {
        0 => return,
        1 => {
            v[0] = T::one();
            return;
        }
        _ => {}
    }
    // The projection commutes with adding a constant to every entry; shifting
    // by a large maximum keeps the running sums small after long gradient steps.
    let top = v.iter().copied().fold(T::neg_infinity(), T::max);
    let top = if top.abs() > T::one() { top } else { T::zero() };
    scratch.clear();
    scratch.extend(v.iter().map(|&w| w - top));
    scratch.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumsum = T::zero();
    let mut theta = T::zero();
    for (k, &u) in scratch.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - T::one()) / T::from_count(k + 1);
        if u - t > T::zero() {
            theta = t;
        }
    }
    for w in v.iter_mut() {
        *w = (*w - top - theta).max(T::zero());
    }
}

/// How a restart's starting membership is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitStrategy {
    /// Restart 0 is quantile seeded, restart 1 outlier seeded, all others
    /// Dirichlet random.
    Mixed,
    /// Rows drawn from Dirichlet(1, .., 1).
    DirichletRandom,
    /// Rows concentrated (0.8 / rest) on the nearest of `J` empirical quantiles.
    QuantileSeeded,
    /// Classes `1..J` each hold one outlying sample (farthest-first from the
    /// mean), class 0 holds the rest. Small signals often have their optimum
    /// at such a vertex because a one-sample class sits at the variance floor.
    OutlierSeeded,
    /// All rows `1/J`. This is a stationary point; useful only for tests.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub step_init: f64,
    pub armijo_c: f64,
    pub step_shrink: f64,
    /// Stop when the accepted decrease of `F` is below `tol_obj * max(|F|, 1)`.
    pub tol_obj: f64,
    /// Stop when no membership moves by more than this.
    pub tol_step: f64,
    pub restarts: usize,
    pub seed: u64,
    pub init_strategy: InitStrategy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            step_init: 0.1,
            armijo_c: 1e-4,
            step_shrink: 0.5,
            tol_obj: 1e-10,
            tol_step: 1e-9,
            restarts: 8,
            seed: 0,
            init_strategy: InitStrategy::Mixed,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("step_init", self.step_init),
            ("tol_obj", self.tol_obj),
            ("tol_step", self.tol_step),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(invalid(format!("{name} must be positive, got {v}")));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(invalid("armijo_c must lie in (0, 1)"));
        }
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return Err(invalid("step_shrink must lie in (0, 1)"));
        }
        if self.restarts == 0 {
            return Err(invalid("at least one restart is required"));
        }
        Ok(())
    }

    fn init_for(&self, restart: usize) -> InitStrategy {
        match self.init_strategy {
            InitStrategy::Mixed if restart == 0 => InitStrategy::QuantileSeeded,
            InitStrategy::Mixed if restart == 1 => InitStrategy::OutlierSeeded,
            InitStrategy::Mixed => InitStrategy::DirichletRandom,
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    ObjectiveTolerance,
    StepTolerance,
    /// The line search could not find a decreasing step.
    Stalled,
    MaxIterations,
    /// Feasible set is a single point or the input is degenerate.
    Trivial,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartSummary<T> {
    pub init: InitStrategy,
    /// `(iteration, F)` after every accepted step, starting with iteration 0.
    pub trajectory: Vec<(usize, T)>,
    pub final_f: T,
    pub iterations: usize,
    pub converged: bool,
    pub stop: StopReason,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SolveReport<T> {
    pub best_membership: MembershipMatrix<T>,
    pub best_f: T,
    /// `None` when the gain is undefined (constant signal).
    pub gain: Option<T>,
    pub best_restart: usize,
    pub restarts: Vec<RestartSummary<T>>,
    /// Iterations used by the winning restart.
    pub iterations_used: usize,
    pub wall_time: Duration,
    pub warnings: Vec<String>,
    pub config: SolverConfig,
}

/// Solves the relaxed program for `classes` classes.
pub fn solve_relaxation<T: Scalar>(
    x: &SampleSet<T>,
    classes: usize,
    cfg: &SolverConfig,
) -> Result<SolveReport<T>> {
    let started = Instant::now();
    if classes == 0 {
        return Err(invalid("number of classes must be at least 1"));
    }
    cfg.validate()?;
    let n = x.len();
    let mut warnings = Vec::new();
    if n < classes {
        warnings.push(format!("fewer samples ({n}) than classes ({classes})"));
    }
    let objective = Objective::new(x.values());

    let trivial = |membership: MembershipMatrix<T>, warnings: Vec<String>| {
        let stats = class_stats_unchecked(x.values(), &membership);
        let f = objective.value_from_stats(&stats);
        SolveReport {
            gain: gain_from_stats(&stats).ok(),
            best_f: f,
            best_membership: membership,
            best_restart: 0,
            restarts: vec![RestartSummary {
                init: InitStrategy::Uniform,
                trajectory: vec![(0, f)],
                final_f: f,
                iterations: 0,
                converged: true,
                stop: StopReason::Trivial,
                failure: None,
            }],
            iterations_used: 0,
            wall_time: started.elapsed(),
            warnings,
            config: cfg.clone(),
        }
    };
    if classes == 1 {
        return Ok(trivial(MembershipMatrix::uniform(n, 1), warnings));
    }
    if x.range() == T::zero() {
        warnings.push("degenerate signal: all samples are equal; gain is undefined".into());
        return Ok(trivial(MembershipMatrix::uniform(n, classes), warnings));
    }

    let runs: Vec<(MembershipMatrix<T>, RestartSummary<T>)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let init = cfg.init_for(r);
            let start = initial_membership(x, classes, init, cfg.seed, r);
            run_restart(&objective, start, init, cfg)
        })
        .collect();

    let mut best: Option<usize> = None;
    for (r, (_, summary)) in runs.iter().enumerate() {
        if let Some(msg) = &summary.failure {
            warnings.push(format!("restart {r} aborted: {msg}"));
            continue;
        }
        if best.is_none_or(|b| summary.final_f < runs[b].1.final_f) {
            best = Some(r);
        }
    }
    let best = best.ok_or_else(|| Error::Numerical("every restart failed".into()))?;
    let (restart_memberships, restarts): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let best_membership = restart_memberships
        .into_iter()
        .nth(best)
        .expect("best index in range");
    let stats = class_stats_unchecked(x.values(), &best_membership);
    Ok(SolveReport {
        best_f: objective.value_from_stats(&stats),
        gain: gain_from_stats(&stats).ok(),
        best_membership,
        best_restart: best,
        iterations_used: restarts[best].iterations,
        restarts,
        wall_time: started.elapsed(),
        warnings,
        config: cfg.clone(),
    })
}

/// Starting point for restart `restart` under `init`.
pub fn initial_membership<T: Scalar>(
    x: &SampleSet<T>,
    classes: usize,
    init: InitStrategy,
    seed: u64,
    restart: usize,
) -> MembershipMatrix<T> {
    let n = x.len();
    match init {
        InitStrategy::Uniform => MembershipMatrix::uniform(n, classes),
        InitStrategy::QuantileSeeded | InitStrategy::Mixed => quantile_seeded(x, classes),
        InitStrategy::OutlierSeeded => outlier_seeded(x, classes),
        InitStrategy::DirichletRandom => {
            let mut rng = rng::generator(seed, rng::STREAM_SOLVER + restart as u64);
            let mut data = Vec::with_capacity(n * classes);
            let mut row = vec![0.0f64; classes];
            for _ in 0..n {
                for w in row.iter_mut() {
                    let e: f64 = Exp1.sample(&mut rng);
                    *w = e;
                }
                let total: f64 = row.iter().sum();
                data.extend(row.iter().map(|&w| T::lit(w / total)));
            }
            MembershipMatrix::from_raw(n, classes, data)
        }
    }
}

fn quantile_seeded<T: Scalar>(x: &SampleSet<T>, classes: usize) -> MembershipMatrix<T> {
    let mut sorted = x.values().to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    let centers: Vec<T> = (0..classes)
        .map(|i| {
            let q = (2 * i + 1) * n / (2 * classes);
            sorted[q.min(n - 1)]
        })
        .collect();
    let hi = T::lit(0.8);
    let lo = (T::one() - hi) / T::from_count(classes - 1);
    let mut data = Vec::with_capacity(n * classes);
    for &xn in x.values() {
        let nearest = centers
            .iter()
            .enumerate()
            .fold((0, T::infinity()), |best, (i, &c)| {
                let d = (xn - c).abs();
                if d < best.1 {
                    (i, d)
                } else {
                    best
                }
            })
            .0;
        data.extend((0..classes).map(|i| if i == nearest { hi } else { lo }));
    }
    MembershipMatrix::from_raw(n, classes, data)
}

fn outlier_seeded<T: Scalar>(x: &SampleSet<T>, classes: usize) -> MembershipMatrix<T> {
    let values = x.values();
    let n = values.len();
    let mean = x.mean();
    // Distance of every sample to the nearest already chosen point.
    let mut dist: Vec<T> = values.iter().map(|&v| (v - mean).abs()).collect();
    let mut label = vec![0usize; n];
    for class in 1..classes.min(n) {
        let pick =
            (0..n)
                .filter(|&k| label[k] == 0)
                .fold(None, |best: Option<usize>, k| match best {
                    Some(b) if dist[b] >= dist[k] => Some(b),
                    _ => Some(k),
                });
        let Some(pick) = pick else { break };
        label[pick] = class;
        let anchor = values[pick];
        for (d, &v) in dist.iter_mut().zip(values) {
            *d = d.min((v - anchor).abs());
        }
    }
    let mut data = vec![T::zero(); n * classes];
    for (k, &c) in label.iter().enumerate() {
        data[k * classes + c] = T::one();
    }
    MembershipMatrix::from_raw(n, classes, data)
}

fn run_restart<T: Scalar>(
    objective: &Objective<'_, T>,
    start: MembershipMatrix<T>,
    init: InitStrategy,
    cfg: &SolverConfig,
) -> (MembershipMatrix<T>, RestartSummary<T>) {
    let n = start.rows();
    let j = start.classes();
    let mut a = start;
    let mut f = objective.value(&a);
    let mut trajectory = vec![(0, f)];
    let mut grad = vec![T::zero(); n * j];
    let mut cand = vec![T::zero(); n * j];
    let mut scratch = Vec::with_capacity(j);
    let c = T::lit(cfg.armijo_c);
    let shrink = T::lit(cfg.step_shrink);
    let tol_obj = T::lit(cfg.tol_obj);
    let tol_step = T::lit(cfg.tol_step);
    let min_step = T::lit(1e-30);
    let mut step = T::lit(cfg.step_init);
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    let fail = |a: MembershipMatrix<T>, trajectory, iterations, msg: String| {
        (
            a,
            RestartSummary {
                init,
                trajectory,
                final_f: T::nan(),
                iterations,
                converged: false,
                stop: StopReason::Failed,
                failure: Some(msg),
            },
        )
    };
    if !f.is_finite() {
        return fail(
            a,
            trajectory,
            0,
            "objective is not finite at the starting point".into(),
        );
    }

    while iterations < cfg.max_iters {
        objective.gradient(&a, &mut grad);
        if grad.iter().any(|g| !g.is_finite()) {
            return fail(
                a,
                trajectory,
                iterations,
                format!("non-finite gradient at iteration {iterations}"),
            );
        }
        let accepted = loop {
            for ((out, &ai), &gi) in cand.iter_mut().zip(a.as_slice()).zip(&grad) {
                *out = ai - step * gi;
            }
            for row in cand.chunks_mut(j) {
                project_in_place(row, &mut scratch);
            }
            let mut slope = T::zero();
            let mut max_move = T::zero();
            for ((&ci, &ai), &gi) in cand.iter().zip(a.as_slice()).zip(&grad) {
                slope += gi * (ci - ai);
                max_move = max_move.max((ci - ai).abs());
            }
            if max_move == T::zero() {
                break None;
            }
            let trial = MembershipMatrix::from_raw(n, j, cand.clone());
            let f_trial = objective.value(&trial);
            // The projected slope is non-positive in exact arithmetic; clamping
            // keeps rounding from admitting an ascent step.
            if f_trial.is_finite() && f_trial <= f + c * slope.min(T::zero()) {
                break Some((trial, f_trial, max_move));
            }
            step *= shrink;
            if step < min_step {
                break None;
            }
        };
        let Some((next, f_next, max_move)) = accepted else {
            stop = if step < min_step {
                StopReason::Stalled
            } else {
                StopReason::StepTolerance
            };
            break;
        };
        iterations += 1;
        let decrease = f - f_next;
        a = next;
        f = f_next;
        trajectory.push((iterations, f));
        if max_move <= tol_step {
            stop = StopReason::StepTolerance;
            break;
        }
        if decrease <= tol_obj * f.abs().max(T::one()) {
            stop = StopReason::ObjectiveTolerance;
            break;
        }
        step /= shrink;
    }
    let converged = !matches!(stop, StopReason::MaxIterations | StopReason::Failed);
    (
        a,
        RestartSummary {
            init,
            trajectory,
            final_f: f,
            iterations,
            converged,
            stop,
            failure: None,
        },
    )
}
