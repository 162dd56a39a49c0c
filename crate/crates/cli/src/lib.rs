//! Command-line front end for `classgain`.

pub mod args;
pub mod error;
pub mod io;
pub mod report;
pub mod specfile;
pub mod svg;

use std::path::{Path, PathBuf};
use std::time::Instant;

use classgain::baselines::{brute_force_integer, em_gmm, kmeans};
use classgain::evaluation::{
    false_classification_ratios, run_experiment, BuiltinCase, EvalResult, ExperimentConfig, Method,
};
use classgain::gain::{classification_gain, log_objective};
use classgain::model::{generate_shaped, ClassificationScheme, SampleSet, Shape};
use classgain::rounding::{round_best_of_k, TypicalityEpsilons};
use classgain::solver::{solve_relaxation, SolverConfig};
use serde::Serialize;

use crate::args::{
    CaseArg, ClassifyArgs, Cli, Command, EvalArgs, GenArgs, MethodArg, ReproArgs, SolveArgs,
};
use crate::error::{CliError, Result};
use crate::io::Format;
use crate::report::{
    finite, sha256_hex, ClassifyReport, EmSection, RelaxationSection, ReproReport, RestartInfo,
    RoundingSection, RunManifest, Timings,
};

pub const THREADS_ENV: &str = "CLASSGAIN_THREADS";

/// Sizes the global thread pool from `CLASSGAIN_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "{THREADS_ENV} must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))
}

pub fn run(cli: Cli, argv: Vec<String>) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Gen(a) => gen(&a, seed, argv),
        Command::Classify(a) => classify(&a, seed.unwrap_or(0), argv),
        Command::Eval(a) => eval(&a, argv),
        Command::Repro(a) => repro(&a, seed.unwrap_or(0), argv),
    }
}

fn method_name(m: MethodArg) -> &'static str {
    match m {
        MethodArg::Relax => "relax",
        MethodArg::Kmeans => "kmeans",
        MethodArg::Em => "em",
        MethodArg::Brute => "brute",
    }
}

fn library_method(m: MethodArg) -> Method {
    match m {
        MethodArg::Relax => Method::Relaxation,
        MethodArg::Kmeans => Method::KMeans,
        MethodArg::Em => Method::Em,
        MethodArg::Brute => Method::BruteForce,
    }
}

fn builtin(case: CaseArg) -> BuiltinCase {
    match case {
        CaseArg::One => BuiltinCase::One,
        CaseArg::Two => BuiltinCase::Two,
        CaseArg::Three => BuiltinCase::Three,
        CaseArg::Twodim => BuiltinCase::TwoDim,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    io::write_atomic(path, text.as_bytes())
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(
        || path.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}

fn digest_of(path: &Path) -> Result<String> {
    Ok(sha256_hex(
        &std::fs::read(path).map_err(|e| CliError::io(path, e))?,
    ))
}

fn write_manifest(dir: &Path, mut manifest: RunManifest, outputs: &[PathBuf]) -> Result<()> {
    manifest.outputs = outputs.iter().map(|p| file_name(p)).collect();
    manifest.outputs.push("manifest.json".into());
    write_json(&dir.join("manifest.json"), &manifest)
}

fn manifest(
    command: &str,
    argv: Vec<String>,
    config: serde_json::Value,
    seeds: Vec<u64>,
    input: Option<&Path>,
) -> Result<RunManifest> {
    Ok(RunManifest {
        command: command.into(),
        argv,
        config,
        seeds,
        input_digest: input.map(digest_of).transpose()?,
        library_version: env!("CARGO_PKG_VERSION").into(),
        outputs: Vec::new(),
    })
}

fn gen(a: &GenArgs, seed: Option<u64>, argv: Vec<String>) -> Result<()> {
    let mut file = specfile::load(&a.input)?;
    if let Some(s) = seed {
        file.spec.seed = s;
    }
    let (x, truth) = generate_shaped::<f64>(&file.spec, file.shape)?;
    let format = a.format.unwrap_or(match file.shape {
        Shape::Grid { .. } => Format::Pgm,
        Shape::Linear(_) => Format::Csv,
    });
    create_dir(&a.out)?;
    let mut outputs = io::write_signal(
        &a.out.join(format!("signal.{}", format.extension())),
        &x,
        format,
    )?;
    let truth_path = a.out.join("truth.csv");
    io::write_labels(&truth_path, &truth, file.shape, Format::Csv)?;
    outputs.push(truth_path);
    let config =
        serde_json::json!({ "spec": file.spec, "shape": shape_pair(file.shape), "format": format });
    write_manifest(
        &a.out,
        manifest("gen", argv, config, vec![file.spec.seed], Some(&a.input))?,
        &outputs,
    )?;
    println!(
        "generated {} samples ({} classes) into {}",
        x.len(),
        file.spec.classes(),
        a.out.display()
    );
    Ok(())
}

fn shape_pair(shape: Shape) -> [usize; 2] {
    match shape {
        Shape::Linear(n) => [1, n],
        Shape::Grid { height, width } => [height, width],
    }
}

fn typicality_eps(s: &SolveArgs) -> Result<Option<TypicalityEpsilons>> {
    match (s.eps1, s.eps2, s.eps3) {
        (None, None, None) => Ok(None),
        (Some(e1), Some(e2), Some(e3)) => TypicalityEpsilons::new(e1, e2, e3)
            .map(Some)
            .map_err(|e| CliError::Usage(e.to_string())),
        _ => Err(CliError::Usage(
            "--eps1, --eps2 and --eps3 must be given together".into(),
        )),
    }
}

fn check_solve_args(s: &SolveArgs) -> Result<()> {
    if s.restarts == 0 {
        return Err(CliError::Usage("--restarts must be at least 1".into()));
    }
    if s.round_k == 0 {
        return Err(CliError::Usage("--round-k must be at least 1".into()));
    }
    Ok(())
}

fn solver_config(s: &SolveArgs, seed: u64) -> SolverConfig {
    SolverConfig {
        restarts: s.restarts,
        seed,
        ..SolverConfig::default()
    }
}

struct Classified {
    scheme: ClassificationScheme,
    relaxation: Option<RelaxationSection>,
    rounding: Option<RoundingSection>,
    em: Option<EmSection>,
    warnings: Vec<String>,
    timings: Timings,
}

fn run_method(x: &SampleSet<f64>, classes: usize, s: &SolveArgs, seed: u64) -> Result<Classified> {
    let started = Instant::now();
    let mut timings = Timings::default();
    let mut out = match s.method {
        MethodArg::Relax => {
            let report = solve_relaxation(x, classes, &solver_config(s, seed))?;
            timings.solve = started.elapsed().as_secs_f64() * 1e3;
            let round_start = Instant::now();
            let rounded = round_best_of_k(
                &report.best_membership,
                x,
                s.round_k,
                seed,
                typicality_eps(s)?,
            )?;
            timings.round = round_start.elapsed().as_secs_f64() * 1e3;
            let soft_rows = report
                .best_membership
                .iter_rows()
                .filter(|r| r.iter().any(|&v| v > 1e-9 && v < 1.0 - 1e-9))
                .count();
            Classified {
                relaxation: Some(RelaxationSection {
                    best_f: report.best_f,
                    best_restart: report.best_restart,
                    iterations_used: report.iterations_used,
                    soft_rows,
                    restarts: report
                        .restarts
                        .iter()
                        .map(|r| RestartInfo {
                            init: r.init,
                            final_f: r.final_f,
                            iterations: r.iterations,
                            converged: r.converged,
                            stop: r.stop,
                            failure: r.failure.clone(),
                        })
                        .collect(),
                    config: report.config.clone(),
                }),
                rounding: Some(RoundingSection {
                    trials: rounded.trials,
                    winning_trial: rounded.winning_trial,
                    hard_f: rounded.hard_f,
                    eps: rounded.eps,
                    typical: rounded.typicality.as_ref().map(|t| t.typical),
                    max_residuals: rounded.typicality.as_ref().map(|t| t.max_residuals),
                    azuma_bound: rounded.azuma_bound,
                }),
                scheme: rounded.scheme,
                em: None,
                warnings: report.warnings,
                timings: Timings::default(),
            }
        }
        MethodArg::Kmeans => plain(kmeans(x, classes, seed, 100)?),
        MethodArg::Em => {
            let fit = em_gmm(x, classes, seed, 500, 1e-10)?;
            let mut c = plain(fit.scheme);
            c.em = Some(EmSection {
                iterations: fit.iterations,
                log_likelihood: fit.params.log_likelihood,
                components: fit
                    .params
                    .components
                    .iter()
                    .map(|g| [g.weight, g.mean, g.variance])
                    .collect(),
            });
            c.warnings = fit.warnings;
            c
        }
        MethodArg::Brute => plain(brute_force_integer(x, classes)?.0),
    };
    if s.method != MethodArg::Relax {
        timings.solve = started.elapsed().as_secs_f64() * 1e3;
    }
    out.timings = timings;
    Ok(out)
}

fn plain(scheme: ClassificationScheme) -> Classified {
    Classified {
        scheme,
        relaxation: None,
        rounding: None,
        em: None,
        warnings: Vec::new(),
        timings: Timings::default(),
    }
}

fn classify(a: &ClassifyArgs, seed: u64, argv: Vec<String>) -> Result<()> {
    let started = Instant::now();
    if a.classes == 0 {
        return Err(CliError::Usage("--classes must be at least 1".into()));
    }
    check_solve_args(&a.solve)?;
    typicality_eps(&a.solve)?;
    let x = io::read_signal(&a.input)?;
    let truth = a
        .truth
        .as_deref()
        .map(|p| io::read_labels(p, a.classes))
        .transpose()?;
    if let Some(t) = &truth {
        if t.len() != x.len() {
            return Err(CliError::Data(format!(
                "truth has {} labels but the signal has {} samples",
                t.len(),
                x.len()
            )));
        }
    }
    let mut result = run_method(&x, a.classes, &a.solve, seed)?;
    let membership = result.scheme.to_membership::<f64>();
    let objective = log_objective(&x, &membership)?;
    let gain = classification_gain(&x, &membership).ok().and_then(finite);
    let evaluation = truth
        .as_ref()
        .map(|t| scored(&result.scheme, t, a.classes, gain, seed))
        .transpose()?;
    result.timings.total = started.elapsed().as_secs_f64() * 1e3;

    let format = a.format.unwrap_or_else(|| Format::of_path(&a.input));
    create_dir(&a.out)?;
    let labels_path = a.out.join(format!("labels.{}", format.extension()));
    io::write_labels(&labels_path, &result.scheme, x.shape(), format)?;
    let report = ClassifyReport {
        method: method_name(a.solve.method),
        classes: a.classes,
        samples: x.len(),
        shape: shape_pair(x.shape()),
        seed,
        objective,
        gain,
        class_counts: result.scheme.counts(),
        relaxation: result.relaxation,
        rounding: result.rounding,
        em: result.em,
        evaluation,
        warnings: result.warnings,
        timings_ms: result.timings,
    };
    let report_path = a.out.join("report.json");
    write_json(&report_path, &report)?;
    let figure_path = a.out.join("figure.svg");
    io::write_atomic(&figure_path, svg::render(&x, &result.scheme).as_bytes())?;

    let config = serde_json::json!({
        "classes": a.classes,
        "method": method_name(a.solve.method),
        "restarts": a.solve.restarts,
        "round_k": a.solve.round_k,
        "eps": typicality_eps(&a.solve)?,
        "format": format,
        "truth": a.truth.is_some(),
    });
    write_manifest(
        &a.out,
        manifest("classify", argv, config, vec![seed], Some(&a.input))?,
        &[labels_path, report_path, figure_path],
    )?;
    let gain_text = gain.map_or_else(|| "undefined".to_string(), |g| format!("{g:.4}"));
    println!(
        "{} samples, {} classes: F = {objective:.6} bits, gain = {gain_text}, counts {:?}",
        x.len(),
        a.classes,
        report.class_counts
    );
    if let Some(e) = &report.evaluation {
        println!("overall error {:.2}%", 100.0 * e.overall_error);
    }
    Ok(())
}

fn scored(
    z: &ClassificationScheme,
    truth: &ClassificationScheme,
    classes: usize,
    gain: Option<f64>,
    seed: u64,
) -> Result<EvalResult> {
    let mut e = false_classification_ratios(z, truth, classes)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    e.gain = gain;
    e.seed = Some(seed);
    Ok(e)
}

fn eval(a: &EvalArgs, argv: Vec<String>) -> Result<()> {
    if a.classes == 0 {
        return Err(CliError::Usage("--classes must be at least 1".into()));
    }
    let z = io::read_labels(&a.input, a.classes)?;
    let truth = io::read_labels(&a.truth, a.classes)?;
    if z.len() != truth.len() {
        return Err(CliError::Data(format!(
            "{} estimated labels but {} truth labels",
            z.len(),
            truth.len()
        )));
    }
    let result = false_classification_ratios(&z, &truth, a.classes)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let text = serde_json::to_string_pretty(&result).expect("result serializes");
    println!("{text}");
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        let path = dir.join("eval.json");
        write_json(&path, &result)?;
        let config =
            serde_json::json!({ "classes": a.classes, "truth_digest": digest_of(&a.truth)? });
        write_manifest(
            dir,
            manifest("eval", argv, config, Vec::new(), Some(&a.input))?,
            &[path],
        )?;
    }
    Ok(())
}

/// `"N"` means N consecutive seeds from `base`; `"a,b,c"` is an explicit list.
pub fn parse_seeds(raw: &str, base: u64) -> Result<Vec<u64>> {
    let bad = || {
        CliError::Usage(format!(
            "--seeds expects a count or a comma-separated list, got {raw:?}"
        ))
    };
    let raw = raw.trim();
    if raw.contains(',') {
        raw.split(',')
            .map(|s| s.trim().parse::<u64>().map_err(|_| bad()))
            .collect()
    } else {
        let count: u64 = raw.parse().map_err(|_| bad())?;
        if count == 0 {
            return Err(bad());
        }
        Ok((0..count).map(|k| base.wrapping_add(k)).collect())
    }
}

fn repro(a: &ReproArgs, seed: u64, argv: Vec<String>) -> Result<()> {
    check_solve_args(&a.solve)?;
    let seeds = parse_seeds(&a.seeds, seed)?;
    let case = builtin(a.case);
    let cfg = ExperimentConfig {
        solver: solver_config(&a.solve, seed),
        round_k: a.solve.round_k,
        eps: typicality_eps(&a.solve)?,
        ..ExperimentConfig::default()
    };
    let report = run_experiment::<f64>(
        &case.spec(seed),
        case.shape(),
        library_method(a.solve.method),
        &seeds,
        &cfg,
    )?;
    let reported = case.reported_ratios();
    let mean_pct: Vec<Option<f64>> = report
        .class_ratios
        .iter()
        .map(|s| s.map(|s| 100.0 * s.mean))
        .collect();

    println!(
        "case {} ({} samples), method {}, {} seed{}",
        case.name(),
        case.shape().len(),
        method_name(a.solve.method),
        seeds.len(),
        if seeds.len() == 1 { "" } else { "s" }
    );
    let pct =
        |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}%", 100.0 * v));
    if seeds.len() == 1 {
        let e = &report.outcomes[0].eval;
        println!("{:<6} {:>9} {:>9}", "class", "reported", "ratio");
        for (c, ce) in e.per_class.iter().enumerate() {
            println!("{:<6} {:>8.2}% {:>9}", c + 1, reported[c], pct(ce.ratio));
        }
        println!("overall error {:.2}%", 100.0 * e.overall_error);
    } else {
        println!(
            "{:<6} {:>9} {:>9} {:>9} {:>9} {:>9}",
            "class", "reported", "mean", "median", "min", "max"
        );
        for (c, s) in report.class_ratios.iter().enumerate() {
            let cols = s.map_or_else(
                || vec!["n/a".to_string(); 4],
                |s| {
                    [s.mean, s.median, s.min, s.max]
                        .iter()
                        .map(|&v| pct(Some(v)))
                        .collect()
                },
            );
            println!(
                "{:<6} {:>8.2}% {:>9} {:>9} {:>9} {:>9}",
                c + 1,
                reported[c],
                cols[0],
                cols[1],
                cols[2],
                cols[3]
            );
        }
        let o = report.overall_error;
        println!(
            "overall error: mean {:.2}%, median {:.2}%, max {:.2}%",
            100.0 * o.mean,
            100.0 * o.median,
            100.0 * o.max
        );
    }

    if let Some(dir) = &a.out {
        create_dir(dir)?;
        let single = seeds.len() == 1;
        let doc = ReproReport {
            case: case.name(),
            method: method_name(a.solve.method),
            seeds: seeds.clone(),
            reported_pct: reported,
            mean_pct,
            result: single.then(|| report.outcomes[0].eval.clone()),
            aggregate: (!single).then_some(report),
        };
        let path = dir.join("repro.json");
        write_json(&path, &doc)?;
        let config = serde_json::json!({
            "case": case.name(),
            "method": method_name(a.solve.method),
            "restarts": a.solve.restarts,
            "round_k": a.solve.round_k,
            "eps": cfg.eps,
        });
        write_manifest(dir, manifest("repro", argv, config, seeds, None)?, &[path])?;
    }
    Ok(())
}
