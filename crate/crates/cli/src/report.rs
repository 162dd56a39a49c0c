//! JSON documents written by the commands. The schema lives in
//! `docs/report.schema.json`.

use classgain::evaluation::{EvalResult, ExperimentReport};
use classgain::rounding::TypicalityEpsilons;
use classgain::solver::{InitStrategy, SolverConfig, StopReason};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct ClassifyReport {
    pub method: &'static str,
    pub classes: usize,
    pub samples: usize,
    /// `[height, width]`; `[1, N]` for linear signals.
    pub shape: [usize; 2],
    pub seed: u64,
    /// Relaxed objective `F` of the output labels, in bits.
    pub objective: f64,
    /// `null` when undefined (constant signal) or unbounded (a zero-variance class).
    pub gain: Option<f64>,
    pub class_counts: Vec<usize>,
    pub relaxation: Option<RelaxationSection>,
    pub rounding: Option<RoundingSection>,
    pub em: Option<EmSection>,
    pub evaluation: Option<EvalResult>,
    pub warnings: Vec<String>,
    pub timings_ms: Timings,
}

#[derive(Debug, Clone, Serialize)]
pub struct RelaxationSection {
    pub best_f: f64,
    pub best_restart: usize,
    pub iterations_used: usize,
    /// Rows of the relaxed solution that are not 0/1.
    pub soft_rows: usize,
    pub restarts: Vec<RestartInfo>,
    pub config: SolverConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct RestartInfo {
    pub init: InitStrategy,
    pub final_f: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop: StopReason,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundingSection {
    pub trials: usize,
    pub winning_trial: usize,
    pub hard_f: f64,
    pub eps: Option<TypicalityEpsilons>,
    pub typical: Option<bool>,
    pub max_residuals: Option<[f64; 3]>,
    pub azuma_bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmSection {
    pub iterations: usize,
    pub log_likelihood: f64,
    /// `(weight, mean, variance)` per component.
    pub components: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub solve: f64,
    pub round: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReproReport {
    pub case: &'static str,
    pub method: &'static str,
    pub seeds: Vec<u64>,
    /// Reference per-class ratios of the case, percent.
    pub reported_pct: [f64; 2],
    /// Mean per-class ratios over seeds, percent (`null` if a class never occurred).
    pub mean_pct: Vec<Option<f64>>,
    /// Present for a single seed.
    pub result: Option<EvalResult>,
    /// Present for two or more seeds.
    pub aggregate: Option<ExperimentReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    /// SHA-256 of the input file, hex.
    pub input_digest: Option<String>,
    pub library_version: String,
    /// File names written next to the manifest.
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
