//! Subcommand implementations behind the `osamtl` binary. Each returns the
//! process exit code: 0 on success, 1 on runtime or validation failure, 2 on
//! usage or configuration errors.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::eval::{run_baseline_detailed, run_osamtl_dnls, BaselineKind, Metrics};
use crate::knowledge::{GroundingSet, Inconsistency};
use crate::model::{diversity_matrix, validate_dnls, DatasetFile, NoisySampleDnls};
use crate::reasoning::{one_step_reasoning, Abduction, RevisedGroundingSet, TargetSpec};
use crate::synth::generate_dataset;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Name of the abductive multi-target method in reports.
pub const METHOD_NAME: &str = "osamtl_dnls";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Failure(m) => m,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn failure(e: impl std::fmt::Display) -> CliError {
    CliError::Failure(e.to_string())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<NoisySampleDnls> {
    let text = std::fs::read_to_string(path)?;
    let file: DatasetFile = serde_json::from_str(&text)?;
    file.into_sample()
}

fn load_config(path: &Path) -> std::result::Result<ExperimentConfig, CliError> {
    ExperimentConfig::load(path).map_err(usage)
}

pub fn cmd_generate(config_path: &Path, out_path: &Path, out: &mut dyn Write) -> std::result::Result<(), CliError> {
    let cfg = load_config(config_path)?;
    let ns = generate_dataset(&cfg.synth).map_err(failure)?;
    write_json(out_path, &DatasetFile::from_sample(&ns)).map_err(failure)?;
    let matrix = diversity_matrix(&ns.dnls).map_err(failure)?;
    let min_pair = matrix
        .iter()
        .enumerate()
        .flat_map(|(a, row)| row.iter().skip(a + 1).copied())
        .fold(f64::INFINITY, f64::min);
    let _ = writeln!(out, "n = {}, d = {}, min pairwise difference = {min_pair:.4}", ns.n(), ns.d());
    Ok(())
}

pub fn cmd_validate(dataset_path: &Path, tau: Option<f64>, out: &mut dyn Write) -> std::result::Result<(), CliError> {
    let mut ns = load_dataset(dataset_path).map_err(usage)?;
    if let Some(t) = tau {
        ns.dnls.tau_div = t;
    }
    let report = validate_dnls(&ns);
    if let Ok(matrix) = diversity_matrix(&ns.dnls) {
        let _ = writeln!(out, "pairwise difference matrix (d = {}):", ns.d());
        for row in matrix {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
            let _ = writeln!(out, "  {}", cells.join(" "));
        }
    }
    if report.is_ok() {
        let _ = writeln!(out, "PASS: all {} branches pairwise diverse (tau_div = {})", ns.d(), ns.dnls.tau_div);
        Ok(())
    } else {
        let msgs: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
        for m in &msgs {
            let _ = writeln!(out, "violation: {m}");
        }
        Err(CliError::Failure(format!("FAIL: {}", msgs.join("; "))))
    }
}

/// Targets plus the full reasoning audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetsFile {
    pub m: usize,
    pub n: usize,
    pub specs: Vec<TargetSpec>,
    pub targets: Vec<Vec<f64>>,
    pub residuals: Vec<Vec<Inconsistency>>,
    pub groundings: Vec<GroundingSet>,
    pub inconsistencies: Vec<Vec<Inconsistency>>,
    pub revised: Vec<RevisedGroundingSet>,
}

impl TargetsFile {
    pub fn from_abduction(a: &Abduction) -> Self {
        Self {
            m: a.targets.m(),
            n: a.targets.n(),
            specs: a.specs.clone(),
            targets: a.targets.rows().to_vec(),
            residuals: a.revised.iter().map(|r| r.residuals.clone()).collect(),
            groundings: a.groundings.clone(),
            inconsistencies: a.inconsistencies.clone(),
            revised: a.revised.clone(),
        }
    }
}

pub fn abduce_file(ns: &NoisySampleDnls, cfg: &ExperimentConfig) -> Result<TargetsFile> {
    let specs = cfg.resolve_specs(ns.d());
    let a = one_step_reasoning(ns, &cfg.kb, &cfg.policy, &specs)?;
    Ok(TargetsFile::from_abduction(&a))
}

pub fn cmd_abduce(
    dataset_path: &Path,
    config_path: &Path,
    out_path: &Path,
    out: &mut dyn Write,
) -> std::result::Result<(), CliError> {
    let cfg = load_config(config_path)?;
    let ns = load_dataset(dataset_path).map_err(usage)?;
    let file = abduce_file(&ns, &cfg).map_err(failure)?;
    write_json(out_path, &file).map_err(failure)?;
    let residual_count: usize = file.residuals.iter().map(Vec::len).sum();
    let _ = writeln!(out, "m = {}, n = {}, residual inconsistencies = {residual_count}", file.m, file.n);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub results: Vec<MethodResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMean {
    pub method: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub methods: Vec<String>,
    pub per_seed: Vec<SeedReport>,
    pub means: Vec<MethodMean>,
}

impl PipelineReport {
    pub fn mean(&self, method: &str) -> Option<&MethodMean> {
        self.means.iter().find(|m| m.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,seed,tp,fp,fn,tn,precision,recall,f1,accuracy\n");
        for sr in &self.per_seed {
            for r in &sr.results {
                let m = &r.metrics;
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    r.method, sr.seed, m.tp, m.fp, m.fn_, m.tn, m.precision, m.recall, m.f1, m.accuracy
                ));
            }
        }
        s
    }
}

fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedReport> {
    let mut synth = cfg.synth.clone();
    synth.seed = seed;
    let ns = generate_dataset(&synth)?;
    ns.ensure_valid()?;
    let specs = cfg.resolve_specs(ns.d());
    let alpha = cfg.resolve_alpha(specs.len())?;
    let fm = cfg.feature_map();
    let ours = run_osamtl_dnls(&ns, &cfg.kb, &cfg.policy, &specs, Some(&alpha), &fm, &cfg.train, cfg.threshold)?;
    let mut results = vec![MethodResult { method: METHOD_NAME.into(), metrics: ours.run.metrics }];
    for &kind in &cfg.baselines {
        let run = run_baseline_detailed(kind, &ns, &fm, &cfg.train, cfg.threshold)?;
        results.push(MethodResult { method: kind.name(), metrics: run.metrics });
    }
    Ok(SeedReport { seed, results })
}

/// Runs every seed (concurrently) and aggregates per-method means. Results
/// are ordered by seed position, then method.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<PipelineReport> {
    if cfg.seeds.is_empty() {
        return Err(Error::InvalidConfig("seeds: at least one seed is required".into()));
    }
    let per_seed = cfg.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect::<Result<Vec<_>>>()?;
    let mut methods = vec![METHOD_NAME.to_string()];
    methods.extend(cfg.baselines.iter().map(BaselineKind::name));
    let count = per_seed.len() as f64;
    let means = methods
        .iter()
        .enumerate()
        .map(|(j, method)| {
            let col = || per_seed.iter().map(move |s| &s.results[j].metrics);
            MethodMean {
                method: method.clone(),
                precision: col().map(|m| m.precision).sum::<f64>() / count,
                recall: col().map(|m| m.recall).sum::<f64>() / count,
                f1: col().map(|m| m.f1).sum::<f64>() / count,
                accuracy: col().map(|m| m.accuracy).sum::<f64>() / count,
            }
        })
        .collect();
    Ok(PipelineReport { methods, per_seed, means })
}

pub fn cmd_pipeline(
    config_path: &Path,
    out_path: &Path,
    csv_path: Option<&Path>,
    out: &mut dyn Write,
) -> std::result::Result<(), CliError> {
    let cfg = load_config(config_path)?;
    if cfg.seeds.is_empty() {
        return Err(CliError::Usage("seeds: at least one seed is required".into()));
    }
    let report = run_experiment(&cfg).map_err(failure)?;
    write_json(out_path, &report).map_err(failure)?;
    if let Some(csv) = csv_path {
        std::fs::write(csv, report.to_csv()).map_err(failure)?;
    }
    let _ = writeln!(out, "{:<22} {:>9} {:>9} {:>9} {:>9}", "method", "precision", "recall", "f1", "accuracy");
    for m in &report.means {
        let _ = writeln!(
            out,
            "{:<22} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            m.method, m.precision, m.recall, m.f1, m.accuracy
        );
    }
    Ok(())
}
