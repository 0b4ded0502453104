//! `balmatch`: operator surface for the matching toolkit.
//!
//! Subcommands cover model fitting, the greedy/replacement/extreme matchers,
//! bootstrap studies, min-weighted clustering, the enumeration oracle,
//! 2x2 chi-square tests, pitfall demonstrations and synthetic cohort
//! generation. Every output embeds a provenance block and is byte-identical
//! for identical (input bytes, flags, seed).
//!
//! Exit codes: 0 success, 1 validation error, 2 internal error.

mod output;
mod pitfall;

use balmatch_core::cohort::{parse_cohort, Cohort, CohortError, Group, DEFAULT_PRECISION};
use balmatch_core::dbsem::{self, rational_to_f64, ClusterAlgo, DbsemReport};
use balmatch_core::oracle;
use balmatch_core::propensity::{fit_logistic, FitOptions, PropensityError, PropensityModel};
use balmatch_core::psm::{self, ExtremeMode, MatchMode, PsmError};
use balmatch_core::stats::{self, StatsError, TestReport};
use balmatch_core::synth::{synth_cohort, SynthError, SynthSpec};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use output::{kv_table, p_value, percent, render, OutputFormat, Provenance};
use pitfall::PitfallKind;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Internal(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(msg) => write!(f, "{msg}"),
            CliError::Internal(msg) => write!(f, "internal error: {msg}"),
        }
    }
}

impl From<CohortError> for CliError {
    fn from(e: CohortError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<PropensityError> for CliError {
    fn from(e: PropensityError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<PsmError> for CliError {
    fn from(e: PsmError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Validation(e.to_string())
    }
}

const DEMO_COHORT: &str = include_str!("../data/sort_order_demo.csv");

#[derive(Parser)]
#[command(
    name = "balmatch",
    version,
    about = "Deterministic statistical matching: exact PSM, min-weighted clustering, bootstrap studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PsmModeArg {
    Covariate,
    Ps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExtremeModeArg {
    BestBest,
    WorstWorst,
    BestAWorstB,
    WorstABestB,
}

impl ExtremeModeArg {
    fn to_mode(self) -> ExtremeMode {
        match self {
            ExtremeModeArg::BestBest => ExtremeMode::BestBest,
            ExtremeModeArg::WorstWorst => ExtremeMode::WorstWorst,
            ExtremeModeArg::BestAWorstB => ExtremeMode::BestAWorstB,
            ExtremeModeArg::WorstABestB => ExtremeMode::WorstABestB,
        }
    }

    fn label(self) -> &'static str {
        match self {
            ExtremeModeArg::BestBest => "best-best",
            ExtremeModeArg::WorstWorst => "worst-worst",
            ExtremeModeArg::BestAWorstB => "best-a-worst-b",
            ExtremeModeArg::WorstABestB => "worst-a-best-b",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit the logistic propensity model on a cohort file
    Fit {
        input: PathBuf,
        #[arg(long, env = "BALMATCH_PRECISION", default_value_t = DEFAULT_PRECISION)]
        precision: u8,
        /// Convergence tolerance on the gradient norm
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
        #[arg(long, default_value_t = 100)]
        max_iterations: usize,
        /// Write the model document (JSON) to this path
        #[arg(long)]
        export: Option<PathBuf>,
        #[arg(long, value_enum, env = "BALMATCH_FORMAT", default_value = "table")]
        format: OutputFormat,
    },
    /// Greedy exact 1:1 matching (sort-order dependent by construction)
    Psm {
        input: PathBuf,
        #[arg(long, env = "BALMATCH_PRECISION", default_value_t = DEFAULT_PRECISION)]
        precision: u8,
        /// Exact-match predicate: covariate equality or score tolerance
        #[arg(long, value_enum, env = "BALMATCH_MODE", default_value = "covariate")]
        mode: PsmModeArg,
        /// Score tolerance for --mode ps
        #[arg(long, default_value_t = 1e-9)]
        epsilon: f64,
        /// Model document for --mode ps (fitted on the input when absent)
        #[arg(long)]
        model: Option<PathBuf>,
        /// Pick partners seeded-uniformly instead of first-in-sort-order
        #[arg(long, env = "BALMATCH_SEED")]
        seed: Option<u64>,
        /// Write the pair list here (CSV) plus a JSON sidecar at <path>.json
        #[arg(long)]
        export: Option<PathBuf>,
        #[arg(long, value_enum, env = "BALMATCH_FORMAT", default_value = "table")]
        format: OutputFormat,
    },
    /// Exact matching with replacement, both directions
    Replacement {
        input: PathBuf,
        #[arg(long, env = "BALMATCH_PRECISION", default_value_t = DEFAULT_PRECISION)]
        precision: u8,
        #[arg(long, value_enum, env = "BALMATCH_FORMAT", default_value = "table")]
        format: OutputFormat,
    },
    /// Best/worst-case envelope matchings (binary outcomes)
    Extreme {
        input: PathBuf,
        #[arg(long, env = "BALMATCH_PRECISION", default_value_t = DEFAULT_PRECISION)]
        precision: u8,
        #[arg(long, value_enum, env = "BALMATCH_MODE")]
        mode: ExtremeModeArg,
        /// Write the pair list here (CSV) plus a JSON sidecar at <path>.json
        #[arg(long)]
        export: Option<PathBuf>,
        #[arg(long, value_enum, env = "BALMATCH_FORMAT", default_value = "table")]
        format: OutputFormat,
    },
    /// Uniformly bootstrapped exact PSM study
    Bootstrap {
        input: PathBuf,
        #[arg(long, env = "BALMATCH_PRECISION", default_value_t = DEFAULT_PRECISION)]
        precision: u8,
        #[arg(long, env = "BALMATCH_ITERATIONS", default_value_t = 10_000)]
        iterations: u64,
        /// Required: bootstrap draws must be reproducible
        #[arg(long, env = "BALMATCH_SEED")]
        seed: Option<u64>,
        #[arg(long, value_enum, env = "BALMATCH_FORMAT", default_value = "table")]
        format: OutputFormat,
    },
    /// Min-weighted deterministic clustering result
    Dbsem {
        input: PathBuf,
        #[arg(long, env = "BALMATCH_PRECISION", default_value_t = DEFAULT_PRECISION)]
        precision: u8,
        /// Use the literal quadratic clustering loop instead of the index
        #[arg(long)]
        quadratic: bool,
        /// Write the full report JSON to this path
        #[arg(long)]
        export: Option<PathBuf>,
        #[arg(long, value_enum, env = "BALMATCH_FORMAT", default_value = "table")]
        format: OutputFormat,
    },
    /// Exact expected outcome over all uniform matchings (enumeration)
    Oracle {
        input: PathBuf,
        #[arg(long, env = "BALMATCH_PRECISION", default_value_t = DEFAULT_PRECISION)]
        precision: u8,
        /// Per-cluster size limit for subset enumeration
        #[arg(long, env = "BALMATCH_GUARD", default_value_t = oracle::DEFAULT_GUARD)]
        guard: usize,
        #[arg(long, value_enum, env = "BALMATCH_FORMAT", default_value = "table")]
        format: OutputFormat,
    },
    /// Pearson 2x2 chi-square on death counts (weighted counts accepted)
    Stats {
        deaths_a: f64,
        n_a: f64,
        deaths_b: f64,
        n_b: f64,
        #[arg(long, value_enum, env = "BALMATCH_FORMAT", default_value = "table")]
        format: OutputFormat,
    },
    /// Demonstrate the matching pitfalls on a cohort (bundled demo if omitted)
    Pitfall {
        #[arg(value_enum, default_value = "all")]
        kind: PitfallKind,
        input: Option<PathBuf>,
        #[arg(long, env = "BALMATCH_PRECISION", default_value_t = DEFAULT_PRECISION)]
        precision: u8,
        #[arg(long, value_enum, env = "BALMATCH_FORMAT", default_value = "table")]
        format: OutputFormat,
    },
    /// Generate a synthetic cohort file from a cluster-layout spec (JSON)
    Synth {
        spec: PathBuf,
        /// Cohort file to write
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, env = "BALMATCH_FORMAT", default_value = "table")]
        format: OutputFormat,
    },
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))
}

fn load_cohort(path: &Path, precision: u8) -> Result<(Cohort, Vec<u8>), CliError> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Validation(format!("{} is not UTF-8", path.display())))?;
    Ok((parse_cohort(&text, precision)?, bytes))
}

/// Summary block shared by the matching commands; outcome-dependent parts
/// are present only for binary outcomes.
#[derive(Serialize)]
struct MatchingReport {
    strategy: String,
    seed: Option<u64>,
    pairs: usize,
    matched_a: usize,
    matched_b: usize,
    deaths_a: Option<f64>,
    rate_a: Option<f64>,
    deaths_b: Option<f64>,
    rate_b: Option<f64>,
    chi_square: Option<TestReport>,
}

fn matching_report(
    matching: &psm::Matching,
    cohort: &Cohort,
    strategy: String,
) -> Result<MatchingReport, CliError> {
    let mut report = MatchingReport {
        strategy,
        seed: matching.seed(),
        pairs: matching.pairs().len(),
        matched_a: matching.matched_a(),
        matched_b: matching.matched_b(),
        deaths_a: None,
        rate_a: None,
        deaths_b: None,
        rate_b: None,
        chi_square: None,
    };
    if cohort.binary_outcomes() && !matching.is_empty() {
        let summary = stats::rate_summary(matching, cohort)?;
        report.deaths_a = Some(summary.deaths_a);
        report.rate_a = Some(summary.rate_a);
        report.deaths_b = Some(summary.deaths_b);
        report.rate_b = Some(summary.rate_b);
        report.chi_square = Some(stats::chi_square_2x2(
            summary.deaths_a,
            summary.pairs as f64,
            summary.deaths_b,
            summary.pairs as f64,
        )?);
    }
    Ok(report)
}

fn matching_table(report: &MatchingReport) -> String {
    let mut rows: Vec<(&str, String)> = vec![
        ("strategy", report.strategy.clone()),
        (
            "seed",
            report.seed.map_or("-".to_string(), |s| s.to_string()),
        ),
        ("pairs", report.pairs.to_string()),
        ("matched_a", report.matched_a.to_string()),
        ("matched_b", report.matched_b.to_string()),
    ];
    if let (Some(da), Some(ra), Some(db), Some(rb)) = (
        report.deaths_a,
        report.rate_a,
        report.deaths_b,
        report.rate_b,
    ) {
        rows.push(("deaths_a", format!("{da} ({})", percent(ra))));
        rows.push(("deaths_b", format!("{db} ({})", percent(rb))));
    }
    if let Some(test) = &report.chi_square {
        rows.push(("chi2_p_2tailed", p_value(test.p_value)));
    }
    kv_table(&rows)
}

fn export_matching(matching: &psm::Matching, path: &Path) -> Result<(), CliError> {
    write_file(path, &matching.to_pairs_csv())?;
    let sidecar = PathBuf::from(format!("{}.json", path.display()));
    write_file(&sidecar, &matching.sidecar_json())
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Fit {
            input,
            precision,
            tolerance,
            max_iterations,
            export,
            format,
        } => {
            let (cohort, bytes) = load_cohort(&input, precision)?;
            let model = fit_logistic(
                &cohort,
                &FitOptions {
                    tolerance,
                    max_iterations,
                },
            )?;
            if let Some(path) = &export {
                write_file(path, &model.to_json())?;
            }
            #[derive(Serialize)]
            struct FitReport {
                coefficients: Vec<f64>,
                dropped_columns: Vec<usize>,
                tolerance: f64,
                iterations: usize,
                converged: bool,
                gradient_norm: f64,
                separation_detected: bool,
            }
            let report = FitReport {
                coefficients: model.coefficients().to_vec(),
                dropped_columns: model.dropped_columns().to_vec(),
                tolerance: model.tolerance(),
                iterations: model.iterations(),
                converged: model.converged(),
                gradient_norm: model.gradient_norm(),
                separation_detected: model.separation_detected(),
            };
            let provenance = Provenance::new(
                "fit",
                Some(&bytes),
                format!(
                    "precision={precision} tolerance={tolerance} max_iterations={max_iterations}"
                ),
                None,
            );
            let table = kv_table(&[
                ("coefficients", format!("{:?}", report.coefficients)),
                ("dropped_columns", format!("{:?}", report.dropped_columns)),
                ("converged", report.converged.to_string()),
                ("iterations", report.iterations.to_string()),
                ("gradient_norm", format!("{:e}", report.gradient_norm)),
                (
                    "separation_detected",
                    report.separation_detected.to_string(),
                ),
            ]);
            Ok(render(format, &provenance, &report, &table))
        }

        Command::Psm {
            input,
            precision,
            mode,
            epsilon,
            model,
            seed,
            export,
            format,
        } => {
            let (cohort, bytes) = load_cohort(&input, precision)?;
            let loaded_model = match (mode, &model) {
                (PsmModeArg::Ps, Some(path)) => {
                    let text = String::from_utf8(read_file(path)?).map_err(|_| {
                        CliError::Validation(format!("{} is not UTF-8", path.display()))
                    })?;
                    Some(PropensityModel::from_json(&text)?)
                }
                (PsmModeArg::Ps, None) => Some(fit_logistic(&cohort, &FitOptions::default())?),
                (PsmModeArg::Covariate, _) => None,
            };
            let match_mode = match &loaded_model {
                Some(m) => MatchMode::PsTolerance { model: m, epsilon },
                None => MatchMode::Covariate,
            };
            let matching = psm::greedy_exact_psm(&cohort, &match_mode, seed)?;
            if let Some(path) = &export {
                export_matching(&matching, path)?;
            }
            let mode_label = match mode {
                PsmModeArg::Covariate => "covariate",
                PsmModeArg::Ps => "ps",
            };
            let report = matching_report(&matching, &cohort, "greedy".to_string())?;
            let provenance = Provenance::new(
                "psm",
                Some(&bytes),
                format!("precision={precision} mode={mode_label} epsilon={epsilon}"),
                seed,
            );
            let table = matching_table(&report);
            Ok(render(format, &provenance, &report, &table))
        }

        Command::Replacement {
            input,
            precision,
            format,
        } => {
            let (cohort, bytes) = load_cohort(&input, precision)?;
            let rm = psm::exact_psm_with_replacement(&cohort);
            #[derive(Serialize)]
            struct ReplacementReport {
                total_matches: usize,
                a_to_b_pairs: usize,
                b_to_a_pairs: usize,
                deaths_a: Option<f64>,
                rate_a: Option<f64>,
                deaths_b: Option<f64>,
                rate_b: Option<f64>,
                chi_square: Option<TestReport>,
            }
            let mut report = ReplacementReport {
                total_matches: rm.total_matches(),
                a_to_b_pairs: rm.a_to_b.pairs().len(),
                b_to_a_pairs: rm.b_to_a.pairs().len(),
                deaths_a: None,
                rate_a: None,
                deaths_b: None,
                rate_b: None,
                chi_square: None,
            };
            if cohort.binary_outcomes() && rm.total_matches() > 0 {
                let summary = stats::rate_summary_replacement(&rm, &cohort)?;
                report.deaths_a = Some(summary.deaths_a);
                report.rate_a = Some(summary.rate_a);
                report.deaths_b = Some(summary.deaths_b);
                report.rate_b = Some(summary.rate_b);
                report.chi_square = Some(stats::chi_square_2x2(
                    summary.deaths_a,
                    summary.pairs as f64,
                    summary.deaths_b,
                    summary.pairs as f64,
                )?);
            }
            let provenance = Provenance::new(
                "replacement",
                Some(&bytes),
                format!("precision={precision}"),
                None,
            );
            let mut rows = vec![
                ("total_matches", report.total_matches.to_string()),
                ("a_to_b_pairs", report.a_to_b_pairs.to_string()),
                ("b_to_a_pairs", report.b_to_a_pairs.to_string()),
            ];
            if let (Some(da), Some(ra), Some(db), Some(rb)) = (
                report.deaths_a,
                report.rate_a,
                report.deaths_b,
                report.rate_b,
            ) {
                rows.push(("deaths_a", format!("{da} ({})", percent(ra))));
                rows.push(("deaths_b", format!("{db} ({})", percent(rb))));
            }
            if let Some(test) = &report.chi_square {
                rows.push(("chi2_p_2tailed", p_value(test.p_value)));
            }
            let table = kv_table(&rows);
            Ok(render(format, &provenance, &report, &table))
        }

        Command::Extreme {
            input,
            precision,
            mode,
            export,
            format,
        } => {
            let (cohort, bytes) = load_cohort(&input, precision)?;
            let matching = psm::extreme_matching(&cohort, mode.to_mode())?;
            if let Some(path) = &export {
                export_matching(&matching, path)?;
            }
            let report = matching_report(&matching, &cohort, mode.label().to_string())?;
            let provenance = Provenance::new(
                "extreme",
                Some(&bytes),
                format!("precision={precision} mode={}", mode.label()),
                None,
            );
            let table = matching_table(&report);
            Ok(render(format, &provenance, &report, &table))
        }

        Command::Bootstrap {
            input,
            precision,
            iterations,
            seed,
            format,
        } => {
            let seed = seed.ok_or_else(|| {
                CliError::Validation(
                    "seed required: pass --seed (bootstrap draws must be reproducible)".to_string(),
                )
            })?;
            if iterations < 1 {
                return Err(CliError::Validation(
                    "iterations must be at least 1".to_string(),
                ));
            }
            let (cohort, bytes) = load_cohort(&input, precision)?;
            let report = psm::uniform_bootstrap_psm(&cohort, iterations, seed)?;
            #[derive(Serialize)]
            struct BootstrapDoc {
                #[serde(flatten)]
                report: psm::BootstrapReport,
                chi_square_on_means: Option<TestReport>,
            }
            let chi = if report.matched_pairs > 0 {
                Some(stats::chi_square_2x2(
                    report.mean_deaths_a,
                    report.matched_pairs as f64,
                    report.mean_deaths_b,
                    report.matched_pairs as f64,
                )?)
            } else {
                None
            };
            let doc = BootstrapDoc {
                report: report.clone(),
                chi_square_on_means: chi,
            };
            let provenance = Provenance::new(
                "bootstrap",
                Some(&bytes),
                format!("precision={precision} iterations={iterations}"),
                Some(seed),
            );
            let mut rows = vec![
                ("iterations", report.iterations.to_string()),
                ("matched_pairs", report.matched_pairs.to_string()),
                (
                    "mean_deaths_a",
                    format!(
                        "{:.2} ({})",
                        report.mean_deaths_a,
                        percent(report.mean_rate_a)
                    ),
                ),
                (
                    "mean_deaths_b",
                    format!(
                        "{:.2} ({})",
                        report.mean_deaths_b,
                        percent(report.mean_rate_b)
                    ),
                ),
                ("std_error_a", format!("{:.4}", report.std_error_a)),
                ("std_error_b", format!("{:.4}", report.std_error_b)),
            ];
            if let Some(test) = &doc.chi_square_on_means {
                rows.push(("chi2_p_on_means", p_value(test.p_value)));
            }
            let table = kv_table(&rows);
            Ok(render(format, &provenance, &doc, &table))
        }

        Command::Dbsem {
            input,
            precision,
            quadratic,
            export,
            format,
        } => {
            let (cohort, bytes) = load_cohort(&input, precision)?;
            let algo = if quadratic {
                ClusterAlgo::Quadratic
            } else {
                ClusterAlgo::Indexed
            };
            let outcome = dbsem::dbsem_with(&cohort, algo);
            let usage = dbsem::usage_report(&outcome.matching, &cohort);
            let report = DbsemReport::from_parts(&outcome, &usage);
            if let Some(path) = &export {
                write_file(path, &report.to_json())?;
            }
            let t_test = if outcome.matching.total_pairs() > 0 {
                let (a, b) = stats::weighted_observations(&outcome.matching, &cohort)?;
                Some(stats::t_test_two_sample(&a, &b)?)
            } else {
                None
            };
            #[derive(Serialize)]
            struct DbsemDoc {
                #[serde(flatten)]
                report: DbsemReport,
                t_test: Option<TestReport>,
            }
            let provenance = Provenance::new(
                "dbsem",
                Some(&bytes),
                format!(
                    "precision={precision} algo={}",
                    if quadratic { "quadratic" } else { "indexed" }
                ),
                None,
            );
            let result = &outcome.result;
            let mut rows = vec![
                ("matched_pairs", result.matched_pairs_total.to_string()),
                ("clusters_a", outcome.matching.k().to_string()),
                ("clusters_b", outcome.matching.l().to_string()),
                (
                    "r_a",
                    format!(
                        "{} ({})",
                        dbsem::rational_decimal(&result.r_a),
                        percent(rational_to_f64(&result.rate_a))
                    ),
                ),
                (
                    "r_b",
                    format!(
                        "{} ({})",
                        dbsem::rational_decimal(&result.r_b),
                        percent(rational_to_f64(&result.rate_b))
                    ),
                ),
                (
                    "usage_members_a",
                    dbsem::rational_decimal(&usage.member_fraction_a),
                ),
                (
                    "usage_members_b",
                    dbsem::rational_decimal(&usage.member_fraction_b),
                ),
                (
                    "usage_pairs_a",
                    dbsem::rational_decimal(&usage.pairs_fraction_a),
                ),
                (
                    "usage_pairs_b",
                    dbsem::rational_decimal(&usage.pairs_fraction_b),
                ),
            ];
            let doc = DbsemDoc { report, t_test };
            if let Some(test) = &doc.t_test {
                rows.push(("t_test_p_2tailed", p_value(test.p_value)));
            }
            let table = kv_table(&rows);
            Ok(render(format, &provenance, &doc, &table))
        }

        Command::Oracle {
            input,
            precision,
            guard,
            format,
        } => {
            let (cohort, bytes) = load_cohort(&input, precision)?;
            let expectation = oracle::enumerate_expectation(&cohort, guard);
            #[derive(Serialize)]
            struct OracleDoc {
                e_a: String,
                e_b: String,
                feasible: bool,
                enumerated_selections: u64,
            }
            let doc = OracleDoc {
                e_a: dbsem::rational_json(&expectation.e_a).exact,
                e_b: dbsem::rational_json(&expectation.e_b).exact,
                feasible: expectation.feasible,
                enumerated_selections: expectation.enumerated_selections,
            };
            let provenance = Provenance::new(
                "oracle",
                Some(&bytes),
                format!("precision={precision} guard={guard}"),
                None,
            );
            let table = kv_table(&[
                (
                    "e_a",
                    format!(
                        "{} ({})",
                        doc.e_a,
                        dbsem::rational_decimal(&expectation.e_a)
                    ),
                ),
                (
                    "e_b",
                    format!(
                        "{} ({})",
                        doc.e_b,
                        dbsem::rational_decimal(&expectation.e_b)
                    ),
                ),
                ("feasible", doc.feasible.to_string()),
                (
                    "enumerated_selections",
                    doc.enumerated_selections.to_string(),
                ),
            ]);
            Ok(render(format, &provenance, &doc, &table))
        }

        Command::Stats {
            deaths_a,
            n_a,
            deaths_b,
            n_b,
            format,
        } => {
            let report = stats::chi_square_2x2(deaths_a, n_a, deaths_b, n_b)?;
            let provenance = Provenance::new(
                "stats",
                None,
                format!("deaths_a={deaths_a} n_a={n_a} deaths_b={deaths_b} n_b={n_b}"),
                None,
            );
            let table = kv_table(&[
                ("statistic", format!("{:.6}", report.statistic)),
                ("df", format!("{}", report.df)),
                ("p_2tailed", p_value(report.p_value)),
                ("degenerate", report.degenerate.to_string()),
            ]);
            Ok(render(format, &provenance, &report, &table))
        }

        Command::Pitfall {
            kind,
            input,
            precision,
            format,
        } => {
            let (cohort, bytes) = match &input {
                Some(path) => load_cohort(path, precision)?,
                None => (
                    parse_cohort(DEMO_COHORT, precision)
                        .map_err(|e| CliError::Internal(format!("bundled demo cohort: {e}")))?,
                    DEMO_COHORT.as_bytes().to_vec(),
                ),
            };
            let report = pitfall::build_report(kind, &cohort)?;
            let provenance = Provenance::new(
                "pitfall",
                Some(&bytes),
                format!(
                    "precision={precision} kind={}",
                    match kind {
                        PitfallKind::SortOrder => "sort-order",
                        PitfallKind::Randomness => "randomness",
                        PitfallKind::Usage => "usage",
                        PitfallKind::Collision => "collision",
                        PitfallKind::All => "all",
                    }
                ),
                None,
            );
            let table = report.render_text();
            Ok(render(format, &provenance, &report, &table))
        }

        Command::Synth {
            spec,
            output,
            format,
        } => {
            let bytes = read_file(&spec)?;
            let text = String::from_utf8(bytes.clone())
                .map_err(|_| CliError::Validation(format!("{} is not UTF-8", spec.display())))?;
            let parsed = SynthSpec::from_json(&text)?;
            let cohort = synth_cohort(&parsed)?;
            let serialized = cohort.to_delimited();
            write_file(&output, &serialized)?;
            #[derive(Serialize)]
            struct SynthReport {
                written: String,
                patients: usize,
                count_a: usize,
                count_b: usize,
                dimension: usize,
                precision: u8,
                output_sha256: String,
            }
            let report = SynthReport {
                written: output.display().to_string(),
                patients: cohort.len(),
                count_a: cohort.count(Group::A),
                count_b: cohort.count(Group::B),
                dimension: cohort.dimension(),
                precision: cohort.precision(),
                output_sha256: hex::encode(Sha256::digest(serialized.as_bytes())),
            };
            let provenance = Provenance::new(
                "synth",
                Some(&bytes),
                format!("seed={}", parsed.seed),
                Some(parsed.seed),
            );
            let table = kv_table(&[
                ("written", report.written.clone()),
                ("patients", report.patients.to_string()),
                ("count_a", report.count_a.to_string()),
                ("count_b", report.count_b.to_string()),
                ("dimension", report.dimension.to_string()),
                ("precision", report.precision.to_string()),
                ("output_sha256", report.output_sha256.clone()),
            ]);
            Ok(render(format, &provenance, &report, &table))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    let _ = e.print();
                    ExitCode::from(1)
                }
            };
        }
    };
    match run(cli) {
        Ok(stdout) => {
            print!("{stdout}");
            ExitCode::SUCCESS
        }
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}
