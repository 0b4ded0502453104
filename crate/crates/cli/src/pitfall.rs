//! The pitfall demonstrations: sort-order dependence, randomness of choice,
//! incomplete data usage, and coefficient collisions, each shown on a small
//! concrete cohort as a narrative report.

use balmatch_core::cohort::{parse_cohort, Cohort};
use balmatch_core::dbsem::{self, rational_decimal};
use balmatch_core::propensity::{
    detect_coefficient_collisions, PropensityModel, DEFAULT_COLLISION_TOLERANCE,
};
use balmatch_core::psm::{self, MatchMode};
use balmatch_core::stats;
use serde::Serialize;
use std::collections::BTreeSet;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PitfallKind {
    SortOrder,
    Randomness,
    Usage,
    Collision,
    All,
}

#[derive(Debug, Serialize)]
pub struct Section {
    pub title: String,
    pub lines: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct PitfallReport {
    pub sections: Vec<Section>,
}

impl PitfallReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for section in &self.sections {
            out.push_str(&format!("== {} ==\n", section.title));
            for line in &section.lines {
                out.push_str(line);
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }
}

fn greedy_summary(cohort: &Cohort, seed: Option<u64>) -> Result<(usize, f64, f64), CliError> {
    let matching = psm::greedy_exact_psm(cohort, &MatchMode::Covariate, seed)?;
    let summary = stats::rate_summary(&matching, cohort)?;
    Ok((summary.pairs, summary.deaths_a, summary.deaths_b))
}

fn sort_order_section(cohort: &Cohort) -> Result<Section, CliError> {
    let reversed = cohort.permuted(&(0..cohort.len()).rev().collect::<Vec<_>>())?;
    let (pairs_1, da_1, db_1) = greedy_summary(cohort, None)?;
    let (pairs_2, da_2, db_2) = greedy_summary(&reversed, None)?;
    let out_1 = dbsem::dbsem(cohort).result;
    let out_2 = dbsem::dbsem(&reversed).result;
    let mut lines = vec![
        format!("greedy on file order     : {pairs_1} pairs, deaths A={da_1} B={db_1}"),
        format!("greedy on reversed order : {pairs_2} pairs, deaths A={da_2} B={db_2}"),
        format!(
            "greedy results {} across the two sort orders",
            if (da_1, db_1) == (da_2, db_2) {
                "AGREE"
            } else {
                "DIFFER"
            }
        ),
        format!(
            "min-weighted clustering  : R_A={} R_B={} on both orders (identical: {})",
            rational_decimal(&out_1.r_a),
            rational_decimal(&out_1.r_b),
            out_1 == out_2
        ),
    ];
    if (da_1, db_1) != (da_2, db_2) {
        lines.push(
            "same dataset, same algorithm, different headline numbers: only the row order moved"
                .to_string(),
        );
    }
    Ok(Section {
        title: "sort-order dependence".to_string(),
        lines,
    })
}

fn randomness_section(cohort: &Cohort) -> Result<Section, CliError> {
    let mut lines = Vec::new();
    let mut distinct: BTreeSet<(u64, u64)> = BTreeSet::new();
    for seed in 0..10u64 {
        let (pairs, da, db) = greedy_summary(cohort, Some(seed))?;
        distinct.insert((da as u64, db as u64));
        lines.push(format!("seed {seed}: {pairs} pairs, deaths A={da} B={db}"));
    }
    lines.push(format!(
        "{} distinct death-count outcomes over 10 seeds of the same greedy matcher",
        distinct.len()
    ));
    Ok(Section {
        title: "randomness of choice".to_string(),
        lines,
    })
}

fn usage_section(cohort: &Cohort) -> Result<Section, CliError> {
    let out = dbsem::dbsem(cohort);
    let usage = dbsem::usage_report(&out.matching, cohort);
    let greedy = psm::greedy_exact_psm(cohort, &MatchMode::Covariate, None)?;
    let replacement = psm::exact_psm_with_replacement(cohort);
    Ok(Section {
        title: "incomplete usage of data".to_string(),
        lines: vec![
            format!(
                "greedy 1:1 matching uses {} pairs ({} of A, {} of B as pairs-fraction)",
                greedy.pairs().len(),
                rational_decimal(&usage.pairs_fraction_a),
                rational_decimal(&usage.pairs_fraction_b)
            ),
            format!(
                "patients inside matchable clusters: {} of A, {} of B (member-fraction)",
                rational_decimal(&usage.member_fraction_a),
                rational_decimal(&usage.member_fraction_b)
            ),
            format!(
                "matching with replacement reaches {} matches (A->B {}, B->A {}) but lets single patients repeat",
                replacement.total_matches(),
                replacement.a_to_b.pairs().len(),
                replacement.b_to_a.pairs().len()
            ),
            "min-weighted clustering uses every member of every matchable cluster instead".to_string(),
        ],
    })
}

/// The collision construction is self-contained: slopes (1, 2, 3) collide
/// because 1 + 2 = 3, making cv (1,1,0) and (0,0,1) score-identical.
fn collision_section() -> Result<Section, CliError> {
    let model = PropensityModel::from_coefficients(0.0, &[1.0, 2.0, 3.0]);
    let report = detect_coefficient_collisions(&model, DEFAULT_COLLISION_TOLERANCE);
    let cohort = parse_cohort(
        "id,group,outcome,cv_1,cv_2,cv_3\nx,A,0,1,1,0\nz,B,0,0,0,1\n",
        6,
    )
    .map_err(|e| CliError::Internal(format!("collision demo cohort: {e}")))?;
    let by_score = psm::greedy_exact_psm(
        &cohort,
        &MatchMode::PsTolerance {
            model: &model,
            epsilon: DEFAULT_COLLISION_TOLERANCE,
        },
        None,
    )?;
    let by_covariate = psm::greedy_exact_psm(&cohort, &MatchMode::Covariate, None)?;
    let mut lines = vec![
        "slopes (1, 2, 3): subset sums collide since 1 + 2 = 3".to_string(),
        format!(
            "collision detector reports {} pair(s), e.g. {:?} vs {:?}",
            report.collisions.len(),
            report.collisions[0].lhs,
            report.collisions[0].rhs
        ),
        "patients x: cv=(1,1,0) and z: cv=(0,0,1) get identical scores".to_string(),
        format!(
            "score-tolerance matching pairs them ({} pair), covariate matching does not ({} pairs)",
            by_score.pairs().len(),
            by_covariate.pairs().len()
        ),
        "score equality is only trustworthy when the detector comes back empty".to_string(),
    ];
    if report.is_empty() {
        lines.push("unexpected: detector missed the construction".to_string());
    }
    Ok(Section {
        title: "coefficient collisions".to_string(),
        lines,
    })
}

pub fn build_report(kind: PitfallKind, cohort: &Cohort) -> Result<PitfallReport, CliError> {
    let mut sections = Vec::new();
    if matches!(kind, PitfallKind::SortOrder | PitfallKind::All) {
        sections.push(sort_order_section(cohort)?);
    }
    if matches!(kind, PitfallKind::Randomness | PitfallKind::All) {
        sections.push(randomness_section(cohort)?);
    }
    if matches!(kind, PitfallKind::Usage | PitfallKind::All) {
        sections.push(usage_section(cohort)?);
    }
    if matches!(kind, PitfallKind::Collision | PitfallKind::All) {
        sections.push(collision_section()?);
    }
    Ok(PitfallReport { sections })
}
