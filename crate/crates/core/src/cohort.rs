//! Patients, cohorts, parsing, and order manipulation.
//!
//! A cohort is an *ordered* two-group patient collection: the row order of
//! the input file is the sort order, and it is part of the value so that
//! sort-order (in)dependence of matching algorithms can be exercised.

use crate::fixed::{Fixed, FixedError, MAX_PRECISION};
use serde::Serialize;
use std::collections::{HashMap, HashSet};
use std::fmt;
use thiserror::Error;

/// Default number of decimal places for fixed-point covariate storage.
pub const DEFAULT_PRECISION: u8 = 6;

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("input is empty")]
    EmptyInput,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("unexpected column `{0}` (expected id, group, outcome, cv_1..cv_s)")]
    UnexpectedColumn(String),
    #[error("no covariate columns found (expected cv_1..cv_s)")]
    NoCovariates,
    #[error("row {row}: expected {expected} fields, found {found}")]
    FieldCount {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}: unknown group label `{value}` (expected A, B, 0 or 1)")]
    UnknownGroup { row: usize, value: String },
    #[error("row {row}: non-numeric cell `{value}` in column `{column}`")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: negative covariate `{value}` in column `{column}`")]
    NegativeCovariate {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: duplicate id `{id}`")]
    DuplicateId { row: usize, id: String },
    #[error("row {row}: column `{column}`: {source}")]
    BadCell {
        row: usize,
        column: String,
        source: FixedError,
    },
    #[error("precision {0} exceeds the supported maximum of {max}", max = MAX_PRECISION)]
    PrecisionTooLarge(u8),
    #[error("patient `{id}` has {found} covariates, cohort dimension is {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("patient `{id}` has a negative covariate")]
    NegativeCovariateValue { id: String },
    #[error("duplicate patient id `{0}`")]
    DuplicateIdValue(String),
    #[error("patient `{id}` outcome is not finite")]
    NonFiniteOutcome { id: String },
    #[error("permutation has length {found}, cohort has {expected} patients")]
    PermutationLength { expected: usize, found: usize },
    #[error("index {0} appears more than once (not a permutation)")]
    NotAPermutation(usize),
    #[error("covariate distance overflowed fixed-point range")]
    DistanceOverflow,
    #[error("sort column cv_{0} is out of range")]
    SortColumnOutOfRange(usize),
}

/// Therapy group label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Group {
    A,
    B,
}

impl Group {
    pub fn parse(text: &str) -> Option<Group> {
        match text {
            "A" | "0" => Some(Group::A),
            "B" | "1" => Some(Group::B),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Group::A => "A",
            Group::B => "B",
        }
    }

    pub fn other(&self) -> Group {
        match self {
            Group::A => Group::B,
            Group::B => Group::A,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One study subject: group label, exact covariate vector, observed outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Patient {
    id: String,
    group: Group,
    outcome: f64,
    covariates: Vec<Fixed>,
}

impl Patient {
    pub fn new(
        id: impl Into<String>,
        group: Group,
        outcome: f64,
        covariates: Vec<Fixed>,
    ) -> Result<Patient, CohortError> {
        let id = id.into();
        if !outcome.is_finite() {
            return Err(CohortError::NonFiniteOutcome { id });
        }
        if covariates.iter().any(Fixed::is_negative) {
            return Err(CohortError::NegativeCovariateValue { id });
        }
        Ok(Patient {
            id,
            group,
            outcome,
            covariates,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn group(&self) -> Group {
        self.group
    }

    pub fn outcome(&self) -> f64 {
        self.outcome
    }

    pub fn covariates(&self) -> &[Fixed] {
        &self.covariates
    }

    /// Same patient data except for the outcome; used by sensitivity checks.
    pub fn with_outcome(&self, outcome: f64) -> Result<Patient, CohortError> {
        Patient::new(
            self.id.clone(),
            self.group,
            outcome,
            self.covariates.clone(),
        )
    }
}

/// Manhattan distance between two covariate vectors, in exact arithmetic.
/// Zero if and only if the vectors are identical.
pub fn manhattan(p: &Patient, q: &Patient) -> Result<Fixed, CohortError> {
    if p.covariates.len() != q.covariates.len() {
        return Err(CohortError::DimensionMismatch {
            id: q.id.clone(),
            expected: p.covariates.len(),
            found: q.covariates.len(),
        });
    }
    let scale = p
        .covariates
        .iter()
        .chain(q.covariates.iter())
        .map(Fixed::scale)
        .max()
        .unwrap_or(0);
    let mut total: i128 = 0;
    for (a, b) in p.covariates.iter().zip(&q.covariates) {
        let diff = a.abs_diff(b).map_err(|_| CohortError::DistanceOverflow)?;
        let term = i128::from(diff.units()) * 10i128.pow(u32::from(scale - diff.scale()));
        total = total
            .checked_add(term)
            .ok_or(CohortError::DistanceOverflow)?;
    }
    Fixed::from_i128(total, scale).map_err(|_| CohortError::DistanceOverflow)
}

/// Column selector for [`Cohort::sorted_by`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortColumn {
    Id,
    Outcome,
    /// Zero-based covariate index (cv_1 is `Covariate(0)`).
    Covariate(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct SortKey {
    pub column: SortColumn,
    pub descending: bool,
}

/// Ordered two-group patient collection. The order *is* part of the value.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    patients: Vec<Patient>,
    dimension: usize,
    precision: u8,
}

impl Cohort {
    pub fn new(
        patients: Vec<Patient>,
        dimension: usize,
        precision: u8,
    ) -> Result<Cohort, CohortError> {
        if precision > MAX_PRECISION {
            return Err(CohortError::PrecisionTooLarge(precision));
        }
        let mut seen = HashSet::with_capacity(patients.len());
        for p in &patients {
            if p.covariates.len() != dimension {
                return Err(CohortError::DimensionMismatch {
                    id: p.id.clone(),
                    expected: dimension,
                    found: p.covariates.len(),
                });
            }
            if !seen.insert(p.id.as_str()) {
                return Err(CohortError::DuplicateIdValue(p.id.clone()));
            }
        }
        Ok(Cohort {
            patients,
            dimension,
            precision,
        })
    }

    pub fn patients(&self) -> &[Patient] {
        &self.patients
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn precision(&self) -> u8 {
        self.precision
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn count(&self, group: Group) -> usize {
        self.patients.iter().filter(|p| p.group == group).count()
    }

    /// Sort-order positions of one group's members.
    pub fn group_positions(&self, group: Group) -> Vec<usize> {
        self.patients
            .iter()
            .enumerate()
            .filter(|(_, p)| p.group == group)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn positions_by_id(&self) -> HashMap<&str, usize> {
        self.patients
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.as_str(), i))
            .collect()
    }

    pub fn patient_by_id(&self, id: &str) -> Option<&Patient> {
        self.patients.iter().find(|p| p.id == id)
    }

    /// True when every outcome is exactly 0 or 1.
    pub fn binary_outcomes(&self) -> bool {
        self.patients
            .iter()
            .all(|p| p.outcome == 0.0 || p.outcome == 1.0)
    }

    /// Reorders the cohort by an explicit permutation of `0..len`.
    pub fn permuted(&self, order: &[usize]) -> Result<Cohort, CohortError> {
        if order.len() != self.patients.len() {
            return Err(CohortError::PermutationLength {
                expected: self.patients.len(),
                found: order.len(),
            });
        }
        let mut seen = vec![false; order.len()];
        for &i in order {
            if i >= order.len() || seen[i] {
                return Err(CohortError::NotAPermutation(i));
            }
            seen[i] = true;
        }
        let patients = order.iter().map(|&i| self.patients[i].clone()).collect();
        Ok(Cohort {
            patients,
            dimension: self.dimension,
            precision: self.precision,
        })
    }

    /// Stable sort by one column; ties keep the current order.
    pub fn sorted_by(&self, key: &SortKey) -> Result<Cohort, CohortError> {
        if let SortColumn::Covariate(i) = key.column {
            if i >= self.dimension {
                return Err(CohortError::SortColumnOutOfRange(i + 1));
            }
        }
        let mut patients = self.patients.clone();
        patients.sort_by(|p, q| {
            let ord = match key.column {
                SortColumn::Id => p.id.cmp(&q.id),
                SortColumn::Outcome => p.outcome.total_cmp(&q.outcome),
                SortColumn::Covariate(i) => p.covariates[i].cmp(&q.covariates[i]),
            };
            if key.descending {
                ord.reverse()
            } else {
                ord
            }
        });
        Ok(Cohort {
            patients,
            dimension: self.dimension,
            precision: self.precision,
        })
    }

    /// Multiset equality of (group, covariates, outcome), ignoring order and
    /// ids: the "same dataset" predicate.
    pub fn same_dataset(&self, other: &Cohort) -> bool {
        if self.patients.len() != other.patients.len() || self.dimension != other.dimension {
            return false;
        }
        let key = |p: &Patient| (p.group, p.covariates.clone(), p.outcome.to_bits());
        let mut left: Vec<_> = self.patients.iter().map(key).collect();
        let mut right: Vec<_> = other.patients.iter().map(key).collect();
        left.sort();
        right.sort();
        left == right
    }

    /// Serializes back to the delimited input format. Covariates are
    /// rendered at the cohort precision, so parse ∘ serialize is the
    /// identity on patient values and order.
    pub fn to_delimited(&self) -> String {
        let mut out = String::from("id,group,outcome");
        for i in 1..=self.dimension {
            out.push_str(&format!(",cv_{i}"));
        }
        out.push('\n');
        for p in &self.patients {
            out.push_str(&format!("{},{},{}", p.id, p.group, p.outcome));
            for cv in &p.covariates {
                out.push(',');
                out.push_str(&cv.render(self.precision));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy)]
enum Role {
    Id,
    Group,
    Outcome,
    Covariate(usize),
}

/// Parses a delimited cohort file.
///
/// The header must name `id`, `group`, `outcome` and `cv_1..cv_s` in any
/// column order; the delimiter (comma or tab) is auto-detected from the
/// header line. Row order becomes the sort order.
pub fn parse_cohort(text: &str, precision: u8) -> Result<Cohort, CohortError> {
    if precision > MAX_PRECISION {
        return Err(CohortError::PrecisionTooLarge(precision));
    }
    let text = text.trim_start_matches('\u{feff}');
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or(CohortError::EmptyInput)?;
    let delimiter = if header.contains('\t') { '\t' } else { ',' };

    let names: Vec<String> = header
        .split(delimiter)
        .map(|c| c.trim().to_string())
        .collect();
    let mut roles: Vec<Option<Role>> = vec![None; names.len()];
    let mut covariate_indices = HashSet::new();
    let mut have = HashSet::new();
    for (col, name) in names.iter().enumerate() {
        let role = match name.as_str() {
            "id" => Role::Id,
            "group" => Role::Group,
            "outcome" => Role::Outcome,
            other => {
                let idx = other
                    .strip_prefix("cv_")
                    .and_then(|n| n.parse::<usize>().ok())
                    .filter(|&n| n >= 1)
                    .ok_or_else(|| CohortError::UnexpectedColumn(other.to_string()))?;
                if !covariate_indices.insert(idx) {
                    return Err(CohortError::DuplicateColumn(name.clone()));
                }
                Role::Covariate(idx - 1)
            }
        };
        if matches!(role, Role::Id | Role::Group | Role::Outcome) && !have.insert(name.clone()) {
            return Err(CohortError::DuplicateColumn(name.clone()));
        }
        roles[col] = Some(role);
    }
    for required in ["id", "group", "outcome"] {
        if !have.contains(required) {
            return Err(CohortError::MissingColumn(required.to_string()));
        }
    }
    let dimension = covariate_indices.len();
    if dimension == 0 {
        return Err(CohortError::NoCovariates);
    }
    for i in 1..=dimension {
        if !covariate_indices.contains(&i) {
            return Err(CohortError::MissingColumn(format!("cv_{i}")));
        }
    }

    let mut patients = Vec::new();
    let mut seen_ids: HashMap<String, usize> = HashMap::new();
    for (line_idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = line_idx + 1; // 1-based file line number
        let fields: Vec<&str> = line.split(delimiter).map(str::trim).collect();
        if fields.len() != names.len() {
            return Err(CohortError::FieldCount {
                row,
                expected: names.len(),
                found: fields.len(),
            });
        }
        let mut id = String::new();
        let mut group = Group::A;
        let mut outcome = 0.0f64;
        let mut covariates = vec![Fixed::ZERO; dimension];
        for (col, value) in fields.iter().enumerate() {
            match roles[col].expect("every column was assigned a role") {
                Role::Id => id = (*value).to_string(),
                Role::Group => {
                    group = Group::parse(value).ok_or_else(|| CohortError::UnknownGroup {
                        row,
                        value: (*value).to_string(),
                    })?;
                }
                Role::Outcome => {
                    outcome = value
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| CohortError::NonNumeric {
                            row,
                            column: "outcome".to_string(),
                            value: (*value).to_string(),
                        })?;
                }
                Role::Covariate(i) => {
                    let column = format!("cv_{}", i + 1);
                    let parsed = Fixed::parse(value, precision).map_err(|source| match source {
                        FixedError::Empty | FixedError::Invalid(_) => CohortError::NonNumeric {
                            row,
                            column: column.clone(),
                            value: (*value).to_string(),
                        },
                        other => CohortError::BadCell {
                            row,
                            column: column.clone(),
                            source: other,
                        },
                    })?;
                    if parsed.is_negative() {
                        return Err(CohortError::NegativeCovariate {
                            row,
                            column,
                            value: (*value).to_string(),
                        });
                    }
                    covariates[i] = parsed;
                }
            }
        }
        if let Some(_first) = seen_ids.insert(id.clone(), row) {
            return Err(CohortError::DuplicateId { row, id });
        }
        patients.push(
            Patient::new(id, group, outcome, covariates).map_err(|e| match e {
                CohortError::NonFiniteOutcome { .. } => CohortError::NonNumeric {
                    row,
                    column: "outcome".to_string(),
                    value: "non-finite".to_string(),
                },
                other => other,
            })?,
        );
    }
    Cohort::new(patients, dimension, precision)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fx(s: &str) -> Fixed {
        Fixed::parse(s, 6).unwrap()
    }

    fn patient(id: &str, group: Group, outcome: f64, cvs: &[&str]) -> Patient {
        Patient::new(id, group, outcome, cvs.iter().map(|c| fx(c)).collect()).unwrap()
    }

    #[test]
    fn parses_minimal_two_row_file() {
        let c = parse_cohort("id,group,outcome,cv_1\np1,A,0,1.5\np2,B,1,2\n", 2).unwrap();
        assert_eq!(c.count(Group::A), 1);
        assert_eq!(c.count(Group::B), 1);
        assert_eq!(c.dimension(), 1);
        assert_eq!(
            c.patients()[0].covariates()[0],
            Fixed::parse("1.5", 2).unwrap()
        );
    }

    #[test]
    fn detects_tab_delimiter() {
        let c = parse_cohort("id\tgroup\toutcome\tcv_1\np1\tA\t0\t1\np2\t1\t1\t1\n", 6).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.patients()[1].group(), Group::B);
    }

    #[test]
    fn handles_crlf_line_endings() {
        let c = parse_cohort("id,group,outcome,cv_1\r\np1,A,0,1\r\np2,B,1,2\r\n", 6).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.patients()[0].id(), "p1");
        assert_eq!(c.patients()[1].outcome(), 1.0);
    }

    #[test]
    fn canonicalizes_column_order_by_name() {
        let a = parse_cohort("id,group,outcome,cv_1,cv_2\np,A,0,1,2\n", 6).unwrap();
        let b = parse_cohort("cv_2,outcome,id,cv_1,group\n2,0,p,1,A\n", 6).unwrap();
        assert_eq!(a.patients()[0], b.patients()[0]);
    }

    #[test]
    fn rejects_negative_covariate_with_row() {
        let err = parse_cohort("id,group,outcome,cv_1\np1,A,0,-0.5\n", 6).unwrap_err();
        match err {
            CohortError::NegativeCovariate { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn rejects_duplicate_id_with_row() {
        let err = parse_cohort("id,group,outcome,cv_1\np1,A,0,1\np1,B,0,1\n", 6).unwrap_err();
        match err {
            CohortError::DuplicateId { row, id } => {
                assert_eq!(row, 3);
                assert_eq!(id, "p1");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn rejects_unknown_group_and_bad_cells() {
        assert!(matches!(
            parse_cohort("id,group,outcome,cv_1\np1,C,0,1\n", 6),
            Err(CohortError::UnknownGroup { row: 2, .. })
        ));
        assert!(matches!(
            parse_cohort("id,group,outcome,cv_1\np1,A,x,1\n", 6),
            Err(CohortError::NonNumeric { row: 2, .. })
        ));
        assert!(matches!(
            parse_cohort("id,group,outcome\np1,A,0\n", 6),
            Err(CohortError::NoCovariates)
        ));
        assert!(matches!(
            parse_cohort("id,outcome,cv_1\np1,0,1\n", 6),
            Err(CohortError::MissingColumn(c)) if c == "group"
        ));
        assert!(matches!(
            parse_cohort("id,group,outcome,cv_1,cv_3\np1,A,0,1,1\n", 6),
            Err(CohortError::MissingColumn(c)) if c == "cv_2"
        ));
    }

    #[test]
    fn serialize_then_parse_is_identity() {
        let text = "id,group,outcome,cv_1,cv_2\np1,A,0,1.50,0\np2,B,1,0.25,3\n";
        let c = parse_cohort(text, 2).unwrap();
        let round = parse_cohort(&c.to_delimited(), 2).unwrap();
        assert_eq!(c.patients(), round.patients());
    }

    #[test]
    fn identity_permutation_is_identity() {
        let c = parse_cohort("id,group,outcome,cv_1\np1,A,0,1\np2,B,1,2\n", 6).unwrap();
        let p = c.permuted(&[0, 1]).unwrap();
        assert_eq!(c, p);
    }

    #[test]
    fn reverse_twice_restores_order() {
        let c = parse_cohort("id,group,outcome,cv_1\np1,A,0,1\np2,B,1,2\np3,B,0,3\n", 6).unwrap();
        let rev: Vec<usize> = (0..c.len()).rev().collect();
        let back = c.permuted(&rev).unwrap().permuted(&rev).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn invalid_permutations_rejected() {
        let c = parse_cohort("id,group,outcome,cv_1\np1,A,0,1\np2,B,1,2\n", 6).unwrap();
        assert!(matches!(
            c.permuted(&[0]),
            Err(CohortError::PermutationLength { .. })
        ));
        assert!(matches!(
            c.permuted(&[0, 0]),
            Err(CohortError::NotAPermutation(0))
        ));
    }

    #[test]
    fn sort_by_covariate_descending() {
        // cv(x1) = (1,0,1), cv(x2) = (0,1,0): descending on cv_1 puts x1 first
        let c = parse_cohort(
            "id,group,outcome,cv_1,cv_2,cv_3\nx2,A,0,0,1,0\nx1,A,0,1,0,1\n",
            6,
        )
        .unwrap();
        let sorted = c
            .sorted_by(&SortKey {
                column: SortColumn::Covariate(0),
                descending: true,
            })
            .unwrap();
        assert_eq!(sorted.patients()[0].id(), "x1");
        assert_eq!(sorted.patients()[1].id(), "x2");
    }

    #[test]
    fn sort_by_id_and_outcome() {
        let c = parse_cohort("id,group,outcome,cv_1\nz,A,0.5,1\na,B,0.25,2\nm,B,1,3\n", 6).unwrap();
        let by_id = c
            .sorted_by(&SortKey {
                column: SortColumn::Id,
                descending: false,
            })
            .unwrap();
        let ids: Vec<&str> = by_id.patients().iter().map(Patient::id).collect();
        assert_eq!(ids, ["a", "m", "z"]);
        let by_outcome = c
            .sorted_by(&SortKey {
                column: SortColumn::Outcome,
                descending: true,
            })
            .unwrap();
        assert_eq!(by_outcome.patients()[0].id(), "m");
        assert!(matches!(
            c.sorted_by(&SortKey {
                column: SortColumn::Covariate(5),
                descending: false,
            }),
            Err(CohortError::SortColumnOutOfRange(6))
        ));
    }

    #[test]
    fn manhattan_examples() {
        let p = patient("p", Group::A, 0.0, &["1", "0", "1"]);
        let q = patient("q", Group::B, 0.0, &["0", "1", "0"]);
        assert_eq!(manhattan(&p, &p).unwrap(), Fixed::ZERO);
        assert_eq!(manhattan(&p, &q).unwrap(), Fixed::from_int(3));
        assert_eq!(manhattan(&p, &q).unwrap(), manhattan(&q, &p).unwrap());
    }

    #[test]
    fn manhattan_dimension_mismatch() {
        let p = patient("p", Group::A, 0.0, &["1"]);
        let q = patient("q", Group::B, 0.0, &["1", "2"]);
        assert!(manhattan(&p, &q).is_err());
    }

    #[test]
    fn same_dataset_ignores_order_and_ids() {
        let a = parse_cohort("id,group,outcome,cv_1\np1,A,0,1\np2,B,1,2\n", 6).unwrap();
        let b = parse_cohort("id,group,outcome,cv_1\nq2,B,1,2\nq1,A,0,1\n", 6).unwrap();
        assert!(a.same_dataset(&b));
        let c = parse_cohort("id,group,outcome,cv_1\np1,A,0,1\np2,B,0,2\n", 6).unwrap();
        assert!(!a.same_dataset(&c));
    }
}
