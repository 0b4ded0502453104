//! Deterministic synthetic cohort construction from an explicit cluster
//! layout, used for demonstrations and test fixtures.

use crate::cohort::{Cohort, Group, Patient};
use crate::fixed::Fixed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("spec has no clusters")]
    EmptySpec,
    #[error("cluster {index}: both sides are empty")]
    EmptyCluster { index: usize },
    #[error("cluster {index}: deaths exceed size on side {side}")]
    TooManyDeaths { index: usize, side: Group },
    #[error("cluster {index}: covariate vector has {found} entries, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("cluster {index}: duplicate covariate vector")]
    DuplicateCv { index: usize },
    #[error("cluster {index}: bad covariate value: {reason}")]
    BadCovariate { index: usize, reason: String },
    #[error("invalid spec document: {0}")]
    BadDocument(String),
    #[error("internal cohort construction failed: {0}")]
    Cohort(#[from] crate::cohort::CohortError),
}

/// A covariate value in a spec file: either an exact decimal string or a
/// JSON number (rounded to the working precision).
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CvValue {
    Text(String),
    Number(f64),
}

#[derive(Debug, Clone, Deserialize)]
pub struct ClusterSpec {
    pub cv: Vec<CvValue>,
    #[serde(default)]
    pub size_a: usize,
    #[serde(default)]
    pub size_b: usize,
    #[serde(default)]
    pub deaths_a: usize,
    #[serde(default)]
    pub deaths_b: usize,
}

/// Layout of a synthetic cohort: exact clusters plus optional unmatched
/// noise patients with covariate vectors distinct from everything else.
#[derive(Debug, Clone, Deserialize)]
pub struct SynthSpec {
    #[serde(default = "default_precision")]
    pub precision: u8,
    pub clusters: Vec<ClusterSpec>,
    #[serde(default)]
    pub noise_a: usize,
    #[serde(default)]
    pub noise_b: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_precision() -> u8 {
    crate::cohort::DEFAULT_PRECISION
}

impl SynthSpec {
    pub fn from_json(text: &str) -> Result<SynthSpec, SynthError> {
        serde_json::from_str(text).map_err(|e| SynthError::BadDocument(e.to_string()))
    }
}

fn parse_cv(value: &CvValue, precision: u8, index: usize) -> Result<Fixed, SynthError> {
    let bad = |reason: String| SynthError::BadCovariate { index, reason };
    let fixed = match value {
        CvValue::Text(text) => Fixed::parse(text, precision).map_err(|e| bad(e.to_string()))?,
        CvValue::Number(x) => {
            if !x.is_finite() {
                return Err(bad("non-finite number".to_string()));
            }
            let scaled = (x * 10f64.powi(i32::from(precision))).round();
            if scaled.abs() >= i64::MAX as f64 {
                return Err(bad(format!("{x} out of range")));
            }
            Fixed::from_units(scaled as i64, precision).map_err(|e| bad(e.to_string()))?
        }
    };
    if fixed.is_negative() {
        return Err(bad("covariates must be non-negative".to_string()));
    }
    Ok(fixed)
}

/// Builds the cohort described by the spec. Rows are emitted cluster by
/// cluster (A members, then B members), followed by noise patients; the
/// construction is a pure function of the spec, seed included.
pub fn synth_cohort(spec: &SynthSpec) -> Result<Cohort, SynthError> {
    if spec.clusters.is_empty() {
        return Err(SynthError::EmptySpec);
    }
    let dimension = spec.clusters[0].cv.len();
    let mut used_cvs: HashSet<Vec<Fixed>> = HashSet::new();
    let mut patients = Vec::new();
    for (index, cluster) in spec.clusters.iter().enumerate() {
        if cluster.cv.len() != dimension {
            return Err(SynthError::DimensionMismatch {
                index,
                expected: dimension,
                found: cluster.cv.len(),
            });
        }
        if cluster.size_a == 0 && cluster.size_b == 0 {
            return Err(SynthError::EmptyCluster { index });
        }
        for (side, size, deaths) in [
            (Group::A, cluster.size_a, cluster.deaths_a),
            (Group::B, cluster.size_b, cluster.deaths_b),
        ] {
            if deaths > size {
                return Err(SynthError::TooManyDeaths { index, side });
            }
        }
        let cv: Vec<Fixed> = cluster
            .cv
            .iter()
            .map(|v| parse_cv(v, spec.precision, index))
            .collect::<Result<_, _>>()?;
        if !used_cvs.insert(cv.clone()) {
            return Err(SynthError::DuplicateCv { index });
        }
        for (group, size, deaths) in [
            (Group::A, cluster.size_a, cluster.deaths_a),
            (Group::B, cluster.size_b, cluster.deaths_b),
        ] {
            for member in 0..size {
                let id = format!(
                    "c{}_{}{}",
                    index + 1,
                    group.label().to_lowercase(),
                    member + 1
                );
                let outcome = if member < deaths { 1.0 } else { 0.0 };
                patients.push(Patient::new(id, group, outcome, cv.clone())?);
            }
        }
    }

    // noise patients: singleton covariate vectors distinct from everything
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut fresh_cv = |used: &mut HashSet<Vec<Fixed>>| -> Vec<Fixed> {
        loop {
            let cv: Vec<Fixed> = (0..dimension)
                .map(|_| Fixed::from_int(rng.gen_range(0..100_000)))
                .collect();
            if used.insert(cv.clone()) {
                return cv;
            }
        }
    };
    for (group, count) in [(Group::A, spec.noise_a), (Group::B, spec.noise_b)] {
        for i in 0..count {
            let id = format!("n{}{}", group.label().to_lowercase(), i + 1);
            let cv = fresh_cv(&mut used_cvs);
            patients.push(Patient::new(id, group, 0.0, cv)?);
        }
    }
    Ok(Cohort::new(patients, dimension, spec.precision)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dbsem;

    fn spec_json(text: &str) -> SynthSpec {
        SynthSpec::from_json(text).unwrap()
    }

    #[test]
    fn canonical_2v3_realized() {
        let spec = spec_json(
            r#"{"clusters":[{"cv":["1","2.5"],"size_a":2,"size_b":3,"deaths_a":1,"deaths_b":1}],"seed":1}"#,
        );
        let c = synth_cohort(&spec).unwrap();
        assert_eq!(c.len(), 5);
        let out = dbsem::dbsem(&c);
        assert_eq!(out.result.r_a, dbsem::rational_from_int(1));
        assert_eq!(out.result.r_b, dbsem::rational_of(2, 3));
    }

    #[test]
    fn empty_spec_rejected() {
        let spec = spec_json(r#"{"clusters":[],"seed":1}"#);
        assert!(matches!(synth_cohort(&spec), Err(SynthError::EmptySpec)));
    }

    #[test]
    fn deaths_cannot_exceed_size() {
        let spec =
            spec_json(r#"{"clusters":[{"cv":["1"],"size_a":1,"size_b":1,"deaths_a":2}],"seed":1}"#);
        assert!(matches!(
            synth_cohort(&spec),
            Err(SynthError::TooManyDeaths { .. })
        ));
    }

    #[test]
    fn duplicate_cluster_cv_rejected() {
        let spec = spec_json(
            r#"{"clusters":[
                {"cv":["1"],"size_a":1,"size_b":1},
                {"cv":["1.0"],"size_a":1,"size_b":1}
            ],"seed":1}"#,
        );
        assert!(matches!(
            synth_cohort(&spec),
            Err(SynthError::DuplicateCv { index: 1 })
        ));
    }

    #[test]
    fn numbers_and_strings_both_accepted() {
        let spec =
            spec_json(r#"{"clusters":[{"cv":[1.5,"2.25"],"size_a":1,"size_b":1}],"seed":1}"#);
        let c = synth_cohort(&spec).unwrap();
        assert_eq!(
            c.patients()[0].covariates()[0],
            Fixed::parse("1.5", 6).unwrap()
        );
    }

    #[test]
    fn same_spec_same_bytes() {
        let text = r#"{"clusters":[{"cv":["1"],"size_a":2,"size_b":1,"deaths_a":1}],
                       "noise_a":5,"noise_b":3,"seed":99}"#;
        let a = synth_cohort(&spec_json(text)).unwrap().to_delimited();
        let b = synth_cohort(&spec_json(text)).unwrap().to_delimited();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_patients_are_unmatched_singletons() {
        let spec = spec_json(
            r#"{"clusters":[{"cv":["1"],"size_a":1,"size_b":1}],
                "noise_a":10,"noise_b":10,"seed":4}"#,
        );
        let c = synth_cohort(&spec).unwrap();
        let out = dbsem::dbsem(&c);
        assert_eq!(out.matching.matched().len(), 1);
        assert_eq!(out.matching.unmatched_a().len(), 10);
        assert_eq!(out.matching.unmatched_b().len(), 10);
    }
}
