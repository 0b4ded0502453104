//! Brute-force ground truth for the bootstrap-convergence claim: the exact
//! expected death sums of uniformly drawn maximal exact matchings, computed
//! by enumerating every per-cluster subset selection.
//!
//! Because selections in different matched cluster pairs are independent
//! and expectations are additive, the global expectation is the sum of
//! per-cluster expectations; that turns a factorial enumeration into a
//! per-cluster binomial one. The enumeration never uses the closed form
//! `S * (Σ obs) / |C|`, so it can serve as an independent check of the
//! min-weighted result.

use crate::cohort::{Cohort, Group};
use crate::dbsem::{self, outcome_rational, Cluster};
use num::bigint::BigInt;
use num::{BigRational, Zero};
use serde::Serialize;
use thiserror::Error;

/// Default per-cluster size guard; C(12, 6) = 924 subsets at worst.
pub const DEFAULT_GUARD: usize = 12;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("cluster of size {size} exceeds the enumeration guard {guard}")]
    GuardExceeded { size: usize, guard: usize },
    #[error("clusters have different covariate vectors; they are not matched")]
    NotMatched,
}

/// Exact expected death sums per side over all uniform selections.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactExpectation {
    pub e_a: BigRational,
    pub e_b: BigRational,
    /// Number of per-cluster subset selections enumerated.
    pub enumerated_selections: u64,
    /// False when some matched cluster exceeded the size guard; the e
    /// values are meaningless in that case.
    pub feasible: bool,
}

#[derive(Serialize)]
struct ExpectationJson {
    e_a: String,
    e_b: String,
    feasible: bool,
}

impl ExactExpectation {
    pub fn to_json(&self) -> String {
        let ratio = |r: &BigRational| format!("{}/{}", r.numer(), r.denom());
        serde_json::to_string_pretty(&ExpectationJson {
            e_a: ratio(&self.e_a),
            e_b: ratio(&self.e_b),
            feasible: self.feasible,
        })
        .expect("expectation serializes")
    }
}

/// Expectation of one matched cluster pair, per side.
#[derive(Debug, Clone, PartialEq)]
pub struct PairExpectation {
    pub e_a: BigRational,
    pub e_b: BigRational,
    pub selections: u64,
}

/// Uniform average of subset outcome sums over all `C(n, s)` subsets,
/// by explicit enumeration.
fn side_expectation(outcomes: &[BigRational], s: usize) -> (BigRational, u64) {
    let n = outcomes.len();
    debug_assert!(s <= n);
    let mut total = BigRational::zero();
    let mut count: u64 = 0;
    // iterative lexicographic subset walk
    let mut idx: Vec<usize> = (0..s).collect();
    if s == 0 {
        return (BigRational::zero(), 1);
    }
    loop {
        let sum = idx
            .iter()
            .fold(BigRational::zero(), |acc, &i| acc + &outcomes[i]);
        total += sum;
        count += 1;
        // advance to the next combination
        let mut pos = s;
        while pos > 0 {
            pos -= 1;
            if idx[pos] != pos + n - s {
                idx[pos] += 1;
                for later in (pos + 1)..s {
                    idx[later] = idx[later - 1] + 1;
                }
                break;
            }
            if pos == 0 {
                let mean = total / BigRational::from(BigInt::from(count));
                return (mean, count);
            }
        }
    }
}

fn cluster_outcomes(cluster: &Cluster, cohort: &Cohort) -> Vec<BigRational> {
    let positions = cohort.positions_by_id();
    cluster
        .member_ids()
        .iter()
        .map(|id| {
            let &pos = positions.get(id.as_str()).expect("member id in cohort");
            outcome_rational(cohort.patients()[pos].outcome())
        })
        .collect()
}

/// Enumerates all S-subsets of each side of a matched cluster pair and
/// averages the outcome sums uniformly.
pub fn per_cluster_expectation(
    a_cluster: &Cluster,
    b_cluster: &Cluster,
    cohort: &Cohort,
    guard: usize,
) -> Result<PairExpectation, OracleError> {
    if a_cluster.assigned_cv() != b_cluster.assigned_cv() {
        return Err(OracleError::NotMatched);
    }
    for size in [a_cluster.size(), b_cluster.size()] {
        if size > guard {
            return Err(OracleError::GuardExceeded { size, guard });
        }
    }
    let s = a_cluster.size().min(b_cluster.size());
    let (e_a, count_a) = side_expectation(&cluster_outcomes(a_cluster, cohort), s);
    let (e_b, count_b) = side_expectation(&cluster_outcomes(b_cluster, cohort), s);
    Ok(PairExpectation {
        e_a,
        e_b,
        selections: count_a + count_b,
    })
}

/// Exact expectation for the whole cohort: per-cluster expectations summed
/// by linearity. Infeasible (guard exceeded) cohorts return zeroed values
/// with `feasible = false`.
pub fn enumerate_expectation(cohort: &Cohort, guard: usize) -> ExactExpectation {
    let a = dbsem::cluster(cohort, Group::A);
    let b = dbsem::cluster(cohort, Group::B);
    let matching = dbsem::match_clusters(a, b);
    let mut e_a = BigRational::zero();
    let mut e_b = BigRational::zero();
    let mut selections: u64 = 0;
    for m in matching.matched() {
        match per_cluster_expectation(&m.a, &m.b, cohort, guard) {
            Ok(pair) => {
                e_a += pair.e_a;
                e_b += pair.e_b;
                selections += pair.selections;
            }
            Err(_) => {
                return ExactExpectation {
                    e_a: BigRational::zero(),
                    e_b: BigRational::zero(),
                    enumerated_selections: 0,
                    feasible: false,
                };
            }
        }
    }
    ExactExpectation {
        e_a,
        e_b,
        enumerated_selections: selections,
        feasible: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::parse_cohort;
    use crate::dbsem::{rational_from_int, rational_of};

    fn canonical_2v3() -> Cohort {
        parse_cohort(
            "id,group,outcome,cv_1\n\
             a1,A,1,1\na2,A,0,1\n\
             b1,B,1,1\nb2,B,0,1\nb3,B,0,1\n",
            6,
        )
        .unwrap()
    }

    #[test]
    fn canonical_pair_expectation() {
        let c = canonical_2v3();
        let a = dbsem::cluster(&c, Group::A);
        let b = dbsem::cluster(&c, Group::B);
        let pair = per_cluster_expectation(&a[0], &b[0], &c, DEFAULT_GUARD).unwrap();
        // subsets of B: {1,0},{1,0},{0,0} -> sums 1,1,0 -> mean 2/3
        assert_eq!(pair.e_a, rational_from_int(1));
        assert_eq!(pair.e_b, rational_of(2, 3));
        assert_eq!(pair.selections, 1 + 3, "C(2,2) + C(3,2)");
    }

    #[test]
    fn equal_sizes_give_raw_sums() {
        let c = parse_cohort(
            "id,group,outcome,cv_1\na1,A,1,1\na2,A,1,1\nb1,B,0,1\nb2,B,1,1\n",
            6,
        )
        .unwrap();
        let e = enumerate_expectation(&c, DEFAULT_GUARD);
        assert_eq!(e.e_a, rational_from_int(2));
        assert_eq!(e.e_b, rational_from_int(1));
    }

    #[test]
    fn all_zero_outcomes_expect_zero() {
        let c = parse_cohort("id,group,outcome,cv_1\na1,A,0,1\nb1,B,0,1\nb2,B,0,1\n", 6).unwrap();
        let e = enumerate_expectation(&c, DEFAULT_GUARD);
        assert!(e.e_a.is_zero() && e.e_b.is_zero());
        assert!(e.feasible);
    }

    #[test]
    fn expectations_add_over_independent_clusters() {
        let one = parse_cohort("id,group,outcome,cv_1\na1,A,1,1\nb1,B,1,1\nb2,B,0,1\n", 6).unwrap();
        let two = parse_cohort("id,group,outcome,cv_1\na1,A,1,2\na2,A,0,2\nb1,B,1,2\n", 6).unwrap();
        let both = parse_cohort(
            "id,group,outcome,cv_1\n\
             a1,A,1,1\nb1,B,1,1\nb2,B,0,1\n\
             a2,A,1,2\na3,A,0,2\nb3,B,1,2\n",
            6,
        )
        .unwrap();
        let e1 = enumerate_expectation(&one, DEFAULT_GUARD);
        let e2 = enumerate_expectation(&two, DEFAULT_GUARD);
        let e = enumerate_expectation(&both, DEFAULT_GUARD);
        assert_eq!(e.e_a, e1.e_a + e2.e_a);
        assert_eq!(e.e_b, e1.e_b + e2.e_b);
    }

    #[test]
    fn singleton_clusters_expect_observed_counts() {
        let c = parse_cohort(
            "id,group,outcome,cv_1\na1,A,1,1\nb1,B,1,1\na2,A,0,2\nb2,B,1,2\n",
            6,
        )
        .unwrap();
        let e = enumerate_expectation(&c, DEFAULT_GUARD);
        assert_eq!(e.e_a, rational_from_int(1));
        assert_eq!(e.e_b, rational_from_int(2));
    }

    #[test]
    fn guard_is_enforced() {
        let mut text = String::from("id,group,outcome,cv_1\n");
        for i in 0..5 {
            text.push_str(&format!("a{i},A,0,1\n"));
        }
        text.push_str("b0,B,0,1\n");
        let c = parse_cohort(&text, 6).unwrap();
        let a = dbsem::cluster(&c, Group::A);
        let b = dbsem::cluster(&c, Group::B);
        assert!(matches!(
            per_cluster_expectation(&a[0], &b[0], &c, 4),
            Err(OracleError::GuardExceeded { size: 5, guard: 4 })
        ));
        let e = enumerate_expectation(&c, 4);
        assert!(!e.feasible);
    }

    #[test]
    fn closed_form_cross_check() {
        // the enumeration must agree with S * (Σ obs) / |C| per side
        let c = parse_cohort(
            "id,group,outcome,cv_1\n\
             a1,A,1,1\na2,A,1,1\na3,A,0,1\na4,A,0,1\n\
             b1,B,1,1\nb2,B,0,1\n",
            6,
        )
        .unwrap();
        let a = dbsem::cluster(&c, Group::A);
        let b = dbsem::cluster(&c, Group::B);
        let pair = per_cluster_expectation(&a[0], &b[0], &c, DEFAULT_GUARD).unwrap();
        let s = 2usize;
        let closed_a = rational_of(s as i64, a[0].size() as i64) * a[0].outcome_sum().clone();
        let closed_b = rational_of(s as i64, b[0].size() as i64) * b[0].outcome_sum().clone();
        assert_eq!(pair.e_a, closed_a);
        assert_eq!(pair.e_b, closed_b);
    }

    #[test]
    fn json_shape() {
        let c = canonical_2v3();
        let e = enumerate_expectation(&c, DEFAULT_GUARD);
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["e_a"], "1/1");
        assert_eq!(v["e_b"], "2/3");
        assert_eq!(v["feasible"], true);
    }
}
