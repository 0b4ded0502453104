//! Deterministic clustering of equal-covariate patients, unique cluster
//! matching, min-weighting, and the weighted per-group results.
//!
//! Equal-covariate patients of one group form a cluster; clusters from the
//! two groups are matched exactly when their assigned covariate vectors
//! coincide, and each matched cluster contributes its outcome sum scaled by
//! `S / |C|` with `S` the smaller of the paired sizes. Everything downstream
//! of parsing is exact rational arithmetic, so repeated runs and reordered
//! inputs cannot produce different results.

use crate::cohort::{manhattan, Cohort, Group};
use crate::fixed::Fixed;
use num::bigint::BigInt;
use num::{BigRational, Signed, ToPrimitive, Zero};
use serde::Serialize;
use std::collections::HashMap;

/// Maximal set of one group's patients sharing one exact covariate vector.
/// Member ids are kept sorted so the value is independent of input order.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    group: Group,
    assigned_cv: Vec<Fixed>,
    member_ids: Vec<String>,
    outcome_sum: BigRational,
}

impl Cluster {
    pub fn group(&self) -> Group {
        self.group
    }

    pub fn assigned_cv(&self) -> &[Fixed] {
        &self.assigned_cv
    }

    pub fn member_ids(&self) -> &[String] {
        &self.member_ids
    }

    pub fn size(&self) -> usize {
        self.member_ids.len()
    }

    pub fn outcome_sum(&self) -> &BigRational {
        &self.outcome_sum
    }
}

/// Exact rational image of an f64 outcome; outcomes are finite by cohort
/// construction.
pub fn outcome_rational(outcome: f64) -> BigRational {
    BigRational::from_float(outcome).expect("outcomes are finite")
}

fn build_cluster(cohort: &Cohort, group: Group, positions: &[usize]) -> Cluster {
    let mut member_ids: Vec<String> = positions
        .iter()
        .map(|&i| cohort.patients()[i].id().to_string())
        .collect();
    member_ids.sort();
    let outcome_sum = positions
        .iter()
        .map(|&i| outcome_rational(cohort.patients()[i].outcome()))
        .fold(BigRational::zero(), |acc, v| acc + v);
    Cluster {
        group,
        assigned_cv: cohort.patients()[positions[0]].covariates().to_vec(),
        member_ids,
        outcome_sum,
    }
}

fn canonical_sort(clusters: &mut [Cluster]) {
    clusters.sort_by(|a, b| a.assigned_cv.cmp(&b.assigned_cv));
}

/// Partitions one group into maximal equal-covariate clusters using a hash
/// index on the covariate vector. Output is ordered lexicographically by
/// assigned covariate vector, so it does not depend on the input sort order.
pub fn cluster(cohort: &Cohort, group: Group) -> Vec<Cluster> {
    let mut buckets: HashMap<&[Fixed], Vec<usize>> = HashMap::new();
    for (i, p) in cohort.patients().iter().enumerate() {
        if p.group() == group {
            buckets.entry(p.covariates()).or_default().push(i);
        }
    }
    let mut clusters: Vec<Cluster> = buckets
        .values()
        .map(|positions| build_cluster(cohort, group, positions))
        .collect();
    canonical_sort(&mut clusters);
    clusters
}

/// The literal quadratic clustering loop, kept as the reference of record:
/// walk the group in sort order, open a cluster at each unclustered patient,
/// then sweep the remainder for zero-distance members. Canonical ordering is
/// applied at the end, exactly as for the indexed path.
pub fn cluster_quadratic(cohort: &Cohort, group: Group) -> Vec<Cluster> {
    let members = cohort.group_positions(group);
    let mut clustered = vec![false; members.len()];
    let mut clusters = Vec::new();
    for i in 0..members.len() {
        if clustered[i] {
            continue;
        }
        clustered[i] = true;
        let mut positions = vec![members[i]];
        let anchor = &cohort.patients()[members[i]];
        for j in (i + 1)..members.len() {
            if clustered[j] {
                continue;
            }
            let candidate = &cohort.patients()[members[j]];
            let distance =
                manhattan(anchor, candidate).expect("cohort invariant: equal dimensions");
            if distance.is_zero() {
                clustered[j] = true;
                positions.push(members[j]);
            }
        }
        clusters.push(build_cluster(cohort, group, &positions));
    }
    canonical_sort(&mut clusters);
    clusters
}

/// Which clustering implementation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterAlgo {
    Indexed,
    Quadratic,
}

pub fn cluster_with(cohort: &Cohort, group: Group, algo: ClusterAlgo) -> Vec<Cluster> {
    match algo {
        ClusterAlgo::Indexed => cluster(cohort, group),
        ClusterAlgo::Quadratic => cluster_quadratic(cohort, group),
    }
}

/// One matched cluster pair with its pair count and min-weights.
#[derive(Debug, Clone)]
pub struct MatchedClusters {
    pub a: Cluster,
    pub b: Cluster,
    /// S = min(|C_A|, |C_B|): the number of 1:1 pairs this match supports.
    pub s: usize,
    pub w_a: BigRational,
    pub w_b: BigRational,
}

/// The unique matching between two cluster partitions.
#[derive(Debug, Clone)]
pub struct ClusterMatching {
    matched: Vec<MatchedClusters>,
    unmatched_a: Vec<Cluster>,
    unmatched_b: Vec<Cluster>,
    k: usize,
    l: usize,
}

impl ClusterMatching {
    pub fn matched(&self) -> &[MatchedClusters] {
        &self.matched
    }

    pub fn unmatched_a(&self) -> &[Cluster] {
        &self.unmatched_a
    }

    pub fn unmatched_b(&self) -> &[Cluster] {
        &self.unmatched_b
    }

    /// Cluster count of group A.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Cluster count of group B.
    pub fn l(&self) -> usize {
        self.l
    }

    /// Total number of supported 1:1 pairs, Σ S.
    pub fn total_pairs(&self) -> usize {
        self.matched.iter().map(|m| m.s).sum()
    }
}

fn ratio(num: usize, den: usize) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Pairs clusters with identical assigned covariate vectors. The pairing is
/// unique because covariate vectors are unique within each partition.
pub fn match_clusters(a_clusters: Vec<Cluster>, b_clusters: Vec<Cluster>) -> ClusterMatching {
    let k = a_clusters.len();
    let l = b_clusters.len();
    let mut b_by_cv: HashMap<Vec<Fixed>, usize> = HashMap::with_capacity(l);
    for (j, c) in b_clusters.iter().enumerate() {
        b_by_cv.insert(c.assigned_cv.clone(), j);
    }
    let mut b_used = vec![false; l];
    let mut matched = Vec::new();
    let mut unmatched_a = Vec::new();
    for a in a_clusters {
        match b_by_cv.get(&a.assigned_cv) {
            Some(&j) => {
                b_used[j] = true;
                let b = b_clusters[j].clone();
                let s = a.size().min(b.size());
                let w_a = ratio(s, a.size());
                let w_b = ratio(s, b.size());
                matched.push(MatchedClusters { a, b, s, w_a, w_b });
            }
            None => unmatched_a.push(a),
        }
    }
    let unmatched_b = b_clusters
        .into_iter()
        .enumerate()
        .filter(|(j, _)| !b_used[*j])
        .map(|(_, c)| c)
        .collect();
    ClusterMatching {
        matched,
        unmatched_a,
        unmatched_b,
        k,
        l,
    }
}

/// Min-weighted totals per group, exact.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedResult {
    pub r_a: BigRational,
    pub r_b: BigRational,
    pub matched_pairs_total: usize,
    pub rate_a: BigRational,
    pub rate_b: BigRational,
}

/// Applies the min-weighting scheme: each matched cluster contributes its
/// outcome sum scaled by `S / |C|`; unmatched clusters carry weight zero.
pub fn min_weight(cm: &ClusterMatching) -> WeightedResult {
    let mut r_a = BigRational::zero();
    let mut r_b = BigRational::zero();
    for m in &cm.matched {
        r_a += &m.w_a * &m.a.outcome_sum;
        r_b += &m.w_b * &m.b.outcome_sum;
    }
    let total = cm.total_pairs();
    let (rate_a, rate_b) = if total == 0 {
        (BigRational::zero(), BigRational::zero())
    } else {
        let denom = BigRational::from(BigInt::from(total));
        (&r_a / &denom, &r_b / &denom)
    };
    WeightedResult {
        r_a,
        r_b,
        matched_pairs_total: total,
        rate_a,
        rate_b,
    }
}

#[derive(Debug, Clone)]
pub struct DbsemOutcome {
    pub matching: ClusterMatching,
    pub result: WeightedResult,
}

/// Full pipeline: cluster both groups, match clusters, min-weight.
/// Deterministic and sort-order independent.
pub fn dbsem(cohort: &Cohort) -> DbsemOutcome {
    dbsem_with(cohort, ClusterAlgo::Indexed)
}

pub fn dbsem_with(cohort: &Cohort, algo: ClusterAlgo) -> DbsemOutcome {
    let a = cluster_with(cohort, Group::A, algo);
    let b = cluster_with(cohort, Group::B, algo);
    let matching = match_clusters(a, b);
    let result = min_weight(&matching);
    DbsemOutcome { matching, result }
}

/// Data-usage fractions per group, in both denominators the literature
/// quotes: members of matched clusters over group size, and supported 1:1
/// pairs over group size.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageReport {
    pub member_fraction_a: BigRational,
    pub member_fraction_b: BigRational,
    pub pairs_fraction_a: BigRational,
    pub pairs_fraction_b: BigRational,
}

pub fn usage_report(cm: &ClusterMatching, cohort: &Cohort) -> UsageReport {
    let a_total = cohort.count(Group::A);
    let b_total = cohort.count(Group::B);
    let a_members: usize = cm.matched.iter().map(|m| m.a.size()).sum();
    let b_members: usize = cm.matched.iter().map(|m| m.b.size()).sum();
    let pairs = cm.total_pairs();
    let frac = |num: usize, den: usize| {
        if den == 0 {
            BigRational::zero()
        } else {
            ratio(num, den)
        }
    };
    UsageReport {
        member_fraction_a: frac(a_members, a_total),
        member_fraction_b: frac(b_members, b_total),
        pairs_fraction_a: frac(pairs, a_total),
        pairs_fraction_b: frac(pairs, b_total),
    }
}

// --- report serialization ---------------------------------------------------

/// A rational rendered both ways: exact `p/q` and a fixed 6-decimal string.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RationalJson {
    pub exact: String,
    pub decimal: String,
}

/// Renders a rational to 6 decimal places, rounding half away from zero.
pub fn rational_decimal(r: &BigRational) -> String {
    let scale = BigInt::from(1_000_000u32);
    let scaled = r * BigRational::from(scale.clone());
    let doubled = scaled.numer() * BigInt::from(2) + scaled.denom() * scaled.numer().signum();
    let rounded = doubled / (scaled.denom() * BigInt::from(2));
    let sign = if rounded.is_negative() { "-" } else { "" };
    let abs = rounded.abs();
    let int = &abs / &scale;
    let frac = &abs % &scale;
    format!("{sign}{int}.{frac:06}")
}

pub fn rational_json(r: &BigRational) -> RationalJson {
    RationalJson {
        exact: format!("{}/{}", r.numer(), r.denom()),
        decimal: rational_decimal(r),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterJson {
    pub group: Group,
    pub cv: Vec<Fixed>,
    pub size: usize,
    pub members: Vec<String>,
    pub outcome_sum: RationalJson,
    pub matched: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchJson {
    pub cv: Vec<Fixed>,
    pub size_a: usize,
    pub size_b: usize,
    #[serde(rename = "S")]
    pub s: usize,
    pub w_a: RationalJson,
    pub w_b: RationalJson,
    pub deaths_a: RationalJson,
    pub deaths_b: RationalJson,
}

#[derive(Debug, Clone, Serialize)]
pub struct RatesJson {
    pub rate_a: RationalJson,
    pub rate_b: RationalJson,
}

#[derive(Debug, Clone, Serialize)]
pub struct UsageJson {
    pub member_fraction_a: RationalJson,
    pub member_fraction_b: RationalJson,
    pub pairs_fraction_a: RationalJson,
    pub pairs_fraction_b: RationalJson,
}

/// The serializable report for one full run: clusters, matches with weights
/// and per-cluster outcome sums, the weighted totals, rates and usage.
#[derive(Debug, Clone, Serialize)]
pub struct DbsemReport {
    pub clusters: Vec<ClusterJson>,
    pub matches: Vec<MatchJson>,
    pub r_a: RationalJson,
    pub r_b: RationalJson,
    pub matched_pairs_total: usize,
    pub rates: RatesJson,
    pub usage: UsageJson,
}

impl DbsemReport {
    pub fn build(cohort: &Cohort) -> DbsemReport {
        DbsemReport::build_with(cohort, ClusterAlgo::Indexed)
    }

    pub fn build_with(cohort: &Cohort, algo: ClusterAlgo) -> DbsemReport {
        let outcome = dbsem_with(cohort, algo);
        let usage = usage_report(&outcome.matching, cohort);
        DbsemReport::from_parts(&outcome, &usage)
    }

    pub fn from_parts(outcome: &DbsemOutcome, usage: &UsageReport) -> DbsemReport {
        let cm = &outcome.matching;
        let cluster_json = |c: &Cluster, matched: bool| ClusterJson {
            group: c.group(),
            cv: c.assigned_cv().to_vec(),
            size: c.size(),
            members: c.member_ids().to_vec(),
            outcome_sum: rational_json(c.outcome_sum()),
            matched,
        };
        let mut clusters = Vec::new();
        for group in [Group::A, Group::B] {
            let mut group_clusters: Vec<ClusterJson> = cm
                .matched()
                .iter()
                .map(|m| if group == Group::A { &m.a } else { &m.b })
                .map(|c| cluster_json(c, true))
                .chain(
                    (if group == Group::A {
                        cm.unmatched_a()
                    } else {
                        cm.unmatched_b()
                    })
                    .iter()
                    .map(|c| cluster_json(c, false)),
                )
                .collect();
            group_clusters.sort_by(|a, b| a.cv.cmp(&b.cv));
            clusters.extend(group_clusters);
        }
        let matches = cm
            .matched()
            .iter()
            .map(|m| MatchJson {
                cv: m.a.assigned_cv().to_vec(),
                size_a: m.a.size(),
                size_b: m.b.size(),
                s: m.s,
                w_a: rational_json(&m.w_a),
                w_b: rational_json(&m.w_b),
                deaths_a: rational_json(m.a.outcome_sum()),
                deaths_b: rational_json(m.b.outcome_sum()),
            })
            .collect();
        DbsemReport {
            clusters,
            matches,
            r_a: rational_json(&outcome.result.r_a),
            r_b: rational_json(&outcome.result.r_b),
            matched_pairs_total: outcome.result.matched_pairs_total,
            rates: RatesJson {
                rate_a: rational_json(&outcome.result.rate_a),
                rate_b: rational_json(&outcome.result.rate_b),
            },
            usage: UsageJson {
                member_fraction_a: rational_json(&usage.member_fraction_a),
                member_fraction_b: rational_json(&usage.member_fraction_b),
                pairs_fraction_a: rational_json(&usage.pairs_fraction_a),
                pairs_fraction_b: rational_json(&usage.pairs_fraction_b),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Convenience for tests and callers that want a plain fraction value.
pub fn rational_from_int(n: i64) -> BigRational {
    BigRational::from(BigInt::from(n))
}

pub fn rational_of(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// f64 view of a small rational (used only at report time).
pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("small rational fits in f64")
}

impl WeightedResult {
    pub fn is_zero(&self) -> bool {
        self.r_a.is_zero() && self.r_b.is_zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::parse_cohort;

    /// A: 2 members obs {1,0}; B: 3 members obs {1,0,0}; shared cv (1, 2.5).
    fn canonical_2v3() -> Cohort {
        parse_cohort(
            "id,group,outcome,cv_1,cv_2\n\
             a1,A,1,1,2.5\na2,A,0,1,2.5\n\
             b1,B,1,1,2.5\nb2,B,0,1,2.5\nb3,B,0,1,2.5\n",
            6,
        )
        .unwrap()
    }

    #[test]
    fn identical_covariates_form_one_cluster() {
        let c = parse_cohort("id,group,outcome,cv_1\np1,A,0,1\np2,A,1,1\np3,A,0,1\n", 6).unwrap();
        let clusters = cluster(&c, Group::A);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].size(), 3);
        assert_eq!(clusters[0].outcome_sum(), &rational_from_int(1));
    }

    #[test]
    fn distinct_covariates_form_singletons() {
        let c = parse_cohort("id,group,outcome,cv_1\np1,A,0,1\np2,A,0,2\np3,A,0,3\n", 6).unwrap();
        assert_eq!(cluster(&c, Group::A).len(), 3);
    }

    #[test]
    fn clustering_is_sort_order_independent() {
        let c = canonical_2v3();
        let rev: Vec<usize> = (0..c.len()).rev().collect();
        let permuted = c.permuted(&rev).unwrap();
        assert_eq!(cluster(&c, Group::B), cluster(&permuted, Group::B));
    }

    #[test]
    fn quadratic_and_indexed_paths_agree() {
        let c = parse_cohort(
            "id,group,outcome,cv_1,cv_2\n\
             p1,A,0,1,0\np2,A,1,1,0\np3,A,0,2,0\np4,A,1,0,3\np5,A,0,2,0\n",
            6,
        )
        .unwrap();
        assert_eq!(cluster(&c, Group::A), cluster_quadratic(&c, Group::A));
    }

    #[test]
    fn matched_pair_weights() {
        let c = canonical_2v3();
        let cm = match_clusters(cluster(&c, Group::A), cluster(&c, Group::B));
        assert_eq!(cm.matched().len(), 1);
        assert_eq!(cm.k(), 1);
        assert_eq!(cm.l(), 1);
        let m = &cm.matched()[0];
        assert_eq!(m.s, 2);
        assert_eq!(m.w_a, rational_from_int(1));
        assert_eq!(m.w_b, rational_of(2, 3));
    }

    #[test]
    fn unmatched_cluster_has_no_counterpart() {
        let c = parse_cohort("id,group,outcome,cv_1\na1,A,0,1\nb1,B,0,2\n", 6).unwrap();
        let cm = match_clusters(cluster(&c, Group::A), cluster(&c, Group::B));
        assert!(cm.matched().is_empty());
        assert_eq!(cm.unmatched_a().len(), 1);
        assert_eq!(cm.unmatched_b().len(), 1);
    }

    #[test]
    fn min_weight_canonical_example() {
        let out = dbsem(&canonical_2v3());
        assert_eq!(out.result.r_a, rational_from_int(1));
        assert_eq!(out.result.r_b, rational_of(2, 3));
        assert_eq!(out.result.matched_pairs_total, 2);
        assert_eq!(out.result.rate_a, rational_of(1, 2));
        assert_eq!(out.result.rate_b, rational_of(1, 3));
    }

    #[test]
    fn equal_sized_clusters_contribute_raw_sums() {
        let c = parse_cohort(
            "id,group,outcome,cv_1\na1,A,1,1\na2,A,0,1\nb1,B,1,1\nb2,B,1,1\n",
            6,
        )
        .unwrap();
        let out = dbsem(&c);
        let m = &out.matching.matched()[0];
        assert_eq!(m.w_a, rational_from_int(1));
        assert_eq!(m.w_b, rational_from_int(1));
        assert_eq!(out.result.r_a, rational_from_int(1));
        assert_eq!(out.result.r_b, rational_from_int(2));
    }

    #[test]
    fn empty_overlap_yields_zero_result() {
        let c = parse_cohort("id,group,outcome,cv_1\na1,A,1,1\nb1,B,1,2\n", 6).unwrap();
        let out = dbsem(&c);
        assert!(out.result.is_zero());
        assert_eq!(out.result.matched_pairs_total, 0);
        let usage = usage_report(&out.matching, &c);
        assert_eq!(usage.member_fraction_a, BigRational::zero());
    }

    #[test]
    fn mirror_cohort_is_symmetric() {
        let c = parse_cohort(
            "id,group,outcome,cv_1\n\
             a1,A,1,1\na2,A,0,2\nb1,B,1,1\nb2,B,0,2\n",
            6,
        )
        .unwrap();
        let out = dbsem(&c);
        assert_eq!(out.result.r_a, out.result.r_b);
        for m in out.matching.matched() {
            assert_eq!(m.w_a, rational_from_int(1));
            assert_eq!(m.w_b, rational_from_int(1));
        }
    }

    #[test]
    fn usage_fractions_canonical_example() {
        // 2-vs-3 matched cluster plus one unmatched A singleton
        let c = parse_cohort(
            "id,group,outcome,cv_1,cv_2\n\
             a1,A,1,1,2.5\na2,A,0,1,2.5\na3,A,0,9,9\n\
             b1,B,1,1,2.5\nb2,B,0,1,2.5\nb3,B,0,1,2.5\n",
            6,
        )
        .unwrap();
        let out = dbsem(&c);
        let usage = usage_report(&out.matching, &c);
        assert_eq!(usage.member_fraction_a, rational_of(2, 3));
        assert_eq!(usage.member_fraction_b, rational_from_int(1));
        assert_eq!(usage.pairs_fraction_b, rational_of(2, 3));
    }

    #[test]
    fn report_serialization_is_stable_across_orders() {
        let c = canonical_2v3();
        let rev: Vec<usize> = (0..c.len()).rev().collect();
        let a = DbsemReport::build(&c).to_json();
        let b = DbsemReport::build(&c.permuted(&rev).unwrap()).to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn decimal_rendering_rounds_half_away_from_zero() {
        assert_eq!(rational_decimal(&rational_of(2, 3)), "0.666667");
        assert_eq!(rational_decimal(&rational_of(-2, 3)), "-0.666667");
        assert_eq!(rational_decimal(&rational_of(1, 2)), "0.500000");
        assert_eq!(rational_decimal(&rational_of(1, 2_000_000)), "0.000001");
        assert_eq!(rational_decimal(&BigRational::zero()), "0.000000");
    }

    #[test]
    fn rational_json_formats() {
        let j = rational_json(&rational_of(2, 3));
        assert_eq!(j.exact, "2/3");
        assert_eq!(j.decimal, "0.666667");
        let j = rational_json(&rational_from_int(5));
        assert_eq!(j.exact, "5/1");
    }
}
