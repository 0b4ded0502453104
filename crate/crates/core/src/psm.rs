//! Exact 1:1 propensity-score matching in four deliberately distinct
//! flavors: greedy (pitfall-faithful), with-replacement, extreme
//! (best/worst envelope), and uniformly bootstrapped.
//!
//! The greedy matcher intentionally reproduces the sort-order dependence
//! and randomness-of-choice of a straightforward matching loop; the other
//! flavors exist to bound and average away exactly those effects.

use crate::cohort::{Cohort, Group};
use crate::dbsem::{self, MatchedClusters};
use crate::fixed::Fixed;
use crate::propensity::{PropensityError, PropensityModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PsmError {
    #[error("outcomes are not binary (expected 0 or 1)")]
    NonBinaryOutcome,
    #[error("iterations must be at least 1")]
    InvalidIterations,
    #[error(transparent)]
    Propensity(#[from] PropensityError),
}

/// Exact-match predicate used by the greedy matcher. The default compares
/// covariate vectors exactly; the propensity-score variant exists to
/// demonstrate how float score comparison can accept spurious matches.
pub enum MatchMode<'a> {
    Covariate,
    PsTolerance {
        model: &'a PropensityModel,
        epsilon: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Greedy,
    Replacement,
    BestBest,
    WorstWorst,
    BestAWorstB,
    WorstABestB,
}

/// A set of 1:1 matched pairs `(a_id, b_id)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pairs: Vec<(String, String)>,
    strategy: Strategy,
    seed: Option<u64>,
    matched_a: usize,
    matched_b: usize,
}

#[derive(Serialize)]
struct SidecarCounts {
    pairs: usize,
    matched_a: usize,
    matched_b: usize,
}

#[derive(Serialize)]
struct Sidecar {
    strategy: Strategy,
    seed: Option<u64>,
    counts: SidecarCounts,
}

impl Matching {
    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Distinct matched patients on the A side.
    pub fn matched_a(&self) -> usize {
        self.matched_a
    }

    /// Distinct matched patients on the B side.
    pub fn matched_b(&self) -> usize {
        self.matched_b
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pair list as a delimited file, one `a_id,b_id` row per pair.
    pub fn to_pairs_csv(&self) -> String {
        let mut out = String::from("a_id,b_id\n");
        for (a, b) in &self.pairs {
            out.push_str(a);
            out.push(',');
            out.push_str(b);
            out.push('\n');
        }
        out
    }

    /// JSON sidecar describing how the pairs were produced.
    pub fn sidecar_json(&self) -> String {
        serde_json::to_string_pretty(&Sidecar {
            strategy: self.strategy,
            seed: self.seed,
            counts: SidecarCounts {
                pairs: self.pairs.len(),
                matched_a: self.matched_a,
                matched_b: self.matched_b,
            },
        })
        .expect("sidecar serializes")
    }
}

/// Greedy exact 1:1 matching, the pitfall-faithful variant: iterate A in
/// cohort sort order and give each patient the first (no seed) or a
/// seeded-uniform-random (seed given) unmatched exact-equal B partner.
/// Sort-order dependence and randomness of choice are intentional here.
pub fn greedy_exact_psm(
    cohort: &Cohort,
    mode: &MatchMode,
    seed: Option<u64>,
) -> Result<Matching, PsmError> {
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let mut pairs = Vec::new();
    match mode {
        MatchMode::Covariate => {
            let mut buckets: HashMap<&[Fixed], Vec<usize>> = HashMap::new();
            for &j in cohort.group_positions(Group::B).iter().rev() {
                // reversed fill so that pop from the back yields sort order
                buckets
                    .entry(cohort.patients()[j].covariates())
                    .or_default()
                    .push(j);
            }
            for i in cohort.group_positions(Group::A) {
                let a = &cohort.patients()[i];
                if let Some(candidates) = buckets.get_mut(a.covariates()) {
                    if candidates.is_empty() {
                        continue;
                    }
                    let j = match rng.as_mut() {
                        None => candidates.pop().expect("non-empty"),
                        Some(rng) => {
                            let pick = rng.gen_range(0..candidates.len());
                            // candidates are stored back-to-front
                            candidates.remove(candidates.len() - 1 - pick)
                        }
                    };
                    pairs.push((a.id().to_string(), cohort.patients()[j].id().to_string()));
                }
            }
        }
        MatchMode::PsTolerance { model, epsilon } => {
            let scores: Vec<f64> = cohort
                .patients()
                .iter()
                .map(|p| model.score(p))
                .collect::<Result<_, _>>()?;
            let b_positions = cohort.group_positions(Group::B);
            let mut taken: HashSet<usize> = HashSet::new();
            for i in cohort.group_positions(Group::A) {
                let candidates: Vec<usize> = b_positions
                    .iter()
                    .copied()
                    .filter(|j| !taken.contains(j))
                    .filter(|&j| (scores[i] - scores[j]).abs() <= *epsilon)
                    .collect();
                if candidates.is_empty() {
                    continue;
                }
                let j = match rng.as_mut() {
                    None => candidates[0],
                    Some(rng) => candidates[rng.gen_range(0..candidates.len())],
                };
                taken.insert(j);
                pairs.push((
                    cohort.patients()[i].id().to_string(),
                    cohort.patients()[j].id().to_string(),
                ));
            }
        }
    }
    let n = pairs.len();
    Ok(Matching {
        pairs,
        strategy: Strategy::Greedy,
        seed,
        matched_a: n,
        matched_b: n,
    })
}

/// Exact matching with replacement, both directions. In each direction
/// every patient with at least one exact-equal partner is matched to the
/// first such partner in sort order, so partners may repeat.
#[derive(Debug, Clone)]
pub struct ReplacementMatching {
    pub a_to_b: Matching,
    pub b_to_a: Matching,
}

impl ReplacementMatching {
    /// Bidirectional match count, the number a table row would report.
    pub fn total_matches(&self) -> usize {
        self.a_to_b.pairs.len() + self.b_to_a.pairs.len()
    }
}

pub fn exact_psm_with_replacement(cohort: &Cohort) -> ReplacementMatching {
    let direction = |from: Group| -> Matching {
        let to = from.other();
        let mut first_partner: HashMap<&[Fixed], usize> = HashMap::new();
        for j in cohort.group_positions(to) {
            first_partner
                .entry(cohort.patients()[j].covariates())
                .or_insert(j);
        }
        let mut pairs = Vec::new();
        let mut partners_used = HashSet::new();
        for i in cohort.group_positions(from) {
            let p = &cohort.patients()[i];
            if let Some(&j) = first_partner.get(p.covariates()) {
                partners_used.insert(j);
                let q = &cohort.patients()[j];
                let (a_id, b_id) = match from {
                    Group::A => (p.id().to_string(), q.id().to_string()),
                    Group::B => (q.id().to_string(), p.id().to_string()),
                };
                pairs.push((a_id, b_id));
            }
        }
        let own = pairs.len();
        let (matched_a, matched_b) = match from {
            Group::A => (own, partners_used.len()),
            Group::B => (partners_used.len(), own),
        };
        Matching {
            pairs,
            strategy: Strategy::Replacement,
            seed: None,
            matched_a,
            matched_b,
        }
    };
    ReplacementMatching {
        a_to_b: direction(Group::A),
        b_to_a: direction(Group::B),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremeMode {
    BestBest,
    WorstWorst,
    BestAWorstB,
    WorstABestB,
}

#[derive(Clone, Copy)]
enum SidePref {
    /// Select the members with the fewest deaths.
    Best,
    /// Select the members with the most deaths.
    Worst,
}

impl ExtremeMode {
    fn prefs(self) -> (SidePref, SidePref) {
        match self {
            ExtremeMode::BestBest => (SidePref::Best, SidePref::Best),
            ExtremeMode::WorstWorst => (SidePref::Worst, SidePref::Worst),
            ExtremeMode::BestAWorstB => (SidePref::Best, SidePref::Worst),
            ExtremeMode::WorstABestB => (SidePref::Worst, SidePref::Best),
        }
    }

    fn strategy(self) -> Strategy {
        match self {
            ExtremeMode::BestBest => Strategy::BestBest,
            ExtremeMode::WorstWorst => Strategy::WorstWorst,
            ExtremeMode::BestAWorstB => Strategy::BestAWorstB,
            ExtremeMode::WorstABestB => Strategy::WorstABestB,
        }
    }
}

/// Matched-cluster structure shared by the extreme and bootstrap matchers:
/// per side, the member ids with outcomes and sort positions, ordered by
/// sort position.
struct PairedCluster {
    a_members: Vec<(usize, String, f64)>,
    b_members: Vec<(usize, String, f64)>,
    s: usize,
}

fn paired_clusters(cohort: &Cohort) -> Vec<PairedCluster> {
    let positions = cohort.positions_by_id();
    let side = |cluster: &dbsem::Cluster| -> Vec<(usize, String, f64)> {
        let mut members: Vec<(usize, String, f64)> = cluster
            .member_ids()
            .iter()
            .map(|id| {
                let &pos = positions.get(id.as_str()).expect("member id in cohort");
                (pos, id.clone(), cohort.patients()[pos].outcome())
            })
            .collect();
        members.sort_by_key(|(pos, _, _)| *pos);
        members
    };
    let a = dbsem::cluster(cohort, Group::A);
    let b = dbsem::cluster(cohort, Group::B);
    dbsem::match_clusters(a, b)
        .matched()
        .iter()
        .map(|m: &MatchedClusters| PairedCluster {
            a_members: side(&m.a),
            b_members: side(&m.b),
            s: m.s,
        })
        .collect()
}

fn select_extreme(
    members: &[(usize, String, f64)],
    pref: SidePref,
    count: usize,
) -> Vec<(usize, String, f64)> {
    let mut sorted: Vec<_> = members.to_vec();
    // ties broken by sort order (members arrive position-sorted, sort is stable)
    match pref {
        SidePref::Best => sorted.sort_by(|x, y| x.2.total_cmp(&y.2)),
        SidePref::Worst => sorted.sort_by(|x, y| y.2.total_cmp(&x.2)),
    }
    sorted.truncate(count);
    sorted
}

/// Best/worst-case envelope matching: within each matched cluster pair,
/// exactly `S = min(n, m)` members are selected per side, preferring the
/// fewest ("best") or most ("worst") deaths. Each such selection is a valid
/// exact matching, which is precisely why headline numbers from a single
/// greedy run are not trustworthy.
pub fn extreme_matching(cohort: &Cohort, mode: ExtremeMode) -> Result<Matching, PsmError> {
    if !cohort.binary_outcomes() {
        return Err(PsmError::NonBinaryOutcome);
    }
    let (pref_a, pref_b) = mode.prefs();
    let mut pairs = Vec::new();
    for pc in paired_clusters(cohort) {
        let chosen_a = select_extreme(&pc.a_members, pref_a, pc.s);
        let chosen_b = select_extreme(&pc.b_members, pref_b, pc.s);
        for (a, b) in chosen_a.into_iter().zip(chosen_b) {
            pairs.push((a.1, b.1));
        }
    }
    let n = pairs.len();
    Ok(Matching {
        pairs,
        strategy: mode.strategy(),
        seed: None,
        matched_a: n,
        matched_b: n,
    })
}

/// Report of a uniformly bootstrapped exact PSM study.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BootstrapReport {
    pub iterations: u64,
    pub seed: u64,
    pub matched_pairs: usize,
    pub mean_deaths_a: f64,
    pub mean_deaths_b: f64,
    pub mean_rate_a: f64,
    pub mean_rate_b: f64,
    pub std_error_a: f64,
    pub std_error_b: f64,
}

impl BootstrapReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn iteration_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    rng
}

/// One uniform draw: for each matched cluster pair, a uniform S-subset of
/// each side. Outcome sums per side; RNG consumption happens only where a
/// side actually has a choice.
fn draw_iteration(pairs: &[PairedCluster], rng: &mut ChaCha8Rng) -> (f64, f64) {
    let mut deaths_a = 0.0;
    let mut deaths_b = 0.0;
    for pc in pairs {
        for (members, total) in [
            (&pc.a_members, &mut deaths_a),
            (&pc.b_members, &mut deaths_b),
        ] {
            if members.len() == pc.s {
                *total += members.iter().map(|m| m.2).sum::<f64>();
            } else {
                for idx in rand::seq::index::sample(rng, members.len(), pc.s) {
                    *total += members[idx].2;
                }
            }
        }
    }
    (deaths_a, deaths_b)
}

/// Uniformly bootstrapped exact 1:1 PSM: every iteration draws one maximal
/// exact matching where each member of a matched cluster is selected with
/// equal probability, and the per-side death counts are aggregated.
///
/// Iteration k uses an RNG substream derived from `(seed, k)`, so runs can
/// be extended without replaying, and parallel execution aggregates in
/// iteration order; the report is byte-identical to a serial run.
pub fn uniform_bootstrap_psm(
    cohort: &Cohort,
    iterations: u64,
    seed: u64,
) -> Result<BootstrapReport, PsmError> {
    if iterations < 1 {
        return Err(PsmError::InvalidIterations);
    }
    let pairs = paired_clusters(cohort);
    let matched_pairs: usize = pairs.iter().map(|p| p.s).sum();
    let samples: Vec<(f64, f64)> = (0..iterations)
        .into_par_iter()
        .map(|k| {
            let mut rng = iteration_rng(seed, k);
            draw_iteration(&pairs, &mut rng)
        })
        .collect();
    let n = iterations as f64;
    let mean_a = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let mean_b = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let std_error = |mean: f64, pick: fn(&(f64, f64)) -> f64| -> f64 {
        if iterations < 2 {
            return 0.0;
        }
        let ss: f64 = samples
            .iter()
            .map(|s| {
                let d = pick(s) - mean;
                d * d
            })
            .sum();
        (ss / (n - 1.0)).sqrt() / n.sqrt()
    };
    let rate = |mean: f64| {
        if matched_pairs == 0 {
            0.0
        } else {
            mean / matched_pairs as f64
        }
    };
    Ok(BootstrapReport {
        iterations,
        seed,
        matched_pairs,
        mean_deaths_a: mean_a,
        mean_deaths_b: mean_b,
        mean_rate_a: rate(mean_a),
        mean_rate_b: rate(mean_b),
        std_error_a: std_error(mean_a, |s| s.0),
        std_error_b: std_error(mean_b, |s| s.1),
    })
}

/// Materializes the pair list of a single bootstrap draw, for validity
/// checks and demonstrations. Consumes the substream exactly like the
/// aggregated run, so iteration k's pairs reproduce iteration k's counts.
pub fn bootstrap_sample_pairs(cohort: &Cohort, seed: u64, iteration: u64) -> Vec<(String, String)> {
    let pairs = paired_clusters(cohort);
    let mut rng = iteration_rng(seed, iteration);
    let mut out = Vec::new();
    for pc in &pairs {
        let pick = |members: &[(usize, String, f64)], rng: &mut ChaCha8Rng| -> Vec<String> {
            if members.len() == pc.s {
                members.iter().map(|m| m.1.clone()).collect()
            } else {
                rand::seq::index::sample(rng, members.len(), pc.s)
                    .iter()
                    .map(|idx| members[idx].1.clone())
                    .collect()
            }
        };
        let chosen_a = pick(&pc.a_members, &mut rng);
        let chosen_b = pick(&pc.b_members, &mut rng);
        out.extend(chosen_a.into_iter().zip(chosen_b));
    }
    out
}
