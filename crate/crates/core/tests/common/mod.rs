//! Shared fixtures for the integration suites: seeded random cohorts with
//! controlled cluster structure.
//!
//! Compiled once per test target, so not every helper is used everywhere.
#![allow(dead_code)]

use balmatch_core::cohort::{Cohort, Group, Patient};
use balmatch_core::fixed::Fixed;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

/// Builds a random cohort of at most `max_clusters` covariate-distinct
/// clusters with per-side sizes up to `max_size` (a side may be empty) and
/// random binary outcomes. Row order is shuffled.
pub fn random_cohort(seed: u64, max_clusters: usize, max_size: usize) -> Cohort {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_clusters = rng.gen_range(1..=max_clusters);
    let dimension = rng.gen_range(1..=3);
    let mut cvs: HashSet<Vec<Fixed>> = HashSet::new();
    let mut patients = Vec::new();
    for c in 0..n_clusters {
        let cv = loop {
            let candidate: Vec<Fixed> = (0..dimension)
                .map(|_| Fixed::from_int(rng.gen_range(0..50)))
                .collect();
            if cvs.insert(candidate.clone()) {
                break candidate;
            }
        };
        let mut size_a = rng.gen_range(0..=max_size);
        let mut size_b = rng.gen_range(0..=max_size);
        if size_a == 0 && size_b == 0 {
            if rng.gen_bool(0.5) {
                size_a = 1;
            } else {
                size_b = 1;
            }
        }
        for (group, size) in [(Group::A, size_a), (Group::B, size_b)] {
            for m in 0..size {
                let id = format!("c{c}_{}{m}", group.label().to_lowercase());
                let outcome = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
                patients.push(Patient::new(id, group, outcome, cv.clone()).unwrap());
            }
        }
    }
    patients.shuffle(&mut rng);
    Cohort::new(patients, dimension, 6).unwrap()
}

/// Like [`random_cohort`] but guarantees both groups are non-empty.
pub fn random_two_group_cohort(seed: u64, max_clusters: usize, max_size: usize) -> Cohort {
    let mut attempt = seed;
    loop {
        let cohort = random_cohort(attempt, max_clusters, max_size);
        if cohort.count(Group::A) > 0 && cohort.count(Group::B) > 0 {
            return cohort;
        }
        attempt = attempt.wrapping_add(0x9E37_79B9_7F4A_7C15);
    }
}

/// Random cohort over indicator (0/1) covariates of the given dimension,
/// where every linear predictor is a subset sum of the slopes. Used by the
/// score-equality properties, which concern exactly this covariate shape.
pub fn random_binary_cohort(
    seed: u64,
    max_clusters: usize,
    max_size: usize,
    dimension: usize,
) -> Cohort {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let limit = 1usize << dimension;
    let n_clusters = rng.gen_range(1..=max_clusters.min(limit));
    let mut cvs: HashSet<Vec<Fixed>> = HashSet::new();
    let mut patients = Vec::new();
    for c in 0..n_clusters {
        let cv = loop {
            let candidate: Vec<Fixed> = (0..dimension)
                .map(|_| Fixed::from_int(i64::from(rng.gen_bool(0.5))))
                .collect();
            if cvs.insert(candidate.clone()) {
                break candidate;
            }
        };
        for group in [Group::A, Group::B] {
            let size = rng.gen_range(0..=max_size);
            for m in 0..size {
                let id = format!("c{c}_{}{m}", group.label().to_lowercase());
                let outcome = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
                patients.push(Patient::new(id, group, outcome, cv.clone()).unwrap());
            }
        }
    }
    if patients.is_empty() {
        let cv = vec![Fixed::from_int(0); dimension];
        patients.push(Patient::new("a0", Group::A, 0.0, cv.clone()).unwrap());
        patients.push(Patient::new("b0", Group::B, 0.0, cv).unwrap());
    }
    patients.shuffle(&mut rng);
    Cohort::new(patients, dimension, 6).unwrap()
}

/// A seeded random permutation of `0..n`.
pub fn random_permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}
