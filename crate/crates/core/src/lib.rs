//! Deterministic statistical matching for two-group observational studies.
//!
//! The crate provides exact 1:1 propensity-score matching in the flavors
//! needed to demonstrate why single matching runs are unreliable (greedy,
//! with-replacement, best/worst envelopes, uniform bootstrap), a
//! deterministic clustering matcher with min-weighting whose result is a
//! pure function of the dataset, an enumeration oracle proving that the
//! bootstrap mean and the min-weighted result agree exactly, and the
//! hypothesis tests used to summarize either.
//!
//! Covariates are exact fixed-point decimals and all weighted results are
//! exact rationals, so equality of covariate vectors and equality of
//! results are real predicates, not float comparisons.

pub mod cohort;
pub mod dbsem;
pub mod fixed;
pub mod oracle;
pub mod propensity;
pub mod psm;
pub mod stats;
pub mod synth;

pub use cohort::{manhattan, parse_cohort, Cohort, CohortError, Group, Patient};
pub use dbsem::{cluster, dbsem, match_clusters, min_weight, usage_report, DbsemReport};
pub use fixed::Fixed;
pub use oracle::{enumerate_expectation, per_cluster_expectation, ExactExpectation};
pub use propensity::{
    detect_coefficient_collisions, fit_logistic, psd, FitOptions, PropensityModel,
};
pub use psm::{
    exact_psm_with_replacement, extreme_matching, greedy_exact_psm, uniform_bootstrap_psm,
    BootstrapReport, ExtremeMode, MatchMode, Matching,
};
pub use stats::{chi_square_2x2, rate_summary, t_test_two_sample, TestReport, WeightedObs};
pub use synth::{synth_cohort, SynthSpec};
