//! Logistic-regression propensity model: fitting, scoring, score
//! differences, and detection of coefficient collisions that break the
//! equivalence between score equality and covariate equality.

use crate::cohort::{Cohort, Group, Patient};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Coefficient magnitude beyond which a non-vanishing gradient is taken as
/// evidence that the MLE does not exist (perfect separation).
const SEPARATION_BETA_LIMIT: f64 = 30.0;

/// Relative pivot threshold for dropping linearly dependent columns.
const DROP_PIVOT_REL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum PropensityError {
    #[error("group {0} is empty; the logistic model needs both groups")]
    EmptyGroup(Group),
    #[error("weighted normal matrix is singular and no further column can be dropped")]
    SingularSystem,
    #[error("patient has {found} covariates, model was fitted on dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid model document: {0}")]
    BadModelDocument(String),
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Convergence threshold on the L2 norm of the log-likelihood gradient.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tolerance: 1e-8,
            max_iterations: 100,
        }
    }
}

/// Fitted propensity model: intercept plus one slope per kept covariate
/// column, with fit diagnostics.
#[derive(Debug, Clone)]
pub struct PropensityModel {
    coefficients: Vec<f64>,
    dropped_columns: Vec<usize>,
    dimension: usize,
    tolerance: f64,
    converged: bool,
    iterations: usize,
    gradient_norm: f64,
    separation: bool,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    coefficients: Vec<f64>,
    dropped_columns: Vec<usize>,
    tolerance: f64,
    iterations: usize,
}

impl PropensityModel {
    /// Builds a model from explicit coefficients, bypassing any fit. Used to
    /// construct collision cohorts and for reproducibility audits.
    pub fn from_coefficients(intercept: f64, slopes: &[f64]) -> PropensityModel {
        let mut coefficients = Vec::with_capacity(slopes.len() + 1);
        coefficients.push(intercept);
        coefficients.extend_from_slice(slopes);
        PropensityModel {
            coefficients,
            dropped_columns: Vec::new(),
            dimension: slopes.len(),
            tolerance: 0.0,
            converged: true,
            iterations: 0,
            gradient_norm: 0.0,
            separation: false,
        }
    }

    /// `[intercept, slopes...]`, slopes in header order of the kept columns.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    /// Slopes for covariate columns that survived the collinearity filter.
    pub fn slopes(&self) -> &[f64] {
        &self.coefficients[1..]
    }

    /// 1-based covariate indices removed for collinearity (constant columns
    /// included), in header order.
    pub fn dropped_columns(&self) -> &[usize] {
        &self.dropped_columns
    }

    /// Covariate dimension `s` of the cohort the model applies to.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn gradient_norm(&self) -> f64 {
        self.gradient_norm
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// True when the fit diverged in the way characteristic of perfect
    /// separation: coefficients growing without the gradient vanishing.
    pub fn separation_detected(&self) -> bool {
        self.separation
    }

    /// Slope per original covariate column; dropped columns carry 0.
    pub fn full_slopes(&self) -> Vec<f64> {
        let mut slopes = vec![0.0; self.dimension];
        let mut kept = self.slopes().iter();
        for (i, slot) in slopes.iter_mut().enumerate() {
            if !self.dropped_columns.contains(&(i + 1)) {
                *slot = *kept.next().expect("one kept slope per kept column");
            }
        }
        slopes
    }

    fn linear_predictor(&self, patient: &Patient) -> Result<f64, PropensityError> {
        if patient.covariates().len() != self.dimension {
            return Err(PropensityError::DimensionMismatch {
                expected: self.dimension,
                found: patient.covariates().len(),
            });
        }
        let mut eta = self.coefficients[0];
        let mut kept = self.coefficients[1..].iter();
        for (i, cv) in patient.covariates().iter().enumerate() {
            if !self.dropped_columns.contains(&(i + 1)) {
                eta += kept.next().expect("kept slope") * cv.to_f64();
            }
        }
        Ok(eta)
    }

    /// Estimated propensity score in (0, 1), computed via the numerically
    /// stable form of the logistic function.
    pub fn score(&self, patient: &Patient) -> Result<f64, PropensityError> {
        Ok(sigmoid(self.linear_predictor(patient)?))
    }

    /// Model document for reproducibility audits.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelDocument {
            coefficients: self.coefficients.clone(),
            dropped_columns: self.dropped_columns.clone(),
            tolerance: self.tolerance,
            iterations: self.iterations,
        })
        .expect("model document serializes")
    }

    /// Restores a scoring-capable model from an exported document. Fit
    /// diagnostics beyond the document contents are not recoverable; the
    /// restored model reports itself converged with a zero gradient.
    pub fn from_json(text: &str) -> Result<PropensityModel, PropensityError> {
        let doc: ModelDocument = serde_json::from_str(text)
            .map_err(|e| PropensityError::BadModelDocument(e.to_string()))?;
        if doc.coefficients.is_empty() {
            return Err(PropensityError::BadModelDocument(
                "coefficients must include an intercept".to_string(),
            ));
        }
        let dimension = doc.coefficients.len() - 1 + doc.dropped_columns.len();
        let unique: BTreeSet<usize> = doc.dropped_columns.iter().copied().collect();
        if unique.len() != doc.dropped_columns.len()
            || doc.dropped_columns.iter().any(|&c| c == 0 || c > dimension)
        {
            return Err(PropensityError::BadModelDocument(
                "dropped_columns must be unique 1-based covariate indices".to_string(),
            ));
        }
        Ok(PropensityModel {
            coefficients: doc.coefficients,
            dropped_columns: doc.dropped_columns,
            dimension,
            tolerance: doc.tolerance,
            converged: true,
            iterations: doc.iterations,
            gradient_norm: 0.0,
            separation: false,
        })
    }
}

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Binomial log-likelihood with the stable log(1 + e^eta) form.
fn log_likelihood(eta: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let mut ll = 0.0;
    for i in 0..eta.len() {
        let e = eta[i];
        ll += y[i] * e - (e.max(0.0) + (-e.abs()).exp().ln_1p());
    }
    ll
}

/// Drops columns that are linearly dependent on earlier columns, by an
/// in-order Cholesky pass over the Gram matrix. Column 0 (the intercept) is
/// always kept, so constant covariates get dropped here. Header order makes
/// the outcome deterministic.
fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let cols = x.ncols();
    let gram = x.transpose() * x;
    let mut kept: Vec<usize> = Vec::with_capacity(cols);
    // factor[j][i]: entry L[j][i] over kept columns i
    let mut factor: Vec<Vec<f64>> = Vec::with_capacity(cols);
    let mut dropped = Vec::new();
    for j in 0..cols {
        let mut row = Vec::with_capacity(kept.len() + 1);
        for (pos, &i) in kept.iter().enumerate() {
            let mut v = gram[(j, i)];
            for q in 0..pos {
                v -= row[q] * factor[pos][q];
            }
            row.push(v / factor[pos][pos]);
        }
        let mut diag = gram[(j, j)];
        for v in &row {
            diag -= v * v;
        }
        if j > 0 && diag <= DROP_PIVOT_REL * gram[(j, j)].max(f64::MIN_POSITIVE) {
            dropped.push(j);
        } else {
            row.push(diag.max(f64::MIN_POSITIVE).sqrt());
            factor.push(row);
            kept.push(j);
        }
    }
    dropped
}

/// Fits the logistic propensity model by iteratively reweighted least
/// squares with step-halving. Group B is the treatment indicator (y = 1).
/// Deterministic: identical input bytes produce bit-identical coefficients.
pub fn fit_logistic(
    cohort: &Cohort,
    options: &FitOptions,
) -> Result<PropensityModel, PropensityError> {
    for group in [Group::A, Group::B] {
        if cohort.count(group) == 0 {
            return Err(PropensityError::EmptyGroup(group));
        }
    }
    let n = cohort.len();
    let s = cohort.dimension();
    let mut x_full = DMatrix::zeros(n, s + 1);
    let mut y = DVector::zeros(n);
    for (i, p) in cohort.patients().iter().enumerate() {
        x_full[(i, 0)] = 1.0;
        for (j, cv) in p.covariates().iter().enumerate() {
            x_full[(i, j + 1)] = cv.to_f64();
        }
        y[i] = if p.group() == Group::B { 1.0 } else { 0.0 };
    }

    let dropped = dependent_columns(&x_full);
    let kept: Vec<usize> = (0..=s).filter(|c| !dropped.contains(c)).collect();
    let x = x_full.select_columns(kept.iter());
    let k = x.ncols();

    let mut beta = DVector::zeros(k);
    let mut eta = &x * &beta;
    let mut ll = log_likelihood(&eta, &y);
    let mut converged = false;
    let mut iterations = 0;
    let mut gradient_norm = f64::INFINITY;
    let mut singular = false;

    for iter in 0..options.max_iterations {
        let probs = eta.map(sigmoid);
        let gradient = x.transpose() * (&y - &probs);
        gradient_norm = gradient.norm();
        if gradient_norm < options.tolerance {
            converged = true;
            iterations = iter;
            break;
        }
        iterations = iter + 1;
        if beta.amax() > SEPARATION_BETA_LIMIT {
            break;
        }
        // information matrix X' W X with W = p(1-p), floored to keep it
        // positive definite while the fit diverges
        let w = probs.map(|p| (p * (1.0 - p)).max(1e-10));
        let mut xw = x.clone();
        for i in 0..n {
            let sw = w[i].sqrt();
            for j in 0..k {
                xw[(i, j)] *= sw;
            }
        }
        let info = xw.transpose() * &xw;
        let chol = match Cholesky::new(info) {
            Some(c) => c,
            None => {
                singular = true;
                break;
            }
        };
        let step = chol.solve(&gradient);

        // step-halving on the log-likelihood
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let candidate = &beta + &step * scale;
            let candidate_eta = &x * &candidate;
            let candidate_ll = log_likelihood(&candidate_eta, &y);
            if candidate_ll > ll - 1e-14 {
                beta = candidate;
                eta = candidate_eta;
                ll = candidate_ll;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if !converged {
        let gradient = x.transpose() * (&eta.map(sigmoid) - &y);
        gradient_norm = gradient.norm();
        converged = gradient_norm < options.tolerance;
    }
    let separation = !converged && beta.amax() > SEPARATION_BETA_LIMIT;
    if singular && !separation && !converged {
        return Err(PropensityError::SingularSystem);
    }
    Ok(PropensityModel {
        coefficients: beta.iter().copied().collect(),
        dropped_columns: dropped, // column 0 is never dropped, so these are 1-based covariate indices
        dimension: s,
        tolerance: options.tolerance,
        converged,
        iterations,
        gradient_norm,
        separation,
    })
}

/// Propensity score difference `|ps(x) - ps(z)|`.
pub fn psd(model: &PropensityModel, x: &Patient, z: &Patient) -> Result<f64, PropensityError> {
    Ok((model.score(x)? - model.score(z)?).abs())
}

/// A pair of disjoint covariate index sets whose slope sums agree within
/// the tolerance. Indices are 1-based; either side may be empty (an empty
/// side against `{j}` means the slope for column j vanishes).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CollisionPair {
    pub lhs: Vec<usize>,
    pub rhs: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CollisionReport {
    pub collisions: Vec<CollisionPair>,
    pub tolerance: f64,
    /// True when the whole subset-sum space was searched and every
    /// collision is listed. Sampled searches (dimension > 30) and truncated
    /// reports set this to false.
    pub exhaustive: bool,
}

impl CollisionReport {
    pub fn is_empty(&self) -> bool {
        self.collisions.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("collision report serializes")
    }
}

pub const DEFAULT_COLLISION_TOLERANCE: f64 = 1e-9;

/// Cap on reported collisions; adversarial coefficient sets (all-equal
/// slopes, say) have exponentially many.
const COLLISION_REPORT_CAP: usize = 4096;
const EXACT_SEARCH_MAX_DIM: usize = 30;
const SAMPLED_TRIALS: usize = 2_000_000;

/// All signed subset sums of `values`, as (sum, positive mask, negative
/// mask) over the given index offset.
fn signed_sums(values: &[f64]) -> Vec<(f64, u32, u32)> {
    let mut acc = vec![(0.0f64, 0u32, 0u32)];
    for (i, &v) in values.iter().enumerate() {
        let mut next = Vec::with_capacity(acc.len() * 3);
        for &(sum, pos, neg) in &acc {
            next.push((sum, pos, neg));
            next.push((sum + v, pos | (1 << i), neg));
            next.push((sum - v, pos, neg | (1 << i)));
        }
        acc = next;
    }
    acc
}

fn mask_to_indices(mask: u32, offset: usize) -> Vec<usize> {
    (0..32)
        .filter(|b| mask & (1 << b) != 0)
        .map(|b| b + offset + 1) // 1-based covariate indices
        .collect()
}

fn canonical_pair(
    pos_lo: u32,
    neg_lo: u32,
    pos_hi: u32,
    neg_hi: u32,
    split: usize,
) -> CollisionPair {
    let mut lhs = mask_to_indices(pos_lo, 0);
    lhs.extend(mask_to_indices(pos_hi, split));
    let mut rhs = mask_to_indices(neg_lo, 0);
    rhs.extend(mask_to_indices(neg_hi, split));
    if rhs < lhs {
        std::mem::swap(&mut lhs, &mut rhs);
    }
    CollisionPair { lhs, rhs }
}

/// Searches for index sets I != J with |Σ_{i in I} β_i − Σ_{j in J} β_j|
/// within the tolerance, over the slope coefficients. Dropped columns
/// participate with slope 0, since the score cannot distinguish values in
/// a dropped column at all.
///
/// Dimensions up to 30 are searched exactly by meet-in-the-middle over
/// signed subset sums; larger dimensions fall back to a seeded random
/// sample and mark the report as non-exhaustive.
pub fn detect_coefficient_collisions(model: &PropensityModel, tolerance: f64) -> CollisionReport {
    let slopes = model.full_slopes();
    let s = slopes.len();
    let mut found: BTreeSet<CollisionPair> = BTreeSet::new();
    let mut exhaustive = s <= EXACT_SEARCH_MAX_DIM;

    if exhaustive {
        let split = s / 2;
        let low = signed_sums(&slopes[..split]);
        let mut high = signed_sums(&slopes[split..]);
        high.sort_by(|a, b| a.0.total_cmp(&b.0));
        let sums: Vec<f64> = high.iter().map(|e| e.0).collect();
        'outer: for &(sum, pos_lo, neg_lo) in &low {
            let lo = sums.partition_point(|&v| v < -sum - tolerance);
            for entry in &high[lo..] {
                if entry.0 > -sum + tolerance {
                    break;
                }
                let (pos_hi, neg_hi) = (entry.1, entry.2);
                if pos_lo == 0 && neg_lo == 0 && pos_hi == 0 && neg_hi == 0 {
                    continue;
                }
                found.insert(canonical_pair(pos_lo, neg_lo, pos_hi, neg_hi, split));
                if found.len() > COLLISION_REPORT_CAP {
                    exhaustive = false;
                    break 'outer;
                }
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0xBA17_C0DE);
        for _ in 0..SAMPLED_TRIALS {
            let mut sum = 0.0;
            let mut lhs = Vec::new();
            let mut rhs = Vec::new();
            for (i, &v) in slopes.iter().enumerate() {
                match rng.gen_range(0..3u8) {
                    1 => {
                        sum += v;
                        lhs.push(i + 1);
                    }
                    2 => {
                        sum -= v;
                        rhs.push(i + 1);
                    }
                    _ => {}
                }
            }
            if (lhs.is_empty() && rhs.is_empty()) || sum.abs() > tolerance {
                continue;
            }
            if rhs < lhs {
                std::mem::swap(&mut lhs, &mut rhs);
            }
            found.insert(CollisionPair { lhs, rhs });
            if found.len() > COLLISION_REPORT_CAP {
                break;
            }
        }
    }

    let collisions: Vec<CollisionPair> = found.into_iter().take(COLLISION_REPORT_CAP).collect();
    CollisionReport {
        collisions,
        tolerance,
        exhaustive,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::parse_cohort;
    use crate::fixed::Fixed;

    fn patient(cvs: &[&str]) -> Patient {
        Patient::new(
            "p",
            Group::A,
            0.0,
            cvs.iter().map(|c| Fixed::parse(c, 6).unwrap()).collect(),
        )
        .unwrap()
    }

    fn cohort_2x2() -> Cohort {
        // A: x=1 twice, x=0 twice; B: x=1 three times, x=0 once
        parse_cohort(
            "id,group,outcome,cv_1\n\
             a1,A,0,1\na2,A,0,1\na3,A,0,0\na4,A,0,0\n\
             b1,B,0,1\nb2,B,0,1\nb3,B,0,1\nb4,B,0,0\n",
            6,
        )
        .unwrap()
    }

    #[test]
    fn all_constant_covariates_balanced_groups() {
        let c = parse_cohort(
            "id,group,outcome,cv_1\na1,A,0,2\na2,A,0,2\nb1,B,0,2\nb2,B,0,2\n",
            6,
        )
        .unwrap();
        let m = fit_logistic(&c, &FitOptions::default()).unwrap();
        assert_eq!(m.dropped_columns(), &[1]);
        assert_eq!(m.coefficients().len(), 1);
        assert!(
            m.intercept().abs() < 1e-9,
            "log odds of balanced groups is 0"
        );
        assert!(m.converged());
    }

    #[test]
    fn intercept_is_log_odds_for_unbalanced_groups() {
        let c = parse_cohort(
            "id,group,outcome,cv_1\na1,A,0,1\nb1,B,0,1\nb2,B,0,1\nb3,B,0,1\n",
            6,
        )
        .unwrap();
        let m = fit_logistic(&c, &FitOptions::default()).unwrap();
        assert!(
            (m.intercept() - 3.0f64.ln()).abs() < 1e-7,
            "log(b/a) = ln 3"
        );
    }

    #[test]
    fn saturated_binary_covariate_closed_form() {
        let m = fit_logistic(&cohort_2x2(), &FitOptions::default()).unwrap();
        assert!(m.converged());
        assert!(m.gradient_norm() < 1e-8);
        assert!(
            (m.intercept() - (-(2.0f64.ln()))).abs() < 1e-6,
            "beta0 = -ln 2"
        );
        assert!((m.slopes()[0] - 3.0f64.ln()).abs() < 1e-6, "beta1 = ln 3");
    }

    #[test]
    fn separation_flagged_not_converged() {
        let c = parse_cohort(
            "id,group,outcome,cv_1\na1,A,0,0\na2,A,0,1\nb1,B,0,3\nb2,B,0,4\n",
            6,
        )
        .unwrap();
        let m = fit_logistic(&c, &FitOptions::default()).unwrap();
        assert!(!m.converged());
        assert!(m.separation_detected());
    }

    #[test]
    fn fit_is_deterministic() {
        let a = fit_logistic(&cohort_2x2(), &FitOptions::default()).unwrap();
        let b = fit_logistic(&cohort_2x2(), &FitOptions::default()).unwrap();
        assert_eq!(a.coefficients(), b.coefficients());
        assert_eq!(
            a.coefficients()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>(),
            b.coefficients()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn duplicated_column_is_dropped_deterministically() {
        let c = parse_cohort(
            "id,group,outcome,cv_1,cv_2\n\
             a1,A,0,1,1\na2,A,0,0,0\na3,A,0,1,1\n\
             b1,B,0,1,1\nb2,B,0,0,0\nb3,B,0,0,0\n",
            6,
        )
        .unwrap();
        let m = fit_logistic(&c, &FitOptions::default()).unwrap();
        assert_eq!(m.dropped_columns(), &[2], "later duplicate loses");
    }

    #[test]
    fn score_is_half_for_zero_coefficients() {
        let m = PropensityModel::from_coefficients(0.0, &[0.0, 0.0]);
        let p = patient(&["3", "7"]);
        assert_eq!(m.score(&p).unwrap(), 0.5);
    }

    #[test]
    fn score_closed_form_three_fifths() {
        let m = PropensityModel::from_coefficients(-(2.0f64.ln()), &[3.0f64.ln()]);
        let p = patient(&["1"]);
        assert!((m.score(&p).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn score_monotone_in_covariate_with_positive_slope() {
        let m = PropensityModel::from_coefficients(-1.0, &[0.7]);
        let mut last = 0.0;
        for i in 0..20 {
            let p = patient(&[&format!("{i}")]);
            let s = m.score(&p).unwrap();
            assert!(s > last);
            last = s;
        }
    }

    #[test]
    fn score_dimension_mismatch() {
        let m = PropensityModel::from_coefficients(0.0, &[1.0]);
        assert!(m.score(&patient(&["1", "2"])).is_err());
    }

    #[test]
    fn psd_examples() {
        let m = PropensityModel::from_coefficients(0.0, &[1.0]);
        let x = patient(&["2"]);
        let z = patient(&["2"]);
        assert_eq!(psd(&m, &x, &z).unwrap(), 0.0);
        let z2 = patient(&["0.5"]);
        assert_eq!(psd(&m, &x, &z2).unwrap(), psd(&m, &z2, &x).unwrap());
    }

    #[test]
    fn model_document_round_trip() {
        let m = fit_logistic(&cohort_2x2(), &FitOptions::default()).unwrap();
        let restored = PropensityModel::from_json(&m.to_json()).unwrap();
        assert_eq!(restored.coefficients(), m.coefficients());
        assert_eq!(restored.dimension(), m.dimension());
        let p = patient(&["1"]);
        assert_eq!(restored.score(&p).unwrap(), m.score(&p).unwrap());
    }

    #[test]
    fn bad_model_documents_rejected() {
        assert!(PropensityModel::from_json("not json").is_err());
        // no intercept at all
        assert!(PropensityModel::from_json(
            r#"{"coefficients":[],"dropped_columns":[],"tolerance":1e-8,"iterations":3}"#
        )
        .is_err());
        // dropped column index 0 is not a covariate
        assert!(PropensityModel::from_json(
            r#"{"coefficients":[0.1,0.2],"dropped_columns":[0],"tolerance":1e-8,"iterations":3}"#
        )
        .is_err());
        // duplicate dropped index
        assert!(PropensityModel::from_json(
            r#"{"coefficients":[0.1],"dropped_columns":[1,1],"tolerance":1e-8,"iterations":3}"#
        )
        .is_err());
    }

    #[test]
    fn powers_of_two_have_no_collisions() {
        let m = PropensityModel::from_coefficients(0.0, &[1.0, 2.0, 4.0, 8.0]);
        let r = detect_coefficient_collisions(&m, 1e-9);
        assert!(r.is_empty(), "distinct subset sums: {:?}", r.collisions);
        assert!(r.exhaustive);
    }

    #[test]
    fn one_plus_two_equals_three_is_flagged() {
        let m = PropensityModel::from_coefficients(0.0, &[1.0, 2.0, 3.0]);
        let r = detect_coefficient_collisions(&m, 1e-9);
        assert_eq!(
            r.collisions,
            vec![CollisionPair {
                lhs: vec![1, 2],
                rhs: vec![3],
            }]
        );
    }

    #[test]
    fn dyadic_fractions_collision() {
        let m = PropensityModel::from_coefficients(0.0, &[0.5, 0.25, 0.75]);
        let r = detect_coefficient_collisions(&m, 1e-9);
        assert_eq!(
            r.collisions,
            vec![CollisionPair {
                lhs: vec![1, 2],
                rhs: vec![3],
            }]
        );
    }

    #[test]
    fn zero_slope_collides_with_empty_set() {
        let m = PropensityModel::from_coefficients(0.0, &[0.0, 1.0]);
        let r = detect_coefficient_collisions(&m, 1e-12);
        assert!(r.collisions.contains(&CollisionPair {
            lhs: vec![],
            rhs: vec![1]
        }));
    }

    #[test]
    fn gradient_matches_finite_differences_off_optimum() {
        // central differences of the log-likelihood at a non-optimal point
        let c = cohort_2x2();
        let beta = [0.3f64, -0.2];
        let n = c.len();
        let ll = |b: &[f64]| -> f64 {
            c.patients()
                .iter()
                .map(|p| {
                    let eta = b[0] + b[1] * p.covariates()[0].to_f64();
                    let y = if p.group() == Group::B { 1.0 } else { 0.0 };
                    y * eta - (eta.max(0.0) + (-eta.abs()).exp().ln_1p())
                })
                .sum()
        };
        // analytic gradient
        let mut analytic = [0.0f64; 2];
        for p in c.patients() {
            let x = p.covariates()[0].to_f64();
            let eta = beta[0] + beta[1] * x;
            let y = if p.group() == Group::B { 1.0 } else { 0.0 };
            let resid = y - sigmoid(eta);
            analytic[0] += resid;
            analytic[1] += resid * x;
        }
        let h = 1e-6;
        for j in 0..2 {
            let mut up = beta;
            up[j] += h;
            let mut down = beta;
            down[j] -= h;
            let fd = (ll(&up) - ll(&down)) / (2.0 * h);
            assert!(
                (fd - analytic[j]).abs() <= 1e-6 * analytic[j].abs().max(1.0),
                "component {j}: fd {fd} vs analytic {}",
                analytic[j]
            );
        }
        let _ = n;
    }
}
