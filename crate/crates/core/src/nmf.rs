//! Non-negative matrix factorization X ~ P A^T by alternating NNLS, with
//! seeded restarts, scale normalization, per-learner reconstruction, and
//! pattern alignment across refits.
//!
//! Both factor updates solve their subproblem exactly, so the objective
//! trace is non-increasing. The factorization is identifiable only up to
//! column permutation and scale: `rescale` fixes the scale, `align`
//! resolves the permutation against a reference fit.

use crate::assignment::max_assignment;
use crate::matrix::{Matrix, MatrixError};
use crate::nnls::{nnls_multi, NnlsError};
use crate::seeding::{derive_seed, rng_from_seed};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("input matrix has a negative entry at ({row}, {col}): {value}")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("input matrix has a non-finite entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("k = {k} is out of range; need 1 <= k <= min(rows, cols) = {bound}")]
    KOutOfRange { k: usize, bound: usize },
    #[error("pattern count mismatch: reference has k = {reference}, other has k = {other}")]
    KMismatch { reference: usize, other: usize },
    #[error("feature dimension mismatch: reference has {reference} rows, other has {other}")]
    FeatureDimMismatch { reference: usize, other: usize },
    #[error("learner index {index} out of range (n = {n})")]
    LearnerOutOfRange { index: usize, n: usize },
    #[error("invalid fit config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Nnls(#[from] NnlsError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RescaleMode {
    /// Divide each affinity column by its maximum; affinities land in [0, 1].
    Max,
    /// Divide each affinity column by its mean.
    Mean,
    /// Leave the fitted scale alone.
    None,
}

impl std::str::FromStr for RescaleMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "max" => Ok(RescaleMode::Max),
            "mean" => Ok(RescaleMode::Mean),
            "none" => Ok(RescaleMode::None),
            other => Err(format!("unknown rescale mode '{other}' (expected max, mean, or none)")),
        }
    }
}

impl std::fmt::Display for RescaleMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RescaleMode::Max => "max",
            RescaleMode::Mean => "mean",
            RescaleMode::None => "none",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub k: usize,
    pub seed: u64,
    /// Relative objective-change threshold for convergence.
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub rescale_mode: RescaleMode,
}

impl FitConfig {
    pub fn new(k: usize) -> Self {
        FitConfig {
            k,
            seed: 0,
            tol: 1e-6,
            max_iter: 500,
            restarts: 10,
            rescale_mode: RescaleMode::Max,
        }
    }

    fn validate(&self) -> Result<(), FitError> {
        if self.k < 1 {
            return Err(FitError::BadConfig("k must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(FitError::BadConfig("tol must be > 0".into()));
        }
        if self.max_iter < 1 {
            return Err(FitError::BadConfig("max_iter must be >= 1".into()));
        }
        if self.restarts < 1 {
            return Err(FitError::BadConfig("restarts must be >= 1".into()));
        }
        Ok(())
    }
}

/// A fitted (P, A) pair with its diagnostics.
#[derive(Debug, Clone)]
pub struct FactorPair {
    /// p x K pattern matrix, rows named by feature.
    pub p_mat: Matrix,
    /// n x K affinity matrix, rows named by learner id.
    pub a_mat: Matrix,
    pub k: usize,
    /// Final squared Frobenius residual ||X - P A^T||_F^2.
    pub objective: f64,
    /// Objective after each alternating iteration of the winning restart.
    pub objective_trace: Vec<f64>,
    pub seed: u64,
    pub restarts_used: usize,
    pub converged: bool,
}

impl FactorPair {
    pub fn feature_count(&self) -> usize {
        self.p_mat.rows()
    }

    pub fn learner_count(&self) -> usize {
        self.a_mat.rows()
    }

    /// Indices of patterns whose affinity column is entirely zero.
    pub fn dead_patterns(&self) -> Vec<usize> {
        (0..self.k)
            .filter(|&kk| (0..self.a_mat.rows()).all(|i| self.a_mat.get(i, kk) == 0.0))
            .collect()
    }
}

/// Column permutation aligning one fit's patterns to a reference fit.
#[derive(Debug, Clone)]
pub struct Alignment {
    /// `perm[k]` is the column of the other fit matched to reference
    /// pattern k.
    pub perm: Vec<usize>,
    /// Cosine similarity of each matched pair, in [0, 1].
    pub similarity: Vec<f64>,
}

fn validate_input(x: &Matrix) -> Result<(), FitError> {
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let v = x.get(i, j);
            if !v.is_finite() {
                return Err(FitError::NonFiniteEntry { row: i, col: j });
            }
            if v < 0.0 {
                return Err(FitError::NegativeEntry { row: i, col: j, value: v });
            }
        }
    }
    Ok(())
}

/// Fit X ~ P A^T over `cfg.restarts` seeded runs and keep the best
/// objective (ties broken by lowest restart index). The winner is
/// rescaled per `cfg.rescale_mode`.
pub fn fit(x: &Matrix, cfg: &FitConfig) -> Result<FactorPair, FitError> {
    cfg.validate()?;
    validate_input(x)?;
    let bound = x.rows().min(x.cols());
    if cfg.k > bound {
        return Err(FitError::KOutOfRange { k: cfg.k, bound });
    }

    let xt = x.transpose();
    let mut best: Option<FactorPair> = None;
    for r in 0..cfg.restarts {
        let run_seed = derive_seed(cfg.seed, r as u64);
        let candidate = fit_single(x, &xt, cfg, run_seed)?;
        let better = match &best {
            None => true,
            Some(b) => candidate.objective < b.objective,
        };
        if better {
            best = Some(candidate);
        }
    }
    let mut fp = best.expect("restarts >= 1");
    fp.seed = cfg.seed;
    fp.restarts_used = cfg.restarts;
    fp = rescale(&fp, cfg.rescale_mode)?;
    Ok(fp)
}

fn fit_single(x: &Matrix, xt: &Matrix, cfg: &FitConfig, run_seed: u64) -> Result<FactorPair, FitError> {
    let p = x.rows();
    let k = cfg.k;
    let mut rng = rng_from_seed(run_seed);
    // Uniform (0, 1] initialization.
    let mut p_mat = Matrix::zeros(p, k);
    for i in 0..p {
        for j in 0..k {
            p_mat.set(i, j, 1.0 - rng.random::<f64>());
        }
    }

    let mut a_mat = Matrix::zeros(x.cols(), k);
    let mut trace = Vec::new();
    let mut prev = f64::INFINITY;
    let mut converged = false;
    // Floor on the convergence denominator: once the objective falls to
    // tol * ||X||_F^2 the fit is essentially exact and a purely relative
    // test would chase the geometric decay toward zero forever.
    let scale_floor = (cfg.tol * x.frobenius_sq()).max(1e-30);
    for _ in 0..cfg.max_iter {
        // A-step: each learner column of X against the current patterns.
        let at = nnls_multi(&p_mat, x)?;
        a_mat = at.transpose();
        // P-step: each feature row of X against the current affinities.
        let pt = nnls_multi(&a_mat, xt)?;
        p_mat = pt.transpose();

        let approx = p_mat.multiply(&a_mat.transpose())?;
        let objective = x.sub(&approx)?.frobenius_sq();
        trace.push(objective);
        if prev.is_finite() {
            let rel = (prev - objective) / prev.max(scale_floor);
            if rel < cfg.tol {
                converged = true;
                break;
            }
        }
        prev = objective;
    }

    let objective = *trace.last().expect("max_iter >= 1");
    let p_mat = attach_pattern_names(p_mat, x.row_names(), k);
    let a_mat = attach_pattern_names(a_mat, x.col_names(), k);
    Ok(FactorPair {
        p_mat,
        a_mat,
        k,
        objective,
        objective_trace: trace,
        seed: run_seed,
        restarts_used: 1,
        converged,
    })
}

fn attach_pattern_names(m: Matrix, row_names: Option<&[String]>, k: usize) -> Matrix {
    let m = m
        .with_col_names((1..=k).map(|i| format!("pattern_{i}")).collect())
        .expect("k columns");
    match row_names {
        Some(names) => m.with_row_names(names.to_vec()).expect("length checked"),
        None => m,
    }
}

/// Move scale between the factors without changing the product P A^T.
/// Affinity columns that are entirely zero keep scale 1.
pub fn rescale(fp: &FactorPair, mode: RescaleMode) -> Result<FactorPair, FitError> {
    if mode == RescaleMode::None {
        return Ok(fp.clone());
    }
    let n = fp.a_mat.rows();
    let mut scales = Vec::with_capacity(fp.k);
    for kk in 0..fp.k {
        let col = fp.a_mat.column(kk);
        let s = match mode {
            RescaleMode::Max => col.iter().cloned().fold(0.0f64, f64::max),
            RescaleMode::Mean => col.iter().sum::<f64>() / n as f64,
            RescaleMode::None => unreachable!(),
        };
        scales.push(if s == 0.0 { 1.0 } else { s });
    }
    let mut p_new = fp.p_mat.clone();
    let mut a_new = fp.a_mat.clone();
    for kk in 0..fp.k {
        let s = scales[kk];
        for i in 0..p_new.rows() {
            p_new.set(i, kk, fp.p_mat.get(i, kk) * s);
        }
        for j in 0..n {
            a_new.set(j, kk, fp.a_mat.get(j, kk) / s);
        }
    }
    Ok(FactorPair {
        p_mat: p_new,
        a_mat: a_new,
        ..fp.clone()
    })
}

/// Model approximation of one learner's feature column: P * A_row.
pub fn reconstruct(fp: &FactorPair, learner_index: usize) -> Result<Vec<f64>, FitError> {
    let n = fp.a_mat.rows();
    if learner_index >= n {
        return Err(FitError::LearnerOutOfRange { index: learner_index, n });
    }
    let mut out = vec![0.0f64; fp.p_mat.rows()];
    for kk in 0..fp.k {
        let w = fp.a_mat.get(learner_index, kk);
        if w == 0.0 {
            continue;
        }
        for i in 0..out.len() {
            out[i] += w * fp.p_mat.get(i, kk);
        }
    }
    Ok(out)
}

fn column_norm(m: &Matrix, j: usize) -> f64 {
    (0..m.rows()).map(|i| m.get(i, j).powi(2)).sum::<f64>().sqrt()
}

fn cosine(a: &Matrix, i: usize, b: &Matrix, j: usize) -> f64 {
    let na = column_norm(a, i);
    let nb = column_norm(b, j);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = (0..a.rows()).map(|r| a.get(r, i) * b.get(r, j)).sum();
    (dot / (na * nb)).clamp(0.0, 1.0)
}

/// Match `other`'s pattern columns to `reference`'s by maximizing total
/// cosine similarity between P-columns. Pairs contributing zero
/// similarity are re-paired in index order so the result is
/// deterministic.
pub fn align(reference: &FactorPair, other: &FactorPair) -> Result<Alignment, FitError> {
    if reference.k != other.k {
        return Err(FitError::KMismatch {
            reference: reference.k,
            other: other.k,
        });
    }
    if reference.p_mat.rows() != other.p_mat.rows() {
        return Err(FitError::FeatureDimMismatch {
            reference: reference.p_mat.rows(),
            other: other.p_mat.rows(),
        });
    }
    let k = reference.k;
    let score: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| cosine(&reference.p_mat, i, &other.p_mat, j)).collect())
        .collect();
    let mut perm = max_assignment(&score);

    // Zero-similarity pairs carry no signal; pair them lowest index first.
    let mut zero_refs: Vec<usize> = (0..k).filter(|&i| score[i][perm[i]] == 0.0).collect();
    if !zero_refs.is_empty() {
        let mut zero_cols: Vec<usize> = zero_refs.iter().map(|&i| perm[i]).collect();
        zero_refs.sort_unstable();
        zero_cols.sort_unstable();
        for (i, c) in zero_refs.iter().zip(zero_cols) {
            perm[*i] = c;
        }
    }

    let similarity = (0..k).map(|i| score[i][perm[i]]).collect();
    Ok(Alignment { perm, similarity })
}

/// Reorder a fit's pattern and affinity columns per an alignment, so its
/// column k corresponds to the reference's pattern k.
pub fn apply_alignment(fp: &FactorPair, alignment: &Alignment) -> FactorPair {
    let mut p_new = fp.p_mat.clone();
    let mut a_new = fp.a_mat.clone();
    for (dst, &src) in alignment.perm.iter().enumerate() {
        for i in 0..fp.p_mat.rows() {
            p_new.set(i, dst, fp.p_mat.get(i, src));
        }
        for j in 0..fp.a_mat.rows() {
            a_new.set(j, dst, fp.a_mat.get(j, src));
        }
    }
    FactorPair {
        p_mat: p_new,
        a_mat: a_new,
        ..fp.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_from(p: Matrix, a: Matrix) -> FactorPair {
        let k = p.cols();
        FactorPair {
            p_mat: p,
            a_mat: a,
            k,
            objective: 0.0,
            objective_trace: vec![0.0],
            seed: 0,
            restarts_used: 1,
            converged: true,
        }
    }

    #[test]
    fn rank_one_input_is_recovered() {
        // x = p a^T with p = (1,2)^T, a = (3,1)^T.
        let x = Matrix::from_vec(2, 2, vec![3.0, 1.0, 6.0, 2.0]).unwrap();
        let mut cfg = FitConfig::new(1);
        cfg.seed = 7;
        cfg.restarts = 3;
        cfg.tol = 1e-12;
        let fp = fit(&x, &cfg).unwrap();
        assert!(fp.objective <= 1e-12, "objective = {}", fp.objective);
        assert!(fp.p_mat.is_non_negative() && fp.a_mat.is_non_negative());
    }

    #[test]
    fn zero_matrix_fits_exactly() {
        let x = Matrix::zeros(4, 5);
        let cfg = FitConfig::new(2);
        let fp = fit(&x, &cfg).unwrap();
        assert_eq!(fp.objective, 0.0);
        let approx = fp.p_mat.multiply(&fp.a_mat.transpose()).unwrap();
        assert_eq!(approx.frobenius_sq(), 0.0);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let mut x = Matrix::zeros(3, 3);
        x.set(1, 2, -0.5);
        assert!(matches!(
            fit(&x, &FitConfig::new(2)),
            Err(FitError::NegativeEntry { row: 1, col: 2, .. })
        ));
        let x = Matrix::zeros(3, 3);
        assert!(matches!(
            fit(&x, &FitConfig::new(4)),
            Err(FitError::KOutOfRange { k: 4, bound: 3 })
        ));
    }

    #[test]
    fn fit_is_deterministic() {
        let x = Matrix::from_vec(4, 6, (0..24).map(|i| ((i * 13 + 5) % 17) as f64 / 17.0).collect())
            .unwrap();
        let mut cfg = FitConfig::new(2);
        cfg.seed = 99;
        cfg.restarts = 3;
        let a = fit(&x, &cfg).unwrap();
        let b = fit(&x, &cfg).unwrap();
        assert_eq!(a.p_mat.data(), b.p_mat.data());
        assert_eq!(a.a_mat.data(), b.a_mat.data());
        assert_eq!(a.objective_trace, b.objective_trace);
    }

    #[test]
    fn rescale_none_is_identity() {
        let p = Matrix::from_vec(2, 1, vec![1.0, 2.0]).unwrap();
        let a = Matrix::from_vec(3, 1, vec![0.2, 0.4, 0.8]).unwrap();
        let fp = pair_from(p, a);
        let out = rescale(&fp, RescaleMode::None).unwrap();
        assert_eq!(out.p_mat.data(), fp.p_mat.data());
        assert_eq!(out.a_mat.data(), fp.a_mat.data());
    }

    #[test]
    fn rescale_max_divides_by_column_maximum() {
        let p = Matrix::from_vec(2, 1, vec![1.0, 2.0]).unwrap();
        let a = Matrix::from_vec(3, 1, vec![0.2, 0.4, 0.8]).unwrap();
        let out = rescale(&pair_from(p, a), RescaleMode::Max).unwrap();
        assert_eq!(out.a_mat.data(), &[0.25, 0.5, 1.0]);
        assert_eq!(out.p_mat.data(), &[0.8, 1.6]);
    }

    #[test]
    fn rescale_leaves_zero_columns_alone() {
        let p = Matrix::from_vec(2, 2, vec![1.0, 3.0, 2.0, 4.0]).unwrap();
        let a = Matrix::from_vec(2, 2, vec![0.5, 0.0, 1.5, 0.0]).unwrap();
        let out = rescale(&pair_from(p, a), RescaleMode::Max).unwrap();
        assert_eq!(out.a_mat.column(1), vec![0.0, 0.0]);
        assert_eq!(out.p_mat.column(1), vec![3.0, 4.0]);
        assert_eq!(out.dead_patterns(), vec![1]);
    }

    #[test]
    fn rescale_preserves_product() {
        let p = Matrix::from_vec(3, 2, vec![0.1, 0.9, 0.4, 0.2, 0.7, 0.3]).unwrap();
        let a = Matrix::from_vec(4, 2, vec![0.5, 0.1, 0.2, 0.8, 0.9, 0.4, 0.3, 0.6]).unwrap();
        let fp = pair_from(p, a);
        let before = fp.p_mat.multiply(&fp.a_mat.transpose()).unwrap();
        for mode in [RescaleMode::Max, RescaleMode::Mean] {
            let out = rescale(&fp, mode).unwrap();
            let after = out.p_mat.multiply(&out.a_mat.transpose()).unwrap();
            let drift = before.sub(&after).unwrap().frobenius_sq();
            assert!(drift <= 1e-20 * before.frobenius_sq(), "mode {mode}: drift {drift}");
        }
    }

    #[test]
    fn reconstruct_zero_affinities_gives_zero() {
        let p = Matrix::from_vec(3, 2, vec![1.0; 6]).unwrap();
        let a = Matrix::zeros(2, 2);
        let fp = pair_from(p, a);
        assert_eq!(reconstruct(&fp, 0).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn reconstruct_single_pattern_returns_pattern_column() {
        let p = Matrix::from_vec(3, 1, vec![0.3, 0.6, 0.9]).unwrap();
        let a = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let fp = pair_from(p, a);
        assert_eq!(reconstruct(&fp, 0).unwrap(), vec![0.3, 0.6, 0.9]);
    }

    #[test]
    fn reconstruct_matches_loop_oracle_on_eight_patterns() {
        let k = 8;
        let p_rows = 21;
        let mut p = Matrix::zeros(p_rows, k);
        for i in 0..p_rows {
            for j in 0..k {
                p.set(i, j, ((i * 31 + j * 17 + 3) % 23) as f64 / 23.0);
            }
        }
        let affinities = [0.06, 0.3, 0.42, 0.64, 0.19, 0.0, 0.0, 0.21];
        let a = Matrix::from_vec(1, k, affinities.to_vec()).unwrap();
        let fp = pair_from(p.clone(), a);
        let got = reconstruct(&fp, 0).unwrap();
        for i in 0..p_rows {
            let mut expect = 0.0;
            for (j, w) in affinities.iter().enumerate() {
                expect += w * p.get(i, j);
            }
            assert!((got[i] - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn reconstruct_out_of_range_errors() {
        let p = Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let a = Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            reconstruct(&pair_from(p, a), 2),
            Err(FitError::LearnerOutOfRange { index: 2, n: 2 })
        ));
    }

    #[test]
    fn self_alignment_is_identity() {
        let p = Matrix::from_vec(3, 2, vec![0.9, 0.1, 0.2, 0.8, 0.1, 0.4]).unwrap();
        let a = Matrix::from_vec(2, 2, vec![1.0, 0.5, 0.2, 0.7]).unwrap();
        let fp = pair_from(p, a);
        let al = align(&fp, &fp).unwrap();
        assert_eq!(al.perm, vec![0, 1]);
        assert!(al.similarity.iter().all(|&s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn swapped_columns_yield_swap_permutation() {
        let p = Matrix::from_vec(3, 2, vec![0.9, 0.1, 0.2, 0.8, 0.1, 0.4]).unwrap();
        let a = Matrix::from_vec(2, 2, vec![1.0, 0.5, 0.2, 0.7]).unwrap();
        let fp = pair_from(p.clone(), a.clone());
        let p_swapped =
            Matrix::from_vec(3, 2, vec![0.1, 0.9, 0.8, 0.2, 0.4, 0.1]).unwrap();
        let other = pair_from(p_swapped, a);
        let al = align(&fp, &other).unwrap();
        assert_eq!(al.perm, vec![1, 0]);
        let aligned = apply_alignment(&other, &al);
        assert_eq!(aligned.p_mat.data(), p.data());
    }

    #[test]
    fn align_rejects_k_mismatch() {
        let fp1 = pair_from(Matrix::zeros(3, 2), Matrix::zeros(2, 2));
        let fp2 = pair_from(Matrix::zeros(3, 3), Matrix::zeros(2, 3));
        assert!(matches!(align(&fp1, &fp2), Err(FitError::KMismatch { .. })));
    }

    #[test]
    fn zero_columns_match_in_index_order() {
        let p_ref = Matrix::from_vec(2, 3, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let p_other = Matrix::from_vec(2, 3, vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let fp_ref = pair_from(p_ref, Matrix::zeros(1, 3));
        let fp_other = pair_from(p_other, Matrix::zeros(1, 3));
        let al = align(&fp_ref, &fp_other).unwrap();
        assert_eq!(al.perm[0], 2);
        // The two zero reference columns take the remaining other columns
        // lowest index first.
        assert_eq!(&al.perm[1..], &[0, 1]);
        assert_eq!(al.similarity[1], 0.0);
        assert_eq!(al.similarity[2], 0.0);
    }
}
