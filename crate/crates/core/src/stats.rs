//! Nonparametric bootstrap over learners: pointwise confidence intervals
//! for pattern coefficients, per-group affinity summaries, and the
//! three-hypothesis-set mean-difference test.
//!
//! Resampling is over learners (columns); features are fixed
//! instrumentation. Every replication draws its resample from a seed
//! derived from (master seed, replication index, attempt), so runs are
//! reproducible and replications can execute in parallel with
//! order-independent results. Refit-mode replications reuse the fit
//! configuration verbatim; identical resamples therefore produce
//! bitwise-identical factor pairs.

use crate::data_io::GroupLabeling;
use crate::matrix::{Matrix, MatrixError};
use crate::nmf::{align, apply_alignment, fit, FactorPair, FitConfig, FitError};
use crate::nnls::nnls_multi;
use crate::seeding::{derive_seed2, rng_from_seed};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

/// Retry budget for failed bootstrap replications.
const MAX_REPLICATION_ATTEMPTS: usize = 5;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("empty value list")]
    EmptyValues,
    #[error("quantile level {0} outside [0, 1]")]
    BadQuantileLevel(f64),
    #[error("invalid bootstrap config: {0}")]
    BadConfig(String),
    #[error("group '{tag}' has {size} member(s); need at least {need}")]
    GroupTooSmall { tag: String, size: usize, need: usize },
    #[error("affinity matrix has no learner ids (row names); cannot join with groups")]
    MissingLearnerIds,
    #[error("learner '{id}' has no group label")]
    UnlabeledLearner { id: String },
    #[error("bootstrap replication {replication} failed after {attempts} attempts: {message}")]
    ReplicationFailed {
        replication: usize,
        attempts: usize,
        message: String,
    },
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Debug, Clone)]
pub struct BootstrapConfig {
    /// Number of bootstrap replications.
    pub b: usize,
    /// Confidence level in (0, 1).
    pub level: f64,
    pub seed: u64,
    /// true: re-estimate (P_b, A_b) per replication; false: fast mode on
    /// the reference affinities.
    pub refit: bool,
}

impl BootstrapConfig {
    pub fn new(b: usize) -> Self {
        BootstrapConfig {
            b,
            level: 0.99,
            seed: 0,
            refit: true,
        }
    }

    fn validate(&self) -> Result<(), StatsError> {
        if self.b < 1 {
            return Err(StatsError::BadConfig("b must be >= 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(StatsError::BadConfig(format!(
                "level must lie in (0, 1), got {}",
                self.level
            )));
        }
        Ok(())
    }
}

/// Percentile bootstrap intervals for every (feature, pattern)
/// coefficient of P.
#[derive(Debug, Clone)]
pub struct CoefficientCI {
    pub feature_names: Vec<String>,
    pub pattern_names: Vec<String>,
    /// p x K bootstrap means.
    pub boot_mean: Matrix,
    /// p x K lower percentile bounds.
    pub lower: Matrix,
    /// p x K upper percentile bounds.
    pub upper: Matrix,
    pub level: f64,
    pub replications: usize,
}

#[derive(Debug, Clone)]
pub struct GroupStats {
    /// Mean affinity of the first (sorted-first tag) group.
    pub mean_first: f64,
    /// Mean affinity of the second group.
    pub mean_second: f64,
    /// sqrt(((n1-1)s1^2 + (n2-1)s2^2) / (n1+n2-2)).
    pub pooled_sd: f64,
}

#[derive(Debug, Clone)]
pub struct PatternSummary {
    pub q25: f64,
    pub mean: f64,
    pub q50: f64,
    pub q75: f64,
    pub group: Option<GroupStats>,
}

#[derive(Debug, Clone)]
pub struct AffinitySummary {
    pub pattern_names: Vec<String>,
    pub patterns: Vec<PatternSummary>,
    /// (first, second) group tags when group statistics are present.
    pub tags: Option<(String, String)>,
}

#[derive(Debug, Clone)]
pub struct PatternTest {
    /// Observed mean difference, first group minus second group.
    pub observed_diff: f64,
    pub p_two_sided: f64,
    pub p_greater: f64,
    pub p_less: f64,
}

#[derive(Debug, Clone)]
pub struct TestReport {
    pub pattern_names: Vec<String>,
    pub patterns: Vec<PatternTest>,
    /// (first, second) group tags; `observed_diff` is first minus second.
    pub tags: (String, String),
    pub replications: usize,
}

/// Order statistic with linear interpolation at rank h = (n-1)p.
pub fn empirical_quantile(values: &[f64], p: f64) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyValues);
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(StatsError::BadQuantileLevel(p));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 || lo + 1 >= n {
        Ok(sorted[lo])
    } else {
        Ok(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

fn pattern_names_of(a_mat: &Matrix) -> Vec<String> {
    match a_mat.col_names() {
        Some(names) => names.to_vec(),
        None => (1..=a_mat.cols()).map(|i| format!("pattern_{i}")).collect(),
    }
}

/// Per-pattern quartiles and mean of the affinities, with per-group
/// means and pooled standard deviations when a labeling is supplied.
pub fn summarize_affinities(
    a_mat: &Matrix,
    groups: Option<&GroupLabeling>,
) -> Result<AffinitySummary, StatsError> {
    let split = match groups {
        Some(g) => Some(split_by_group(a_mat, g)?),
        None => None,
    };
    let mut patterns = Vec::with_capacity(a_mat.cols());
    for k in 0..a_mat.cols() {
        let col = a_mat.column(k);
        let group = match &split {
            Some((first_rows, second_rows, g)) => {
                let (t1, t2) = g.tags();
                if first_rows.len() < 2 {
                    return Err(StatsError::GroupTooSmall {
                        tag: t1.to_string(),
                        size: first_rows.len(),
                        need: 2,
                    });
                }
                if second_rows.len() < 2 {
                    return Err(StatsError::GroupTooSmall {
                        tag: t2.to_string(),
                        size: second_rows.len(),
                        need: 2,
                    });
                }
                let v1: Vec<f64> = first_rows.iter().map(|&i| a_mat.get(i, k)).collect();
                let v2: Vec<f64> = second_rows.iter().map(|&i| a_mat.get(i, k)).collect();
                let (n1, n2) = (v1.len() as f64, v2.len() as f64);
                let pooled =
                    (((n1 - 1.0) * sample_variance(&v1) + (n2 - 1.0) * sample_variance(&v2))
                        / (n1 + n2 - 2.0))
                        .sqrt();
                Some(GroupStats {
                    mean_first: mean(&v1),
                    mean_second: mean(&v2),
                    pooled_sd: pooled,
                })
            }
            None => None,
        };
        patterns.push(PatternSummary {
            q25: empirical_quantile(&col, 0.25)?,
            mean: mean(&col),
            q50: empirical_quantile(&col, 0.5)?,
            q75: empirical_quantile(&col, 0.75)?,
            group,
        });
    }
    Ok(AffinitySummary {
        pattern_names: pattern_names_of(a_mat),
        patterns,
        tags: groups.map(|g| {
            let (a, b) = g.tags();
            (a.to_string(), b.to_string())
        }),
    })
}

/// Group means and pooled standard deviations per pattern.
pub fn group_summary(
    a_mat: &Matrix,
    groups: &GroupLabeling,
) -> Result<AffinitySummary, StatsError> {
    summarize_affinities(a_mat, Some(groups))
}

fn split_by_group<'g>(
    a_mat: &Matrix,
    groups: &'g GroupLabeling,
) -> Result<(Vec<usize>, Vec<usize>, &'g GroupLabeling), StatsError> {
    let ids = a_mat.row_names().ok_or(StatsError::MissingLearnerIds)?;
    let (first, _) = groups.tags();
    let mut first_rows = Vec::new();
    let mut second_rows = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        match groups.tag_of(id) {
            Some(tag) if tag == first => first_rows.push(i),
            Some(_) => second_rows.push(i),
            None => return Err(StatsError::UnlabeledLearner { id: id.clone() }),
        }
    }
    Ok((first_rows, second_rows, groups))
}

fn resample_indices(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// One replication's aligned factor pair.
fn replicate_fit(
    x: &Matrix,
    indices: &[usize],
    cfg_fit: &FitConfig,
    reference: &FactorPair,
) -> Result<FactorPair, StatsError> {
    let xb = x.select_columns(indices);
    let fitted = fit(&xb, cfg_fit)?;
    let alignment = align(reference, &fitted)?;
    Ok(apply_alignment(&fitted, &alignment))
}

/// Fast-mode replication: keep the reference affinities for the
/// resampled learners fixed and re-solve only the patterns.
fn replicate_fast(
    x: &Matrix,
    indices: &[usize],
    reference: &FactorPair,
) -> Result<FactorPair, StatsError> {
    let xb = x.select_columns(indices);
    let a_rows: Vec<Vec<f64>> = indices
        .iter()
        .map(|&j| reference.a_mat.row(j).to_vec())
        .collect();
    let a_b = Matrix::from_rows(&a_rows)?;
    let pt = nnls_multi(&a_b, &xb.transpose()).map_err(FitError::from)?;
    let p_b = pt.transpose();
    Ok(FactorPair {
        p_mat: p_b,
        a_mat: a_b,
        ..reference.clone()
    })
}

/// Percentile bootstrap confidence intervals for the pattern
/// coefficients of P, aligned to `reference`.
pub fn bootstrap_ci(
    x: &Matrix,
    cfg_fit: &FitConfig,
    cfg_boot: &BootstrapConfig,
    reference: &FactorPair,
) -> Result<CoefficientCI, StatsError> {
    cfg_boot.validate()?;
    let n = x.cols();
    let p = x.rows();
    let k = reference.k;

    let replicated: Result<Vec<Matrix>, StatsError> = (1..=cfg_boot.b)
        .into_par_iter()
        .map(|b| {
            let mut last_err = String::new();
            for attempt in 0..MAX_REPLICATION_ATTEMPTS {
                let seed = derive_seed2(cfg_boot.seed, b as u64, attempt as u64);
                let mut rng = rng_from_seed(seed);
                let indices = resample_indices(&mut rng, n);
                let result = if cfg_boot.refit {
                    replicate_fit(x, &indices, cfg_fit, reference)
                } else {
                    replicate_fast(x, &indices, reference)
                };
                match result {
                    Ok(fp) => return Ok(fp.p_mat),
                    Err(e) => last_err = e.to_string(),
                }
            }
            Err(StatsError::ReplicationFailed {
                replication: b,
                attempts: MAX_REPLICATION_ATTEMPTS,
                message: last_err,
            })
        })
        .collect();
    let replicated = replicated?;

    let alpha = 1.0 - cfg_boot.level;
    let mut boot_mean = Matrix::zeros(p, k);
    let mut lower = Matrix::zeros(p, k);
    let mut upper = Matrix::zeros(p, k);
    let mut values = Vec::with_capacity(cfg_boot.b);
    for i in 0..p {
        for j in 0..k {
            values.clear();
            values.extend(replicated.iter().map(|m| m.get(i, j)));
            boot_mean.set(i, j, mean(&values));
            lower.set(i, j, empirical_quantile(&values, alpha / 2.0)?);
            upper.set(i, j, empirical_quantile(&values, 1.0 - alpha / 2.0)?);
        }
    }

    let feature_names = match reference.p_mat.row_names() {
        Some(names) => names.to_vec(),
        None => (1..=p).map(|i| format!("f{i}")).collect(),
    };
    Ok(CoefficientCI {
        feature_names,
        pattern_names: pattern_names_of(&reference.a_mat),
        boot_mean,
        lower,
        upper,
        level: cfg_boot.level,
        replications: cfg_boot.b,
    })
}

/// Bootstrap-permutation test of per-pattern group mean differences.
///
/// The observed statistic comes from the reference fit. Each replication
/// resamples learners with replacement, refits (refit mode) or reuses
/// the reference affinities (fast mode), then randomly permutes the
/// resample's group labels before computing the mean difference.
/// P-values use the add-one convention (1 + count) / (B + 1):
/// hypothesis set 1 is two-sided, set 2 tests mean_first > mean_second,
/// set 3 the reverse.
pub fn group_test(
    x: Option<&Matrix>,
    reference: &FactorPair,
    groups: &GroupLabeling,
    cfg_fit: &FitConfig,
    cfg_boot: &BootstrapConfig,
) -> Result<TestReport, StatsError> {
    cfg_boot.validate()?;
    if cfg_boot.refit && x.is_none() {
        return Err(StatsError::BadConfig(
            "refit mode needs the data matrix".into(),
        ));
    }
    let k = reference.k;
    let n = reference.a_mat.rows();
    let (first_rows, second_rows, _) = split_by_group(&reference.a_mat, groups)?;
    let (t1, t2) = groups.tags();
    for (tag, rows) in [(t1, &first_rows), (t2, &second_rows)] {
        if rows.is_empty() {
            return Err(StatsError::GroupTooSmall {
                tag: tag.to_string(),
                size: 0,
                need: 1,
            });
        }
    }

    // true = first group.
    let mut is_first = vec![false; n];
    for &i in &first_rows {
        is_first[i] = true;
    }

    let observed: Vec<f64> = (0..k)
        .map(|kk| {
            let m1 = mean(&first_rows.iter().map(|&i| reference.a_mat.get(i, kk)).collect::<Vec<_>>());
            let m2 = mean(&second_rows.iter().map(|&i| reference.a_mat.get(i, kk)).collect::<Vec<_>>());
            m1 - m2
        })
        .collect();

    let null_diffs: Result<Vec<Vec<f64>>, StatsError> = (1..=cfg_boot.b)
        .into_par_iter()
        .map(|b| {
            let mut last_err = String::from("degenerate resample");
            for attempt in 0..MAX_REPLICATION_ATTEMPTS {
                let seed = derive_seed2(cfg_boot.seed, b as u64, attempt as u64);
                let mut rng = rng_from_seed(seed);
                let indices = resample_indices(&mut rng, n);

                // Labels of the resampled learners, then permuted; the
                // permutation preserves the resample's group sizes.
                let mut labels: Vec<bool> = indices.iter().map(|&i| is_first[i]).collect();
                let n_first = labels.iter().filter(|&&v| v).count();
                if n_first == 0 || n_first == n {
                    continue; // resample missed a group entirely; redraw
                }
                labels.shuffle(&mut rng);

                let a_b: Matrix = if cfg_boot.refit {
                    let fp = match replicate_fit(x.expect("checked"), &indices, cfg_fit, reference) {
                        Ok(fp) => fp,
                        Err(e) => {
                            last_err = e.to_string();
                            continue;
                        }
                    };
                    fp.a_mat
                } else {
                    let rows: Vec<Vec<f64>> = indices
                        .iter()
                        .map(|&j| reference.a_mat.row(j).to_vec())
                        .collect();
                    Matrix::from_rows(&rows)?
                };

                let diffs = (0..k)
                    .map(|kk| {
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for (row, &lab) in labels.iter().enumerate() {
                            let v = a_b.get(row, kk);
                            if lab {
                                s1 += v;
                            } else {
                                s2 += v;
                            }
                        }
                        s1 / n_first as f64 - s2 / (n - n_first) as f64
                    })
                    .collect();
                return Ok(diffs);
            }
            Err(StatsError::ReplicationFailed {
                replication: b,
                attempts: MAX_REPLICATION_ATTEMPTS,
                message: last_err,
            })
        })
        .collect();
    let null_diffs = null_diffs?;

    let bf = (cfg_boot.b + 1) as f64;
    let patterns = (0..k)
        .map(|kk| {
            let d_obs = observed[kk];
            let mut ge = 0usize;
            let mut le = 0usize;
            let mut abs_ge = 0usize;
            for d in null_diffs.iter().map(|row| row[kk]) {
                if d >= d_obs {
                    ge += 1;
                }
                if d <= d_obs {
                    le += 1;
                }
                if d.abs() >= d_obs.abs() {
                    abs_ge += 1;
                }
            }
            PatternTest {
                observed_diff: d_obs,
                p_two_sided: (1 + abs_ge) as f64 / bf,
                p_greater: (1 + ge) as f64 / bf,
                p_less: (1 + le) as f64 / bf,
            }
        })
        .collect();

    Ok(TestReport {
        pattern_names: pattern_names_of(&reference.a_mat),
        patterns,
        tags: (t1.to_string(), t2.to_string()),
        replications: cfg_boot.b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn labeling(pairs: &[(&str, &str)]) -> GroupLabeling {
        let map: BTreeMap<String, String> = pairs
            .iter()
            .map(|(id, tag)| (id.to_string(), tag.to_string()))
            .collect();
        GroupLabeling::new(map).unwrap()
    }

    fn affinities(rows: &[Vec<f64>], ids: &[&str]) -> Matrix {
        Matrix::from_rows(rows)
            .unwrap()
            .with_row_names(ids.iter().map(|s| s.to_string()).collect())
            .unwrap()
    }

    #[test]
    fn quantile_examples() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(empirical_quantile(&v, 0.5).unwrap(), 3.0);
        assert_eq!(empirical_quantile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(empirical_quantile(&v, 1.0).unwrap(), 5.0);
        assert!(empirical_quantile(&[], 0.5).is_err());
        assert!(empirical_quantile(&v, 1.5).is_err());
    }

    #[test]
    fn quantile_interpolates() {
        // h = 3 * 0.25 = 0.75 between 1 and 2.
        let v = [1.0, 2.0, 3.0, 4.0];
        assert!((empirical_quantile(&v, 0.25).unwrap() - 1.75).abs() < 1e-12);
    }

    #[test]
    fn quantile_monte_carlo_sanity() {
        let mut rng = rng_from_seed(5);
        let draws: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let q = empirical_quantile(&draws, 0.25).unwrap();
        assert!((q - 0.25).abs() < 0.05, "q25 = {q}");
    }

    #[test]
    fn group_summary_constant_groups() {
        let a = affinities(
            &[vec![2.0], vec![2.0], vec![2.0], vec![2.0]],
            &["s1", "s2", "s3", "s4"],
        );
        let g = labeling(&[("s1", "f"), ("s2", "f"), ("s3", "p"), ("s4", "p")]);
        let s = group_summary(&a, &g).unwrap();
        let gs = s.patterns[0].group.as_ref().unwrap();
        assert_eq!(gs.mean_first, 2.0);
        assert_eq!(gs.mean_second, 2.0);
        assert_eq!(gs.pooled_sd, 0.0);
    }

    #[test]
    fn pooled_sd_reduces_to_common_sd() {
        // Both groups have sample variance 1.
        let a = affinities(
            &[vec![0.0], vec![2.0], vec![5.0], vec![7.0]],
            &["s1", "s2", "s3", "s4"],
        );
        let g = labeling(&[("s1", "f"), ("s2", "f"), ("s3", "p"), ("s4", "p")]);
        let s = group_summary(&a, &g).unwrap();
        let gs = s.patterns[0].group.as_ref().unwrap();
        assert!((gs.pooled_sd - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn group_summary_hand_computed_fixture() {
        let a = affinities(
            &[
                vec![0.1],
                vec![0.3],
                vec![0.2],
                vec![0.6],
                vec![0.8],
                vec![0.7],
            ],
            &["s1", "s2", "s3", "s4", "s5", "s6"],
        );
        let g = labeling(&[
            ("s1", "f"),
            ("s2", "f"),
            ("s3", "f"),
            ("s4", "p"),
            ("s5", "p"),
            ("s6", "p"),
        ]);
        let s = group_summary(&a, &g).unwrap();
        let gs = s.patterns[0].group.as_ref().unwrap();
        assert!((gs.mean_first - 0.2).abs() < 1e-12);
        assert!((gs.mean_second - 0.7).abs() < 1e-12);
        // s_f^2 = s_p^2 = 0.01, pooled sd = 0.1.
        assert!((gs.pooled_sd - 0.1).abs() < 1e-12);
        assert!((s.patterns[0].q50 - 0.45).abs() < 1e-12);
    }

    #[test]
    fn group_smaller_than_two_is_rejected() {
        let a = affinities(&[vec![0.1], vec![0.2], vec![0.3]], &["s1", "s2", "s3"]);
        let g = labeling(&[("s1", "f"), ("s2", "p"), ("s3", "p")]);
        assert!(matches!(
            group_summary(&a, &g),
            Err(StatsError::GroupTooSmall { need: 2, .. })
        ));
    }

    #[test]
    fn summary_without_groups_has_no_group_stats() {
        let a = affinities(&[vec![1.0, 2.0], vec![3.0, 4.0]], &["s1", "s2"]);
        let s = summarize_affinities(&a, None).unwrap();
        assert!(s.patterns[0].group.is_none());
        assert_eq!(s.patterns.len(), 2);
        assert!((s.patterns[1].mean - 3.0).abs() < 1e-12);
    }

    fn small_reference(x: &Matrix, cfg: &FitConfig) -> FactorPair {
        fit(x, cfg).unwrap()
    }

    #[test]
    fn bootstrap_ci_single_replication_degenerates() {
        let x = Matrix::from_vec(3, 5, (0..15).map(|i| ((i * 7 + 2) % 11) as f64 / 11.0 + 0.1).collect())
            .unwrap();
        let mut cfg = FitConfig::new(2);
        cfg.restarts = 2;
        cfg.seed = 3;
        let reference = small_reference(&x, &cfg);
        let mut boot = BootstrapConfig::new(1);
        boot.seed = 11;
        let ci = bootstrap_ci(&x, &cfg, &boot, &reference).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(ci.lower.get(i, j), ci.upper.get(i, j));
                assert_eq!(ci.lower.get(i, j), ci.boot_mean.get(i, j));
            }
        }
    }

    #[test]
    fn identical_learner_columns_give_zero_width_intervals() {
        let col = [0.9, 0.3, 0.5];
        let mut x = Matrix::zeros(3, 8);
        for j in 0..8 {
            for i in 0..3 {
                x.set(i, j, col[i]);
            }
        }
        let mut cfg = FitConfig::new(1);
        cfg.restarts = 2;
        let reference = small_reference(&x, &cfg);
        let mut boot = BootstrapConfig::new(25);
        boot.seed = 7;
        let ci = bootstrap_ci(&x, &cfg, &boot, &reference).unwrap();
        for i in 0..3 {
            assert_eq!(ci.lower.get(i, 0), ci.upper.get(i, 0));
        }
    }

    #[test]
    fn ci_lower_bounds_are_non_negative() {
        let x = Matrix::from_vec(4, 10, (0..40).map(|i| ((i * 13 + 1) % 19) as f64 / 19.0).collect())
            .unwrap();
        let mut cfg = FitConfig::new(2);
        cfg.restarts = 2;
        let reference = small_reference(&x, &cfg);
        let mut boot = BootstrapConfig::new(30);
        boot.seed = 2;
        boot.refit = false;
        let ci = bootstrap_ci(&x, &cfg, &boot, &reference).unwrap();
        for i in 0..4 {
            for j in 0..2 {
                assert!(ci.lower.get(i, j) >= 0.0);
                assert!(ci.lower.get(i, j) <= ci.upper.get(i, j));
            }
        }
    }

    fn ids(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("s{i}")).collect()
    }

    fn fp_from_affinities(a: Matrix) -> FactorPair {
        let k = a.cols();
        let p = Matrix::from_vec(2, k, vec![1.0; 2 * k]).unwrap();
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
    fn identical_affinities_give_p_two_of_one() {
        let n = 12;
        let a = Matrix::from_vec(n, 1, vec![0.5; n])
            .unwrap()
            .with_row_names(ids(n))
            .unwrap();
        let reference = fp_from_affinities(a);
        let pairs: Vec<(String, String)> = (1..=n)
            .map(|i| (format!("s{i}"), if i <= 4 { "f" } else { "p" }.to_string()))
            .collect();
        let groups =
            GroupLabeling::new(pairs.into_iter().collect::<BTreeMap<_, _>>()).unwrap();
        let mut boot = BootstrapConfig::new(99);
        boot.refit = false;
        let report = group_test(None, &reference, &groups, &FitConfig::new(1), &boot).unwrap();
        assert_eq!(report.patterns[0].observed_diff, 0.0);
        assert_eq!(report.patterns[0].p_two_sided, 1.0);
    }

    #[test]
    fn extreme_statistic_reaches_minimal_p() {
        // First group at 1.0, second at 0.0, strongly separated.
        let n = 24;
        let vals: Vec<f64> = (0..n).map(|i| if i < 12 { 1.0 } else { 0.0 }).collect();
        let a = Matrix::from_vec(n, 1, vals)
            .unwrap()
            .with_row_names(ids(n))
            .unwrap();
        let reference = fp_from_affinities(a);
        let pairs: Vec<(String, String)> = (1..=n)
            .map(|i| (format!("s{i}"), if i <= 12 { "f" } else { "p" }.to_string()))
            .collect();
        let groups =
            GroupLabeling::new(pairs.into_iter().collect::<BTreeMap<_, _>>()).unwrap();
        let mut boot = BootstrapConfig::new(200);
        boot.refit = false;
        boot.seed = 31;
        let report = group_test(None, &reference, &groups, &FitConfig::new(1), &boot).unwrap();
        let t = &report.patterns[0];
        assert_eq!(t.observed_diff, 1.0);
        assert_eq!(t.p_two_sided, 1.0 / 201.0);
        assert_eq!(t.p_greater, 1.0 / 201.0);
    }

    #[test]
    fn p_value_structural_identities() {
        let n = 20;
        let mut rng = rng_from_seed(8);
        let vals: Vec<f64> = (0..n * 2).map(|_| rng.random::<f64>()).collect();
        let a = Matrix::from_vec(n, 2, vals)
            .unwrap()
            .with_row_names(ids(n))
            .unwrap();
        let reference = fp_from_affinities(a);
        let pairs: Vec<(String, String)> = (1..=n)
            .map(|i| (format!("s{i}"), if i % 3 == 0 { "f" } else { "p" }.to_string()))
            .collect();
        let groups =
            GroupLabeling::new(pairs.into_iter().collect::<BTreeMap<_, _>>()).unwrap();
        let b = 150;
        let mut boot = BootstrapConfig::new(b);
        boot.refit = false;
        let report = group_test(None, &reference, &groups, &FitConfig::new(2), &boot).unwrap();
        let inv = 1.0 / (b + 1) as f64;
        for t in &report.patterns {
            assert!(t.p_two_sided >= inv && t.p_two_sided <= 1.0);
            assert!(t.p_greater >= inv && t.p_greater <= 1.0);
            assert!(t.p_less >= inv && t.p_less <= 1.0);
            assert!(t.p_greater + t.p_less >= 1.0 + inv - 1e-12);
        }
    }

    #[test]
    fn label_swap_negates_statistic_and_swaps_one_sided_p() {
        let n = 16;
        let mut rng = rng_from_seed(77);
        let vals: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let a = Matrix::from_vec(n, 1, vals)
            .unwrap()
            .with_row_names(ids(n))
            .unwrap();
        let reference = fp_from_affinities(a);
        let make = |swap: bool| {
            let pairs: Vec<(String, String)> = (1..=n)
                .map(|i| {
                    let first = (i <= 6) ^ swap;
                    (format!("s{i}"), if first { "f" } else { "p" }.to_string())
                })
                .collect();
            GroupLabeling::new(pairs.into_iter().collect::<BTreeMap<_, _>>()).unwrap()
        };
        let mut boot = BootstrapConfig::new(120);
        boot.refit = false;
        boot.seed = 5;
        let r1 = group_test(None, &reference, &make(false), &FitConfig::new(1), &boot).unwrap();
        let r2 = group_test(None, &reference, &make(true), &FitConfig::new(1), &boot).unwrap();
        let (a1, a2) = (&r1.patterns[0], &r2.patterns[0]);
        assert!((a1.observed_diff + a2.observed_diff).abs() < 1e-12);
        assert_eq!(a1.p_greater, a2.p_less);
        assert_eq!(a1.p_less, a2.p_greater);
        assert_eq!(a1.p_two_sided, a2.p_two_sided);
    }

    #[test]
    fn refit_mode_requires_data() {
        let a = Matrix::from_vec(4, 1, vec![0.1, 0.2, 0.3, 0.4])
            .unwrap()
            .with_row_names(ids(4))
            .unwrap();
        let reference = fp_from_affinities(a);
        let groups = labeling(&[("s1", "f"), ("s2", "f"), ("s3", "p"), ("s4", "p")]);
        let boot = BootstrapConfig::new(10);
        assert!(matches!(
            group_test(None, &reference, &groups, &FitConfig::new(1), &boot),
            Err(StatsError::BadConfig(_))
        ));
    }
}
