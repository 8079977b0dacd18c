//! Ground-truth synthetic data: sparse non-negative (P*, A*) with known
//! structure, X = P* A*^T plus optional truncated noise, and an optional
//! planted group effect for exercising the mean-difference test.
//!
//! Each pattern gets a few high-loading "defining" features (uniform
//! (0.5, 1]) against a near-zero background (uniform [0, 0.1]), giving
//! alignment a reliable signal; affinities carry a configurable mass at
//! exactly zero.

use crate::data_io::GroupLabeling;
use crate::matrix::Matrix;
use crate::seeding::rng_from_seed;
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible config: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone)]
pub struct GroupShift {
    /// Pattern whose affinity is shifted (0-based).
    pub pattern: usize,
    /// Shift added to the affected learners' affinity.
    pub delta: f64,
    /// Fraction of learners receiving the shift; they are labeled "f".
    pub fraction: f64,
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub p: usize,
    pub n: usize,
    pub k: usize,
    /// High-loading features per pattern.
    pub defining_per_pattern: usize,
    /// Probability an individual affinity is exactly 0.
    pub zero_affinity_prob: f64,
    pub noise_sd: f64,
    pub seed: u64,
    pub group_shift: Option<GroupShift>,
}

impl SynthConfig {
    pub fn new(p: usize, n: usize, k: usize) -> Self {
        SynthConfig {
            p,
            n,
            k,
            defining_per_pattern: 3,
            zero_affinity_prob: 0.3,
            noise_sd: 0.0,
            seed: 0,
            group_shift: None,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.p == 0 || self.n == 0 || self.k == 0 {
            return Err(SynthError::Infeasible("p, n, k must all be >= 1".into()));
        }
        if self.k > self.p.min(self.n) {
            return Err(SynthError::Infeasible(format!(
                "k = {} exceeds min(p, n) = {}",
                self.k,
                self.p.min(self.n)
            )));
        }
        if self.defining_per_pattern == 0 || self.defining_per_pattern > self.p {
            return Err(SynthError::Infeasible(format!(
                "defining_per_pattern = {} must lie in 1..={}",
                self.defining_per_pattern, self.p
            )));
        }
        if !(0.0..=1.0).contains(&self.zero_affinity_prob) {
            return Err(SynthError::Infeasible(
                "zero_affinity_prob must lie in [0, 1]".into(),
            ));
        }
        if self.noise_sd < 0.0 || !self.noise_sd.is_finite() {
            return Err(SynthError::Infeasible("noise_sd must be >= 0".into()));
        }
        if let Some(gs) = &self.group_shift {
            if gs.pattern >= self.k {
                return Err(SynthError::Infeasible(format!(
                    "group_shift pattern {} out of range (k = {})",
                    gs.pattern, self.k
                )));
            }
            if !(0.0 < gs.fraction && gs.fraction < 1.0) {
                return Err(SynthError::Infeasible(
                    "group_shift fraction must lie in (0, 1)".into(),
                ));
            }
            if gs.delta < 0.0 || !gs.delta.is_finite() {
                return Err(SynthError::Infeasible("group_shift delta must be >= 0".into()));
            }
            if self.n < 4 {
                return Err(SynthError::Infeasible(
                    "group_shift needs at least 4 learners".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct SynthData {
    /// p x n feature matrix, features named f1..fp, learners s1..sn.
    pub x: Matrix,
    /// p x k ground-truth patterns.
    pub p_true: Matrix,
    /// n x k ground-truth affinities (after any planted shift).
    pub a_true: Matrix,
    /// Present iff a group shift was planted; shifted learners are "f".
    pub groups: Option<GroupLabeling>,
}

/// Box-Muller standard normal draw.
fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData, SynthError> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);

    let feature_names: Vec<String> = (1..=cfg.p).map(|i| format!("f{i}")).collect();
    let learner_names: Vec<String> = (1..=cfg.n).map(|i| format!("s{i}")).collect();

    // Patterns: a random defining-feature subset per pattern with high
    // loadings, low background elsewhere.
    let mut p_true = Matrix::zeros(cfg.p, cfg.k);
    let mut feature_pool: Vec<usize> = (0..cfg.p).collect();
    for kk in 0..cfg.k {
        feature_pool.shuffle(&mut rng);
        let defining: Vec<usize> = feature_pool[..cfg.defining_per_pattern].to_vec();
        for i in 0..cfg.p {
            let v = if defining.contains(&i) {
                0.5 + 0.5 * (1.0 - rng.random::<f64>())
            } else {
                0.1 * rng.random::<f64>()
            };
            p_true.set(i, kk, v);
        }
    }

    let mut a_true = Matrix::zeros(cfg.n, cfg.k);
    for j in 0..cfg.n {
        for kk in 0..cfg.k {
            let zero = rng.random::<f64>() < cfg.zero_affinity_prob;
            let v = if zero { 0.0 } else { 1.0 - rng.random::<f64>() };
            a_true.set(j, kk, v);
        }
    }

    // Plant a group effect before forming X.
    let groups = match &cfg.group_shift {
        Some(gs) => {
            let n_shift = ((gs.fraction * cfg.n as f64).round() as usize).clamp(2, cfg.n - 2);
            let mut order: Vec<usize> = (0..cfg.n).collect();
            order.shuffle(&mut rng);
            let shifted: Vec<usize> = order[..n_shift].to_vec();
            for &j in &shifted {
                a_true.set(j, gs.pattern, a_true.get(j, gs.pattern) + gs.delta);
            }
            let mut labels = BTreeMap::new();
            for (j, name) in learner_names.iter().enumerate() {
                let tag = if shifted.contains(&j) { "f" } else { "p" };
                labels.insert(name.clone(), tag.to_string());
            }
            Some(GroupLabeling::new(labels).expect("both groups non-empty by clamp"))
        }
        None => None,
    };

    let p_true = p_true
        .with_row_names(feature_names.clone())
        .expect("p rows")
        .with_col_names((1..=cfg.k).map(|i| format!("pattern_{i}")).collect())
        .expect("k cols");
    let a_true = a_true
        .with_row_names(learner_names.clone())
        .expect("n rows")
        .with_col_names((1..=cfg.k).map(|i| format!("pattern_{i}")).collect())
        .expect("k cols");

    let mut x = p_true
        .multiply(&a_true.transpose())
        .expect("shapes agree by construction");
    if cfg.noise_sd > 0.0 {
        for i in 0..cfg.p {
            for j in 0..cfg.n {
                let v = x.get(i, j) + cfg.noise_sd * normal(&mut rng);
                x.set(i, j, v.max(0.0));
            }
        }
    }
    let x = x
        .with_row_names(feature_names)
        .expect("p rows")
        .with_col_names(learner_names)
        .expect("n cols");

    Ok(SynthData {
        x,
        p_true,
        a_true,
        groups,
    })
}
