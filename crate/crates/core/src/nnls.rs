//! Lawson–Hanson active-set solver for non-negative least squares:
//! minimize ||Cx - d||^2 subject to x >= 0.
//!
//! The passive-set subproblems are solved by Householder QR on the passive
//! columns. Near-zero pivots (below 1e-12 of the largest) are treated as
//! rank deficiency: the offending column's coefficient is held at zero for
//! that step.

use crate::matrix::Matrix;
use thiserror::Error;

/// Relative pivot threshold for rank detection in the QR subsolver.
const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum NnlsError {
    #[error("non-finite entry in {place}")]
    NonFinite { place: &'static str },
    #[error("design matrix is {rows}x{cols} but right-hand side has length {rhs_len}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        rhs_len: usize,
    },
    #[error("design matrix has no columns")]
    EmptyDesign,
    #[error("iteration cap {cap} exceeded (numerical degeneracy); best residual_sq = {:.6e}", best.residual_sq)]
    IterationLimit { cap: usize, best: NnlsSolution },
    #[error("nnls failed on column {column}: {source}")]
    Column {
        column: usize,
        #[source]
        source: Box<NnlsError>,
    },
}

#[derive(Debug, Clone)]
pub struct NnlsSolution {
    /// Non-negative minimizer, length = columns of C.
    pub x: Vec<f64>,
    /// Squared residual ||Cx - d||^2.
    pub residual_sq: f64,
    /// Outer (active-set) iterations used.
    pub iterations: usize,
    /// Indices held at exactly zero.
    pub active_set: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct NnlsOptions {
    /// Relative KKT tolerance; the absolute threshold is
    /// `kkt_tol * (1 + max_i |(C^T d)_i|)`.
    pub kkt_tol: f64,
    /// Outer iteration cap; defaults to 3 * cols when `None`.
    pub max_iter: Option<usize>,
}

impl Default for NnlsOptions {
    fn default() -> Self {
        NnlsOptions {
            kkt_tol: 1e-10,
            max_iter: None,
        }
    }
}

pub fn nnls(c: &Matrix, d: &[f64]) -> Result<NnlsSolution, NnlsError> {
    nnls_with(c, d, &NnlsOptions::default())
}

pub fn nnls_with(c: &Matrix, d: &[f64], opts: &NnlsOptions) -> Result<NnlsSolution, NnlsError> {
    let m = c.rows();
    let n = c.cols();
    if n == 0 {
        return Err(NnlsError::EmptyDesign);
    }
    if d.len() != m {
        return Err(NnlsError::ShapeMismatch {
            rows: m,
            cols: n,
            rhs_len: d.len(),
        });
    }
    if !c.is_finite() {
        return Err(NnlsError::NonFinite { place: "design matrix" });
    }
    if !d.iter().all(|v| v.is_finite()) {
        return Err(NnlsError::NonFinite { place: "right-hand side" });
    }

    // KKT scale: eps = kkt_tol * (1 + ||C^T d||_inf).
    let ctd_inf = (0..n)
        .map(|j| (0..m).map(|i| c.get(i, j) * d[i]).sum::<f64>().abs())
        .fold(0.0f64, f64::max);
    let eps = opts.kkt_tol * (1.0 + ctd_inf);
    let cap = opts.max_iter.unwrap_or(3 * n);

    let mut x = vec![0.0f64; n];
    let mut passive = vec![false; n];
    let mut iterations = 0usize;

    loop {
        // Gradient of the objective is C^T(Cx - d); the dual w = -grad.
        let mut resid = vec![0.0f64; m];
        for i in 0..m {
            let mut cx = 0.0;
            for j in 0..n {
                if x[j] != 0.0 {
                    cx += c.get(i, j) * x[j];
                }
            }
            resid[i] = d[i] - cx;
        }
        let w: Vec<f64> = (0..n)
            .map(|j| (0..m).map(|i| c.get(i, j) * resid[i]).sum())
            .collect();

        // Pick the most positive dual among active coordinates, lowest
        // index on ties.
        let mut enter: Option<usize> = None;
        for j in 0..n {
            if !passive[j] && w[j] > eps {
                match enter {
                    Some(t) if w[j] <= w[t] => {}
                    _ => enter = Some(j),
                }
            }
        }
        let Some(t) = enter else {
            return Ok(finish(c, d, &x, &passive, iterations));
        };

        if iterations >= cap {
            return Err(NnlsError::IterationLimit {
                cap,
                best: finish(c, d, &x, &passive, iterations),
            });
        }
        iterations += 1;
        passive[t] = true;

        // Inner loop: restore feasibility of the passive-set LS solution.
        let mut inner_guard = 0usize;
        loop {
            let z = passive_ls(c, d, &passive);
            let infeasible: Vec<usize> = (0..n)
                .filter(|&j| passive[j] && z[j] <= 0.0)
                .collect();
            if infeasible.is_empty() {
                for j in 0..n {
                    x[j] = if passive[j] { z[j] } else { 0.0 };
                }
                break;
            }

            // Step toward z until the first passive coordinate hits zero.
            let mut alpha = f64::INFINITY;
            let mut leaving = usize::MAX;
            for &j in &infeasible {
                let denom = x[j] - z[j];
                let a = if denom > 0.0 { x[j] / denom } else { 0.0 };
                if a < alpha {
                    alpha = a;
                    leaving = j;
                }
            }
            for j in 0..n {
                if passive[j] {
                    x[j] += alpha * (z[j] - x[j]);
                }
            }
            for j in 0..n {
                if passive[j] && (j == leaving || x[j] <= 0.0) {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }

            inner_guard += 1;
            if inner_guard > 3 * n + 10 {
                return Err(NnlsError::IterationLimit {
                    cap,
                    best: finish(c, d, &x, &passive, iterations),
                });
            }
        }
    }
}

/// Solve each column of `d` as an independent NNLS problem against `c`.
/// Returns Z with shape (c.cols x d.cols) whose column j solves
/// min ||C z - d_j||^2, z >= 0.
pub fn nnls_multi(c: &Matrix, d: &Matrix) -> Result<Matrix, NnlsError> {
    if d.rows() != c.rows() {
        return Err(NnlsError::ShapeMismatch {
            rows: c.rows(),
            cols: c.cols(),
            rhs_len: d.rows(),
        });
    }
    let mut z = Matrix::zeros(c.cols(), d.cols());
    for j in 0..d.cols() {
        let col = d.column(j);
        let sol = nnls(c, &col).map_err(|e| NnlsError::Column {
            column: j,
            source: Box::new(e),
        })?;
        for i in 0..c.cols() {
            z.set(i, j, sol.x[i]);
        }
    }
    Ok(z)
}

fn finish(c: &Matrix, d: &[f64], x: &[f64], passive: &[bool], iterations: usize) -> NnlsSolution {
    let m = c.rows();
    let n = c.cols();
    let mut residual_sq = 0.0;
    for i in 0..m {
        let mut cx = 0.0;
        for j in 0..n {
            if x[j] != 0.0 {
                cx += c.get(i, j) * x[j];
            }
        }
        let r = cx - d[i];
        residual_sq += r * r;
    }
    let active_set = (0..n).filter(|&j| !passive[j]).collect();
    NnlsSolution {
        x: x.to_vec(),
        residual_sq,
        iterations,
        active_set,
    }
}

/// Unconstrained least squares on the passive columns via Householder QR.
/// Returns a full-length vector with zeros on active coordinates; columns
/// whose pivot falls below `PIVOT_TOL` of the largest pivot also get zero.
fn passive_ls(c: &Matrix, d: &[f64], passive: &[bool]) -> Vec<f64> {
    let m = c.rows();
    let cols: Vec<usize> = (0..c.cols()).filter(|&j| passive[j]).collect();
    let k = cols.len();
    let mut z = vec![0.0f64; c.cols()];
    if k == 0 {
        return z;
    }

    // Working copy [A | b], column-major A.
    let mut a: Vec<Vec<f64>> = cols
        .iter()
        .map(|&j| (0..m).map(|i| c.get(i, j)).collect())
        .collect();
    let mut b: Vec<f64> = d.to_vec();

    let steps = k.min(m);
    let mut diag = vec![0.0f64; steps];
    for p in 0..steps {
        // Householder vector for column p, rows p..m.
        let norm = a[p][p..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            diag[p] = 0.0;
            continue;
        }
        let alpha = if a[p][p] >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[p][p..].to_vec();
        v[0] -= alpha;
        let vtv = v.iter().map(|x| x * x).sum::<f64>();
        diag[p] = alpha;
        a[p][p] = alpha;
        for r in p + 1..m {
            a[p][r] = 0.0;
        }
        if vtv > 0.0 {
            for q in p + 1..k {
                let dot: f64 = v.iter().zip(&a[q][p..]).map(|(x, y)| x * y).sum();
                let f = 2.0 * dot / vtv;
                for (r, vr) in v.iter().enumerate() {
                    a[q][p + r] -= f * vr;
                }
            }
            let dot: f64 = v.iter().zip(&b[p..]).map(|(x, y)| x * y).sum();
            let f = 2.0 * dot / vtv;
            for (r, vr) in v.iter().enumerate() {
                b[p + r] -= f * vr;
            }
        }
    }

    let max_pivot = diag.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    let threshold = PIVOT_TOL * max_pivot;

    // Back substitution; rank-deficient columns stay zero.
    let mut y = vec![0.0f64; k];
    for p in (0..steps).rev() {
        if diag[p].abs() <= threshold {
            y[p] = 0.0;
            continue;
        }
        let mut acc = b[p];
        for q in p + 1..steps {
            acc -= a[q][p] * y[q];
        }
        y[p] = acc / diag[p];
    }
    for (idx, &j) in cols.iter().enumerate() {
        if idx < steps {
            z[j] = y[idx];
        }
    }
    z
}
