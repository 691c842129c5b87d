//! Linear and logistic regression on hand-built network controls with
//! polynomial sieves.

use crate::autodiff::{sigmoid, softplus, Matrix};
use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::linalg::cholesky_solve;

/// Diagonal jitter added to the (column-scaled) normal equations.
pub const RIDGE_JITTER: f64 = 1e-8;
/// Sup-norm tolerance on the IRLS coefficient step.
pub const IRLS_TOL: f64 = 1e-8;
pub const IRLS_MAX_ITER: usize = 100;

/// Rows `W_i = (X_i, mean_{j ∈ nbr(i)} X_j, degree(i))`.
pub fn build_controls(g: &Graph, x: &[f64]) -> Result<Matrix> {
    if x.len() != g.n() {
        return Err(invalid("covariate length differs from n"));
    }
    let means = g.neighbor_means(x);
    let mut w = Matrix::zeros(g.n(), 3);
    for i in 0..g.n() {
        w.row_mut(i).copy_from_slice(&[x[i], means[i], g.degree(i) as f64]);
    }
    Ok(w)
}

/// Exponent vectors of all monomials of total degree ≤ `order` in `k`
/// variables, graded by degree and lexicographic within a degree. The first
/// entry is the intercept.
pub fn monomial_exponents(k: usize, order: usize) -> Vec<Vec<usize>> {
    fn extend(k: usize, start: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for v in start..k {
            cur[v] += 1;
            extend(k, v, left - 1, cur, out);
            cur[v] -= 1;
        }
    }
    let mut out = Vec::new();
    for deg in 0..=order {
        extend(k, 0, deg, &mut vec![0; k], &mut out);
    }
    out
}

/// Intercept plus every monomial of total degree ≤ `order` in the columns of `w`.
pub fn polynomial_features(w: &Matrix, order: usize) -> Result<Matrix> {
    if !(1..=3).contains(&order) {
        return Err(invalid(format!("sieve order {order} not in 1..=3")));
    }
    let terms = monomial_exponents(w.cols, order);
    let mut out = Matrix::zeros(w.rows, terms.len());
    for i in 0..w.rows {
        let row = w.row(i);
        for (c, e) in terms.iter().enumerate() {
            let v = e.iter().zip(row).map(|(&p, &x)| x.powi(p as i32)).product();
            out.set(i, c, v);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub coefficients: Vec<f64>,
    /// Linear predictions or probabilities for every row of the design.
    pub fitted: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn check_design(features: &Matrix, y: &[f64], mask: &[usize]) -> Result<()> {
    if y.len() != features.rows {
        return Err(Error::Shape(format!(
            "{} responses for {} rows",
            y.len(),
            features.rows
        )));
    }
    if mask.is_empty() {
        return Err(Error::InsufficientPopulation { found: 0, required: 1 });
    }
    if mask.iter().any(|&i| i >= features.rows) {
        return Err(invalid("mask row out of range"));
    }
    Ok(())
}

/// Root-mean-square of each column over the mask (1 for all-zero columns).
fn column_scales(f: &Matrix, mask: &[usize]) -> Vec<f64> {
    (0..f.cols)
        .map(|c| {
            let ms = mask.iter().map(|&i| f.get(i, c).powi(2)).sum::<f64>() / mask.len() as f64;
            if ms > 0.0 {
                ms.sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

/// Solves `(Zᵀ diag(w) Z + jitter·I) β = Zᵀ r` on the mask, where `Z` is the
/// design with columns divided by `scales`.
fn weighted_normal_solve(f: &Matrix, scales: &[f64], mask: &[usize], w: &[f64], r: &[f64]) -> Result<Vec<f64>> {
    let p = f.cols;
    let mut a = Matrix::zeros(p, p);
    let mut b = vec![0.0; p];
    let mut z = vec![0.0; p];
    for (k, &i) in mask.iter().enumerate() {
        for c in 0..p {
            z[c] = f.get(i, c) / scales[c];
        }
        for c in 0..p {
            b[c] += z[c] * r[k];
            let wz = w[k] * z[c];
            for d in 0..=c {
                a.data[c * p + d] += wz * z[d];
            }
        }
    }
    for c in 0..p {
        for d in 0..c {
            a.data[d * p + c] = a.data[c * p + d];
        }
        a.data[c * p + c] += RIDGE_JITTER * mask.len() as f64;
    }
    cholesky_solve(&a, &b)
}

fn predict(f: &Matrix, beta: &[f64]) -> Vec<f64> {
    (0..f.rows)
        .map(|i| f.row(i).iter().zip(beta).map(|(x, b)| x * b).sum())
        .collect()
}

/// Least squares of `y` on the features over the rows in `mask`.
pub fn linear_fit(features: &Matrix, y: &[f64], mask: &[usize]) -> Result<GlmFit> {
    check_design(features, y, mask)?;
    let scales = column_scales(features, mask);
    let r: Vec<f64> = mask.iter().map(|&i| y[i]).collect();
    let beta = weighted_normal_solve(features, &scales, mask, &vec![1.0; mask.len()], &r)?;
    let coefficients: Vec<f64> = beta.iter().zip(&scales).map(|(b, s)| b / s).collect();
    Ok(GlmFit {
        fitted: predict(features, &coefficients),
        coefficients,
        iterations: 1,
        converged: true,
    })
}

fn neg_log_lik(f: &Matrix, beta: &[f64], y: &[f64], mask: &[usize]) -> f64 {
    mask.iter()
        .map(|&i| {
            let eta: f64 = f.row(i).iter().zip(beta).map(|(x, b)| x * b).sum();
            softplus(eta) - y[i] * eta
        })
        .sum()
}

/// Logistic maximum likelihood by iteratively reweighted least squares with
/// step halving. Labels may be any values in [0, 1].
pub fn logistic_fit(features: &Matrix, labels: &[f64], mask: &[usize]) -> Result<GlmFit> {
    check_design(features, labels, mask)?;
    if mask.iter().any(|&i| !(0.0..=1.0).contains(&labels[i])) {
        return Err(invalid("logistic labels must lie in [0, 1]"));
    }
    let scales = column_scales(features, mask);
    // work on the scaled design so the jitter and tolerance are scale-free
    let mut z = features.clone();
    for i in 0..z.rows {
        for (v, s) in z.row_mut(i).iter_mut().zip(&scales) {
            *v /= s;
        }
    }
    let ones = vec![1.0; z.cols];
    let mut beta = vec![0.0; z.cols];
    let mut nll = neg_log_lik(&z, &beta, labels, mask);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < IRLS_MAX_ITER {
        iterations += 1;
        let mut w = Vec::with_capacity(mask.len());
        let mut r = Vec::with_capacity(mask.len());
        for &i in mask {
            let eta: f64 = z.row(i).iter().zip(&beta).map(|(x, b)| x * b).sum();
            let p = sigmoid(eta);
            w.push((p * (1.0 - p)).max(1e-12));
            r.push(labels[i] - p);
        }
        let step = weighted_normal_solve(&z, &ones, mask, &w, &r)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let cand_nll = neg_log_lik(&z, &cand, labels, mask);
            if cand_nll <= nll + 1e-12 * nll.abs().max(1.0) {
                beta = cand;
                nll = cand_nll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        let size = step.iter().fold(0.0f64, |m, s| m.max((t * s).abs()));
        if !accepted || size < IRLS_TOL {
            converged = accepted || size < IRLS_TOL;
            break;
        }
    }
    let coefficients: Vec<f64> = beta.iter().zip(&scales).map(|(b, s)| b / s).collect();
    let fitted = predict(features, &coefficients).into_iter().map(sigmoid).collect();
    Ok(GlmFit {
        coefficients,
        fitted,
        iterations,
        converged,
    })
}
