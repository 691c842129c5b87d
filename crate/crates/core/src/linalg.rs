//! Small dense solvers used by the GLM fits and the exact outcome solve.

use crate::autodiff::Matrix;
use crate::error::{Error, Result};

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky.
pub fn cholesky_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows;
    if a.cols != n || b.len() != n {
        return Err(Error::Shape(format!(
            "system {}x{} with rhs {}",
            a.rows,
            a.cols,
            b.len()
        )));
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::Precondition("matrix is not positive definite".into()));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    Ok(y)
}

/// Solves a general square system by Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows;
    if a.cols != n || b.len() != n {
        return Err(Error::Shape(format!(
            "system {}x{} with rhs {}",
            a.rows,
            a.cols,
            b.len()
        )));
    }
    let mut m = a.data.clone();
    let mut x = b.to_vec();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&r, &s| m[r * n + c].abs().total_cmp(&m[s * n + c].abs()))
            .expect("nonempty range");
        if m[p * n + c].abs() < 1e-300 {
            return Err(Error::Precondition("matrix is singular".into()));
        }
        if p != c {
            for k in 0..n {
                m.swap(p * n + k, c * n + k);
            }
            x.swap(p, c);
        }
        for r in c + 1..n {
            let f = m[r * n + c] / m[c * n + c];
            if f != 0.0 {
                for k in c..n {
                    m[r * n + k] -= f * m[c * n + k];
                }
                x[r] -= f * x[c];
            }
        }
    }
    for r in (0..n).rev() {
        for k in r + 1..n {
            x[r] -= m[r * n + k] * x[k];
        }
        x[r] /= m[r * n + r];
    }
    Ok(x)
}
