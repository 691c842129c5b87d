use serde::{Deserialize, Serialize};

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    pub fn column(values: &[f64]) -> Self {
        Self::from_vec(values.len(), 1, values.to_vec())
    }

    pub fn scalar(v: f64) -> Self {
        Self::from_vec(1, 1, vec![v])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Value of a 1×1 matrix.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on a non-scalar matrix");
        self.data[0]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul inner dimensions");
        let mut out = Self::zeros(self.rows, other.cols);
        matmul_into(self, other, &mut out);
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// `out += op(a) · op(b)` where each operand is given as an `r × c` view
/// with row and column strides.
#[allow(clippy::too_many_arguments)]
fn gemm_acc(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    out: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            out[..m * n].fill(0.0);
        }
        return;
    }
    assert!(
        a.len() >= m * k && b.len() >= k * n && out.len() >= m * n,
        "gemm operand sizes"
    );
    // SAFETY: the views lie inside the slices checked above, and `out` is a
    // distinct, densely laid out m × n buffer. With beta = 0 its prior
    // contents are ignored.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `out += a · b`.
pub(crate) fn matmul_into(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    assert!(
        a.cols == b.rows && out.rows == a.rows && out.cols == b.cols,
        "matmul shapes"
    );
    gemm_acc(
        a.rows,
        a.cols,
        b.cols,
        &a.data,
        (a.cols, 1),
        &b.data,
        (b.cols, 1),
        &mut out.data,
        1.0,
    );
}

/// `out = a · b`, ignoring the previous contents of `out`.
pub(crate) fn matmul_overwrite(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    assert!(
        a.cols == b.rows && out.rows == a.rows && out.cols == b.cols,
        "matmul shapes"
    );
    gemm_acc(
        a.rows,
        a.cols,
        b.cols,
        &a.data,
        (a.cols, 1),
        &b.data,
        (b.cols, 1),
        &mut out.data,
        0.0,
    );
}

/// `out += aᵀ · b`.
pub(crate) fn matmul_tn_into(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    assert!(
        a.rows == b.rows && out.rows == a.cols && out.cols == b.cols,
        "matmul shapes"
    );
    gemm_acc(
        a.cols,
        a.rows,
        b.cols,
        &a.data,
        (1, a.cols),
        &b.data,
        (b.cols, 1),
        &mut out.data,
        1.0,
    );
}

/// `out += a · bᵀ`.
pub(crate) fn matmul_nt_into(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    assert!(
        a.cols == b.cols && out.rows == a.rows && out.cols == b.rows,
        "matmul shapes"
    );
    gemm_acc(
        a.rows,
        a.cols,
        b.rows,
        &a.data,
        (a.cols, 1),
        &b.data,
        (1, b.cols),
        &mut out.data,
        1.0,
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Matrix::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let ab = a.matmul(&b);
        assert_eq!(ab.data, vec![58.0, 64.0, 139.0, 154.0]);

        let mut tn = Matrix::zeros(2, 2);
        matmul_tn_into(&a.transpose(), &b, &mut tn);
        assert_eq!(tn, ab);

        let mut nt = Matrix::zeros(2, 2);
        matmul_nt_into(&a, &b.transpose(), &mut nt);
        assert_eq!(nt, ab);
    }
}
