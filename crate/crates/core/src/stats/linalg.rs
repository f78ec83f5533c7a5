//! Small dense matrices and a Householder QR least-squares solver.
//! Problem sizes here are a few hundred rows by a few dozen columns, so
//! clarity and numerical stability win over blocking tricks.

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, |c| c.len());
        let mut m = Mat::zeros(rows, cols);
        for (j, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), rows, "ragged columns");
            for (i, &v) in col.iter().enumerate() {
                m.data[i * cols + j] = v;
            }
        }
        m
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.at(i, j)).collect()
    }

    /// Matrix with column `j` removed.
    pub fn drop_column(&self, j: usize) -> Mat {
        let mut m = Mat::zeros(self.rows, self.cols - 1);
        for i in 0..self.rows {
            let mut jj = 0;
            for c in 0..self.cols {
                if c == j {
                    continue;
                }
                m.set(i, jj, self.at(i, c));
                jj += 1;
            }
        }
        m
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.at(i, j) * v[j]).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("design matrix is rank deficient at column {column}")]
    RankDeficient { column: usize },
    #[error("need rows >= cols, got {rows} x {cols}")]
    Underdetermined { rows: usize, cols: usize },
}

/// Least-squares solution computed through a Householder QR
/// factorization (never the normal equations).
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coef: Vec<f64>,
    /// Diagonal of (X'X)^-1 = R^-1 R^-T, for coefficient variances.
    pub xtx_inv_diag: Vec<f64>,
    /// Full (X'X)^-1, for robust covariance sandwiches.
    pub xtx_inv: Mat,
}

/// Householder QR solve of min ||X b - y||.
///
/// Rank deficiency is detected from the R diagonal against a scaled
/// tolerance and reported with the offending column index.
pub fn qr_least_squares(x: &Mat, y: &[f64]) -> Result<LeastSquares, LinalgError> {
    let n = x.rows;
    let p = x.cols;
    assert_eq!(y.len(), n, "response length mismatch");
    if n < p {
        return Err(LinalgError::Underdetermined { rows: n, cols: p });
    }

    // Working copies: A is reduced to R in place, qty carries Q'y.
    let mut a = x.clone();
    let mut qty = y.to_vec();

    let col_scale = (0..p)
        .map(|j| (0..n).map(|i| a.at(i, j).powi(2)).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);

    for j in 0..p {
        // Householder vector for column j below the diagonal.
        let mut norm2 = 0.0;
        for i in j..n {
            norm2 += a.at(i, j) * a.at(i, j);
        }
        let norm = norm2.sqrt();
        if norm <= col_scale * 1e-12 {
            return Err(LinalgError::RankDeficient { column: j });
        }
        let alpha = if a.at(j, j) >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; n - j];
        v[0] = a.at(j, j) - alpha;
        for i in j + 1..n {
            v[i - j] = a.at(i, j);
        }
        let vtv: f64 = v.iter().map(|w| w * w).sum();
        a.set(j, j, alpha);
        for i in j + 1..n {
            a.set(i, j, 0.0);
        }
        if vtv > 0.0 {
            for c in j + 1..p {
                let dot: f64 = (j..n).map(|i| v[i - j] * a.at(i, c)).sum();
                let f = 2.0 * dot / vtv;
                for i in j..n {
                    let updated = a.at(i, c) - f * v[i - j];
                    a.set(i, c, updated);
                }
            }
            let dot: f64 = (j..n).map(|i| v[i - j] * qty[i]).sum();
            let f = 2.0 * dot / vtv;
            for i in j..n {
                qty[i] -= f * v[i - j];
            }
        }
    }

    // Back-substitution R b = (Q'y)[..p].
    let mut coef = vec![0.0; p];
    for j in (0..p).rev() {
        let mut s = qty[j];
        for c in j + 1..p {
            s -= a.at(j, c) * coef[c];
        }
        let rjj = a.at(j, j);
        if rjj.abs() <= col_scale * 1e-12 {
            return Err(LinalgError::RankDeficient { column: j });
        }
        coef[j] = s / rjj;
    }

    // R^-1 by back-substitution on the identity, then
    // (X'X)^-1 = R^-1 R^-T.
    let mut rinv = Mat::zeros(p, p);
    for col in 0..p {
        for j in (0..=col).rev() {
            let mut s = if j == col { 1.0 } else { 0.0 };
            for c in j + 1..=col {
                s -= a.at(j, c) * rinv.at(c, col);
            }
            rinv.set(j, col, s / a.at(j, j));
        }
    }
    let mut xtx_inv = Mat::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let mut s = 0.0;
            for c in i.max(j)..p {
                s += rinv.at(i, c) * rinv.at(j, c);
            }
            xtx_inv.set(i, j, s);
        }
    }
    let xtx_inv_diag = (0..p).map(|j| xtx_inv.at(j, j)).collect();

    Ok(LeastSquares {
        coef,
        xtx_inv_diag,
        xtx_inv,
    })
}
