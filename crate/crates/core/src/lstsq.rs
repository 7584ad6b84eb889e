//! Thin orthogonal factorization of small tall design matrices.
//!
//! Columns are orthonormalized by classical Gram–Schmidt with one full
//! reorthogonalization pass (CGS2), which keeps `Q` orthonormal to working
//! precision for the low-order polynomial bases used here. Columns whose
//! remaining norm falls below `DROP_RTOL` of their original norm are treated
//! as linearly dependent and dropped.

use nalgebra::{DMatrix, DVector};

pub(crate) const DROP_RTOL: f64 = 1e-10;

/// `B = Q R` restricted to the numerically independent columns of `B`.
#[derive(Debug, Clone)]
pub(crate) struct OrthoBasis {
    n: usize,
    /// column-major, `n` rows by `kept.len()` columns
    q: Vec<f64>,
    /// upper-triangular `R` over kept columns, row-major `k x k`
    r: Vec<f64>,
    kept: Vec<usize>,
    n_cols: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl OrthoBasis {
    /// Factor the given columns, each of length `n`.
    pub fn new(n: usize, columns: &[Vec<f64>]) -> Self {
        let mut q: Vec<f64> = Vec::with_capacity(n * columns.len());
        let mut kept = Vec::new();
        let mut r_cols: Vec<Vec<f64>> = Vec::new();
        for (j, col) in columns.iter().enumerate() {
            debug_assert_eq!(col.len(), n);
            let norm0 = dot(col, col).sqrt();
            let mut w = col.clone();
            let k = kept.len();
            let mut coef = vec![0.0; k];
            for _pass in 0..2 {
                for i in 0..k {
                    let qi = &q[i * n..(i + 1) * n];
                    let c = dot(qi, &w);
                    coef[i] += c;
                    for (wv, qv) in w.iter_mut().zip(qi) {
                        *wv -= c * qv;
                    }
                }
            }
            let norm = dot(&w, &w).sqrt();
            if norm0 == 0.0 || norm <= DROP_RTOL * norm0 {
                continue;
            }
            for v in w.iter_mut() {
                *v /= norm;
            }
            q.extend_from_slice(&w);
            coef.push(norm);
            r_cols.push(coef);
            kept.push(j);
        }
        let k = kept.len();
        let mut r = vec![0.0; k * k];
        for (j, col) in r_cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                r[i * k + j] = v;
            }
        }
        Self { n, q, r, kept, n_cols: columns.len() }
    }

    pub fn rank(&self) -> usize {
        self.kept.len()
    }

    pub fn is_full_rank(&self) -> bool {
        self.kept.len() == self.n_cols
    }

    pub fn q_col(&self, i: usize) -> &[f64] {
        &self.q[i * self.n..(i + 1) * self.n]
    }

    /// `Q^T y`
    pub fn coeffs(&self, y: &[f64]) -> Vec<f64> {
        (0..self.rank()).map(|i| dot(self.q_col(i), y)).collect()
    }

    /// `y - Q Q^T y`, with a second pass for accuracy.
    pub fn residual(&self, y: &[f64]) -> Vec<f64> {
        let mut w = y.to_vec();
        for _pass in 0..2 {
            for i in 0..self.rank() {
                let qi = self.q_col(i);
                let c = dot(qi, &w);
                for (wv, qv) in w.iter_mut().zip(qi) {
                    *wv -= c * qv;
                }
            }
        }
        w
    }

    /// Solve `R x = c` over kept columns and scatter into a full-length
    /// coefficient vector (dropped columns get zero).
    pub fn solve_r(&self, c: &[f64]) -> Vec<f64> {
        let k = self.rank();
        let mut x = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = c[i];
            for j in i + 1..k {
                s -= self.r[i * k + j] * x[j];
            }
            x[i] = s / self.r[i * k + i];
        }
        let mut full = vec![0.0; self.n_cols];
        for (slot, &j) in self.kept.iter().enumerate() {
            full[j] = x[slot];
        }
        full
    }
}

/// Minimum-norm least-squares solution of `[columns] x ~ y` via SVD.
pub(crate) fn min_norm_solve(n: usize, columns: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let a = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * DROP_RTOL;
    match svd.solve(&b, eps) {
        Ok(x) => x.iter().copied().collect(),
        Err(_) => vec![0.0; columns.len()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormal_and_reconstructs() {
        let n = 50;
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|p| (0..n).map(|i| (i as f64 / n as f64 * 2.0 - 1.0).powi(p)).collect())
            .collect();
        let ob = OrthoBasis::new(n, &cols);
        assert_eq!(ob.rank(), 4);
        for i in 0..4 {
            for j in 0..4 {
                let d = dot(ob.q_col(i), ob.q_col(j));
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        // R solves back to the original coefficients
        let y: Vec<f64> = (0..n).map(|i| 1.0 + 2.0 * cols[1][i] - 3.0 * cols[3][i]).collect();
        let x = ob.solve_r(&ob.coeffs(&y));
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12 && (x[3] + 3.0).abs() < 1e-12);
        assert!(ob.residual(&y).iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn dependent_columns_are_dropped() {
        let a: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| 3.0 * v).collect();
        let z = vec![0.0; 10];
        let ob = OrthoBasis::new(10, &[a, z, b]);
        assert_eq!(ob.rank(), 1);
        assert!(!ob.is_full_rank());
    }

    #[test]
    fn min_norm_splits_collinear_columns() {
        let ones = vec![1.0; 5];
        let x = min_norm_solve(5, &[ones.clone(), ones], &[2.0; 5]);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }
}
