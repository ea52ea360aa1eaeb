//! Small dense helpers shared by the statistic paths.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

/// Submatrix `m[rows, cols]`.
pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Replaces `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues floored at zero.
pub fn psd_eigen(m: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = m.symmetric_eigen();
    let values = eig.eigenvalues.map(|v| v.max(0.0));
    (values, eig.eigenvectors)
}

/// Eigenvalues of a symmetric matrix floored at zero.
pub fn psd_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    m.symmetric_eigenvalues()
        .iter()
        .map(|v| v.max(0.0))
        .collect()
}

/// Pairwise (cascade) summation; error grows as `O(log n)` rather than `O(n)`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 128;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (1..=10_000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 50_005_000.0);
    }

    #[test]
    fn symmetrize_averages_off_diagonal() {
        let mut m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 3.0]);
        symmetrize(&mut m);
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 3.0]));
    }
}
