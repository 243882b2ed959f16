//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Eigenvalues in ascending order with matching eigenvector columns.
pub fn sym_eigen(m: &Mat) -> (Vector, Mat) {
    let n = m.nrows();
    if n == 0 {
        return (Vector::zeros(0), Mat::zeros(0, 0));
    }
    let sym = symmetrize(m);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Mat::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn sym_eigenvalues(m: &Mat) -> Vector {
    sym_eigen(m).0
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    let ev = sym_eigenvalues(m);
    if ev.is_empty() {
        0.0
    } else {
        ev[0]
    }
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Largest singular value.
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.iter().cloned().fold(0.0, f64::max)
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn ones(n: usize) -> Vector {
    Vector::from_element(n, 1.0)
}

pub fn ones_outer(n: usize) -> Mat {
    Mat::from_element(n, n, 1.0)
}

/// Orthonormal basis of the complement of the ones vector (Helmert basis).
pub fn mean_free_basis(n: usize) -> Mat {
    let mut u = Mat::zeros(n, n - 1);
    for k in 1..n {
        let s = 1.0 / ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            u[(i, k - 1)] = s;
        }
        u[(k, k - 1)] = -(k as f64) * s;
    }
    u
}

/// Moore-Penrose pseudoinverse with a relative singular value cutoff.
pub fn pinv(m: &Mat) -> Mat {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = smax * 1e-12 * (m.nrows().max(m.ncols()) as f64);
    svd.pseudo_inverse(cutoff.max(f64::MIN_POSITIVE)).unwrap_or_else(|_| Mat::zeros(m.ncols(), m.nrows()))
}

pub fn rows_to_mat(rows: &[Vec<f64>]) -> Option<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return None;
    }
    Some(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn unit(n: usize, i: usize) -> Vector {
    let mut e = Vector::zeros(n);
    e[i] = 1.0;
    e
}
