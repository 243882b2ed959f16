//! Factorizations `W = MᵀM` of a consensus matrix.
//!
//! The edge (Stieltjes) factor has one row per graph edge; the Cholesky and
//! eigen factors are minimal with `n - 1` rows.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// Relative threshold, scaled by `‖W‖`, below which pivots and eigenvalues
/// count as zero.
pub const REL_ZERO: f64 = 1e-9;

fn zero_threshold(w: &Mat) -> f64 {
    (REL_ZERO * linalg::spectral_norm(w)).max(f64::MIN_POSITIVE)
}

fn check_square(w: &Mat) -> Result<usize> {
    if !w.is_square() || w.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "W must be square and nonempty, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    Ok(w.nrows())
}

/// Edge factor: one row `√(-W_ij)(e_j - e_i)` for every edge `i < j`, in
/// row-major edge order. Requires nonpositive off-diagonal entries and zero
/// row sums.
pub fn factor_stieltjes(w: &Mat) -> Result<Mat> {
    let n = check_square(w)?;
    let thr = zero_threshold(w);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (w[(i, j)] + w[(j, i)]);
            if v > thr {
                return Err(Error::NotStieltjes { row: i + 1, col: j + 1, value: v });
            }
            if v < -thr {
                edges.push((i, j, (-v).sqrt()));
            }
        }
    }
    let row_sum = (w * linalg::ones(n)).amax();
    if row_sum > 1e-8 * linalg::spectral_norm(w).max(1.0) {
        return Err(Error::InvalidInput(format!("edge factorization needs zero row sums (max |W1| = {row_sum:e})")));
    }
    let mut m = Mat::zeros(edges.len(), n);
    for (k, &(i, j, s)) in edges.iter().enumerate() {
        m[(k, i)] = -s;
        m[(k, j)] = s;
    }
    Ok(m)
}

/// `LDLᵀ` factor with the single zero pivot removed: `M = D̃^{1/2} B̃ᵀ`.
///
/// Pivoting is the natural order except when a pivot falls below the zero
/// threshold while a later diagonal entry is still positive.
pub fn factor_cholesky(w: &Mat) -> Result<Mat> {
    let n = check_square(w)?;
    let thr = zero_threshold(w);
    let mut a = linalg::symmetrize(w);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut lower = Mat::identity(n, n);
    let mut d = vec![0.0; n];
    let mut zero_pivots = Vec::new();
    for k in 0..n {
        if a[(k, k)].abs() <= thr {
            let best = ((k + 1)..n).filter(|&j| a[(j, j)] > thr).max_by(|&x, &y| a[(x, x)].total_cmp(&a[(y, y)]));
            if let Some(j) = best {
                a.swap_rows(k, j);
                a.swap_columns(k, j);
                perm.swap(k, j);
                for c in 0..k {
                    let t = lower[(k, c)];
                    lower[(k, c)] = lower[(j, c)];
                    lower[(j, c)] = t;
                }
            }
        }
        let pivot = a[(k, k)];
        if pivot < -thr {
            return Err(Error::InvalidInput(format!(
                "W is not positive semidefinite (pivot {pivot:e} at step {})",
                k + 1
            )));
        }
        if pivot.abs() <= thr {
            let tail = ((k + 1)..n).map(|i| a[(i, k)].abs()).fold(0.0, f64::max);
            if tail > thr.sqrt() {
                return Err(Error::InvalidInput(
                    "W is not positive semidefinite (zero pivot with nonzero column)".into(),
                ));
            }
            zero_pivots.push(k);
            d[k] = 0.0;
            continue;
        }
        d[k] = pivot;
        for i in (k + 1)..n {
            lower[(i, k)] = a[(i, k)] / pivot;
        }
        for i in (k + 1)..n {
            for j in (k + 1)..n {
                a[(i, j)] -= lower[(i, k)] * pivot * lower[(j, k)];
            }
        }
    }
    if zero_pivots.len() != 1 {
        return Err(Error::RankDeficient(format!("expected exactly one zero pivot, found {}", zero_pivots.len())));
    }
    let drop = zero_pivots[0];
    let mut m = Mat::zeros(n - 1, n);
    let mut row = 0;
    for k in 0..n {
        if k == drop {
            continue;
        }
        let s = d[k].sqrt();
        for a_idx in 0..n {
            // B = Pᵀ L, so column k of B has entry L[a, k] at position perm[a].
            m[(row, perm[a_idx])] = s * lower[(a_idx, k)];
        }
        row += 1;
    }
    Ok(m)
}

/// Spectral factor `M = Λ̃^{1/2} Ũᵀ`, dropping the eigenvector most aligned
/// with the all-ones vector.
pub fn factor_eigen(w: &Mat) -> Result<Mat> {
    let n = check_square(w)?;
    let thr = zero_threshold(w);
    let (vals, vecs) = linalg::sym_eigen(w);
    let ones = linalg::ones(n);
    let align = |k: usize| {
        let u = vecs.column(k);
        u.dot(&ones).abs() / u.norm()
    };
    let drop = (0..n).max_by(|&a, &b| align(a).total_cmp(&align(b))).expect("nonempty");
    if vals[drop].abs() > thr {
        return Err(Error::InvalidInput(format!(
            "W has no zero eigenvalue along the ones vector (eigenvalue {:e})",
            vals[drop]
        )));
    }
    let mut m = Mat::zeros(n - 1, n);
    let mut row = 0;
    for k in 0..n {
        if k == drop {
            continue;
        }
        if vals[k] < -thr {
            return Err(Error::InvalidInput(format!("W is not positive semidefinite (eigenvalue {:e})", vals[k])));
        }
        if vals[k] <= thr {
            return Err(Error::RankDeficient(format!("W has more than one zero eigenvalue (found {:e})", vals[k])));
        }
        let s = vals[k].sqrt();
        for j in 0..n {
            m[(row, j)] = s * vecs[(j, k)];
        }
        row += 1;
    }
    Ok(m)
}

/// Maps a starting point for the lifted iteration under `M` to the
/// equivalent starting point under the minimal factor `M̃`, by solving
/// `M̃ᵀ z̃ = Mᵀ z` in the least squares sense. Points are stored as rows.
pub fn reduce_initial_point(m: &Mat, m_min: &Mat, z0: &Mat) -> Result<Mat> {
    if m.ncols() != m_min.ncols() {
        return Err(Error::DimensionMismatch(format!("factors act on {} and {} nodes", m.ncols(), m_min.ncols())));
    }
    if z0.nrows() != m.nrows() {
        return Err(Error::DimensionMismatch(format!("initial point has {} rows, M has {}", z0.nrows(), m.nrows())));
    }
    let w = m.transpose() * m;
    let w_min = m_min.transpose() * m_min;
    let mismatch = linalg::max_abs(&(&w - &w_min));
    if mismatch > 1e-8 * linalg::max_abs(&w).max(1.0) {
        return Err(Error::IncompatibleFactor(format!("MᵀM and M̃ᵀM̃ differ by {mismatch:e}")));
    }
    Ok(linalg::pinv(&m_min.transpose()) * (m.transpose() * z0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Mat {
        let mut w = Mat::zeros(n, n);
        for i in 0..n - 1 {
            w[(i, i)] += 1.0;
            w[(i + 1, i + 1)] += 1.0;
            w[(i, i + 1)] = -1.0;
            w[(i + 1, i)] = -1.0;
        }
        w
    }

    #[test]
    fn two_node_factors() {
        let w = path(2);
        let m = factor_stieltjes(&w).unwrap();
        assert_eq!(m, Mat::from_row_slice(1, 2, &[-1.0, 1.0]));
        let e = factor_eigen(&w).unwrap();
        assert!((e[(0, 0)].abs() - 1.0).abs() < 1e-12 && (e[(0, 0)] + e[(0, 1)]).abs() < 1e-12);
    }

    #[test]
    fn cholesky_reproduces_path() {
        let w = path(5);
        let m = factor_cholesky(&w).unwrap();
        assert_eq!(m.nrows(), 4);
        assert!(linalg::max_abs(&(m.transpose() * &m - &w)) < 1e-12);
    }

    #[test]
    fn positive_entry_is_rejected() {
        let w = Mat::from_row_slice(3, 3, &[1.0, 0.5, -1.5, 0.5, 0.5, -1.0, -1.5, -1.0, 2.5]);
        assert!(matches!(factor_stieltjes(&w), Err(Error::NotStieltjes { row: 1, col: 2, .. })));
    }

    #[test]
    fn disconnected_is_rank_deficient() {
        let mut w = Mat::zeros(4, 4);
        w.view_mut((0, 0), (2, 2)).copy_from(&path(2));
        w.view_mut((2, 2), (2, 2)).copy_from(&path(2));
        assert!(matches!(factor_cholesky(&w), Err(Error::RankDeficient(_))));
        assert!(matches!(factor_eigen(&w), Err(Error::RankDeficient(_))));
    }
}
