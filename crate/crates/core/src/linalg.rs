//! Dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, RealField};

pub fn symmetric_part<T: RealField + Copy>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * nalgebra::convert::<f64, T>(0.5)
}

pub fn max_abs<T: RealField + Copy>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

/// Symmetric eigen-decomposition with eigenvalues ascending and matching columns.
pub fn sym_eigen_sorted<T: RealField + Copy>(m: &DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = symmetric_part(m).symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap_or(std::cmp::Ordering::Equal));
    let vals = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn sym_eigenvalues<T: RealField + Copy>(m: &DMatrix<T>) -> Vec<T> {
    sym_eigen_sorted(m).0.iter().copied().collect()
}

pub fn min_eigenvalue<T: RealField + Copy>(m: &DMatrix<T>) -> T {
    sym_eigen_sorted(m).0[0]
}

/// Singular values in descending order.
pub fn singular_values<T: RealField + Copy>(m: &DMatrix<T>) -> Vec<T> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<T> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

pub fn spectral_norm<T: RealField + Copy>(m: &DMatrix<T>) -> T {
    singular_values(m).first().copied().unwrap_or_else(T::zero)
}

pub fn sigma_min<T: RealField + Copy>(m: &DMatrix<T>) -> T {
    singular_values(m).last().copied().unwrap_or_else(T::zero)
}

/// Orthonormal basis (as columns) of the right null space, using singular
/// values at or below `tol`.
pub fn null_space<T: RealField + Copy>(m: &DMatrix<T>, tol: T) -> DMatrix<T> {
    let cols = m.ncols();
    let rows = m.nrows().max(cols);
    let mut padded = DMatrix::zeros(rows, cols);
    padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let kept: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] <= tol).collect();
    let mut out = DMatrix::zeros(cols, kept.len());
    for (k, &i) in kept.iter().enumerate() {
        out.set_column(k, &vt.row(i).transpose());
    }
    out
}

pub fn rank<T: RealField + Copy>(m: &DMatrix<T>, tol: T) -> usize {
    singular_values(m).iter().filter(|&&s| s > tol).count()
}

/// Counts of (positive, negative, near-zero) eigenvalues of a symmetric matrix.
pub fn inertia<T: RealField + Copy>(m: &DMatrix<T>, tol: T) -> (usize, usize, usize) {
    let vals = sym_eigenvalues(m);
    let pos = vals.iter().filter(|&&v| v > tol).count();
    let neg = vals.iter().filter(|&&v| v < -tol).count();
    (pos, neg, vals.len() - pos - neg)
}

/// Orthonormalizes the columns of `m`, dropping directions below `tol`.
pub fn orthonormal_columns<T: RealField + Copy>(m: &DMatrix<T>, tol: T) -> DMatrix<T> {
    let mut basis: Vec<DVector<T>> = Vec::new();
    for c in m.column_iter() {
        let mut v = c.into_owned();
        for _ in 0..2 {
            for b in &basis {
                let d = b.dot(&v);
                v -= b * d;
            }
        }
        let n = v.norm();
        if n > tol {
            basis.push(v / n);
        }
    }
    if basis.is_empty() {
        DMatrix::zeros(m.nrows(), 0)
    } else {
        DMatrix::from_columns(&basis)
    }
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return None;
    }
    Some(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn null_space_of_rank_one() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let k = null_space(&m, 1e-10);
        assert_eq!(k.ncols(), 2);
        assert!((&m * &k).norm() < 1e-12);
        assert_relative_eq!((k.transpose() * &k), DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn eigen_sorted_ascending() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0, 2.0]));
        let (vals, vecs) = sym_eigen_sorted(&m);
        assert_eq!(vals.as_slice(), &[-1.0, 2.0, 3.0]);
        assert_relative_eq!(&m * vecs.column(0), vecs.column(0) * -1.0, epsilon = 1e-14);
        assert_eq!(inertia(&m, 1e-12), (2, 1, 0));
    }

    #[test]
    fn rows_round_trip() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(from_rows(&to_rows(&m)).unwrap(), m);
        assert!(from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_none());
    }
}
