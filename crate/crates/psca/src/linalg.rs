//! Matrix primitives shared across the crate: Frobenius geometry, symmetric
//! eigendecomposition, and the joint sign rule for separable factor pairs.

use crate::error::{PscaError, Result};
use nalgebra::DMatrix;

/// Dense real matrix. Row/column semantics follow the surrounding docs;
/// serialization order is fixed in the io module.
pub type Mat = DMatrix<f64>;

/// Relative tolerance for accepting a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Frobenius inner product `sum_ij a[i,j] b[i,j]`.
pub fn frob_inner(a: &Mat, b: &Mat) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(PscaError::ShapeMismatch(format!(
            "frob_inner: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.dot(b))
}

/// Frobenius norm.
pub fn frob_norm(a: &Mat) -> f64 {
    a.norm()
}

/// Continuum Hilbert-Schmidt norm of a pixelated kernel on a `k1 x k2` grid.
///
/// All norms in this crate are plain (counting-measure) Frobenius norms. For a
/// kernel discretized on a grid over the unit square, the Hilbert-Schmidt norm
/// of the induced operator equals the Frobenius norm divided by `k1 * k2`.
/// This helper performs that conversion for reporting; nothing in the
/// algorithms depends on it.
pub fn hilbert_schmidt_norm(frobenius: f64, k1: usize, k2: usize) -> f64 {
    frobenius / ((k1 * k2) as f64)
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted
/// non-increasing and orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues, non-increasing.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: Mat,
}

impl SymmetricEigen {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Reconstruct `V diag(values) V^T`.
    pub fn reconstruct(&self) -> Mat {
        let n = self.dim();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let v = self.values[j];
            scaled.column_mut(j).scale_mut(v);
        }
        &scaled * self.vectors.transpose()
    }
}

/// Symmetric eigendecomposition. The input must be square and symmetric
/// within [`SYMMETRY_TOL`] relative; it is symmetrized as `(M + M^T)/2`
/// before decomposing, so roundoff-level asymmetry is tolerated.
pub fn sym_eigen(m: &Mat) -> Result<SymmetricEigen> {
    if m.nrows() != m.ncols() {
        return Err(PscaError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let norm = m.norm();
    let asym = (m - m.transpose()).norm();
    if norm > 0.0 && asym > SYMMETRY_TOL * norm {
        return Err(PscaError::NotSymmetric {
            rel: asym / norm,
            tol: SYMMETRY_TOL,
        });
    }
    let sym = symmetrize(m);
    let eig = nalgebra::linalg::SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymmetricEigen { values, vectors })
}

/// `(M + M^T)/2`.
pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &Mat, rel_tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let norm = m.norm();
    if norm == 0.0 {
        return true;
    }
    (m - m.transpose()).norm() <= rel_tol * norm
}

/// Joint sign rule for a separable factor pair: flip the signs of both
/// factors together so that the entry of `left` with the largest absolute
/// value is positive. Ties break to the entry with the lowest (row, col)
/// index. The pair product `left (x) right` is unchanged.
pub fn apply_sign_rule(left: &mut Mat, right: &mut Mat) {
    let mut best = 0.0f64;
    let mut best_val = 0.0f64;
    for i in 0..left.nrows() {
        for j in 0..left.ncols() {
            let v = left[(i, j)];
            if v.abs() > best {
                best = v.abs();
                best_val = v;
            }
        }
    }
    if best_val < 0.0 {
        left.neg_mut();
        right.neg_mut();
    }
}

/// Row-major vectorization: `out[i*ncols + j] = m[i,j]`.
pub fn vec_row_major(m: &Mat) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Inverse of [`vec_row_major`].
pub fn mat_from_row_major(rows: usize, cols: usize, data: &[f64]) -> Mat {
    Mat::from_row_slice(rows, cols, data)
}

/// Column-stacking vectorization, the convention of `vec(AXB) = (B^T kron A) vec(X)`.
pub fn vec_col_major(m: &Mat) -> Vec<f64> {
    m.as_slice().to_vec()
}

/// Random symmetric matrix with standard normal upper-triangle entries.
pub fn random_symmetric(k: usize, rng: &mut impl rand::Rng) -> Mat {
    use rand_distr::StandardNormal;
    let mut m = Mat::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v: f64 = rng.sample(StandardNormal);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Deterministic seed derivation (splitmix64 chain over the given words).
pub fn derive_seed(root: u64, words: &[u64]) -> u64 {
    let mut state = root ^ 0x9e37_79b9_7f4a_7c15;
    for &w in words {
        state = state.wrapping_add(w).wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        state = z ^ (z >> 31);
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frob_inner_identity() {
        let i2 = Mat::identity(2, 2);
        assert_eq!(frob_inner(&i2, &i2).unwrap(), 2.0);
    }

    #[test]
    fn frob_inner_trace_extraction() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let i2 = Mat::identity(2, 2);
        assert_eq!(frob_inner(&a, &i2).unwrap(), 5.0);
    }

    #[test]
    fn frob_inner_hand_summed() {
        let a = Mat::from_row_slice(2, 2, &[3.0, 4.0, 6.0, 8.0]);
        assert_eq!(frob_inner(&a, &a).unwrap(), 125.0);
    }

    #[test]
    fn frob_inner_shape_mismatch() {
        let a = Mat::zeros(2, 2);
        let b = Mat::zeros(2, 3);
        assert!(frob_inner(&a, &b).is_err());
    }

    #[test]
    fn sym_eigen_diagonal() {
        let m = Mat::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let e = sym_eigen(&m).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        // axis basis up to sign
        assert!(e.vectors[(0, 0)].abs() > 1.0 - 1e-12);
        assert!(e.vectors[(1, 1)].abs() > 1.0 - 1e-12);
    }

    #[test]
    fn sym_eigen_reflection() {
        let m = Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let e = sym_eigen(&m).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12);
        assert!((e.values[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn sym_eigen_reconstruction_random() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(42);
        let m = random_symmetric(6, &mut rng);
        let e = sym_eigen(&m).unwrap();
        let rec = e.reconstruct();
        assert!((rec - &m).norm() <= 1e-10 * m.norm().max(1.0));
        let vtv = e.vectors.transpose() * &e.vectors;
        assert!((vtv - Mat::identity(6, 6)).norm() < 1e-10);
    }

    #[test]
    fn sym_eigen_rejects_non_square() {
        assert!(sym_eigen(&Mat::zeros(2, 3)).is_err());
    }

    #[test]
    fn sym_eigen_rejects_asymmetric() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(sym_eigen(&m).is_err());
    }

    #[test]
    fn sign_rule_flips_jointly() {
        let mut a = Mat::from_row_slice(2, 2, &[-3.0, 1.0, 1.0, 2.0]);
        let mut b = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let prod_before = a[(0, 0)] * b[(0, 0)];
        apply_sign_rule(&mut a, &mut b);
        assert!(a[(0, 0)] > 0.0);
        assert_eq!(a[(0, 0)] * b[(0, 0)], prod_before);
    }

    #[test]
    fn derive_seed_is_stable() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
    }
}
