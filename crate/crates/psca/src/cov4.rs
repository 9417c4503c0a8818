//! Explicit order-4 covariance tensors and the brute-force separable
//! component decomposition via rearrangement and dense SVD.
//!
//! Everything here is oracle machinery for small grids: the estimation path
//! never materializes an order-4 tensor. The guard on `k1, k2` keeps that
//! honest.

use crate::error::{PscaError, Result};
use crate::linalg::{apply_sign_rule, mat_from_row_major, Mat};
use crate::pip::SampleSet;

/// Default upper bound on `k1, k2` for dense-tensor operations.
pub const ORACLE_GUARD_DEFAULT: usize = 16;

/// Order-4 tensor `c[i,j,k,l]` with `i,k < k1` and `j,l < k2`, stored
/// row-major in `(i,j,k,l)`. Entry `[i,j,k,l]` is the covariance between
/// grid points `(i,j)` and `(k,l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseCov4 {
    k1: usize,
    k2: usize,
    entries: Vec<f64>,
}

impl DenseCov4 {
    pub fn zeros(k1: usize, k2: usize) -> Self {
        assert!(k1 > 0 && k2 > 0, "grid sizes must be positive");
        DenseCov4 {
            k1,
            k2,
            entries: vec![0.0; k1 * k2 * k1 * k2],
        }
    }

    pub fn from_entries(k1: usize, k2: usize, entries: Vec<f64>) -> Result<Self> {
        if k1 == 0 || k2 == 0 {
            return Err(PscaError::ShapeMismatch(
                "DenseCov4: grid sizes must be positive".into(),
            ));
        }
        if entries.len() != k1 * k2 * k1 * k2 {
            return Err(PscaError::ShapeMismatch(format!(
                "DenseCov4: expected {} entries, got {}",
                k1 * k2 * k1 * k2,
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(PscaError::NonFinite("DenseCov4 entries".into()));
        }
        Ok(DenseCov4 { k1, k2, entries })
    }

    pub fn k1(&self) -> usize {
        self.k1
    }

    pub fn k2(&self) -> usize {
        self.k2
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.k2 + j) * self.k1 + k) * self.k2 + l
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.entries[self.idx(i, j, k, l)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        let idx = self.idx(i, j, k, l);
        self.entries[idx] = v;
    }

    pub fn frob_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Maximum violation of self-adjointness `c[i,j,k,l] = c[k,l,i,j]`.
    pub fn self_adjoint_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.k1 {
            for j in 0..self.k2 {
                for k in 0..self.k1 {
                    for l in 0..self.k2 {
                        let d = (self.get(i, j, k, l) - self.get(k, l, i, j)).abs();
                        worst = worst.max(d);
                    }
                }
            }
        }
        worst
    }

    /// The action of the tensor on a `k1 x k2` matrix:
    /// `(C X)[i,j] = sum_{k,l} c[i,j,k,l] X[k,l]`.
    pub fn apply(&self, x: &Mat) -> Result<Mat> {
        if x.nrows() != self.k1 || x.ncols() != self.k2 {
            return Err(PscaError::ShapeMismatch(format!(
                "DenseCov4::apply: expected {}x{}, got {}x{}",
                self.k1,
                self.k2,
                x.nrows(),
                x.ncols()
            )));
        }
        let mut out = Mat::zeros(self.k1, self.k2);
        for i in 0..self.k1 {
            for j in 0..self.k2 {
                let mut acc = 0.0;
                for k in 0..self.k1 {
                    for l in 0..self.k2 {
                        acc += self.get(i, j, k, l) * x[(k, l)];
                    }
                }
                out[(i, j)] = acc;
            }
        }
        Ok(out)
    }

    /// Matricization as an operator on row-major-vectorized matrices:
    /// `M[i*k2+j, k*k2+l] = c[i,j,k,l]`. Symmetric iff the tensor is
    /// self-adjoint; used by small-instance oracles.
    pub fn matricize_operator(&self) -> Mat {
        let n = self.k1 * self.k2;
        let mut m = Mat::zeros(n, n);
        for i in 0..self.k1 {
            for j in 0..self.k2 {
                for k in 0..self.k1 {
                    for l in 0..self.k2 {
                        m[(i * self.k2 + j, k * self.k2 + l)] = self.get(i, j, k, l);
                    }
                }
            }
        }
        m
    }

    fn check_guard(&self, guard: usize) -> Result<()> {
        if self.k1 > guard || self.k2 > guard {
            return Err(PscaError::OracleGuard {
                k1: self.k1,
                k2: self.k2,
                guard,
            });
        }
        Ok(())
    }
}

/// Full separable component decomposition of a dense tensor: non-increasing
/// scores with unit-norm factor matrices.
#[derive(Debug, Clone)]
pub struct ScdFull {
    /// Singular values of the rearrangement, non-increasing.
    pub scores: Vec<f64>,
    /// Left factors `A_j`, each `k1 x k1`.
    pub left: Vec<Mat>,
    /// Right factors `B_j`, each `k2 x k2`.
    pub right: Vec<Mat>,
}

impl ScdFull {
    /// `sqrt(sum_{j>r} scores[j]^2)`, the Frobenius norm of the tail after
    /// keeping `r` components.
    pub fn tail_norm(&self, r: usize) -> f64 {
        self.scores[r.min(self.scores.len())..]
            .iter()
            .map(|s| s * s)
            .sum::<f64>()
            .sqrt()
    }

    pub fn total_norm(&self) -> f64 {
        self.tail_norm(0)
    }
}

/// Rearrange the order-4 tensor into the `(k1*k1) x (k2*k2)` matrix
/// `M[i*k1 + k, j*k2 + l] = c[i,j,k,l]` whose SVD is the SCD. The map is an
/// isometry in the Frobenius norm.
pub fn rearrange(c: &DenseCov4) -> Mat {
    let (k1, k2) = (c.k1, c.k2);
    let mut m = Mat::zeros(k1 * k1, k2 * k2);
    for i in 0..k1 {
        for j in 0..k2 {
            for k in 0..k1 {
                for l in 0..k2 {
                    m[(i * k1 + k, j * k2 + l)] = c.get(i, j, k, l);
                }
            }
        }
    }
    m
}

/// Inverse of [`rearrange`].
pub fn rearrange_inverse(m: &Mat, k1: usize, k2: usize) -> Result<DenseCov4> {
    if m.nrows() != k1 * k1 || m.ncols() != k2 * k2 {
        return Err(PscaError::ShapeMismatch(format!(
            "rearrange_inverse: expected {}x{}, got {}x{}",
            k1 * k1,
            k2 * k2,
            m.nrows(),
            m.ncols()
        )));
    }
    let mut c = DenseCov4::zeros(k1, k2);
    for i in 0..k1 {
        for j in 0..k2 {
            for k in 0..k1 {
                for l in 0..k2 {
                    c.set(i, j, k, l, m[(i * k1 + k, j * k2 + l)]);
                }
            }
        }
    }
    Ok(c)
}

/// Brute-force SCD by dense SVD of the rearrangement. Oracle use only.
pub fn brute_force_scd(c: &DenseCov4) -> Result<ScdFull> {
    brute_force_scd_with_guard(c, ORACLE_GUARD_DEFAULT)
}

pub fn brute_force_scd_with_guard(c: &DenseCov4, guard: usize) -> Result<ScdFull> {
    c.check_guard(guard)?;
    let m = rearrange(c);
    let svd = nalgebra::linalg::SVD::new(m, true, true);
    let u = svd
        .u
        .ok_or_else(|| PscaError::NumericalFailure("SVD did not produce U".into()))?;
    let vt = svd
        .v_t
        .ok_or_else(|| PscaError::NumericalFailure("SVD did not produce V^T".into()))?;
    let mut items: Vec<(f64, usize)> = svd.singular_values.iter().cloned().zip(0..).collect();
    items.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut scores = Vec::with_capacity(items.len());
    let mut left = Vec::with_capacity(items.len());
    let mut right = Vec::with_capacity(items.len());
    for (score, col) in items {
        let uvec: Vec<f64> = u.column(col).iter().cloned().collect();
        let vvec: Vec<f64> = vt.row(col).iter().cloned().collect();
        let mut a = mat_from_row_major(c.k1, c.k1, &uvec);
        let mut b = mat_from_row_major(c.k2, c.k2, &vvec);
        apply_sign_rule(&mut a, &mut b);
        scores.push(score);
        left.push(a);
        right.push(b);
    }
    Ok(ScdFull {
        scores,
        left,
        right,
    })
}

/// Dense empirical covariance `c[i,j,k,l] = divisor^-1 sum_n x~_n[i,j] x~_n[k,l]`
/// over the (optionally centered) samples. Oracle use only.
pub fn empirical_cov_dense(data: &SampleSet) -> Result<DenseCov4> {
    empirical_cov_dense_with_guard(data, ORACLE_GUARD_DEFAULT)
}

pub fn empirical_cov_dense_with_guard(data: &SampleSet, guard: usize) -> Result<DenseCov4> {
    let (k1, k2) = (data.k1(), data.k2());
    if k1 > guard || k2 > guard {
        return Err(PscaError::OracleGuard { k1, k2, guard });
    }
    let mut c = DenseCov4::zeros(k1, k2);
    let inv = 1.0 / data.divisor();
    for x in data.effective() {
        for i in 0..k1 {
            for j in 0..k2 {
                let xij = x[(i, j)];
                if xij == 0.0 {
                    continue;
                }
                for k in 0..k1 {
                    for l in 0..k2 {
                        let idx = c.idx(i, j, k, l);
                        c.entries[idx] += xij * x[(k, l)] * inv;
                    }
                }
            }
        }
    }
    Ok(c)
}

/// `sigma * (A (x) B)` materialized as a dense tensor:
/// `c[i,j,k,l] = sigma A[i,k] B[j,l]`.
pub fn separable_dense(sigma: f64, a: &Mat, b: &Mat) -> DenseCov4 {
    let (k1, k2) = (a.nrows(), b.nrows());
    let mut c = DenseCov4::zeros(k1, k2);
    for i in 0..k1 {
        for j in 0..k2 {
            for k in 0..k1 {
                for l in 0..k2 {
                    c.set(i, j, k, l, sigma * a[(i, k)] * b[(j, l)]);
                }
            }
        }
    }
    c
}

pub fn add_separable(c: &mut DenseCov4, sigma: f64, a: &Mat, b: &Mat) {
    for i in 0..c.k1 {
        for j in 0..c.k2 {
            for k in 0..c.k1 {
                for l in 0..c.k2 {
                    let idx = c.idx(i, j, k, l);
                    c.entries[idx] += sigma * a[(i, k)] * b[(j, l)];
                }
            }
        }
    }
}
