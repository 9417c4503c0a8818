//! Best linear unbiased prediction of missing entries under an R-separable
//! covariance.
//!
//! For row/column missingness the observed block's covariance is again
//! R-separable with restricted factors, so the conditional mean
//! `Sigma_12 Sigma_22^{-1} x_2` reduces to one PCG solve on the restricted
//! operator followed by one application of the full operator to the
//! zero-padded solution. For arbitrary patterns, `Sigma_22` is never formed:
//! it acts through masked applications of the full operator inside PCG, and
//! the cross-covariance through the same zero-padding trick.
//!
//! Predictions are around zero mean; callers working with uncentered data
//! subtract the mean from the observations and add it back to the output.

use crate::error::{PscaError, Result};
use crate::linalg::Mat;
use crate::operator::{positivize, RSepOperator};
use crate::solve::{pcg_core, resolve_preconditioner, SolveOptions, SolveReport};
use serde::{Deserialize, Serialize};

/// Which entries of a `k1 x k2` matrix are observed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MissingPattern {
    /// Entry `(i, j)` is observed iff `i` is not a missing row and `j` is
    /// not a missing column.
    RowCol {
        missing_rows: Vec<usize>,
        missing_cols: Vec<usize>,
    },
    /// Arbitrary mask in row-major order; `true` = observed.
    Arbitrary { observed: Vec<bool> },
}

impl MissingPattern {
    pub fn validate(&self, k1: usize, k2: usize) -> Result<()> {
        match self {
            MissingPattern::RowCol {
                missing_rows,
                missing_cols,
            } => {
                if missing_rows.iter().any(|&i| i >= k1)
                    || missing_cols.iter().any(|&j| j >= k2)
                {
                    return Err(PscaError::InvalidOptions(
                        "missing index out of bounds".into(),
                    ));
                }
                let obs_rows = k1 - dedup_count(missing_rows);
                let obs_cols = k2 - dedup_count(missing_cols);
                if obs_rows == 0 || obs_cols == 0 {
                    return Err(PscaError::EmptyObservedSet);
                }
                Ok(())
            }
            MissingPattern::Arbitrary { observed } => {
                if observed.len() != k1 * k2 {
                    return Err(PscaError::ShapeMismatch(format!(
                        "mask length {} does not match grid {}x{}",
                        observed.len(),
                        k1,
                        k2
                    )));
                }
                if !observed.iter().any(|&o| o) {
                    return Err(PscaError::EmptyObservedSet);
                }
                Ok(())
            }
        }
    }

    pub fn is_observed(&self, i: usize, j: usize, k2: usize) -> bool {
        match self {
            MissingPattern::RowCol {
                missing_rows,
                missing_cols,
            } => !missing_rows.contains(&i) && !missing_cols.contains(&j),
            MissingPattern::Arbitrary { observed } => observed[i * k2 + j],
        }
    }

    pub fn fully_observed(&self, k1: usize, k2: usize) -> bool {
        (0..k1).all(|i| (0..k2).all(|j| self.is_observed(i, j, k2)))
    }
}

fn dedup_count(indices: &[usize]) -> usize {
    let mut v = indices.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

fn complement(missing: &[usize], k: usize) -> Vec<usize> {
    (0..k).filter(|i| !missing.contains(i)).collect()
}

/// Restrict the operator to index subsets: components become the submatrices
/// `A_r[rows, rows]`, `B_r[cols, cols]` and the ridge carries over. The
/// restricted factors are generally not unit-norm; the result is flagged as
/// restricted and the unit-norm invariant is waived for it.
pub fn restrict_operator(op: &RSepOperator, rows: &[usize], cols: &[usize]) -> Result<RSepOperator> {
    if rows.is_empty() || cols.is_empty() {
        return Err(PscaError::EmptyObservedSet);
    }
    if rows.iter().any(|&i| i >= op.k1()) || cols.iter().any(|&j| j >= op.k2()) {
        return Err(PscaError::InvalidOptions("restriction index out of bounds".into()));
    }
    let components = op
        .components()
        .iter()
        .map(|c| crate::fit::SepComponent {
            score: c.score,
            left: submatrix(&c.left, rows, rows),
            right: submatrix(&c.right, cols, cols),
        })
        .collect();
    Ok(RSepOperator::new_restricted(
        components,
        op.ridge(),
        rows.len(),
        cols.len(),
    ))
}

fn submatrix(m: &Mat, rows: &[usize], cols: &[usize]) -> Mat {
    Mat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// BLUP of the missing entries of `x_obs` under `op` (which must be positive
/// definite on the observed block; see [`blup_positivized`]). Returns the
/// completed matrix: observed entries pass through, missing entries carry
/// the conditional mean.
pub fn blup(
    op: &RSepOperator,
    x_obs: &Mat,
    pattern: &MissingPattern,
    opts: &SolveOptions,
) -> Result<Mat> {
    blup_with_report(op, x_obs, pattern, opts).map(|(m, _)| m)
}

pub fn blup_with_report(
    op: &RSepOperator,
    x_obs: &Mat,
    pattern: &MissingPattern,
    opts: &SolveOptions,
) -> Result<(Mat, SolveReport)> {
    let (k1, k2) = (op.k1(), op.k2());
    if x_obs.shape() != (k1, k2) {
        return Err(PscaError::ShapeMismatch(format!(
            "blup: observed matrix must be {}x{}, got {}x{}",
            k1,
            k2,
            x_obs.nrows(),
            x_obs.ncols()
        )));
    }
    pattern.validate(k1, k2)?;
    if pattern.fully_observed(k1, k2) {
        let report = SolveReport {
            iterations: 0,
            final_relative_residual: 0.0,
            converged: true,
            preconditioner_used: crate::operator::PrecondKind::None,
            final_iterate_diff: 0.0,
        };
        return Ok((x_obs.clone(), report));
    }

    let (padded, report) = match pattern {
        MissingPattern::RowCol {
            missing_rows,
            missing_cols,
        } => {
            let obs_rows = complement(missing_rows, k1);
            let obs_cols = complement(missing_cols, k2);
            let restricted = restrict_operator(op, &obs_rows, &obs_cols)?;
            let x_block = submatrix(x_obs, &obs_rows, &obs_cols);
            let (w, report) = crate::solve::pcg_solve(&restricted, &x_block, opts)?;
            // Zero-pad the solution back to the full grid.
            let mut padded = Mat::zeros(k1, k2);
            for (bi, &i) in obs_rows.iter().enumerate() {
                for (bj, &j) in obs_cols.iter().enumerate() {
                    padded[(i, j)] = w[(bi, bj)];
                }
            }
            (padded, report)
        }
        MissingPattern::Arbitrary { observed } => {
            let mask = |m: &Mat| -> Mat {
                Mat::from_fn(k1, k2, |i, j| if observed[i * k2 + j] { m[(i, j)] } else { 0.0 })
            };
            let precond = resolve_preconditioner(op, opts.preconditioner)?;
            let apply = |v: &Mat| mask(&op.apply(&mask(v)).expect("shape fixed"));
            let psolve = |r: &Mat| mask(&precond.solve(&mask(r)));
            let y = mask(x_obs);
            let (w, report) = pcg_core(&apply, &psolve, precond.kind(), &y, opts, None);
            (mask(&w), report)
        }
    };

    // One full application reads the cross-covariance off the zero-padding.
    let z = op.apply(&padded)?;
    let mut out = x_obs.clone();
    for i in 0..k1 {
        for j in 0..k2 {
            if !pattern.is_observed(i, j, k2) {
                out[(i, j)] = z[(i, j)];
            }
        }
    }
    Ok((out, report))
}

/// Convenience wrapper that positivizes with `epsilon = 1e-8 * lambda_max`
/// before predicting, the guard the prediction cross-validation pipeline
/// applies implicitly.
pub fn blup_positivized(
    op: &RSepOperator,
    x_obs: &Mat,
    pattern: &MissingPattern,
    opts: &SolveOptions,
) -> Result<Mat> {
    let probe = op.extremal_eigen(1e-8, 10 * op.k1() * op.k2())?;
    let (pos, _) = positivize(op, 1e-8 * probe.lambda_max.max(0.0), 1e-8)?;
    blup(&pos, x_obs, pattern, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::SepComponent;
    use rand::SeedableRng;

    fn spd_operator(r: usize, k1: usize, k2: usize, seed: u64) -> RSepOperator {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let c = crate::testutil::random_self_adjoint_psd(k1, k2, &mut rng);
        let est = crate::fit::fit(
            &crate::pip::CovView::dense(&c),
            &crate::fit::FitOptions::new(r),
        )
        .unwrap();
        let op = RSepOperator::from_estimate(&est, 0.0).unwrap();
        let (pos, _) = positivize(&op, 1e-2, 1e-10).unwrap();
        pos
    }

    #[test]
    fn white_noise_predicts_zero() {
        let op = RSepOperator::new(
            vec![SepComponent {
                score: 2.0,
                left: Mat::identity(3, 3) / 3f64.sqrt(),
                right: Mat::identity(3, 3) / 3f64.sqrt(),
            }],
            0.0,
            3,
            3,
        )
        .unwrap();
        let x = Mat::from_row_slice(3, 3, &[1.0; 9]);
        let pattern = MissingPattern::RowCol {
            missing_rows: vec![1],
            missing_cols: vec![],
        };
        let out = blup(&op, &x, &pattern, &SolveOptions::default()).unwrap();
        for j in 0..3 {
            assert!(out[(1, j)].abs() < 1e-10);
            assert_eq!(out[(0, j)], 1.0);
            assert_eq!(out[(2, j)], 1.0);
        }
    }

    #[test]
    fn fully_observed_passthrough() {
        let op = spd_operator(2, 3, 3, 70);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(71);
        let x = crate::testutil::random_matrix(3, 3, &mut rng);
        let pattern = MissingPattern::RowCol {
            missing_rows: vec![],
            missing_cols: vec![],
        };
        let out = blup(&op, &x, &pattern, &SolveOptions::default()).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn empty_observed_rejected() {
        let op = spd_operator(1, 2, 2, 72);
        let x = Mat::zeros(2, 2);
        let pattern = MissingPattern::RowCol {
            missing_rows: vec![0, 1],
            missing_cols: vec![],
        };
        assert!(matches!(
            blup(&op, &x, &pattern, &SolveOptions::default()),
            Err(PscaError::EmptyObservedSet)
        ));
        let pattern = MissingPattern::Arbitrary {
            observed: vec![false; 4],
        };
        assert!(matches!(
            blup(&op, &x, &pattern, &SolveOptions::default()),
            Err(PscaError::EmptyObservedSet)
        ));
    }

    #[test]
    fn restrict_full_sets_is_identity() {
        let op = spd_operator(2, 3, 4, 73);
        let restricted = restrict_operator(&op, &[0, 1, 2], &[0, 1, 2, 3]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(74);
        let x = crate::testutil::random_matrix(3, 4, &mut rng);
        let a = op.apply(&x).unwrap();
        let b = restricted.apply(&x).unwrap();
        assert!((a - b).norm() < 1e-14);
    }

    #[test]
    fn restrict_single_entry_is_scalar() {
        let op = spd_operator(2, 3, 3, 75);
        let restricted = restrict_operator(&op, &[1], &[2]).unwrap();
        let x = Mat::from_row_slice(1, 1, &[1.0]);
        let got = restricted.apply(&x).unwrap()[(0, 0)];
        let expected: f64 = op
            .components()
            .iter()
            .map(|c| c.score * c.left[(1, 1)] * c.right[(2, 2)])
            .sum::<f64>()
            + op.ridge();
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn restricted_apply_matches_masked_full_apply() {
        let op = spd_operator(3, 4, 4, 76);
        let rows = vec![0, 2, 3];
        let cols = vec![1, 2];
        let restricted = restrict_operator(&op, &rows, &cols).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let w = crate::testutil::random_matrix(3, 2, &mut rng);
        // Embed, apply the full operator, restrict: must agree because the
        // restriction of an operator to a product index set is principal.
        let mut embedded = Mat::zeros(4, 4);
        for (bi, &i) in rows.iter().enumerate() {
            for (bj, &j) in cols.iter().enumerate() {
                embedded[(i, j)] = w[(bi, bj)];
            }
        }
        let full = op.apply(&embedded).unwrap();
        let direct = restricted.apply(&w).unwrap();
        for (bi, &i) in rows.iter().enumerate() {
            for (bj, &j) in cols.iter().enumerate() {
                assert!((full[(i, j)] - direct[(bi, bj)]).abs() < 1e-12);
            }
        }
    }

    fn dense_blup_oracle(
        op: &RSepOperator,
        x_obs: &Mat,
        pattern: &MissingPattern,
    ) -> Mat {
        let (k1, k2) = (op.k1(), op.k2());
        let est = crate::fit::ScdEstimate {
            components: op.components().to_vec(),
            k1,
            k2,
            diagnostics: Default::default(),
        };
        let mut sigma = crate::fit::reconstruct_dense(&est)
            .unwrap()
            .matricize_operator();
        for i in 0..sigma.nrows() {
            sigma[(i, i)] += op.ridge();
        }
        let obs: Vec<usize> = (0..k1 * k2)
            .filter(|&p| pattern.is_observed(p / k2, p % k2, k2))
            .collect();
        let miss: Vec<usize> = (0..k1 * k2)
            .filter(|&p| !pattern.is_observed(p / k2, p % k2, k2))
            .collect();
        let s22 = Mat::from_fn(obs.len(), obs.len(), |a, b| sigma[(obs[a], obs[b])]);
        let s12 = Mat::from_fn(miss.len(), obs.len(), |a, b| sigma[(miss[a], obs[b])]);
        let x2 = nalgebra::DVector::from_fn(obs.len(), |a, _| {
            x_obs[(obs[a] / k2, obs[a] % k2)]
        });
        let sol = s22.lu().solve(&x2).unwrap();
        let pred = s12 * sol;
        let mut out = x_obs.clone();
        for (a, &p) in miss.iter().enumerate() {
            out[(p / k2, p % k2)] = pred[a];
        }
        out
    }

    #[test]
    fn rowcol_matches_dense_conditioning_oracle() {
        let op = spd_operator(2, 6, 6, 80);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(81);
        let x = crate::testutil::random_matrix(6, 6, &mut rng);
        let pattern = MissingPattern::RowCol {
            missing_rows: vec![0, 4],
            missing_cols: vec![2],
        };
        let got = blup(&op, &x, &pattern, &SolveOptions::default()).unwrap();
        let want = dense_blup_oracle(&op, &x, &pattern);
        assert!((&got - &want).norm() <= 1e-8 * want.norm().max(1.0));
    }

    #[test]
    fn arbitrary_matches_dense_conditioning_oracle() {
        let op = spd_operator(2, 5, 5, 82);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(83);
        let x = crate::testutil::random_matrix(5, 5, &mut rng);
        let observed: Vec<bool> = (0..25).map(|p| p % 3 != 0).collect();
        let pattern = MissingPattern::Arbitrary { observed };
        let got = blup(&op, &x, &pattern, &SolveOptions::default()).unwrap();
        let want = dense_blup_oracle(&op, &x, &pattern);
        assert!((&got - &want).norm() <= 1e-8 * want.norm().max(1.0));
    }
}
