//! Principal separable component analysis for matrix-valued data.
//!
//! The covariance of `K1 x K2` matrix samples is an order-4 tensor that is
//! prohibitive to form at realistic grid sizes. This crate estimates a
//! truncated separable expansion `sum_r sigma_r A_r (x) B_r` of that
//! covariance directly from data with partial-inner-product power iteration,
//! and then works with the fitted operator without ever materializing the
//! tensor: fast application, extremal eigenvalues, positivization,
//! preconditioned conjugate gradient inversion, prediction of missing
//! entries, and cross-validated selection of the truncation degree.
//!
//! Dense-tensor code paths exist solely as small-grid oracles for testing
//! and experiments, guarded by an explicit size limit.

pub mod cov4;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod io;
pub mod linalg;
pub mod operator;
pub mod pip;
pub mod predict;
pub mod select;
pub mod simulate;
pub mod solve;
pub mod testutil;

pub use cov4::{brute_force_scd, empirical_cov_dense, rearrange, DenseCov4, ScdFull};
pub use error::{PscaError, Result};
pub use fit::{fit, fit_component, reconstruct_dense, FitOptions, Init, ScdEstimate, SepComponent};
pub use linalg::{frob_inner, frob_norm, sym_eigen, Mat, SymmetricEigen};
pub use operator::{positivize, Preconditioner, RSepOperator};
pub use pip::{pip_t1, pip_t2, CovView, SampleSet};
pub use predict::{blup, restrict_operator, MissingPattern};
pub use select::{cv_frobenius, cv_prediction, scree, CvCurve, CvOptions};
pub use simulate::{gneiting_dense, random_rsep, sample_gaussian, GneitingParams, RandomCovSpec};
pub use solve::{pcg_solve, SolveOptions, SolveReport, StopRule};
