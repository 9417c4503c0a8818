//! Power iteration with deflation for the principal separable components.
//!
//! Components are extracted one at a time. For component `r`, the view is
//! deflated by the `r - 1` components already found, and a two-sided power
//! iteration alternates partial inner products:
//!
//! ```text
//! B <- T1(C~, A) / ||.||
//! A <- T2(C~, B),  sigma <- ||A||,  A <- A / sigma
//! ```
//!
//! seeded by one `T2` half-step from the right-factor init. Convergence is
//! declared when the left factor moves less than `tol` in Frobenius norm
//! between sweeps. Scores are non-negative by construction and the factor
//! pair is sign-normalized jointly so the largest-magnitude entry of the
//! left factor is positive.

use crate::cov4::{add_separable, DenseCov4, ORACLE_GUARD_DEFAULT};
use crate::error::{PscaError, Result};
use crate::linalg::{apply_sign_rule, derive_seed, frob_inner, random_symmetric, Mat};
use crate::pip::{pip_t1, pip_t2, CovView};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Norms below this are treated as an annihilated iterate.
const ZERO_PIP_THRESHOLD: f64 = 1e-300;

/// One separable component: a non-negative score and two unit-norm symmetric
/// factor matrices.
#[derive(Debug, Clone)]
pub struct SepComponent {
    pub score: f64,
    /// `k1 x k1` left factor.
    pub left: Mat,
    /// `k2 x k2` right factor.
    pub right: Mat,
}

impl SepComponent {
    /// Check the component invariants: unit factor norms within 1e-10,
    /// symmetry within 1e-8 relative, non-negative score.
    pub fn validate(&self) -> Result<()> {
        if self.score < 0.0 {
            return Err(PscaError::InvalidOptions("negative component score".into()));
        }
        for (name, m) in [("left", &self.left), ("right", &self.right)] {
            if (m.norm() - 1.0).abs() > 1e-10 {
                return Err(PscaError::InvalidOptions(format!(
                    "{name} factor norm {} is not 1",
                    m.norm()
                )));
            }
            if !crate::linalg::is_symmetric(m, 1e-8) {
                return Err(PscaError::InvalidOptions(format!(
                    "{name} factor is not symmetric"
                )));
            }
        }
        Ok(())
    }
}

/// Per-component convergence bookkeeping.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations_per_component: Vec<usize>,
    pub final_residual_per_component: Vec<f64>,
    pub converged_flags: Vec<bool>,
    pub score_gaps: Vec<f64>,
}

/// An ordered list of separable components with fit diagnostics; represents
/// `sum_r score_r * left_r (x) right_r`.
#[derive(Debug, Clone)]
pub struct ScdEstimate {
    pub components: Vec<SepComponent>,
    pub k1: usize,
    pub k2: usize,
    pub diagnostics: FitDiagnostics,
}

impl ScdEstimate {
    pub fn degree(&self) -> usize {
        self.components.len()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.score).collect()
    }

    /// Keep the leading `r` components (diagnostics truncated to match).
    pub fn truncated(&self, r: usize) -> ScdEstimate {
        let r = r.min(self.components.len());
        ScdEstimate {
            components: self.components[..r].to_vec(),
            k1: self.k1,
            k2: self.k2,
            diagnostics: FitDiagnostics {
                iterations_per_component: self.diagnostics.iterations_per_component
                    [..r.min(self.diagnostics.iterations_per_component.len())]
                    .to_vec(),
                final_residual_per_component: self.diagnostics.final_residual_per_component
                    [..r.min(self.diagnostics.final_residual_per_component.len())]
                    .to_vec(),
                converged_flags: self.diagnostics.converged_flags
                    [..r.min(self.diagnostics.converged_flags.len())]
                    .to_vec(),
                score_gaps: score_gaps(
                    &self.components[..r]
                        .iter()
                        .map(|c| c.score)
                        .collect::<Vec<_>>(),
                ),
            },
        }
    }

    /// `||C_r||_F^2 = sum_{s<=r} score_s^2` by factor orthonormality.
    pub fn squared_norm_up_to(&self, r: usize) -> f64 {
        self.components[..r.min(self.components.len())]
            .iter()
            .map(|c| c.score * c.score)
            .sum()
    }
}

/// Initialization policy for the power iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Init {
    /// Identity-normalized init for the first component (PSD, hence never
    /// orthogonal to the PSD leading factor of a PSD covariance); seeded
    /// random symmetric inits for the rest.
    Identity,
    /// Seeded random symmetric inits for every component.
    RandomSymmetric(u64),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitOptions {
    /// Target degree-of-separability.
    pub r: usize,
    /// Sweep-to-sweep Frobenius change of the left factor at which a
    /// component is declared converged.
    pub tol: f64,
    /// Per-component sweep cap.
    pub max_iter: usize,
    pub init: Init,
    /// Fixed reduction order for sample sums. The default implementation is
    /// deterministic regardless of this flag; it is kept as an explicit
    /// contract for callers.
    pub deterministic: bool,
}

impl FitOptions {
    pub fn new(r: usize) -> Self {
        FitOptions {
            r,
            tol: 1e-10,
            max_iter: 1000,
            init: Init::Identity,
            deterministic: true,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    fn validate(&self, k1: usize, k2: usize) -> Result<()> {
        let max = (k1 * k1).min(k2 * k2);
        if self.r < 1 || self.r > max {
            return Err(PscaError::InvalidDegree { r: self.r, max });
        }
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(PscaError::InvalidOptions("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(PscaError::InvalidOptions("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Outcome of a single-component fit.
#[derive(Debug, Clone)]
pub struct ComponentFit {
    pub component: SepComponent,
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    /// Whether the score had stagnated (relative change below tol) when the
    /// iteration stopped; informational only, never a stopping rule.
    pub score_stagnated: bool,
}

/// Extract one separable component of `cov` by power iteration starting from
/// the given right-factor init. Errors with [`PscaError::ZeroPip`] when the
/// view annihilates the iterate (zero residual or an orthogonal init).
pub fn fit_component(cov: &CovView, init_right: &Mat, opts: &FitOptions) -> Result<ComponentFit> {
    let (_, k2) = cov.dims();
    if init_right.shape() != (k2, k2) {
        return Err(PscaError::ShapeMismatch(format!(
            "fit_component: init must be {}x{}, got {}x{}",
            k2,
            k2,
            init_right.nrows(),
            init_right.ncols()
        )));
    }
    let init_norm = init_right.norm();
    if init_norm < ZERO_PIP_THRESHOLD {
        return Err(PscaError::InvalidOptions("zero init".into()));
    }

    let mut b = init_right / init_norm;
    // Half-step: turn the right init into a left iterate.
    let a_raw = pip_t2(cov, &b)?;
    let mut sigma = a_raw.norm();
    if sigma < ZERO_PIP_THRESHOLD {
        return Err(PscaError::ZeroPip);
    }
    let mut a = a_raw / sigma;

    let mut iterations = 0;
    let mut delta = f64::INFINITY;
    let mut converged = false;
    let mut score_stagnated = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let b_raw = pip_t1(cov, &a)?;
        let bn = b_raw.norm();
        if bn < ZERO_PIP_THRESHOLD {
            return Err(PscaError::ZeroPip);
        }
        b = b_raw / bn;
        let a_raw = pip_t2(cov, &b)?;
        let sigma_prev = sigma;
        sigma = a_raw.norm();
        if sigma < ZERO_PIP_THRESHOLD {
            return Err(PscaError::ZeroPip);
        }
        score_stagnated = (sigma - sigma_prev).abs() < opts.tol * sigma;
        let a_new = a_raw / sigma;
        delta = (&a_new - &a).norm();
        a = a_new;
        if delta < opts.tol {
            converged = true;
            break;
        }
    }

    apply_sign_rule(&mut a, &mut b);
    Ok(ComponentFit {
        component: SepComponent {
            score: sigma,
            left: a,
            right: b,
        },
        iterations,
        final_residual: delta,
        converged,
        score_stagnated,
    })
}

/// Fit the best R-separable approximation of the viewed covariance by
/// repeated single-component extraction with deflation. Components are
/// re-sorted by score at the end, since deflation order can disagree with
/// magnitude order under near-ties.
pub fn fit(cov: &CovView, opts: &FitOptions) -> Result<ScdEstimate> {
    let (k1, k2) = cov.dims();
    opts.validate(k1, k2)?;

    let mut fits: Vec<ComponentFit> = Vec::with_capacity(opts.r);
    for r in 1..=opts.r {
        let found: Vec<SepComponent> = fits.iter().map(|f| f.component.clone()).collect();
        let view = cov.clone().deflate(&found);
        let mut outcome = None;
        for restart in 0..4u64 {
            let init = init_matrix(k2, r, restart, &opts.init);
            match fit_component(&view, &init, opts) {
                Ok(f) => {
                    outcome = Some(f);
                    break;
                }
                Err(PscaError::ZeroPip) => continue,
                Err(e) => return Err(e),
            }
        }
        let fitres = match outcome {
            Some(f) => f,
            // Every restart was annihilated: the residual is numerically
            // zero. Emit an exact zero component on factors orthogonal to
            // everything found so far.
            None => zero_component(&found, k1, k2),
        };
        fits.push(fitres);
    }

    fits.sort_by(|x, y| y.component.score.total_cmp(&x.component.score));
    let scores: Vec<f64> = fits.iter().map(|f| f.component.score).collect();
    let diagnostics = FitDiagnostics {
        iterations_per_component: fits.iter().map(|f| f.iterations).collect(),
        final_residual_per_component: fits.iter().map(|f| f.final_residual).collect(),
        converged_flags: fits.iter().map(|f| f.converged).collect(),
        score_gaps: score_gaps(&scores),
    };
    Ok(ScdEstimate {
        components: fits.into_iter().map(|f| f.component).collect(),
        k1,
        k2,
        diagnostics,
    })
}

fn score_gaps(scores: &[f64]) -> Vec<f64> {
    (0..scores.len())
        .map(|i| {
            if i + 1 < scores.len() {
                scores[i] - scores[i + 1]
            } else {
                scores[i]
            }
        })
        .collect()
}

fn init_matrix(k2: usize, r: usize, restart: u64, init: &Init) -> Mat {
    let identity = Mat::identity(k2, k2) / (k2 as f64).sqrt();
    match init {
        Init::Identity => {
            if r == 1 && restart == 0 {
                identity
            } else {
                // Fixed internal stream keeps the default policy deterministic.
                seeded_symmetric(k2, derive_seed(0x5eed_5eed, &[r as u64, restart]))
            }
        }
        Init::RandomSymmetric(seed) => {
            seeded_symmetric(k2, derive_seed(*seed, &[r as u64, restart]))
        }
    }
}

fn seeded_symmetric(k: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = random_symmetric(k, &mut rng);
    let n = m.norm();
    if n > 0.0 {
        m / n
    } else {
        Mat::identity(k, k) / (k as f64).sqrt()
    }
}

/// A zero-score component whose factors are unit-norm symmetric matrices
/// orthogonal to all factors found so far; used when the deflated residual
/// is exactly zero.
fn zero_component(found: &[SepComponent], k1: usize, k2: usize) -> ComponentFit {
    let lefts: Vec<&Mat> = found.iter().map(|c| &c.left).collect();
    let rights: Vec<&Mat> = found.iter().map(|c| &c.right).collect();
    ComponentFit {
        component: SepComponent {
            score: 0.0,
            left: orthogonal_filler(&lefts, k1),
            right: orthogonal_filler(&rights, k2),
        },
        iterations: 0,
        final_residual: 0.0,
        converged: true,
        score_stagnated: true,
    }
}

/// First symmetric basis matrix (identity, then diagonal units, then
/// symmetrized off-diagonal units) with a non-negligible remainder after
/// Gram-Schmidt against `prev`, normalized.
fn orthogonal_filler(prev: &[&Mat], k: usize) -> Mat {
    let mut dictionary: Vec<Mat> = Vec::new();
    dictionary.push(Mat::identity(k, k) / (k as f64).sqrt());
    for d in 0..k {
        let mut m = Mat::zeros(k, k);
        m[(d, d)] = 1.0;
        dictionary.push(m);
    }
    for i in 0..k {
        for j in (i + 1)..k {
            let mut m = Mat::zeros(k, k);
            m[(i, j)] = std::f64::consts::FRAC_1_SQRT_2;
            m[(j, i)] = std::f64::consts::FRAC_1_SQRT_2;
            dictionary.push(m);
        }
    }
    for cand in dictionary {
        let mut residual = cand.clone();
        for p in prev {
            let coef = residual.dot(p) / p.dot(p);
            residual -= (*p).clone() * coef;
        }
        let n = residual.norm();
        if n > 1e-6 {
            return residual / n;
        }
    }
    // Unreachable for r <= min(k1^2, k2^2); fall back to the identity.
    Mat::identity(k, k) / (k as f64).sqrt()
}

/// Materialize the estimate as a dense tensor (oracle sizes only).
pub fn reconstruct_dense(est: &ScdEstimate) -> Result<DenseCov4> {
    reconstruct_dense_with_guard(est, ORACLE_GUARD_DEFAULT)
}

pub fn reconstruct_dense_with_guard(est: &ScdEstimate, guard: usize) -> Result<DenseCov4> {
    if est.k1 > guard || est.k2 > guard {
        return Err(PscaError::OracleGuard {
            k1: est.k1,
            k2: est.k2,
            guard,
        });
    }
    let mut c = DenseCov4::zeros(est.k1, est.k2);
    for comp in &est.components {
        add_separable(&mut c, comp.score, &comp.left, &comp.right);
    }
    Ok(c)
}

/// Pairwise factor orthogonality defect of an estimate: the largest
/// `|<A_i, A_j>|` or `|<B_i, B_j>|` over `i != j`.
pub fn orthogonality_defect(est: &ScdEstimate) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..est.components.len() {
        for j in 0..i {
            let ca = frob_inner(&est.components[i].left, &est.components[j].left).unwrap();
            let cb = frob_inner(&est.components[i].right, &est.components[j].right).unwrap();
            worst = worst.max(ca.abs()).max(cb.abs());
        }
    }
    worst
}
