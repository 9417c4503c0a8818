//! Partial inner products `T1` and `T2` over dense tensors, streamed sample
//! sets, and deflated views.
//!
//! For a covariance `C` on the product space and a weight matrix `W`, the
//! partial inner products contract one factor:
//!
//! ```text
//! T2(C, W)[i,k] = sum_{j,l} C[i,j,k,l] W[j,l]      (W is k2 x k2)
//! T1(C, W)[j,l] = sum_{i,k} C[i,j,k,l] W[i,k]      (W is k1 x k1)
//! ```
//!
//! On the empirical covariance these reduce to sums over the data,
//! `T2 = divisor^-1 sum_n X~_n W X~_n^T` and `T1 = divisor^-1 sum_n X~_n^T W X~_n`,
//! which is what makes the whole fitting pipeline run in `O(N K^3)` per sweep
//! without ever forming the order-4 tensor. Deflation against already-found
//! separable components is evaluated lazily by linearity.

use crate::cov4::DenseCov4;
use crate::error::{PscaError, Result};
use crate::fit::SepComponent;
use crate::linalg::{frob_inner, is_symmetric, symmetrize, Mat};
use rayon::prelude::*;

/// Samples below this count are summed sequentially rather than fanned out.
const PAR_THRESHOLD: usize = 64;

/// Fixed chunk size for parallel sample sums. Partial sums are combined in
/// chunk order, so results are bitwise identical under any thread count.
const PAR_CHUNK: usize = 32;

/// A set of `N` matrix-valued samples of common shape with centering
/// metadata. Immutable after construction; the centered (effective) samples
/// are cached once.
#[derive(Debug, Clone)]
pub struct SampleSet {
    samples: Vec<Mat>,
    center: bool,
    unbiased: bool,
    mean: Mat,
    effective: Vec<Mat>,
}

impl SampleSet {
    /// `center = true` subtracts the sample mean from every sample once, up
    /// front. The covariance divisor is `N` (see [`SampleSet::new_unbiased`]).
    pub fn new(samples: Vec<Mat>, center: bool) -> Result<Self> {
        Self::build(samples, center, false)
    }

    /// Like [`SampleSet::new`] but with the `N - 1` covariance divisor.
    pub fn new_unbiased(samples: Vec<Mat>, center: bool) -> Result<Self> {
        Self::build(samples, center, true)
    }

    fn build(samples: Vec<Mat>, center: bool, unbiased: bool) -> Result<Self> {
        if samples.is_empty() {
            return Err(PscaError::InvalidOptions("SampleSet needs N >= 1".into()));
        }
        if unbiased && samples.len() < 2 {
            return Err(PscaError::InvalidOptions(
                "unbiased divisor needs N >= 2".into(),
            ));
        }
        let shape = samples[0].shape();
        if shape.0 == 0 || shape.1 == 0 {
            return Err(PscaError::InvalidOptions("samples must be non-empty".into()));
        }
        for (n, s) in samples.iter().enumerate() {
            if s.shape() != shape {
                return Err(PscaError::ShapeMismatch(format!(
                    "sample {} has shape {:?}, expected {:?}",
                    n,
                    s.shape(),
                    shape
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(PscaError::NonFinite(format!("sample {}", n)));
            }
        }
        let n = samples.len() as f64;
        let mut mean = Mat::zeros(shape.0, shape.1);
        for s in &samples {
            mean += s;
        }
        mean /= n;
        let effective = if center {
            samples.iter().map(|s| s - &mean).collect()
        } else {
            samples.clone()
        };
        Ok(SampleSet {
            samples,
            center,
            unbiased,
            mean,
            effective,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn k1(&self) -> usize {
        self.samples[0].nrows()
    }

    pub fn k2(&self) -> usize {
        self.samples[0].ncols()
    }

    pub fn center(&self) -> bool {
        self.center
    }

    pub fn mean(&self) -> &Mat {
        &self.mean
    }

    pub fn samples(&self) -> &[Mat] {
        &self.samples
    }

    /// Effective samples: centered if `center` is set, raw otherwise.
    pub fn effective(&self) -> &[Mat] {
        &self.effective
    }

    /// Covariance divisor: `N`, or `N - 1` when unbiased.
    pub fn divisor(&self) -> f64 {
        if self.unbiased {
            (self.samples.len() - 1) as f64
        } else {
            self.samples.len() as f64
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Base<'a> {
    Dense(&'a DenseCov4),
    DataLevel(&'a SampleSet),
}

/// A self-adjoint covariance to take partial inner products against: either
/// an explicit tensor, a sample set standing for its empirical covariance, or
/// either of those with a list of separable components subtracted.
///
/// Deflation never materializes the residual; [`CovView::deflate`] extends
/// the subtracted list, so nesting is flattened by construction.
#[derive(Debug, Clone)]
pub struct CovView<'a> {
    base: Base<'a>,
    subtracted: Vec<SepComponent>,
}

impl<'a> CovView<'a> {
    pub fn dense(c: &'a DenseCov4) -> Self {
        CovView {
            base: Base::Dense(c),
            subtracted: Vec::new(),
        }
    }

    pub fn data_level(s: &'a SampleSet) -> Self {
        CovView {
            base: Base::DataLevel(s),
            subtracted: Vec::new(),
        }
    }

    /// Subtract further separable components from the view.
    pub fn deflate(mut self, components: &[SepComponent]) -> Self {
        self.subtracted.extend(components.iter().cloned());
        self
    }

    pub fn dims(&self) -> (usize, usize) {
        match self.base {
            Base::Dense(c) => (c.k1(), c.k2()),
            Base::DataLevel(s) => (s.k1(), s.k2()),
        }
    }

    pub fn subtracted(&self) -> &[SepComponent] {
        &self.subtracted
    }

    /// Frobenius inner product of the viewed covariance with a separable
    /// probe, `<C, A (x) B>`; used by oracle-size error expansions.
    pub fn inner_separable(&self, a: &Mat, b: &Mat) -> Result<f64> {
        let t2 = pip_t2(self, b)?;
        frob_inner(&t2, a)
    }
}

/// `T2(C, W)`: contract the second (k2 x k2) factor; returns k1 x k1.
pub fn pip_t2(cov: &CovView, w: &Mat) -> Result<Mat> {
    let (_k1, k2) = cov.dims();
    if w.shape() != (k2, k2) {
        return Err(PscaError::ShapeMismatch(format!(
            "pip_t2: weight must be {}x{}, got {}x{}",
            k2,
            k2,
            w.nrows(),
            w.ncols()
        )));
    }
    let mut out = match cov.base {
        Base::Dense(c) => dense_t2(c, w),
        Base::DataLevel(s) => data_level_sum(s, |x| x * w * x.transpose()),
    };
    for comp in &cov.subtracted {
        let coef = comp.score * frob_inner(&comp.right, w)?;
        out -= comp.left.clone() * coef;
    }
    if is_symmetric(w, 1e-12) {
        out = symmetrize(&out);
    }
    Ok(out)
}

/// `T1(C, W)`: contract the first (k1 x k1) factor; returns k2 x k2.
pub fn pip_t1(cov: &CovView, w: &Mat) -> Result<Mat> {
    let (k1, _k2) = cov.dims();
    if w.shape() != (k1, k1) {
        return Err(PscaError::ShapeMismatch(format!(
            "pip_t1: weight must be {}x{}, got {}x{}",
            k1,
            k1,
            w.nrows(),
            w.ncols()
        )));
    }
    let mut out = match cov.base {
        Base::Dense(c) => dense_t1(c, w),
        Base::DataLevel(s) => data_level_sum(s, |x| x.transpose() * w * x),
    };
    for comp in &cov.subtracted {
        let coef = comp.score * frob_inner(&comp.left, w)?;
        out -= comp.right.clone() * coef;
    }
    if is_symmetric(w, 1e-12) {
        out = symmetrize(&out);
    }
    Ok(out)
}

fn dense_t2(c: &DenseCov4, w: &Mat) -> Mat {
    let (k1, k2) = (c.k1(), c.k2());
    let mut out = Mat::zeros(k1, k1);
    for i in 0..k1 {
        for k in 0..k1 {
            let mut acc = 0.0;
            for j in 0..k2 {
                for l in 0..k2 {
                    acc += c.get(i, j, k, l) * w[(j, l)];
                }
            }
            out[(i, k)] = acc;
        }
    }
    out
}

fn dense_t1(c: &DenseCov4, w: &Mat) -> Mat {
    let (k1, k2) = (c.k1(), c.k2());
    let mut out = Mat::zeros(k2, k2);
    for j in 0..k2 {
        for l in 0..k2 {
            let mut acc = 0.0;
            for i in 0..k1 {
                for k in 0..k1 {
                    acc += c.get(i, j, k, l) * w[(i, k)];
                }
            }
            out[(j, l)] = acc;
        }
    }
    out
}

/// Sum `f(x~_n)` over the effective samples, divided by the covariance
/// divisor. Partial sums are taken over fixed index chunks and folded in
/// chunk order, so the result is bitwise independent of thread scheduling.
fn data_level_sum<F>(s: &SampleSet, f: F) -> Mat
where
    F: Fn(&Mat) -> Mat + Sync,
{
    let eff = s.effective();
    let (k1o, k2o) = f(&eff[0]).shape();
    let total = if eff.len() < PAR_THRESHOLD {
        let mut acc = Mat::zeros(k1o, k2o);
        for x in eff {
            acc += f(x);
        }
        acc
    } else {
        let partials: Vec<Mat> = eff
            .par_chunks(PAR_CHUNK)
            .map(|xs| {
                let mut acc = Mat::zeros(k1o, k2o);
                for x in xs {
                    acc += f(x);
                }
                acc
            })
            .collect();
        let mut acc = Mat::zeros(k1o, k2o);
        for p in partials {
            acc += p;
        }
        acc
    };
    total / s.divisor()
}
