//! Seeded random generators shared by unit, property and acceptance tests.
#![doc(hidden)]

use crate::cov4::DenseCov4;
use crate::linalg::Mat;
use crate::pip::SampleSet;
use rand::Rng;
use rand_distr::StandardNormal;

/// Random PSD self-adjoint order-4 tensor: `G G^T` on the matricized space,
/// reshaped back to tensor indices.
pub fn random_self_adjoint_psd(k1: usize, k2: usize, rng: &mut impl Rng) -> DenseCov4 {
    let n = k1 * k2;
    let g = Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let m = (&g * g.transpose()) / n as f64;
    let mut c = DenseCov4::zeros(k1, k2);
    for i in 0..k1 {
        for j in 0..k2 {
            for k in 0..k1 {
                for l in 0..k2 {
                    c.set(i, j, k, l, m[(i * k2 + j, k * k2 + l)]);
                }
            }
        }
    }
    c
}

/// Random self-adjoint (not necessarily PSD) order-4 tensor.
pub fn random_self_adjoint(k1: usize, k2: usize, rng: &mut impl Rng) -> DenseCov4 {
    let n = k1 * k2;
    let g = Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let m = (&g + g.transpose()) / 2.0;
    let mut c = DenseCov4::zeros(k1, k2);
    for i in 0..k1 {
        for j in 0..k2 {
            for k in 0..k1 {
                for l in 0..k2 {
                    c.set(i, j, k, l, m[(i * k2 + j, k * k2 + l)]);
                }
            }
        }
    }
    c
}

/// Centered sample set with i.i.d. standard normal entries.
pub fn random_samples(k1: usize, k2: usize, n: usize, rng: &mut impl Rng) -> SampleSet {
    let samples = (0..n)
        .map(|_| Mat::from_fn(k1, k2, |_, _| rng.sample::<f64, _>(StandardNormal)))
        .collect();
    SampleSet::new(samples, true).unwrap()
}

/// Random symmetric PSD matrix `G G^T / k`.
pub fn random_psd_matrix(k: usize, rng: &mut impl Rng) -> Mat {
    let g = Mat::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&g * g.transpose()) / k as f64
}

/// Random PSD tensor built as a mixture of separable terms with symmetric
/// PSD unit-norm factors plus a small identity ridge. Unlike Wishart-type
/// draws, the antisymmetric sector of its decomposition is exactly zero, so
/// the symmetric-subspace fitter can reach every component.
pub fn random_separable_mixture_psd(
    k1: usize,
    k2: usize,
    r: usize,
    ridge: f64,
    rng: &mut impl Rng,
) -> DenseCov4 {
    let mut c = DenseCov4::zeros(k1, k2);
    let mut scores: Vec<f64> = (0..r).map(|_| rng.random_range(0.2..1.0)).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    for &score in &scores {
        let a = random_psd_matrix(k1, rng);
        let a = &a / a.norm();
        let b = random_psd_matrix(k2, rng);
        let b = &b / b.norm();
        crate::cov4::add_separable(&mut c, score, &a, &b);
    }
    if ridge > 0.0 {
        let i1 = Mat::identity(k1, k1);
        let i2 = Mat::identity(k2, k2);
        crate::cov4::add_separable(&mut c, ridge, &i1, &i2);
    }
    c
}

/// Random matrix with i.i.d. standard normal entries.
pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}
