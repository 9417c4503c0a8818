//! Degree-of-separability selection by cross-validation, plus scree data.
//!
//! Both schemes fit each training set once at `r_max` and reuse leading
//! subsets of the decomposition for every smaller degree. The Frobenius
//! scheme minimizes the unbiased risk surrogate
//! `||C_r||^2 - (2/N) sum_j <X_j, C_r^{(-fold j)} X_j>`; the prediction
//! scheme holds out random row/column subsets of each validation sample and
//! scores squared prediction error of the BLUP.
//!
//! Cross-validation semantics assume zero-mean data: when the sample set is
//! marked centered, all samples are centered once by the full-sample mean
//! and folds are treated as zero-mean throughout, which also makes the
//! leave-one-out limit coincide with the textbook objective.

use crate::error::{PscaError, Result};
use crate::fit::{fit, FitOptions, ScdEstimate};
use crate::linalg::{derive_seed, Mat};
use crate::operator::{positivize, RSepOperator};
use crate::pip::{CovView, SampleSet};
use crate::predict::{blup, MissingPattern};
use crate::solve::SolveOptions;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const PATTERN_RETRY_CAP: usize = 100;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CvOptions {
    /// Maximal degree fitted; smaller degrees reuse its leading components.
    pub r_max: usize,
    pub folds: usize,
    /// Seed for fold assignment and hold-out patterns.
    pub seed: u64,
    /// Hold-out patterns per validation sample (prediction scheme).
    pub patterns_per_sample: usize,
}

impl CvOptions {
    pub fn new(r_max: usize, seed: u64) -> Self {
        CvOptions {
            r_max,
            folds: 10,
            seed,
            patterns_per_sample: 1,
        }
    }

    fn validate(&self, n: usize, k1: usize, k2: usize) -> Result<()> {
        if self.folds < 2 || self.folds > n {
            return Err(PscaError::InvalidOptions(format!(
                "folds must be in 2..=N (got {} with N = {})",
                self.folds, n
            )));
        }
        let max = (k1 * k1).min(k2 * k2);
        if self.r_max < 1 || self.r_max > max {
            return Err(PscaError::InvalidDegree {
                r: self.r_max,
                max,
            });
        }
        if self.patterns_per_sample == 0 {
            return Err(PscaError::InvalidOptions(
                "patterns_per_sample must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// CV objective per candidate degree, with the argmin (ties to smaller r).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvCurve {
    pub r_values: Vec<usize>,
    pub objective: Vec<f64>,
    pub chosen_r: usize,
    pub warnings: Vec<String>,
}

impl CvCurve {
    fn from_objective(objective: Vec<f64>, warnings: Vec<String>) -> Self {
        let mut chosen = 0;
        for (i, v) in objective.iter().enumerate() {
            if *v < objective[chosen] {
                chosen = i;
            }
        }
        CvCurve {
            r_values: (1..=objective.len()).collect(),
            objective,
            chosen_r: chosen + 1,
            warnings,
        }
    }
}

/// Round-robin fold assignment over seed-shuffled sample indices; returns
/// `folds` disjoint index lists covering `0..n`.
fn assign_folds(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xf01d]));
    // Fisher-Yates.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut out = vec![Vec::new(); folds];
    for (pos, idx) in order.into_iter().enumerate() {
        out[pos % folds].push(idx);
    }
    out
}

/// Zero-mean working copies of the effective samples.
fn working_samples(data: &SampleSet) -> Vec<Mat> {
    data.effective().to_vec()
}

fn complement_set(samples: &[Mat], exclude: &[usize]) -> Result<SampleSet> {
    let keep: Vec<Mat> = samples
        .iter()
        .enumerate()
        .filter(|(i, _)| !exclude.contains(i))
        .map(|(_, s)| s.clone())
        .collect();
    if keep.is_empty() {
        return Err(PscaError::InvalidOptions("fold with zero samples".into()));
    }
    SampleSet::new(keep, false)
}

/// Frobenius-risk cross-validation.
pub fn cv_frobenius(data: &SampleSet, opts: &CvOptions, fit_opts: &FitOptions) -> Result<CvCurve> {
    opts.validate(data.len(), data.k1(), data.k2())?;
    let samples = working_samples(data);
    let n = samples.len() as f64;
    let mut warnings = Vec::new();

    let full_set = SampleSet::new(samples.clone(), false)?;
    let full_fit = fit_at(&full_set, opts.r_max, fit_opts, &mut warnings)?;
    let folds = assign_folds(samples.len(), opts.folds, opts.seed);

    // sum over held-out samples of <X_j, C_r^{(-fold)} X_j>, per r.
    let mut inner = vec![0.0; opts.r_max];
    for fold in &folds {
        if fold.is_empty() {
            continue;
        }
        let train = complement_set(&samples, fold)?;
        let est = fit_at(&train, opts.r_max, fit_opts, &mut warnings)?;
        for &j in fold {
            let x = &samples[j];
            let mut acc = 0.0;
            for (s, comp) in est.components.iter().enumerate() {
                let ax = &comp.left * x * &comp.right;
                acc += comp.score * x.dot(&ax);
                inner[s] += acc;
            }
        }
    }

    let objective: Vec<f64> = (1..=opts.r_max)
        .map(|r| full_fit.squared_norm_up_to(r) - 2.0 / n * inner[r - 1])
        .collect();
    Ok(CvCurve::from_objective(objective, warnings))
}

/// Prediction-error cross-validation with random row/column hold-outs.
pub fn cv_prediction(
    data: &SampleSet,
    opts: &CvOptions,
    fit_opts: &FitOptions,
    solve: &SolveOptions,
) -> Result<CvCurve> {
    opts.validate(data.len(), data.k1(), data.k2())?;
    let (k1, k2) = (data.k1(), data.k2());
    let samples = working_samples(data);
    let mut warnings = Vec::new();
    let folds = assign_folds(samples.len(), opts.folds, opts.seed);

    let mut sq_err = vec![0.0; opts.r_max];
    let mut counts = vec![0usize; opts.r_max];
    for (f, fold) in folds.iter().enumerate() {
        if fold.is_empty() {
            continue;
        }
        let train = complement_set(&samples, fold)?;
        let est = fit_at(&train, opts.r_max, fit_opts, &mut warnings)?;
        // Positivize each truncation once per fold.
        let mut ops = Vec::with_capacity(opts.r_max);
        for r in 1..=opts.r_max {
            let op = RSepOperator::from_estimate(&est.truncated(r), 0.0)?;
            let eig = op.extremal_eigen(1e-8, 10 * k1 * k2)?;
            let (pos, _) = positivize(&op, 1e-8 * eig.lambda_max.max(0.0), 1e-8)?;
            ops.push(pos);
        }
        for &j in fold {
            let x = &samples[j];
            for p in 0..opts.patterns_per_sample {
                let seed = derive_seed(opts.seed, &[0xbade, f as u64, j as u64, p as u64]);
                let pattern = random_rowcol_pattern(k1, k2, seed)?;
                for (ri, op) in ops.iter().enumerate() {
                    let completed = blup(op, x, &pattern, solve)?;
                    for i in 0..k1 {
                        for jj in 0..k2 {
                            if !pattern.is_observed(i, jj, k2) {
                                let d = completed[(i, jj)] - x[(i, jj)];
                                sq_err[ri] += d * d;
                                if ri == 0 {
                                    counts[0] += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let total = counts[0].max(1) as f64;
    let objective: Vec<f64> = sq_err.iter().map(|e| e / total).collect();
    Ok(CvCurve::from_objective(objective, warnings))
}

fn fit_at(
    train: &SampleSet,
    r_max: usize,
    fit_opts: &FitOptions,
    warnings: &mut Vec<String>,
) -> Result<ScdEstimate> {
    let mut o = *fit_opts;
    o.r = r_max;
    let est = fit(&CovView::data_level(train), &o)?;
    for (i, ok) in est.diagnostics.converged_flags.iter().enumerate() {
        if !ok {
            warnings.push(format!("component {} hit the iteration cap", i + 1));
        }
    }
    Ok(est)
}

/// Each row and each column is held out independently with probability 1/2;
/// degenerate draws (nothing observed, or nothing missing) are rejected and
/// redrawn up to a cap.
fn random_rowcol_pattern(k1: usize, k2: usize, seed: u64) -> Result<MissingPattern> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..PATTERN_RETRY_CAP {
        let missing_rows: Vec<usize> = (0..k1).filter(|_| rng.random::<bool>()).collect();
        let missing_cols: Vec<usize> = (0..k2).filter(|_| rng.random::<bool>()).collect();
        let any_missing = !missing_rows.is_empty() || !missing_cols.is_empty();
        let any_observed = missing_rows.len() < k1 && missing_cols.len() < k2;
        if any_missing && any_observed {
            return Ok(MissingPattern::RowCol {
                missing_rows,
                missing_cols,
            });
        }
    }
    Err(PscaError::NumericalFailure(
        "could not draw a non-degenerate hold-out pattern".into(),
    ))
}

/// Scree data: `(r, score_r)` pairs, non-increasing in the score.
pub fn scree(est: &ScdEstimate) -> Vec<(usize, f64)> {
    est.components
        .iter()
        .enumerate()
        .map(|(i, c)| (i + 1, c.score))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{random_rsep, sample_gaussian, CovKind, RandomCovSpec, ScoreRule};

    #[test]
    fn folds_partition_everything() {
        let folds = assign_folds(17, 5, 3);
        let mut seen: Vec<usize> = folds.iter().flatten().cloned().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..17).collect::<Vec<_>>());
        for f in &folds {
            assert!(f.len() >= 3);
        }
    }

    #[test]
    fn folds_deterministic_in_seed() {
        assert_eq!(assign_folds(20, 4, 9), assign_folds(20, 4, 9));
        assert_ne!(assign_folds(20, 4, 9), assign_folds(20, 4, 10));
    }

    #[test]
    fn single_candidate_curve() {
        let spec = RandomCovSpec {
            kind: CovKind::OrthoBlocks { r: 1, k: 4, seed: 5 },
            score_rule: ScoreRule::Explicit(vec![1.0]),
            normalize: Default::default(),
        };
        let truth = random_rsep(&spec).unwrap();
        let data = sample_gaussian(&truth, 30, 6).unwrap();
        let curve = cv_frobenius(
            &data,
            &CvOptions {
                r_max: 1,
                folds: 5,
                seed: 1,
                patterns_per_sample: 1,
            },
            &FitOptions::new(1),
        )
        .unwrap();
        assert_eq!(curve.r_values, vec![1]);
        assert_eq!(curve.chosen_r, 1);
    }

    #[test]
    fn loo_matches_direct_objective() {
        // folds = N: the per-fold plug-in reduces to textbook leave-one-out.
        let spec = RandomCovSpec {
            kind: CovKind::OrthoBlocks { r: 2, k: 4, seed: 7 },
            score_rule: ScoreRule::Explicit(vec![1.0, 0.4]),
            normalize: Default::default(),
        };
        let truth = random_rsep(&spec).unwrap();
        let data = sample_gaussian(&truth, 8, 8).unwrap();
        let opts = CvOptions {
            r_max: 2,
            folds: 8,
            seed: 2,
            patterns_per_sample: 1,
        };
        let fit_opts = FitOptions::new(2);
        let curve = cv_frobenius(&data, &opts, &fit_opts).unwrap();

        // Direct evaluation: for each j, fit on all-but-j and accumulate.
        let samples = working_samples(&data);
        let full = SampleSet::new(samples.clone(), false).unwrap();
        let full_fit = fit(&CovView::data_level(&full), &fit_opts).unwrap();
        let n = samples.len() as f64;
        for r in 1..=2usize {
            let mut inner = 0.0;
            for j in 0..samples.len() {
                let train = complement_set(&samples, &[j]).unwrap();
                let est = fit(&CovView::data_level(&train), &fit_opts).unwrap();
                let x = &samples[j];
                for comp in est.components.iter().take(r) {
                    let ax = &comp.left * x * &comp.right;
                    inner += comp.score * x.dot(&ax);
                }
            }
            let direct = full_fit.squared_norm_up_to(r) - 2.0 / n * inner;
            assert!(
                (curve.objective[r - 1] - direct).abs() <= 1e-10 * direct.abs().max(1.0),
                "r = {}: {} vs {}",
                r,
                curve.objective[r - 1],
                direct
            );
        }
    }

    #[test]
    fn chosen_r_deterministic_across_runs() {
        let spec = RandomCovSpec {
            kind: CovKind::OrthoBlocks { r: 2, k: 5, seed: 11 },
            score_rule: ScoreRule::Explicit(vec![1.0, 0.5]),
            normalize: Default::default(),
        };
        let truth = random_rsep(&spec).unwrap();
        let data = sample_gaussian(&truth, 40, 12).unwrap();
        let opts = CvOptions {
            r_max: 3,
            folds: 5,
            seed: 21,
            patterns_per_sample: 2,
        };
        let a = cv_frobenius(&data, &opts, &FitOptions::new(3)).unwrap();
        let b = cv_frobenius(&data, &opts, &FitOptions::new(3)).unwrap();
        assert_eq!(a.chosen_r, b.chosen_r);
        assert_eq!(a.objective, b.objective);
        let p1 = cv_prediction(&data, &opts, &FitOptions::new(3), &SolveOptions::default())
            .unwrap();
        let p2 = cv_prediction(&data, &opts, &FitOptions::new(3), &SolveOptions::default())
            .unwrap();
        assert_eq!(p1.chosen_r, p2.chosen_r);
        assert_eq!(p1.objective, p2.objective);
    }

    #[test]
    fn pattern_rejects_degenerate_draws() {
        for seed in 0..50 {
            let p = random_rowcol_pattern(3, 3, seed).unwrap();
            if let MissingPattern::RowCol {
                missing_rows,
                missing_cols,
            } = &p
            {
                assert!(missing_rows.len() < 3 || missing_cols.len() < 3);
                assert!(!missing_rows.is_empty() || !missing_cols.is_empty());
            }
        }
    }

    #[test]
    fn scree_of_empty_estimate() {
        let est = ScdEstimate {
            components: vec![],
            k1: 2,
            k2: 2,
            diagnostics: Default::default(),
        };
        assert!(scree(&est).is_empty());
    }

    #[test]
    fn invalid_folds_rejected() {
        let data = {
            let mut rng = <ChaCha8Rng as SeedableRng>::seed_from_u64(1);
            crate::testutil::random_samples(3, 3, 5, &mut rng)
        };
        let bad = CvOptions {
            r_max: 2,
            folds: 6,
            seed: 0,
            patterns_per_sample: 1,
        };
        assert!(cv_frobenius(&data, &bad, &FitOptions::new(2)).is_err());
    }
}
