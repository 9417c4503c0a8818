//! Desk-scale scripted studies: estimation error against sample size for
//! the parametric truth (with bias asymptotes), score-decay convergence, and
//! PCG iteration behavior under controlled conditioning and leading-score
//! dominance. Each study emits a JSON-serializable report plus CSV rows.

use crate::cov4::{brute_force_scd_with_guard, empirical_cov_dense_with_guard, DenseCov4};
use crate::error::{PscaError, Result};
use crate::fit::{fit, FitOptions};
use crate::linalg::derive_seed;
use crate::operator::RSepOperator;
use crate::pip::{CovView, SampleSet};
use crate::select::{cv_frobenius, CvOptions};
use crate::simulate::{
    gneiting_dense, random_rsep, sample_gaussian, sample_gaussian_dense, CovKind, GneitingParams,
    RandomCovSpec, ScoreNormalize, ScoreRule,
};
use crate::solve::{pcg_solve, SolveOptions, StopRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Gneiting error-vs-N study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GneitingStudyConfig {
    pub k: usize,
    pub n_values: Vec<usize>,
    pub r_values: Vec<usize>,
    pub n_seeds: u64,
    pub base_seed: u64,
    pub params: GneitingParams,
    pub oracle_guard: usize,
    pub fit_tol: f64,
    /// Also run Frobenius CV per cell and record the chosen degree.
    pub run_cv: bool,
}

impl Default for GneitingStudyConfig {
    fn default() -> Self {
        GneitingStudyConfig {
            k: 20,
            n_values: vec![64, 256, 1024, 2048],
            r_values: vec![1, 2, 3],
            n_seeds: 10,
            base_seed: 0,
            params: GneitingParams::default(),
            oracle_guard: 24,
            fit_tol: 1e-10,
            run_cv: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GneitingCell {
    pub n: usize,
    pub seed: u64,
    /// Relative Frobenius error of the plain empirical covariance.
    pub empirical_error: f64,
    /// Relative Frobenius error per fitted degree, aligned with `r_values`.
    pub errors: Vec<f64>,
    pub chosen_r: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GneitingMeanRow {
    pub n: usize,
    pub empirical_error: f64,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GneitingReport {
    pub config: GneitingStudyConfig,
    pub replications: u64,
    /// `sqrt(sum_{j>r} s_j^2) / sqrt(sum_j s_j^2)` of the truth, per fitted degree.
    pub bias_asymptotes: Vec<f64>,
    pub cells: Vec<GneitingCell>,
    /// Mean over seeds, one row per sample size.
    pub means: Vec<GneitingMeanRow>,
}

pub fn run_gneiting_study(cfg: &GneitingStudyConfig) -> Result<GneitingReport> {
    if cfg.k > cfg.oracle_guard {
        return Err(PscaError::OracleGuard {
            k1: cfg.k,
            k2: cfg.k,
            guard: cfg.oracle_guard,
        });
    }
    let truth = gneiting_dense(&cfg.params, cfg.k, cfg.k)?;
    let truth_norm = truth.frob_norm();
    let scd = brute_force_scd_with_guard(&truth, cfg.oracle_guard)?;
    let bias_asymptotes: Vec<f64> = cfg
        .r_values
        .iter()
        .map(|&r| scd.tail_norm(r) / scd.total_norm())
        .collect();
    let r_max = *cfg.r_values.iter().max().unwrap();

    let mut cells = Vec::new();
    for &n in &cfg.n_values {
        for seed in 0..cfg.n_seeds {
            let draw_seed = derive_seed(cfg.base_seed, &[n as u64, seed]);
            let samples = sample_gaussian_dense(&truth, n, draw_seed)?;
            let data = SampleSet::new(samples, true)?;

            let emp = empirical_cov_dense_with_guard(&data, cfg.oracle_guard)?;
            let empirical_error = tensor_rel_error(&emp, &truth, truth_norm);

            let opts = FitOptions::new(r_max).with_tol(cfg.fit_tol);
            let est = fit(&CovView::data_level(&data), &opts)?;
            let errors = truncation_errors(&est, &cfg.r_values, &truth, truth_norm);

            let chosen_r = if cfg.run_cv {
                let cv = cv_frobenius(
                    &data,
                    &CvOptions::new(r_max, derive_seed(draw_seed, &[0xcu64])),
                    &FitOptions::new(r_max).with_tol(cfg.fit_tol),
                )?;
                Some(cv.chosen_r)
            } else {
                None
            };

            cells.push(GneitingCell {
                n,
                seed,
                empirical_error,
                errors,
                chosen_r,
            });
        }
    }

    let means = cfg
        .n_values
        .iter()
        .map(|&n| {
            let rows: Vec<&GneitingCell> = cells.iter().filter(|c| c.n == n).collect();
            let m = rows.len() as f64;
            GneitingMeanRow {
                n,
                empirical_error: rows.iter().map(|c| c.empirical_error).sum::<f64>() / m,
                errors: (0..cfg.r_values.len())
                    .map(|i| rows.iter().map(|c| c.errors[i]).sum::<f64>() / m)
                    .collect(),
            }
        })
        .collect();

    Ok(GneitingReport {
        config: cfg.clone(),
        replications: cfg.n_seeds,
        bias_asymptotes,
        cells,
        means,
    })
}

/// Relative errors of the leading-`r` truncations against a dense truth,
/// sharing one pass by accumulating components in score order.
fn truncation_errors(
    est: &crate::fit::ScdEstimate,
    r_values: &[usize],
    truth: &DenseCov4,
    truth_norm: f64,
) -> Vec<f64> {
    let mut residual: Vec<f64> = truth.entries().iter().map(|v| -v).collect();
    let (k1, k2) = (truth.k1(), truth.k2());
    let mut out = vec![0.0; r_values.len()];
    for (ri, comp) in est.components.iter().enumerate() {
        let r = ri + 1;
        let mut idx = 0;
        for i in 0..k1 {
            for j in 0..k2 {
                for k in 0..k1 {
                    for l in 0..k2 {
                        residual[idx] += comp.score * comp.left[(i, k)] * comp.right[(j, l)];
                        idx += 1;
                    }
                }
            }
        }
        for (pos, &want) in r_values.iter().enumerate() {
            if want == r {
                out[pos] = residual.iter().map(|v| v * v).sum::<f64>().sqrt() / truth_norm;
            }
        }
    }
    out
}

fn tensor_rel_error(a: &DenseCov4, b: &DenseCov4, b_norm: f64) -> f64 {
    a.entries()
        .iter()
        .zip(b.entries())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
        / b_norm
}

// ---------------------------------------------------------------------------
// Score-decay convergence study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DecayStudyConfig {
    pub k: usize,
    pub r_true: usize,
    pub alphas: Vec<f64>,
    pub n_values: Vec<usize>,
    pub r_fits: Vec<usize>,
    pub n_seeds: u64,
    pub base_seed: u64,
    pub oracle_guard: usize,
    pub fit_tol: f64,
}

impl Default for DecayStudyConfig {
    fn default() -> Self {
        DecayStudyConfig {
            k: 16,
            r_true: 4,
            alphas: vec![1.0, 2.0, 3.0],
            n_values: vec![128, 512, 2048],
            r_fits: vec![2, 3],
            n_seeds: 10,
            base_seed: 0,
            oracle_guard: 24,
            fit_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayCell {
    pub alpha: f64,
    pub n: usize,
    pub r_fit: usize,
    pub seed: u64,
    pub relative_error: f64,
    pub bias: f64,
    /// `relative_error - bias`; the variance part of the error.
    pub excess_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayMeanRow {
    pub alpha: f64,
    pub n: usize,
    pub r_fit: usize,
    pub mean_excess_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayReport {
    pub config: DecayStudyConfig,
    pub replications: u64,
    pub cells: Vec<DecayCell>,
    pub means: Vec<DecayMeanRow>,
}

pub fn run_decay_study(cfg: &DecayStudyConfig) -> Result<DecayReport> {
    if cfg.k > cfg.oracle_guard {
        return Err(PscaError::OracleGuard {
            k1: cfg.k,
            k2: cfg.k,
            guard: cfg.oracle_guard,
        });
    }
    let r_max = *cfg.r_fits.iter().max().unwrap();
    let mut cells = Vec::new();
    for &alpha in &cfg.alphas {
        for seed in 0..cfg.n_seeds {
            let spec = RandomCovSpec {
                kind: CovKind::OrthoBlocks {
                    r: cfg.r_true,
                    k: cfg.k,
                    seed: derive_seed(cfg.base_seed, &[seed, alpha.to_bits()]),
                },
                score_rule: ScoreRule::PolyDecay { alpha },
                normalize: ScoreNormalize::SumToOne,
            };
            let truth = random_rsep(&spec)?;
            let truth_dense = crate::fit::reconstruct_dense_with_guard(&truth, cfg.oracle_guard)?;
            let truth_norm = truth_dense.frob_norm();
            let scores = truth.scores();
            let total_sq: f64 = scores.iter().map(|s| s * s).sum();

            for &n in &cfg.n_values {
                let data = sample_gaussian(
                    &truth,
                    n,
                    derive_seed(cfg.base_seed, &[seed, n as u64, alpha.to_bits()]),
                )?;
                let opts = FitOptions::new(r_max).with_tol(cfg.fit_tol);
                let est = fit(&CovView::data_level(&data), &opts)?;
                let errors = truncation_errors(&est, &cfg.r_fits, &truth_dense, truth_norm);
                for (pos, &r_fit) in cfg.r_fits.iter().enumerate() {
                    let bias = (scores[r_fit.min(scores.len())..]
                        .iter()
                        .map(|s| s * s)
                        .sum::<f64>()
                        / total_sq)
                        .sqrt();
                    cells.push(DecayCell {
                        alpha,
                        n,
                        r_fit,
                        seed,
                        relative_error: errors[pos],
                        bias,
                        excess_error: errors[pos] - bias,
                    });
                }
            }
        }
    }

    let mut means = Vec::new();
    for &alpha in &cfg.alphas {
        for &n in &cfg.n_values {
            for &r_fit in &cfg.r_fits {
                let rows: Vec<&DecayCell> = cells
                    .iter()
                    .filter(|c| c.alpha == alpha && c.n == n && c.r_fit == r_fit)
                    .collect();
                means.push(DecayMeanRow {
                    alpha,
                    n,
                    r_fit,
                    mean_excess_error: rows.iter().map(|c| c.excess_error).sum::<f64>()
                        / rows.len() as f64,
                });
            }
        }
    }

    Ok(DecayReport {
        config: cfg.clone(),
        replications: cfg.n_seeds,
        cells,
        means,
    })
}

// ---------------------------------------------------------------------------
// PCG inversion studies
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct InversionStudyConfig {
    pub k_values: Vec<usize>,
    pub kappas: Vec<f64>,
    pub n: usize,
    pub r: usize,
    /// Scores of the simulated truth; distinct gaps keep the fit fast.
    pub truth_scores: Vec<f64>,
    pub fit_tol: f64,
    pub solve_tol: f64,
    pub n_seeds: u64,
    pub base_seed: u64,
    pub dominance: DominanceConfig,
}

impl Default for InversionStudyConfig {
    fn default() -> Self {
        InversionStudyConfig {
            k_values: vec![10, 20, 40],
            kappas: vec![10.0, 100.0, 1000.0],
            n: 200,
            r: 5,
            truth_scores: vec![0.35, 0.25, 0.18, 0.13, 0.09],
            fit_tol: 1e-8,
            solve_tol: 1e-10,
            n_seeds: 10,
            base_seed: 0,
            dominance: DominanceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DominanceConfig {
    pub k: usize,
    pub r: usize,
    pub sigma1_values: Vec<f64>,
    pub epsilons: Vec<f64>,
}

impl Default for DominanceConfig {
    fn default() -> Self {
        DominanceConfig {
            k: 20,
            r: 5,
            sigma1_values: vec![0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95],
            epsilons: vec![3e-3, 1e-2, 5e-2],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KappaCell {
    pub k: usize,
    pub kappa: f64,
    pub seed: u64,
    pub iterations: usize,
    pub max_abs_error: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DominanceCell {
    pub sigma1: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub iterations: usize,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KappaMedianRow {
    pub k: usize,
    pub kappa: f64,
    pub median_iterations: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpearmanRow {
    pub epsilon: f64,
    /// Rank correlation between the leading score and iteration counts.
    pub spearman: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InversionReport {
    pub config: InversionStudyConfig,
    pub replications: u64,
    pub kappa_cells: Vec<KappaCell>,
    pub kappa_medians: Vec<KappaMedianRow>,
    pub dominance_cells: Vec<DominanceCell>,
    pub dominance_spearman: Vec<SpearmanRow>,
    /// Largest recovery error across every solve in the study.
    pub max_abs_error_overall: f64,
}

/// Fit an R-separable estimator on simulated data. The kappa study uses the
/// smooth (Brownian-led) construction; the dominance study uses orthogonal
/// blocks, whose fitted components can be re-scored while staying PSD.
fn fitted_operator(
    smooth: bool,
    k: usize,
    r: usize,
    n: usize,
    truth_scores: &[f64],
    fit_tol: f64,
    seed: u64,
) -> Result<RSepOperator> {
    let kind = if smooth {
        CovKind::SmoothEigen {
            r,
            k,
            seed: derive_seed(seed, &[1]),
        }
    } else {
        CovKind::OrthoBlocks {
            r,
            k,
            seed: derive_seed(seed, &[1]),
        }
    };
    let spec = RandomCovSpec {
        kind,
        score_rule: ScoreRule::Explicit(truth_scores.to_vec()),
        normalize: ScoreNormalize::None,
    };
    let truth = random_rsep(&spec)?;
    let data = sample_gaussian(&truth, n, derive_seed(seed, &[2]))?;
    let est = fit(
        &CovView::data_level(&data),
        &FitOptions::new(r).with_tol(fit_tol),
    )?;
    RSepOperator::from_estimate(&est, 0.0)
}

/// Bisection for the ridge shift that brings the condition number of
/// `op + s I` to `kappa` within 1% relative, given the operator's extremal
/// eigenvalues.
fn shift_for_kappa(lambda_max: f64, lambda_min: f64, kappa: f64) -> Result<f64> {
    if kappa <= 1.0 {
        return Err(PscaError::InvalidOptions("kappa must be > 1".into()));
    }
    if lambda_max <= lambda_min {
        return Err(PscaError::NumericalFailure(
            "degenerate spectrum; cannot target a condition number".into(),
        ));
    }
    let cond = |s: f64| (lambda_max + s) / (lambda_min + s);
    // Closed-form seed, then bisection to the stated tolerance.
    let exact = (lambda_max - kappa * lambda_min) / (kappa - 1.0);
    let mut lo = exact / 2.0 - 1.0 - lambda_min.min(0.0) * 2.0;
    let mut hi = exact * 2.0 + 1.0 - lambda_min.min(0.0) * 2.0;
    let floor = -lambda_min + 1e-12 * (lambda_max - lambda_min);
    lo = lo.max(floor);
    hi = hi.max(lo + 1.0);
    while cond(hi) > kappa {
        hi = hi.abs() * 2.0 + 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let c = cond(mid);
        if ((c - kappa) / kappa).abs() <= 0.01 {
            return Ok(mid);
        }
        if c > kappa {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(PscaError::NumericalFailure(
        "condition-number bisection did not converge".into(),
    ))
}

pub fn run_inversion_study(cfg: &InversionStudyConfig) -> Result<InversionReport> {
    if cfg.truth_scores.len() != cfg.r {
        return Err(PscaError::InvalidOptions(
            "truth_scores length must equal r".into(),
        ));
    }
    let solve_opts = SolveOptions {
        tol: cfg.solve_tol,
        max_iter: None,
        preconditioner: Default::default(),
        stop_rule: StopRule::IterateDiff,
    };

    let mut kappa_cells = Vec::new();
    let mut overall = 0.0f64;
    for &k in &cfg.k_values {
        for seed in 0..cfg.n_seeds {
            let cell_seed = derive_seed(cfg.base_seed, &[k as u64, seed]);
            let op = fitted_operator(
                true,
                k,
                cfg.r,
                cfg.n,
                &cfg.truth_scores,
                cfg.fit_tol,
                cell_seed,
            )?;
            let eig = op.extremal_eigen(1e-10, 20 * k * k)?;
            for &kappa in &cfg.kappas {
                let shift = shift_for_kappa(eig.lambda_max, eig.lambda_min, kappa)?;
                let shifted = op.with_signed_ridge(op.ridge() + shift);
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cell_seed, &[kappa.to_bits()]));
                let x_true = crate::testutil::random_matrix(k, k, &mut rng);
                let y = shifted.apply(&x_true)?;
                let (x, report) = pcg_solve(&shifted, &y, &solve_opts)?;
                let max_abs = (&x - &x_true).amax();
                overall = overall.max(max_abs);
                kappa_cells.push(KappaCell {
                    k,
                    kappa,
                    seed,
                    iterations: report.iterations,
                    max_abs_error: max_abs,
                    converged: report.converged,
                });
            }
        }
    }

    let mut kappa_medians = Vec::new();
    for &k in &cfg.k_values {
        for &kappa in &cfg.kappas {
            let mut its: Vec<f64> = kappa_cells
                .iter()
                .filter(|c| c.k == k && c.kappa == kappa)
                .map(|c| c.iterations as f64)
                .collect();
            kappa_medians.push(KappaMedianRow {
                k,
                kappa,
                median_iterations: median(&mut its),
            });
        }
    }

    // Dominance sweep: re-score one fitted estimator per seed.
    let mut dominance_cells = Vec::new();
    let dom = &cfg.dominance;
    let dominance_enabled = !dom.sigma1_values.is_empty() && !dom.epsilons.is_empty();
    let dom_scores: Vec<f64> = if cfg.truth_scores.len() == dom.r {
        cfg.truth_scores.clone()
    } else {
        (1..=dom.r).map(|i| 1.6f64.powi((dom.r - i) as i32)).collect()
    };
    for seed in 0..if dominance_enabled { cfg.n_seeds } else { 0 } {
        let cell_seed = derive_seed(cfg.base_seed, &[0xd0, seed]);
        let base = fitted_operator(
            false,
            dom.k,
            dom.r,
            cfg.n,
            &dom_scores,
            cfg.fit_tol,
            cell_seed,
        )?;
        for &sigma1 in &dom.sigma1_values {
            if sigma1 < 1.0 / dom.r as f64 {
                continue;
            }
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(cell_seed, &[sigma1.to_bits()]));
            let scores = dominance_scores(dom.r, sigma1, &mut rng);
            let rescored = base.with_scores(&scores)?;
            // Rescoring fitted factors can leave the operator indefinite;
            // epsilon regularizes in the positivization sense, guaranteeing
            // a smallest eigenvalue of at least epsilon.
            let eig = rescored.extremal_eigen(1e-10, 20 * dom.k * dom.k)?;
            for &epsilon in &dom.epsilons {
                let shift = (epsilon - eig.lambda_min).max(0.0);
                let op = rescored.with_ridge(shift);
                let x_true = crate::testutil::random_matrix(dom.k, dom.k, &mut rng);
                let y = op.apply(&x_true)?;
                let (x, report) = pcg_solve(&op, &y, &solve_opts)?;
                let max_abs = (&x - &x_true).amax();
                overall = overall.max(max_abs);
                dominance_cells.push(DominanceCell {
                    sigma1,
                    epsilon,
                    seed,
                    iterations: report.iterations,
                    max_abs_error: max_abs,
                });
            }
        }
    }

    let dominance_spearman = dom
        .epsilons
        .iter()
        .map(|&epsilon| {
            let pairs: Vec<(f64, f64)> = dominance_cells
                .iter()
                .filter(|c| c.epsilon == epsilon)
                .map(|c| (c.sigma1, c.iterations as f64))
                .collect();
            let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            SpearmanRow {
                epsilon,
                spearman: spearman(&xs, &ys),
            }
        })
        .collect();

    Ok(InversionReport {
        config: cfg.clone(),
        replications: cfg.n_seeds,
        kappa_cells,
        kappa_medians,
        dominance_cells,
        dominance_spearman,
        max_abs_error_overall: overall,
    })
}

/// Scores below the leading one, drawn uniformly on the nested feasibility
/// intervals so that all scores are <= sigma1 and the total is exactly one.
fn dominance_scores(r: usize, sigma1: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut scores = vec![sigma1];
    let mut sum = sigma1;
    for idx in 2..=r {
        let after = (r - idx) as f64;
        let lo = (1.0 - sum - after * sigma1).max(0.0);
        let hi = sigma1.min(1.0 - sum);
        let v = if hi > lo { rng.random_range(lo..hi) } else { lo.max(0.0) };
        scores.push(v);
        sum += v;
    }
    scores
}

pub fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rx = ranks(x);
    let ry = ranks(y);
    pearson(&rx, &ry)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &p in &idx[i..=j] {
            out[p] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (a, b) in x.iter().zip(y) {
        num += (a - mx) * (b - my);
        dx += (a - mx) * (a - mx);
        dy += (b - my) * (b - my);
    }
    if dx == 0.0 || dy == 0.0 {
        0.0
    } else {
        num / (dx * dy).sqrt()
    }
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

impl GneitingReport {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["n", "seed", "estimator", "r", "relative_error", "bias_asymptote"])
            .map_err(csv_err)?;
        for cell in &self.cells {
            wtr.write_record([
                cell.n.to_string(),
                cell.seed.to_string(),
                "empirical".into(),
                String::new(),
                format!("{:.17e}", cell.empirical_error),
                String::new(),
            ])
            .map_err(csv_err)?;
            for (i, &r) in self.config.r_values.iter().enumerate() {
                wtr.write_record([
                    cell.n.to_string(),
                    cell.seed.to_string(),
                    "rsep".into(),
                    r.to_string(),
                    format!("{:.17e}", cell.errors[i]),
                    format!("{:.17e}", self.bias_asymptotes[i]),
                ])
                .map_err(csv_err)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

impl DecayReport {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["alpha", "n", "r_fit", "seed", "relative_error", "bias", "excess_error"])
            .map_err(csv_err)?;
        for c in &self.cells {
            wtr.write_record([
                format!("{}", c.alpha),
                c.n.to_string(),
                c.r_fit.to_string(),
                c.seed.to_string(),
                format!("{:.17e}", c.relative_error),
                format!("{:.17e}", c.bias),
                format!("{:.17e}", c.excess_error),
            ])
            .map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

impl InversionReport {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "study", "k", "kappa", "sigma1", "epsilon", "seed", "iterations", "max_abs_error",
        ])
        .map_err(csv_err)?;
        for c in &self.kappa_cells {
            wtr.write_record([
                "kappa".into(),
                c.k.to_string(),
                format!("{}", c.kappa),
                String::new(),
                String::new(),
                c.seed.to_string(),
                c.iterations.to_string(),
                format!("{:.17e}", c.max_abs_error),
            ])
            .map_err(csv_err)?;
        }
        for c in &self.dominance_cells {
            wtr.write_record([
                "dominance".into(),
                self.config.dominance.k.to_string(),
                String::new(),
                format!("{}", c.sigma1),
                format!("{}", c.epsilon),
                c.seed.to_string(),
                c.iterations.to_string(),
                format!("{:.17e}", c.max_abs_error),
            ])
            .map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> PscaError {
    PscaError::Format(format!("csv: {e}"))
}
