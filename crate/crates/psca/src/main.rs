//! Command-line surface: fit, scree, invert, predict, cv, simulate and
//! experiment subcommands over the bit-exact file formats of `psca::io`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
//! failure (non-convergence with --strict). Diagnostics go to stderr as
//! `psca: <command>: <message>` lines.

use clap::{Args, Parser, Subcommand, ValueEnum};
use psca::error::PscaError;
use psca::fit::{fit, FitOptions, Init};
use psca::io;
use psca::operator::positivize;
use psca::pip::CovView;
use psca::predict::{blup_with_report, MissingPattern};
use psca::select::{cv_frobenius, cv_prediction, scree, CvOptions};
use psca::simulate::{random_rsep, sample_gaussian, RandomCovSpec};
use psca::solve::{pcg_solve, PrecondChoice, SolveOptions, StopRule};
use serde::Deserialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "psca", version, about = "Separable component analysis of matrix-valued data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an R-separable covariance estimate from sample files.
    Fit(FitArgs),
    /// Export the scores of a stored estimate as CSV.
    Scree(ScreeArgs),
    /// Solve `estimate(X) = Y` by preconditioned conjugate gradient.
    Invert(InvertArgs),
    /// Predict missing entries of a partially observed matrix.
    Predict(PredictArgs),
    /// Cross-validate the degree-of-separability.
    Cv(CvArgs),
    /// Draw Gaussian samples from a constructed separable covariance.
    Simulate(SimulateArgs),
    /// Run a scripted study and emit CSV plus a JSON summary.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SampleInput {
    /// Sample files (binary tensors or CSV matrices), in order.
    #[arg(value_name = "FILE")]
    files: Vec<PathBuf>,
    /// Directory of samples; uses listing.csv when present, otherwise all
    /// .psca/.csv files in lexicographic order.
    #[arg(long, value_name = "DIR")]
    input_dir: Option<PathBuf>,
    /// Do not subtract the sample mean.
    #[arg(long)]
    no_center: bool,
}

impl SampleInput {
    fn load(&self) -> Result<psca::SampleSet, PscaError> {
        let mut files = self.files.clone();
        if let Some(dir) = &self.input_dir {
            files.extend(io::collect_sample_files(dir)?);
        }
        io::read_samples(&files, !self.no_center)
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: SampleInput,
    /// Degree-of-separability to fit.
    #[arg(long, short = 'r')]
    r: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// Seed the power-iteration inits (random-symmetric policy).
    #[arg(long)]
    seed: Option<u64>,
    /// Fixed reduction order and a placeholder timestamp in the manifest.
    #[arg(long)]
    deterministic: bool,
    /// Output manifest path (factor tensors land alongside it).
    #[arg(long, short = 'o')]
    output: PathBuf,
}

#[derive(Args)]
struct ScreeArgs {
    #[arg(long)]
    estimate: PathBuf,
    /// Output CSV (r,score); stdout when omitted.
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct InvertArgs {
    #[arg(long)]
    estimate: PathBuf,
    /// Right-hand side matrix file.
    #[arg(long)]
    rhs: PathBuf,
    #[arg(long, short = 'o')]
    output: PathBuf,
    /// Where to write the solve report JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Positivize with this regularization before solving.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum, default_value_t = PrecondFlag::Auto)]
    precond: PrecondFlag,
    #[arg(long, value_enum, default_value_t = StopFlag::Residual)]
    stop_rule: StopFlag,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Exit 3 when the solver does not converge.
    #[arg(long)]
    strict: bool,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum PrecondFlag {
    Auto,
    Separable,
    Stein,
    None,
}

impl From<PrecondFlag> for PrecondChoice {
    fn from(f: PrecondFlag) -> Self {
        match f {
            PrecondFlag::Auto => PrecondChoice::Auto,
            PrecondFlag::Separable => PrecondChoice::Separable,
            PrecondFlag::Stein => PrecondChoice::Stein,
            PrecondFlag::None => PrecondChoice::None,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum StopFlag {
    Residual,
    Iterate,
}

impl From<StopFlag> for StopRule {
    fn from(f: StopFlag) -> Self {
        match f {
            StopFlag::Residual => StopRule::RelativeResidual,
            StopFlag::Iterate => StopRule::IterateDiff,
        }
    }
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    estimate: PathBuf,
    /// Matrix holding the observed values (unobserved entries are ignored).
    #[arg(long)]
    observed: PathBuf,
    /// Pattern JSON: {"kind":"rowcol","missing_rows":[..],"missing_cols":[..]}
    /// or {"kind":"arbitrary","observed":[..row-major booleans..]}.
    #[arg(long)]
    pattern: PathBuf,
    /// Mean matrix to subtract before and add back after prediction.
    #[arg(long)]
    mean: Option<PathBuf>,
    #[arg(long, short = 'o')]
    output: PathBuf,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Positivize with this regularization before predicting.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    strict: bool,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SchemeFlag {
    Frobenius,
    Prediction,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    input: SampleInput,
    #[arg(long, value_enum, default_value_t = SchemeFlag::Frobenius)]
    scheme: SchemeFlag,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long)]
    r_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    patterns_per_sample: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long)]
    deterministic: bool,
    /// Output CSV (r,objective,chosen); stdout when omitted.
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Spec JSON: {"truth": <covariance spec>, "n": <count>, "seed": <u64>}.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    output_dir: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum StudyFlag {
    Gneiting,
    Decay,
    Inversion,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_enum)]
    study: StudyFlag,
    /// Study config JSON; desk-scale defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Deserialize)]
struct SimulateSpec {
    truth: RandomCovSpec,
    n: usize,
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { code, message }) => {
            eprintln!("psca: error: {message}");
            ExitCode::from(code)
        }
    }
}

struct CliError {
    code: u8,
    message: String,
}

impl From<PscaError> for CliError {
    fn from(e: PscaError) -> Self {
        let code = match &e {
            PscaError::InvalidOptions(_) | PscaError::InvalidDegree { .. } => 1,
            PscaError::ZeroPip
            | PscaError::NumericalFailure(_)
            | PscaError::PreconditionerSingular { .. } => 3,
            _ => 2,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn numerical(message: impl Into<String>) -> CliError {
    CliError {
        code: 3,
        message: message.into(),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Scree(args) => cmd_scree(args),
        Command::Invert(args) => cmd_invert(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Cv(args) => cmd_cv(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Experiment(args) => cmd_experiment(args),
    }
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    let data = args.input.load()?;
    let mut opts = FitOptions::new(args.r).with_tol(args.tol);
    opts.max_iter = args.max_iter;
    opts.deterministic = args.deterministic;
    if let Some(seed) = args.seed {
        opts.init = Init::RandomSymmetric(seed);
    }
    let est = fit(&CovView::data_level(&data), &opts)?;
    for (i, ok) in est.diagnostics.converged_flags.iter().enumerate() {
        if !ok {
            eprintln!(
                "psca: fit: component {} hit the iteration cap (last change {:.3e})",
                i + 1,
                est.diagnostics.final_residual_per_component[i]
            );
        }
    }
    io::write_estimate(&est, 0.0, &args.output, args.deterministic)?;
    eprintln!(
        "psca: fit: wrote {} components to {}",
        est.components.len(),
        args.output.display()
    );
    Ok(())
}

fn cmd_scree(args: ScreeArgs) -> Result<(), CliError> {
    let (op, _) = io::read_estimate(&args.estimate)?;
    let est = psca::fit::ScdEstimate {
        components: op.components().to_vec(),
        k1: op.k1(),
        k2: op.k2(),
        diagnostics: Default::default(),
    };
    let mut out = String::from("r,score\n");
    for (r, s) in scree(&est) {
        out.push_str(&format!("{r},{s:e}\n"));
    }
    write_text(&args.output, &out)?;
    Ok(())
}

fn cmd_invert(args: InvertArgs) -> Result<(), CliError> {
    let (mut op, _) = io::read_estimate(&args.estimate)?;
    let y = io::read_matrix(&args.rhs)?;
    if let Some(eps) = args.epsilon {
        let (pos, report) = positivize(&op, eps, 1e-8)?;
        eprintln!(
            "psca: invert: positivized with shift {:.6e} (lambda_min {:.6e})",
            report.applied_shift, report.lambda_min
        );
        op = pos;
    }
    let opts = SolveOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        preconditioner: args.precond.into(),
        stop_rule: args.stop_rule.into(),
    };
    let (x, report) = pcg_solve(&op, &y, &opts)?;
    io::write_matrix(&args.output, &x)?;
    if let Some(rp) = &args.report {
        std::fs::write(rp, serde_json::to_string_pretty(&report).map_err(PscaError::from)?)
            .map_err(PscaError::from)?;
    }
    eprintln!(
        "psca: invert: {} iterations, relative residual {:.3e}, preconditioner {}",
        report.iterations, report.final_relative_residual, report.preconditioner_used
    );
    if !report.converged && args.strict {
        return Err(numerical("PCG did not converge within the iteration cap"));
    }
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<(), CliError> {
    let (mut op, _) = io::read_estimate(&args.estimate)?;
    let mut observed = io::read_matrix(&args.observed)?;
    let pattern: MissingPattern = serde_json::from_slice(
        &std::fs::read(&args.pattern).map_err(PscaError::from)?,
    )
    .map_err(PscaError::from)?;
    let mean = match &args.mean {
        Some(p) => Some(io::read_matrix(p)?),
        None => None,
    };
    if let Some(m) = &mean {
        if m.shape() != observed.shape() {
            return Err(PscaError::ShapeMismatch("mean matrix shape".into()).into());
        }
        observed -= m;
    }
    if let Some(eps) = args.epsilon {
        let (pos, _) = positivize(&op, eps, 1e-8)?;
        op = pos;
    }
    let opts = SolveOptions {
        tol: args.tol,
        ..Default::default()
    };
    let (mut completed, report) = blup_with_report(&op, &observed, &pattern, &opts)?;
    if let Some(m) = &mean {
        completed += m;
    }
    io::write_matrix(&args.output, &completed)?;
    eprintln!(
        "psca: predict: solved observed block in {} iterations (residual {:.3e})",
        report.iterations, report.final_relative_residual
    );
    if !report.converged && args.strict {
        return Err(numerical("prediction solve did not converge"));
    }
    Ok(())
}

fn cmd_cv(args: CvArgs) -> Result<(), CliError> {
    let data = args.input.load()?;
    let opts = CvOptions {
        r_max: args.r_max,
        folds: args.folds,
        seed: args.seed,
        patterns_per_sample: args.patterns_per_sample,
    };
    let mut fit_opts = FitOptions::new(args.r_max).with_tol(args.tol);
    fit_opts.deterministic = args.deterministic;
    let curve = match args.scheme {
        SchemeFlag::Frobenius => cv_frobenius(&data, &opts, &fit_opts)?,
        SchemeFlag::Prediction => {
            cv_prediction(&data, &opts, &fit_opts, &SolveOptions::default())?
        }
    };
    for w in &curve.warnings {
        eprintln!("psca: cv: warning: {w}");
    }
    let mut out = String::from("r,objective,chosen\n");
    for (i, r) in curve.r_values.iter().enumerate() {
        out.push_str(&format!(
            "{},{:e},{}\n",
            r,
            curve.objective[i],
            *r == curve.chosen_r
        ));
    }
    write_text(&args.output, &out)?;
    eprintln!("psca: cv: chosen r = {}", curve.chosen_r);
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let spec: SimulateSpec = serde_json::from_slice(
        &std::fs::read(&args.spec).map_err(PscaError::from)?,
    )
    .map_err(PscaError::from)?;
    let truth = random_rsep(&spec.truth)?;
    let data = sample_gaussian(&truth, spec.n, spec.seed)?;
    std::fs::create_dir_all(&args.output_dir).map_err(PscaError::from)?;
    let mut listing = String::new();
    let width = spec.n.to_string().len().max(4);
    for (i, x) in data.samples().iter().enumerate() {
        let name = format!("sample_{:0width$}.psca", i, width = width);
        io::write_matrix(&args.output_dir.join(&name), x)?;
        listing.push_str(&name);
        listing.push('\n');
    }
    std::fs::write(args.output_dir.join("listing.csv"), listing).map_err(PscaError::from)?;
    eprintln!(
        "psca: simulate: wrote {} samples of {}x{} to {}",
        spec.n,
        truth.k1,
        truth.k2,
        args.output_dir.display()
    );
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<(), CliError> {
    use psca::experiments as ex;
    std::fs::create_dir_all(&args.out_dir).map_err(PscaError::from)?;
    let read_config = |default: &str| -> Result<serde_json::Value, CliError> {
        match &args.config {
            Some(p) => Ok(serde_json::from_slice(
                &std::fs::read(p).map_err(PscaError::from)?,
            )
            .map_err(PscaError::from)?),
            None => Ok(serde_json::from_str(default).map_err(PscaError::from)?),
        }
    };
    match args.study {
        StudyFlag::Gneiting => {
            let cfg: ex::GneitingStudyConfig =
                serde_json::from_value(read_config("{}")?).map_err(PscaError::from)?;
            let report = ex::run_gneiting_study(&cfg)?;
            write_report(&args.out_dir, "gneiting", &report, |w| report.write_csv(w))?;
        }
        StudyFlag::Decay => {
            let cfg: ex::DecayStudyConfig =
                serde_json::from_value(read_config("{}")?).map_err(PscaError::from)?;
            let report = ex::run_decay_study(&cfg)?;
            write_report(&args.out_dir, "decay", &report, |w| report.write_csv(w))?;
        }
        StudyFlag::Inversion => {
            let cfg: ex::InversionStudyConfig =
                serde_json::from_value(read_config("{}")?).map_err(PscaError::from)?;
            let report = ex::run_inversion_study(&cfg)?;
            write_report(&args.out_dir, "inversion", &report, |w| report.write_csv(w))?;
        }
    }
    Ok(())
}

fn write_report<T: serde::Serialize>(
    dir: &std::path::Path,
    name: &str,
    report: &T,
    csv: impl Fn(&mut Vec<u8>) -> Result<(), PscaError>,
) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(report).map_err(PscaError::from)?;
    std::fs::write(dir.join(format!("{name}.json")), json).map_err(PscaError::from)?;
    let mut buf = Vec::new();
    csv(&mut buf)?;
    std::fs::write(dir.join(format!("{name}.csv")), buf).map_err(PscaError::from)?;
    eprintln!("psca: experiment: wrote {name}.json and {name}.csv");
    Ok(())
}

fn write_text(path: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, content).map_err(|e| PscaError::from(e).into()),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}
