//! Command-line front end: synthetic data generation, single evaluations,
//! accuracy sweeps, per-query timing, and metric listing.
//!
//! Exit codes: 0 on success, 1 on data or argument errors, 2 on numerical
//! failures (and on usage errors, via clap).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use kcrc::bench::{
    evaluate, run_dictionary_sweep, run_same_direction, DictionarySweepConfig, EvalReport,
    SameDirectionConfig,
};
use kcrc::classify::{
    crc_classify, crc_fit, kcrc_classify, kcrc_fit, CrcModel, KcrcModel, SolverVariant,
    DEFAULT_MU,
};
use kcrc::dataset::{
    load_csv, load_idx, make_same_direction, save_csv, Dictionary, Label,
    DEFAULT_NOISE_VARIANCE,
};
use kcrc::kernel::{median_distance_beta, median_heuristic_beta, KernelSpec};
use kcrc::lcd::{
    classify_naive, classify_practical, DistTransform, DistanceCache, LcdConfig, LcdKernel,
    LcdSettings,
};
use kcrc::metrics::{distance, Metric, MetricSpec, UnifiedMetric};
use kcrc::reduction::{GraphConfig, PsiMethod};
use kcrc::solver::AlmConfig;
use kcrc::{Error, Result};

#[derive(Parser)]
#[command(name = "kcrc", version, about = "Collaborative representation classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the two-class same-direction synthetic dataset as CSV.
    Synth(SynthArgs),
    /// Fit on a training set and score a test set.
    Eval(EvalArgs),
    /// Accuracy sweeps: feature dimension on synthetic data, or
    /// dictionary size over a labeled pool.
    Sweep(SweepArgs),
    /// Per-query timing comparison on a fixed train/test pair.
    Bench(BenchArgs),
    /// List the supported distance metrics.
    Metrics,
}

#[derive(Copy, Clone, PartialEq, ValueEnum)]
enum Method {
    CrcGd,
    KcrcGd,
    KcrcLcd,
    KcrcRobust,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::CrcGd => "crc-gd",
            Method::KcrcGd => "kcrc-gd",
            Method::KcrcLcd => "kcrc-lcd",
            Method::KcrcRobust => "kcrc-robust",
        }
    }
}

#[derive(Copy, Clone, PartialEq, ValueEnum)]
enum KernelName {
    Linear,
    Rbf,
    #[value(name = "dist_polarization")]
    DistPolarization,
    #[value(name = "dist_exponential")]
    DistExponential,
}

#[derive(Copy, Clone, PartialEq, ValueEnum)]
enum PsiName {
    Identity,
    Kpca,
    Random,
    Graph,
}

fn parse_metric(s: &str) -> Result<MetricSpec> {
    s.parse()
}

/// Model selection flags shared by eval and bench.
#[derive(Args)]
struct ModelArgs {
    /// Classification method. Omitted: eval uses kcrc-gd; bench runs
    /// crc-gd, kcrc-gd, and kcrc-lcd side by side.
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Kernel for the kernel-space methods.
    #[arg(long, value_enum, default_value = "rbf")]
    kernel: KernelName,
    /// Kernel bandwidth; defaults to a median-distance heuristic.
    #[arg(long)]
    beta: Option<f64>,
    /// Pseudo transformation of the kernel space.
    #[arg(long, value_enum, default_value = "identity")]
    psi: PsiName,
    /// Reduced dimension; required for kpca, random, and graph.
    #[arg(long)]
    dim: Option<usize>,
    /// Ridge weight on the coding coefficients.
    #[arg(long, default_value_t = DEFAULT_MU)]
    mu: f64,
    /// Neighborhood size for kcrc-lcd.
    #[arg(long, default_value_t = 50)]
    lcd_k: usize,
    /// Coarse shortlist size; enables the coarse-to-fine driver.
    #[arg(long)]
    lcd_coarse_k: Option<usize>,
    /// Comma-separated fine selection metrics for kcrc-lcd.
    #[arg(long, value_delimiter = ',', default_value = "euclidean", value_parser = parse_metric)]
    fine_metrics: Vec<MetricSpec>,
    /// Shortlisting metric for the coarse stage.
    #[arg(long, default_value = "euclidean", value_parser = parse_metric)]
    coarse_metric: MetricSpec,
    /// Robust solver: initial penalty strength.
    #[arg(long, default_value_t = AlmConfig::default().sigma0)]
    sigma0: f64,
    /// Robust solver: penalty growth factor per iteration.
    #[arg(long, default_value_t = AlmConfig::default().rho)]
    rho: f64,
    /// Robust solver: convergence threshold.
    #[arg(long, default_value_t = AlmConfig::default().tau)]
    tau: f64,
    /// Robust solver: iteration cap.
    #[arg(long, default_value_t = AlmConfig::default().max_iter)]
    max_iter: usize,
}

#[derive(Args)]
struct SynthArgs {
    /// Feature dimension.
    #[arg(long)]
    m: usize,
    /// Atoms generated per class.
    #[arg(long)]
    per_class: usize,
    /// Variance of the Gaussian noise added to every entry.
    #[arg(long, default_value_t = DEFAULT_NOISE_VARIANCE)]
    noise: f64,
    /// Seed for every random choice the run makes.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Training data: a CSV path, or "images,labels" for an IDX pair.
    #[arg(long)]
    train: String,
    /// Test data, same formats as --train.
    #[arg(long)]
    test: String,
    #[command(flatten)]
    model: ModelArgs,
    /// Seed for every random choice the run makes.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Report CSV path; the confusion matrix lands next to it. Prints to
    /// stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cap on rayon worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// Labeled pool for a dictionary-size sweep (requires --sizes).
    #[arg(long)]
    train: Option<String>,
    /// Comma-separated training sizes per class.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Comma-separated feature dimensions for the synthetic study.
    #[arg(long, value_delimiter = ',')]
    m_list: Option<Vec<usize>>,
    /// Atoms per class in the synthetic study.
    #[arg(long, default_value_t = 200)]
    per_class: usize,
    /// Neighborhood size(s): one value, or one per swept size.
    #[arg(long, value_delimiter = ',', default_value = "50")]
    lcd_k: Vec<usize>,
    /// Comma-separated fine selection metrics for kcrc-lcd.
    #[arg(long, value_delimiter = ',', default_value = "euclidean", value_parser = parse_metric)]
    fine_metrics: Vec<MetricSpec>,
    /// Ridge weight on the coding coefficients.
    #[arg(long, default_value_t = DEFAULT_MU)]
    mu: f64,
    /// Splits (or seeds) averaged per configuration.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Seed for every random choice the run makes.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Table CSV path; prints to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cap on rayon worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    /// Training data: a CSV path, or "images,labels" for an IDX pair.
    #[arg(long)]
    train: String,
    /// Test data, same formats as --train.
    #[arg(long)]
    test: String,
    #[command(flatten)]
    model: ModelArgs,
    /// Time only the first N test queries.
    #[arg(long)]
    queries: Option<usize>,
    /// Seed for every random choice the run makes.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Timing table CSV path; prints to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cap on rayon worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Metrics => {
            for metric in MetricSpec::ALL {
                println!("{metric}");
            }
            Ok(())
        }
        Command::Synth(args) => run_synth(args),
        Command::Eval(args) => run_eval(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Bench(args) => run_bench(args),
    }
}

fn run_synth(args: SynthArgs) -> Result<()> {
    if !args.noise.is_finite() || args.noise < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "--noise must be a non-negative variance, got {}",
            args.noise
        )));
    }
    let data = make_same_direction(args.m, args.per_class, args.noise.sqrt(), args.seed)?;
    save_csv(&data, &args.out)?;
    println!("wrote {} atoms to {}", data.len(), args.out.display());
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    apply_threads(args.threads)?;
    let train = load_data(&args.train)?;
    let test = load_data(&args.test)?;
    check_dims(&train, &test)?;
    let method = args.model.method.unwrap_or(Method::KcrcGd);
    let fitted = fit_method(method, &train, &args.model, args.seed)?;
    let report = evaluate(|y| fitted.classify(y), &test, &fitted.describe(), true)?;
    emit_report(&report, args.out.as_deref())
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    apply_threads(args.threads)?;
    let table = match (&args.train, &args.sizes, &args.m_list) {
        (Some(train), Some(sizes), None) => {
            let pool = load_data(train)?;
            let config = DictionarySweepConfig {
                lcd_ks: args.lcd_k.clone(),
                fine_metrics: args.fine_metrics.clone(),
                mu: args.mu,
                repeats: args.repeats,
            };
            run_dictionary_sweep(&pool, sizes, &config, args.seed)?
        }
        (None, None, m_list) => {
            let m_list = m_list
                .clone()
                .unwrap_or_else(|| vec![2, 8, 32, 128, 256]);
            if args.lcd_k.len() != 1 {
                return Err(Error::InvalidArgument(
                    "the synthetic study takes a single --lcd-k".into(),
                ));
            }
            let config = SameDirectionConfig {
                per_class: args.per_class,
                lcd_k: args.lcd_k[0],
                mu: args.mu,
            };
            let seeds: Vec<u64> = (0..args.repeats.max(1) as u64)
                .map(|i| args.seed.wrapping_add(i))
                .collect();
            run_same_direction(&m_list, &config, &seeds)?
        }
        _ => {
            return Err(Error::InvalidArgument(
                "give --train with --sizes for a dictionary sweep, \
                 or --m-list alone for the synthetic study"
                    .into(),
            ))
        }
    };
    emit_text(&table.to_csv(), args.out.as_deref())
}

fn run_bench(args: BenchArgs) -> Result<()> {
    apply_threads(args.threads)?;
    let train = load_data(&args.train)?;
    let test = load_data(&args.test)?;
    check_dims(&train, &test)?;
    let test = match args.queries {
        Some(q) if q < test.len() => test.select(&(0..q).collect::<Vec<_>>())?,
        _ => test,
    };
    let methods = match args.model.method {
        Some(m) => vec![m],
        None => vec![Method::CrcGd, Method::KcrcGd, Method::KcrcLcd],
    };
    let mut table = String::from("method,median_ms,mean_ms,accuracy,n_queries\n");
    for method in methods {
        let fitted = fit_method(method, &train, &args.model, args.seed)?;
        // Sequential queries so the timings are uncontended.
        let report = evaluate(|y| fitted.classify(y), &test, &fitted.describe(), false)?;
        let _ = writeln!(
            table,
            "{},{},{},{},{}",
            method.name(),
            report.timing.median_ms,
            report.timing.mean_ms,
            report.accuracy,
            report.n_queries
        );
    }
    emit_text(&table, args.out.as_deref())
}

// ===== Model construction =====

/// A fitted classifier of any method, ready to score queries.
enum Fitted {
    Crc(CrcModel),
    Kcrc(KcrcModel),
    Lcd {
        train: Dictionary,
        cfg: LcdConfig,
        settings: LcdSettings,
        cache: Option<DistanceCache>,
    },
}

impl Fitted {
    fn classify(&self, y: &[f64]) -> Result<Label> {
        match self {
            Fitted::Crc(model) => crc_classify(model, y).map(|r| r.label),
            Fitted::Kcrc(model) => kcrc_classify(model, y).map(|r| r.label),
            Fitted::Lcd {
                train,
                cfg,
                settings,
                cache,
            } => {
                let result = if cfg.coarse_k.is_some() {
                    classify_practical(train, y, cfg, settings, cache.as_ref())?
                } else {
                    classify_naive(train, y, cfg, settings, cache.as_ref())?
                };
                Ok(result.label)
            }
        }
    }

    /// Config echo recorded in reports.
    fn describe(&self) -> String {
        match self {
            Fitted::Crc(model) => format!("method=crc-gd mu={}", model.mu()),
            Fitted::Kcrc(model) => format!(
                "method=kcrc kernel={} psi={}",
                model.kernel().name(),
                model.psi().method().name()
            ),
            Fitted::Lcd { cfg, settings, .. } => {
                let kernel = match &settings.kernel {
                    LcdKernel::Explicit(spec) => spec.name().to_string(),
                    LcdKernel::FromDistance(DistTransform::Polarization) => {
                        "dist_polarization".into()
                    }
                    LcdKernel::FromDistance(DistTransform::Exponential { beta }) => {
                        format!("dist_exponential beta={beta}")
                    }
                };
                let metrics: Vec<&str> = cfg.fine_metrics.iter().map(|m| m.name()).collect();
                format!(
                    "method=kcrc-lcd k={} coarse_k={:?} metrics={} kernel={}",
                    cfg.k,
                    cfg.coarse_k,
                    metrics.join("+"),
                    kernel
                )
            }
        }
    }
}

fn fit_method(
    method: Method,
    train: &Dictionary,
    model: &ModelArgs,
    seed: u64,
) -> Result<Fitted> {
    match method {
        Method::CrcGd => Ok(Fitted::Crc(crc_fit(train, model.mu)?)),
        Method::KcrcGd | Method::KcrcRobust => {
            let kernel = explicit_kernel(model, train)?;
            let psi = psi_method(model, seed)?;
            let variant = if method == Method::KcrcRobust {
                SolverVariant::Robust(alm_config(model))
            } else {
                SolverVariant::Rls { mu: model.mu }
            };
            Ok(Fitted::Kcrc(kcrc_fit(train, kernel, &psi, variant)?))
        }
        Method::KcrcLcd => {
            let (kernel, cache) = lcd_kernel(model, train)?;
            let cfg = match model.lcd_coarse_k {
                Some(coarse_k) => LcdConfig::coarse_to_fine(
                    model.lcd_k,
                    coarse_k,
                    model.coarse_metric,
                    model.fine_metrics.clone(),
                ),
                None => LcdConfig::naive(model.lcd_k, model.fine_metrics.clone()),
            };
            let settings = LcdSettings {
                kernel,
                psi: psi_method(model, seed)?,
                variant: SolverVariant::Rls { mu: model.mu },
            };
            Ok(Fitted::Lcd {
                train: train.clone(),
                cfg,
                settings,
                cache,
            })
        }
    }
}

fn alm_config(model: &ModelArgs) -> AlmConfig {
    AlmConfig {
        mu: model.mu,
        sigma0: model.sigma0,
        rho: model.rho,
        tau: model.tau,
        max_iter: model.max_iter,
    }
}

fn psi_method(model: &ModelArgs, seed: u64) -> Result<PsiMethod> {
    let need_dim = |name: &str| {
        model.dim.ok_or_else(|| {
            Error::InvalidArgument(format!("--psi {name} requires --dim"))
        })
    };
    Ok(match model.psi {
        PsiName::Identity => PsiMethod::Identity,
        PsiName::Kpca => PsiMethod::Kpca {
            dim: need_dim("kpca")?,
        },
        PsiName::Random => PsiMethod::Random {
            dim: need_dim("random")?,
            seed,
        },
        PsiName::Graph => PsiMethod::Graph {
            dim: need_dim("graph")?,
            config: GraphConfig::default(),
        },
    })
}

/// Kernel for the global methods; distance-derived kernels run on the fine
/// metrics (unified when several are given, scaled by their median train
/// pair distances).
fn explicit_kernel(model: &ModelArgs, train: &Dictionary) -> Result<KernelSpec> {
    match model.kernel {
        KernelName::Linear => Ok(KernelSpec::Linear),
        KernelName::Rbf => {
            let beta = match model.beta {
                Some(b) => b,
                None => median_heuristic_beta(train.atoms()),
            };
            KernelSpec::rbf(beta)
        }
        KernelName::DistPolarization => Ok(KernelSpec::DistPolarization {
            metric: global_metric(&model.fine_metrics, train)?,
        }),
        KernelName::DistExponential => {
            let beta = dist_exp_beta(model, train)?;
            KernelSpec::dist_exponential(global_metric(&model.fine_metrics, train)?, beta)
        }
    }
}

/// Kernel and atom-distance cache for the locality-constrained method.
fn lcd_kernel(
    model: &ModelArgs,
    train: &Dictionary,
) -> Result<(LcdKernel, Option<DistanceCache>)> {
    match model.kernel {
        KernelName::Linear => Ok((LcdKernel::Explicit(KernelSpec::Linear), None)),
        KernelName::Rbf => {
            let beta = match model.beta {
                Some(b) => b,
                None => median_heuristic_beta(train.atoms()),
            };
            Ok((LcdKernel::Explicit(KernelSpec::rbf(beta)?), None))
        }
        KernelName::DistPolarization => Ok((
            LcdKernel::FromDistance(DistTransform::Polarization),
            Some(DistanceCache::build(train, &model.fine_metrics)?),
        )),
        KernelName::DistExponential => {
            let beta = dist_exp_beta(model, train)?;
            Ok((
                LcdKernel::FromDistance(DistTransform::Exponential { beta }),
                Some(DistanceCache::build(train, &model.fine_metrics)?),
            ))
        }
    }
}

/// Bandwidth for the exponential distance kernel: explicit --beta, the
/// median-distance heuristic for a single raw metric, and 1.0 for the
/// unified distance (already median-scaled).
fn dist_exp_beta(model: &ModelArgs, train: &Dictionary) -> Result<f64> {
    match model.beta {
        Some(b) => Ok(b),
        None if model.fine_metrics.len() == 1 => {
            median_distance_beta(train.atoms(), &model.fine_metrics[0])
        }
        None => Ok(1.0),
    }
}

fn global_metric(metrics: &[MetricSpec], train: &Dictionary) -> Result<Metric> {
    if metrics.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one metric is required".into(),
        ));
    }
    if metrics.len() == 1 {
        return Ok(Metric::Single(metrics[0]));
    }
    let mut scales = Vec::with_capacity(metrics.len());
    for metric in metrics {
        let n = train.len();
        let mut dists = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                dists.push(distance(
                    metric,
                    train.atoms().column(i),
                    train.atoms().column(j),
                )?);
            }
        }
        scales.push(median_of(dists).filter(|s| *s >= 1e-12).unwrap_or(1.0));
    }
    Ok(Metric::Unified(UnifiedMetric::new(
        metrics.to_vec(),
        scales,
    )?))
}

fn median_of(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    })
}

// ===== Plumbing =====

fn apply_threads(threads: Option<usize>) -> Result<()> {
    if let Some(threads) = threads {
        if threads == 0 {
            return Err(Error::InvalidArgument(
                "--threads must be at least 1".into(),
            ));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    Ok(())
}

/// "images,labels" selects the IDX pair loader; anything else is CSV.
fn load_data(spec: &str) -> Result<Dictionary> {
    match spec.split_once(',') {
        Some((images, labels)) => load_idx(images.trim(), labels.trim()),
        None => load_csv(spec),
    }
}

fn check_dims(train: &Dictionary, test: &Dictionary) -> Result<()> {
    if train.feature_dim() != test.feature_dim() {
        return Err(Error::DimensionMismatch(format!(
            "train has {} features, test has {}",
            train.feature_dim(),
            test.feature_dim()
        )));
    }
    Ok(())
}

fn emit_report(report: &EvalReport, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, report.to_csv())?;
            let confusion = sibling_path(path, "confusion");
            std::fs::write(&confusion, report.confusion_to_csv())?;
            println!("accuracy {}", report.accuracy);
            println!("wrote {}", path.display());
            println!("wrote {}", confusion.display());
        }
        None => {
            print!("{}", report.to_csv());
        }
    }
    Ok(())
}

fn emit_text(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text)?;
            println!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

/// report.csv -> report.confusion.csv (keeps directory and extension).
fn sibling_path(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{tag}"),
    };
    path.with_file_name(name)
}
