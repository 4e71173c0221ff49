//! Evaluation harness: accuracy, confusion matrices, per-query timing, and
//! the two stock experiment drivers (same-direction study and dictionary
//! size sweeps).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::classify::{
    crc_classify, crc_fit, kcrc_classify, kcrc_fit, SolverVariant, DEFAULT_MU,
};
use crate::dataset::{
    make_same_direction, stratified_split, Dictionary, Label, SplitSpec, DEFAULT_NOISE_VARIANCE,
};
use crate::error::{Error, Result};
use crate::kernel::{median_distance_beta, median_heuristic_beta, KernelSpec};
use crate::lcd::{classify_naive, DistTransform, LcdConfig, LcdKernel, LcdSettings};
use crate::metrics::{median, MetricSpec};
use crate::reduction::PsiMethod;

/// Per-query wall-clock summary, in milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingStats {
    pub median_ms: f64,
    pub mean_ms: f64,
}

impl TimingStats {
    fn from_times_ms(times: &[f64]) -> Self {
        if times.is_empty() {
            return Self {
                median_ms: 0.0,
                mean_ms: 0.0,
            };
        }
        Self {
            median_ms: median(times.to_vec()).expect("nonempty"),
            mean_ms: times.iter().sum::<f64>() / times.len() as f64,
        }
    }
}

/// Outcome of evaluating one classifier over a test set.
///
/// `classes` indexes `confusion` on both axes (rows actual, columns
/// predicted); entries sum to `n_queries`. Queries whose classification
/// errored are counted in `errors` and appear nowhere else.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub classes: Vec<Label>,
    pub confusion: Vec<Vec<u64>>,
    pub timing: TimingStats,
    pub n_queries: usize,
    pub errors: usize,
    pub config: String,
}

impl EvalReport {
    /// Serializes the full report as field,value CSV lines. The text
    /// re-parses to an equal report via [`EvalReport::from_csv`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from("field,value\n");
        let _ = writeln!(out, "accuracy,{}", self.accuracy);
        let _ = writeln!(out, "n_queries,{}", self.n_queries);
        let _ = writeln!(out, "errors,{}", self.errors);
        let _ = writeln!(out, "median_ms,{}", self.timing.median_ms);
        let _ = writeln!(out, "mean_ms,{}", self.timing.mean_ms);
        let _ = writeln!(out, "config,{}", self.config);
        let _ = writeln!(out, "classes,{}", join(self.classes.iter()));
        for row in &self.confusion {
            let _ = writeln!(out, "confusion,{}", join(row.iter()));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("field,value") {
            return Err(parse_err(1, "expected header line 'field,value'"));
        }
        let mut accuracy = None;
        let mut n_queries = None;
        let mut errors = None;
        let mut median_ms = None;
        let mut mean_ms = None;
        let mut config = None;
        let mut classes: Option<Vec<Label>> = None;
        let mut confusion: Vec<Vec<u64>> = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let (field, value) = line
                .split_once(',')
                .ok_or_else(|| parse_err(lineno, "expected 'field,value'"))?;
            match field {
                "accuracy" => accuracy = Some(parse_num::<f64>(lineno, value)?),
                "n_queries" => n_queries = Some(parse_num::<usize>(lineno, value)?),
                "errors" => errors = Some(parse_num::<usize>(lineno, value)?),
                "median_ms" => median_ms = Some(parse_num::<f64>(lineno, value)?),
                "mean_ms" => mean_ms = Some(parse_num::<f64>(lineno, value)?),
                "config" => config = Some(value.to_string()),
                "classes" => classes = Some(parse_list::<Label>(lineno, value)?),
                "confusion" => confusion.push(parse_list::<u64>(lineno, value)?),
                other => return Err(parse_err(lineno, &format!("unknown field '{other}'"))),
            }
        }
        let classes =
            classes.ok_or_else(|| Error::Parse { line: 0, message: "missing classes".into() })?;
        if confusion.len() != classes.len()
            || confusion.iter().any(|row| row.len() != classes.len())
        {
            return Err(Error::Parse {
                line: 0,
                message: "confusion matrix does not match the class list".into(),
            });
        }
        let missing = |name: &str| Error::Parse {
            line: 0,
            message: format!("missing {name}"),
        };
        Ok(Self {
            accuracy: accuracy.ok_or_else(|| missing("accuracy"))?,
            classes,
            confusion,
            timing: TimingStats {
                median_ms: median_ms.ok_or_else(|| missing("median_ms"))?,
                mean_ms: mean_ms.ok_or_else(|| missing("mean_ms"))?,
            },
            n_queries: n_queries.ok_or_else(|| missing("n_queries"))?,
            errors: errors.ok_or_else(|| missing("errors"))?,
            config: config.ok_or_else(|| missing("config"))?,
        })
    }

    /// Confusion matrix alone, as a labeled CSV table.
    pub fn confusion_to_csv(&self) -> String {
        let mut out = String::from("actual\\predicted");
        for class in &self.classes {
            let _ = write!(out, ",{class}");
        }
        out.push('\n');
        for (row, class) in self.confusion.iter().zip(&self.classes) {
            let _ = write!(out, "{class}");
            for count in row {
                let _ = write!(out, ",{count}");
            }
            out.push('\n');
        }
        out
    }
}

fn join<T: std::fmt::Display>(items: impl Iterator<Item = T>) -> String {
    items
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn parse_err(line: usize, message: &str) -> Error {
    Error::Parse {
        line,
        message: message.to_string(),
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| parse_err(line, &format!("bad number '{value}'")))
}

fn parse_list<T: std::str::FromStr>(line: usize, value: &str) -> Result<Vec<T>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(';').map(|v| parse_num(line, v)).collect()
}

/// Runs `classify` over every test column, tallying accuracy, the
/// confusion matrix, and per-query wall-clock time.
///
/// Individual query failures are tolerated up to 10% of the test set and
/// reported in `errors`; past that the first failure is returned. With
/// `parallel` set, queries run on the rayon pool (timing then reflects
/// contended wall-clock; keep timing runs sequential).
pub fn evaluate<F>(classify: F, test: &Dictionary, config: &str, parallel: bool) -> Result<EvalReport>
where
    F: Fn(&[f64]) -> Result<Label> + Sync,
{
    if test.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let n = test.len();
    let run_one = |k: usize| {
        let start = Instant::now();
        let outcome = classify(test.atoms().column(k));
        (outcome, start.elapsed().as_secs_f64() * 1e3)
    };
    let outcomes: Vec<(Result<Label>, f64)> = if parallel {
        (0..n).into_par_iter().map(run_one).collect()
    } else {
        (0..n).map(run_one).collect()
    };

    let mut errors = 0usize;
    let mut first_error = None;
    let mut pairs = Vec::with_capacity(n);
    let mut times = Vec::with_capacity(n);
    for (k, (outcome, ms)) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(predicted) => {
                pairs.push((test.label(k), predicted));
                times.push(ms);
            }
            Err(e) => {
                errors += 1;
                first_error.get_or_insert(e);
            }
        }
    }
    if errors * 10 > n {
        return Err(first_error.expect("errors imply a stored failure"));
    }

    let mut classes: Vec<Label> = test.classes().to_vec();
    for &(_, predicted) in &pairs {
        if !classes.contains(&predicted) {
            classes.push(predicted);
        }
    }
    classes.sort_unstable();
    let index: HashMap<Label, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i))
        .collect();
    let mut confusion = vec![vec![0u64; classes.len()]; classes.len()];
    let mut hits = 0u64;
    for &(actual, predicted) in &pairs {
        confusion[index[&actual]][index[&predicted]] += 1;
        if actual == predicted {
            hits += 1;
        }
    }
    Ok(EvalReport {
        accuracy: hits as f64 / pairs.len() as f64,
        classes,
        confusion,
        timing: TimingStats::from_times_ms(&times),
        n_queries: pairs.len(),
        errors,
        // Single-line configs keep the CSV round-trip exact.
        config: config.replace('\n', " "),
    })
}

/// One (parameter, method, accuracy) measurement of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: usize,
    pub method: String,
    pub accuracy: f64,
}

/// Sweep results with the parameter column named after what was varied.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub param_name: String,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},method,accuracy\n", self.param_name);
        for row in &self.rows {
            let _ = writeln!(out, "{},{},{}", row.param, row.method, row.accuracy);
        }
        out
    }
}

const SWEEP_METHODS: [&str; 3] = ["crc-gd", "kcrc-gd", "kcrc-lcd"];

/// Knobs for the same-direction study.
#[derive(Debug, Clone, PartialEq)]
pub struct SameDirectionConfig {
    /// Training atoms per class; the test set has the same size.
    pub per_class: usize,
    /// Fine neighborhood size for the locality-constrained rows.
    pub lcd_k: usize,
    pub mu: f64,
}

impl Default for SameDirectionConfig {
    fn default() -> Self {
        Self {
            per_class: 200,
            lcd_k: 20,
            mu: DEFAULT_MU,
        }
    }
}

/// Accuracy vs feature dimensionality on synthetic two-class data whose
/// classes share a direction and differ only by sign. One row per
/// (dimension, method), accuracy averaged over `seeds`.
pub fn run_same_direction(
    m_list: &[usize],
    config: &SameDirectionConfig,
    seeds: &[u64],
) -> Result<SweepTable> {
    if m_list.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one dimension and one seed are required".into(),
        ));
    }
    let mut rows = Vec::with_capacity(m_list.len() * SWEEP_METHODS.len());
    for &m in m_list {
        let mut sums = [0.0f64; 3];
        for &seed in seeds {
            let data = make_same_direction(
                m,
                2 * config.per_class,
                DEFAULT_NOISE_VARIANCE.sqrt(),
                seed,
            )?;
            let (train, test) = stratified_split(
                &data,
                &SplitSpec {
                    per_class: config.per_class,
                    seed,
                },
            )?;
            let accuracies = same_direction_round(&train, &test, config)?;
            for (sum, a) in sums.iter_mut().zip(accuracies) {
                *sum += a;
            }
        }
        for (method, sum) in SWEEP_METHODS.iter().zip(sums) {
            rows.push(SweepRow {
                param: m,
                method: (*method).to_string(),
                accuracy: sum / seeds.len() as f64,
            });
        }
    }
    Ok(SweepTable {
        param_name: "m".into(),
        rows,
    })
}

fn same_direction_round(
    train: &Dictionary,
    test: &Dictionary,
    config: &SameDirectionConfig,
) -> Result<[f64; 3]> {
    let beta = median_heuristic_beta(train.atoms());
    let variant = SolverVariant::Rls { mu: config.mu };

    let crc = crc_fit(train, config.mu)?;
    let crc_report = evaluate(
        |y| crc_classify(&crc, y).map(|r| r.label),
        test,
        "crc-gd",
        true,
    )?;

    let kcrc = kcrc_fit(
        train,
        KernelSpec::Rbf { beta },
        &PsiMethod::Identity,
        variant.clone(),
    )?;
    let kcrc_report = evaluate(
        |y| kcrc_classify(&kcrc, y).map(|r| r.label),
        test,
        "kcrc-gd",
        true,
    )?;

    let lcd_cfg = LcdConfig::naive(config.lcd_k.min(train.len()), vec![MetricSpec::Euclidean]);
    let lcd_settings = LcdSettings {
        kernel: LcdKernel::Explicit(KernelSpec::Rbf { beta }),
        psi: PsiMethod::Identity,
        variant,
    };
    let lcd_report = evaluate(
        |y| classify_naive(train, y, &lcd_cfg, &lcd_settings, None).map(|r| r.label),
        test,
        "kcrc-lcd",
        true,
    )?;

    Ok([
        crc_report.accuracy,
        kcrc_report.accuracy,
        lcd_report.accuracy,
    ])
}

/// Knobs for dictionary-size sweeps over a fixed labeled pool.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionarySweepConfig {
    /// Fine neighborhood size per swept dictionary size: either one entry
    /// broadcast to every size, or one entry per size.
    pub lcd_ks: Vec<usize>,
    /// Selection metrics for the locality-constrained rows; the local
    /// kernel is the decaying exponential of the (unified) distance.
    pub fine_metrics: Vec<MetricSpec>,
    pub mu: f64,
    /// Random re-splits averaged per size.
    pub repeats: usize,
}

impl Default for DictionarySweepConfig {
    fn default() -> Self {
        Self {
            lcd_ks: vec![50],
            fine_metrics: vec![MetricSpec::Euclidean],
            mu: DEFAULT_MU,
            repeats: 5,
        }
    }
}

/// Accuracy vs training-dictionary size: for every size, split the pool
/// into `size` training atoms per class plus a held-out test set, fit each
/// method, and average accuracy over `repeats` random splits.
pub fn run_dictionary_sweep(
    pool: &Dictionary,
    sizes: &[usize],
    config: &DictionarySweepConfig,
    seed: u64,
) -> Result<SweepTable> {
    if sizes.is_empty() {
        return Err(Error::InvalidArgument("no sizes to sweep".into()));
    }
    if config.repeats == 0 {
        return Err(Error::InvalidArgument("at least one repeat is required".into()));
    }
    if config.lcd_ks.len() != 1 && config.lcd_ks.len() != sizes.len() {
        return Err(Error::InvalidArgument(format!(
            "{} neighborhood sizes for {} dictionary sizes; give one per size or a single value",
            config.lcd_ks.len(),
            sizes.len()
        )));
    }

    let mut rows = Vec::with_capacity(sizes.len() * SWEEP_METHODS.len());
    for (i, &size) in sizes.iter().enumerate() {
        let lcd_k = if config.lcd_ks.len() == 1 {
            config.lcd_ks[0]
        } else {
            config.lcd_ks[i]
        };
        let mut sums = [0.0f64; 3];
        for r in 0..config.repeats {
            let split_seed = seed.wrapping_add((i * config.repeats + r) as u64);
            let (train, test) = stratified_split(
                pool,
                &SplitSpec {
                    per_class: size,
                    seed: split_seed,
                },
            )?;
            if test.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "size {size} leaves no test atoms"
                )));
            }
            let accuracies = dictionary_round(&train, &test, lcd_k, config)?;
            for (sum, a) in sums.iter_mut().zip(accuracies) {
                *sum += a;
            }
        }
        for (method, sum) in SWEEP_METHODS.iter().zip(sums) {
            rows.push(SweepRow {
                param: size,
                method: (*method).to_string(),
                accuracy: sum / config.repeats as f64,
            });
        }
    }
    Ok(SweepTable {
        param_name: "size".into(),
        rows,
    })
}

fn dictionary_round(
    train: &Dictionary,
    test: &Dictionary,
    lcd_k: usize,
    config: &DictionarySweepConfig,
) -> Result<[f64; 3]> {
    let variant = SolverVariant::Rls { mu: config.mu };

    let crc = crc_fit(train, config.mu)?;
    let crc_report = evaluate(
        |y| crc_classify(&crc, y).map(|r| r.label),
        test,
        "crc-gd",
        true,
    )?;

    let beta = median_heuristic_beta(train.atoms());
    let kcrc = kcrc_fit(
        train,
        KernelSpec::Rbf { beta },
        &PsiMethod::Identity,
        variant.clone(),
    )?;
    let kcrc_report = evaluate(
        |y| kcrc_classify(&kcrc, y).map(|r| r.label),
        test,
        "kcrc-gd",
        true,
    )?;

    // Unified distances are already median-scaled, so unit bandwidth fits;
    // a single raw metric gets the median-distance bandwidth instead.
    let dist_beta = if config.fine_metrics.len() == 1 {
        median_distance_beta(train.atoms(), &config.fine_metrics[0])?
    } else {
        1.0
    };
    let lcd_cfg = LcdConfig::naive(lcd_k.min(train.len()), config.fine_metrics.clone());
    let lcd_settings = LcdSettings {
        kernel: LcdKernel::FromDistance(DistTransform::Exponential { beta: dist_beta }),
        psi: PsiMethod::Identity,
        variant,
    };
    let lcd_report = evaluate(
        |y| classify_naive(train, y, &lcd_cfg, &lcd_settings, None).map(|r| r.label),
        test,
        "kcrc-lcd",
        true,
    )?;

    Ok([
        crc_report.accuracy,
        kcrc_report.accuracy,
        lcd_report.accuracy,
    ])
}
