//! Locality-constrained dictionaries: classify each query against only its
//! K nearest atoms instead of the whole dictionary.
//!
//! One sub-dictionary is selected per fine metric and the selections are
//! unioned; if the union carries a single label the query is decided
//! immediately (early exit), otherwise a kernel collaborative model is fit
//! on the local atoms alone. The practical driver first shortlists with a
//! cheap coarse metric, then runs the fine selection inside the shortlist.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};

use crate::classify::{decide, ClassificationResult, SolverVariant};
use crate::dataset::{Dictionary, FeatureMatrix, Label};
use crate::error::{Error, Result};
use crate::kernel::{
    dist_exponential_value, finalize_gram, gram_matrix, kernel_vector, polarization_value,
    GramMatrix, KernelSpec,
};
use crate::metrics::{distance, median, pairwise_distances, Metric, MetricSpec, UnifiedMetric};
use crate::reduction::{build_psi, PsiMethod};
use crate::solver::{alm_solve, rls_projection};

/// Neighborhood configuration for locality-constrained classification.
#[derive(Debug, Clone, PartialEq)]
pub struct LcdConfig {
    /// Fine neighborhood size (atoms kept per metric).
    pub k: usize,
    /// Coarse shortlist size; present only for the coarse-to-fine driver,
    /// and at least `k` when present.
    pub coarse_k: Option<usize>,
    /// Metrics whose neighborhoods are unioned; nonempty, no duplicates.
    pub fine_metrics: Vec<MetricSpec>,
    /// Shortlisting metric for the coarse stage.
    pub coarse_metric: MetricSpec,
}

impl LcdConfig {
    pub fn naive(k: usize, fine_metrics: Vec<MetricSpec>) -> Self {
        Self {
            k,
            coarse_k: None,
            fine_metrics,
            coarse_metric: MetricSpec::Euclidean,
        }
    }

    pub fn coarse_to_fine(
        k: usize,
        coarse_k: usize,
        coarse_metric: MetricSpec,
        fine_metrics: Vec<MetricSpec>,
    ) -> Self {
        Self {
            k,
            coarse_k: Some(coarse_k),
            fine_metrics,
            coarse_metric,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k > n {
            return Err(Error::InvalidArgument(format!(
                "neighborhood size must be in 1..={n}, got {}",
                self.k
            )));
        }
        if let Some(coarse_k) = self.coarse_k {
            if coarse_k < self.k || coarse_k > n {
                return Err(Error::InvalidArgument(format!(
                    "coarse shortlist size must be in {}..={n}, got {coarse_k}",
                    self.k
                )));
            }
        }
        if self.fine_metrics.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one fine metric is required".into(),
            ));
        }
        for (i, m) in self.fine_metrics.iter().enumerate() {
            if self.fine_metrics[..i].contains(m) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate fine metric {m}"
                )));
            }
        }
        Ok(())
    }
}

/// How each distance becomes a similarity when the local kernel is derived
/// from the selection metrics.
#[derive(Debug, Clone, PartialEq)]
pub enum DistTransform {
    /// Polarization of squared distances.
    Polarization,
    /// exp(-d / beta^2).
    Exponential { beta: f64 },
}

/// The kernel the local classifier runs with.
#[derive(Debug, Clone, PartialEq)]
pub enum LcdKernel {
    /// A fixed kernel, independent of the selection metrics.
    Explicit(KernelSpec),
    /// Derived per query from the fine metrics: the single metric itself,
    /// or the scale-aligned unified distance when several are in play.
    FromDistance(DistTransform),
}

/// Classifier settings for the local stage.
#[derive(Debug, Clone, PartialEq)]
pub struct LcdSettings {
    pub kernel: LcdKernel,
    pub psi: PsiMethod,
    pub variant: SolverVariant,
}

impl Default for LcdSettings {
    fn default() -> Self {
        Self {
            kernel: LcdKernel::FromDistance(DistTransform::Exponential { beta: 1.0 }),
            psi: PsiMethod::Identity,
            variant: SolverVariant::Rls {
                mu: crate::classify::DEFAULT_MU,
            },
        }
    }
}

/// A query's local sub-dictionary: which global atoms were chosen, plus a
/// self-contained view over them.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDictionary {
    indices: Vec<usize>,
    view: Dictionary,
    global_len: usize,
}

impl LocalDictionary {
    fn from_indices(dict: &Dictionary, indices: Vec<usize>) -> Result<Self> {
        let view = dict.select(&indices)?;
        Ok(Self {
            indices,
            view,
            global_len: dict.len(),
        })
    }

    /// Universal atom indices, strictly increasing.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn view(&self) -> &Dictionary {
        &self.view
    }

    /// Size of the global dictionary the indices refer to.
    pub fn global_len(&self) -> usize {
        self.global_len
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Indices of the k candidates nearest to the query, sorted ascending.
/// Distance ties break toward the smaller universal index.
fn select_core(
    metric: &MetricSpec,
    dict: &Dictionary,
    y: &[f64],
    k: usize,
    candidates: Option<&[usize]>,
) -> Result<Vec<usize>> {
    let n_cand = candidates.map_or(dict.len(), |c| c.len());
    if k == 0 || k > n_cand {
        return Err(Error::InvalidArgument(format!(
            "neighborhood size must be in 1..={n_cand}, got {k}"
        )));
    }
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(n_cand);
    match candidates {
        None => {
            for j in 0..dict.len() {
                scored.push((distance(metric, dict.atoms().column(j), y)?, j));
            }
        }
        Some(c) => {
            for &j in c {
                scored.push((distance(metric, dict.atoms().column(j), y)?, j));
            }
        }
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut indices: Vec<usize> = scored[..k].iter().map(|s| s.1).collect();
    indices.sort_unstable();
    Ok(indices)
}

/// Select the K atoms nearest to the query under one metric.
pub fn select_lcd(
    metric: &MetricSpec,
    dict: &Dictionary,
    y: &[f64],
    k: usize,
) -> Result<LocalDictionary> {
    let indices = select_core(metric, dict, y, k, None)?;
    LocalDictionary::from_indices(dict, indices)
}

/// Set union of several selections over the same global dictionary.
pub fn unify_lcds(selections: Vec<LocalDictionary>) -> Result<LocalDictionary> {
    let mut iter = selections.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::InvalidArgument("no selections to unify".into()))?;
    let rest: Vec<LocalDictionary> = iter.collect();
    if rest.is_empty() {
        return Ok(first);
    }

    let global_len = first.global_len();
    let dim = first.view().feature_dim();
    // Union index -> column and label, first occurrence wins; later
    // occurrences must agree or the selections come from different worlds.
    let mut merged: BTreeMap<usize, (Vec<f64>, Label)> = BTreeMap::new();
    for selection in std::iter::once(&first).chain(rest.iter()) {
        if selection.global_len() != global_len || selection.view().feature_dim() != dim {
            return Err(Error::InvalidArgument(
                "selections reference different global dictionaries".into(),
            ));
        }
        for (local, &global) in selection.indices().iter().enumerate() {
            let column = selection.view().atoms().column(local);
            let label = selection.view().label(local);
            match merged.get(&global) {
                None => {
                    merged.insert(global, (column.to_vec(), label));
                }
                Some((seen_column, seen_label)) => {
                    if *seen_label != label || seen_column.as_slice() != column {
                        return Err(Error::InvalidArgument(
                            "selections disagree about a shared atom; \
                             they reference different global dictionaries"
                                .into(),
                        ));
                    }
                }
            }
        }
    }

    let indices: Vec<usize> = merged.keys().copied().collect();
    let columns: Vec<Vec<f64>> = merged.values().map(|(c, _)| c.clone()).collect();
    let labels: Vec<Label> = merged.values().map(|(_, l)| *l).collect();
    let view = Dictionary::new(FeatureMatrix::from_columns(dim, &columns)?, labels)?;
    Ok(LocalDictionary {
        indices,
        view,
        global_len,
    })
}

/// Memoized atom-pair distances (and atom-to-origin distances) over the
/// global dictionary, per metric. Values come from the same distance
/// routine the uncached path calls, so using the cache cannot change any
/// result.
#[derive(Debug, Clone)]
pub struct DistanceCache {
    n: usize,
    feature_dim: usize,
    matrices: HashMap<MetricSpec, DMatrix<f64>>,
    zero: HashMap<MetricSpec, DVector<f64>>,
}

impl DistanceCache {
    pub fn build(dict: &Dictionary, metrics: &[MetricSpec]) -> Result<Self> {
        let mut matrices = HashMap::new();
        let mut zero = HashMap::new();
        let origin = vec![0.0; dict.feature_dim()];
        for metric in metrics {
            if matrices.contains_key(metric) {
                continue;
            }
            matrices.insert(
                *metric,
                pairwise_distances(metric, dict.atoms(), dict.atoms())?,
            );
            let mut to_origin = DVector::zeros(dict.len());
            for j in 0..dict.len() {
                to_origin[j] = distance(metric, dict.atoms().column(j), &origin)?;
            }
            zero.insert(*metric, to_origin);
        }
        Ok(Self {
            n: dict.len(),
            feature_dim: dict.feature_dim(),
            matrices,
            zero,
        })
    }

    pub fn matrix(&self, metric: &MetricSpec) -> Option<&DMatrix<f64>> {
        self.matrices.get(metric)
    }

    pub fn covers(&self, metrics: &[MetricSpec]) -> bool {
        metrics.iter().all(|m| self.matrices.contains_key(m))
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

fn check_cache(dict: &Dictionary, cache: Option<&DistanceCache>) -> Result<()> {
    if let Some(cache) = cache {
        if cache.n != dict.len() || cache.feature_dim != dict.feature_dim() {
            return Err(Error::InvalidArgument(format!(
                "distance cache was built for {} atoms of dimension {}, \
                 dictionary has {} of dimension {}",
                cache.n,
                cache.feature_dim,
                dict.len(),
                dict.feature_dim()
            )));
        }
    }
    Ok(())
}

/// Reference scale per member metric: its median distance over the local
/// atom pairs (1.0 when there are no pairs or they are degenerate).
fn member_scales(
    members: &[MetricSpec],
    lcd: &LocalDictionary,
    cache: Option<&DistanceCache>,
) -> Result<Vec<f64>> {
    let idx = lcd.indices();
    let mut scales = Vec::with_capacity(members.len());
    for member in members {
        let mut dists = Vec::with_capacity(idx.len() * idx.len().saturating_sub(1) / 2);
        match cache.and_then(|c| c.matrix(member)) {
            Some(m) => {
                for a in 0..idx.len() {
                    for b in (a + 1)..idx.len() {
                        dists.push(m[(idx[a], idx[b])]);
                    }
                }
            }
            None => {
                let atoms = lcd.view().atoms();
                for a in 0..atoms.cols() {
                    for b in (a + 1)..atoms.cols() {
                        dists.push(distance(member, atoms.column(a), atoms.column(b))?);
                    }
                }
            }
        }
        scales.push(median(dists).filter(|s| *s >= 1e-12).unwrap_or(1.0));
    }
    Ok(scales)
}

/// Concrete kernel for one query's local stage.
fn resolve_kernel(
    settings: &LcdSettings,
    fine_metrics: &[MetricSpec],
    lcd: &LocalDictionary,
    cache: Option<&DistanceCache>,
) -> Result<KernelSpec> {
    match &settings.kernel {
        LcdKernel::Explicit(spec) => Ok(spec.clone()),
        LcdKernel::FromDistance(transform) => {
            let metric = if fine_metrics.len() == 1 {
                Metric::Single(fine_metrics[0])
            } else {
                let scales = member_scales(fine_metrics, lcd, cache)?;
                Metric::Unified(UnifiedMetric::new(fine_metrics.to_vec(), scales)?)
            };
            Ok(match transform {
                DistTransform::Polarization => KernelSpec::DistPolarization { metric },
                DistTransform::Exponential { beta } => {
                    KernelSpec::dist_exponential(metric, *beta)?
                }
            })
        }
    }
}

fn cached_metric_distance(
    metric: &Metric,
    cache: &DistanceCache,
    i: usize,
    j: usize,
) -> f64 {
    match metric {
        Metric::Single(spec) => cache.matrices[spec][(i, j)],
        Metric::Unified(unified) => {
            let dists: Vec<f64> = unified
                .members()
                .iter()
                .map(|m| cache.matrices[m][(i, j)])
                .collect();
            unified.combine(&dists)
        }
    }
}

fn cached_origin_distance(metric: &Metric, cache: &DistanceCache, i: usize) -> f64 {
    match metric {
        Metric::Single(spec) => cache.zero[spec][i],
        Metric::Unified(unified) => {
            let dists: Vec<f64> = unified
                .members()
                .iter()
                .map(|m| cache.zero[m][i])
                .collect();
            unified.combine(&dists)
        }
    }
}

/// Local Gram matrix assembled from memoized distances; arithmetic matches
/// the uncached evaluation exactly.
fn cached_gram(
    kernel: &KernelSpec,
    lcd: &LocalDictionary,
    cache: &DistanceCache,
) -> GramMatrix {
    let idx = lcd.indices();
    let k = idx.len();
    let mut values = DMatrix::zeros(k, k);
    match kernel {
        KernelSpec::DistExponential { metric, beta } => {
            for a in 0..k {
                for b in a..k {
                    let v = dist_exponential_value(
                        cached_metric_distance(metric, cache, idx[a], idx[b]),
                        *beta,
                    );
                    values[(a, b)] = v;
                    values[(b, a)] = v;
                }
            }
        }
        KernelSpec::DistPolarization { metric } => {
            for a in 0..k {
                for b in a..k {
                    let v = polarization_value(
                        cached_origin_distance(metric, cache, idx[a]),
                        cached_origin_distance(metric, cache, idx[b]),
                        cached_metric_distance(metric, cache, idx[a], idx[b]),
                    );
                    values[(a, b)] = v;
                    values[(b, a)] = v;
                }
            }
        }
        _ => unreachable!("memoized grams exist only for distance-derived kernels"),
    }
    finalize_gram(values, kernel)
}

/// Fit-and-classify on the unified local dictionary, with the early exit
/// for label-pure neighborhoods.
fn classify_on_lcd(
    lcd: &LocalDictionary,
    y: &[f64],
    fine_metrics: &[MetricSpec],
    settings: &LcdSettings,
    cache: Option<&DistanceCache>,
) -> Result<ClassificationResult> {
    let view = lcd.view();
    let first = view.label(0);
    if view.labels().iter().all(|l| *l == first) {
        return Ok(ClassificationResult {
            label: first,
            residuals: BTreeMap::new(),
            coding: DVector::zeros(0),
            error_vector: None,
            early_exit: true,
        });
    }

    let kernel = resolve_kernel(settings, fine_metrics, lcd, cache)?;
    let gram = match (&kernel, cache) {
        (KernelSpec::DistExponential { .. } | KernelSpec::DistPolarization { .. }, Some(c))
            if cache_covers_metric(&kernel, c) =>
        {
            cached_gram(&kernel, lcd, c)
        }
        _ => gram_matrix(&kernel, view.atoms())?,
    };

    let psi = build_psi(&settings.psi, &gram, view.atoms())?;
    let identity = matches!(settings.psi, PsiMethod::Identity);
    let mut dprime = if identity {
        gram.values().clone()
    } else {
        psi.psi().tr_mul(gram.values())
    };
    crate::dataset::normalize_columns_in_place(&mut dprime);

    let kv = kernel_vector(&kernel, view.atoms(), y)?;
    let yprime = if identity { kv } else { psi.psi().tr_mul(&kv) };

    let (coding, error_vector) = match &settings.variant {
        // Fit-then-apply, with the same arithmetic as the global model:
        // the K = n neighborhood reproduces it bit for bit.
        SolverVariant::Rls { mu } => (rls_projection(&dprime, *mu)?.solve(&yprime)?, None),
        SolverVariant::Robust(config) => {
            let solved = alm_solve(&dprime, &yprime, config)?;
            (solved.x, Some(solved.e))
        }
    };
    let target = match &error_vector {
        Some(e) => &yprime - e,
        None => yprime,
    };
    let (label, residuals) = decide(&target, &dprime, view, &coding)?;
    Ok(ClassificationResult {
        label,
        residuals,
        coding,
        error_vector,
        early_exit: false,
    })
}

fn cache_covers_metric(kernel: &KernelSpec, cache: &DistanceCache) -> bool {
    let metric = match kernel {
        KernelSpec::DistExponential { metric, .. } => metric,
        KernelSpec::DistPolarization { metric } => metric,
        _ => return false,
    };
    match metric {
        Metric::Single(spec) => cache.covers(&[*spec]),
        Metric::Unified(unified) => cache.covers(unified.members()),
    }
}

/// Classify against the union of per-metric neighborhoods over the whole
/// dictionary.
pub fn classify_naive(
    dict: &Dictionary,
    y: &[f64],
    cfg: &LcdConfig,
    settings: &LcdSettings,
    cache: Option<&DistanceCache>,
) -> Result<ClassificationResult> {
    cfg.validate(dict.len())?;
    if cfg.coarse_k.is_some() {
        return Err(Error::InvalidArgument(
            "a coarse shortlist is set; use classify_practical".into(),
        ));
    }
    check_cache(dict, cache)?;
    let selections = cfg
        .fine_metrics
        .iter()
        .map(|m| select_lcd(m, dict, y, cfg.k))
        .collect::<Result<Vec<_>>>()?;
    let unified = unify_lcds(selections)?;
    classify_on_lcd(&unified, y, &cfg.fine_metrics, settings, cache)
}

/// Coarse-to-fine: shortlist `coarse_k` atoms with the coarse metric, then
/// run the fine selection and the local classifier inside the shortlist.
pub fn classify_practical(
    dict: &Dictionary,
    y: &[f64],
    cfg: &LcdConfig,
    settings: &LcdSettings,
    cache: Option<&DistanceCache>,
) -> Result<ClassificationResult> {
    cfg.validate(dict.len())?;
    let coarse_k = cfg.coarse_k.ok_or_else(|| {
        Error::InvalidArgument("no coarse shortlist is set; use classify_naive".into())
    })?;
    check_cache(dict, cache)?;
    let shortlist = select_core(&cfg.coarse_metric, dict, y, coarse_k, None)?;
    let selections = cfg
        .fine_metrics
        .iter()
        .map(|m| {
            let indices = select_core(m, dict, y, cfg.k, Some(&shortlist))?;
            LocalDictionary::from_indices(dict, indices)
        })
        .collect::<Result<Vec<_>>>()?;
    let unified = unify_lcds(selections)?;
    classify_on_lcd(&unified, y, &cfg.fine_metrics, settings, cache)
}
