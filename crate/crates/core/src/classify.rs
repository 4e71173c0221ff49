//! Collaborative-representation classifiers.
//!
//! A query is coded over the whole dictionary at once and assigned to the
//! class whose atoms explain it best relative to how much coding weight the
//! class received: r_i = |y - D_i x_i| / |x_i|. The plain variant codes in
//! feature space; the kernel variant codes the transformed query
//! y' = psi' K(D, y) over D' = psi' G with unit-normalized columns.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::dataset::{normalize_columns_in_place, normalize_dictionary, Dictionary, Label};
use crate::error::{Error, Result};
use crate::kernel::{gram_matrix, kernel_vector, KernelSpec};
use crate::reduction::{build_psi, PseudoTransform, PsiMethod};
use crate::solver::{alm_solve, rls_projection, AlmConfig, RlsProjection};

/// Coding-norm floor below which a class is excluded from the decision.
pub const CODING_NORM_FLOOR: f64 = 1e-12;

/// Default ridge weight for both classifier families.
pub const DEFAULT_MU: f64 = 1e-3;

/// Which coding solver a kernel model uses per query.
#[derive(Debug, Clone, PartialEq)]
pub enum SolverVariant {
    Rls { mu: f64 },
    Robust(AlmConfig),
}

/// The outcome of classifying one query.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    /// Winning class.
    pub label: Label,
    /// Regularized residual per training class; classes whose coding norm
    /// fell below [`CODING_NORM_FLOOR`] carry +infinity.
    pub residuals: BTreeMap<Label, f64>,
    /// Coding coefficients, one per atom of the dictionary that was coded
    /// against.
    pub coding: DVector<f64>,
    /// Sparse corruption estimate (robust solver only).
    pub error_vector: Option<DVector<f64>>,
    /// True when a locality-constrained path decided from neighborhood
    /// labels alone, skipping the coding solve entirely.
    pub early_exit: bool,
}

/// Residual decision shared by every classifier: reconstruct the target
/// per class from that class's coefficients, divide by the coefficient
/// norm, and take the smallest. Ties go to the smallest label.
pub(crate) fn decide(
    target: &DVector<f64>,
    d: &DMatrix<f64>,
    dictionary: &Dictionary,
    coding: &DVector<f64>,
) -> Result<(Label, BTreeMap<Label, f64>)> {
    let mut residuals = BTreeMap::new();
    let mut best: Option<(Label, f64)> = None;
    for &class in dictionary.classes() {
        let indices = dictionary.class_indices(class);
        let mut coeff_norm_sq = 0.0;
        let mut reconstruction = DVector::zeros(target.len());
        for &j in &indices {
            coeff_norm_sq += coding[j] * coding[j];
            reconstruction.axpy(coding[j], &d.column(j), 1.0);
        }
        let coeff_norm = coeff_norm_sq.sqrt();
        if coeff_norm < CODING_NORM_FLOOR {
            residuals.insert(class, f64::INFINITY);
            continue;
        }
        let r = (target - reconstruction).norm() / coeff_norm;
        residuals.insert(class, r);
        let better = match best {
            None => true,
            Some((_, b)) => r < b,
        };
        if better {
            best = Some((class, r));
        }
    }
    match best {
        Some((label, _)) => Ok((label, residuals)),
        None => Err(Error::Numerical(
            "every class's coding coefficients vanished; no residual is defined".into(),
        )),
    }
}

/// Feature-space collaborative classifier: unit-normalized atoms and a
/// precomputed ridge projection.
#[derive(Debug, Clone, PartialEq)]
pub struct CrcModel {
    dictionary: Dictionary,
    projection: RlsProjection,
    mu: f64,
}

impl CrcModel {
    /// The stored (column-normalized) dictionary.
    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn projection(&self) -> &RlsProjection {
        &self.projection
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

/// Fit the feature-space model: normalize atom columns, then materialize
/// P = (D'D + mu I)^-1 D'.
pub fn crc_fit(dictionary: &Dictionary, mu: f64) -> Result<CrcModel> {
    if dictionary.is_empty() {
        return Err(Error::InvalidArgument("empty dictionary".into()));
    }
    let normalized = normalize_dictionary(dictionary);
    let projection = rls_projection(normalized.atoms().matrix(), mu)?;
    Ok(CrcModel {
        dictionary: normalized,
        projection,
        mu,
    })
}

/// Code the raw query over the normalized dictionary and decide by
/// regularized residuals.
pub fn crc_classify(model: &CrcModel, y: &[f64]) -> Result<ClassificationResult> {
    let target = DVector::from_column_slice(y);
    let coding = model.projection.solve(&target)?;
    let (label, residuals) = decide(
        &target,
        model.dictionary.atoms().matrix(),
        &model.dictionary,
        &coding,
    )?;
    Ok(ClassificationResult {
        label,
        residuals,
        coding,
        error_vector: None,
        early_exit: false,
    })
}

/// Kernel-space collaborative classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct KcrcModel {
    dictionary: Dictionary,
    kernel: KernelSpec,
    psi: PseudoTransform,
    /// psi' G with unit-normalized columns; the coding dictionary.
    dprime: DMatrix<f64>,
    /// Norms the columns of psi' G carried before normalization.
    scales: DVector<f64>,
    variant: SolverVariant,
    /// Materialized only for the regularized least-squares variant.
    projection: Option<RlsProjection>,
}

impl KcrcModel {
    /// The training dictionary exactly as provided (kernels see raw atoms).
    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn psi(&self) -> &PseudoTransform {
        &self.psi
    }

    pub fn dprime(&self) -> &DMatrix<f64> {
        &self.dprime
    }

    pub fn scales(&self) -> &DVector<f64> {
        &self.scales
    }

    pub fn variant(&self) -> &SolverVariant {
        &self.variant
    }

    pub fn projection(&self) -> Option<&RlsProjection> {
        self.projection.as_ref()
    }
}

/// Fit the kernel-space model: Gram matrix, pseudo transformation,
/// column-normalized D' = psi' G, and the solver state for the chosen
/// variant.
pub fn kcrc_fit(
    dictionary: &Dictionary,
    kernel: KernelSpec,
    method: &PsiMethod,
    variant: SolverVariant,
) -> Result<KcrcModel> {
    if dictionary.is_empty() {
        return Err(Error::InvalidArgument("empty dictionary".into()));
    }
    let gram = gram_matrix(&kernel, dictionary.atoms())?;
    let psi = build_psi(method, &gram, dictionary.atoms())?;
    // Identity leaves psi' G = G; skip the multiplication.
    let mut dprime = if matches!(method, PsiMethod::Identity) {
        gram.values().clone()
    } else {
        psi.psi().tr_mul(gram.values())
    };
    let scales = normalize_columns_in_place(&mut dprime);

    let projection = match &variant {
        SolverVariant::Rls { mu } => Some(rls_projection(&dprime, *mu)?),
        SolverVariant::Robust(config) => {
            // Surface bad settings at fit time, not on the first query.
            alm_config_check(config)?;
            None
        }
    };
    Ok(KcrcModel {
        dictionary: dictionary.clone(),
        kernel,
        psi,
        dprime,
        scales,
        variant,
        projection,
    })
}

fn alm_config_check(config: &AlmConfig) -> Result<()> {
    // Validation lives in the solver; run it on a trivial instance.
    let d = DMatrix::identity(1, 1);
    let y = DVector::zeros(1);
    alm_solve(&d, &y, config).map(|_| ())
}

/// Transform the query into coding space: y' = psi' K(D, y), unscaled.
pub(crate) fn transform_query(model: &KcrcModel, y: &[f64]) -> Result<DVector<f64>> {
    let kv = kernel_vector(&model.kernel, model.dictionary.atoms(), y)?;
    Ok(if matches!(model.psi.method(), PsiMethod::Identity) {
        kv
    } else {
        model.psi.psi().tr_mul(&kv)
    })
}

/// Classify a raw query with the kernel model.
pub fn kcrc_classify(model: &KcrcModel, y: &[f64]) -> Result<ClassificationResult> {
    let yprime = transform_query(model, y)?;
    let (coding, error_vector) = match &model.variant {
        SolverVariant::Rls { .. } => {
            let projection = model
                .projection
                .as_ref()
                .expect("rls variant always materializes its projection");
            (projection.solve(&yprime)?, None)
        }
        SolverVariant::Robust(config) => {
            let result = alm_solve(&model.dprime, &yprime, config)?;
            (result.x, Some(result.e))
        }
    };
    // The robust variant decides on the cleaned query y' - e.
    let target = match &error_vector {
        Some(e) => &yprime - e,
        None => yprime,
    };
    let (label, residuals) = decide(&target, &model.dprime, &model.dictionary, &coding)?;
    Ok(ClassificationResult {
        label,
        residuals,
        coding,
        error_vector,
        early_exit: false,
    })
}
