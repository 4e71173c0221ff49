//! Kernel functions, Gram matrices, and kernel vectors.
//!
//! Besides the usual linear and Gaussian kernels, any distance metric can be
//! turned into a similarity through polarization of squared distances or a
//! decaying exponential. Distance-derived kernels are not guaranteed positive
//! semidefinite, so their Gram matrices are repaired by eigenvalue clamping
//! when needed.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::metrics::{squared_euclidean, Metric, MetricSpec};

/// Most negative eigenvalue tolerated before a Gram matrix is repaired.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// The supported kernel functions.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// k(u, v) = u . v
    Linear,
    /// k(u, v) = exp(-beta |u - v|^2)
    Rbf { beta: f64 },
    /// k(u, v) = (d(u, 0)^2 + d(v, 0)^2 - d(u, v)^2) / 2, the polarization
    /// identity applied to an arbitrary metric. Coincides with the linear
    /// kernel when the metric is euclidean.
    DistPolarization { metric: Metric },
    /// k(u, v) = exp(-d(u, v) / beta^2)
    DistExponential { metric: Metric, beta: f64 },
}

impl KernelSpec {
    pub fn rbf(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "rbf bandwidth must be positive and finite, got {beta}"
            )));
        }
        Ok(KernelSpec::Rbf { beta })
    }

    pub fn dist_exponential(metric: Metric, beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "exponential kernel bandwidth must be positive and finite, got {beta}"
            )));
        }
        Ok(KernelSpec::DistExponential { metric, beta })
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Rbf { .. } => "rbf",
            KernelSpec::DistPolarization { .. } => "dist_polarization",
            KernelSpec::DistExponential { .. } => "dist_exponential",
        }
    }

    /// Distance-derived kernels may produce indefinite Gram matrices and are
    /// therefore subject to repair.
    pub fn is_distance_derived(&self) -> bool {
        matches!(
            self,
            KernelSpec::DistPolarization { .. } | KernelSpec::DistExponential { .. }
        )
    }
}

/// Polarization of metric distances: (d(u,0)^2 + d(v,0)^2 - d(u,v)^2) / 2.
/// Shared by the direct kernel evaluation and memoized-distance callers.
pub(crate) fn polarization_value(du: f64, dv: f64, duv: f64) -> f64 {
    0.5 * (du * du + dv * dv - duv * duv)
}

/// Exponential decay of a metric distance: exp(-d / beta^2). Shared like
/// [`polarization_value`].
pub(crate) fn dist_exponential_value(d: f64, beta: f64) -> f64 {
    (-d / (beta * beta)).exp()
}

/// Single kernel evaluation between two equal-length vectors.
pub fn kernel_eval(spec: &KernelSpec, u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    if u.is_empty() {
        return Err(Error::InvalidArgument("empty vectors".into()));
    }
    match spec {
        KernelSpec::Linear => Ok(u.iter().zip(v).map(|(a, b)| a * b).sum()),
        KernelSpec::Rbf { beta } => Ok((-beta * squared_euclidean(u, v)).exp()),
        KernelSpec::DistPolarization { metric } => {
            let zero = vec![0.0; u.len()];
            let du = metric.distance(u, &zero)?;
            let dv = metric.distance(v, &zero)?;
            let duv = metric.distance(u, v)?;
            Ok(polarization_value(du, dv, duv))
        }
        KernelSpec::DistExponential { metric, beta } => {
            Ok(dist_exponential_value(metric.distance(u, v)?, *beta))
        }
    }
}

/// A kernel Gram matrix over a set of atoms, symmetric by construction and
/// repaired to positive semidefiniteness when the kernel warrants it.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    values: DMatrix<f64>,
    repaired: bool,
}

impl GramMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Whether eigenvalue clamping actually changed the matrix.
    pub fn repaired(&self) -> bool {
        self.repaired
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

/// Gram matrix of all atom pairs. The upper triangle is evaluated and
/// mirrored so the result is exactly symmetric; distance-derived kernels are
/// then repaired if indefinite.
pub fn gram_matrix(spec: &KernelSpec, atoms: &FeatureMatrix) -> Result<GramMatrix> {
    let n = atoms.cols();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "gram matrix of an empty atom set".into(),
        ));
    }
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let k = kernel_eval(spec, atoms.column(i), atoms.column(j))?;
            values[(i, j)] = k;
            values[(j, i)] = k;
        }
    }
    Ok(finalize_gram(values, spec))
}

/// Wrap raw symmetric kernel values into a [`GramMatrix`], repairing
/// distance-derived kernels. Shared by [`gram_matrix`] and callers that
/// assemble the values from memoized distances.
pub(crate) fn finalize_gram(values: DMatrix<f64>, spec: &KernelSpec) -> GramMatrix {
    let mut values = values;
    let mut repaired = false;
    if spec.is_distance_derived() {
        let (fixed, changed) = psd_repair(&values);
        values = fixed;
        repaired = changed;
    }
    GramMatrix { values, repaired }
}

/// Kernel evaluations of a query against every atom, as a column vector.
/// Raw kernel values: no repair is applied here.
pub fn kernel_vector(spec: &KernelSpec, atoms: &FeatureMatrix, query: &[f64]) -> Result<DVector<f64>> {
    if query.len() != atoms.rows() {
        return Err(Error::DimensionMismatch(format!(
            "query of length {} against atoms of dimension {}",
            query.len(),
            atoms.rows()
        )));
    }
    let mut out = DVector::zeros(atoms.cols());
    for j in 0..atoms.cols() {
        out[j] = kernel_eval(spec, atoms.column(j), query)?;
    }
    Ok(out)
}

/// Clamp negative eigenvalues of a symmetric matrix to zero. Returns the
/// matrix and whether it changed; a matrix whose smallest eigenvalue is
/// already above -[`PSD_TOLERANCE`] is passed through untouched.
pub fn psd_repair(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.min();
    if min >= -PSD_TOLERANCE {
        return (m.clone(), false);
    }
    let clamped = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|l| l.max(0.0)),
    );
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    // Reconstruction leaves rounding-level asymmetry; fold it out.
    let sym = 0.5 * (&rebuilt + rebuilt.transpose());
    (sym, true)
}

/// Gaussian bandwidth from the median heuristic: beta = 1 / (2 med^2) where
/// med is the median euclidean distance over distinct atom pairs. Falls back
/// to 1.0 when there are no pairs or the atoms are (nearly) coincident.
pub fn median_heuristic_beta(atoms: &FeatureMatrix) -> f64 {
    let n = atoms.cols();
    if n < 2 {
        return 1.0;
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(squared_euclidean(atoms.column(i), atoms.column(j)).sqrt());
        }
    }
    let median = crate::metrics::median(dists).expect("n >= 2 guarantees pairs");
    if median < 1e-12 {
        return 1.0;
    }
    1.0 / (2.0 * median * median)
}

/// Bandwidth for the distance-derived exponential kernel: with
/// beta = sqrt(med), exp(-d / beta^2) passes through 1/e at the median
/// pairwise distance. Falls back to 1.0 when there are no pairs or the
/// atoms are (nearly) coincident.
pub fn median_distance_beta(atoms: &FeatureMatrix, metric: &MetricSpec) -> Result<f64> {
    let n = atoms.cols();
    if n < 2 {
        return Ok(1.0);
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(crate::metrics::distance(
                metric,
                atoms.column(i),
                atoms.column(j),
            )?);
        }
    }
    let median = crate::metrics::median(dists).expect("n >= 2 guarantees pairs");
    Ok(if median < 1e-12 { 1.0 } else { median.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricSpec;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn toy_atoms() -> FeatureMatrix {
        FeatureMatrix::new(DMatrix::from_column_slice(
            3,
            4,
            &[
                1.0, 0.5, -0.2, //
                0.0, 1.0, 0.3, //
                -1.0, 0.2, 0.8, //
                0.4, -0.6, 0.1,
            ],
        ))
        .unwrap()
    }

    #[test]
    fn linear_gram_matches_matrix_product() {
        let atoms = toy_atoms();
        let gram = gram_matrix(&KernelSpec::Linear, &atoms).unwrap();
        let oracle = atoms.matrix().transpose() * atoms.matrix();
        assert!((gram.values() - &oracle).abs().max() < 1e-14);
        assert!(!gram.repaired());
    }

    #[test]
    fn rbf_matches_hand_value_and_unit_diagonal() {
        let u = [1.0, 2.0];
        let v = [3.0, -1.0];
        let k = kernel_eval(&KernelSpec::Rbf { beta: 0.25 }, &u, &v).unwrap();
        assert!((k - (-0.25f64 * 13.0).exp()).abs() < 1e-15);

        let gram = gram_matrix(&KernelSpec::Rbf { beta: 0.7 }, &toy_atoms()).unwrap();
        for i in 0..4 {
            assert_eq!(gram.values()[(i, i)], 1.0);
        }
    }

    #[test]
    fn rbf_rejects_bad_bandwidth() {
        assert!(KernelSpec::rbf(0.0).is_err());
        assert!(KernelSpec::rbf(-1.0).is_err());
        assert!(KernelSpec::rbf(f64::NAN).is_err());
        assert!(KernelSpec::rbf(2.0).is_ok());
    }

    #[test]
    fn euclidean_polarization_recovers_linear_kernel() {
        // (|u|^2 + |v|^2 - |u-v|^2) / 2 = u . v
        let spec = KernelSpec::DistPolarization {
            metric: MetricSpec::Euclidean.into(),
        };
        let atoms = toy_atoms();
        for i in 0..atoms.cols() {
            for j in 0..atoms.cols() {
                let got = kernel_eval(&spec, atoms.column(i), atoms.column(j)).unwrap();
                let want =
                    kernel_eval(&KernelSpec::Linear, atoms.column(i), atoms.column(j)).unwrap();
                assert!((got - want).abs() < 1e-12, "({i},{j}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn exponential_kernel_examples() {
        let metric: Metric = MetricSpec::Manhattan.into();
        let spec = KernelSpec::dist_exponential(metric, 2.0).unwrap();
        let u = [1.0, 2.0];
        assert_eq!(kernel_eval(&spec, &u, &u).unwrap(), 1.0);
        let v = [4.0, 6.0]; // manhattan distance 7
        let k = kernel_eval(&spec, &u, &v).unwrap();
        assert!((k - (-7.0f64 / 4.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn kernel_vector_matches_gram_column_on_atoms() {
        let atoms = toy_atoms();
        for spec in [
            KernelSpec::Linear,
            KernelSpec::Rbf { beta: 0.9 },
        ] {
            let gram = gram_matrix(&spec, &atoms).unwrap();
            let kv = kernel_vector(&spec, &atoms, atoms.column(2)).unwrap();
            for i in 0..4 {
                assert!(
                    (kv[i] - gram.values()[(i, 2)]).abs() < 1e-15,
                    "{} row {i}",
                    spec.name()
                );
            }
        }
    }

    #[test]
    fn kernel_vector_rejects_dimension_mismatch() {
        let atoms = toy_atoms();
        assert!(matches!(
            kernel_vector(&KernelSpec::Linear, &atoms, &[1.0, 2.0]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn psd_repair_leaves_psd_input_alone() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (fixed, changed) = psd_repair(&m);
        assert!(!changed);
        assert_eq!(fixed, m);
    }

    #[test]
    fn psd_repair_clamps_negative_eigenvalues() {
        // Eigenvalues +1 and -1; the repaired matrix is the nearest PSD
        // matrix in Frobenius norm, [[0.5, 0.5], [0.5, 0.5]].
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let (fixed, changed) = psd_repair(&m);
        assert!(changed);
        for (got, want) in fixed.iter().zip([0.5, 0.5, 0.5, 0.5]) {
            assert!((got - want).abs() < 1e-12);
        }
        let min = SymmetricEigen::new(fixed.clone()).eigenvalues.min();
        assert!(min >= -PSD_TOLERANCE);
        // Idempotent from here on.
        let (again, changed_again) = psd_repair(&fixed);
        assert!(!changed_again);
        assert_eq!(again, fixed);
    }

    #[test]
    fn distance_gram_is_repaired_to_psd() {
        // Correlation distance does not produce a PSD similarity in general;
        // whatever happens, the published Gram must satisfy the bound.
        let atoms = toy_atoms();
        let spec = KernelSpec::DistPolarization {
            metric: MetricSpec::Correlation.into(),
        };
        let gram = gram_matrix(&spec, &atoms).unwrap();
        let min = SymmetricEigen::new(gram.values().clone()).eigenvalues.min();
        assert!(min >= -PSD_TOLERANCE, "min eigenvalue {min}");
    }

    #[test]
    fn median_heuristic_matches_hand_computation() {
        // Colinear points at 0, 1, 3: pair distances 1, 3, 2; median 2.
        let atoms = FeatureMatrix::new(DMatrix::from_column_slice(1, 3, &[0.0, 1.0, 3.0]))
            .unwrap();
        let beta = median_heuristic_beta(&atoms);
        assert!((beta - 1.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn median_heuristic_falls_back_on_degenerate_input() {
        let single = FeatureMatrix::new(DMatrix::from_column_slice(2, 1, &[1.0, 2.0])).unwrap();
        assert_eq!(median_heuristic_beta(&single), 1.0);
        let coincident =
            FeatureMatrix::new(DMatrix::from_column_slice(2, 3, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]))
                .unwrap();
        assert_eq!(median_heuristic_beta(&coincident), 1.0);
    }

    fn small_atoms() -> impl Strategy<Value = FeatureMatrix> {
        ((2usize..5), (2usize..6)).prop_flat_map(|(m, n)| {
            proptest::collection::vec(-5.0f64..5.0, m * n).prop_map(move |data| {
                FeatureMatrix::new(DMatrix::from_column_slice(m, n, &data)).unwrap()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn grams_are_exactly_symmetric(atoms in small_atoms(), beta in 0.05f64..2.0) {
            let specs = [
                KernelSpec::Linear,
                KernelSpec::Rbf { beta },
                KernelSpec::DistExponential {
                    metric: MetricSpec::Manhattan.into(),
                    beta,
                },
            ];
            for spec in specs {
                let gram = gram_matrix(&spec, &atoms).unwrap();
                let v = gram.values();
                prop_assert_eq!(v, &v.transpose());
            }
        }

        #[test]
        fn linear_gram_is_psd(atoms in small_atoms()) {
            let gram = gram_matrix(&KernelSpec::Linear, &atoms).unwrap();
            let min = SymmetricEigen::new(gram.values().clone()).eigenvalues.min();
            let scale = gram.values().abs().max().max(1.0);
            prop_assert!(min >= -1e-10 * scale);
        }

        #[test]
        fn rbf_values_lie_in_unit_interval(atoms in small_atoms(), beta in 0.05f64..2.0) {
            let gram = gram_matrix(&KernelSpec::Rbf { beta }, &atoms).unwrap();
            for v in gram.values().iter() {
                prop_assert!(*v > 0.0 && *v <= 1.0);
            }
        }
    }
}
