//! Distance metrics between feature vectors, plus the scale-aligned unified
//! measure that averages several metrics after dividing each by a reference
//! scale (its median over a set of atom pairs).

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

/// Stabilizer added to chi-square denominators.
pub const CHI_SQUARE_EPS: f64 = 1e-12;

/// The supported distance metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricSpec {
    /// l2 norm of the difference.
    Euclidean,
    /// l1 norm of the difference.
    Manhattan,
    /// l-infinity norm of the difference.
    Chessboard,
    /// One minus the Pearson correlation coefficient; a vector with zero
    /// variance is assigned coefficient 0 by convention.
    Correlation,
    /// Symmetric chi-square: sum of (a-b)^2 / (a+b+eps) over non-negative
    /// entries, halved.
    ChiSquare,
}

impl MetricSpec {
    pub const ALL: [MetricSpec; 5] = [
        MetricSpec::Euclidean,
        MetricSpec::Manhattan,
        MetricSpec::Chessboard,
        MetricSpec::Correlation,
        MetricSpec::ChiSquare,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MetricSpec::Euclidean => "euclidean",
            MetricSpec::Manhattan => "manhattan",
            MetricSpec::Chessboard => "chessboard",
            MetricSpec::Correlation => "correlation",
            MetricSpec::ChiSquare => "chi_square",
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricSpec::ALL
            .iter()
            .find(|m| m.name() == s)
            .copied()
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown metric {s:?}; expected one of euclidean, manhattan, chessboard, \
                     correlation, chi_square"
                ))
            })
    }
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("empty vectors".into()));
    }
    Ok(())
}

/// Median of a sample; `None` when empty. Even-length samples average the
/// two middle values.
pub(crate) fn median(mut values: Vec<f64>) -> Option<f64> {
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

/// Squared euclidean distance; shared with the kernel module so cached and
/// recomputed values accumulate identically.
pub(crate) fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Distance between two equal-length vectors under the given metric.
pub fn distance(spec: &MetricSpec, a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    let d = match spec {
        MetricSpec::Euclidean => squared_euclidean(a, b).sqrt(),
        MetricSpec::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        MetricSpec::Chessboard => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max),
        MetricSpec::Correlation => 1.0 - pearson(a, b),
        MetricSpec::ChiSquare => {
            if let Some(v) = a.iter().chain(b).find(|v| **v < 0.0) {
                return Err(Error::Domain(format!(
                    "chi-square requires non-negative entries, found {v}"
                )));
            }
            let mut acc = 0.0;
            for (x, y) in a.iter().zip(b) {
                let d = x - y;
                acc += d * d / (x + y + CHI_SQUARE_EPS);
            }
            0.5 * acc
        }
    };
    Ok(d)
}

/// Pearson correlation coefficient, with the zero-variance convention
/// (either argument constant gives 0). Clamped to [-1, 1].
fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let mean_a: f64 = a.iter().sum::<f64>() / n;
    let mean_b: f64 = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut ssa = 0.0;
    let mut ssb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let da = x - mean_a;
        let db = y - mean_b;
        cov += da * db;
        ssa += da * da;
        ssb += db * db;
    }
    // Treat variance at rounding-noise level as zero.
    let scale_a: f64 = a.iter().map(|v| v * v).sum();
    let scale_b: f64 = b.iter().map(|v| v * v).sum();
    if ssa <= f64::EPSILON * f64::EPSILON * n * scale_a.max(1.0)
        || ssb <= f64::EPSILON * f64::EPSILON * n * scale_b.max(1.0)
    {
        return 0.0;
    }
    (cov / (ssa.sqrt() * ssb.sqrt())).clamp(-1.0, 1.0)
}

/// Distances between every column of `a` and every column of `b`;
/// entry (i, j) is the distance from `a` column i to `b` column j.
pub fn pairwise_distances(
    spec: &MetricSpec,
    a: &FeatureMatrix,
    b: &FeatureMatrix,
) -> Result<DMatrix<f64>> {
    if a.rows() != b.rows() {
        return Err(Error::DimensionMismatch(format!(
            "feature dimensions {} and {}",
            a.rows(),
            b.rows()
        )));
    }
    let mut out = DMatrix::zeros(a.cols(), b.cols());
    for i in 0..a.cols() {
        for j in 0..b.cols() {
            out[(i, j)] = distance(spec, a.column(i), b.column(j))?;
        }
    }
    Ok(out)
}

/// Equal-weight mean of several metrics, each divided by its own reference
/// scale, so metrics of different magnitudes contribute comparably.
#[derive(Debug, Clone, PartialEq)]
pub struct UnifiedMetric {
    members: Vec<MetricSpec>,
    scales: Vec<f64>,
}

impl UnifiedMetric {
    /// `scales[i]` is the reference scale (typically the median pair
    /// distance) that member `i` is divided by.
    pub fn new(members: Vec<MetricSpec>, scales: Vec<f64>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidArgument(
                "unified metric needs at least one member".into(),
            ));
        }
        if members.len() != scales.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} members but {} scales",
                members.len(),
                scales.len()
            )));
        }
        if let Some(s) = scales.iter().find(|s| !s.is_finite() || **s <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "unified metric scales must be positive and finite, got {s}"
            )));
        }
        Ok(Self { members, scales })
    }

    pub fn members(&self) -> &[MetricSpec] {
        &self.members
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let dists = self
            .members
            .iter()
            .map(|member| distance(member, a, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.combine(&dists))
    }

    /// Fold already-computed member distances (in member order) into the
    /// unified value. Shared by [`Self::distance`] and by callers that hold
    /// memoized member distances, so both produce bit-identical results.
    pub(crate) fn combine(&self, dists: &[f64]) -> f64 {
        debug_assert_eq!(dists.len(), self.members.len());
        let mut acc = 0.0;
        for (d, scale) in dists.iter().zip(&self.scales) {
            acc += d / scale;
        }
        acc / self.members.len() as f64
    }
}

/// A distance measure usable by distance-derived kernels: either one of the
/// base metrics or the unified multi-metric measure.
#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    Single(MetricSpec),
    Unified(UnifiedMetric),
}

impl Metric {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self {
            Metric::Single(spec) => distance(spec, a, b),
            Metric::Unified(unified) => unified.distance(a, b),
        }
    }
}

impl From<MetricSpec> for Metric {
    fn from(spec: MetricSpec) -> Self {
        Metric::Single(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    #[test]
    fn norm_metric_examples() {
        let a = [0.0, 0.0];
        let b = [3.0, 4.0];
        assert_eq!(distance(&MetricSpec::Euclidean, &a, &b).unwrap(), 5.0);
        let a = [1.0, 2.0];
        let b = [4.0, 6.0];
        assert_eq!(distance(&MetricSpec::Manhattan, &a, &b).unwrap(), 7.0);
        assert_eq!(distance(&MetricSpec::Chessboard, &a, &b).unwrap(), 4.0);
    }

    #[test]
    fn chi_square_examples() {
        let a = [1.0, 2.0, 3.0];
        assert!(distance(&MetricSpec::ChiSquare, &a, &a).unwrap().abs() < 1e-15);
        let b = [1.0, -2.0, 3.0];
        assert!(matches!(
            distance(&MetricSpec::ChiSquare, &a, &b),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn correlation_is_affine_invariant() {
        let a = [1.0, 2.0, 4.0, 8.0];
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v + 1.0).collect();
        let d = distance(&MetricSpec::Correlation, &a, &b).unwrap();
        assert!(d.abs() <= 1e-9, "correlation distance {d}");
    }

    #[test]
    fn correlation_constant_vector_convention() {
        // Zero-variance input gets coefficient 0, so distance 1.
        let a = [2.0, 2.0, 2.0];
        let b = [1.0, 5.0, 3.0];
        assert_eq!(distance(&MetricSpec::Correlation, &a, &b).unwrap(), 1.0);
        assert_eq!(distance(&MetricSpec::Correlation, &a, &a).unwrap(), 1.0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        for spec in MetricSpec::ALL {
            assert!(matches!(
                distance(&spec, &[1.0], &[1.0, 2.0]),
                Err(Error::DimensionMismatch(_))
            ));
        }
    }

    #[test]
    fn metric_names_round_trip() {
        for spec in MetricSpec::ALL {
            assert_eq!(spec.name().parse::<MetricSpec>().unwrap(), spec);
        }
        assert!("cosine".parse::<MetricSpec>().is_err());
    }

    #[test]
    fn pairwise_matches_hand_example() {
        let a = FeatureMatrix::new(DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]))
            .unwrap();
        let d = pairwise_distances(&MetricSpec::Euclidean, &a, &a).unwrap();
        assert!(d[(0, 0)].abs() < 1e-15);
        assert!((d[(0, 1)] - 2f64.sqrt()).abs() < 1e-15);
        assert!((d[(1, 0)] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn pairwise_matches_scalar_loop() {
        let mut rng_state = 88172645463325252u64;
        let mut next = move || {
            // xorshift keeps this oracle free of the crate's own RNG choices.
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state % 1000) as f64 / 500.0 - 1.0
        };
        let a = FeatureMatrix::new(DMatrix::from_fn(4, 6, |_, _| next())).unwrap();
        let b = FeatureMatrix::new(DMatrix::from_fn(4, 3, |_, _| next())).unwrap();
        for spec in [MetricSpec::Euclidean, MetricSpec::Manhattan, MetricSpec::Correlation] {
            let fast = pairwise_distances(&spec, &a, &b).unwrap();
            for i in 0..6 {
                for j in 0..3 {
                    let slow = distance(&spec, a.column(i), b.column(j)).unwrap();
                    assert_eq!(fast[(i, j)], slow, "{spec} mismatch at ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn pairwise_rejects_row_mismatch() {
        let a = FeatureMatrix::new(DMatrix::zeros(2, 2)).unwrap();
        let b = FeatureMatrix::new(DMatrix::zeros(3, 2)).unwrap();
        assert!(matches!(
            pairwise_distances(&MetricSpec::Euclidean, &a, &b),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn unified_metric_averages_scaled_members() {
        let unified = UnifiedMetric::new(
            vec![MetricSpec::Euclidean, MetricSpec::Manhattan],
            vec![2.0, 4.0],
        )
        .unwrap();
        let a = [0.0, 0.0];
        let b = [3.0, 4.0];
        // (5/2 + 7/4) / 2
        let expect = (2.5 + 1.75) / 2.0;
        assert!((unified.distance(&a, &b).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn unified_metric_validates_inputs() {
        assert!(UnifiedMetric::new(vec![], vec![]).is_err());
        assert!(UnifiedMetric::new(vec![MetricSpec::Euclidean], vec![0.0]).is_err());
        assert!(UnifiedMetric::new(vec![MetricSpec::Euclidean], vec![1.0, 2.0]).is_err());
    }

    /// Strategy: pairs of equal-length vectors with a guaranteed non-constant
    /// entry so the correlation convention does not kick in.
    fn vector_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..8).prop_flat_map(|len| {
            let v = proptest::collection::vec(-100.0f64..100.0, len);
            (v.clone(), v).prop_map(|(mut a, mut b)| {
                a[0] += 1.0; // break exact constancy
                b[0] -= 1.0;
                (a, b)
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn distances_are_symmetric_nonnegative((a, b) in vector_pair()) {
            for spec in MetricSpec::ALL {
                if spec == MetricSpec::ChiSquare {
                    continue; // needs non-negative entries, covered below
                }
                let d_ab = distance(&spec, &a, &b).unwrap();
                let d_ba = distance(&spec, &b, &a).unwrap();
                prop_assert!(d_ab >= 0.0);
                prop_assert!((d_ab - d_ba).abs() <= 1e-12 * d_ab.abs().max(1.0));
                let d_aa = distance(&spec, &a, &a).unwrap();
                prop_assert!(d_aa.abs() <= 1e-12);
                if spec == MetricSpec::Correlation {
                    prop_assert!(d_ab <= 2.0 + 1e-12);
                }
            }
        }

        #[test]
        fn norm_metrics_satisfy_triangle(
            (a, b) in vector_pair(),
            shift in -50.0f64..50.0,
        ) {
            let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y) + shift).collect();
            for spec in [MetricSpec::Euclidean, MetricSpec::Manhattan, MetricSpec::Chessboard] {
                let ab = distance(&spec, &a, &b).unwrap();
                let ac = distance(&spec, &a, &c).unwrap();
                let cb = distance(&spec, &c, &b).unwrap();
                prop_assert!(ab <= ac + cb + 1e-9 * (ab + ac + cb).max(1.0));
            }
        }

        #[test]
        fn chi_square_symmetric_on_nonnegative(
            a in proptest::collection::vec(0.0f64..100.0, 4),
            b in proptest::collection::vec(0.0f64..100.0, 4),
        ) {
            let d_ab = distance(&MetricSpec::ChiSquare, &a, &b).unwrap();
            let d_ba = distance(&MetricSpec::ChiSquare, &b, &a).unwrap();
            prop_assert!(d_ab >= 0.0);
            prop_assert!((d_ab - d_ba).abs() <= 1e-12 * d_ab.max(1.0));
            prop_assert!(distance(&MetricSpec::ChiSquare, &a, &a).unwrap().abs() <= 1e-12);
        }
    }
}
