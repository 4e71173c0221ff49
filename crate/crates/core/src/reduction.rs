//! Pseudo transformations: the n x c matrices that map the kernelized
//! dictionary into a c-dimensional coding space.
//!
//! Supported constructions: identity (no reduction), kernel PCA, seeded
//! random projection, and graph-Laplacian embeddings. Columns are
//! deterministic across runs; eigenvector signs are fixed so equal inputs
//! give equal outputs.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::metrics::squared_euclidean;

/// Relative eigenvalue floor below which a component does not count toward
/// the usable rank.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// How neighbors are chosen when building the affinity graph.
#[derive(Debug, Clone, PartialEq)]
pub enum NeighborRule {
    /// Connect nodes within this euclidean radius (inclusive).
    Epsilon { radius: f64 },
    /// Connect each node to its k nearest neighbors, then symmetrize with
    /// logical or. `None` means min(10, n - 1).
    Knn { k: Option<usize> },
}

/// How edge weights are assigned.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightRule {
    /// w = exp(-d^2 / t); `None` picks t as the mean nonzero squared
    /// distance over the graph's edges.
    Heat { t: Option<f64> },
    /// w = 1 on every edge.
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphConfig {
    pub neighbor: NeighborRule,
    pub weight: WeightRule,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            neighbor: NeighborRule::Knn { k: None },
            weight: WeightRule::Heat { t: None },
        }
    }
}

/// The pseudo transformation construction to use.
#[derive(Debug, Clone, PartialEq)]
pub enum PsiMethod {
    Identity,
    Kpca { dim: usize },
    Random { dim: usize, seed: u64 },
    Graph { dim: usize, config: GraphConfig },
    /// Fisher-discriminant construction; recognized but not implemented.
    Kfda,
}

impl PsiMethod {
    pub fn name(&self) -> &'static str {
        match self {
            PsiMethod::Identity => "identity",
            PsiMethod::Kpca { .. } => "kpca",
            PsiMethod::Random { .. } => "random",
            PsiMethod::Graph { .. } => "graph",
            PsiMethod::Kfda => "kfda",
        }
    }
}

/// An n x c pseudo transformation together with the method that built it.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoTransform {
    psi: DMatrix<f64>,
    method: PsiMethod,
}

impl PseudoTransform {
    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn method(&self) -> &PsiMethod {
        &self.method
    }

    /// Number of atoms the transform applies to.
    pub fn n(&self) -> usize {
        self.psi.nrows()
    }

    /// Dimension of the reduced coding space.
    pub fn dim(&self) -> usize {
        self.psi.ncols()
    }
}

/// Make each column's first significant entry positive, so eigenvector
/// sign ambiguity cannot leak into results.
fn fix_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let max_abs = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if max_abs == 0.0 {
            continue;
        }
        let lead = col.iter().find(|v| v.abs() > 1e-8 * max_abs);
        if let Some(v) = lead {
            if *v < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Identity transform: coding happens directly in the n-dimensional
/// kernelized space.
pub fn build_psi_identity(n: usize) -> Result<PseudoTransform> {
    if n == 0 {
        return Err(Error::InvalidArgument("identity transform over zero atoms".into()));
    }
    Ok(PseudoTransform {
        psi: DMatrix::identity(n, n),
        method: PsiMethod::Identity,
    })
}

/// Kernel PCA transform: columns are leading Gram eigenvectors scaled by
/// sqrt(n / eigenvalue), which makes psi' G psi = n I.
pub fn build_psi_kpca(gram: &GramMatrix, dim: usize) -> Result<PseudoTransform> {
    let n = gram.n();
    if dim == 0 {
        return Err(Error::InvalidArgument("kpca dimension must be at least 1".into()));
    }
    let eig = SymmetricEigen::new(gram.values().clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let lambda_max = eig.eigenvalues[order[0]];
    let floor = RANK_TOLERANCE * lambda_max.max(0.0);
    let rank = order
        .iter()
        .take_while(|&&i| eig.eigenvalues[i] > floor && eig.eigenvalues[i] > 0.0)
        .count();
    if dim > rank {
        return Err(Error::Rank {
            requested: dim,
            max: rank,
        });
    }

    let mut psi = DMatrix::zeros(n, dim);
    for (c, &i) in order.iter().take(dim).enumerate() {
        let scale = (n as f64 / eig.eigenvalues[i]).sqrt();
        psi.set_column(c, &(eig.eigenvectors.column(i) * scale));
    }
    fix_signs(&mut psi);
    Ok(PseudoTransform {
        psi,
        method: PsiMethod::Kpca { dim },
    })
}

/// Random transform: entries drawn N(0, 1) and scaled by 1/sqrt(dim),
/// reproducible from the seed.
pub fn build_psi_random(n: usize, dim: usize, seed: u64) -> Result<PseudoTransform> {
    if n == 0 || dim == 0 {
        return Err(Error::InvalidArgument(
            "random transform needs at least one atom and one dimension".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal parameters are valid");
    let scale = 1.0 / (dim as f64).sqrt();
    let mut psi = DMatrix::zeros(n, dim);
    for j in 0..dim {
        for i in 0..n {
            psi[(i, j)] = normal.sample(&mut rng) * scale;
        }
    }
    Ok(PseudoTransform {
        psi,
        method: PsiMethod::Random { dim, seed },
    })
}

/// Affinity graph diagnostics: weights, degrees, combinatorial Laplacian,
/// and the full generalized eigensystem L g = lambda Deg g in ascending
/// eigenvalue order (column 0 is the constant-like mode that embeddings
/// discard).
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSystem {
    pub weights: DMatrix<f64>,
    pub degrees: DVector<f64>,
    pub laplacian: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
    pub embeddings: DMatrix<f64>,
}

/// Build the affinity graph over atoms (euclidean neighborhoods) and solve
/// its generalized Laplacian eigenproblem.
pub fn build_graph_system(atoms: &FeatureMatrix, config: &GraphConfig) -> Result<GraphSystem> {
    let n = atoms.cols();
    if n < 2 {
        return Err(Error::Graph(format!(
            "graph embedding needs at least 2 atoms, got {n}"
        )));
    }

    let mut sq = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d2 = squared_euclidean(atoms.column(i), atoms.column(j));
            sq[(i, j)] = d2;
            sq[(j, i)] = d2;
        }
    }

    let mut adjacency = DMatrix::from_element(n, n, false);
    match &config.neighbor {
        NeighborRule::Epsilon { radius } => {
            if !radius.is_finite() || *radius <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "epsilon neighborhood radius must be positive and finite, got {radius}"
                )));
            }
            let r2 = radius * radius;
            for i in 0..n {
                for j in (i + 1)..n {
                    if sq[(i, j)] <= r2 {
                        adjacency[(i, j)] = true;
                        adjacency[(j, i)] = true;
                    }
                }
            }
        }
        NeighborRule::Knn { k } => {
            let k = k.unwrap_or_else(|| 10.min(n - 1));
            if k == 0 || k > n - 1 {
                return Err(Error::InvalidArgument(format!(
                    "knn neighbor count must be in 1..={}, got {k}",
                    n - 1
                )));
            }
            for i in 0..n {
                let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                // Distance ties break toward the smaller index.
                order.sort_by(|&a, &b| sq[(i, a)].total_cmp(&sq[(i, b)]).then(a.cmp(&b)));
                for &j in order.iter().take(k) {
                    adjacency[(i, j)] = true;
                    adjacency[(j, i)] = true;
                }
            }
        }
    }

    let t = match &config.weight {
        WeightRule::Heat { t: Some(t) } => {
            if !t.is_finite() || *t <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "heat kernel width must be positive and finite, got {t}"
                )));
            }
            Some(*t)
        }
        WeightRule::Heat { t: None } => {
            let mut sum = 0.0;
            let mut count = 0usize;
            for i in 0..n {
                for j in (i + 1)..n {
                    if adjacency[(i, j)] && sq[(i, j)] > 0.0 {
                        sum += sq[(i, j)];
                        count += 1;
                    }
                }
            }
            // All-coincident neighborhoods leave no usable scale; any
            // positive width then gives the same (unit) weights.
            Some(if count == 0 { 1.0 } else { sum / count as f64 })
        }
        WeightRule::Binary => None,
    };

    let mut weights = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if adjacency[(i, j)] {
                let w = match t {
                    Some(t) => (-sq[(i, j)] / t).exp(),
                    None => 1.0,
                };
                weights[(i, j)] = w;
                weights[(j, i)] = w;
            }
        }
    }

    let degrees = DVector::from_iterator(n, weights.row_iter().map(|r| r.sum()));
    if let Some(i) = degrees.iter().position(|d| *d <= f64::MIN_POSITIVE) {
        return Err(Error::Graph(format!(
            "node {i} is isolated (zero degree); widen the neighborhood rule"
        )));
    }
    let laplacian = DMatrix::from_diagonal(&degrees) - &weights;

    // Solve L g = lambda Deg g through the symmetric form
    // Deg^-1/2 L Deg^-1/2 u = lambda u with g = Deg^-1/2 u.
    let inv_sqrt = degrees.map(|d| 1.0 / d.sqrt());
    let mut l_sym = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            l_sym[(i, j)] = laplacian[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let eig = SymmetricEigen::new(l_sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut embeddings = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        let g = eig.eigenvectors.column(i).component_mul(&inv_sqrt);
        embeddings.set_column(c, &g);
    }
    fix_signs(&mut embeddings);

    Ok(GraphSystem {
        weights,
        degrees,
        laplacian,
        eigenvalues,
        embeddings,
    })
}

/// Graph transform: the dim smoothest non-constant generalized Laplacian
/// eigenvectors, each normalized so g' Deg g = 1.
pub fn build_psi_graph(
    atoms: &FeatureMatrix,
    dim: usize,
    config: &GraphConfig,
) -> Result<PseudoTransform> {
    let n = atoms.cols();
    if dim == 0 {
        return Err(Error::InvalidArgument("graph dimension must be at least 1".into()));
    }
    if n < 2 || dim > n - 1 {
        return Err(Error::Rank {
            requested: dim,
            max: n.saturating_sub(1),
        });
    }
    let system = build_graph_system(atoms, config)?;
    let psi = system.embeddings.columns(1, dim).into_owned();
    Ok(PseudoTransform {
        psi,
        method: PsiMethod::Graph {
            dim,
            config: config.clone(),
        },
    })
}

/// Dispatch on the method. `atoms` are required only by the graph
/// construction; the Gram matrix fixes the atom count for the rest.
pub fn build_psi(
    method: &PsiMethod,
    gram: &GramMatrix,
    atoms: &FeatureMatrix,
) -> Result<PseudoTransform> {
    if atoms.cols() != gram.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} atoms but a {} x {} gram matrix",
            atoms.cols(),
            gram.n(),
            gram.n()
        )));
    }
    match method {
        PsiMethod::Identity => build_psi_identity(gram.n()),
        PsiMethod::Kpca { dim } => build_psi_kpca(gram, *dim),
        PsiMethod::Random { dim, seed } => build_psi_random(gram.n(), *dim, *seed),
        PsiMethod::Graph { dim, config } => build_psi_graph(atoms, *dim, config),
        PsiMethod::Kfda => Err(Error::Unsupported(
            "the Fisher-discriminant transform is not implemented; \
             use identity, kpca, random, or graph"
                .into(),
        )),
    }
}
