//! Coding solvers: regularized least squares with a materialized projection,
//! and a robust variant that splits off sparse corruption with an augmented
//! Lagrangian iteration.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// The materialized regularized least-squares projection
/// P = (D'D + mu I)^-1 D', applied to queries as x = P y.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsProjection {
    p: DMatrix<f64>,
    mu: f64,
}

impl RlsProjection {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Number of atoms (rows of P, coefficients per query).
    pub fn atoms(&self) -> usize {
        self.p.nrows()
    }

    /// Dimension of the space queries live in (columns of P).
    pub fn space_dim(&self) -> usize {
        self.p.ncols()
    }

    /// Apply the projection: x = P y.
    pub fn solve(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.space_dim() {
            return Err(Error::DimensionMismatch(format!(
                "query of length {} against a projection for dimension {}",
                y.len(),
                self.space_dim()
            )));
        }
        Ok(&self.p * y)
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if !mu.is_finite() || mu <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "ridge parameter must be positive and finite, got {mu}"
        )));
    }
    Ok(())
}

/// Cholesky factor of D'D + mu I; the shared solve path for both the
/// materialized projection and per-query single right-hand-side solves, so
/// the two agree to rounding.
pub(crate) fn ridge_factor(d: &DMatrix<f64>, mu: f64) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    check_mu(mu)?;
    let n = d.ncols();
    if n == 0 || d.nrows() == 0 {
        return Err(Error::InvalidArgument("empty coding matrix".into()));
    }
    let a = d.tr_mul(d) + DMatrix::identity(n, n) * mu;
    Cholesky::new(a).ok_or_else(|| {
        Error::Numerical("ridge normal matrix is not positive definite (non-finite input?)".into())
    })
}

/// Materialize P = (D'D + mu I)^-1 D'.
pub fn rls_projection(d: &DMatrix<f64>, mu: f64) -> Result<RlsProjection> {
    let chol = ridge_factor(d, mu)?;
    let p = chol.solve(&d.transpose());
    Ok(RlsProjection { p, mu })
}

/// One-shot regularized least squares without keeping the projection.
pub fn rls_solve(d: &DMatrix<f64>, y: &DVector<f64>, mu: f64) -> Result<DVector<f64>> {
    if y.len() != d.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "query of length {} against a {} x {} coding matrix",
            y.len(),
            d.nrows(),
            d.ncols()
        )));
    }
    let chol = ridge_factor(d, mu)?;
    Ok(chol.solve(&(d.tr_mul(y))))
}

/// Soft threshold: the proximal operator of alpha |.|_1, applied entrywise.
pub fn shrink(alpha: f64, h: &DVector<f64>) -> DVector<f64> {
    h.map(|v| v.signum() * (v.abs() - alpha).max(0.0))
}

/// Augmented Lagrangian settings for the robust solver.
#[derive(Debug, Clone, PartialEq)]
pub struct AlmConfig {
    /// Ridge weight on the coding coefficients.
    pub mu: f64,
    /// Initial penalty strength.
    pub sigma0: f64,
    /// Penalty growth factor per iteration; must exceed 1.
    pub rho: f64,
    /// Convergence threshold on |y - D x - e|_2.
    pub tau: f64,
    pub max_iter: usize,
}

impl Default for AlmConfig {
    fn default() -> Self {
        Self {
            mu: 1e-3,
            sigma0: 1.0,
            rho: 1.2,
            tau: 1e-6,
            max_iter: 500,
        }
    }
}

impl AlmConfig {
    fn validate(&self) -> Result<()> {
        check_mu(self.mu)?;
        if !self.sigma0.is_finite() || self.sigma0 <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "initial penalty must be positive and finite, got {}",
                self.sigma0
            )));
        }
        if !self.rho.is_finite() || self.rho <= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "penalty growth factor must exceed 1, got {}",
                self.rho
            )));
        }
        if !self.tau.is_finite() || self.tau <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "convergence threshold must be positive and finite, got {}",
                self.tau
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument(
                "iteration budget must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of the augmented Lagrangian iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct AlmResult {
    /// Coding coefficients.
    pub x: DVector<f64>,
    /// Recovered sparse corruption.
    pub e: DVector<f64>,
    /// Completed iterations.
    pub iterations: usize,
    /// Whether the gap dropped below tau within the budget.
    pub converged: bool,
    /// |y - D x - e|_2 after the last iteration.
    pub final_gap: f64,
}

/// Solve min_x,e  mu |x|^2 + |e|_1  s.t.  y = D x + e  by an augmented
/// Lagrangian with increasing penalty. Each iteration ridge-solves for x
/// with the current corruption estimate removed, soft-thresholds the
/// residual into e, then updates the multiplier.
pub fn alm_solve(d: &DMatrix<f64>, y: &DVector<f64>, config: &AlmConfig) -> Result<AlmResult> {
    config.validate()?;
    let (m, n) = (d.nrows(), d.ncols());
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("empty coding matrix".into()));
    }
    if y.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "query of length {} against a {m} x {n} coding matrix",
            y.len()
        )));
    }

    let dt = d.transpose();
    let dt_d = &dt * d;
    let eye = DMatrix::identity(n, n);

    let mut x = DVector::zeros(n);
    let mut e = DVector::zeros(m);
    let mut z = DVector::zeros(m);
    let mut sigma = config.sigma0;
    let mut converged = false;
    let mut iterations = 0;
    let mut final_gap = f64::INFINITY;

    for k in 0..config.max_iter {
        let a = &dt_d + &eye * (2.0 * config.mu / sigma);
        let rhs = &dt * (y - &e + &z / sigma);
        x = match Cholesky::new(a.clone()) {
            Some(chol) => chol.solve(&rhs),
            // As sigma grows the ridge term vanishes and D'D alone can be
            // singular; fall back to a pseudo-inverse solve.
            None => a
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .map_err(|msg| Error::Numerical(format!("ridge subproblem solve failed: {msg}")))?,
        };
        let dx = d * &x;
        e = shrink(1.0 / sigma, &(y - &dx + &z / sigma));
        let slack = y - &dx - &e;
        z += sigma * &slack;

        iterations = k + 1;
        final_gap = slack.norm();
        if !final_gap.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: iterations,
                message: "iterates became non-finite".into(),
            });
        }
        if final_gap <= config.tau {
            converged = true;
            break;
        }
        sigma *= config.rho;
    }

    Ok(AlmResult {
        x,
        e,
        iterations,
        converged,
        final_gap,
    })
}
