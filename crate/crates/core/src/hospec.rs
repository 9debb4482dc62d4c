//! Henseler–Ogasawara reparameterization of composite blocks.
//!
//! A composite of `K` indicators is represented by the composite itself plus
//! `K - 1` excrescent variables `nu_1..nu_{K-1}`, so that the indicators are an
//! invertible rotation of `(eta, nu)`. The excrescent variables use a
//! bidiagonal loading pattern: `nu_j` loads on `x_j` (free) and on `x_{j+1}`
//! (fixed to -1). They covary freely among themselves and never with the
//! composite; the indicators carry no measurement error.
//!
//! Parameter accounting for one block:
//! - composite loadings: `K` (one of them or the composite variance fixes scale),
//! - excrescent covariances: `K (K - 1) / 2`,
//! - free excrescent anchors: `K - 1`.
//!
//! The first two groups reproduce the block covariance (`K (K + 1) / 2`
//! moments) and the anchors carry the `K - 1` weight-direction parameters that
//! the cross-block covariances identify.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SemError};
use crate::linalg;

/// Fixed value of the excrescent anchor loading on `x_{j+1}`.
pub const EXCRESCENT_ANCHOR: f64 = -1.0;

/// Loading/covariance pattern of one composite block. Column 0 is the
/// composite, columns `1..K` are the excrescent variables.
#[derive(Debug, Clone, PartialEq)]
pub struct HospecBlock {
    k: usize,
    /// Fixed values (free cells hold 0).
    pub lambda: DMatrix<f64>,
    pub lambda_free: DMatrix<bool>,
    pub psi: DMatrix<f64>,
    pub psi_free: DMatrix<bool>,
    pub theta: DMatrix<f64>,
}

impl HospecBlock {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_excrescent(&self) -> usize {
        self.k.saturating_sub(1)
    }

    /// Free composite loadings plus free excrescent covariances (with the
    /// composite variance fixed to 1).
    pub fn covariance_param_count(&self) -> usize {
        let lambda_eta = (0..self.k).filter(|&i| self.lambda_free[(i, 0)]).count();
        lambda_eta + self.psi_free_count()
    }

    /// Free excrescent loadings, i.e. the weight-direction parameters.
    pub fn weight_param_count(&self) -> usize {
        (0..self.k)
            .flat_map(|i| (1..self.k).map(move |j| (i, j)))
            .filter(|&(i, j)| self.lambda_free[(i, j)])
            .count()
    }

    pub fn free_count(&self) -> usize {
        self.lambda_free.iter().filter(|f| **f).count() + self.psi_free_count()
    }

    fn psi_free_count(&self) -> usize {
        let mut n = 0;
        for i in 0..self.k {
            for j in 0..=i {
                if self.psi_free[(i, j)] {
                    n += 1;
                }
            }
        }
        n
    }

    /// Structural audit of the pattern: the covariance parameters must number
    /// `K (K + 1) / 2`, the weight parameters `K - 1`, and at unit anchors the
    /// rotation `[lambda | L_nu]` must be invertible with the equal-weight
    /// direction orthogonal to the excrescent loadings.
    pub fn audit(&self) -> Result<()> {
        let k = self.k;
        if self.covariance_param_count() != k * (k + 1) / 2 {
            return Err(SemError::InvalidSpec(format!(
                "H-O block K={k}: {} covariance parameters, expected {}",
                self.covariance_param_count(),
                k * (k + 1) / 2
            )));
        }
        if self.weight_param_count() != k.saturating_sub(1) {
            return Err(SemError::InvalidSpec(format!(
                "H-O block K={k}: {} weight parameters, expected {}",
                self.weight_param_count(),
                k.saturating_sub(1)
            )));
        }
        if self.theta.iter().any(|v| *v != 0.0) {
            return Err(SemError::InvalidSpec("H-O block must have zero error variances".into()));
        }
        if k >= 2 {
            let rot = self.rotation_at(&DVector::from_element(k, 1.0), &DVector::from_element(k - 1, 1.0));
            if linalg::condition_number(&rot) > 1e12 {
                return Err(SemError::InvalidSpec("H-O rotation not invertible".into()));
            }
            let w = recover_weights(&rot)?;
            let spread = w.max() - w.min();
            if spread.abs() > 1e-12 {
                return Err(SemError::InvalidSpec("H-O unit anchors do not give equal weights".into()));
            }
        }
        Ok(())
    }

    /// Full K×K loading matrix for given composite loadings and free anchors.
    pub fn rotation_at(&self, eta_loadings: &DVector<f64>, anchors: &DVector<f64>) -> DMatrix<f64> {
        let mut l = self.lambda.clone();
        let mut a = anchors.iter();
        for i in 0..self.k {
            l[(i, 0)] = eta_loadings[i];
        }
        for j in 1..self.k {
            for i in 0..self.k {
                if self.lambda_free[(i, j)] {
                    l[(i, j)] = *a.next().expect("anchor count");
                }
            }
        }
        l
    }
}

/// Builds the refined H–O pattern for a composite of `k` indicators.
pub fn build_hospec(k: usize) -> Result<HospecBlock> {
    if k == 0 {
        return Err(SemError::InvalidSpec("composite needs at least one indicator".into()));
    }
    let mut lambda = DMatrix::zeros(k, k);
    let mut lambda_free = DMatrix::from_element(k, k, false);
    let mut psi = DMatrix::zeros(k, k);
    let mut psi_free = DMatrix::from_element(k, k, false);
    if k == 1 {
        lambda[(0, 0)] = 1.0;
    } else {
        for i in 0..k {
            lambda_free[(i, 0)] = true;
        }
        for j in 1..k {
            // nu_j sits in column j and loads on x_j (row j-1) and x_{j+1} (row j)
            lambda_free[(j - 1, j)] = true;
            lambda[(j, j)] = EXCRESCENT_ANCHOR;
        }
        psi[(0, 0)] = 1.0;
        for i in 1..k {
            for j in 1..k {
                psi_free[(i, j)] = true;
            }
        }
    }
    let block = HospecBlock {
        k,
        lambda,
        lambda_free,
        psi,
        psi_free,
        theta: DMatrix::zeros(k, k),
    };
    if k >= 2 {
        block.audit()?;
    }
    Ok(block)
}

/// Composite weights from a fitted K×K composite-loading matrix: the row of
/// its inverse belonging to the composite (column 0).
pub fn recover_weights(lambda_hat: &DMatrix<f64>) -> Result<DVector<f64>> {
    if lambda_hat.nrows() != lambda_hat.ncols() || lambda_hat.nrows() == 0 {
        return Err(SemError::Dimension("loading block must be square".into()));
    }
    if !lambda_hat.iter().all(|v| v.is_finite()) {
        return Err(SemError::NonFinite("loading block".into()));
    }
    if linalg::condition_number(lambda_hat) >= 1e12 {
        return Err(SemError::Singular("composite rotation".into()));
    }
    let inv = lambda_hat
        .clone()
        .try_inverse()
        .ok_or_else(|| SemError::Singular("composite rotation".into()))?;
    Ok(inv.row(0).transpose())
}

/// Excrescent covariance that reproduces `residual = S - lambda lambdaᵀ`
/// exactly when the residual lies in the span of the excrescent loadings:
/// `L⁺ residual L⁺ᵀ` with `L⁺` the left pseudo-inverse.
pub fn excrescent_covariance(l_nu: &DMatrix<f64>, residual: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let ltl = l_nu.transpose() * l_nu;
    let inv = ltl
        .try_inverse()
        .ok_or_else(|| SemError::Singular("excrescent loadings".into()))?;
    let pinv = inv * l_nu.transpose();
    let mut out = &pinv * residual * pinv.transpose();
    linalg::symmetrize(&mut out);
    Ok(out)
}
