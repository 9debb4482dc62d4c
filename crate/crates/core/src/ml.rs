//! Maximum-likelihood covariance structure estimation.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::admissibility::{Reason, Verdict, PD_TOL};
use crate::error::{Result, SemError};
use crate::hospec;
use crate::linalg;
use crate::model_ir::{ConstructKind, LatentOrigin, MatrixId, ModelSpec, ParamTable};
use crate::optim::{self, BfgsOptions, Objective};

/// `log|Σ| + tr(SΣ⁻¹) − log|S| − p`.
pub fn fml(s: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    let (ld_s, _) = linalg::logdet_inverse(s).ok_or_else(|| SemError::NotPositiveDefinite("S".into()))?;
    let (ld_sigma, inv) = linalg::logdet_inverse(sigma).ok_or_else(|| SemError::NotPositiveDefinite("Sigma".into()))?;
    Ok(ld_sigma + (s * inv).trace() - ld_s - s.nrows() as f64)
}

/// F_ML over the free parameters of a table.
pub struct MlObjective<'a> {
    template: &'a ParamTable,
    s: &'a DMatrix<f64>,
    logdet_s: f64,
}

impl<'a> MlObjective<'a> {
    pub fn new(template: &'a ParamTable, s: &'a DMatrix<f64>) -> Result<Self> {
        if s.nrows() != template.observed().len() || s.ncols() != s.nrows() {
            return Err(SemError::Dimension(format!(
                "S is {:?} for {} observed variables",
                s.shape(),
                template.observed().len()
            )));
        }
        let (logdet_s, _) = linalg::logdet_inverse(s).ok_or_else(|| SemError::NotPositiveDefinite("S".into()))?;
        Ok(MlObjective { template, s, logdet_s })
    }

    fn table(&self, x: &DVector<f64>) -> ParamTable {
        let mut t = self.template.clone();
        t.set_param_values(x.as_slice()).expect("parameter vector length");
        t
    }

    /// Analytic gradient; `None` where Σ(θ) is not positive definite.
    pub fn analytic_gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let t = self.table(x);
        let a = t.total_effects().ok()?;
        let c = &a * t.psi() * a.transpose();
        let l = t.lambda();
        let sigma = l * &c * l.transpose() + t.theta();
        let (_, si) = linalg::logdet_inverse(&sigma)?;
        let m = &si - &si * self.s * &si;
        let g = l * &a;
        let d_lambda = (&m * l * &c) * 2.0;
        let d_psi = g.transpose() * &m * &g;
        let d_beta = (&c * l.transpose() * &m * &g) * 2.0;
        let out = t.cells().iter().map(|cell| match cell.matrix {
            MatrixId::Lambda => d_lambda[(cell.row, cell.col)],
            MatrixId::Beta => d_beta[(cell.col, cell.row)],
            MatrixId::Psi => d_psi[(cell.row, cell.col)] * if cell.row == cell.col { 1.0 } else { 2.0 },
            MatrixId::Theta => m[(cell.row, cell.col)] * if cell.row == cell.col { 1.0 } else { 2.0 },
        });
        Some(DVector::from_iterator(t.n_free(), out))
    }
}

impl Objective for MlObjective<'_> {
    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        let sigma = self.table(x).implied_covariance().ok()?;
        let (ld, inv) = linalg::logdet_inverse(&sigma)?;
        let f = ld + (self.s * inv).trace() - self.logdet_s - self.s.nrows() as f64;
        f.is_finite().then_some(f)
    }

    fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        self.analytic_gradient(x)
    }
}

/// Rows of the indicators attached to a construct column.
fn block_rows(t: &ParamTable, col: usize) -> Vec<usize> {
    (0..t.observed().len())
        .filter(|&r| t.is_free(MatrixId::Lambda, r, col) || t.value(MatrixId::Lambda, r, col) != 0.0)
        .collect()
}

/// Deterministic starting values: loadings 0.7, error variances 0.5,
/// structural paths 0, covariances 0, (disturbance) variances 0.5. Composite
/// blocks start from equal weights on the observed block covariance,
/// formative indicator stand-ins start at their observed covariances, and
/// formative weights start at 1.
pub fn start_values(template: &ParamTable, s: &DMatrix<f64>) -> Result<ParamTable> {
    let mut t = template.clone();
    let m = t.latent().len();
    for cell in template.cells() {
        let v = match cell.matrix {
            MatrixId::Lambda => 0.7,
            MatrixId::Theta | MatrixId::Psi => if cell.row == cell.col { 0.5 } else { 0.0 },
            MatrixId::Beta => match template.origins()[cell.row] {
                LatentOrigin::Construct { kind: ConstructKind::CausalFormative } => 1.0,
                _ => 0.0,
            },
        };
        t.set_value(cell.matrix, cell.row, cell.col, v);
    }
    for l in 0..m {
        match &template.origins()[l] {
            LatentOrigin::FormativeIndicator { .. } => {
                let rl = block_rows(template, l)[0];
                for l2 in 0..=l {
                    if template.is_free(MatrixId::Psi, l, l2) {
                        if let LatentOrigin::FormativeIndicator { .. } = template.origins()[l2] {
                            let r2 = block_rows(template, l2)[0];
                            t.set_value(MatrixId::Psi, l, l2, s[(rl, r2)]);
                        }
                    }
                }
            }
            LatentOrigin::Construct { kind: ConstructKind::Composite } => {
                let rows = block_rows(template, l);
                let k = rows.len();
                if k < 2 {
                    continue;
                }
                let sb = linalg::submatrix(s, &rows, &rows);
                let total = sb.sum();
                if !(total > 0.0) {
                    return Err(SemError::BadStart("composite block with non-positive total covariance".into()));
                }
                let w0 = DVector::from_element(k, 1.0 / total.sqrt());
                let lambda0 = &sb * &w0;
                let scale = if template.is_free(MatrixId::Lambda, rows[0], l) { 1.0 } else { lambda0[0] };
                for (i, &r) in rows.iter().enumerate() {
                    if template.is_free(MatrixId::Lambda, r, l) {
                        t.set_value(MatrixId::Lambda, r, l, lambda0[i] / scale);
                    }
                    for j in 1..k {
                        if template.is_free(MatrixId::Lambda, r, l + j) {
                            t.set_value(MatrixId::Lambda, r, l + j, 1.0);
                        }
                    }
                }
                if template.is_free(MatrixId::Psi, l, l) {
                    t.set_value(MatrixId::Psi, l, l, scale * scale);
                }
                let mut l_nu = DMatrix::zeros(k, k - 1);
                for j in 1..k {
                    for (i, &r) in rows.iter().enumerate() {
                        l_nu[(i, j - 1)] = t.value(MatrixId::Lambda, r, l + j);
                    }
                }
                let resid = &sb - &lambda0 * lambda0.transpose();
                let psi_nu = hospec::excrescent_covariance(&l_nu, &resid)?;
                for a in 1..k {
                    for b in 1..=a {
                        if template.is_free(MatrixId::Psi, l + a, l + b) {
                            t.set_value(MatrixId::Psi, l + a, l + b, psi_nu[(a - 1, b - 1)]);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(t)
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub theta_hat: ParamTable,
    /// Standardized structural coefficients keyed by (source, target).
    pub std_paths: BTreeMap<(String, String), f64>,
    /// Standard errors aligned with `theta_hat.cells()`; NaN when unavailable.
    pub se: Vec<f64>,
    pub f_min: f64,
    pub converged: bool,
    pub iterations: usize,
    pub verdict: Verdict,
}

impl EstimationResult {
    pub fn admissible(&self) -> bool {
        self.verdict.admissible()
    }

    pub fn se_map(&self) -> BTreeMap<String, f64> {
        self.theta_hat
            .cells()
            .iter()
            .zip(&self.se)
            .map(|(c, &v)| (self.theta_hat.label(c), v))
            .collect()
    }
}

pub fn fit_ml(spec: &ModelSpec, s: &DMatrix<f64>, n: usize) -> Result<EstimationResult> {
    let template = ParamTable::from_spec(spec)?;
    let start = start_values(&template, s)?;
    fit_ml_table(&start, s, n)
}

/// Fits starting from the values stored in `start`.
pub fn fit_ml_table(start: &ParamTable, s: &DMatrix<f64>, n: usize) -> Result<EstimationResult> {
    if n < 2 {
        return Err(SemError::InvalidCondition("n must be at least 2".into()));
    }
    let obj = MlObjective::new(start, s)?;
    let x0 = DVector::from_vec(start.param_values());
    if obj.value(&x0).is_none() {
        return Err(SemError::BadStart("implied covariance at the starting point is not positive definite".into()));
    }
    let opts = BfgsOptions::default();
    let mut min = optim::bfgs(&obj, x0, &opts).ok_or_else(|| SemError::BadStart("objective undefined at start".into()))?;
    let hess = if min.converged || min.grad.amax() < 1e-3 {
        optim::newton_polish(&obj, &mut min, 8, &opts)
    } else {
        optim::numerical_hessian(&obj, &min.x, 1e-5)
    };
    let theta_hat = start.with_param_values(min.x.as_slice())?;
    let q = min.x.len();
    let se = match hess.and_then(|h| h.try_inverse()) {
        Some(hi) => (0..q)
            .map(|i| {
                let v = 2.0 / (n as f64 - 1.0) * hi[(i, i)];
                if v >= 0.0 { v.sqrt() } else { f64::NAN }
            })
            .collect(),
        None => vec![f64::NAN; q],
    };
    let std_paths = theta_hat.standardize().unwrap_or_default();
    let mut result = EstimationResult {
        theta_hat,
        std_paths,
        se,
        f_min: min.f,
        converged: min.converged,
        iterations: min.iterations,
        verdict: Verdict::default(),
    };
    result.verdict = check_admissibility(&result);
    Ok(result)
}

/// Convergence, non-negative standard errors, numerically PD construct and
/// error covariances (fixed-zero error blocks exempted) and invertible H–O
/// rotations.
pub fn check_admissibility(result: &EstimationResult) -> Verdict {
    let mut v = Verdict::default();
    let t = &result.theta_hat;
    if !result.converged {
        v.add(Reason::Nonconvergence);
    }
    if result.se.iter().any(|s| !s.is_finite() || *s < 0.0) {
        v.add(Reason::NegativeSe);
    }
    match t.construct_covariance() {
        Ok(c) if linalg::min_eigenvalue(&c) > -PD_TOL => {}
        _ => v.add(Reason::NonPdConstructCov),
    }
    let keep: Vec<usize> = (0..t.observed().len())
        .filter(|&i| t.is_free(MatrixId::Theta, i, i) || t.value(MatrixId::Theta, i, i) != 0.0)
        .collect();
    if !keep.is_empty() {
        let theta = linalg::submatrix(t.theta(), &keep, &keep);
        if !(linalg::min_eigenvalue(&theta) > -PD_TOL) {
            v.add(Reason::NonPdErrorCov);
        }
    }
    for (l, origin) in t.origins().iter().enumerate() {
        if let LatentOrigin::Construct { kind: ConstructKind::Composite } = origin {
            let rows = block_rows(t, l);
            if rows.len() < 2 {
                continue;
            }
            let cols: Vec<usize> = (l..l + rows.len()).collect();
            if hospec::recover_weights(&linalg::submatrix(t.lambda(), &rows, &cols)).is_err() {
                v.add(Reason::SingularRotation);
            }
        }
    }
    v
}

/// Composite weights of a fitted H–O block, normalized to a unit-variance
/// composite under `s`.
pub fn composite_weights_hat(result: &EstimationResult, construct: &str, s: &DMatrix<f64>) -> Result<DVector<f64>> {
    let t = &result.theta_hat;
    let l = t
        .latent_index(construct)
        .ok_or_else(|| SemError::InvalidSpec(format!("unknown construct '{construct}'")))?;
    let rows = block_rows(t, l);
    let cols: Vec<usize> = (l..l + rows.len()).collect();
    let w = hospec::recover_weights(&linalg::submatrix(t.lambda(), &rows, &cols))?;
    let sb = linalg::submatrix(s, &rows, &rows);
    let var = (w.transpose() * sb * &w)[(0, 0)];
    Ok(w / var.sqrt())
}
