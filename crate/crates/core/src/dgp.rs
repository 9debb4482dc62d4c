//! Population models of the simulation design, their analytic covariance
//! matrices, sampling, and moment normalization.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SemError};
use crate::linalg;
use crate::model_ir::{ConstructKind, LatentOrigin, MatrixId, ParamTable};
use crate::study::{self, Position, FOCAL, OUTER, OUTER_INDICATORS};

/// Standardized focal paths shared by every population.
pub const STD_PATHS: [f64; 3] = [0.4, 0.3, 0.2];
pub const OUTER_LOADING: f64 = 0.8;
pub const OUTER_ERROR_VAR: f64 = 0.36;
/// Disturbance variance of the causal-formative focal construct.
pub const FORMATIVE_DISTURBANCE: f64 = 0.25;

pub const SAMPLE_SIZES: [usize; 3] = [100, 300, 500];
pub const INDICATOR_COUNTS: [usize; 3] = [3, 5, 7];
pub const BASE_CORRELATIONS: [f64; 3] = [0.1, 0.3, 0.5];

/// One cell of the design grid, without the data-generating kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub position: Position,
    pub n: usize,
    pub k: usize,
    pub sigma: f64,
    pub homogeneous: bool,
}

impl GridCell {
    /// The full design: position × n × K × σ × homogeneity, 108 cells.
    pub fn grid() -> Vec<GridCell> {
        let mut out = Vec::with_capacity(108);
        for position in Position::ALL {
            for n in SAMPLE_SIZES {
                for k in INDICATOR_COUNTS {
                    for sigma in BASE_CORRELATIONS {
                        for homogeneous in [true, false] {
                            out.push(GridCell { position, n, k, sigma, homogeneous });
                        }
                    }
                }
            }
        }
        out
    }

    /// 1-based index in [`GridCell::grid`], or 0 for off-grid cells.
    pub fn id(&self) -> usize {
        GridCell::grid().iter().position(|c| c == self).map(|i| i + 1).unwrap_or(0)
    }

    pub fn with_kind(self, dgp_kind: ConstructKind) -> DesignCondition {
        DesignCondition { cell: self, dgp_kind, phi_correlation: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignCondition {
    pub cell: GridCell,
    pub dgp_kind: ConstructKind,
    /// Common correlation among the exogenous outer constructs (endogenous
    /// position only). The default design uses 0.
    #[serde(default)]
    pub phi_correlation: f64,
}

impl DesignCondition {
    pub fn validate(&self) -> Result<()> {
        let c = &self.cell;
        if c.position == Position::Endogenous && self.dgp_kind == ConstructKind::CausalFormative {
            return Err(SemError::Excluded("causal-formative DGP in the endogenous position".into()));
        }
        if c.k == 0 {
            return Err(SemError::InvalidCondition("K must be positive".into()));
        }
        if !(c.sigma > 0.0 && c.sigma < 1.0) {
            return Err(SemError::InvalidCondition(format!("sigma {} outside (0, 1)", c.sigma)));
        }
        if !(self.phi_correlation > -0.5 && self.phi_correlation < 1.0) {
            return Err(SemError::InvalidCondition("phi correlation must lie in (-0.5, 1)".into()));
        }
        Ok(())
    }
}

/// K×K indicator correlation matrix of the focal block.
///
/// Heterogeneous off-diagonals run equidistantly from σ−0.1 to σ+0.1 over the
/// pairs (1,2), (1,3), …, (K−1,K).
pub fn indicator_correlations(k: usize, sigma: f64, homogeneous: bool) -> Result<DMatrix<f64>> {
    if k == 0 {
        return Err(SemError::InvalidCondition("K must be positive".into()));
    }
    let pairs = k * (k - 1) / 2;
    if !homogeneous && pairs < 2 {
        return Err(SemError::InvalidCondition(format!(
            "heterogeneous correlations need at least two indicator pairs (K = {k})"
        )));
    }
    if !homogeneous && !(sigma - 0.1 > -1.0 && sigma + 0.1 < 1.0) {
        return Err(SemError::InvalidCondition(format!("sigma {sigma} leaves the correlation range")));
    }
    let mut r = DMatrix::identity(k, k);
    let mut idx = 0;
    for i in 0..k {
        for j in (i + 1)..k {
            let v = if homogeneous {
                sigma
            } else {
                sigma - 0.1 + 0.2 * idx as f64 / (pairs - 1) as f64
            };
            r[(i, j)] = v;
            r[(j, i)] = v;
            idx += 1;
        }
    }
    if !linalg::is_positive_definite(&r, 0.0) {
        return Err(SemError::NotPositiveDefinite(format!("indicator correlations K={k}, sigma={sigma}")));
    }
    Ok(r)
}

/// Equal weights giving the composite unit variance.
pub fn composite_weights(sxx: &DMatrix<f64>) -> Result<DVector<f64>> {
    let k = sxx.nrows();
    let total = sxx.sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(SemError::NotPositiveDefinite("1'S1 is not positive".into()));
    }
    Ok(DVector::from_element(k, 1.0 / total.sqrt()))
}

/// Covariances between the focal indicators and the focal construct.
pub fn eta_star_loadings(sxx: &DMatrix<f64>, w: &DVector<f64>) -> DVector<f64> {
    sxx * w
}

/// Full population of one design condition.
#[derive(Debug, Clone)]
pub struct PopulationModel {
    pub condition: DesignCondition,
    pub indicator_names: Vec<String>,
    pub sigma0: DMatrix<f64>,
    /// True parameters in the scaling of the correctly specified study model.
    pub theta0: ParamTable,
    pub std_paths0: [f64; 3],
    pub recipe: Recipe,
}

/// Generative description used by [`draw_sample`].
#[derive(Debug, Clone)]
pub struct Recipe {
    pub sxx: DMatrix<f64>,
    pub weights: DVector<f64>,
    pub lambda_star: DVector<f64>,
    /// Raw structural coefficients between the focal construct and the outer constructs.
    pub paths: [f64; 3],
    /// Variance of the focal construct.
    pub var_star: f64,
    /// Disturbance variances of the endogenous constructs.
    pub disturbances: Vec<f64>,
    /// Covariance of the exogenous outer constructs (endogenous position).
    pub phi: DMatrix<f64>,
    /// Factor with `U Uᵀ = Sxx − λλᵀ` and `wᵀU = 0` (composite kind).
    pub residual_factor: DMatrix<f64>,
}

/// Covariance matrix of (η*, η1, η2, η3) in the standardized metric.
fn construct_covariance(recipe: &Recipe, position: Position) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(4, 4);
    let b = recipe.paths;
    match position {
        Position::Exogenous => {
            c[(0, 0)] = recipe.var_star;
            for j in 0..3 {
                c[(0, j + 1)] = b[j] * recipe.var_star;
                c[(j + 1, 0)] = c[(0, j + 1)];
                for l in 0..3 {
                    c[(j + 1, l + 1)] = b[j] * b[l] * recipe.var_star;
                }
                c[(j + 1, j + 1)] += recipe.disturbances[j];
            }
        }
        Position::Endogenous => {
            let bv = DVector::from_row_slice(&b);
            let phi_b = &recipe.phi * &bv;
            c[(0, 0)] = recipe.var_star;
            for j in 0..3 {
                c[(0, j + 1)] = phi_b[j];
                c[(j + 1, 0)] = phi_b[j];
                for l in 0..3 {
                    c[(j + 1, l + 1)] = recipe.phi[(j, l)];
                }
            }
        }
    }
    c
}

pub fn build_population(condition: &DesignCondition) -> Result<PopulationModel> {
    condition.validate()?;
    let cell = condition.cell;
    let k = cell.k;
    let sxx = if k == 1 { DMatrix::identity(1, 1) } else { indicator_correlations(k, cell.sigma, cell.homogeneous)? };
    let w = composite_weights(&sxx)?;
    let lambda = eta_star_loadings(&sxx, &w);
    let c = STD_PATHS;

    let (paths, var_star, disturbances, phi) = match cell.position {
        Position::Exogenous => {
            let var_star = if condition.dgp_kind == ConstructKind::CausalFormative {
                1.0 + FORMATIVE_DISTURBANCE
            } else {
                1.0
            };
            let b = c.map(|cj| cj / var_star.sqrt());
            (b, var_star, c.iter().map(|cj| 1.0 - cj * cj).collect::<Vec<_>>(), DMatrix::identity(3, 3))
        }
        Position::Endogenous => {
            let rho = condition.phi_correlation;
            let phi = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { rho });
            let cv = DVector::from_row_slice(&c);
            let explained = (cv.transpose() * &phi * &cv)[(0, 0)];
            let psi_star = 1.0 - explained;
            if psi_star <= 0.0 {
                return Err(SemError::InvalidCondition("focal disturbance variance is not positive".into()));
            }
            (c, 1.0, vec![psi_star], phi)
        }
    };

    let residual_factor = if k >= 2 {
        let r = &sxx - &lambda * lambda.transpose();
        let u = linalg::psd_factor(&r, 1e-12);
        let proj = DMatrix::identity(k, k) - &lambda * w.transpose();
        proj * u
    } else {
        DMatrix::zeros(1, 0)
    };
    let recipe = Recipe {
        sxx: sxx.clone(),
        weights: w,
        lambda_star: lambda.clone(),
        paths,
        var_star,
        disturbances,
        phi,
        residual_factor,
    };

    let cc = construct_covariance(&recipe, cell.position);
    let names = study::indicator_names(k);
    let p = names.len();
    let mut sigma0 = DMatrix::zeros(p, p);
    let focal_block = match condition.dgp_kind {
        ConstructKind::Composite | ConstructKind::CausalFormative => sxx.clone(),
        ConstructKind::LatentVariable => {
            let mut m = &lambda * lambda.transpose();
            for i in 0..k {
                m[(i, i)] = 1.0;
            }
            m
        }
    };
    sigma0.view_mut((0, 0), (k, k)).copy_from(&focal_block);
    for j in 0..3 {
        let off = k + j * OUTER_INDICATORS;
        for i in 0..k {
            let v = lambda[i] * cc[(0, j + 1)] / cc[(0, 0)] * OUTER_LOADING;
            for l in 0..OUTER_INDICATORS {
                sigma0[(i, off + l)] = v;
                sigma0[(off + l, i)] = v;
            }
        }
        for jj in 0..3 {
            let off2 = k + jj * OUTER_INDICATORS;
            for a in 0..OUTER_INDICATORS {
                for b in 0..OUTER_INDICATORS {
                    sigma0[(off + a, off2 + b)] = OUTER_LOADING * OUTER_LOADING * cc[(j + 1, jj + 1)];
                }
            }
        }
        for a in 0..OUTER_INDICATORS {
            sigma0[(off + a, off + a)] += OUTER_ERROR_VAR;
        }
    }
    let min_eig = linalg::min_eigenvalue(&sigma0);
    if !(min_eig > 1e-10) {
        return Err(SemError::NotPositiveDefinite(format!(
            "population covariance of {:?} (min eigenvalue {min_eig:e})",
            condition
        )));
    }
    let theta0 = true_parameters(condition, &recipe, &cc)?;
    Ok(PopulationModel {
        condition: *condition,
        indicator_names: names,
        sigma0,
        theta0,
        std_paths0: STD_PATHS,
        recipe,
    })
}

/// True parameter table of the correctly specified study model. Constructs
/// are rescaled from the standardized metric to the model's scaling rules.
fn true_parameters(condition: &DesignCondition, recipe: &Recipe, cc: &DMatrix<f64>) -> Result<ParamTable> {
    let cell = condition.cell;
    let k = cell.k;
    let spec = study::study_spec(cell.position, condition.dgp_kind, k)?;
    let mut t = ParamTable::from_spec(&spec)?;
    let star = t.latent_index(FOCAL).expect("focal construct");
    let outer: Vec<usize> = OUTER.iter().map(|n| t.latent_index(n).expect("outer construct")).collect();
    let lambda = &recipe.lambda_star;
    let w = &recipe.weights;

    // scale factors s: η_model = s · η_standardized
    let s_outer = OUTER_LOADING;
    let s_star = match (condition.dgp_kind, cell.position) {
        (ConstructKind::LatentVariable, _) => lambda[0],
        (ConstructKind::Composite, Position::Endogenous) if k >= 2 => lambda[0],
        (ConstructKind::Composite, _) => 1.0,
        (ConstructKind::CausalFormative, _) => 1.0 / w[0],
    };

    for (j, &l) in outer.iter().enumerate() {
        for i in 0..OUTER_INDICATORS {
            let r = t.observed_index(&study::outer_indicator(j, i)).unwrap();
            t.set_value(MatrixId::Lambda, r, l, OUTER_LOADING / s_outer);
            t.set_value(MatrixId::Theta, r, r, OUTER_ERROR_VAR);
        }
    }
    let focal_rows: Vec<usize> = (0..k).map(|i| t.observed_index(&study::focal_indicator(i)).unwrap()).collect();
    match condition.dgp_kind {
        ConstructKind::LatentVariable => {
            for i in 0..k {
                t.set_value(MatrixId::Lambda, focal_rows[i], star, lambda[i] / s_star);
                t.set_value(MatrixId::Theta, focal_rows[i], focal_rows[i], 1.0 - lambda[i] * lambda[i]);
            }
        }
        ConstructKind::Composite => {
            for i in 0..k {
                t.set_value(MatrixId::Lambda, focal_rows[i], star, lambda[i] / s_star);
            }
            if k >= 2 {
                // excrescent anchors a_j = w_j / w_{j-1} make wᵀ L_ν = 0
                let nus: Vec<usize> = (1..k).map(|j| star + j).collect();
                for (jm1, &nu) in nus.iter().enumerate() {
                    debug_assert!(matches!(t.origins()[nu], LatentOrigin::Excrescent { .. }));
                    t.set_value(MatrixId::Lambda, focal_rows[jm1], nu, w[jm1 + 1] / w[jm1]);
                }
                let mut l_nu = DMatrix::zeros(k, k - 1);
                for j in 0..k - 1 {
                    l_nu[(j, j)] = w[j + 1] / w[j];
                    l_nu[(j + 1, j)] = crate::hospec::EXCRESCENT_ANCHOR;
                }
                let resid = &recipe.sxx - lambda * lambda.transpose();
                let psi_nu = crate::hospec::excrescent_covariance(&l_nu, &resid)?;
                for a in 0..k - 1 {
                    for b in 0..=a {
                        t.set_value(MatrixId::Psi, nus[a], nus[b], psi_nu[(a, b)]);
                    }
                }
            }
        }
        ConstructKind::CausalFormative => {
            for (i, _) in focal_rows.iter().enumerate() {
                let xi = t.latent_index(&crate::model_ir::formative_latent_name(&study::focal_indicator(i))).unwrap();
                t.set_value(MatrixId::Beta, star, xi, w[i] * s_star);
                for i2 in 0..=i {
                    let xi2 = t.latent_index(&crate::model_ir::formative_latent_name(&study::focal_indicator(i2))).unwrap();
                    t.set_value(MatrixId::Psi, xi, xi2, recipe.sxx[(i, i2)]);
                }
            }
            t.set_value(MatrixId::Psi, star, star, FORMATIVE_DISTURBANCE * s_star * s_star);
        }
    }

    match cell.position {
        Position::Exogenous => {
            if condition.dgp_kind != ConstructKind::CausalFormative {
                t.set_value(MatrixId::Psi, star, star, cc[(0, 0)] * s_star * s_star);
            }
            for (j, &l) in outer.iter().enumerate() {
                t.set_value(MatrixId::Beta, l, star, recipe.paths[j] * s_outer / s_star);
                t.set_value(MatrixId::Psi, l, l, recipe.disturbances[j] * s_outer * s_outer);
            }
        }
        Position::Endogenous => {
            t.set_value(MatrixId::Psi, star, star, recipe.disturbances[0] * s_star * s_star);
            for (j, &l) in outer.iter().enumerate() {
                t.set_value(MatrixId::Beta, star, l, recipe.paths[j] * s_star / s_outer);
                for (j2, &l2) in outer.iter().enumerate() {
                    t.set_value(MatrixId::Psi, l, l2, recipe.phi[(j, j2)] * s_outer * s_outer);
                }
            }
        }
    }
    Ok(t)
}

/// Draws `n` rows following the structural recipe (constructs first, then
/// indicators). Deterministic in `seed`.
pub fn draw_sample(pop: &PopulationModel, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    Ok(draw_sample_with_focal(pop, n, seed)?.0)
}

/// Like [`draw_sample`], also returning the focal construct's scores.
pub fn draw_sample_with_focal(pop: &PopulationModel, n: usize, seed: u64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let p = pop.indicator_names.len();
    if n < p + 1 {
        return Err(SemError::InvalidCondition(format!("n = {n} must exceed p = {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = move || -> f64 { StandardNormal.sample(&mut rng) };
    let r = &pop.recipe;
    let k = pop.condition.cell.k;
    let chol_sxx = r
        .sxx
        .clone()
        .cholesky()
        .ok_or_else(|| SemError::NotPositiveDefinite("focal indicator correlations".into()))?
        .l();
    let chol_phi = r
        .phi
        .clone()
        .cholesky()
        .ok_or_else(|| SemError::NotPositiveDefinite("outer construct covariance".into()))?
        .l();
    let err_sd = OUTER_ERROR_VAR.sqrt();
    let mut data = DMatrix::zeros(n, p);
    let mut focal = DVector::zeros(n);
    let mut xs = DVector::zeros(k);
    for row in 0..n {
        let mut eta = [0.0f64; 3];
        let eta_star;
        match pop.condition.cell.position {
            Position::Exogenous => {
                eta_star = focal_from_kind(pop, &chol_sxx, &mut xs, None, &mut z);
                for j in 0..3 {
                    eta[j] = r.paths[j] * eta_star + r.disturbances[j].sqrt() * z();
                }
            }
            Position::Endogenous => {
                let u = DVector::from_fn(3, |_, _| z());
                let e = &chol_phi * u;
                eta = [e[0], e[1], e[2]];
                let given = (0..3).map(|j| r.paths[j] * eta[j]).sum::<f64>() + r.disturbances[0].sqrt() * z();
                eta_star = focal_from_kind(pop, &chol_sxx, &mut xs, Some(given), &mut z);
            }
        }
        focal[row] = eta_star;
        for i in 0..k {
            data[(row, i)] = xs[i];
        }
        for j in 0..3 {
            for l in 0..OUTER_INDICATORS {
                data[(row, k + j * OUTER_INDICATORS + l)] = OUTER_LOADING * eta[j] + err_sd * z();
            }
        }
    }
    Ok((data, focal))
}

/// Fills the focal indicators for one row and returns η*. When `given` is
/// set, η* is taken as generated upstream (endogenous position).
fn focal_from_kind(
    pop: &PopulationModel,
    chol_sxx: &DMatrix<f64>,
    xs: &mut DVector<f64>,
    given: Option<f64>,
    z: &mut impl FnMut() -> f64,
) -> f64 {
    let r = &pop.recipe;
    let k = xs.len();
    match pop.condition.dgp_kind {
        ConstructKind::LatentVariable => {
            let eta = given.unwrap_or_else(&mut *z);
            for i in 0..k {
                xs[i] = r.lambda_star[i] * eta + (1.0 - r.lambda_star[i].powi(2)).max(0.0).sqrt() * z();
            }
            eta
        }
        ConstructKind::Composite => {
            let eta = given.unwrap_or_else(&mut *z);
            let u = DVector::from_fn(r.residual_factor.ncols(), |_, _| z());
            let x = &r.lambda_star * eta + &r.residual_factor * u;
            xs.copy_from(&x);
            eta
        }
        ConstructKind::CausalFormative => {
            let u = DVector::from_fn(k, |_, _| z());
            xs.copy_from(&(chol_sxx * u));
            r.weights.dot(xs) + FORMATIVE_DISTURBANCE.sqrt() * z()
        }
    }
}

/// Linear transform of `sample` whose covariance (n−1 divisor) equals `sigma0`.
pub fn normalize_to_population(sample: &DMatrix<f64>, sigma0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if sample.ncols() != sigma0.nrows() {
        return Err(SemError::Dimension("sample and population disagree on p".into()));
    }
    let centered = linalg::center_columns(sample);
    let s = linalg::sample_covariance(&centered)?;
    let s_inv_half = linalg::sym_inv_sqrt(&s).map_err(|_| SemError::Singular("sample covariance".into()))?;
    let sigma_half = linalg::sym_sqrt(sigma0)?;
    Ok(centered * s_inv_half * sigma_half)
}

/// Seed of one replication, mixed from the master seed and the cell identity.
pub fn derive_seed(master: u64, condition_id: u64, dgp_kind: ConstructKind, rep: u64) -> u64 {
    let kind = match dgp_kind {
        ConstructKind::LatentVariable => 1,
        ConstructKind::CausalFormative => 2,
        ConstructKind::Composite => 3,
    };
    let mut h = splitmix64(master);
    for v in [condition_id, kind, rep] {
        h = splitmix64(h ^ v);
    }
    h
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl PopulationModel {
    pub fn to_json_value(&self) -> serde_json::Value {
        let p = self.sigma0.nrows();
        let data: Vec<f64> = (0..p).flat_map(|i| (0..p).map(move |j| (i, j))).map(|(i, j)| self.sigma0[(i, j)]).collect();
        serde_json::json!({
            "condition": self.condition,
            "indicators": self.indicator_names,
            "sigma0": { "rows": p, "cols": p, "data": data },
            "theta0": self.theta0.to_json_value(),
            "std_paths0": self.std_paths0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, sample_covariance};

    fn cond(position: Position, kind: ConstructKind, k: usize, sigma: f64, hom: bool) -> DesignCondition {
        GridCell { position, n: 500, k, sigma, homogeneous: hom }.with_kind(kind)
    }

    #[test]
    fn grid_has_108_cells() {
        let g = GridCell::grid();
        assert_eq!(g.len(), 108);
        assert_eq!(g[0].id(), 1);
        assert_eq!(g[107].id(), 108);
    }

    #[test]
    fn correlation_examples() {
        let r = indicator_correlations(3, 0.1, true).unwrap();
        assert!(r[(0, 1)] == 0.1 && r[(0, 2)] == 0.1 && r[(1, 2)] == 0.1);
        let r = indicator_correlations(3, 0.3, false).unwrap();
        assert!((r[(0, 1)] - 0.2).abs() < 1e-15);
        assert!((r[(0, 2)] - 0.3).abs() < 1e-15);
        assert!((r[(1, 2)] - 0.4).abs() < 1e-15);
        let r = indicator_correlations(2, 0.5, true).unwrap();
        assert_eq!(r, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
        assert!(indicator_correlations(2, 0.5, false).is_err());
    }

    #[test]
    fn weights_and_loadings() {
        // oracle: K·w²·(1 + (K−1)σ) = 1 solved for w
        for (k, sigma) in [(3usize, 0.5), (5, 0.3)] {
            let sxx = indicator_correlations(k, sigma, true).unwrap();
            let w = composite_weights(&sxx).unwrap();
            let want = (1.0 / (k as f64 * (1.0 + (k as f64 - 1.0) * sigma))).sqrt();
            assert!(w.iter().all(|&v| (v - want).abs() < 1e-14));
            assert!(((w.transpose() * &sxx * &w)[(0, 0)] - 1.0).abs() < 1e-12);
        }
        let sxx = indicator_correlations(3, 0.5, true).unwrap();
        let l = eta_star_loadings(&sxx, &composite_weights(&sxx).unwrap());
        assert!((l[0] - 2.0 / 6f64.sqrt()).abs() < 1e-14);
        let sxx = indicator_correlations(5, 0.3, true).unwrap();
        let l = eta_star_loadings(&sxx, &composite_weights(&sxx).unwrap());
        assert!((l[0] - 2.2 / 11f64.sqrt()).abs() < 1e-14);
        assert!((l[0] - 0.66332).abs() < 1e-5);
        let id = DMatrix::<f64>::identity(4, 4);
        let w = composite_weights(&id).unwrap();
        assert_eq!(eta_star_loadings(&id, &w), w);
        assert_eq!(composite_weights(&DMatrix::identity(1, 1)).unwrap()[0], 1.0);
    }

    #[test]
    fn formative_unstandardized_paths() {
        let pop = build_population(&cond(Position::Exogenous, ConstructKind::CausalFormative, 3, 0.3, true)).unwrap();
        assert_eq!(pop.recipe.var_star, 1.25);
        let want = [0.3578, 0.2683, 0.1789];
        for j in 0..3 {
            assert!((pop.recipe.paths[j] - want[j]).abs() < 1e-4);
        }
        let std = pop.theta0.standardize().unwrap();
        let got = study::focal_paths(&std, Position::Exogenous).unwrap();
        assert!((got[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn composite_cross_covariances() {
        let pop = build_population(&cond(Position::Exogenous, ConstructKind::Composite, 3, 0.5, true)).unwrap();
        let l = 2.0 / 6f64.sqrt();
        assert!((pop.sigma0[(0, 3)] - 0.8 * 0.4 * l).abs() < 1e-12);
        assert!((pop.sigma0[(0, 3)] - 0.26128).abs() < 1e-5);
    }

    #[test]
    fn theta0_reproduces_sigma0_everywhere() {
        for cell in GridCell::grid().into_iter().filter(|c| c.n == 100) {
            for kind in study::dgp_kinds(cell.position) {
                let pop = build_population(&cell.with_kind(kind)).unwrap();
                let implied = pop.theta0.implied_covariance().unwrap();
                assert!(max_abs_diff(&implied, &pop.sigma0) < 1e-12, "{cell:?} {kind}");
                let std = study::focal_paths(&pop.theta0.standardize().unwrap(), cell.position).unwrap();
                for j in 0..3 {
                    assert!((std[j] - STD_PATHS[j]).abs() < 1e-12, "{cell:?} {kind}");
                }
            }
        }
    }

    #[test]
    fn unit_diagonal_and_shared_focal_covariances() {
        for cell in GridCell::grid().into_iter().filter(|c| c.n == 300) {
            let pops: Vec<_> = study::dgp_kinds(cell.position)
                .into_iter()
                .map(|k| build_population(&cell.with_kind(k)).unwrap())
                .collect();
            for pop in &pops {
                assert!(pop.sigma0.diagonal().iter().all(|&d| (d - 1.0).abs() < 1e-12));
                assert!(linalg::min_eigenvalue(&pop.sigma0) > 1e-10);
            }
            let lat = pops.iter().find(|p| p.condition.dgp_kind == ConstructKind::LatentVariable).unwrap();
            let com = pops.iter().find(|p| p.condition.dgp_kind == ConstructKind::Composite).unwrap();
            let k = cell.k;
            assert!(max_abs_diff(&lat.sigma0.columns(k, 12).into_owned(), &com.sigma0.columns(k, 12).into_owned()) < 1e-12);
            let focal_diff = max_abs_diff(
                &lat.sigma0.view((0, 0), (k, k)).into_owned(),
                &com.sigma0.view((0, 0), (k, k)).into_owned(),
            );
            assert!(focal_diff > 1e-3, "{cell:?}");
        }
    }

    #[test]
    fn draws_are_deterministic_and_composite_identity_holds() {
        let pop = build_population(&cond(Position::Endogenous, ConstructKind::Composite, 5, 0.3, false)).unwrap();
        let (a, eta) = draw_sample_with_focal(&pop, 200, 7).unwrap();
        let b = draw_sample(&pop, 200, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, draw_sample(&pop, 200, 8).unwrap());
        let composite = a.columns(0, 5) * &pop.recipe.weights;
        assert!((composite - eta).amax() < 1e-12);
    }

    #[test]
    fn normalization_is_exact() {
        let pop = build_population(&cond(Position::Exogenous, ConstructKind::LatentVariable, 7, 0.5, false)).unwrap();
        let x = draw_sample(&pop, 2000, 11).unwrap();
        let y = normalize_to_population(&x, &pop.sigma0).unwrap();
        assert!(max_abs_diff(&sample_covariance(&y).unwrap(), &pop.sigma0) < 1e-10);
    }

    #[test]
    fn seeds_differ_across_units() {
        let a = derive_seed(1, 1, ConstructKind::Composite, 0);
        assert_eq!(a, derive_seed(1, 1, ConstructKind::Composite, 0));
        assert_ne!(a, derive_seed(1, 1, ConstructKind::Composite, 1));
        assert_ne!(a, derive_seed(1, 2, ConstructKind::Composite, 0));
        assert_ne!(a, derive_seed(1, 1, ConstructKind::LatentVariable, 0));
        assert_ne!(a, derive_seed(2, 1, ConstructKind::Composite, 0));
    }
}
