//! PLS path modeling (mode A / mode B outer weights) with the consistent-PLS
//! disattenuation for latent blocks. Everything runs on the indicator
//! correlation matrix, so the estimates depend on data only through it.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::admissibility::{Reason, Verdict, PD_TOL};
use crate::error::{Result, SemError};
use crate::linalg;
use crate::model_ir::{ConstructKind, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerScheme {
    Centroid,
    Factorial,
    Path,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    None,
    Plsc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsConfig {
    pub modes: BTreeMap<String, Mode>,
    pub scheme: InnerScheme,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub correction: Correction,
}

impl PlsConfig {
    /// Mode B for composites, mode A with PLSc for latent variables, path
    /// weighting, tolerance 1e-5, at most 300 iterations.
    pub fn for_spec(spec: &ModelSpec) -> Result<Self> {
        let mut modes = BTreeMap::new();
        for c in spec.constructs() {
            let mode = match c.kind {
                ConstructKind::Composite => Mode::B,
                ConstructKind::LatentVariable => Mode::A,
                ConstructKind::CausalFormative => {
                    return Err(SemError::Excluded(format!(
                        "causal-formative construct '{}' cannot be estimated with PLS",
                        c.name
                    )))
                }
            };
            modes.insert(c.name.clone(), mode);
        }
        let cfg = PlsConfig { modes, scheme: InnerScheme::Path, tolerance: 1e-5, max_iterations: 300, correction: Correction::Plsc };
        cfg.validate(spec)?;
        Ok(cfg)
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(SemError::Config("PLS tolerance must be positive".into()));
        }
        for c in spec.constructs() {
            if c.kind == ConstructKind::CausalFormative {
                return Err(SemError::Excluded(format!("causal-formative construct '{}' in a PLS model", c.name)));
            }
            let mode = self
                .modes
                .get(&c.name)
                .ok_or_else(|| SemError::Config(format!("no PLS mode for '{}'", c.name)))?;
            if self.correction == Correction::Plsc && c.kind == ConstructKind::LatentVariable && *mode != Mode::A {
                return Err(SemError::Config(format!("PLSc needs mode A for latent construct '{}'", c.name)));
            }
        }
        Ok(())
    }
}

struct Layout {
    blocks: Vec<Vec<usize>>,
    /// `adj[a][b]`: +1 if a → b, −1 if b → a, 0 otherwise.
    adj: Vec<Vec<i8>>,
}

fn layout(spec: &ModelSpec) -> Result<Layout> {
    let names: Vec<&str> = spec.constructs().iter().map(|c| c.name.as_str()).collect();
    let observed = spec.observed_names();
    let blocks: Vec<Vec<usize>> = spec
        .constructs()
        .iter()
        .map(|c| spec.block(&c.name).iter().map(|x| observed.iter().position(|o| o == x).unwrap()).collect())
        .collect();
    if blocks.iter().any(|b| b.is_empty()) {
        return Err(SemError::InvalidSpec("every PLS block needs indicators".into()));
    }
    let m = names.len();
    let mut adj = vec![vec![0i8; m]; m];
    for p in spec.paths() {
        let a = names.iter().position(|n| *n == p.from).unwrap();
        let b = names.iter().position(|n| *n == p.to).unwrap();
        adj[a][b] = 1;
        adj[b][a] = -1;
    }
    Ok(Layout { blocks, adj })
}

/// Outer weights of a PLS run on a correlation matrix.
#[derive(Debug, Clone)]
pub struct PlsWeights {
    /// One weight vector per construct (spec order), each giving a unit-variance proxy.
    pub weights: Vec<DVector<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

fn proxy_correlations(r: &DMatrix<f64>, lay: &Layout, w: &[DVector<f64>]) -> DMatrix<f64> {
    let m = w.len();
    DMatrix::from_fn(m, m, |a, b| {
        let rab = linalg::submatrix(r, &lay.blocks[a], &lay.blocks[b]);
        (w[a].transpose() * rab * &w[b])[(0, 0)]
    })
}

fn inner_weights(rc: &DMatrix<f64>, lay: &Layout, scheme: InnerScheme) -> Result<DMatrix<f64>> {
    let m = rc.nrows();
    let mut e = DMatrix::zeros(m, m);
    for a in 0..m {
        let preds: Vec<usize> = (0..m).filter(|&b| lay.adj[a][b] == -1).collect();
        let beta = if scheme == InnerScheme::Path && !preds.is_empty() {
            let rpp = linalg::submatrix(rc, &preds, &preds);
            let rpt = DVector::from_iterator(preds.len(), preds.iter().map(|&b| rc[(b, a)]));
            Some(rpp.lu().solve(&rpt).ok_or_else(|| SemError::Singular("predictor proxy correlations".into()))?)
        } else {
            None
        };
        for b in 0..m {
            if lay.adj[a][b] == 0 {
                continue;
            }
            e[(a, b)] = match scheme {
                InnerScheme::Centroid => rc[(a, b)].signum(),
                InnerScheme::Factorial => rc[(a, b)],
                InnerScheme::Path if lay.adj[a][b] == -1 => {
                    beta.as_ref().unwrap()[preds.iter().position(|&p| p == b).unwrap()]
                }
                InnerScheme::Path => rc[(a, b)],
            };
        }
    }
    Ok(e)
}

fn normalize_block(w: DVector<f64>, rbb: &DMatrix<f64>) -> Result<DVector<f64>> {
    let var = (w.transpose() * rbb * &w)[(0, 0)];
    if !(var > 0.0) || !var.is_finite() {
        return Err(SemError::Singular("degenerate PLS proxy".into()));
    }
    let mut w = w / var.sqrt();
    // orient so that the proxy correlates positively with its indicators on balance
    if (rbb * &w).sum() < 0.0 {
        w = -w;
    }
    Ok(w)
}

/// Iterates outer and inner estimation on a correlation matrix.
pub fn pls_weights_corr(r: &DMatrix<f64>, spec: &ModelSpec, config: &PlsConfig) -> Result<PlsWeights> {
    config.validate(spec)?;
    let lay = layout(spec)?;
    let modes: Vec<Mode> = spec.constructs().iter().map(|c| config.modes[&c.name]).collect();
    let rbb: Vec<DMatrix<f64>> = lay.blocks.iter().map(|b| linalg::submatrix(r, b, b)).collect();
    let chol_b: Vec<Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>> = rbb
        .iter()
        .zip(&modes)
        .map(|(m, mode)| if *mode == Mode::B { m.clone().cholesky() } else { None })
        .collect();
    for (i, mode) in modes.iter().enumerate() {
        if *mode == Mode::B && chol_b[i].is_none() {
            return Err(SemError::Singular(format!("mode B block '{}'", spec.constructs()[i].name)));
        }
    }
    let mut w: Vec<DVector<f64>> = lay
        .blocks
        .iter()
        .zip(&rbb)
        .map(|(b, m)| normalize_block(DVector::from_element(b.len(), 1.0), m))
        .collect::<Result<_>>()?;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let rc = proxy_correlations(r, &lay, &w);
        let e = inner_weights(&rc, &lay, config.scheme)?;
        let mut next = Vec::with_capacity(w.len());
        for a in 0..w.len() {
            if (0..w.len()).all(|b| e[(a, b)] == 0.0) {
                // isolated construct: no inner proxy, weights stay at their start
                next.push(w[a].clone());
                continue;
            }
            // covariances of block a's indicators with its inner proxy
            let mut cov = DVector::zeros(lay.blocks[a].len());
            for b in 0..w.len() {
                if e[(a, b)] != 0.0 {
                    cov += linalg::submatrix(r, &lay.blocks[a], &lay.blocks[b]) * &w[b] * e[(a, b)];
                }
            }
            let raw = match modes[a] {
                Mode::A => cov,
                Mode::B => chol_b[a].as_ref().unwrap().solve(&cov),
            };
            next.push(normalize_block(raw, &rbb[a])?);
        }
        let change = next.iter().zip(&w).map(|(n, o)| (n - o).amax()).fold(0.0, f64::max);
        w = next;
        if change < config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(PlsWeights { weights: w, converged, iterations })
}

/// Standardizes the data (n−1 divisor) and runs the weight iteration.
/// Returns the weights and the standardized construct scores.
pub fn pls_weights(data: &DMatrix<f64>, spec: &ModelSpec, config: &PlsConfig) -> Result<(PlsWeights, DMatrix<f64>)> {
    let s = linalg::sample_covariance(data)?;
    let r = linalg::to_correlation(&s)?;
    let pw = pls_weights_corr(&r, spec, config)?;
    let centered = linalg::center_columns(data);
    let sd = s.diagonal().map(f64::sqrt);
    let lay = layout(spec)?;
    let n = data.nrows();
    let mut scores = DMatrix::zeros(n, pw.weights.len());
    for (a, block) in lay.blocks.iter().enumerate() {
        for (i, &col) in block.iter().enumerate() {
            let coef = pw.weights[a][i] / sd[col];
            for row in 0..n {
                scores[(row, a)] += centered[(row, col)] * coef;
            }
        }
    }
    Ok((pw, scores))
}

#[derive(Debug, Clone)]
pub struct Disattenuated {
    /// Per construct: corrected loadings (mode A with correction) or
    /// indicator–proxy correlations.
    pub loadings: Vec<DVector<f64>>,
    pub reliabilities: Vec<f64>,
    pub construct_corr: DMatrix<f64>,
}

/// Consistent-PLS correction: reliability of each mode A proxy, corrected
/// loadings and disattenuated construct correlations. Blocks that are not
/// corrected get reliability 1.
pub fn plsc_correct(weights: &PlsWeights, r: &DMatrix<f64>, spec: &ModelSpec, config: &PlsConfig) -> Result<Disattenuated> {
    let lay = layout(spec)?;
    let rc = proxy_correlations(r, &lay, &weights.weights);
    let mut loadings = Vec::new();
    let mut rel = Vec::new();
    for (a, c) in spec.constructs().iter().enumerate() {
        let w = &weights.weights[a];
        let rbb = linalg::submatrix(r, &lay.blocks[a], &lay.blocks[a]);
        let correct = config.correction == Correction::Plsc
            && c.kind == ConstructKind::LatentVariable
            && config.modes[&c.name] == Mode::A
            && w.len() >= 2;
        if correct {
            let mut off = rbb.clone();
            off.fill_diagonal(0.0);
            let mut wwt = w * w.transpose();
            wwt.fill_diagonal(0.0);
            let num = (w.transpose() * off * w)[(0, 0)];
            let den = (w.transpose() * wwt * w)[(0, 0)];
            let c2 = num / den;
            let ww = w.dot(w);
            rel.push(ww * ww * c2);
            loadings.push(w * c2.sqrt());
        } else {
            rel.push(1.0);
            loadings.push(&rbb * w);
        }
    }
    let m = rel.len();
    let construct_corr =
        DMatrix::from_fn(m, m, |a, b| if a == b { 1.0 } else { rc[(a, b)] / (rel[a] * rel[b]).sqrt() });
    Ok(Disattenuated { loadings, reliabilities: rel, construct_corr })
}

/// OLS path coefficients of every endogenous construct on its predecessors.
pub fn pls_paths(construct_corr: &DMatrix<f64>, spec: &ModelSpec) -> Result<BTreeMap<(String, String), f64>> {
    let names: Vec<&str> = spec.constructs().iter().map(|c| c.name.as_str()).collect();
    let mut out = BTreeMap::new();
    for (t, tname) in names.iter().enumerate() {
        let preds: Vec<usize> = spec
            .paths()
            .iter()
            .filter(|p| p.to == *tname)
            .map(|p| names.iter().position(|n| *n == p.from).unwrap())
            .collect();
        if preds.is_empty() {
            continue;
        }
        let rpp = linalg::submatrix(construct_corr, &preds, &preds);
        let rpt = DVector::from_iterator(preds.len(), preds.iter().map(|&s| construct_corr[(s, t)]));
        let beta = rpp
            .lu()
            .solve(&rpt)
            .ok_or_else(|| SemError::Singular(format!("predictor correlations of '{tname}'")))?;
        for (i, &s) in preds.iter().enumerate() {
            out.insert((names[s].to_string(), tname.to_string()), beta[i]);
        }
    }
    Ok(out)
}

/// Construct correlations implied by the estimated paths: exogenous
/// correlations as estimated, endogenous constructs with uncorrelated
/// disturbances and unit variance.
fn implied_construct_corr(rc: &DMatrix<f64>, paths: &BTreeMap<(String, String), f64>, spec: &ModelSpec) -> Result<DMatrix<f64>> {
    let names: Vec<&str> = spec.constructs().iter().map(|c| c.name.as_str()).collect();
    let order = spec.topological_order()?;
    let mut ordered: Vec<usize> = order.iter().copied().filter(|&i| spec.constructs()[i].exogenous).collect();
    ordered.extend(order.iter().copied().filter(|&i| !spec.constructs()[i].exogenous));
    let m = names.len();
    let mut c = DMatrix::zeros(m, m);
    for (pos, &t) in ordered.iter().enumerate() {
        c[(t, t)] = 1.0;
        for &u in &ordered[..pos] {
            let v = if spec.constructs()[t].exogenous {
                rc[(t, u)]
            } else {
                paths
                    .iter()
                    .filter(|((_, to), _)| to == names[t])
                    .map(|((from, _), b)| b * c[(names.iter().position(|n| n == from).unwrap(), u)])
                    .sum()
            };
            c[(t, u)] = v;
            c[(u, t)] = v;
        }
    }
    Ok(c)
}

#[derive(Debug, Clone)]
pub struct PlsResult {
    pub weights: PlsWeights,
    pub corrected: Disattenuated,
    pub std_paths: BTreeMap<(String, String), f64>,
    /// Indicator correlation matrix the model was fitted to.
    pub r: DMatrix<f64>,
    /// Model-implied indicator correlation matrix.
    pub implied: DMatrix<f64>,
    pub verdict: Verdict,
}

impl PlsResult {
    pub fn converged(&self) -> bool {
        self.weights.converged
    }
}

/// PLS-PM / PLSc estimation from a covariance matrix.
pub fn fit_pls(spec: &ModelSpec, s: &DMatrix<f64>, config: &PlsConfig) -> Result<PlsResult> {
    let r = linalg::to_correlation(s)?;
    let weights = pls_weights_corr(&r, spec, config)?;
    let corrected = plsc_correct(&weights, &r, spec, config)?;
    let std_paths = pls_paths(&corrected.construct_corr, spec).unwrap_or_default();
    let lay = layout(spec)?;
    let c = implied_construct_corr(&corrected.construct_corr, &std_paths, spec)?;
    let p = r.nrows();
    let mut implied = DMatrix::zeros(p, p);
    for (a, ba) in lay.blocks.iter().enumerate() {
        for (b, bb) in lay.blocks.iter().enumerate() {
            for (i, &ri) in ba.iter().enumerate() {
                for (j, &rj) in bb.iter().enumerate() {
                    implied[(ri, rj)] = if a != b {
                        corrected.loadings[a][i] * c[(a, b)] * corrected.loadings[b][j]
                    } else if ri == rj {
                        1.0
                    } else if spec.constructs()[a].kind == ConstructKind::Composite {
                        r[(ri, rj)]
                    } else {
                        corrected.loadings[a][i] * corrected.loadings[a][j]
                    };
                }
            }
        }
    }
    let mut result = PlsResult { weights, corrected, std_paths, r, implied, verdict: Verdict::default() };
    result.verdict = check_admissibility_pls(&result);
    Ok(result)
}

/// Convergence, standardized loadings within [−1, 1], reliabilities in
/// (0, 1] and a positive definite construct correlation matrix.
pub fn check_admissibility_pls(result: &PlsResult) -> Verdict {
    let mut v = Verdict::default();
    let tol = 1e-8;
    if !result.weights.converged {
        v.add(Reason::Nonconvergence);
    }
    let d = &result.corrected;
    if d.loadings.iter().flat_map(|l| l.iter()).any(|x| !(x.abs() <= 1.0 + tol)) {
        v.add(Reason::LoadingAboveOne);
    }
    if d.reliabilities.iter().any(|&r| !(r > 0.0 && r <= 1.0 + tol)) {
        v.add(Reason::ReliabilityOutOfRange);
    }
    if !d.construct_corr.iter().all(|x| x.is_finite()) || !(linalg::min_eigenvalue(&d.construct_corr) > PD_TOL) {
        v.add(Reason::NonPdConstructCov);
    }
    v
}
