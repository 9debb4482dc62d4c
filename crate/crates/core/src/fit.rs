//! Global fit measures, reliability measures and threshold flags.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Result, SemError};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    ChiSquare,
    Srmr,
    Cfi,
    Rmsea,
    Cr,
    Ave,
}

impl Criterion {
    pub const ALL: [Criterion; 6] =
        [Criterion::ChiSquare, Criterion::Srmr, Criterion::Cfi, Criterion::Rmsea, Criterion::Cr, Criterion::Ave];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::ChiSquare => "chisq",
            Criterion::Srmr => "srmr",
            Criterion::Cfi => "cfi",
            Criterion::Rmsea => "rmsea",
            Criterion::Cr => "cr",
            Criterion::Ave => "ave",
        }
    }
}

/// Cutoffs of the six criteria. A model is flagged when the p-value is below
/// `alpha`, SRMR or RMSEA exceed their cutoffs, or CFI, CR or AVE fall below theirs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub alpha: f64,
    pub srmr: f64,
    pub cfi: f64,
    pub rmsea: f64,
    pub cr: f64,
    pub ave: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { alpha: 0.05, srmr: 0.08, cfi: 0.95, rmsea: 0.05, cr: 0.7, ave: 0.5 }
    }
}

/// `T = (n−1)·F` and its upper-tail χ² probability.
pub fn chi_square_test(f_min: f64, n: usize, df: i64) -> Result<(f64, f64)> {
    if df <= 0 {
        return Err(SemError::NotApplicable(format!("chi-square test with df = {df}")));
    }
    if !f_min.is_finite() {
        return Err(SemError::NonFinite("discrepancy".into()));
    }
    let t = (n as f64 - 1.0) * f_min.max(0.0);
    let dist = ChiSquared::new(df as f64).map_err(|e| SemError::Config(e.to_string()))?;
    Ok((t, dist.sf(t).clamp(0.0, 1.0)))
}

/// Root mean square of correlation-metric residuals over the lower triangle
/// including the diagonal.
pub fn srmr(s: &DMatrix<f64>, sigma_hat: &DMatrix<f64>) -> f64 {
    let p = s.nrows();
    let mut sum = 0.0;
    for i in 0..p {
        for j in 0..=i {
            let obs = s[(i, j)] / (s[(i, i)] * s[(j, j)]).sqrt();
            let imp = sigma_hat[(i, j)] / (sigma_hat[(i, i)] * sigma_hat[(j, j)]).sqrt();
            sum += (obs - imp).powi(2);
        }
    }
    (sum / (p * (p + 1) / 2) as f64).sqrt()
}

/// Comparative fit index, clipped to [0, 1].
pub fn cfi(t: f64, df: i64, t_base: f64, df_base: i64) -> Result<f64> {
    if df <= 0 || df_base <= 0 {
        return Err(SemError::NotApplicable("CFI with df = 0".into()));
    }
    let d = (t - df as f64).max(0.0);
    let d_base = (t_base - df_base as f64).max(d);
    if d_base == 0.0 {
        return Ok(1.0);
    }
    Ok((1.0 - d / d_base).clamp(0.0, 1.0))
}

pub fn rmsea(t: f64, df: i64, n: usize) -> Result<f64> {
    if df <= 0 {
        return Err(SemError::NotApplicable("RMSEA with df = 0".into()));
    }
    Ok(((t - df as f64).max(0.0) / (df as f64 * (n as f64 - 1.0))).sqrt())
}

/// ML fit of the independence model (free variances, zero covariances). Its
/// minimizer is `diag(S)`, so the fitted discrepancy is available in closed form.
pub fn independence_baseline(s: &DMatrix<f64>, n: usize) -> Result<(f64, i64)> {
    let p = s.nrows();
    let (logdet, _) = linalg::logdet_inverse(s).ok_or_else(|| SemError::NotPositiveDefinite("S".into()))?;
    let f = s.diagonal().iter().map(|d| d.ln()).sum::<f64>() - logdet;
    Ok(((n as f64 - 1.0) * f.max(0.0), (p * (p - 1) / 2) as i64))
}

/// Composite reliability and average variance extracted of a standardized block.
pub fn cr_ave(loadings: &[f64], errors: &[f64]) -> (f64, f64) {
    let sl: f64 = loadings.iter().sum();
    let sl2: f64 = loadings.iter().map(|l| l * l).sum();
    let st: f64 = errors.iter().sum();
    (sl * sl / (sl * sl + st), sl2 / (sl2 + st))
}

/// Standardized loadings and error variances of one latent block.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBlock {
    pub construct: String,
    pub loadings: Vec<f64>,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitReport {
    pub t: Option<f64>,
    pub df: i64,
    pub p_value: Option<f64>,
    pub srmr: Option<f64>,
    pub cfi: Option<f64>,
    pub rmsea: Option<f64>,
    pub cr: BTreeMap<String, f64>,
    pub ave: BTreeMap<String, f64>,
    /// `None` when a criterion is not applicable.
    pub flags: BTreeMap<Criterion, Option<bool>>,
}

impl FitReport {
    pub fn cr_min(&self) -> Option<f64> {
        self.cr.values().copied().reduce(f64::min)
    }

    pub fn ave_min(&self) -> Option<f64> {
        self.ave.values().copied().reduce(f64::min)
    }

    pub fn flag(&self, c: Criterion) -> Option<bool> {
        self.flags.get(&c).copied().flatten()
    }
}

/// Flag decisions from values and thresholds alone.
pub fn flags(report: &FitReport, th: &Thresholds) -> BTreeMap<Criterion, Option<bool>> {
    let mut f = BTreeMap::new();
    f.insert(Criterion::ChiSquare, report.p_value.map(|p| p < th.alpha));
    f.insert(Criterion::Srmr, report.srmr.map(|v| v > th.srmr));
    f.insert(Criterion::Cfi, report.cfi.map(|v| v < th.cfi));
    f.insert(Criterion::Rmsea, report.rmsea.map(|v| v > th.rmsea));
    f.insert(Criterion::Cr, report.cr_min().map(|v| !(v >= th.cr)));
    f.insert(Criterion::Ave, report.ave_min().map(|v| !(v >= th.ave)));
    f
}

/// All six criteria for a fitted covariance structure.
pub fn fit_report(
    s: &DMatrix<f64>,
    sigma_hat: &DMatrix<f64>,
    f_min: f64,
    n: usize,
    df: i64,
    latent_blocks: &[LatentBlock],
    th: &Thresholds,
) -> FitReport {
    let mut r = FitReport { df, ..Default::default() };
    if let Ok((t, p)) = chi_square_test(f_min, n, df) {
        r.t = Some(t);
        r.p_value = Some(p);
        if let Ok((tb, dfb)) = independence_baseline(s, n) {
            r.cfi = cfi(t, df, tb, dfb).ok();
        }
        r.rmsea = rmsea(t, df, n).ok();
    } else if f_min.is_finite() {
        r.t = Some((n as f64 - 1.0) * f_min.max(0.0));
    }
    let v = srmr(s, sigma_hat);
    r.srmr = v.is_finite().then_some(v);
    for b in latent_blocks {
        let (cr, ave) = cr_ave(&b.loadings, &b.errors);
        r.cr.insert(b.construct.clone(), cr);
        r.ave.insert(b.construct.clone(), ave);
    }
    r.flags = flags(&r, th);
    r
}
