//! Monte Carlo driver: shared samples across assumed models, replication
//! until a target number of admissible results, aggregation into
//! bias/variance/MSE and flag rates, and Fisher-consistency checks.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::admissibility::Reason;
use crate::dgp::{self, DesignCondition, GridCell, PopulationModel};
use crate::error::{Result, SemError};
use crate::fit::{self, Criterion, FitReport, LatentBlock, Thresholds};
use crate::linalg;
use crate::ml;
use crate::model_ir::{degrees_of_freedom, ConstructKind, LatentOrigin, MatrixId, ModelSpec};
use crate::pls::{self, PlsConfig};
use crate::study::{self, Estimator, Position};

fn default_target() -> usize {
    1000
}

fn default_cap() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub cells: Vec<GridCell>,
    pub dgp_kinds: Vec<ConstructKind>,
    pub assumed_kinds: Vec<ConstructKind>,
    pub estimator: Estimator,
    #[serde(default = "default_target")]
    pub target_admissible: usize,
    /// Attempts per assumed model are capped at `attempt_cap · target_admissible`.
    #[serde(default = "default_cap")]
    pub attempt_cap: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub phi_correlation: f64,
}

/// One (cell, DGP) pair with the assumed models fitted to its samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanUnit {
    pub condition: DesignCondition,
    pub assumed: Vec<ConstructKind>,
}

impl StudyPlan {
    /// All cells of the design, every DGP and every assumed kind.
    pub fn full(estimator: Estimator, master_seed: u64) -> Self {
        StudyPlan {
            cells: GridCell::grid(),
            dgp_kinds: ConstructKind::ALL.to_vec(),
            assumed_kinds: ConstructKind::ALL.to_vec(),
            estimator,
            target_admissible: default_target(),
            attempt_cap: default_cap(),
            master_seed,
            thresholds: Thresholds::default(),
            phi_correlation: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_admissible < 2 {
            return Err(SemError::Config("target_admissible must be at least 2".into()));
        }
        if self.attempt_cap < 1 {
            return Err(SemError::Config("attempt_cap must be at least 1".into()));
        }
        if self.units().is_empty() {
            return Err(SemError::Config("plan selects no estimable combination".into()));
        }
        Ok(())
    }

    /// Work units with excluded combinations removed.
    pub fn units(&self) -> Vec<PlanUnit> {
        let mut out = Vec::new();
        for cell in &self.cells {
            let allowed_assumed = study::assumed_kinds(cell.position, self.estimator);
            let assumed: Vec<ConstructKind> =
                self.assumed_kinds.iter().copied().filter(|k| allowed_assumed.contains(k)).collect();
            if assumed.is_empty() {
                continue;
            }
            for dgp_kind in study::dgp_kinds(cell.position) {
                if self.dgp_kinds.contains(&dgp_kind) {
                    let mut condition = cell.with_kind(dgp_kind);
                    condition.phi_correlation = self.phi_correlation;
                    out.push(PlanUnit { condition, assumed: assumed.clone() });
                }
            }
        }
        out
    }
}

/// One fitted (sample, assumed model) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub cell: GridCell,
    pub condition_id: usize,
    pub dgp_kind: ConstructKind,
    pub assumed_kind: ConstructKind,
    pub estimator: Estimator,
    pub rep: u64,
    pub seed: u64,
    pub admissible: bool,
    pub reasons: Vec<Reason>,
    pub betas: [f64; 3],
    pub f_min: f64,
    pub fit: FitReport,
    pub sample_hash: String,
}

impl Record {
    pub fn reason_codes(&self) -> String {
        self.reasons.iter().map(|r| r.code()).collect::<Vec<_>>().join(";")
    }
}

/// Outcome of fitting one assumed model to one covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub converged: bool,
    pub admissible: bool,
    pub reasons: Vec<Reason>,
    pub betas: [f64; 3],
    pub f_min: f64,
    pub fit: FitReport,
}

/// A compiled assumed model, reused across replications.
#[derive(Debug, Clone)]
pub struct AssumedModel {
    pub kind: ConstructKind,
    pub position: Position,
    pub spec: ModelSpec,
    pub df: i64,
    pls: Option<PlsConfig>,
}

impl AssumedModel {
    pub fn new(position: Position, kind: ConstructKind, k: usize, estimator: Estimator) -> Result<Self> {
        let spec = study::study_spec(position, kind, k)?;
        let df = degrees_of_freedom(&spec)?;
        let pls = match estimator {
            Estimator::Ml => None,
            Estimator::Pls => Some(PlsConfig::for_spec(&spec)?),
        };
        Ok(AssumedModel { kind, position, spec, df, pls })
    }

    pub fn fit(&self, s: &DMatrix<f64>, n: usize, th: &Thresholds) -> FitOutcome {
        match &self.pls {
            None => self.fit_ml(s, n, th),
            Some(cfg) => self.fit_pls(s, n, cfg, th),
        }
    }

    fn failed(&self, reason: Reason) -> FitOutcome {
        FitOutcome {
            converged: false,
            admissible: false,
            reasons: vec![reason],
            betas: [f64::NAN; 3],
            f_min: f64::NAN,
            fit: FitReport { df: self.df, ..Default::default() },
        }
    }

    fn fit_ml(&self, s: &DMatrix<f64>, n: usize, th: &Thresholds) -> FitOutcome {
        let Ok(r) = ml::fit_ml(&self.spec, s, n) else {
            return self.failed(Reason::Nonconvergence);
        };
        let betas = study::focal_paths(&r.std_paths, self.position).unwrap_or([f64::NAN; 3]);
        let t = &r.theta_hat;
        let sigma_hat = t.implied_covariance().unwrap_or_else(|_| DMatrix::from_element(s.nrows(), s.ncols(), f64::NAN));
        let blocks = ml_latent_blocks(&self.spec, t, &sigma_hat);
        let report = fit::fit_report(s, &sigma_hat, r.f_min, n, self.df, &blocks, th);
        FitOutcome {
            converged: r.converged,
            admissible: r.admissible(),
            reasons: r.verdict.reasons().to_vec(),
            betas,
            f_min: r.f_min,
            fit: report,
        }
    }

    fn fit_pls(&self, s: &DMatrix<f64>, n: usize, cfg: &PlsConfig, th: &Thresholds) -> FitOutcome {
        let Ok(r) = pls::fit_pls(&self.spec, s, cfg) else {
            return self.failed(Reason::SingularBlock);
        };
        let betas = study::focal_paths(&r.std_paths, self.position).unwrap_or([f64::NAN; 3]);
        let f_min = ml::fml(&r.r, &r.implied).unwrap_or(f64::NAN);
        let blocks: Vec<LatentBlock> = self
            .spec
            .constructs()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ConstructKind::LatentVariable)
            .map(|(a, c)| {
                let l: Vec<f64> = r.corrected.loadings[a].iter().copied().collect();
                LatentBlock { construct: c.name.clone(), errors: l.iter().map(|x| 1.0 - x * x).collect(), loadings: l }
            })
            .collect();
        let report = fit::fit_report(&r.r, &r.implied, f_min, n, self.df, &blocks, th);
        FitOutcome {
            converged: r.converged(),
            admissible: r.verdict.admissible(),
            reasons: r.verdict.reasons().to_vec(),
            betas,
            f_min,
            fit: report,
        }
    }
}

/// Standardized loadings and error variances of the latent blocks of an ML solution.
pub fn ml_latent_blocks(spec: &ModelSpec, t: &crate::ParamTable, sigma_hat: &DMatrix<f64>) -> Vec<LatentBlock> {
    let c = t.construct_covariance().ok();
    let mut out = Vec::new();
    for con in spec.constructs().iter().filter(|c| c.kind == ConstructKind::LatentVariable) {
        let Some(l) = t.latent_index(&con.name) else { continue };
        debug_assert!(matches!(t.origins()[l], LatentOrigin::Construct { .. }));
        let var = c.as_ref().map(|c| c[(l, l)]).unwrap_or(f64::NAN);
        let mut loadings = Vec::new();
        let mut errors = Vec::new();
        for x in spec.block(&con.name) {
            let r = t.observed_index(x).unwrap();
            let sd = sigma_hat[(r, r)].sqrt();
            loadings.push(t.value(MatrixId::Lambda, r, l) * var.sqrt() / sd);
            errors.push(t.value(MatrixId::Theta, r, r) / sigma_hat[(r, r)]);
        }
        out.push(LatentBlock { construct: con.name.clone(), loadings, errors });
    }
    out
}

/// SHA-256 of the sample's little-endian bytes, first 16 hex digits.
pub fn sample_hash(data: &DMatrix<f64>) -> String {
    let mut h = Sha256::new();
    h.update((data.nrows() as u64).to_le_bytes());
    h.update((data.ncols() as u64).to_le_bytes());
    for v in data.iter() {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

struct RepResult {
    rep: u64,
    seed: u64,
    hash: String,
    outcomes: Vec<Option<FitOutcome>>,
}

/// Runs one (cell, DGP) unit. Replications are evaluated in parallel
/// batches but accepted strictly in replication order, so the output does
/// not depend on the degree of parallelism.
pub fn run_condition(plan: &StudyPlan, unit: &PlanUnit) -> Result<Vec<Record>> {
    let pop = dgp::build_population(&unit.condition)?;
    let cell = unit.condition.cell;
    let condition_id = cell.id();
    let models: Vec<AssumedModel> = unit
        .assumed
        .iter()
        .map(|&k| AssumedModel::new(cell.position, k, cell.k, plan.estimator))
        .collect::<Result<_>>()?;
    let target = plan.target_admissible;
    let cap = plan.attempt_cap * target;
    let mut admissible = vec![0usize; models.len()];
    let mut attempts = vec![0usize; models.len()];
    let mut records = Vec::new();
    let mut next_rep = 0u64;
    let active = |adm: &[usize], att: &[usize], i: usize| adm[i] < target && att[i] < cap;
    loop {
        let live: Vec<usize> = (0..models.len()).filter(|&i| active(&admissible, &attempts, i)).collect();
        if live.is_empty() {
            break;
        }
        let need = live.iter().map(|&i| target - admissible[i]).max().unwrap();
        let room = live.iter().map(|&i| cap - attempts[i]).max().unwrap();
        let batch = need.clamp(8, 256).min(room) as u64;
        let reps: Vec<RepResult> = (next_rep..next_rep + batch)
            .into_par_iter()
            .map(|rep| -> Result<RepResult> {
                let seed = dgp::derive_seed(plan.master_seed, condition_id as u64, unit.condition.dgp_kind, rep);
                let data = dgp::draw_sample(&pop, cell.n, seed)?;
                let s = linalg::sample_covariance(&data)?;
                let outcomes = (0..models.len())
                    .map(|i| live.contains(&i).then(|| models[i].fit(&s, cell.n, &plan.thresholds)))
                    .collect();
                Ok(RepResult { rep, seed, hash: sample_hash(&data), outcomes })
            })
            .collect::<Result<_>>()?;
        next_rep += batch;
        for r in reps {
            for (i, o) in r.outcomes.into_iter().enumerate() {
                let Some(o) = o else { continue };
                if !active(&admissible, &attempts, i) {
                    continue;
                }
                attempts[i] += 1;
                if o.admissible {
                    admissible[i] += 1;
                }
                records.push(Record {
                    cell,
                    condition_id,
                    dgp_kind: unit.condition.dgp_kind,
                    assumed_kind: models[i].kind,
                    estimator: plan.estimator,
                    rep: r.rep,
                    seed: r.seed,
                    admissible: o.admissible,
                    reasons: o.reasons,
                    betas: o.betas,
                    f_min: o.f_min,
                    fit: o.fit,
                    sample_hash: r.hash.clone(),
                });
            }
        }
    }
    Ok(records)
}

/// Runs every unit of a plan; `workers = 0` uses the default thread count.
pub fn run_plan(plan: &StudyPlan, workers: usize) -> Result<Vec<Record>> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SemError::Config(e.to_string()))?;
    pool.install(|| {
        let per_unit: Vec<Vec<Record>> =
            plan.units().par_iter().map(|u| run_condition(plan, u)).collect::<Result<_>>()?;
        Ok(per_unit.into_iter().flatten().collect())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupKey {
    pub condition_id: usize,
    pub dgp_kind: ConstructKind,
    pub assumed_kind: ConstructKind,
    pub estimator: Estimator,
}

/// Aggregates of one (condition, DGP, assumed model, estimator, path).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub key: GroupKey,
    pub cell: GridCell,
    /// 1-based index of the focal path.
    pub path: usize,
    pub theta0: f64,
    pub mean: f64,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    pub n_admissible: usize,
    pub n_attempts: usize,
    pub inadmissibility_pct: f64,
    pub truncated: bool,
    /// Fewer than two admissible results: moments are NaN.
    pub estimable: bool,
    pub flag_rates: BTreeMap<Criterion, f64>,
}

/// Deterministic, order-invariant aggregation. A group is truncated when it
/// has fewer than `target` admissible results.
pub fn aggregate(records: &[Record], target: usize) -> Vec<SummaryRow> {
    let mut sorted: Vec<&Record> = records.iter().collect();
    sorted.sort_by(|a, b| {
        let ka = (a.condition_id, a.dgp_kind, a.assumed_kind, a.estimator, a.rep);
        let kb = (b.condition_id, b.dgp_kind, b.assumed_kind, b.estimator, b.rep);
        ka.cmp(&kb)
    });
    let mut groups: BTreeMap<GroupKey, Vec<&Record>> = BTreeMap::new();
    for r in sorted {
        let key = GroupKey { condition_id: r.condition_id, dgp_kind: r.dgp_kind, assumed_kind: r.assumed_kind, estimator: r.estimator };
        groups.entry(key).or_default().push(r);
    }
    let mut out = Vec::new();
    for (key, recs) in groups {
        let adm: Vec<&&Record> = recs.iter().filter(|r| r.admissible).collect();
        let n_adm = adm.len();
        let mut flag_rates = BTreeMap::new();
        for c in Criterion::ALL {
            let vals: Vec<bool> = adm.iter().filter_map(|r| r.fit.flag(c)).collect();
            let rate = if vals.is_empty() { f64::NAN } else { vals.iter().filter(|&&v| v).count() as f64 / vals.len() as f64 };
            flag_rates.insert(c, rate);
        }
        for j in 0..3 {
            let theta0 = dgp::STD_PATHS[j];
            let xs: Vec<f64> = adm.iter().map(|r| r.betas[j]).collect();
            let (mean, bias, variance, mse) = moments(&xs, theta0);
            out.push(SummaryRow {
                key,
                cell: recs[0].cell,
                path: j + 1,
                theta0,
                mean,
                bias,
                variance,
                mse,
                n_admissible: n_adm,
                n_attempts: recs.len(),
                inadmissibility_pct: 100.0 * (1.0 - n_adm as f64 / recs.len() as f64),
                truncated: n_adm < target,
                estimable: n_adm >= 2,
                flag_rates: flag_rates.clone(),
            });
        }
    }
    out
}

/// (mean, bias, variance with N−1 divisor, bias² + variance).
pub fn moments(xs: &[f64], theta0: f64) -> (f64, f64, f64, f64) {
    if xs.len() < 2 {
        return (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let variance = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let bias = mean - theta0;
    (mean, bias, variance, bias * bias + variance)
}

/// Whether an estimator is expected to recover the population paths exactly.
pub fn expected_consistent(position: Position, dgp_kind: ConstructKind, assumed: ConstructKind, estimator: Estimator) -> bool {
    match (estimator, position) {
        (Estimator::Ml, Position::Exogenous) => assumed == dgp_kind || assumed == ConstructKind::CausalFormative,
        (Estimator::Ml, Position::Endogenous) => assumed == dgp_kind,
        (Estimator::Pls, _) => assumed == dgp_kind && dgp_kind != ConstructKind::CausalFormative,
    }
}

pub const FISHER_N: usize = 10_000;
pub const FISHER_EXACT_TOL: f64 = 1e-6;
pub const FISHER_DEVIATION_MIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct FisherOutcome {
    pub condition: DesignCondition,
    pub assumed_kind: ConstructKind,
    pub estimator: Estimator,
    pub expected_consistent: bool,
    pub std_paths: [f64; 3],
    pub max_deviation: f64,
    pub converged: bool,
    pub admissible: bool,
    pub reasons: Vec<Reason>,
    pub pass: bool,
}

/// Fits once to a population-normalized sample of size 10 000. Consistent
/// combinations pass when admissible and within 1e-6 of the true paths;
/// inconsistent ones pass when the fit converges and deviates by more than 1e-3.
pub fn fisher_check(condition: &DesignCondition, assumed: ConstructKind, estimator: Estimator, seed: u64) -> Result<FisherOutcome> {
    let cell = condition.cell;
    if !study::assumed_kinds(cell.position, estimator).contains(&assumed) {
        return Err(SemError::Excluded(format!("{estimator} with assumed {assumed} at {}", cell.position)));
    }
    let pop: PopulationModel = dgp::build_population(condition)?;
    let data = dgp::draw_sample(&pop, FISHER_N, dgp::derive_seed(seed, cell.id() as u64, condition.dgp_kind, 0))?;
    let normalized = dgp::normalize_to_population(&data, &pop.sigma0)?;
    let s = linalg::sample_covariance(&normalized)?;
    let model = AssumedModel::new(cell.position, assumed, cell.k, estimator)?;
    let o = model.fit(&s, FISHER_N, &Thresholds::default());
    let max_deviation = o
        .betas
        .iter()
        .zip(pop.std_paths0)
        .map(|(b, t)| (b - t).abs())
        .fold(0.0, |m: f64, d| if d.is_nan() { f64::NAN } else { m.max(d) });
    let expected = expected_consistent(cell.position, condition.dgp_kind, assumed, estimator);
    let pass = if expected {
        o.admissible && max_deviation < FISHER_EXACT_TOL
    } else {
        o.converged && max_deviation > FISHER_DEVIATION_MIN
    };
    Ok(FisherOutcome {
        condition: *condition,
        assumed_kind: assumed,
        estimator,
        expected_consistent: expected,
        std_paths: o.betas,
        max_deviation,
        converged: o.converged,
        admissible: o.admissible,
        reasons: o.reasons,
        pass,
    })
}

/// Fisher checks over every distinct (position, K, σ, homogeneity) cell of
/// the given list, every DGP and every estimable assumed model.
pub fn fisher_matrix(cells: &[GridCell], estimator: Estimator, seed: u64) -> Result<Vec<FisherOutcome>> {
    let mut seen: Vec<GridCell> = Vec::new();
    for c in cells {
        let canon = GridCell { n: dgp::SAMPLE_SIZES[0], ..*c };
        if !seen.contains(&canon) {
            seen.push(canon);
        }
    }
    let jobs: Vec<(DesignCondition, ConstructKind)> = seen
        .iter()
        .flat_map(|c| {
            study::dgp_kinds(c.position).into_iter().flat_map(move |d| {
                study::assumed_kinds(c.position, estimator).into_iter().map(move |a| (c.with_kind(d), a))
            })
        })
        .collect();
    jobs.par_iter().map(|(cond, a)| fisher_check(cond, *a, estimator, seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(rep: u64, beta: f64, admissible: bool) -> Record {
        let cell = GridCell { position: Position::Exogenous, n: 100, k: 3, sigma: 0.1, homogeneous: true };
        Record {
            cell,
            condition_id: cell.id(),
            dgp_kind: ConstructKind::Composite,
            assumed_kind: ConstructKind::Composite,
            estimator: Estimator::Ml,
            rep,
            seed: rep,
            admissible,
            reasons: vec![],
            betas: [beta, 0.3, 0.2],
            f_min: 0.0,
            fit: FitReport::default(),
            sample_hash: String::new(),
        }
    }

    #[test]
    fn constant_estimates_have_zero_error() {
        let recs: Vec<Record> = (0..5).map(|r| record(r, 0.4, true)).collect();
        let s = aggregate(&recs, 5);
        assert_eq!(s.len(), 3);
        assert!(s[0].bias.abs() < 1e-15 && s[0].variance == 0.0 && s[0].mse < 1e-15);
        assert!(!s[0].truncated);
    }

    #[test]
    fn two_point_case() {
        let recs = vec![record(0, 0.3, true), record(1, 0.5, true), record(2, 9.0, false)];
        let s = &aggregate(&recs, 2)[0];
        assert!(s.bias.abs() < 1e-15);
        assert!((s.variance - 0.02).abs() < 1e-15);
        assert!((s.mse - 0.02).abs() < 1e-15);
        assert_eq!((s.n_admissible, s.n_attempts), (2, 3));
        assert!((s.inadmissibility_pct - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mean_square_identity() {
        let xs = [0.31, 0.47, 0.52, 0.28, 0.44, 0.39, 0.41];
        let (_, bias, var, _) = moments(&xs, 0.4);
        let n = xs.len() as f64;
        let msd = xs.iter().map(|x| (x - 0.4f64).powi(2)).sum::<f64>() / n;
        assert!((msd - (bias * bias + (n - 1.0) / n * var)).abs() < 1e-12);
    }

    #[test]
    fn aggregation_ignores_order() {
        let mut recs: Vec<Record> = (0..20).map(|r| record(r, 0.3 + 0.01 * ((r * 7) % 11) as f64, r % 3 != 0)).collect();
        let a = aggregate(&recs, 10);
        recs.reverse();
        recs.swap(2, 13);
        assert_eq!(format!("{a:?}"), format!("{:?}", aggregate(&recs, 10)));
    }

    #[test]
    fn empty_group_not_estimable() {
        let s = aggregate(&[record(0, 0.4, false)], 2);
        assert!(!s[0].estimable && s[0].bias.is_nan());
    }

    #[test]
    fn excluded_combinations_absent() {
        let mut plan = StudyPlan::full(Estimator::Pls, 1);
        assert!(plan.units().iter().all(|u| !u.assumed.contains(&ConstructKind::CausalFormative)));
        plan.estimator = Estimator::Ml;
        for u in plan.units() {
            if u.condition.cell.position == Position::Endogenous {
                assert_ne!(u.condition.dgp_kind, ConstructKind::CausalFormative);
                assert!(!u.assumed.contains(&ConstructKind::CausalFormative));
            }
        }
        // 54 exogenous cells × 3 DGPs + 54 endogenous × 2
        assert_eq!(plan.units().len(), 54 * 3 + 54 * 2);
    }

    #[test]
    fn fisher_examples() {
        let cell = GridCell { position: Position::Exogenous, n: 100, k: 3, sigma: 0.5, homogeneous: true };
        let ok = fisher_check(&cell.with_kind(ConstructKind::Composite), ConstructKind::Composite, Estimator::Ml, 5).unwrap();
        assert!(ok.expected_consistent && ok.pass, "{ok:?}");
        let cf = fisher_check(&cell.with_kind(ConstructKind::LatentVariable), ConstructKind::CausalFormative, Estimator::Ml, 5).unwrap();
        assert!(cf.expected_consistent && cf.pass, "{cf:?}");
        let bad = fisher_check(&cell.with_kind(ConstructKind::Composite), ConstructKind::LatentVariable, Estimator::Ml, 5).unwrap();
        assert!(!bad.expected_consistent && bad.max_deviation > 0.01, "{bad:?}");
    }
}
