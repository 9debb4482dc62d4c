//! Invariant suites run by the `verify` front-end and the acceptance tests.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dgp::{self, GridCell};
use crate::error::Result;
use crate::fit::{self, Criterion, FitReport, Thresholds};
use crate::linalg;
use crate::mc::{self, StudyPlan};
use crate::ml::{self, MlObjective};
use crate::model_ir::{degrees_of_freedom, excrescent_name, Constraint, Construct, ConstructKind, MatrixId, ModelSpec, ParamTable};
use crate::optim::Objective;
use crate::output;
use crate::study::{self, Estimator, Position};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl SuiteResult {
    fn new(name: &'static str, pass: bool, detail: impl Into<String>) -> Self {
        SuiteResult { name, pass, detail: detail.into() }
    }
}

fn outcome(name: &'static str, r: Result<String>, failures: Vec<String>) -> SuiteResult {
    match r {
        Err(e) => SuiteResult::new(name, false, format!("error: {e}")),
        Ok(ok) if failures.is_empty() => SuiteResult::new(name, true, ok),
        Ok(_) => SuiteResult::new(name, false, failures.join("; ")),
    }
}

/// Analytic ML gradient against central differences at perturbed points.
/// Relative error `|fd − g| / max(|g|, 1e-3)` must stay below 1e-5.
pub fn gradient_suite(points_per_model: usize) -> SuiteResult {
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    let r = (|| -> Result<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        for position in Position::ALL {
            for kind in study::assumed_kinds(position, Estimator::Ml) {
                for k in [3, 5] {
                    let dgp_kind = if study::dgp_kinds(position).contains(&kind) { kind } else { ConstructKind::Composite };
                    let cell = GridCell { position, n: 100, k, sigma: 0.3, homogeneous: true };
                    let pop = dgp::build_population(&cell.with_kind(dgp_kind))?;
                    let spec = study::study_spec(position, kind, k)?;
                    let start = ml::start_values(&ParamTable::from_spec(&spec)?, &pop.sigma0)?;
                    let obj = MlObjective::new(&start, &pop.sigma0)?;
                    let base = DVector::from_vec(start.param_values());
                    let mut done = 0;
                    let mut tries = 0;
                    while done < points_per_model && tries < 50 * points_per_model {
                        tries += 1;
                        let x = base.map(|v| v + rng.random_range(-0.05..0.05));
                        let Some(g) = obj.analytic_gradient(&x) else { continue };
                        let h = 1e-6;
                        for i in 0..x.len() {
                            let mut xp = x.clone();
                            xp[i] += h;
                            let mut xm = x.clone();
                            xm[i] -= h;
                            let (Some(fp), Some(fm)) = (obj.value(&xp), obj.value(&xm)) else { continue };
                            let rel = ((fp - fm) / (2.0 * h) - g[i]).abs() / g[i].abs().max(1e-3);
                            worst = worst.max(rel);
                            if !(rel < 1e-5) {
                                failures.push(format!("{position}/{kind}/K={k} param {i}: rel {rel:.2e}"));
                            }
                        }
                        done += 1;
                        checked += 1;
                    }
                }
            }
        }
        Ok(format!("{checked} points, worst relative error {worst:.2e}"))
    })();
    outcome("gradient", r, failures)
}

/// Every population covariance of the design is positive definite.
pub fn population_pd_suite() -> SuiteResult {
    let mut failures = Vec::new();
    let r = (|| -> Result<String> {
        let mut count = 0;
        let mut min_eig = f64::INFINITY;
        for cell in GridCell::grid() {
            for kind in study::dgp_kinds(cell.position) {
                let pop = dgp::build_population(&cell.with_kind(kind))?;
                let e = linalg::min_eigenvalue(&pop.sigma0);
                min_eig = min_eig.min(e);
                if !(e > 0.0) {
                    failures.push(format!("cell {} {kind}: min eigenvalue {e:.3e}", cell.id()));
                }
                count += 1;
            }
        }
        Ok(format!("{count} populations, smallest eigenvalue {min_eig:.4}"))
    })();
    outcome("population_pd", r, failures)
}

fn random_pd(rng: &mut impl Rng, k: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    let mut m = &a * a.transpose() + DMatrix::identity(k, k) * 0.2;
    linalg::symmetrize(&mut m);
    m
}

/// A single composite block in H–O form saturates its indicator covariance:
/// the ML discrepancy is zero for arbitrary PD matrices.
pub fn hospec_saturation_suite(cases: usize) -> SuiteResult {
    let mut failures = Vec::new();
    let r = (|| -> Result<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut worst = 0.0f64;
        for case in 0..cases {
            let k = 2 + case % 6;
            let s = random_pd(&mut rng, k);
            let names: Vec<String> = (0..k).map(|i| format!("y{}", i + 1)).collect();
            // without other blocks the weight anchors are not identified; pin them
            let anchors =
                (1..k).map(|j| Constraint::fix(MatrixId::Lambda, &names[j - 1], &excrescent_name("c", j), 1.0)).collect();
            let spec = ModelSpec::new(
                vec![Construct { name: "c".into(), kind: ConstructKind::Composite, exogenous: true }],
                BTreeMap::from([("c".to_string(), names)]),
                vec![],
                anchors,
            )?;
            let df = degrees_of_freedom(&spec)?;
            let fit = ml::fit_ml(&spec, &s, 200)?;
            worst = worst.max(fit.f_min);
            if df != 0 || !(fit.f_min < 1e-10) {
                failures.push(format!("case {case} (K={k}): df {df}, F {:.3e}", fit.f_min));
            }
        }
        Ok(format!("{cases} blocks, largest F {worst:.2e}"))
    })();
    outcome("hospec_saturation", r, failures)
}

/// Closed-form free-parameter counts for the study models.
pub fn hand_count_params(position: Position, kind: ConstructKind, k: usize) -> usize {
    let outer = 21 + 3;
    let own = match (kind, position) {
        (ConstructKind::CausalFormative, _) => k * (k + 1) / 2 + (k - 1) + 1 + 3,
        (ConstructKind::LatentVariable, Position::Exogenous) => (k - 1) + k + 1 + 3,
        (ConstructKind::LatentVariable, Position::Endogenous) => (k - 1) + k + 1 + 6,
        (ConstructKind::Composite, Position::Exogenous) if k == 1 => 1 + 3,
        (ConstructKind::Composite, Position::Exogenous) => k * (k + 1) / 2 + (k - 1) + 3,
        (ConstructKind::Composite, Position::Endogenous) => k * (k + 1) / 2 + (k - 1) + 6,
    };
    outer + own
}

/// Degrees of freedom agree with hand counts for all estimable study models.
pub fn df_suite() -> SuiteResult {
    let mut failures = Vec::new();
    let r = (|| -> Result<String> {
        let mut count = 0;
        for position in Position::ALL {
            for kind in study::assumed_kinds(position, Estimator::Ml) {
                for k in dgp::INDICATOR_COUNTS {
                    let spec = study::study_spec(position, kind, k)?;
                    let p = k + 12;
                    let want = (p * (p + 1) / 2) as i64 - hand_count_params(position, kind, k) as i64;
                    let got = degrees_of_freedom(&spec)?;
                    if got != want {
                        failures.push(format!("{position}/{kind}/K={k}: df {got}, hand count {want}"));
                    }
                    count += 1;
                }
            }
        }
        Ok(format!("{count} models"))
    })();
    outcome("df_hand_count", r, failures)
}

/// CR and AVE of four indicators with loading 0.8 and error variance 0.36.
pub fn cr_ave_suite() -> SuiteResult {
    let (cr, ave) = fit::cr_ave(&[0.8; 4], &[0.36; 4]);
    let pass = (cr - 0.87671).abs() < 5e-6 && (ave - 0.64).abs() < 1e-12;
    SuiteResult::new("cr_ave", pass, format!("CR {cr:.5}, AVE {ave:.5}"))
}

/// Reference fit reports with their flags under the conventional cutoffs
/// (alpha 0.05, SRMR 0.08, CFI 0.95, RMSEA 0.05, CR 0.7, AVE 0.5).
fn flag_cases() -> Vec<(FitReport, [bool; 6])> {
    let report = |p: f64, srmr: f64, cfi: f64, rmsea: f64, cr: f64, ave: f64| FitReport {
        t: Some(10.0),
        df: 10,
        p_value: Some(p),
        srmr: Some(srmr),
        cfi: Some(cfi),
        rmsea: Some(rmsea),
        cr: BTreeMap::from([("a".to_string(), cr), ("b".to_string(), 0.95)]),
        ave: BTreeMap::from([("a".to_string(), ave), ("b".to_string(), 0.9)]),
        flags: BTreeMap::new(),
    };
    vec![
        (report(0.5, 0.03, 0.99, 0.01, 0.88, 0.64), [false; 6]),
        (report(0.01, 0.12, 0.90, 0.09, 0.60, 0.40), [true; 6]),
        (report(0.04, 0.07, 0.96, 0.06, 0.72, 0.48), [true, false, false, true, false, true]),
        (report(0.06, 0.09, 0.94, 0.04, 0.69, 0.52), [false, true, true, false, true, false]),
    ]
}

/// Flags computed under `th` must match the reference decisions. A corrupted
/// threshold table fails this suite.
pub fn fit_flags_suite(th: &Thresholds) -> SuiteResult {
    let mut failures = Vec::new();
    for (i, (rep, want)) in flag_cases().into_iter().enumerate() {
        let got = fit::flags(&rep, th);
        for (c, w) in Criterion::ALL.iter().zip(want) {
            if got[c] != Some(w) {
                failures.push(format!("case {i} {}: got {:?}, want {w}", c.as_str(), got[c]));
            }
        }
    }
    outcome("fit_flags", Ok("4 reference reports".into()), failures)
}

/// Fisher-consistency matrix for one estimator over the distinct design cells.
pub fn fisher_suite(estimator: Estimator, cells: &[GridCell]) -> SuiteResult {
    let name = match estimator {
        Estimator::Ml => "fisher_ml",
        Estimator::Pls => "fisher_pls",
    };
    let r = mc::fisher_matrix(cells, estimator, 1);
    match r {
        Err(e) => SuiteResult::new(name, false, format!("error: {e}")),
        Ok(rows) => {
            let failures: Vec<String> = rows
                .iter()
                .filter(|o| !o.pass)
                .map(|o| {
                    let c = o.condition.cell;
                    format!(
                        "{}/K={}/sigma={}/{} dgp {} assumed {}: deviation {:.2e} ({})",
                        c.position,
                        c.k,
                        c.sigma,
                        if c.homogeneous { "hom" } else { "het" },
                        o.condition.dgp_kind,
                        o.assumed_kind,
                        o.max_deviation,
                        o.reasons.iter().map(|r| r.code()).collect::<Vec<_>>().join(";")
                    )
                })
                .collect();
            let consistent = rows.iter().filter(|o| o.expected_consistent).count();
            outcome(name, Ok(format!("{} combinations, {consistent} expected exact", rows.len())), failures)
        }
    }
}

/// Renders records of a small plan to CSV bytes.
pub fn plan_csv(plan: &StudyPlan, workers: usize) -> Result<Vec<u8>> {
    let records = mc::run_plan(plan, workers)?;
    let summary = mc::aggregate(&records, plan.target_admissible);
    let mut buf = Vec::new();
    output::write_records(&mut buf, &records)?;
    output::write_summary(&mut buf, &summary)?;
    Ok(buf)
}

/// Small seeded plan used by the determinism checks.
pub fn determinism_plan() -> StudyPlan {
    let mut plan = StudyPlan::full(Estimator::Ml, 42);
    plan.cells = vec![
        GridCell { position: Position::Exogenous, n: 100, k: 3, sigma: 0.3, homogeneous: true },
        GridCell { position: Position::Endogenous, n: 100, k: 3, sigma: 0.3, homogeneous: false },
    ];
    plan.target_admissible = 5;
    plan
}

/// Same plan and seed give byte-identical CSV output with one and with
/// several worker threads.
pub fn determinism_suite() -> SuiteResult {
    let plan = determinism_plan();
    let r = (|| -> Result<(bool, usize)> {
        let a = plan_csv(&plan, 1)?;
        let b = plan_csv(&plan, 4)?;
        let c = plan_csv(&plan, 1)?;
        Ok((a == b && a == c, a.len()))
    })();
    match r {
        Ok((true, len)) => SuiteResult::new("determinism", true, format!("{len} bytes identical across runs and worker counts")),
        Ok((false, _)) => SuiteResult::new("determinism", false, "CSV output differs between runs"),
        Err(e) => SuiteResult::new("determinism", false, format!("error: {e}")),
    }
}

/// One cell per (position, K, σ, homogeneity) with n = 100.
pub fn distinct_cells() -> Vec<GridCell> {
    GridCell::grid().into_iter().filter(|c| c.n == dgp::SAMPLE_SIZES[0]).collect()
}

/// The fast analytic audits.
pub fn fast_suites(th: &Thresholds) -> Vec<SuiteResult> {
    vec![
        gradient_suite(3),
        population_pd_suite(),
        hospec_saturation_suite(50),
        df_suite(),
        cr_ave_suite(),
        fit_flags_suite(th),
        determinism_suite(),
    ]
}
