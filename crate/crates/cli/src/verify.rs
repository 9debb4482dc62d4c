//! `verify`: invariant suites plus a seeded quick Monte Carlo checked
//! against stored summary hashes.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

use icmsim_core::audit::{self, SuiteResult};
use icmsim_core::dgp::GridCell;
use icmsim_core::fit::Thresholds;
use icmsim_core::mc::{self, StudyPlan};
use icmsim_core::output;
use icmsim_core::study::{Estimator, Position};
use icmsim_core::ConstructKind;

pub struct Options {
    pub thresholds: Option<PathBuf>,
    pub bless: bool,
    pub golden: PathBuf,
    pub skip_mc: bool,
    pub skip_fisher: bool,
    pub workers: usize,
}

pub const QUICK_REPS: usize = 200;
const QUICK_SEED: u64 = 7;

/// Four cells, latent and composite DGPs and assumed models, ML.
pub fn quick_plan() -> StudyPlan {
    let cell = |position, sigma, homogeneous| GridCell { position, n: 100, k: 3, sigma, homogeneous };
    StudyPlan {
        cells: vec![
            cell(Position::Exogenous, 0.3, true),
            cell(Position::Exogenous, 0.5, false),
            cell(Position::Endogenous, 0.3, true),
            cell(Position::Endogenous, 0.1, false),
        ],
        dgp_kinds: vec![ConstructKind::LatentVariable, ConstructKind::Composite],
        assumed_kinds: vec![ConstructKind::LatentVariable, ConstructKind::Composite],
        target_admissible: QUICK_REPS,
        ..StudyPlan::full(Estimator::Ml, QUICK_SEED)
    }
}

/// SHA-256 of each condition's summary.csv rows.
fn summary_hashes(workers: usize) -> Result<BTreeMap<String, String>> {
    let plan = quick_plan();
    let records = mc::run_plan(&plan, workers)?;
    let summary = mc::aggregate(&records, plan.target_admissible);
    let mut by_cell: BTreeMap<usize, Vec<_>> = BTreeMap::new();
    for s in summary {
        by_cell.entry(s.key.condition_id).or_default().push(s);
    }
    let mut out = BTreeMap::new();
    for (id, rows) in by_cell {
        let mut buf = Vec::new();
        output::write_summary(&mut buf, &rows)?;
        let hex: String = Sha256::digest(&buf).iter().map(|b| format!("{b:02x}")).collect();
        out.insert(format!("condition_{id:03}"), hex);
    }
    Ok(out)
}

fn golden_suite(o: &Options) -> SuiteResult {
    let name = "quick_mc_golden";
    let got = match summary_hashes(o.workers) {
        Ok(h) => h,
        Err(e) => return SuiteResult { name, pass: false, detail: format!("error: {e}") },
    };
    if o.bless {
        let res = (|| -> Result<()> {
            if let Some(dir) = o.golden.parent() {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&o.golden, serde_json::to_string_pretty(&got)? + "\n")
                .with_context(|| format!("writing {}", o.golden.display()))
        })();
        return match res {
            Ok(()) => SuiteResult { name, pass: true, detail: format!("blessed {} hashes", got.len()) },
            Err(e) => SuiteResult { name, pass: false, detail: format!("error: {e:#}") },
        };
    }
    let want: BTreeMap<String, String> = match std::fs::read_to_string(&o.golden)
        .map_err(anyhow::Error::from)
        .and_then(|t| Ok(serde_json::from_str(&t)?))
    {
        Ok(w) => w,
        Err(e) => {
            return SuiteResult { name, pass: false, detail: format!("cannot read {}: {e} (run with --bless)", o.golden.display()) }
        }
    };
    let mismatched: Vec<&String> = got.keys().filter(|k| want.get(*k) != got.get(*k)).collect();
    if mismatched.is_empty() && want.len() == got.len() {
        SuiteResult { name, pass: true, detail: format!("{} summary hashes match ({QUICK_REPS} reps)", got.len()) }
    } else {
        SuiteResult { name, pass: false, detail: format!("mismatched: {mismatched:?}") }
    }
}

pub fn run(o: &Options) -> Result<ExitCode> {
    let th: Thresholds = match &o.thresholds {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("invalid thresholds {}", p.display()))?,
        None => Thresholds::default(),
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(o.workers).build()?;
    let mut results = pool.install(|| audit::fast_suites(&th));
    if !o.skip_fisher {
        let cells = audit::distinct_cells();
        results.push(pool.install(|| audit::fisher_suite(Estimator::Ml, &cells)));
        results.push(pool.install(|| audit::fisher_suite(Estimator::Pls, &cells)));
    }
    if !o.skip_mc {
        results.push(golden_suite(o));
    }
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &results {
        println!("{:width$}  {}  {}", r.name, if r.pass { "PASS" } else { "FAIL" }, r.detail);
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    println!("{} suites, {failed} failed", results.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
