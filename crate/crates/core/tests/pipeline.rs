use std::collections::BTreeMap;

use icmsim_core::dgp::GridCell;
use icmsim_core::mc::{self, StudyPlan};
use icmsim_core::output;
use icmsim_core::study::{Estimator, Position};
use icmsim_core::ConstructKind;

fn small_plan(estimator: Estimator) -> StudyPlan {
    StudyPlan {
        cells: vec![
            GridCell { position: Position::Exogenous, n: 100, k: 3, sigma: 0.5, homogeneous: true },
            GridCell { position: Position::Endogenous, n: 300, k: 5, sigma: 0.3, homogeneous: false },
        ],
        target_admissible: 6,
        ..StudyPlan::full(estimator, 99)
    }
}

#[test]
fn assumed_models_share_samples() {
    for est in [Estimator::Ml, Estimator::Pls] {
        let records = mc::run_plan(&small_plan(est), 0).unwrap();
        let mut by_rep: BTreeMap<(usize, ConstructKind, u64), Vec<&str>> = BTreeMap::new();
        for r in &records {
            by_rep.entry((r.condition_id, r.dgp_kind, r.rep)).or_default().push(&r.sample_hash);
        }
        for hashes in by_rep.values() {
            assert!(hashes.windows(2).all(|w| w[0] == w[1]));
        }
        // distinct reps draw distinct samples
        let mut seen: Vec<&str> = records.iter().map(|r| r.sample_hash.as_str()).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), by_rep.len());
    }
}

#[test]
fn each_assumed_model_reaches_its_target() {
    let plan = small_plan(Estimator::Ml);
    let records = mc::run_plan(&plan, 0).unwrap();
    let summary = mc::aggregate(&records, plan.target_admissible);
    // exogenous: 3 DGPs x 3 assumed; endogenous: 2 x 2; three paths each
    assert_eq!(summary.len(), (9 + 4) * 3);
    for s in &summary {
        assert_eq!(s.n_admissible, plan.target_admissible, "{:?}", s.key);
        assert!(!s.truncated && s.estimable);
        assert!(s.n_attempts >= s.n_admissible);
        assert!((s.mse - s.bias * s.bias - s.variance).abs() < 1e-15);
    }
}

#[test]
fn attempt_cap_truncates() {
    let mut plan = small_plan(Estimator::Ml);
    plan.cells.truncate(1);
    plan.dgp_kinds = vec![ConstructKind::Composite];
    plan.assumed_kinds = vec![ConstructKind::CausalFormative];
    plan.target_admissible = 40;
    plan.attempt_cap = 1;
    let records = mc::run_plan(&plan, 0).unwrap();
    let summary = mc::aggregate(&records, plan.target_admissible);
    assert!(records.len() <= 40);
    let s = &summary[0];
    assert_eq!(s.n_attempts, records.len());
    assert_eq!(s.truncated, s.n_admissible < 40);
}

#[test]
fn csv_outputs_are_consistent() {
    let plan = small_plan(Estimator::Pls);
    let records = mc::run_plan(&plan, 0).unwrap();
    let summary = mc::aggregate(&records, plan.target_admissible);
    let dir = std::env::temp_dir().join(format!("icmsim-pipeline-{}", std::process::id()));
    output::write_all(&dir, &records, &summary).unwrap();
    let read = |name: &str| std::fs::read_to_string(dir.join(name)).unwrap();
    let rec = read("records.csv");
    assert_eq!(rec.lines().count(), records.len() + 1);
    assert!(rec.lines().skip(1).all(|l| l.split(',').count() == output::RECORD_HEADER.len()));
    assert_eq!(read("summary.csv").lines().count(), summary.len() + 1);
    assert_eq!(read("plotdata_inadmissible.csv").lines().count(), summary.len() / 3 + 1);
    assert_eq!(read("plotdata_flags.csv").lines().count(), summary.len() / 3 * 6 + 1);
    std::fs::remove_dir_all(&dir).unwrap();
}
