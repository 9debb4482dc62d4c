use std::path::Path;
use std::process::{Command, Output};

fn icmsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_icmsim")).args(args).output().expect("binary runs")
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn run_twice_gives_identical_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let args = ["run", "--filter", "n=100", "--filter", "id=1,2", "--reps", "4", "--seed", "42"];
    let o1 = icmsim(&[&args[..], &["--out", a.to_str().unwrap(), "--workers", "1"]].concat());
    assert!(o1.status.success(), "{}", String::from_utf8_lossy(&o1.stderr));
    let o2 = icmsim(&[&args[..], &["--out", b.to_str().unwrap(), "--workers", "3"]].concat());
    assert!(o2.status.success());
    let fa = read_all(&a);
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        ["plotdata_bias.csv", "plotdata_flags.csv", "plotdata_inadmissible.csv", "records.csv", "summary.csv"]
    );
    assert_eq!(fa, read_all(&b));
    let records = String::from_utf8(fa[3].1.clone()).unwrap();
    let header = records.lines().next().unwrap();
    assert!(header.starts_with("condition_id,position,dgp_kind,assumed_kind,estimator,rep,seed,admissible,reason_codes,beta1_std"));
    assert!(header.ends_with("flag_cr,flag_ave,sample_hash"));
}

#[test]
fn shared_samples_within_replication() {
    let tmp = tempfile::tempdir().unwrap();
    let o = icmsim(&["run", "--filter", "id=1", "--reps", "3", "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(tmp.path().join("records.csv")).unwrap();
    let mut by_rep = std::collections::BTreeMap::<(String, String), Vec<String>>::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        by_rep.entry((f[2].to_string(), f[5].to_string())).or_default().push(f[27].to_string());
    }
    for hashes in by_rep.values() {
        assert!(hashes.windows(2).all(|w| w[0] == w[1]), "{hashes:?}");
    }
}

#[test]
fn list_conditions_has_108_rows() {
    let o = icmsim(&["list-conditions"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 108);
    assert_eq!(text.lines().nth(1).unwrap(), "1,exogenous,100,3,0.1,homogeneous");
}

#[test]
fn fisher_rows_pass() {
    let o = icmsim(&["fisher", "--estimator", "ml", "--filter", "K=3", "--filter", "sigma=0.3", "--filter", "correlation=hom"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<Vec<String>> = text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    // exogenous 3 DGPs x 3 assumed, endogenous 2 x 2
    assert_eq!(rows.len(), 13);
    for r in &rows {
        assert_eq!(r.last().unwrap(), "1", "{r:?}");
        let consistent = r[4] == r[5] || (r[0] == "exogenous" && r[5] == "causal_formative");
        assert_eq!(r[7], if consistent { "1" } else { "0" }, "{r:?}");
    }
}

#[test]
fn corrupted_thresholds_fail_verify() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("th.json");
    std::fs::write(&p, r#"{"alpha":0.05,"srmr":0.5,"cfi":0.95,"rmsea":0.05,"cr":0.7,"ave":0.5}"#).unwrap();
    let o = icmsim(&["verify", "--skip-mc", "--skip-fisher", "--thresholds", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("fit_flags") && l.contains("FAIL")), "{text}");
    let ok = icmsim(&["verify", "--skip-mc", "--skip-fisher"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
}

#[test]
fn verify_matches_golden_hashes() {
    let o = icmsim(&["verify", "--skip-fisher"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(o.status.success(), "{text}");
    assert!(text.lines().any(|l| l.starts_with("quick_mc_golden") && l.contains("PASS")));
}

#[test]
fn bad_input_is_rejected() {
    assert_eq!(icmsim(&["run", "--filter", "n=42"]).status.code(), Some(2));
    assert_eq!(icmsim(&["population", "--filter", "n=100"]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"replications": 5}"#).unwrap();
    assert_eq!(icmsim(&["list-conditions", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn population_dump() {
    let o = icmsim(&["population", "--filter", "id=1", "--filter", "dgp=latent"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["sigma0"]["rows"], 15);
    let paths: Vec<f64> = serde_json::from_value(v["std_paths0"].clone()).unwrap();
    assert_eq!(paths, vec![0.4, 0.3, 0.2]);
}
