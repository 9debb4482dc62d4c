//! Run configuration: JSON file, command-line overrides and grid filters.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use icmsim_core::dgp::GridCell;
use icmsim_core::fit::Thresholds;
use icmsim_core::mc::StudyPlan;
use icmsim_core::study::{Estimator, Position};
use icmsim_core::ConstructKind;

/// Contents of a `--config` file. Every field is optional; command-line
/// flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub estimator: Option<Estimator>,
    pub master_seed: Option<u64>,
    pub target_admissible: Option<usize>,
    pub attempt_cap: Option<usize>,
    pub thresholds: Option<Thresholds>,
    pub phi_correlation: Option<f64>,
    /// Filter expressions as on the command line, e.g. `"n=100,300"`.
    #[serde(default)]
    pub filters: Vec<String>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

/// Conjunction of `key=v1,v2,...` filters over grid cells and kinds.
#[derive(Debug, Default, Clone)]
pub struct Filters {
    values: BTreeMap<String, Vec<String>>,
}

const KEYS: [&str; 8] = ["id", "position", "n", "k", "sigma", "correlation", "dgp", "assumed"];

fn canonical_key(k: &str) -> Option<&'static str> {
    let k = k.trim().to_ascii_lowercase();
    let k = match k.as_str() {
        "condition" | "condition_id" => "id",
        "dgp_kind" => "dgp",
        "assumed_kind" => "assumed",
        "homogeneity" | "hom" => "correlation",
        other => other,
    };
    KEYS.iter().copied().find(|c| *c == k)
}

impl Filters {
    pub fn parse<'a>(exprs: impl IntoIterator<Item = &'a String>) -> Result<Self> {
        let mut f = Filters::default();
        for e in exprs {
            let (k, v) = e.split_once('=').ok_or_else(|| anyhow!("filter `{e}` is not of the form key=value"))?;
            let key = canonical_key(k).ok_or_else(|| anyhow!("unknown filter key `{k}` (expected one of {})", KEYS.join(", ")))?;
            let vals: Vec<String> = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            if vals.is_empty() {
                bail!("filter `{e}` has no values");
            }
            for val in &vals {
                check_value(key, val)?;
            }
            f.values.entry(key.to_string()).or_default().extend(vals);
        }
        Ok(f)
    }

    fn allows(&self, key: &str, pred: impl Fn(&str) -> bool) -> bool {
        self.values.get(key).is_none_or(|vs| vs.iter().any(|v| pred(v)))
    }

    pub fn cell(&self, c: &GridCell) -> bool {
        self.allows("id", |v| v.parse() == Ok(c.id()))
            && self.allows("position", |v| Position::parse(v) == Some(c.position))
            && self.allows("n", |v| v.parse() == Ok(c.n))
            && self.allows("k", |v| v.parse() == Ok(c.k))
            && self.allows("sigma", |v| v.parse::<f64>().is_ok_and(|s| (s - c.sigma).abs() < 1e-9))
            && self.allows("correlation", |v| parse_homogeneous(v) == Some(c.homogeneous))
    }

    pub fn cells(&self) -> Vec<GridCell> {
        GridCell::grid().into_iter().filter(|c| self.cell(c)).collect()
    }

    pub fn kinds(&self, key: &str) -> Vec<ConstructKind> {
        ConstructKind::ALL.into_iter().filter(|k| self.allows(key, |v| ConstructKind::parse(v) == Some(*k))).collect()
    }
}

fn parse_homogeneous(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "homogeneous" | "hom" | "true" | "1" => Some(true),
        "heterogeneous" | "het" | "false" | "0" => Some(false),
        _ => None,
    }
}

fn check_value(key: &str, v: &str) -> Result<()> {
    let ok = match key {
        "id" | "n" | "k" => v.parse::<usize>().is_ok(),
        "sigma" => v.parse::<f64>().is_ok(),
        "position" => Position::parse(v).is_some(),
        "correlation" => parse_homogeneous(v).is_some(),
        _ => ConstructKind::parse(v).is_some(),
    };
    if ok {
        Ok(())
    } else {
        Err(anyhow!("invalid value `{v}` for filter `{key}`"))
    }
}

/// Command-line settings shared by the subcommands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub estimator: Option<Estimator>,
    pub filters: Vec<String>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub plan: StudyPlan,
    pub out: Option<PathBuf>,
    pub workers: usize,
}

pub fn resolve(config: RunConfig, o: &Overrides) -> Result<Resolved> {
    let estimator = o.estimator.or(config.estimator).unwrap_or(Estimator::Ml);
    let mut exprs = config.filters.clone();
    exprs.extend(o.filters.iter().cloned());
    let filters = Filters::parse(exprs.iter())?;
    let mut plan = StudyPlan::full(estimator, o.seed.or(config.master_seed).unwrap_or(0));
    plan.cells = filters.cells();
    plan.dgp_kinds = filters.kinds("dgp");
    plan.assumed_kinds = filters.kinds("assumed");
    if let Some(n) = o.reps.or(config.target_admissible) {
        plan.target_admissible = n;
    }
    if let Some(c) = config.attempt_cap {
        plan.attempt_cap = c;
    }
    if let Some(t) = config.thresholds {
        plan.thresholds = t;
    }
    if let Some(p) = config.phi_correlation {
        plan.phi_correlation = p;
    }
    if plan.cells.is_empty() {
        bail!("filters select no design condition");
    }
    Ok(Resolved {
        plan,
        out: o.out.clone().or(config.out),
        workers: o.workers.or(config.workers).unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(exprs: &[&str]) -> Result<Filters> {
        let v: Vec<String> = exprs.iter().map(|s| s.to_string()).collect();
        Filters::parse(v.iter())
    }

    #[test]
    fn filters_select_subgrids() {
        assert_eq!(f(&[]).unwrap().cells().len(), 108);
        assert_eq!(f(&["n=100"]).unwrap().cells().len(), 36);
        assert_eq!(f(&["n=100,300", "K=3"]).unwrap().cells().len(), 24);
        assert_eq!(f(&["position=endogenous", "correlation=hom", "sigma=0.5"]).unwrap().cells().len(), 9);
        assert_eq!(f(&["dgp=composite"]).unwrap().kinds("dgp"), vec![ConstructKind::Composite]);
        assert_eq!(f(&[]).unwrap().kinds("assumed").len(), 3);
    }

    #[test]
    fn bad_filters_rejected() {
        assert!(f(&["n"]).is_err());
        assert!(f(&["colour=red"]).is_err());
        assert!(f(&["n=abc"]).is_err());
        assert!(f(&["dgp=reflective"]).is_err());
    }

    #[test]
    fn empty_selection_rejected() {
        let o = Overrides { filters: vec!["n=42".into()], ..Default::default() };
        assert!(resolve(RunConfig::default(), &o).is_err());
    }

    #[test]
    fn flags_override_config() {
        let cfg: RunConfig = serde_json::from_str(r#"{"estimator":"pls","master_seed":3,"target_admissible":7}"#).unwrap();
        let o = Overrides { seed: Some(9), ..Default::default() };
        let r = resolve(cfg, &o).unwrap();
        assert_eq!((r.plan.estimator, r.plan.master_seed, r.plan.target_admissible), (Estimator::Pls, 9, 7));
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus":1}"#).is_err());
    }
}
