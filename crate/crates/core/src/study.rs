//! The simulation study's structural model: one focal construct `eta_star`
//! with `K` indicators and three fixed latent variables `eta1..eta3` with
//! four indicators each. The focal construct is either exogenous (it predicts
//! the three latents) or endogenous (it is predicted by them).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SemError};
use crate::model_ir::{Construct, ConstructKind, ModelSpec, Path};

pub const FOCAL: &str = "eta_star";
pub const OUTER: [&str; 3] = ["eta1", "eta2", "eta3"];
pub const OUTER_INDICATORS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    Exogenous,
    Endogenous,
}

impl Position {
    pub const ALL: [Position; 2] = [Position::Exogenous, Position::Endogenous];

    pub fn as_str(self) -> &'static str {
        match self {
            Position::Exogenous => "exogenous",
            Position::Endogenous => "endogenous",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exogenous" | "exo" => Some(Position::Exogenous),
            "endogenous" | "endo" => Some(Position::Endogenous),
            _ => None,
        }
    }
}

impl std::fmt::Display for Position {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn focal_indicator(i: usize) -> String {
    format!("xs{}", i + 1)
}

pub fn outer_indicator(j: usize, i: usize) -> String {
    format!("x{}_{}", j + 1, i + 1)
}

/// Observed variable order shared by populations, samples and fitted models.
pub fn indicator_names(k: usize) -> Vec<String> {
    let mut v: Vec<String> = (0..k).map(focal_indicator).collect();
    for j in 0..3 {
        v.extend((0..OUTER_INDICATORS).map(|i| outer_indicator(j, i)));
    }
    v
}

/// Specification of the study model with `eta_star` of the given kind.
///
/// A causal-formative focal construct in the endogenous position would emit
/// no paths and is rejected.
pub fn study_spec(position: Position, kind: ConstructKind, k: usize) -> Result<ModelSpec> {
    if k == 0 {
        return Err(SemError::InvalidSpec("focal construct needs at least one indicator".into()));
    }
    if position == Position::Endogenous && kind == ConstructKind::CausalFormative {
        return Err(SemError::Excluded("causal-formative construct in the endogenous position".into()));
    }
    let exo = position == Position::Exogenous;
    let mut constructs = vec![Construct { name: FOCAL.into(), kind, exogenous: exo }];
    let mut indicators = BTreeMap::new();
    indicators.insert(FOCAL.to_string(), (0..k).map(focal_indicator).collect::<Vec<_>>());
    let mut paths = Vec::new();
    for (j, name) in OUTER.iter().enumerate() {
        constructs.push(Construct { name: name.to_string(), kind: ConstructKind::LatentVariable, exogenous: !exo });
        indicators.insert(name.to_string(), (0..OUTER_INDICATORS).map(|i| outer_indicator(j, i)).collect());
        let (from, to) = if exo { (FOCAL, *name) } else { (*name, FOCAL) };
        paths.push(Path { from: from.into(), to: to.into() });
    }
    ModelSpec::new(constructs, indicators, paths, vec![])
}

/// Assumed kinds that are estimable for an estimator at a position.
pub fn assumed_kinds(position: Position, estimator: Estimator) -> Vec<ConstructKind> {
    ConstructKind::ALL
        .into_iter()
        .filter(|&k| !(k == ConstructKind::CausalFormative && (position == Position::Endogenous || estimator == Estimator::Pls)))
        .collect()
}

/// Data-generating kinds available at a position.
pub fn dgp_kinds(position: Position) -> Vec<ConstructKind> {
    ConstructKind::ALL
        .into_iter()
        .filter(|&k| !(k == ConstructKind::CausalFormative && position == Position::Endogenous))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Ml,
    Pls,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Ml => "ml",
            Estimator::Pls => "pls",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ml" => Some(Estimator::Ml),
            "pls" => Some(Estimator::Pls),
            _ => None,
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Standardized paths between the focal construct and `eta1..eta3`, in that order.
pub fn focal_paths(std: &BTreeMap<(String, String), f64>, position: Position) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    for (j, name) in OUTER.iter().enumerate() {
        let key = match position {
            Position::Exogenous => (FOCAL.to_string(), name.to_string()),
            Position::Endogenous => (name.to_string(), FOCAL.to_string()),
        };
        out[j] = *std
            .get(&key)
            .ok_or_else(|| SemError::InvalidSpec(format!("no path between {} and {}", key.0, key.1)))?;
    }
    Ok(out)
}
