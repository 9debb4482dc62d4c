//! Declarative model specifications and the all-construct (Λ, B, Ψ, Θ)
//! parameterization.
//!
//! Every construct kind is compiled into the same four matrices:
//! latent variables directly, causal-formative constructs through
//! single-indicator augmentation, and composites through the
//! Henseler–Ogasawara block (see [`crate::hospec`]). The implied covariance is
//! `Σ = Λ (I − B)⁻¹ Ψ (I − B)⁻ᵀ Λᵀ + Θ`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SemError};
use crate::hospec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstructKind {
    LatentVariable,
    CausalFormative,
    Composite,
}

impl ConstructKind {
    pub const ALL: [ConstructKind; 3] = [
        ConstructKind::CausalFormative,
        ConstructKind::Composite,
        ConstructKind::LatentVariable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConstructKind::LatentVariable => "latent",
            ConstructKind::CausalFormative => "causal_formative",
            ConstructKind::Composite => "composite",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "latent" | "latent_variable" | "lv" => Some(ConstructKind::LatentVariable),
            "causal_formative" | "formative" | "cf" => Some(ConstructKind::CausalFormative),
            "composite" | "co" => Some(ConstructKind::Composite),
            _ => None,
        }
    }
}

impl std::fmt::Display for ConstructKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Construct {
    pub name: String,
    pub kind: ConstructKind,
    pub exogenous: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixId {
    Lambda,
    Beta,
    Psi,
    Theta,
}

impl MatrixId {
    fn index(self) -> usize {
        match self {
            MatrixId::Lambda => 0,
            MatrixId::Beta => 1,
            MatrixId::Psi => 2,
            MatrixId::Theta => 3,
        }
    }

    pub fn is_symmetric(self) -> bool {
        matches!(self, MatrixId::Psi | MatrixId::Theta)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MatrixId::Lambda => "lambda",
            MatrixId::Beta => "beta",
            MatrixId::Psi => "psi",
            MatrixId::Theta => "theta",
        }
    }
}

/// Override of one parameter cell. Rows and columns are variable names:
/// `lambda[indicator, construct]`, `beta[target, source]`,
/// `psi[construct, construct]`, `theta[indicator, indicator]`.
/// A `null` value frees the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub matrix: MatrixId,
    pub row: String,
    pub col: String,
    pub value: Option<f64>,
}

impl Constraint {
    pub fn fix(matrix: MatrixId, row: &str, col: &str, value: f64) -> Self {
        Constraint { matrix, row: row.into(), col: col.into(), value: Some(value) }
    }

    pub fn free(matrix: MatrixId, row: &str, col: &str) -> Self {
        Constraint { matrix, row: row.into(), col: col.into(), value: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    pub from: String,
    pub to: String,
}

/// Declarative SEM description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    constructs: Vec<Construct>,
    indicators: BTreeMap<String, Vec<String>>,
    paths: Vec<Path>,
    #[serde(default)]
    constraints: Vec<Constraint>,
}

/// Why a latent variable of the compiled table exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LatentOrigin {
    /// A construct of the user's specification.
    Construct { kind: ConstructKind },
    /// Perfectly measured stand-in for a causal-formative indicator.
    FormativeIndicator { construct: String },
    /// H–O excrescent variable `j` (1-based) of a composite.
    Excrescent { composite: String, j: usize },
}

impl ModelSpec {
    pub fn new(
        constructs: Vec<Construct>,
        indicators: BTreeMap<String, Vec<String>>,
        paths: Vec<Path>,
        constraints: Vec<Constraint>,
    ) -> Result<Self> {
        let spec = ModelSpec { constructs, indicators, paths, constraints };
        spec.validate()?;
        Ok(spec)
    }

    pub fn constructs(&self) -> &[Construct] {
        &self.constructs
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn construct(&self, name: &str) -> Option<&Construct> {
        self.constructs.iter().find(|c| c.name == name)
    }

    pub fn block(&self, construct: &str) -> &[String] {
        self.indicators.get(construct).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Observed variables in construct order, each block in its listed order.
    pub fn observed_names(&self) -> Vec<String> {
        self.constructs
            .iter()
            .flat_map(|c| self.block(&c.name).iter().cloned())
            .collect()
    }

    /// Returns a copy with extra constraints appended.
    pub fn with_constraints(&self, extra: impl IntoIterator<Item = Constraint>) -> Result<Self> {
        let mut out = self.clone();
        out.constraints.extend(extra);
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for c in &self.constructs {
            if c.name.is_empty() || !names.insert(c.name.clone()) {
                return Err(SemError::InvalidSpec(format!("duplicate or empty construct name '{}'", c.name)));
            }
        }
        for key in self.indicators.keys() {
            if !names.contains(key) {
                return Err(SemError::InvalidSpec(format!("indicator block for unknown construct '{key}'")));
            }
        }
        let mut seen = BTreeSet::new();
        for ind in self.indicators.values().flatten() {
            if names.contains(ind) || !seen.insert(ind.clone()) {
                return Err(SemError::InvalidSpec(format!("indicator '{ind}' appears twice or shadows a construct")));
            }
        }
        let mut incoming: HashMap<&str, usize> = HashMap::new();
        let mut edges = BTreeSet::new();
        for p in &self.paths {
            if !names.contains(&p.from) || !names.contains(&p.to) {
                return Err(SemError::InvalidSpec(format!("path {} -> {} references unknown construct", p.from, p.to)));
            }
            if p.from == p.to || !edges.insert((p.from.clone(), p.to.clone())) {
                return Err(SemError::InvalidSpec(format!("self-loop or duplicate path {} -> {}", p.from, p.to)));
            }
            *incoming.entry(p.to.as_str()).or_default() += 1;
        }
        for c in &self.constructs {
            let k = self.block(&c.name).len();
            let has_incoming = incoming.contains_key(c.name.as_str());
            match c.kind {
                ConstructKind::LatentVariable | ConstructKind::Composite if k == 0 => {
                    return Err(SemError::InvalidSpec(format!("construct '{}' has no indicators", c.name)));
                }
                ConstructKind::CausalFormative if k == 0 && !has_incoming => {
                    return Err(SemError::InvalidSpec(format!("causal-formative '{}' has no indicators", c.name)));
                }
                _ => {}
            }
            if c.exogenous == has_incoming {
                return Err(SemError::InvalidSpec(format!(
                    "construct '{}' exogenous flag disagrees with its incoming paths",
                    c.name
                )));
            }
        }
        for con in &self.constraints {
            if let Some(v) = con.value {
                if !v.is_finite() {
                    return Err(SemError::NonFinite(format!("constraint {:?}", con)));
                }
            }
        }
        self.topological_order()?;
        Ok(())
    }

    /// Construct indices in topological order; ties keep declaration order.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let idx: HashMap<&str, usize> = self
            .constructs
            .iter()
            .enumerate()
            .map(|(i, c)| (c.name.as_str(), i))
            .collect();
        let m = self.constructs.len();
        let mut indeg = vec![0usize; m];
        let mut out_edges = vec![Vec::new(); m];
        for p in &self.paths {
            let (f, t) = (idx[p.from.as_str()], idx[p.to.as_str()]);
            indeg[t] += 1;
            out_edges[f].push(t);
        }
        let mut order = Vec::with_capacity(m);
        let mut done = vec![false; m];
        while order.len() < m {
            let next = (0..m).find(|&i| !done[i] && indeg[i] == 0);
            let Some(i) = next else {
                return Err(SemError::InvalidSpec("structural graph has a cycle".into()));
            };
            done[i] = true;
            order.push(i);
            for &t in &out_edges[i] {
                indeg[t] -= 1;
            }
        }
        Ok(order)
    }

    /// Replaces every causal-formative indicator by a perfectly measured
    /// single-indicator latent variable; the formative construct becomes an
    /// endogenous construct regressed on those latents.
    pub fn augment_causal_formative(&self) -> ModelSpec {
        self.augment_inner().0
    }

    fn augment_inner(&self) -> (ModelSpec, BTreeMap<String, String>) {
        let mut xi_owner = BTreeMap::new();
        let needs = self
            .constructs
            .iter()
            .any(|c| c.kind == ConstructKind::CausalFormative && !self.block(&c.name).is_empty());
        if !needs {
            return (self.clone(), xi_owner);
        }
        let mut constructs = Vec::new();
        let mut indicators = self.indicators.clone();
        let mut front_paths = Vec::new();
        let mut constraints = Vec::new();
        for c in &self.constructs {
            let block = self.block(&c.name).to_vec();
            if c.kind != ConstructKind::CausalFormative || block.is_empty() {
                constructs.push(c.clone());
                continue;
            }
            for x in &block {
                let xi = formative_latent_name(x);
                constructs.push(Construct {
                    name: xi.clone(),
                    kind: ConstructKind::LatentVariable,
                    exogenous: true,
                });
                indicators.insert(xi.clone(), vec![x.clone()]);
                constraints.push(Constraint::fix(MatrixId::Lambda, x, &xi, 1.0));
                constraints.push(Constraint::fix(MatrixId::Theta, x, x, 0.0));
                front_paths.push(Path { from: xi.clone(), to: c.name.clone() });
                xi_owner.insert(xi, c.name.clone());
            }
            indicators.remove(&c.name);
            constructs.push(Construct { name: c.name.clone(), kind: c.kind, exogenous: false });
        }
        front_paths.extend(self.paths.iter().cloned());
        constraints.extend(self.constraints.iter().cloned());
        let spec = ModelSpec { constructs, indicators, paths: front_paths, constraints };
        (spec, xi_owner)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

pub fn formative_latent_name(indicator: &str) -> String {
    format!("xi({indicator})")
}

pub fn excrescent_name(composite: &str, j: usize) -> String {
    format!("nu({composite},{j})")
}

/// One free parameter. Symmetric matrices store the lower triangle (`row >= col`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamCell {
    pub matrix: MatrixId,
    pub row: usize,
    pub col: usize,
}

/// Values and free/fixed tags of Λ (p×m), B (m×m), Ψ (m×m) and Θ (p×p).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTable {
    observed: Vec<String>,
    latent: Vec<String>,
    origins: Vec<LatentOrigin>,
    mats: [DMatrix<f64>; 4],
    free: [DMatrix<bool>; 4],
    cells: Vec<ParamCell>,
}

impl ParamTable {
    /// Table with every cell fixed at the given values.
    pub fn from_matrices(
        observed: Vec<String>,
        latent: Vec<String>,
        lambda: DMatrix<f64>,
        beta: DMatrix<f64>,
        psi: DMatrix<f64>,
        theta: DMatrix<f64>,
    ) -> Result<Self> {
        let (p, m) = (observed.len(), latent.len());
        if lambda.shape() != (p, m) || beta.shape() != (m, m) || psi.shape() != (m, m) || theta.shape() != (p, p) {
            return Err(SemError::Dimension(format!(
                "Λ {:?}, B {:?}, Ψ {:?}, Θ {:?} for p={p}, m={m}",
                lambda.shape(),
                beta.shape(),
                psi.shape(),
                theta.shape()
            )));
        }
        let origins = vec![LatentOrigin::Construct { kind: ConstructKind::LatentVariable }; m];
        let free = [
            DMatrix::from_element(p, m, false),
            DMatrix::from_element(m, m, false),
            DMatrix::from_element(m, m, false),
            DMatrix::from_element(p, p, false),
        ];
        Ok(ParamTable { observed, latent, origins, mats: [lambda, beta, psi, theta], free, cells: Vec::new() })
    }

    /// Compiles a specification into its parameter table with default
    /// identification rules applied, then the spec's explicit constraints.
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let (aug, xi_owner) = spec.augment_inner();
        let observed = aug.observed_names();
        let order = aug.topological_order()?;

        let mut latent = Vec::new();
        let mut origins = Vec::new();
        let mut construct_col = HashMap::new();
        for &ci in &order {
            let c = &aug.constructs[ci];
            construct_col.insert(c.name.clone(), latent.len());
            latent.push(c.name.clone());
            origins.push(match xi_owner.get(&c.name) {
                Some(owner) => LatentOrigin::FormativeIndicator { construct: owner.clone() },
                None => LatentOrigin::Construct { kind: c.kind },
            });
            let k = aug.block(&c.name).len();
            if c.kind == ConstructKind::Composite && k >= 2 {
                for j in 1..k {
                    latent.push(excrescent_name(&c.name, j));
                    origins.push(LatentOrigin::Excrescent { composite: c.name.clone(), j });
                }
            }
        }
        let p = observed.len();
        let m = latent.len();
        let obs_idx: HashMap<&str, usize> = observed.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let lat_idx: HashMap<&str, usize> = latent.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

        let mut t = ParamTable::from_matrices(
            observed.clone(),
            latent.clone(),
            DMatrix::zeros(p, m),
            DMatrix::zeros(m, m),
            DMatrix::zeros(m, m),
            DMatrix::zeros(p, p),
        )?;
        t.origins = origins;

        let mut incoming: HashMap<usize, Vec<usize>> = HashMap::new();
        for path in &aug.paths {
            let (f, to) = (lat_idx[path.from.as_str()], lat_idx[path.to.as_str()]);
            incoming.entry(to).or_default().push(f);
        }
        let is_exogenous = |l: usize| !incoming.contains_key(&l);

        // measurement part
        for c in &aug.constructs {
            let col = construct_col[&c.name];
            let rows: Vec<usize> = aug.block(&c.name).iter().map(|x| obs_idx[x.as_str()]).collect();
            match c.kind {
                ConstructKind::LatentVariable => {
                    for (i, &r) in rows.iter().enumerate() {
                        t.set_cell(MatrixId::Lambda, r, col, if i == 0 { Some(1.0) } else { None });
                        t.set_cell(MatrixId::Theta, r, r, None);
                    }
                }
                ConstructKind::Composite => {
                    let block = hospec::build_hospec(rows.len())?;
                    let k = rows.len();
                    for (i, &r) in rows.iter().enumerate() {
                        for j in 0..k {
                            let value = if block.lambda_free[(i, j)] { None } else { Some(block.lambda[(i, j)]) };
                            t.set_cell(MatrixId::Lambda, r, col + j, value);
                        }
                    }
                    if k >= 2 {
                        if is_exogenous(col) {
                            t.set_cell(MatrixId::Psi, col, col, Some(1.0));
                        } else {
                            t.set_cell(MatrixId::Lambda, rows[0], col, Some(1.0));
                        }
                        for a in 1..k {
                            for b in 1..=a {
                                t.set_cell(MatrixId::Psi, col + a, col + b, None);
                            }
                        }
                    }
                }
                ConstructKind::CausalFormative => {
                    // augmented form: no indicators, scale through the first incoming path
                    if let Some(first) = incoming.get(&col).and_then(|v| v.first()) {
                        t.set_cell(MatrixId::Beta, col, *first, Some(1.0));
                    }
                }
            }
        }

        // structural part
        for path in &aug.paths {
            let (f, to) = (lat_idx[path.from.as_str()], lat_idx[path.to.as_str()]);
            if !matches!(t.cell(MatrixId::Beta, to, f), CellTag::Fixed(v) if v != 0.0) {
                t.set_cell(MatrixId::Beta, to, f, None);
            }
        }
        let exo: Vec<usize> = (0..m)
            .filter(|&l| !matches!(t.origins[l], LatentOrigin::Excrescent { .. }) && is_exogenous(l))
            .collect();
        for (a, &la) in exo.iter().enumerate() {
            if !matches!(t.cell(MatrixId::Psi, la, la), CellTag::Fixed(v) if v != 0.0) {
                t.set_cell(MatrixId::Psi, la, la, None);
            }
            for &lb in &exo[..a] {
                t.set_cell(MatrixId::Psi, la, lb, None);
            }
        }
        for l in 0..m {
            if !matches!(t.origins[l], LatentOrigin::Excrescent { .. }) && !is_exogenous(l) {
                t.set_cell(MatrixId::Psi, l, l, None);
            }
        }

        for con in &aug.constraints {
            let resolve = |name: &str, observed_side: bool| -> Result<usize> {
                let map = if observed_side { &obs_idx } else { &lat_idx };
                map.get(name)
                    .copied()
                    .ok_or_else(|| SemError::InvalidSpec(format!("constraint references unknown variable '{name}'")))
            };
            let (r, c) = match con.matrix {
                MatrixId::Lambda => (resolve(&con.row, true)?, resolve(&con.col, false)?),
                MatrixId::Beta | MatrixId::Psi => (resolve(&con.row, false)?, resolve(&con.col, false)?),
                MatrixId::Theta => (resolve(&con.row, true)?, resolve(&con.col, true)?),
            };
            t.set_cell(con.matrix, r, c, con.value);
        }

        for i in 0..m {
            for j in i..m {
                if !matches!(t.cell(MatrixId::Beta, i, j), CellTag::Fixed(v) if v == 0.0) {
                    return Err(SemError::InvalidSpec(format!(
                        "structural coefficient {} <- {} is not recursive under the topological order",
                        latent[i], latent[j]
                    )));
                }
            }
        }

        for (l, origin) in t.origins.iter().enumerate() {
            if matches!(origin, LatentOrigin::Excrescent { .. }) {
                continue;
            }
            let mut scaling = 0;
            for r in 0..p {
                if matches!(t.cell(MatrixId::Lambda, r, l), CellTag::Fixed(v) if v != 0.0) {
                    scaling += 1;
                }
            }
            if matches!(t.cell(MatrixId::Psi, l, l), CellTag::Fixed(v) if v != 0.0) {
                scaling += 1;
            }
            if matches!(origin, LatentOrigin::Construct { kind: ConstructKind::CausalFormative }) {
                for s in 0..m {
                    if matches!(t.cell(MatrixId::Beta, l, s), CellTag::Fixed(v) if v != 0.0) {
                        scaling += 1;
                    }
                }
            }
            if scaling != 1 {
                return Err(SemError::InvalidSpec(format!(
                    "construct '{}' carries {scaling} scaling constraints, expected exactly one",
                    latent[l]
                )));
            }
        }
        t.rebuild_cells();
        Ok(t)
    }

    fn set_cell(&mut self, matrix: MatrixId, row: usize, col: usize, value: Option<f64>) {
        let k = matrix.index();
        let (r, c) = if matrix.is_symmetric() && col > row { (col, row) } else { (row, col) };
        let targets: &[(usize, usize)] = if matrix.is_symmetric() { &[(r, c), (c, r)] } else { &[(r, c)] };
        for &(i, j) in targets {
            self.free[k][(i, j)] = value.is_none();
            self.mats[k][(i, j)] = value.unwrap_or(0.0);
        }
    }

    fn rebuild_cells(&mut self) {
        let mut cells = Vec::new();
        for matrix in [MatrixId::Lambda, MatrixId::Beta, MatrixId::Psi, MatrixId::Theta] {
            let f = &self.free[matrix.index()];
            for r in 0..f.nrows() {
                let cmax = if matrix.is_symmetric() { r + 1 } else { f.ncols() };
                for c in 0..cmax {
                    if f[(r, c)] {
                        cells.push(ParamCell { matrix, row: r, col: c });
                    }
                }
            }
        }
        self.cells = cells;
    }

    /// Marks a cell free (test and oracle helper).
    pub fn free_cell(&mut self, matrix: MatrixId, row: usize, col: usize) {
        let v = self.value(matrix, row, col);
        self.set_cell(matrix, row, col, None);
        self.set_value(matrix, row, col, v);
        self.rebuild_cells();
    }

    pub fn cell(&self, matrix: MatrixId, row: usize, col: usize) -> CellTag {
        let k = matrix.index();
        if self.free[k][(row, col)] {
            CellTag::Free(self.mats[k][(row, col)])
        } else {
            CellTag::Fixed(self.mats[k][(row, col)])
        }
    }

    pub fn is_free(&self, matrix: MatrixId, row: usize, col: usize) -> bool {
        self.free[matrix.index()][(row, col)]
    }

    pub fn value(&self, matrix: MatrixId, row: usize, col: usize) -> f64 {
        self.mats[matrix.index()][(row, col)]
    }

    /// Sets a value (mirrored for Ψ and Θ). Fixed cells may be overwritten
    /// only through this explicit call.
    pub fn set_value(&mut self, matrix: MatrixId, row: usize, col: usize, v: f64) {
        let k = matrix.index();
        self.mats[k][(row, col)] = v;
        if matrix.is_symmetric() {
            self.mats[k][(col, row)] = v;
        }
    }

    pub fn observed(&self) -> &[String] {
        &self.observed
    }

    pub fn latent(&self) -> &[String] {
        &self.latent
    }

    pub fn origins(&self) -> &[LatentOrigin] {
        &self.origins
    }

    pub fn latent_index(&self, name: &str) -> Option<usize> {
        self.latent.iter().position(|l| l == name)
    }

    pub fn observed_index(&self, name: &str) -> Option<usize> {
        self.observed.iter().position(|l| l == name)
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.mats[0]
    }

    pub fn beta(&self) -> &DMatrix<f64> {
        &self.mats[1]
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.mats[2]
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.mats[3]
    }

    pub fn cells(&self) -> &[ParamCell] {
        &self.cells
    }

    pub fn n_free(&self) -> usize {
        self.cells.len()
    }

    pub fn label(&self, cell: &ParamCell) -> String {
        let (rn, cn) = match cell.matrix {
            MatrixId::Lambda => (&self.observed[cell.row], &self.latent[cell.col]),
            MatrixId::Beta | MatrixId::Psi => (&self.latent[cell.row], &self.latent[cell.col]),
            MatrixId::Theta => (&self.observed[cell.row], &self.observed[cell.col]),
        };
        format!("{}[{},{}]", cell.matrix.as_str(), rn, cn)
    }

    pub fn param_values(&self) -> Vec<f64> {
        self.cells.iter().map(|c| self.value(c.matrix, c.row, c.col)).collect()
    }

    pub fn set_param_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.cells.len() {
            return Err(SemError::Dimension(format!(
                "{} parameter values for {} free cells",
                values.len(),
                self.cells.len()
            )));
        }
        for (i, c) in self.cells.clone().iter().enumerate() {
            self.set_value(c.matrix, c.row, c.col, values[i]);
        }
        Ok(())
    }

    pub fn with_param_values(&self, values: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.set_param_values(values)?;
        Ok(out)
    }

    /// `(I − B)⁻¹` by forward substitution.
    pub fn total_effects(&self) -> Result<DMatrix<f64>> {
        let m = self.latent.len();
        let b = self.beta();
        for i in 0..m {
            for j in i..m {
                if b[(i, j)] != 0.0 {
                    return Err(SemError::InvalidSpec("B is not strictly lower-triangular".into()));
                }
            }
        }
        let i_b = DMatrix::identity(m, m) - b;
        i_b.solve_lower_triangular(&DMatrix::identity(m, m))
            .ok_or_else(|| SemError::Singular("I - B".into()))
    }

    fn check_finite(&self) -> Result<()> {
        for (k, name) in ["lambda", "beta", "psi", "theta"].iter().enumerate() {
            if !self.mats[k].iter().all(|v| v.is_finite()) {
                return Err(SemError::NonFinite(format!("{name} contains a non-finite value")));
            }
        }
        Ok(())
    }

    /// Model-implied covariance of all latent variables, `A Ψ Aᵀ`.
    pub fn construct_covariance(&self) -> Result<DMatrix<f64>> {
        self.check_finite()?;
        let a = self.total_effects()?;
        let mut c = &a * self.psi() * a.transpose();
        crate::linalg::symmetrize(&mut c);
        Ok(c)
    }

    /// Model-implied covariance of the observed variables.
    pub fn implied_covariance(&self) -> Result<DMatrix<f64>> {
        let c = self.construct_covariance()?;
        let l = self.lambda();
        let mut sigma = l * c * l.transpose() + self.theta();
        crate::linalg::symmetrize(&mut sigma);
        Ok(sigma)
    }

    /// Standardized structural coefficients keyed by (source, target):
    /// `b · sd(source) / sd(target)` with model-implied standard deviations.
    pub fn standardize(&self) -> Result<BTreeMap<(String, String), f64>> {
        let c = self.construct_covariance()?;
        let m = self.latent.len();
        let mut out = BTreeMap::new();
        for t in 0..m {
            for s in 0..t {
                let b = self.value(MatrixId::Beta, t, s);
                if !self.is_free(MatrixId::Beta, t, s) && b == 0.0 {
                    continue;
                }
                let (vs, vt) = (c[(s, s)], c[(t, t)]);
                if !(vs > 0.0 && vt > 0.0) {
                    return Err(SemError::NotPositiveDefinite(format!(
                        "non-positive implied variance for {} or {}",
                        self.latent[s], self.latent[t]
                    )));
                }
                out.insert((self.latent[s].clone(), self.latent[t].clone()), b * (vs / vt).sqrt());
            }
        }
        Ok(out)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let mat = |m: &DMatrix<f64>| {
            serde_json::json!({
                "rows": m.nrows(),
                "cols": m.ncols(),
                "data": (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect::<Vec<_>>(),
            })
        };
        let free: Vec<String> = self.cells.iter().map(|c| self.label(c)).collect();
        serde_json::json!({
            "observed": self.observed,
            "latent": self.latent,
            "lambda": mat(self.lambda()),
            "beta": mat(self.beta()),
            "psi": mat(self.psi()),
            "theta": mat(self.theta()),
            "free": free,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellTag {
    Free(f64),
    Fixed(f64),
}

/// `p(p+1)/2 − q`; negative values are reported as an error.
pub fn degrees_of_freedom(spec: &ModelSpec) -> Result<i64> {
    let t = ParamTable::from_spec(spec)?;
    let p = t.observed().len() as i64;
    let df = p * (p + 1) / 2 - t.n_free() as i64;
    if df < 0 {
        return Err(SemError::NegativeDf(df));
    }
    Ok(df)
}

/// Constructs with a free disturbance variance that emit fewer than two
/// paths to variables with free error/disturbance variances.
pub fn check_emitted_paths(spec: &ModelSpec) -> Result<Vec<String>> {
    let t = ParamTable::from_spec(spec)?;
    let (p, m) = (t.observed().len(), t.latent().len());
    let has_disturbance = |l: usize| (0..m).any(|s| t.is_free(MatrixId::Beta, l, s) || t.value(MatrixId::Beta, l, s) != 0.0);
    let mut out = Vec::new();
    for c in spec.constructs() {
        let l = t.latent_index(&c.name).expect("construct compiled");
        if !(has_disturbance(l) && t.is_free(MatrixId::Psi, l, l)) {
            continue;
        }
        let mut emitted = 0;
        for i in 0..p {
            let loads = t.is_free(MatrixId::Lambda, i, l) || t.value(MatrixId::Lambda, i, l) != 0.0;
            if loads && t.is_free(MatrixId::Theta, i, i) {
                emitted += 1;
            }
        }
        for tgt in 0..m {
            let path = t.is_free(MatrixId::Beta, tgt, l) || t.value(MatrixId::Beta, tgt, l) != 0.0;
            if path && t.is_free(MatrixId::Psi, tgt, tgt) {
                emitted += 1;
            }
        }
        if emitted < 2 {
            out.push(c.name.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn block(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn one_factor(k: usize) -> ModelSpec {
        let inds: Vec<String> = (1..=k).map(|i| format!("y{i}")).collect();
        ModelSpec::new(
            vec![Construct { name: "f".into(), kind: ConstructKind::LatentVariable, exogenous: true }],
            BTreeMap::from([("f".to_string(), inds)]),
            vec![],
            vec![],
        )
        .unwrap()
    }

    fn isolated_formative() -> ModelSpec {
        ModelSpec::new(
            vec![Construct { name: "eta".into(), kind: ConstructKind::CausalFormative, exogenous: true }],
            BTreeMap::from([("eta".to_string(), block(&["x1", "x2", "x3"]))]),
            vec![],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn rank_one_implied_covariance() {
        let t = ParamTable::from_matrices(
            block(&["a", "b"]),
            block(&["f"]),
            DMatrix::from_element(2, 1, 1.0),
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        let s = t.implied_covariance().unwrap();
        assert!(max_abs_diff(&s, &DMatrix::from_element(2, 2, 1.0)) == 0.0);
    }

    #[test]
    fn paper_latent_block() {
        let t = ParamTable::from_matrices(
            block(&["a", "b", "c", "d"]),
            block(&["f"]),
            DMatrix::from_element(4, 1, 0.8),
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::identity(4, 4) * 0.36,
        )
        .unwrap();
        let s = t.implied_covariance().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.64 };
                assert!((s[(i, j)] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dimension_and_finiteness_errors() {
        let bad = ParamTable::from_matrices(
            block(&["a"]),
            block(&["f"]),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
        );
        assert!(matches!(bad, Err(SemError::Dimension(_))));
        let mut t = ParamTable::from_spec(&one_factor(3)).unwrap();
        t.set_value(MatrixId::Psi, 0, 0, f64::NAN);
        assert!(matches!(t.implied_covariance(), Err(SemError::NonFinite(_))));
    }

    #[test]
    fn one_factor_df_hand_count() {
        // 3 free loadings + 4 error variances + 1 factor variance
        let spec = one_factor(4);
        let t = ParamTable::from_spec(&spec).unwrap();
        assert_eq!(t.n_free(), 8);
        assert_eq!(degrees_of_freedom(&spec).unwrap(), 2);
    }

    #[test]
    fn saturated_and_overparameterized() {
        // 2 indicators: 1 loading + 2 errors + 1 variance = 4 > 3 moments
        assert!(matches!(degrees_of_freedom(&one_factor(2)), Err(SemError::NegativeDf(-1))));
        // 3 indicators: 2 + 3 + 1 = 6 = 3·4/2
        assert_eq!(degrees_of_freedom(&one_factor(3)).unwrap(), 0);
    }

    #[test]
    fn augmentation_counts() {
        let spec = isolated_formative();
        let aug = spec.augment_causal_formative();
        let xis: Vec<_> = aug.constructs().iter().filter(|c| c.name.starts_with("xi(")).collect();
        assert_eq!(xis.len(), 3);
        let fixed_loadings = aug
            .constraints()
            .iter()
            .filter(|c| c.matrix == MatrixId::Lambda && c.value == Some(1.0))
            .count();
        let fixed_errors = aug
            .constraints()
            .iter()
            .filter(|c| c.matrix == MatrixId::Theta && c.value == Some(0.0))
            .count();
        assert_eq!((fixed_loadings, fixed_errors), (3, 3));
        assert_eq!(aug.paths().len(), 3);
        assert!(!aug.construct("eta").unwrap().exogenous);

        let t = ParamTable::from_spec(&spec).unwrap();
        let count = |m: MatrixId| t.cells().iter().filter(|c| c.matrix == m).count();
        // 6 ξ (co)variances + φ, 2 free γ (first fixed for scale)
        assert_eq!(count(MatrixId::Psi), 7);
        assert_eq!(count(MatrixId::Beta), 2);
        assert_eq!(count(MatrixId::Lambda), 0);
        assert_eq!(count(MatrixId::Theta), 0);
    }

    #[test]
    fn augmentation_identity_without_formative() {
        let spec = one_factor(3);
        assert_eq!(spec.augment_causal_formative(), spec);
        let aug = isolated_formative().augment_causal_formative();
        assert_eq!(aug.augment_causal_formative(), aug);
    }

    #[test]
    fn isolated_formative_violates_emitted_paths() {
        assert_eq!(check_emitted_paths(&isolated_formative()).unwrap(), vec!["eta".to_string()]);
    }

    #[test]
    fn cyclic_and_inconsistent_specs_rejected() {
        let lv = |n: &str, exo: bool| Construct { name: n.into(), kind: ConstructKind::LatentVariable, exogenous: exo };
        let inds = BTreeMap::from([
            ("a".to_string(), block(&["a1", "a2"])),
            ("b".to_string(), block(&["b1", "b2"])),
        ]);
        let cyc = ModelSpec::new(
            vec![lv("a", false), lv("b", false)],
            inds.clone(),
            vec![Path { from: "a".into(), to: "b".into() }, Path { from: "b".into(), to: "a".into() }],
            vec![],
        );
        assert!(cyc.is_err());
        let flag = ModelSpec::new(vec![lv("a", true), lv("b", true)], inds.clone(), vec![Path { from: "a".into(), to: "b".into() }], vec![]);
        assert!(flag.is_err());
        let dup = ModelSpec::new(
            vec![lv("a", true), lv("b", true)],
            BTreeMap::from([("a".to_string(), block(&["x"])), ("b".to_string(), block(&["x"]))]),
            vec![],
            vec![],
        );
        assert!(dup.is_err());
    }

    #[test]
    fn double_scaling_rejected() {
        let spec = one_factor(3).with_constraints([Constraint::fix(MatrixId::Psi, "f", "f", 1.0)]).unwrap();
        assert!(ParamTable::from_spec(&spec).is_err());
        let spec = spec.with_constraints([Constraint::free(MatrixId::Lambda, "y1", "f")]).unwrap();
        let t = ParamTable::from_spec(&spec).unwrap();
        assert_eq!(t.n_free(), 6);
    }

    #[test]
    fn json_round_trip() {
        let spec = isolated_formative()
            .with_constraints([Constraint::fix(MatrixId::Psi, "eta", "eta", 0.25)])
            .unwrap();
        let s = spec.to_json().unwrap();
        assert!(s.contains("\"constructs\"") && s.contains("\"indicators\"") && s.contains("\"paths\"") && s.contains("\"constraints\""));
        assert_eq!(ModelSpec::from_json(&s).unwrap(), spec);
    }

    #[test]
    fn standardize_is_identity_for_unit_variances() {
        let mut t = ParamTable::from_matrices(
            block(&["a", "b"]),
            block(&["f", "g"]),
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.75]),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        let std = t.standardize().unwrap();
        assert!((std[&("f".to_string(), "g".to_string())] - 0.5).abs() < 1e-15);
        t.set_value(MatrixId::Psi, 1, 1, -2.0);
        assert!(t.standardize().is_err());
    }
}
