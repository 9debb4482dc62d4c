//! SEM estimation engine and Monte Carlo laboratory for comparing
//! indicator-construct models (latent variables, causal-formative constructs
//! and composites) under ML and PLS estimation.

// NaN-rejecting checks are written as `!(x < tol)` throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admissibility;
pub mod audit;
pub mod dgp;
pub mod error;
pub mod fit;
pub mod hospec;
pub mod linalg;
pub mod mc;
pub mod ml;
pub mod model_ir;
pub mod optim;
pub mod output;
pub mod pls;
pub mod study;

pub use error::{Result, SemError};
pub use model_ir::{Constraint, Construct, ConstructKind, MatrixId, ModelSpec, ParamTable, Path};
