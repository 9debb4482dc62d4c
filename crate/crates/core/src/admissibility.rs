//! Admissibility verdicts shared by the ML and PLS estimators.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Reason {
    Nonconvergence,
    NegativeSe,
    NonPdConstructCov,
    NonPdErrorCov,
    SingularRotation,
    LoadingAboveOne,
    ReliabilityOutOfRange,
    SingularBlock,
}

impl Reason {
    pub fn code(self) -> &'static str {
        match self {
            Reason::Nonconvergence => "nonconvergence",
            Reason::NegativeSe => "negative_se",
            Reason::NonPdConstructCov => "nonPD_construct_cov",
            Reason::NonPdErrorCov => "nonPD_error_cov",
            Reason::SingularRotation => "singular_rotation",
            Reason::LoadingAboveOne => "loading_above_one",
            Reason::ReliabilityOutOfRange => "reliability_out_of_range",
            Reason::SingularBlock => "singular_block",
        }
    }
}

/// Tolerance for "numerically positive definite" checks.
pub const PD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    reasons: Vec<Reason>,
}

impl Verdict {
    pub fn add(&mut self, r: Reason) {
        if !self.reasons.contains(&r) {
            self.reasons.push(r);
            self.reasons.sort();
        }
    }

    pub fn admissible(&self) -> bool {
        self.reasons.is_empty()
    }

    pub fn reasons(&self) -> &[Reason] {
        &self.reasons
    }

    /// Reason codes joined with `;`, empty when admissible.
    pub fn codes(&self) -> String {
        self.reasons.iter().map(|r| r.code()).collect::<Vec<_>>().join(";")
    }
}
