//! Independent oracles: derivative checks, manufactured solutions, gauge,
//! Gauss–Bonnet and Bochner audits, and Hessian positivity probes.
//!
//! Oracles recompute what they check through a separate route (nodal
//! finite differences and quadrature, closed forms, or solver cross-runs);
//! only chart construction is shared with the code under test.

mod audits;
mod derivatives;
mod mms;
mod random;

use serde::{Deserialize, Serialize};

pub use audits::{
    bochner_identity_audit, gauge_invariance_audit, gauss_bonnet_audit, hessian_lower_bound_audit, lambda_zero_audit, positivity_audit,
    BOCHNER_CONSTANT, BOCHNER_FLAT_TOL, GAUGE_TOL, GAUSS_BONNET_TOL, ROUTES_TOL,
};
pub use derivatives::{
    check_gradient, check_hessian, check_symmetry, hessian_formula_audit, GRADIENT_TOL, HESSIAN_FACTOR_TOL, HESSIAN_TOL, STEPS,
    SYMMETRY_TOL,
};
pub use mms::{make_mms_case, mms_convergence, MmsCase, MmsError, MmsRecipe};
pub use random::{envelope, random_beta, random_perturbation, random_state};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    /// Measured error (the quantity compared with `tolerance`).
    pub error: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub oracle: String,
    /// Supplementary figures, in insertion order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<(String, f64)>,
}

impl CheckReport {
    pub fn new(name: &str, error: f64, tolerance: f64, oracle: &str) -> CheckReport {
        CheckReport { name: name.into(), error, tolerance, pass: error <= tolerance, oracle: oracle.into(), details: Vec::new() }
    }

    pub fn detail(mut self, key: &str, value: f64) -> CheckReport {
        self.details.push((key.into(), value));
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.details.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

/// Collection of reports written as the verification manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub checks: Vec<CheckReport>,
    pub pass: bool,
}

impl Manifest {
    pub fn new() -> Manifest {
        Manifest { checks: Vec::new(), pass: true }
    }

    pub fn push(&mut self, report: CheckReport) {
        self.pass &= report.pass;
        self.checks.push(report);
    }

    pub fn passed(&self) -> usize {
        self.checks.iter().filter(|c| c.pass).count()
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckReport> {
        self.checks.iter().filter(|c| !c.pass)
    }
}
