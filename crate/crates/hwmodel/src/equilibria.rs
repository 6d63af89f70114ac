//! Invariant equilibrium candidates and their verification.
//!
//! An invariant state puts mass 1/M on each zone of an M-zone support drawn
//! from the symmetry catalog. Because the support is a single orbit of a
//! subgroup, every populated zone is equivalent, payoffs are equal across
//! the support, and the state is an equilibrium for every phi. This module
//! checks that numerically, classifies local stability, and picks the
//! potential-maximizing pattern at given parameters.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::symmetry::SupportPattern;

/// Outcome of the equilibrium checks at one parameter point.
#[derive(Clone, Copy, Debug)]
pub struct InvariantCheck {
    /// Complementarity defect of the state.
    pub residual: f64,
    /// Worst deviation of a populated zone's captured demand from Q/M.
    pub share_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Unstable,
    Marginal,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Marginal => "marginal",
        }
    }
}

/// Local stability classification of one pattern at one parameter point.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub pattern_id: u32,
    pub m: usize,
    /// Largest payoff over empty zones (entry incentive); -inf when the
    /// support covers every zone.
    pub boundary_margin: f64,
    /// Largest eigenvalue of the potential Hessian restricted to the
    /// mass-preserving tangent of the support face; -inf for M = 1.
    pub interior_max_eig: f64,
    pub verdict: Verdict,
    pub f: f64,
    pub g: f64,
}

/// Winning patterns at one parameter point.
#[derive(Clone, Debug, Serialize)]
pub struct Selection {
    /// (pattern id, potential value) for every candidate, in catalog order.
    pub values: Vec<(u32, f64)>,
    pub f_max: f64,
    /// Ids within `tie_tol` of the maximum, ascending.
    pub winner_ids: Vec<u32>,
    /// Largest support size among the winners. Near-exact ties are resolved
    /// toward the most dispersed pattern, which keeps winner maps monotone
    /// where the potential is scale-degenerate (alpha = 1).
    pub winner_m: usize,
}

/// The state with mass 1/M on each pattern zone.
pub fn pattern_state(k: usize, pattern: &SupportPattern) -> Vec<f64> {
    let mut x = vec![0.0; k];
    for &z in &pattern.zones {
        x[z as usize] = 1.0 / pattern.m as f64;
    }
    x
}

/// Residual and aggregate-share check for one pattern.
pub fn verify_invariant(model: &Model, pattern: &SupportPattern) -> Result<InvariantCheck> {
    let x = pattern_state(model.k(), pattern);
    let residual = model.residual(&x)?;
    let flows = model.flows(&x)?;
    let q_total: f64 = model.geography().demand().iter().sum();
    let target = q_total / pattern.m as f64;
    let mut share_error: f64 = 0.0;
    for &z in &pattern.zones {
        let revenue: f64 = (0..model.k()).map(|j| flows[(z as usize, j)]).sum();
        share_error = share_error.max((revenue - target).abs());
    }
    Ok(InvariantCheck { residual, share_error })
}

/// Orthonormal basis of the mass-preserving tangent `{v : sum v = 0}` in
/// R^m: the trailing m-1 columns of the Householder reflection that maps
/// e_1 to the normalized ones vector.
fn tangent_basis(m: usize) -> DMatrix<f64> {
    let mut v = DMatrix::from_element(m, 1, 1.0 / (m as f64).sqrt());
    v[(0, 0)] -= 1.0;
    let vtv = v.dot(&v);
    let mut h = DMatrix::identity(m, m);
    if vtv > 0.0 {
        h -= (&v * v.transpose()) * (2.0 / vtv);
    }
    h.columns(1, m - 1).into_owned()
}

/// Classifies local stability of a pattern: stable when empty zones have
/// strictly negative entry payoff and the support-face tangent Hessian is
/// strictly negative definite (both checked against `tol`).
pub fn classify_stability(model: &Model, pattern: &SupportPattern, tol: f64) -> Result<StabilityReport> {
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(Error::InvalidParameter(format!("tolerance must be nonnegative, got {tol}")));
    }
    let k = model.k();
    let x = pattern_state(k, pattern);
    let pi = model.payoff(&x)?;
    let on: Vec<usize> = pattern.zones.iter().map(|&z| z as usize).collect();
    let mut boundary_margin = f64::NEG_INFINITY;
    let mut in_support = vec![false; k];
    for &i in &on {
        in_support[i] = true;
    }
    for i in 0..k {
        if !in_support[i] {
            boundary_margin = boundary_margin.max(pi[i]);
        }
    }
    let interior_max_eig = if pattern.m == 1 {
        f64::NEG_INFINITY
    } else {
        let hess = model.hessian_on(&x, &on)?;
        let basis = tangent_basis(pattern.m);
        let tangent = basis.transpose() * hess * basis;
        let sym = (&tangent + tangent.transpose()) * 0.5;
        sym.symmetric_eigenvalues().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    };
    let verdict = if boundary_margin < -tol && interior_max_eig < -tol {
        Verdict::Stable
    } else if boundary_margin > tol || interior_max_eig > tol {
        Verdict::Unstable
    } else {
        Verdict::Marginal
    };
    let value = model.potential(&x)?;
    Ok(StabilityReport {
        pattern_id: pattern.id,
        m: pattern.m,
        boundary_margin,
        interior_max_eig,
        verdict,
        f: value.f,
        g: value.g,
    })
}

/// Evaluates the potential at every pattern and returns the maximizers;
/// patterns within `tie_tol` of the best value all count as winners.
pub fn select_global(model: &Model, patterns: &[SupportPattern], tie_tol: f64) -> Result<Selection> {
    if patterns.is_empty() {
        return Err(Error::InvalidParameter("no candidate patterns".into()));
    }
    let mut values = Vec::with_capacity(patterns.len());
    let mut f_max = f64::NEG_INFINITY;
    for p in patterns {
        let x = pattern_state(model.k(), p);
        let f = model.potential(&x)?.f;
        f_max = f_max.max(f);
        values.push((p.id, f));
    }
    let mut winner_ids = Vec::new();
    let mut winner_m = 0;
    for (p, &(id, f)) in patterns.iter().zip(&values) {
        if f >= f_max - tie_tol {
            winner_ids.push(id);
            winner_m = winner_m.max(p.m);
        }
    }
    Ok(Selection { values, f_max, winner_ids, winner_m })
}
