//! Flows, payoffs and the potential of the retail game.
//!
//! Shop mass `x_i >= 0` in zone `i` attracts consumers from zone `j` at rate
//! `x_i^alpha * w(j, i)` where `w = phi^dist`. Zone `j` demand `Q_j` splits
//! proportionally, giving flows `V_ij`, zone revenue `sum_j V_ij`, and payoff
//! per unit mass `pi_i = revenue_i / x_i - kappa`. The payoff field is the
//! gradient of `f(x) = (1/alpha) * sum_j Q_j log S_j - kappa * sum_i x_i`
//! with `S_j` the total attractiveness seen from `j`, so the game is a
//! potential game and equilibria are KKT points of `f` on the orthant.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::Geography;

/// Returns-to-scale exponent alpha and travel freeness phi = exp(-beta).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Params {
    alpha: f64,
    phi: f64,
}

impl Params {
    pub fn new(alpha: f64, phi: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        if !(phi > 0.0 && phi < 1.0) {
            return Err(Error::InvalidParameter(format!("phi must lie in (0, 1), got {phi}")));
        }
        Ok(Params { alpha, phi })
    }

    /// From the travel-cost decay rate beta > 0 via phi = exp(-beta).
    pub fn from_beta(alpha: f64, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        Self::new(alpha, (-beta).exp())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn beta(&self) -> f64 {
        -self.phi.ln()
    }
}

/// Potential value split into the accessibility term `g` (the demand-weighted
/// log attractiveness) and the full potential `f = g - kappa * sum(x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialValue {
    pub f: f64,
    pub g: f64,
}

/// A geography with parameters and the proximity kernel baked in.
pub struct Model<'a> {
    geo: &'a Geography,
    params: Params,
    /// `w[(j, i)] = phi ^ dist(j, i)`: visibility of shops in `i` from `j`.
    w: DMatrix<f64>,
}

impl<'a> Model<'a> {
    pub fn new(geo: &'a Geography, params: Params) -> Result<Self> {
        let w = geo.proximity(params.phi)?;
        Ok(Model { geo, params, w })
    }

    pub fn geography(&self) -> &Geography {
        self.geo
    }

    pub fn params(&self) -> Params {
        self.params
    }

    pub fn k(&self) -> usize {
        self.geo.k()
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.k() {
            return Err(Error::InvalidParameter(format!(
                "state length {} does not match {} zones",
                x.len(),
                self.k()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("state must be finite".into()));
        }
        Ok(())
    }

    fn mass_powers(&self, x: &[f64]) -> DVector<f64> {
        // IEEE powf gives the conventions needed on the boundary:
        // 0^a = 0 for a > 0 and 0^0 = 1 (the alpha = 1 case).
        let a = self.params.alpha;
        DVector::from_iterator(x.len(), x.iter().map(|&v| v.max(0.0).powf(a)))
    }

    /// Attractiveness `S_j = sum_k x_k^alpha * w(j, k)` of the whole market
    /// as seen from zone `j`. Positive whenever `x != 0`.
    pub fn attractiveness(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_state(x)?;
        Ok(&self.w * self.mass_powers(x))
    }

    /// Consumer flow matrix: `V[(i, j)]` is demand from zone `j` captured by
    /// shops in zone `i`. Columns sum to the demand vector.
    pub fn flows(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let s = self.attractiveness(x)?;
        let q = self.geo.demand();
        let k = self.k();
        let xa = self.mass_powers(x);
        let mut v = DMatrix::zeros(k, k);
        for j in 0..k {
            if s[j] <= 0.0 {
                return Err(Error::Numerical(format!(
                    "zero attractiveness seen from zone {}; state has no mass",
                    j + 1
                )));
            }
            let scale = q[j] / s[j];
            for i in 0..k {
                v[(i, j)] = xa[i] * self.w[(j, i)] * scale;
            }
        }
        Ok(v)
    }

    /// Payoff per unit mass, `pi_i = x_i^(alpha-1) * A_i - kappa` with
    /// `A_i = sum_j Q_j w(j, i) / S_j`. On the boundary this is `-kappa` for
    /// alpha > 1, finite for alpha = 1, and +infinity for alpha < 1 (entry
    /// into an empty zone is infinitely profitable).
    pub fn payoff(&self, x: &[f64]) -> Result<DVector<f64>> {
        let s = self.attractiveness(x)?;
        let q = self.geo.demand();
        let k = self.k();
        if s.iter().any(|&v| v <= 0.0) {
            return Err(Error::Numerical("payoff undefined at the zero state".into()));
        }
        let u = DVector::from_iterator(k, (0..k).map(|j| q[j] / s[j]));
        let a = self.w.transpose() * u;
        let am1 = self.params.alpha - 1.0;
        let kappa = self.geo.kappa();
        Ok(DVector::from_iterator(
            k,
            (0..k).map(|i| x[i].max(0.0).powf(am1) * a[i] - kappa),
        ))
    }

    /// Mass-action vector field `v_i = x_i * pi_i`, evaluated in the form
    /// `x_i^alpha * A_i - kappa * x_i` which stays finite on the boundary
    /// for every alpha > 0.
    pub fn velocity(&self, x: &[f64]) -> Result<DVector<f64>> {
        let s = self.attractiveness(x)?;
        if s.iter().any(|&v| v <= 0.0) {
            return Err(Error::Numerical("velocity undefined at the zero state".into()));
        }
        let q = self.geo.demand();
        let k = self.k();
        let u = DVector::from_iterator(k, (0..k).map(|j| q[j] / s[j]));
        let a = self.w.transpose() * u;
        let xa = self.mass_powers(x);
        let kappa = self.geo.kappa();
        Ok(DVector::from_iterator(k, (0..k).map(|i| xa[i] * a[i] - kappa * x[i])))
    }

    /// Potential `f` and its accessibility part `g`.
    pub fn potential(&self, x: &[f64]) -> Result<PotentialValue> {
        let s = self.attractiveness(x)?;
        if s.iter().any(|&v| v <= 0.0) {
            return Err(Error::Numerical("potential undefined at the zero state".into()));
        }
        let q = self.geo.demand();
        let g = (0..self.k()).map(|j| q[j] * s[j].ln()).sum::<f64>() / self.params.alpha;
        let mass: f64 = x.iter().sum();
        Ok(PotentialValue { f: g - self.geo.kappa() * mass, g })
    }

    /// Equilibrium defect: the largest violation of the complementarity
    /// system `x_i >= 0`, `pi_i <= 0`, `x_i * pi_i = 0`.
    pub fn residual(&self, x: &[f64]) -> Result<f64> {
        let pi = self.payoff(x)?;
        let mut worst: f64 = 0.0;
        for i in 0..self.k() {
            if x[i] < 0.0 {
                worst = worst.max(-x[i]);
            }
            worst = worst.max(pi[i].max(0.0));
            if x[i] > 0.0 {
                worst = worst.max((x[i] * pi[i]).abs());
            }
        }
        Ok(worst)
    }

    /// Hessian of `f` restricted to the given zones, which must carry
    /// positive mass. Entry (a, b) differentiates `pi[support[a]]` by
    /// `x[support[b]]`; attractiveness still sees the whole state.
    pub fn hessian_on(&self, x: &[f64], support: &[usize]) -> Result<DMatrix<f64>> {
        self.check_state(x)?;
        let m = support.len();
        let k = self.k();
        let mut seen = vec![false; k];
        for &i in support {
            if i >= k {
                return Err(Error::InvalidParameter(format!("zone {} out of range", i + 1)));
            }
            if seen[i] {
                return Err(Error::InvalidParameter(format!("zone {} repeated in support", i + 1)));
            }
            seen[i] = true;
            if x[i] <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "hessian needs positive mass on zone {}",
                    i + 1
                )));
            }
        }
        let s = self.attractiveness(x)?;
        let q = self.geo.demand();
        let alpha = self.params.alpha;

        // ws[(j, a)] = w(j, support[a])
        let ws = DMatrix::from_fn(k, m, |j, a| self.w[(j, support[a])]);
        let u1 = DVector::from_iterator(k, (0..k).map(|j| q[j] / s[j]));
        let u2 = DVector::from_iterator(k, (0..k).map(|j| q[j] / (s[j] * s[j])));
        let a_vec = ws.transpose() * u1;
        let mut b = ws.transpose() * DMatrix::from_diagonal(&u2) * ws;

        let xs: Vec<f64> = support.iter().map(|&i| x[i]).collect();
        for a in 0..m {
            for c in 0..m {
                b[(a, c)] *= -alpha * xs[a].powf(alpha - 1.0) * xs[c].powf(alpha - 1.0);
            }
        }
        for a in 0..m {
            b[(a, a)] += (alpha - 1.0) * xs[a].powf(alpha - 2.0) * a_vec[a];
        }
        Ok(b)
    }

    /// Full-dimensional Hessian; requires positive mass everywhere.
    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let all: Vec<usize> = (0..self.k()).collect();
        self.hessian_on(x, &all)
    }
}
