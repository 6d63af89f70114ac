//! Mass-action dynamics `dx_i/dt = x_i * pi_i(x)` on the nonnegative
//! orthant, integrated with an adaptive Dormand-Prince 5(4) scheme.
//!
//! Because the payoff field is the gradient of the potential, `f` is
//! nondecreasing along trajectories and total mass is pulled toward
//! `sum(Q)/kappa = 1`; integration stops once the equilibrium residual stays
//! below tolerance for two consecutive accepted steps.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::par;
use crate::symmetry::{PermGroup, SupportPattern};

#[derive(Clone, Copy, Debug)]
pub struct IntegrateOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Equilibrium residual threshold for convergence detection.
    pub residual_tol: f64,
    pub t_max: f64,
    /// Entries with magnitude below this are snapped to exactly 0 after an
    /// accepted step; extinct zones stay extinct under the dynamics.
    pub clamp_eps: f64,
    /// Keep every accepted step in the trajectory (otherwise only the
    /// initial and final states are kept).
    pub record: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            residual_tol: 1e-9,
            t_max: 1e6,
            clamp_eps: 1e-14,
            record: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub converged: bool,
    pub final_residual: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Most negative entry seen across accepted states before clamping.
    pub min_entry_seen: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least the initial time")
    }
}

// Dormand-Prince 5(4) tableau. The last stage equals the next step's first
// stage (first-same-as-last), so an accepted step costs six evaluations.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Difference between the 5th- and 4th-order weights, for the error estimate.
const ERR: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates the mass-action dynamics from `x0` until the equilibrium
/// residual stays at or below `opts.residual_tol` for two consecutive
/// accepted steps, or `t_max` is reached (converged = false).
pub fn integrate(model: &Model, x0: &[f64], opts: &IntegrateOptions) -> Result<Trajectory> {
    let k = model.k();
    if x0.len() != k {
        return Err(Error::InvalidParameter(format!(
            "initial state length {} does not match {} zones",
            x0.len(),
            k
        )));
    }
    if x0.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
        return Err(Error::InvalidParameter("initial state must be nonnegative".into()));
    }
    if x0.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidParameter("initial state must carry some mass".into()));
    }

    let mut x = DVector::from_column_slice(x0);
    let mut t = 0.0;
    let mut dt = 1e-3;
    let mut times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut min_entry = x0.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut residual = model.residual(x.as_slice())?;
    let mut converged = false;
    let mut quiet_steps = 0usize;
    if residual <= opts.residual_tol {
        // Already at an equilibrium: nothing to integrate.
        return Ok(Trajectory {
            times,
            states,
            converged: true,
            final_residual: residual,
            accepted_steps: 0,
            rejected_steps: 0,
            min_entry_seen: min_entry,
        });
    }

    let mut k_stages: Vec<DVector<f64>> = Vec::with_capacity(7);
    k_stages.push(model.velocity(x.as_slice())?);
    for _ in 0..6 {
        k_stages.push(DVector::zeros(k));
    }

    while t < opts.t_max {
        if dt < 1e-14 * t.max(1.0) {
            return Err(Error::Stiffness { t, residual, last_state: x.as_slice().to_vec() });
        }
        dt = dt.min(opts.t_max - t);
        for s in 0..6 {
            let mut stage = x.clone();
            for (j, coeff) in A[s].iter().enumerate().take(s + 1) {
                if *coeff != 0.0 {
                    stage.axpy(dt * coeff, &k_stages[j], 1.0);
                }
            }
            k_stages[s + 1] = model.velocity(stage.as_slice())?;
        }
        // Stage 7 input is the 5th-order solution itself.
        let mut x_new = x.clone();
        for (j, coeff) in A[5].iter().enumerate() {
            if *coeff != 0.0 {
                x_new.axpy(dt * coeff, &k_stages[j], 1.0);
            }
        }
        let k_last = model.velocity(x_new.as_slice())?;

        // Near an equilibrium the controller would otherwise idle at the
        // stability boundary and inject per-step noise at the tolerance
        // scale, masking the residual gate; keep the allowed step error a
        // factor 20 below the current residual so detection can trigger.
        let landing = (residual.max(opts.residual_tol) / 20.0).max(1e-13);
        let mut err_sq = 0.0;
        for i in 0..k {
            let mut e = 0.0;
            for (j, w) in ERR.iter().enumerate() {
                if *w != 0.0 {
                    let kj = if j == 6 { &k_last } else { &k_stages[j] };
                    e += w * kj[i];
                }
            }
            e *= dt;
            let scale = (opts.abs_tol + opts.rel_tol * x[i].abs().max(x_new[i].abs())).min(landing);
            err_sq += (e / scale) * (e / scale);
        }
        let err_norm = (err_sq / k as f64).sqrt();

        if err_norm <= 1.0 {
            t += dt;
            min_entry = min_entry.min(x_new.iter().cloned().fold(f64::INFINITY, f64::min));
            for v in x_new.iter_mut() {
                if v.abs() < opts.clamp_eps {
                    *v = 0.0;
                }
            }
            x = x_new;
            k_stages[0] = model.velocity(x.as_slice())?;
            accepted += 1;
            if opts.record {
                times.push(t);
                states.push(x.as_slice().to_vec());
            }
            residual = model.residual(x.as_slice())?;
            if residual <= opts.residual_tol {
                quiet_steps += 1;
                if quiet_steps >= 2 {
                    converged = true;
                    break;
                }
            } else {
                quiet_steps = 0;
            }
        } else {
            rejected += 1;
        }
        let factor = (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0);
        dt *= factor;
    }

    if !opts.record {
        times.push(t);
        states.push(x.as_slice().to_vec());
    } else if converged {
        // Final state already recorded by the accepted-step branch.
    }
    Ok(Trajectory {
        times,
        states,
        converged,
        final_residual: residual,
        accepted_steps: accepted,
        rejected_steps: rejected,
        min_entry_seen: min_entry,
    })
}

/// One attractor found by basin sampling.
#[derive(Clone, Debug)]
pub struct BasinCluster {
    /// Canonicalized representative terminal state (first hit).
    pub representative: Vec<f64>,
    pub count: usize,
    /// Catalog id when the representative lies within the clustering
    /// distance of an invariant pattern state.
    pub matched_pattern: Option<u32>,
}

#[derive(Clone, Debug)]
pub struct BasinReport {
    /// Clusters sorted by descending hit count, ties by representative.
    pub clusters: Vec<BasinCluster>,
    /// Trajectories that failed to integrate or did not converge.
    pub failures: usize,
    pub samples: usize,
}

const CLUSTER_DIST: f64 = 1e-4;

/// Integrates from `n_samples` Dirichlet(1, ..., 1) starts (child seed =
/// (master seed, sample index)), canonicalizes terminal states under the
/// group, and clusters them at infinity-norm distance 1e-4.
pub fn basin_sample(
    model: &Model,
    group: &PermGroup,
    patterns: Option<&[SupportPattern]>,
    n_samples: usize,
    seed: u64,
    opts: &IntegrateOptions,
) -> Result<BasinReport> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    if group.k() != model.k() {
        return Err(Error::InvalidParameter("group and model zone counts differ".into()));
    }
    let k = model.k();
    let run_opts = IntegrateOptions { record: false, ..*opts };
    let indices: Vec<usize> = (0..n_samples).collect();
    let outcomes = par::map(&indices, |&i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let x0 = dirichlet_uniform(&mut rng, k);
        integrate(model, &x0, &run_opts)
            .ok()
            .filter(|tr| tr.converged)
            .map(|tr| tr.final_state().to_vec())
    });

    let mut clusters: Vec<BasinCluster> = Vec::new();
    let mut failures = 0usize;
    for outcome in outcomes {
        let Some(terminal) = outcome else {
            failures += 1;
            continue;
        };
        let canon = group.canonical_state(&terminal);
        match clusters.iter_mut().find(|c| linf(&c.representative, &canon) <= CLUSTER_DIST) {
            Some(c) => c.count += 1,
            None => clusters.push(BasinCluster { representative: canon, count: 1, matched_pattern: None }),
        }
    }
    if let Some(pats) = patterns {
        for c in &mut clusters {
            for p in pats {
                let state = crate::equilibria::pattern_state(k, p);
                let canon = group.canonical_state(&state);
                if linf(&c.representative, &canon) <= CLUSTER_DIST {
                    c.matched_pattern = Some(p.id);
                    break;
                }
            }
        }
    }
    clusters.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then_with(|| a.representative.partial_cmp(&b.representative).expect("finite states"))
    });
    Ok(BasinReport { clusters, failures, samples: n_samples })
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Uniform sample from the open simplex via normalized exponentials.
fn dirichlet_uniform(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = x.iter().sum();
    for v in &mut x {
        *v /= total;
    }
    x
}
