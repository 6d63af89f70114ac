//! Parameter-space studies: two-zone bifurcation tables with thresholds,
//! (phi, alpha) partitions by global potential maximizer, and per-pattern
//! local-stability ranges along phi.

use serde::{Deserialize, Serialize};

use crate::equilibria::{classify_stability, pattern_state, StabilityReport, Verdict};
use crate::error::{Error, Result};
use crate::geometry::Geography;
use crate::model::{Model, Params};
use crate::par;
use crate::symmetry::SupportPattern;

/// Bisection width for the two-zone thresholds.
const THRESHOLD_TOL: f64 = 1e-10;
/// Bisection width for stability-range endpoints.
const RANGE_TOL: f64 = 1e-6;
/// Stability verdict tolerance used throughout the sweeps.
const VERDICT_TOL: f64 = 1e-9;

/// Evaluation grid over (phi, alpha).
#[derive(Clone, Debug)]
pub struct SweepGrid {
    pub phi_values: Vec<f64>,
    pub alpha_values: Vec<f64>,
}

impl SweepGrid {
    pub fn new(phi_values: Vec<f64>, alpha_values: Vec<f64>) -> Result<Self> {
        if phi_values.is_empty() || alpha_values.is_empty() {
            return Err(Error::InvalidParameter("empty sweep grid".into()));
        }
        if phi_values.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::InvalidParameter(
                "phi grid values must lie strictly inside (0, 1)".into(),
            ));
        }
        if alpha_values.iter().any(|&a| !a.is_finite() || a <= 0.0) {
            return Err(Error::InvalidParameter(
                "alpha grid values must be positive and finite".into(),
            ));
        }
        for w in phi_values.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidParameter(
                    "phi grid must be strictly increasing".into(),
                ));
            }
        }
        for w in alpha_values.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidParameter(
                    "alpha grid must be strictly increasing".into(),
                ));
            }
        }
        Ok(Self {
            phi_values,
            alpha_values,
        })
    }

    /// phi from 0.01 to 0.99 step 0.01; alpha from 1.0 to 3.0 step 0.05.
    pub fn default_grid() -> Self {
        Self {
            phi_values: range_values(0.01, 0.99, 0.01).unwrap(),
            alpha_values: range_values(1.0, 3.0, 0.05).unwrap(),
        }
    }
}

/// Inclusive arithmetic range a, a+step, ..., b (the endpoint is kept when
/// it lands within a relative rounding slack of the step).
pub fn range_values(a: f64, b: f64, step: f64) -> Result<Vec<f64>> {
    if !a.is_finite() || !b.is_finite() || !step.is_finite() {
        return Err(Error::InvalidParameter("range bounds must be finite".into()));
    }
    if step <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "range step must be positive, got {step}"
        )));
    }
    if b < a {
        return Err(Error::InvalidParameter(format!(
            "range end {b} below start {a}"
        )));
    }
    let span = (b - a) / step;
    let mut n = span.floor() as usize;
    if ((span - span.round()).abs()) < 1e-9 {
        n = span.round() as usize;
    }
    Ok((0..=n).map(|i| a + i as f64 * step).collect())
}

/// Parses "a:b:step" into an inclusive range of values.
pub fn parse_range(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidParameter(format!(
            "expected a range of the form start:end:step, got \"{text}\""
        )));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.trim().parse::<f64>().map_err(|_| {
                Error::InvalidParameter(format!("could not parse \"{p}\" as a number"))
            })
        })
        .collect::<Result<_>>()?;
    range_values(nums[0], nums[1], nums[2])
}

/// One phi row of the two-zone bifurcation table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BifurcationRow {
    pub phi: f64,
    pub f_dispersion: f64,
    pub f_corner: f64,
    pub dispersion_eig: f64,
    pub dispersion_stable: bool,
    pub corner_stable: bool,
    /// "dispersion", "corner", or "tie".
    pub winner: String,
}

/// Two-zone bifurcation study along phi at fixed alpha.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BifurcationReport {
    pub alpha: f64,
    pub rows: Vec<BifurcationRow>,
    /// Root of the dispersion tangent eigenvalue (loss of local stability),
    /// bisected to 1e-10 when the grid brackets a sign change.
    pub phi_star: Option<f64>,
    /// Closed form (1 - sqrt(abar)) / (1 + sqrt(abar)), abar = (alpha-1)/alpha.
    pub phi_star_closed_form: Option<f64>,
    /// Root of f(dispersion) - f(corner) (winner switch), bisected to 1e-10
    /// when the grid brackets a sign change.
    pub phi_double_star: Option<f64>,
    /// Closed form (4^a - 2 - sqrt(4^a (4^a - 4))) / 2 solving
    /// (1 + phi)^2 / phi = 4^a.
    pub phi_double_star_closed_form: Option<f64>,
    /// The same expression with discriminant 4^a (4^a - 1) instead; kept to
    /// document that this variant does not solve the winner-switch equation.
    pub phi_double_star_variant_4a_minus_1: Option<f64>,
    pub discriminant_note: String,
}

fn two_zone_models_precheck(geo: &Geography) -> Result<()> {
    if geo.k() != 2 {
        return Err(Error::InvalidParameter(format!(
            "two-zone bifurcation needs exactly 2 zones, geography has {}",
            geo.k()
        )));
    }
    let q = geo.demand();
    if (q[0] - q[1]).abs() > 1e-12 * geo.kappa() {
        return Err(Error::InvalidParameter(
            "two-zone bifurcation needs symmetric demand".into(),
        ));
    }
    Ok(())
}

fn two_zone_patterns() -> (SupportPattern, SupportPattern) {
    (
        SupportPattern {
            id: 1,
            m: 1,
            zones: vec![0],
        },
        SupportPattern {
            id: 2,
            m: 2,
            zones: vec![0, 1],
        },
    )
}

/// Classifies dispersion and corner along the phi grid and locates the two
/// thresholds: phi_star where dispersion loses local stability (tangent
/// eigenvalue sign change) and phi_double_star where the global winner
/// switches (potential equality), each refined by bisection to 1e-10.
pub fn bifurcation_2zone(
    geo: &Geography,
    alpha: f64,
    phi_grid: &[f64],
    tie_tol: f64,
) -> Result<BifurcationReport> {
    two_zone_models_precheck(geo)?;
    if phi_grid.is_empty() {
        return Err(Error::InvalidParameter("empty phi grid".into()));
    }
    let (corner, dispersion) = two_zone_patterns();

    let disp_eig = |phi: f64| -> Result<f64> {
        let model = Model::new(geo, Params::new(alpha, phi)?)?;
        Ok(classify_stability(&model, &dispersion, VERDICT_TOL)?.interior_max_eig)
    };
    let f_gap = |phi: f64| -> Result<f64> {
        let model = Model::new(geo, Params::new(alpha, phi)?)?;
        let fd = model.potential(&pattern_state(2, &dispersion))?.f;
        let fc = model.potential(&pattern_state(2, &corner))?.f;
        Ok(fd - fc)
    };

    let rows = phi_grid
        .iter()
        .map(|&phi| {
            let model = Model::new(geo, Params::new(alpha, phi)?)?;
            let rc = classify_stability(&model, &corner, VERDICT_TOL)?;
            let rd = classify_stability(&model, &dispersion, VERDICT_TOL)?;
            let gap = rd.f - rc.f;
            let winner = if gap.abs() <= tie_tol {
                "tie"
            } else if gap > 0.0 {
                "dispersion"
            } else {
                "corner"
            }
            .to_string();
            Ok(BifurcationRow {
                phi,
                f_dispersion: rd.f,
                f_corner: rc.f,
                dispersion_eig: rd.interior_max_eig,
                dispersion_stable: rd.verdict == Verdict::Stable,
                corner_stable: rc.verdict == Verdict::Stable,
                winner,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let phi_star = bisect_grid_root(phi_grid, THRESHOLD_TOL, &disp_eig)?;
    let phi_double_star = bisect_grid_root(phi_grid, THRESHOLD_TOL, &f_gap)?;

    let abar = (alpha - 1.0) / alpha;
    let phi_star_closed_form = if abar >= 0.0 {
        Some((1.0 - abar.sqrt()) / (1.0 + abar.sqrt()))
    } else {
        None
    };
    let p4 = 4f64.powf(alpha);
    let disc_ok = p4 * (p4 - 4.0);
    let phi_double_star_closed_form = if disc_ok >= 0.0 {
        Some(0.5 * (p4 - 2.0 - disc_ok.sqrt()))
    } else {
        None
    };
    let disc_variant = p4 * (p4 - 1.0);
    let phi_double_star_variant_4a_minus_1 = if disc_variant >= 0.0 {
        Some(0.5 * (p4 - 2.0 - disc_variant.sqrt()))
    } else {
        None
    };
    let discriminant_note = format!(
        "phi_double_star solves (1 + phi)^2 / phi = 4^alpha, giving \
         (4^alpha - 2 - sqrt(4^alpha*(4^alpha - 4)))/2; at alpha = {alpha} the bisection root \
         {} this form. The variant with discriminant 4^alpha*(4^alpha - 1) evaluates to {} \
         and does not solve the winner-switch equation.",
        match (phi_double_star, phi_double_star_closed_form) {
            (Some(b), Some(c)) if (b - c).abs() <= 1e-8 => "confirms",
            (Some(_), Some(_)) => "disagrees with",
            _ => "was not bracketed by the grid for",
        },
        phi_double_star_variant_4a_minus_1
            .map_or("no real value".to_string(), |v| format!("{v:.6}")),
    );

    Ok(BifurcationReport {
        alpha,
        rows,
        phi_star,
        phi_star_closed_form,
        phi_double_star,
        phi_double_star_closed_form,
        phi_double_star_variant_4a_minus_1,
        discriminant_note,
    })
}

/// Finds the first sign change of `f` between consecutive grid points and
/// bisects it down to `tol` width. Returns None without a bracket.
fn bisect_grid_root(
    grid: &[f64],
    tol: f64,
    f: &impl Fn(f64) -> Result<f64>,
) -> Result<Option<f64>> {
    let mut prev = (grid[0], f(grid[0])?);
    for &phi in &grid[1..] {
        let cur = (phi, f(phi)?);
        if prev.1 == 0.0 {
            return Ok(Some(prev.0));
        }
        if prev.1.signum() != cur.1.signum() {
            let (mut lo, mut hi) = (prev.0, cur.0);
            let lo_sign = prev.1.signum();
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                let val = f(mid)?;
                if val == 0.0 {
                    return Ok(Some(mid));
                }
                if val.signum() == lo_sign {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(Some(0.5 * (lo + hi)));
        }
        prev = cur;
    }
    Ok(None)
}

/// Winners of one (phi, alpha) grid cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartitionCell {
    pub phi: f64,
    pub alpha: f64,
    /// Pattern ids within tie_tol of the maximum, ascending.
    pub winner_ids: Vec<u32>,
    /// Largest support size among the winners.
    pub winner_m: usize,
    pub f_max: f64,
}

/// Log proximity mass of each zone against a support: for the state with
/// mass 1/M on the support, sum_j q_j ln S_j = a - alpha Q ln M with
/// a = sum_j q_j ln(sum_{k in S} w_jk). Caching `a` per (pattern, phi) makes
/// alpha evaluation free.
fn pattern_log_mass(geo: &Geography, w: &nalgebra::DMatrix<f64>, pattern: &SupportPattern) -> f64 {
    let q = geo.demand();
    let mut a = 0.0;
    for j in 0..geo.k() {
        let mut s = 0.0;
        for &z in &pattern.zones {
            s += w[(j, z as usize)];
        }
        a += q[j] * s.ln();
    }
    a
}

fn potential_from_log_mass(a: f64, alpha: f64, q_total: f64, m: usize) -> f64 {
    a / alpha - q_total * (m as f64).ln() - q_total
}

/// Evaluates the potential of every candidate pattern on the grid and
/// records the winning patterns per cell. Cells are ordered phi-major, then
/// alpha. phi columns are processed concurrently.
pub fn partition(
    geo: &Geography,
    patterns: &[SupportPattern],
    grid: &SweepGrid,
    tie_tol: f64,
) -> Result<Vec<PartitionCell>> {
    if patterns.is_empty() {
        return Err(Error::InvalidParameter("no candidate patterns".into()));
    }
    if !tie_tol.is_finite() || tie_tol < 0.0 {
        return Err(Error::InvalidParameter("tie_tol must be nonnegative".into()));
    }
    let q_total = geo.kappa();
    let columns = par::map(&grid.phi_values, |&phi| -> Result<Vec<PartitionCell>> {
        let w = geo.proximity(phi)?;
        let log_mass: Vec<f64> = patterns
            .iter()
            .map(|p| pattern_log_mass(geo, &w, p))
            .collect();
        let mut cells = Vec::with_capacity(grid.alpha_values.len());
        for &alpha in &grid.alpha_values {
            let mut f_max = f64::NEG_INFINITY;
            for (p, &a) in patterns.iter().zip(&log_mass) {
                let f = potential_from_log_mass(a, alpha, q_total, p.m);
                if f > f_max {
                    f_max = f;
                }
            }
            let mut winner_ids = Vec::new();
            let mut winner_m = 0;
            for (p, &a) in patterns.iter().zip(&log_mass) {
                let f = potential_from_log_mass(a, alpha, q_total, p.m);
                if f_max - f <= tie_tol {
                    winner_ids.push(p.id);
                    winner_m = winner_m.max(p.m);
                }
            }
            winner_ids.sort_unstable();
            cells.push(PartitionCell {
                phi,
                alpha,
                winner_ids,
                winner_m,
                f_max,
            });
        }
        Ok(cells)
    });
    let mut out = Vec::with_capacity(grid.phi_values.len() * grid.alpha_values.len());
    for col in columns {
        out.extend(col?);
    }
    Ok(out)
}

/// Collapses consecutive equal values into the sequence of regimes.
pub fn regimes<T: PartialEq + Copy>(values: impl IntoIterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for v in values {
        if out.last() != Some(&v) {
            out.push(v);
        }
    }
    out
}

/// A closed phi interval.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PhiInterval {
    pub lo: f64,
    pub hi: f64,
}

/// Stability and winner ranges of one pattern along phi at fixed alpha.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PatternRanges {
    pub pattern_id: u32,
    pub m: usize,
    /// Maximal phi intervals where the pattern is locally stable.
    pub locally_stable: Vec<PhiInterval>,
    /// Maximal phi intervals where the pattern is a global winner among the
    /// candidates.
    pub global_winner: Vec<PhiInterval>,
}

/// Per-pattern stability and winner ranges along the phi grid; interval
/// endpoints between grid points are refined by bisection to 1e-6. Patterns
/// are processed concurrently.
pub fn stability_ranges(
    geo: &Geography,
    patterns: &[SupportPattern],
    alpha: f64,
    phi_grid: &[f64],
    tie_tol: f64,
) -> Result<Vec<PatternRanges>> {
    if phi_grid.len() < 2 {
        return Err(Error::InvalidParameter(
            "stability ranges need at least two phi grid points".into(),
        ));
    }
    let q_total = geo.kappa();
    // Winner flags for all patterns at one phi, from the shared fast path.
    let winners_at = |phi: f64| -> Result<Vec<bool>> {
        let w = geo.proximity(phi)?;
        let fs: Vec<f64> = patterns
            .iter()
            .map(|p| potential_from_log_mass(pattern_log_mass(geo, &w, p), alpha, q_total, p.m))
            .collect();
        let f_max = fs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(fs.iter().map(|&f| f_max - f <= tie_tol).collect())
    };

    let reports = par::map(patterns, |pattern| -> Result<PatternRanges> {
        let stable_at = |phi: f64| -> Result<bool> {
            let model = Model::new(geo, Params::new(alpha, phi)?)?;
            Ok(classify_stability(&model, pattern, VERDICT_TOL)?.verdict == Verdict::Stable)
        };
        let idx = patterns
            .iter()
            .position(|p| p.id == pattern.id)
            .expect("pattern from own slice");
        let winner_at = |phi: f64| -> Result<bool> { Ok(winners_at(phi)?[idx]) };
        Ok(PatternRanges {
            pattern_id: pattern.id,
            m: pattern.m,
            locally_stable: indicator_intervals(phi_grid, RANGE_TOL, &stable_at)?,
            global_winner: indicator_intervals(phi_grid, RANGE_TOL, &winner_at)?,
        })
    });
    reports.into_iter().collect()
}

/// Maximal intervals where the indicator holds, sampled on the grid with
/// endpoints refined by bisection between grid points of opposite value.
fn indicator_intervals(
    grid: &[f64],
    tol: f64,
    ind: &impl Fn(f64) -> Result<bool>,
) -> Result<Vec<PhiInterval>> {
    let flags: Vec<bool> = grid.iter().map(|&p| ind(p)).collect::<Result<_>>()?;
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    for i in 0..grid.len() {
        if flags[i] && start.is_none() {
            let lo = if i == 0 {
                grid[0]
            } else {
                bisect_indicator(grid[i - 1], grid[i], tol, false, ind)?
            };
            start = Some(lo);
        }
        if !flags[i] {
            if let Some(lo) = start.take() {
                let hi = bisect_indicator(grid[i - 1], grid[i], tol, true, ind)?;
                out.push(PhiInterval { lo, hi });
            }
        }
    }
    if let Some(lo) = start {
        out.push(PhiInterval {
            lo,
            hi: *grid.last().unwrap(),
        });
    }
    Ok(out)
}

/// Bisects the switch point of a boolean indicator on [lo, hi], where the
/// indicator at lo equals `lo_value` and differs at hi.
fn bisect_indicator(
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    lo_value: bool,
    ind: &impl Fn(f64) -> Result<bool>,
) -> Result<f64> {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if ind(mid)? == lo_value {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// CSV export of a partition: phi,alpha,winner_ids,winner_M,f_max with
/// winner ids ';'-joined.
pub fn partition_csv(cells: &[PartitionCell]) -> String {
    let mut out = String::from("phi,alpha,winner_ids,winner_M,f_max\n");
    for c in cells {
        let ids: Vec<String> = c.winner_ids.iter().map(|i| i.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.phi,
            c.alpha,
            ids.join(";"),
            c.winner_m,
            c.f_max
        ));
    }
    out
}

/// CSV export of per-pattern stability classifications over a phi grid.
pub fn stability_csv(alpha: f64, rows: &[(f64, StabilityReport)]) -> String {
    let mut out = String::from("pattern_id,M,phi,alpha,boundary_margin,interior_max_eig,verdict,f\n");
    for (phi, r) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.pattern_id,
            r.m,
            phi,
            alpha,
            r.boundary_margin,
            r.interior_max_eig,
            r.verdict.as_str(),
            r.f
        ));
    }
    out
}

/// CSV export of a bifurcation table.
pub fn bifurcation_csv(report: &BifurcationReport) -> String {
    let mut out = String::from(
        "phi,alpha,f_dispersion,f_corner,dispersion_eig,dispersion_stable,corner_stable,winner\n",
    );
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.phi,
            report.alpha,
            r.f_dispersion,
            r.f_corner,
            r.dispersion_eig,
            r.dispersion_stable,
            r.corner_stable,
            r.winner
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::select_global;
    use crate::symmetry::{invariant_supports, PermGroup};
    use approx::assert_abs_diff_eq;

    fn catalog(geo: &Geography) -> Vec<SupportPattern> {
        let group = PermGroup::for_geography(geo).unwrap();
        let subs = group.subgroups().unwrap();
        invariant_supports(&group, &subs)
    }

    #[test]
    fn ranges_parse_inclusively() {
        let v = parse_range("0.1:0.5:0.1").unwrap();
        assert_eq!(v.len(), 5);
        assert_abs_diff_eq!(v[0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(v[4], 0.5, epsilon = 1e-12);
        assert!(parse_range("0.5:0.1:0.1").is_err());
        assert!(parse_range("0.1:0.5").is_err());
        assert!(parse_range("a:b:c").is_err());
        let single = parse_range("0.3:0.3:0.1").unwrap();
        assert_eq!(single, vec![0.3]);
    }

    #[test]
    fn default_grid_has_expected_shape() {
        let g = SweepGrid::default_grid();
        assert_eq!(g.phi_values.len(), 99);
        assert_eq!(g.alpha_values.len(), 41);
        assert_abs_diff_eq!(g.phi_values[98], 0.99, epsilon = 1e-12);
        assert_abs_diff_eq!(g.alpha_values[40], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn grid_rejects_out_of_range_phi() {
        assert!(SweepGrid::new(vec![0.0, 0.5], vec![1.0]).is_err());
        assert!(SweepGrid::new(vec![0.5, 1.0], vec![1.0]).is_err());
        assert!(SweepGrid::new(vec![0.5, 0.4], vec![1.0]).is_err());
        assert!(SweepGrid::new(vec![0.5], vec![]).is_err());
    }

    #[test]
    fn two_zone_thresholds_match_closed_forms() {
        let geo = Geography::ring(2).unwrap();
        let grid = range_values(0.01, 0.99, 0.01).unwrap();
        let rep = bifurcation_2zone(&geo, 1.2, &grid, 1e-10).unwrap();
        let star = rep.phi_star.unwrap();
        let star_cf = rep.phi_star_closed_form.unwrap();
        assert_abs_diff_eq!(star, star_cf, epsilon = 1e-8);
        assert_abs_diff_eq!(star, 0.420204103, epsilon = 1e-8);
        let dstar = rep.phi_double_star.unwrap();
        let dstar_cf = rep.phi_double_star_closed_form.unwrap();
        assert_abs_diff_eq!(dstar, dstar_cf, epsilon = 1e-8);
        assert_abs_diff_eq!(dstar, 0.340411623, epsilon = 1e-8);
        assert!(dstar < star);
        // The wrong-discriminant variant falls outside (0, 1) and the note
        // says the bisection confirms the corrected form.
        let variant = rep.phi_double_star_variant_4a_minus_1.unwrap();
        assert!(!(0.0..=1.0).contains(&variant));
        assert!(rep.discriminant_note.contains("confirms"));
        assert!(rep.discriminant_note.contains("4^alpha*(4^alpha - 1)"));
    }

    #[test]
    fn ordering_of_thresholds_holds_across_alpha() {
        let geo = Geography::ring(2).unwrap();
        let grid = range_values(0.01, 0.99, 0.01).unwrap();
        for alpha in [1.1, 1.2, 1.5, 2.0] {
            let rep = bifurcation_2zone(&geo, alpha, &grid, 1e-10).unwrap();
            let star = rep.phi_star.unwrap();
            let dstar = rep.phi_double_star.unwrap();
            assert_abs_diff_eq!(star, rep.phi_star_closed_form.unwrap(), epsilon = 1e-8);
            assert_abs_diff_eq!(
                dstar,
                rep.phi_double_star_closed_form.unwrap(),
                epsilon = 1e-8
            );
            assert!(dstar < star, "alpha = {alpha}: {dstar} vs {star}");
        }
    }

    #[test]
    fn bifurcation_rows_classify_and_pick_winners() {
        let geo = Geography::ring(2).unwrap();
        let grid = vec![0.1, 0.9];
        let rep = bifurcation_2zone(&geo, 1.2, &grid, 1e-10).unwrap();
        let low = &rep.rows[0];
        assert!(low.dispersion_stable && low.corner_stable);
        assert_eq!(low.winner, "dispersion");
        let high = &rep.rows[1];
        assert!(!high.dispersion_stable && high.corner_stable);
        assert_eq!(high.winner, "corner");
    }

    #[test]
    fn partition_fast_path_matches_direct_potentials() {
        let geo = Geography::square_torus(4).unwrap();
        let pats = catalog(&geo);
        let grid = SweepGrid::new(vec![0.2, 0.6], vec![1.1, 2.0]).unwrap();
        let cells = partition(&geo, &pats, &grid, 1e-10).unwrap();
        assert_eq!(cells.len(), 4);
        for cell in &cells {
            let model = Model::new(&geo, Params::new(cell.alpha, cell.phi).unwrap()).unwrap();
            let sel = select_global(&model, &pats, 1e-10).unwrap();
            assert_abs_diff_eq!(cell.f_max, sel.f_max, epsilon = 1e-12);
            assert_eq!(cell.winner_ids, sel.winner_ids);
            assert_eq!(cell.winner_m, sel.winner_m);
        }
    }

    #[test]
    fn square_row_regimes_at_alpha_1_2() {
        let geo = Geography::square_torus(6).unwrap();
        let pats = catalog(&geo);
        let grid = SweepGrid::new(range_values(0.001, 0.99, 0.001).unwrap(), vec![1.2]).unwrap();
        let cells = partition(&geo, &pats, &grid, 1e-10).unwrap();
        let seq = regimes(cells.iter().map(|c| c.winner_m));
        assert_eq!(seq, vec![36, 18, 12, 8, 6, 4, 2, 1]);
    }

    #[test]
    fn square_row_regimes_at_alpha_2_5_skip_two_sizes() {
        let geo = Geography::square_torus(6).unwrap();
        let pats = catalog(&geo);
        let grid = SweepGrid::new(range_values(0.001, 0.99, 0.001).unwrap(), vec![2.5]).unwrap();
        let cells = partition(&geo, &pats, &grid, 1e-10).unwrap();
        let seq = regimes(cells.iter().map(|c| c.winner_m));
        assert_eq!(seq, vec![36, 8, 6, 4, 2, 1]);
        assert!(!seq.contains(&18) && !seq.contains(&12));
    }

    #[test]
    fn winner_sizes_are_monotone_on_both_lattices() {
        for geo in [
            Geography::square_torus(6).unwrap(),
            Geography::tri_torus(6).unwrap(),
        ] {
            let pats = catalog(&geo);
            let grid = SweepGrid::default_grid();
            let cells = partition(&geo, &pats, &grid, 1e-10).unwrap();
            let n_alpha = grid.alpha_values.len();
            // phi-major layout: rows are fixed alpha over increasing phi.
            for ai in 0..n_alpha {
                let mut prev = usize::MAX;
                for pi in 0..grid.phi_values.len() {
                    let m = cells[pi * n_alpha + ai].winner_m;
                    assert!(m <= prev, "winner size grew along phi");
                    prev = m;
                }
            }
            for pi in 0..grid.phi_values.len() {
                let mut prev = usize::MAX;
                for ai in 0..n_alpha {
                    let m = cells[pi * n_alpha + ai].winner_m;
                    assert!(m <= prev, "winner size grew along alpha");
                    prev = m;
                }
            }
        }
    }

    #[test]
    fn tri_lattice_default_grid_winner_sizes() {
        // Measured winner-size set on the full default grid; 18 never wins
        // under the lattice graph metric (closest deficit is ~1.8e-7).
        let geo = Geography::tri_torus(6).unwrap();
        let pats = catalog(&geo);
        let cells = partition(&geo, &pats, &SweepGrid::default_grid(), 1e-10).unwrap();
        let mut sizes: Vec<usize> = cells.iter().map(|c| c.winner_m).collect();
        sizes.sort_unstable();
        sizes.dedup();
        assert_eq!(sizes, vec![1, 2, 3, 4, 6, 8, 12, 24, 36]);
    }

    #[test]
    fn winners_are_locally_stable_away_from_boundaries() {
        let geo = Geography::square_torus(6).unwrap();
        let pats = catalog(&geo);
        for phi in [0.1, 0.3, 0.7] {
            let model = Model::new(&geo, Params::new(1.2, phi).unwrap()).unwrap();
            let sel = select_global(&model, &pats, 1e-10).unwrap();
            for id in &sel.winner_ids {
                let p = pats.iter().find(|p| p.id == *id).unwrap();
                let rep = classify_stability(&model, p, VERDICT_TOL).unwrap();
                assert_ne!(rep.verdict, Verdict::Unstable, "winner {id} unstable");
            }
        }
    }

    #[test]
    fn two_zone_stability_range_ends_at_phi_star() {
        let geo = Geography::ring(2).unwrap();
        let (corner, dispersion) = two_zone_patterns();
        let pats = vec![corner, dispersion];
        let grid = range_values(0.05, 0.95, 0.05).unwrap();
        let ranges = stability_ranges(&geo, &pats, 1.2, &grid, 1e-10).unwrap();
        let disp = ranges.iter().find(|r| r.pattern_id == 2).unwrap();
        assert_eq!(disp.locally_stable.len(), 1);
        let iv = disp.locally_stable[0];
        assert_abs_diff_eq!(iv.lo, 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(iv.hi, 0.420204103, epsilon = 2e-6);
        // Corner stays locally stable across the whole grid and becomes the
        // winner above the potential crossover.
        let corner = ranges.iter().find(|r| r.pattern_id == 1).unwrap();
        assert_eq!(corner.locally_stable.len(), 1);
        assert_abs_diff_eq!(corner.locally_stable[0].lo, 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(corner.locally_stable[0].hi, 0.95, epsilon = 1e-12);
        assert_eq!(corner.global_winner.len(), 1);
        assert_abs_diff_eq!(corner.global_winner[0].lo, 0.340411623, epsilon = 2e-6);
    }

    #[test]
    fn square_patterns_all_stable_at_low_phi_for_moderate_alpha() {
        let geo = Geography::square_torus(6).unwrap();
        let pats = catalog(&geo);
        let stable_count = |alpha: f64| -> usize {
            let model = Model::new(&geo, Params::new(alpha, 0.1).unwrap()).unwrap();
            pats.iter()
                .filter(|p| {
                    classify_stability(&model, p, VERDICT_TOL).unwrap().verdict == Verdict::Stable
                })
                .count()
        };
        assert_eq!(stable_count(1.2), pats.len());
        assert!(stable_count(2.5) < pats.len());
    }

    #[test]
    fn csv_exports_have_stable_headers() {
        let geo = Geography::ring(2).unwrap();
        let (corner, dispersion) = two_zone_patterns();
        let grid = SweepGrid::new(vec![0.2, 0.5], vec![1.2]).unwrap();
        let cells = partition(&geo, &[corner.clone(), dispersion], &grid, 1e-10).unwrap();
        let csv = partition_csv(&cells);
        assert!(csv.starts_with("phi,alpha,winner_ids,winner_M,f_max\n"));
        assert_eq!(csv.lines().count(), 3);

        let model = Model::new(&geo, Params::new(1.2, 0.2).unwrap()).unwrap();
        let rep = classify_stability(&model, &corner, VERDICT_TOL).unwrap();
        let csv = stability_csv(1.2, &[(0.2, rep)]);
        assert!(csv.starts_with("pattern_id,M,phi,alpha,"));

        let brep = bifurcation_2zone(&geo, 1.2, &[0.2, 0.5], 1e-10).unwrap();
        let csv = bifurcation_csv(&brep);
        assert!(csv.starts_with("phi,alpha,f_dispersion,f_corner,"));
        assert_eq!(csv.lines().count(), 3);
    }
}
