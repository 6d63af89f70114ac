//! Run configuration: JSON config file values overlaid by flags.
//!
//! Precedence is flag > config file > built-in default. The phi/beta pair is
//! resolved after precedence so that a flag for either one overrides both
//! file values, and the materialized config always carries the consistent
//! pair phi = exp(-beta).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hwmodel::error::{Error, Result};
use hwmodel::geometry::Geography;

/// One partially specified configuration layer (file or flags).
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geo: Option<String>,
    pub alpha: Option<f64>,
    pub phi: Option<f64>,
    pub beta: Option<f64>,
    #[serde(rename = "N")]
    pub n_agents: Option<usize>,
    pub eta: Option<f64>,
    pub jumps: Option<u64>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub samples: Option<usize>,
    pub x0: Option<String>,
    pub pattern: Option<u32>,
    pub grid_phi: Option<String>,
    pub grid_alpha: Option<String>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub format: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("config file {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidParameter(format!("config file {}: {e}", path.display())))
    }
}

/// Fully resolved configuration with defaults materialized; serialized into
/// the provenance block of every run.
#[derive(Clone, Debug, Serialize)]
pub struct Resolved {
    pub geo: String,
    pub alpha: f64,
    pub phi: f64,
    pub beta: f64,
    #[serde(rename = "N")]
    pub n_agents: usize,
    pub eta: f64,
    pub jumps: u64,
    pub seed: u64,
    pub tol: Option<f64>,
    pub samples: usize,
    pub x0: Option<String>,
    pub pattern: Option<u32>,
    pub grid_phi: Option<String>,
    pub grid_alpha: Option<String>,
    pub out: PathBuf,
    pub workers: Option<usize>,
    pub format: String,
}

fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

/// Merges the two layers and materializes defaults. `default_geo` is the
/// subcommand's geography when none is given (two-zone commands use ring:2,
/// the rest square:6).
pub fn resolve(file: RunConfig, flags: RunConfig, default_geo: &str) -> Result<Resolved> {
    // A phi or beta flag overrides both file values; otherwise fall back to
    // the file, which must not set both.
    let (phi_opt, beta_opt) = if flags.phi.is_some() || flags.beta.is_some() {
        (flags.phi, flags.beta)
    } else {
        (file.phi, file.beta)
    };
    let (phi, beta) = match (phi_opt, beta_opt) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidParameter(
                "give exactly one of phi and beta, not both".into(),
            ));
        }
        (Some(p), None) => {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidParameter(format!("phi must lie in (0, 1), got {p}")));
            }
            (p, -p.ln())
        }
        (None, Some(b)) => {
            if !b.is_finite() || b <= 0.0 {
                return Err(Error::InvalidParameter(format!("beta must be positive, got {b}")));
            }
            ((-b).exp(), b)
        }
        (None, None) => (0.5, -0.5f64.ln()),
    };

    let format = pick(flags.format, file.format).unwrap_or_else(|| "csv".into());
    if format != "csv" && format != "json" {
        return Err(Error::InvalidParameter(format!("format must be csv or json, got '{format}'")));
    }
    if let Some(w) = pick(flags.workers, file.workers) {
        if w == 0 {
            return Err(Error::InvalidParameter("workers must be >= 1".into()));
        }
    }

    Ok(Resolved {
        geo: pick(flags.geo, file.geo).unwrap_or_else(|| default_geo.into()),
        alpha: pick(flags.alpha, file.alpha).unwrap_or(1.2),
        phi,
        beta,
        n_agents: pick(flags.n_agents, file.n_agents).unwrap_or(8),
        eta: pick(flags.eta, file.eta).unwrap_or(0.05),
        jumps: pick(flags.jumps, file.jumps).unwrap_or(0),
        seed: pick(flags.seed, file.seed).unwrap_or(42),
        tol: pick(flags.tol, file.tol),
        samples: pick(flags.samples, file.samples).unwrap_or(100),
        x0: pick(flags.x0, file.x0),
        pattern: pick(flags.pattern, file.pattern),
        grid_phi: pick(flags.grid_phi, file.grid_phi),
        grid_alpha: pick(flags.grid_alpha, file.grid_alpha),
        out: pick(flags.out, file.out).unwrap_or_else(|| PathBuf::from(".")),
        workers: pick(flags.workers, file.workers),
        format,
    })
}

/// Builds a geography from `kind:n` shorthand or loads it from a JSON file.
pub fn build_geography(spec: &str) -> Result<Geography> {
    if let Some((kind, size)) = spec.split_once(':') {
        let n: usize = size
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad geography size in '{spec}'")))?;
        return match kind {
            "ring" => Geography::ring(n),
            "square" => Geography::square_torus(n),
            "tri" => Geography::tri_torus(n),
            other => Err(Error::InvalidParameter(format!(
                "unknown geography kind '{other}' (expected ring, square, or tri)"
            ))),
        };
    }
    Geography::load(Path::new(spec))
        .map_err(|e| Error::InvalidParameter(format!("cannot load geography '{spec}': {e}")))
}

/// Parses a comma-separated state vector and checks it against the zone
/// count and the simplex constraints the dynamics require.
pub fn parse_state(text: &str, k: usize) -> Result<Vec<f64>> {
    let x: Vec<f64> = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad state entry '{t}'")))
        })
        .collect::<Result<_>>()?;
    if x.len() != k {
        return Err(Error::InvalidParameter(format!(
            "state has {} entries, geography has {k} zones",
            x.len()
        )));
    }
    if x.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::InvalidParameter("state entries must be finite and >= 0".into()));
    }
    Ok(x)
}
