//! Subcommand implementations and provenance emission.
//!
//! Every successful run writes its data artifacts into the output directory
//! plus a `provenance.json` recording the command, argv, crate versions,
//! resolved configuration, seed, worker count, wall time, and the list of
//! files written. Data artifacts are deterministic for a fixed config and
//! seed; only the provenance wall time varies between repeat runs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};

use hwmodel::dynamics::{basin_sample, integrate, IntegrateOptions};
use hwmodel::equilibria::{classify_stability, select_global, StabilityReport, Verdict};
use hwmodel::error::{Error, Result};
use hwmodel::figure;
use hwmodel::geometry::Geography;
use hwmodel::model::{Model, Params};
use hwmodel::par;
use hwmodel::stochastic::{
    fit_discrete_potential, quotient_measure, simulate, stationary_exact, transition_matrix,
    tv_distance, ChainSpec, StationaryResult,
};
use hwmodel::sweep::{
    bifurcation_2zone, bifurcation_csv, parse_range, partition, partition_csv, range_values,
    stability_csv, stability_ranges, BifurcationReport, PartitionCell, PatternRanges, SweepGrid,
};
use hwmodel::symmetry::{invariant_supports, PermGroup, SupportPattern};

use crate::config::{self, build_geography, parse_state, Resolved, RunConfig};
use crate::{Cli, Command, ModelArgs};

/// Default tie tolerance when comparing potential values across patterns.
const TIE_TOL: f64 = 1e-10;
/// Default tolerance for stability verdicts.
const VERDICT_TOL: f64 = 1e-9;
/// Largest state space whose fitted potential is embedded in chain.json.
const FIT_EMBED_LIMIT: usize = 10_000;

pub fn run(cli: Cli) -> Result<()> {
    let started = Instant::now();
    let argv: Vec<String> = std::env::args().collect();
    let name = cli.command.name();
    let file_cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let flag_cfg = flag_layer(&cli);
    let cfg = config::resolve(file_cfg, flag_cfg, default_geo(name))?;
    par::install_workers(cfg.workers)?;
    fs::create_dir_all(&cfg.out)?;

    let outputs = match &cli.command {
        Command::Geom { .. } => cmd_geom(&cfg)?,
        Command::Enumerate { .. } => cmd_enumerate(&cfg)?,
        Command::Stability { .. } => cmd_stability(&cfg)?,
        Command::Select { .. } => cmd_select(&cfg)?,
        Command::Dynamics { .. } => cmd_dynamics(&cfg)?,
        Command::Chain { .. } => cmd_chain(&cfg)?,
        Command::Bifurcate { .. } => cmd_bifurcate(&cfg)?,
        Command::Partition { .. } => cmd_partition(&cfg)?,
        Command::Plot { input } => cmd_plot(&cfg, input)?,
    };

    let wall_ms = started.elapsed().as_millis() as u64;
    write_provenance(name, &argv, &cfg, wall_ms, &outputs)
}

/// Two-zone commands default to the minimal symmetric geography; everything
/// else defaults to the 6x6 square lattice.
fn default_geo(command: &str) -> &'static str {
    match command {
        "chain" | "bifurcate" => "ring:2",
        _ => "square:6",
    }
}

fn model_layer(m: &ModelArgs) -> RunConfig {
    RunConfig {
        geo: m.geo.clone(),
        alpha: m.alpha,
        phi: m.phi,
        beta: m.beta,
        seed: m.seed,
        tol: m.tol,
        ..Default::default()
    }
}

/// Collects every flag the user actually passed into one overlay layer.
fn flag_layer(cli: &Cli) -> RunConfig {
    let mut layer = match &cli.command {
        Command::Geom { model }
        | Command::Enumerate { model }
        | Command::Select { model }
        | Command::Bifurcate { model, .. }
        | Command::Partition { model, .. }
        | Command::Stability { model, .. }
        | Command::Dynamics { model, .. }
        | Command::Chain { model, .. } => model_layer(model),
        Command::Plot { .. } => RunConfig::default(),
    };
    match &cli.command {
        Command::Stability { pattern, grid_phi, .. } => {
            layer.pattern = *pattern;
            layer.grid_phi = grid_phi.clone();
        }
        Command::Dynamics { samples, x0, .. } => {
            layer.samples = *samples;
            layer.x0 = x0.clone();
        }
        Command::Chain { n_agents, eta, jumps, .. } => {
            layer.n_agents = *n_agents;
            layer.eta = *eta;
            layer.jumps = *jumps;
        }
        Command::Bifurcate { grid_phi, .. } => {
            layer.grid_phi = grid_phi.clone();
        }
        Command::Partition { grid_phi, grid_alpha, .. } => {
            layer.grid_phi = grid_phi.clone();
            layer.grid_alpha = grid_alpha.clone();
        }
        _ => {}
    }
    layer.out = cli.out.clone();
    layer.workers = cli.workers;
    layer.format = cli.format.clone();
    layer
}

fn write_provenance(
    command: &str,
    argv: &[String],
    cfg: &Resolved,
    wall_ms: u64,
    outputs: &[String],
) -> Result<()> {
    let prov = json!({
        "command": command,
        "argv": argv,
        "versions": {
            "hwmodel": hwmodel::VERSION,
            "hwmodel-cli": env!("CARGO_PKG_VERSION"),
            "parallel": cfg!(feature = "parallel"),
        },
        "config": cfg,
        "seed": cfg.seed,
        "workers": cfg.workers,
        "wall_ms": wall_ms,
        "outputs": outputs,
    });
    write_json(&cfg.out, "provenance.json", &prov)?;
    Ok(())
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(name.to_string())
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<String> {
    fs::write(dir.join(name), text)?;
    Ok(name.to_string())
}

/// Symmetry catalog of a geography: full group plus invariant supports.
fn catalog(geo: &Geography) -> Result<(PermGroup, Vec<SupportPattern>)> {
    let group = PermGroup::for_geography(geo)?;
    let subs = group.subgroups()?;
    let patterns = invariant_supports(&group, &subs);
    Ok((group, patterns))
}

fn keep_pattern(patterns: Vec<SupportPattern>, id: Option<u32>) -> Result<Vec<SupportPattern>> {
    match id {
        None => Ok(patterns),
        Some(id) => {
            let picked: Vec<_> = patterns.into_iter().filter(|p| p.id == id).collect();
            if picked.is_empty() {
                return Err(Error::InvalidParameter(format!("no pattern with id {id} in the catalog")));
            }
            Ok(picked)
        }
    }
}

fn model_at<'a>(geo: &'a Geography, cfg: &Resolved) -> Result<Model<'a>> {
    Model::new(geo, Params::new(cfg.alpha, cfg.phi)?)
}

fn phi_grid_or(cfg: &Resolved, default: (f64, f64, f64)) -> Result<Vec<f64>> {
    match &cfg.grid_phi {
        Some(spec) => parse_range(spec),
        None => range_values(default.0, default.1, default.2),
    }
}

fn cmd_geom(cfg: &Resolved) -> Result<Vec<String>> {
    let geo = build_geography(&cfg.geo)?;
    geo.save(&cfg.out.join("geography.json"))?;
    println!("kind = {}", geo.kind().as_str());
    println!("zones = {}", geo.k());
    println!("kappa = {}", geo.kappa());
    println!("max distance = {}", geo.max_dist());
    Ok(vec!["geography.json".into()])
}

fn cmd_enumerate(cfg: &Resolved) -> Result<Vec<String>> {
    let geo = build_geography(&cfg.geo)?;
    let (_, patterns) = catalog(&geo)?;
    println!("{}", patterns.len());
    let mut outputs = vec![write_json(&cfg.out, "patterns.json", &serde_json::to_value(&patterns)?)?];
    if cfg.format == "csv" {
        let mut csv = String::from("id,M,zones\n");
        for p in &patterns {
            let zones: Vec<String> = p.zones.iter().map(u16::to_string).collect();
            writeln!(csv, "{},{},{}", p.id, p.m, zones.join(";")).unwrap();
        }
        outputs.push(write_text(&cfg.out, "patterns.csv", &csv)?);
    }
    Ok(outputs)
}

fn cmd_stability(cfg: &Resolved) -> Result<Vec<String>> {
    let geo = build_geography(&cfg.geo)?;
    let (_, patterns) = catalog(&geo)?;
    let patterns = keep_pattern(patterns, cfg.pattern)?;

    if cfg.grid_phi.is_some() {
        let grid = phi_grid_or(cfg, (0.01, 0.99, 0.01))?;
        let tie_tol = cfg.tol.unwrap_or(TIE_TOL);
        let ranges = stability_ranges(&geo, &patterns, cfg.alpha, &grid, tie_tol)?;
        let mut outputs = vec![write_json(
            &cfg.out,
            "stability_ranges.json",
            &json!({ "alpha": cfg.alpha, "ranges": ranges }),
        )?];
        if cfg.format == "csv" {
            outputs.push(write_text(&cfg.out, "stability_ranges.csv", &ranges_csv(&ranges, cfg.alpha))?);
        }
        let with_stable = ranges.iter().filter(|r| !r.locally_stable.is_empty()).count();
        let with_winner = ranges.iter().filter(|r| !r.global_winner.is_empty()).count();
        println!(
            "{} of {} patterns locally stable somewhere, {} ever the global winner (alpha = {})",
            with_stable,
            ranges.len(),
            with_winner,
            cfg.alpha
        );
        return Ok(outputs);
    }

    let model = model_at(&geo, cfg)?;
    let tol = cfg.tol.unwrap_or(VERDICT_TOL);
    let reports: Vec<Result<StabilityReport>> =
        par::map(&patterns, |p| classify_stability(&model, p, tol));
    let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;
    let count = |v: Verdict| reports.iter().filter(|r| r.verdict == v).count();
    println!(
        "stable {} / unstable {} / marginal {} of {} patterns (alpha = {}, phi = {})",
        count(Verdict::Stable),
        count(Verdict::Unstable),
        count(Verdict::Marginal),
        reports.len(),
        cfg.alpha,
        cfg.phi
    );
    let mut outputs = vec![write_json(
        &cfg.out,
        "stability.json",
        &json!({ "alpha": cfg.alpha, "phi": cfg.phi, "reports": reports }),
    )?];
    if cfg.format == "csv" {
        let rows: Vec<(f64, StabilityReport)> = reports.into_iter().map(|r| (cfg.phi, r)).collect();
        outputs.push(write_text(&cfg.out, "stability.csv", &stability_csv(cfg.alpha, &rows))?);
    }
    Ok(outputs)
}

fn ranges_csv(ranges: &[PatternRanges], alpha: f64) -> String {
    let mut out = String::from("pattern_id,M,alpha,kind,phi_lo,phi_hi\n");
    for r in ranges {
        for iv in &r.locally_stable {
            writeln!(out, "{},{},{},stable,{},{}", r.pattern_id, r.m, alpha, iv.lo, iv.hi).unwrap();
        }
        for iv in &r.global_winner {
            writeln!(out, "{},{},{},winner,{},{}", r.pattern_id, r.m, alpha, iv.lo, iv.hi).unwrap();
        }
    }
    out
}

fn cmd_select(cfg: &Resolved) -> Result<Vec<String>> {
    let geo = build_geography(&cfg.geo)?;
    let (_, patterns) = catalog(&geo)?;
    let model = model_at(&geo, cfg)?;
    let sel = select_global(&model, &patterns, cfg.tol.unwrap_or(TIE_TOL))?;
    println!(
        "winners = {:?} (M = {}), f_max = {}",
        sel.winner_ids, sel.winner_m, sel.f_max
    );
    let mut outputs = vec![write_json(
        &cfg.out,
        "select.json",
        &json!({ "alpha": cfg.alpha, "phi": cfg.phi, "selection": sel }),
    )?];
    if cfg.format == "csv" {
        let mut csv = String::from("pattern_id,f,winner\n");
        for (id, f) in &sel.values {
            writeln!(csv, "{},{},{}", id, f, sel.winner_ids.contains(id)).unwrap();
        }
        outputs.push(write_text(&cfg.out, "select.csv", &csv)?);
    }
    Ok(outputs)
}

fn cmd_dynamics(cfg: &Resolved) -> Result<Vec<String>> {
    let geo = build_geography(&cfg.geo)?;
    let model = model_at(&geo, cfg)?;
    let mut opts = IntegrateOptions::default();
    if let Some(t) = cfg.tol {
        opts.residual_tol = t;
    }

    if let Some(text) = &cfg.x0 {
        let x0 = parse_state(text, model.k())?;
        let tr = integrate(&model, &x0, &opts)?;
        println!(
            "converged = {}, t_final = {}, residual = {:e}",
            tr.converged,
            tr.final_time(),
            tr.final_residual
        );
        let mut outputs = vec![write_json(
            &cfg.out,
            "trajectory.json",
            &json!({
                "converged": tr.converged,
                "t_final": tr.final_time(),
                "final_residual": tr.final_residual,
                "accepted_steps": tr.accepted_steps,
                "rejected_steps": tr.rejected_steps,
                "final_state": tr.final_state(),
            }),
        )?];
        if cfg.format == "csv" {
            let mut csv = String::from("t");
            for i in 0..model.k() {
                write!(csv, ",x{i}").unwrap();
            }
            csv.push('\n');
            for (t, x) in tr.times.iter().zip(&tr.states) {
                write!(csv, "{t}").unwrap();
                for v in x {
                    write!(csv, ",{v}").unwrap();
                }
                csv.push('\n');
            }
            outputs.push(write_text(&cfg.out, "trajectory.csv", &csv)?);
        }
        return Ok(outputs);
    }

    let (group, patterns) = catalog(&geo)?;
    opts.record = false;
    let report = basin_sample(&model, &group, Some(&patterns), cfg.samples, cfg.seed, &opts)?;
    println!(
        "{} clusters from {} samples ({} failures)",
        report.clusters.len(),
        report.samples,
        report.failures
    );
    for c in report.clusters.iter().take(5) {
        println!("  count {:>5}  pattern {:?}", c.count, c.matched_pattern);
    }
    let clusters: Vec<Value> = report
        .clusters
        .iter()
        .map(|c| {
            json!({
                "count": c.count,
                "matched_pattern": c.matched_pattern,
                "representative": c.representative,
            })
        })
        .collect();
    let mut outputs = vec![write_json(
        &cfg.out,
        "dynamics.json",
        &json!({
            "alpha": cfg.alpha,
            "phi": cfg.phi,
            "seed": cfg.seed,
            "samples": report.samples,
            "failures": report.failures,
            "clusters": clusters,
        }),
    )?];
    if cfg.format == "csv" {
        let mut csv = String::from("cluster,count,matched_pattern,representative\n");
        for (i, c) in report.clusters.iter().enumerate() {
            let rep: Vec<String> = c.representative.iter().map(f64::to_string).collect();
            let id = c.matched_pattern.map_or(String::new(), |v| v.to_string());
            writeln!(csv, "{},{},{},{}", i, c.count, id, rep.join(";")).unwrap();
        }
        outputs.push(write_text(&cfg.out, "dynamics.csv", &csv)?);
    }
    Ok(outputs)
}

fn cmd_chain(cfg: &Resolved) -> Result<Vec<String>> {
    let geo = build_geography(&cfg.geo)?;
    let model = model_at(&geo, cfg)?;
    let spec = ChainSpec::new(&model, cfg.n_agents, cfg.eta)?;

    // Exact solve when the state space fits; with --jumps the command falls
    // back to simulation-only on oversized spaces instead of failing.
    let exact: Option<StationaryResult> = match transition_matrix(&spec) {
        Ok(tm) => Some(stationary_exact(&tm)?),
        Err(Error::Unsupported(msg)) => {
            if cfg.jumps == 0 {
                return Err(Error::Unsupported(msg));
            }
            eprintln!("note: {msg}");
            None
        }
        Err(e) => return Err(e),
    };

    let mut outputs = Vec::new();
    let mut chain_doc = json!({
        "geo": cfg.geo,
        "alpha": cfg.alpha,
        "phi": cfg.phi,
        "N": cfg.n_agents,
        "eta": cfg.eta,
    });

    if let Some(st) = &exact {
        println!("states = {}", st.states.len());
        println!("method = {}", st.method.as_str());
        for (state, p) in top_of(&st.measure(), 3) {
            println!("  p = {p:.6}  counts = {state:?}");
        }
        outputs.push(write_text(&cfg.out, "stationary.csv", &st.to_csv())?);
        chain_doc["method"] = json!(st.method.as_str());
        chain_doc["n_states"] = json!(st.states.len());
        let fit = fit_discrete_potential(cfg.eta, st)?;
        chain_doc["fit"] = if st.states.len() <= FIT_EMBED_LIMIT {
            json!({
                "pin_index": fit.pin_index,
                "excluded": fit.excluded,
                "values": fit.values,
            })
        } else {
            json!({ "pin_index": fit.pin_index, "excluded": fit.excluded })
        };
    }

    if cfg.jumps > 0 {
        let sim = simulate(&spec, cfg.jumps, cfg.seed)?;
        let tv = match &exact {
            Some(st) => {
                let group = PermGroup::for_geography(&geo)?;
                let a = quotient_measure(&group, &st.measure());
                let b = quotient_measure(&group, &sim.frequencies());
                Some(tv_distance(&a, &b))
            }
            None => None,
        };
        println!("simulated {} jumps (seed {})", sim.jumps, sim.seed);
        for (state, p) in top_of(&sim.frequencies(), 3) {
            println!("  freq = {p:.6}  counts = {state:?}");
        }
        if let Some(tv) = tv {
            println!("tv to exact after symmetry quotient = {tv:.6}");
        }
        chain_doc["simulation"] = sim.summary(tv);
        outputs.push(write_json(&cfg.out, "simulate.json", &sim.summary(tv))?);
    }

    outputs.insert(0, write_json(&cfg.out, "chain.json", &chain_doc)?);
    Ok(outputs)
}

fn top_of(measure: &std::collections::BTreeMap<Vec<u32>, f64>, limit: usize) -> Vec<(Vec<u32>, f64)> {
    let mut entries: Vec<_> = measure.iter().map(|(s, p)| (s.clone(), *p)).collect();
    entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    entries.truncate(limit);
    entries
}

fn cmd_bifurcate(cfg: &Resolved) -> Result<Vec<String>> {
    let geo = build_geography(&cfg.geo)?;
    let grid = phi_grid_or(cfg, (0.01, 0.99, 0.01))?;
    let report = bifurcation_2zone(&geo, cfg.alpha, &grid, cfg.tol.unwrap_or(TIE_TOL))?;
    let fmt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:.9}"));
    println!(
        "phi_star = {} (closed form {})",
        fmt(report.phi_star),
        fmt(report.phi_star_closed_form)
    );
    println!(
        "phi_double_star = {} (closed form {})",
        fmt(report.phi_double_star),
        fmt(report.phi_double_star_closed_form)
    );
    println!("{}", report.discriminant_note);
    let mut outputs =
        vec![write_json(&cfg.out, "bifurcation.json", &serde_json::to_value(&report)?)?];
    if cfg.format == "csv" {
        outputs.push(write_text(&cfg.out, "bifurcation.csv", &bifurcation_csv(&report))?);
    }
    Ok(outputs)
}

fn cmd_partition(cfg: &Resolved) -> Result<Vec<String>> {
    let geo = build_geography(&cfg.geo)?;
    let (_, patterns) = catalog(&geo)?;
    let phi_values = phi_grid_or(cfg, (0.01, 0.99, 0.01))?;
    let alpha_values = match &cfg.grid_alpha {
        Some(spec) => parse_range(spec)?,
        None => range_values(1.0, 3.0, 0.05)?,
    };
    let n_phi = phi_values.len();
    let n_alpha = alpha_values.len();
    let grid = SweepGrid::new(phi_values, alpha_values)?;
    let cells = partition(&geo, &patterns, &grid, cfg.tol.unwrap_or(TIE_TOL))?;
    let mut sizes: Vec<usize> = cells.iter().map(|c| c.winner_m).collect();
    sizes.sort_unstable();
    sizes.dedup();
    println!(
        "{} cells ({} phi x {} alpha); winner sizes M = {:?}",
        cells.len(),
        n_phi,
        n_alpha,
        sizes
    );
    let mut outputs =
        vec![write_json(&cfg.out, "partition.json", &json!({ "geo": cfg.geo, "cells": cells }))?];
    if cfg.format == "csv" {
        outputs.push(write_text(&cfg.out, "partition.csv", &partition_csv(&cells))?);
    }
    Ok(outputs)
}

fn cmd_plot(cfg: &Resolved, input: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(input)
        .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", input.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidParameter(format!("{} is not JSON: {e}", input.display())))?;

    let (name, svg) = if value.get("rows").is_some() && value.get("discriminant_note").is_some() {
        let report: BifurcationReport = serde_json::from_value(value)?;
        ("bifurcation.svg", figure::bifurcation_svg(&report))
    } else if let Some(cells) = value.get("cells") {
        let cells: Vec<PartitionCell> = serde_json::from_value(cells.clone())?;
        ("partition.svg", figure::partition_heatmap_svg(&cells))
    } else if let Some(ranges) = value.get("ranges") {
        let alpha = value
            .get("alpha")
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::InvalidParameter("ranges artifact lacks an alpha field".into()))?;
        let ranges: Vec<PatternRanges> = serde_json::from_value(ranges.clone())?;
        ("ranges.svg", figure::range_chart_svg(&ranges, alpha))
    } else {
        return Err(Error::InvalidParameter(format!(
            "{}: unrecognized artifact; expected bifurcation, partition, or stability_ranges JSON",
            input.display()
        )));
    };
    figure::write_svg(&cfg.out.join(name), &svg)?;
    println!("wrote {name}");
    Ok(vec![name.to_string()])
}
