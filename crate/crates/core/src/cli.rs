//! Command-line front end: `solve`, `compare`, `barrier` and
//! `verify-identities`.
//!
//! Exit codes: 0 success, 1 configuration or precondition error, 2 reported
//! blow-up, 3 violated property or failed check.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::barrier::{self, BarrierParams};
use crate::calculus::DiffOrder;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid;
use crate::solver::{self, ProblemSpec, Termination, Trajectory};
use crate::verify;

/// Version tag carried by every JSON report.
pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "CARNOT_HEAT_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Config = 1,
    BlowUp = 2,
    Failed = 3,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "carnot-heat",
    version,
    about = "Nonlinear heat equations with the p-sub-Laplacian on stratified groups"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// run configuration (`key = value` lines); defaults apply when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// output directory, overriding `output.directory`
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// seed for random initial data
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// halve the mesh width this many times
    #[arg(long, default_value_t = 0)]
    pub refine: u32,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one problem and write the trajectory.
    Solve(CommonArgs),
    /// Evolve `u0` and `scale·u0` and check the ordering is kept.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// factor in (0, 1], overriding `compare.scale`
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Check the exponential barrier and the global bound it implies.
    Barrier(CommonArgs),
    /// Convergence studies and inequality sweeps.
    VerifyIdentities(CommonArgs),
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Exit::Config.code() } else { Exit::Ok.code() };
        }
    };
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Compare { common, scale } => cmd_compare(common, *scale),
        Command::Barrier(a) => cmd_barrier(a),
        Command::VerifyIdentities(a) => cmd_verify_identities(a),
    });
    match result {
        Ok(exit) => exit.code(),
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e).code()
        }
    }
}

pub fn exit_for(e: &Error) -> Exit {
    match e {
        Error::NumericalBlowUp { .. } => Exit::BlowUp,
        _ => Exit::Config,
    }
}

/// Size the global worker pool from [`THREADS_ENV`] if set. A pool that is
/// already running is left as is.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| Error::Config {
        field: THREADS_ENV.into(),
        message: format!("expected a positive integer, got `{raw}`"),
    })?;
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn load(args: &CommonArgs) -> Result<RunConfig> {
    match &args.config {
        Some(p) => RunConfig::from_file(p),
        None => Ok(RunConfig::default()),
    }
}

fn out_dir(args: &CommonArgs, cfg: &RunConfig) -> PathBuf {
    args.out.clone().unwrap_or_else(|| cfg.output.directory.clone())
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn spec_echo(cfg: &RunConfig, spec: &ProblemSpec) -> Value {
    let grid = spec.grid();
    json!({
        "group": spec.group.name(),
        "lower": grid.domain().lower(),
        "upper": grid.domain().upper(),
        "cells": grid.n_cells(),
        "h": grid.h(),
        "p": spec.p,
        "beta": spec.beta,
        "q": spec.q,
        "gamma": spec.gamma,
        "alpha": spec.alpha,
        "T": spec.t_end,
        "u0": cfg.entry("problem.u0").unwrap_or("bump"),
    })
}

/// Effective settings plus the raw entries in file order. Paths are left
/// out so that output does not depend on where it is written.
fn config_echo(cfg: &RunConfig, args: &CommonArgs) -> Value {
    let entries: Vec<[&str; 2]> = cfg
        .entries
        .iter()
        .filter(|(k, _)| k != "output.directory")
        .map(|(k, v)| [k.as_str(), v.as_str()])
        .collect();
    json!({
        "entries": entries,
        "solver": cfg.solver,
        "barrier": cfg.barrier,
        "output": { "stride": cfg.output.stride, "emit_plots": cfg.output.emit_plots },
        "compare_scale": cfg.compare_scale,
        "verify": cfg.verify,
        "seed": args.seed,
        "refine": args.refine,
    })
}

fn termination_json(t: &Trajectory) -> Value {
    match t.termination {
        Termination::ReachedEnd => json!({ "status": "completed", "steps": t.steps }),
        Termination::BlowUp { step, time } => {
            json!({ "status": "blow-up", "steps": t.steps, "step": step, "time": time })
        }
    }
}

pub fn cmd_solve(args: &CommonArgs) -> Result<Exit> {
    let cfg = load(args)?;
    let spec = cfg.build_spec(args.refine, args.seed)?;
    let traj = solver::solve(&spec, &cfg.solver)?;
    let out = out_dir(args, &cfg);
    write_trajectory(&out, &cfg, args, &spec, &traj)?;
    let last_t = traj.times.last().copied().unwrap_or(0.0);
    if let Termination::BlowUp { step, time } = traj.termination {
        eprintln!("blow-up at step {step} (t = {time}); trajectory up to t = {last_t} written");
        return Ok(Exit::BlowUp);
    }
    println!(
        "completed {} steps to t = {last_t}; sup|u(T)| = {:e}",
        traj.steps,
        traj.last().sup_norm()
    );
    Ok(Exit::Ok)
}

/// Per-time CSV fields under `fields/`, `series.csv`, `manifest.json` and,
/// if enabled, SVG charts.
pub fn write_trajectory(
    out: &Path,
    cfg: &RunConfig,
    args: &CommonArgs,
    spec: &ProblemSpec,
    traj: &Trajectory,
) -> Result<()> {
    let fields = out.join("fields");
    create_dir(&fields)?;
    // drop fields left over from an earlier, longer run
    for entry in fs::read_dir(&fields).map_err(|e| Error::io(&fields, e))? {
        let path = entry.map_err(|e| Error::io(&fields, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("u_") && name.ends_with(".csv") {
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    let mut names = Vec::with_capacity(traj.states.len());
    for (k, u) in traj.states.iter().enumerate() {
        let name = format!("u_{k:06}.csv");
        u.write_csv(&fields.join(&name))?;
        names.push(format!("fields/{name}"));
    }
    let sup = traj.sup_norms();
    let energy = traj
        .states
        .iter()
        .map(|u| grid::sobolev_norm(&spec.group, u, spec.p))
        .collect::<Result<Vec<f64>>>()?;
    let series_path = out.join("series.csv");
    let mut w = csv::Writer::from_path(&series_path)?;
    w.write_record(["t", "sup_norm", "energy_jp"])?;
    for ((t, s), e) in traj.times.iter().zip(&sup).zip(&energy) {
        w.write_record([format!("{t:.16e}"), format!("{s:.16e}"), format!("{e:.16e}")])?;
    }
    w.flush().map_err(|e| Error::io(&series_path, e))?;
    if cfg.output.emit_plots {
        for (file, title, ys) in [
            ("sup_norm.svg", "sup-norm of u", &sup),
            ("energy.svg", "energy J_p(u)", &energy),
        ] {
            let p = out.join(file);
            fs::write(&p, svg_chart(title, &traj.times, ys)).map_err(|e| Error::io(&p, e))?;
        }
    }
    let manifest = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "solve",
        "spec": spec_echo(cfg, spec),
        "config": config_echo(cfg, args),
        "termination": termination_json(traj),
        "times": traj.times,
        "sup_norm": sup,
        "energy_jp": energy,
        "fields": names,
        "series": "series.csv",
    });
    write_json(&out.join("manifest.json"), &manifest)
}

pub fn cmd_compare(args: &CommonArgs, scale: Option<f64>) -> Result<Exit> {
    let cfg = load(args)?;
    let scale = scale.unwrap_or(cfg.compare_scale);
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::Precondition(format!(
            "scale must lie in (0, 1] so that scale·u0 <= u0, got {scale}"
        )));
    }
    let spec_v = cfg.build_spec(args.refine, args.seed)?;
    let spec_u = spec_v.with_u0(spec_v.u0.scaled(scale));
    let trajs = solver::solve_lockstep(&[&spec_u, &spec_v], &cfg.solver)?;
    let (tu, tv) = (&trajs[0], &trajs[1]);
    let rep = solver::compare(&cfg.solver, tu, tv)?;
    let gtol = rep.tolerance * rep.tolerance * spec_v.grid().domain().volume();
    let gronwall = match solver::gronwall_from_compare(&spec_v, tu, tv, gtol) {
        Ok((g, rate)) => json!({
            "premise_ok": g.premise_ok,
            "conclusion_ok": g.conclusion_ok,
            "max_ratio": g.max_ratio,
            "final_ratio": g.final_ratio,
            "rate": rate,
            "tolerance": gtol,
        }),
        Err(e) => json!({ "unavailable": e.to_string() }),
    };
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "compare",
        "scale": scale,
        "spec": spec_echo(&cfg, &spec_v),
        "config": config_echo(&cfg, args),
        "termination": termination_json(tv),
        "max_violation": rep.max_violation,
        "violation_time": rep.violation_time,
        "tolerance": rep.tolerance,
        "sup_v": rep.sup_v,
        "ordered": rep.ordered,
        "gronwall_report": gronwall,
    });
    let out = out_dir(args, &cfg);
    create_dir(&out)?;
    write_json(&out.join("compare.json"), &report)?;
    println!(
        "max_violation = {:e} (tolerance {:e}) at t = {}",
        rep.max_violation, rep.tolerance, rep.violation_time
    );
    if rep.ordered {
        Ok(Exit::Ok)
    } else {
        eprintln!("ordering violated");
        Ok(Exit::Failed)
    }
}

pub fn cmd_barrier(args: &CommonArgs) -> Result<Exit> {
    let cfg = load(args)?;
    let pr = &cfg.problem;
    if !(pr.p <= pr.q && pr.q < pr.beta + 1.0) {
        return Err(Error::Config {
            field: "problem.q".into(),
            message: format!(
                "the barrier requires p ≤ q < β+1, got p = {}, q = {}, beta = {}",
                pr.p, pr.q, pr.beta
            ),
        });
    }
    for (field, v) in [("problem.gamma", pr.gamma), ("problem.alpha", pr.alpha)] {
        if v != 1.0 {
            return Err(Error::Config {
                field: field.into(),
                message: format!("the barrier construction requires gamma = alpha = 1, got {v}"),
            });
        }
    }
    let spec = cfg.build_spec(args.refine, args.seed)?;
    let grid = spec.grid().clone();
    let n1 = spec.group.horizontal_dim();
    let params = BarrierParams::for_domain(grid.domain(), &spec.group, spec.p, spec.q, spec.beta, cfg.barrier.eps)?;
    let params = barrier::inflate_l(&params, &spec.u0);
    params.check_placement(&grid, n1)?;
    let ineq = barrier::verify_barrier_inequality(&params, spec.p, spec.q, spec.beta, n1, cfg.barrier.samples)?;
    let v = barrier::barrier_field(&params, grid);
    let mp_min = barrier::mp_operator(&spec, &cfg.solver, &v)?.min();
    let bound = barrier::global_bound(&params);
    let traj = solver::solve(&spec, &cfg.solver)?;
    let max_sup = traj.sup_norms().into_iter().fold(0.0, f64::max);
    let checks = [
        ("barrier inequality", ineq.min_margin >= 0.0),
        ("discrete M_p V >= 0", mp_min >= 0.0),
        ("trajectory below global bound", !traj.blew_up() && max_sup <= bound),
    ];
    let first_failure = checks.iter().find(|c| !c.1).map(|c| c.0);
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "barrier",
        "sigma": params.sigma,
        "L": params.l,
        "x0": params.x0_prime,
        "r_prime": params.r_prime,
        "eps": params.eps,
        "global_bound": bound,
        "inequality_39_min_margin": ineq.min_margin,
        "inequality_argmin_r": ineq.argmin_r,
        "mp_min_value": mp_min,
        "max_sup_norm": max_sup,
        "termination": termination_json(&traj),
        "checks": checks.iter().map(|(n, ok)| json!({ "name": n, "ok": ok })).collect::<Vec<_>>(),
        "first_failure": first_failure,
        "spec": spec_echo(&cfg, &spec),
        "config": config_echo(&cfg, args),
    });
    let out = out_dir(args, &cfg);
    create_dir(&out)?;
    write_json(&out.join("barrier.json"), &report)?;
    println!(
        "sigma = {}, L = {}, bound = {bound:e}, max sup|u| = {max_sup:e}",
        params.sigma, params.l
    );
    match first_failure {
        None => Ok(Exit::Ok),
        Some(name) => {
            eprintln!("failed check: {name}");
            Ok(Exit::Failed)
        }
    }
}

/// Thresholds for the convergence studies.
pub const IDENTITY_MAX_ERROR: f64 = 1e-3;
pub const IDENTITY_MIN_ORDER: f64 = 1.8;

pub fn cmd_verify_identities(args: &CommonArgs) -> Result<Exit> {
    let cfg = load(args)?;
    let g = cfg.group()?;
    let domain = cfg.grid(0)?.domain().clone();
    let coarse = cfg.verify_cells(args.refine);
    let cells = vec![coarse.clone(), coarse.iter().map(|c| 2 * c).collect()];
    let r_min = cfg.verify.r_min;
    let mut studies = vec![verify::gradient_identity(&g, &domain, 3.0, &cells, r_min, DiffOrder::Fourth)?];
    for gamma in [1.0, 3.0] {
        studies.push(verify::divergence_identity(&g, &domain, gamma, &cells, r_min, DiffOrder::Fourth)?);
    }
    let mut rows: Vec<(String, String, bool)> = Vec::new();
    let mut study_json = Vec::new();
    for s in &studies {
        let ok = s.finest_error() <= IDENTITY_MAX_ERROR && s.observed_order >= IDENTITY_MIN_ORDER;
        rows.push((
            s.name.clone(),
            format!("error {:.3e}, order {:.2}", s.finest_error(), s.observed_order),
            ok,
        ));
        study_json.push(json!({ "study": s, "pass": ok }));
    }
    let mut sweep_json = Vec::new();
    for p in [1.5, 2.0, 3.0, 4.5] {
        let s = verify::lindqvist_sweep(p, cfg.verify.samples, args.seed)?;
        let ok = s.violations == 0 && s.min_gap >= 0.0;
        rows.push((
            format!("Lindqvist sweep, p = {p}"),
            format!("min margin {:.3e}, min gap {:.3e}", s.min_margin, s.min_gap),
            ok,
        ));
        sweep_json.push(json!({ "sweep": s, "pass": ok }));
    }
    let odd = verify::odd_power_sweep(cfg.verify.samples, args.seed);
    let odd_ok = odd.sign_mismatches == 0;
    rows.push((
        "odd-power monotonicity".into(),
        format!("{} sign mismatches", odd.sign_mismatches),
        odd_ok,
    ));
    let stencil_ok = verify::euclidean_stencil_matches(2, 16, args.seed)?;
    rows.push((
        "Euclidean p = 2 stencil".into(),
        format!("match = {stencil_ok}"),
        stencil_ok,
    ));
    let width = rows.iter().map(|r| r.0.chars().count()).max().unwrap_or(0);
    for (name, detail, ok) in &rows {
        let pad = width - name.chars().count();
        println!("{}{}  {detail}  {}", name, " ".repeat(pad), if *ok { "PASS" } else { "FAIL" });
    }
    let all_ok = rows.iter().all(|r| r.2);
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "verify-identities",
        "group": g.name(),
        "convergence": study_json,
        "lindqvist": sweep_json,
        "odd_power": { "sweep": odd, "pass": odd_ok },
        "euclidean_stencil_match": stencil_ok,
        "pass": all_ok,
        "config": config_echo(&cfg, args),
    });
    let out = out_dir(args, &cfg);
    create_dir(&out)?;
    write_json(&out.join("verify.json"), &report)?;
    Ok(if all_ok { Exit::Ok } else { Exit::Failed })
}

/// Self-contained SVG line chart; non-finite points are skipped.
pub fn svg_chart(title: &str, xs: &[f64], ys: &[f64]) -> String {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(&x, &y)| (x, y))
        .collect();
    let range = |f: fn(&(f64, f64)) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        }
    };
    let (x0, x1) = range(|p| p.0);
    let (y0, y1) = range(|p| p.1);
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let line: Vec<String> = pts
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
            "<text x=\"{cx}\" y=\"25\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{title}</text>\n",
            "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
            "<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
            "<text x=\"{m}\" y=\"{bl}\" font-family=\"sans-serif\" font-size=\"11\">t = {x0:.4}</text>\n",
            "<text x=\"{r}\" y=\"{bl}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">t = {x1:.4}</text>\n",
            "<text x=\"5\" y=\"{b}\" font-family=\"sans-serif\" font-size=\"11\">{y0:.3e}</text>\n",
            "<text x=\"5\" y=\"{mt}\" font-family=\"sans-serif\" font-size=\"11\">{y1:.3e}</text>\n",
            "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"{pts}\"/>\n",
            "</svg>\n"
        ),
        w = w,
        h = h,
        m = m,
        cx = w / 2.0,
        b = h - m,
        r = w - m,
        bl = h - m + 18.0,
        mt = m - 5.0,
        x0 = x0,
        x1 = x1,
        y0 = y0,
        y1 = y1,
        title = title,
        pts = line.join(" "),
    )
}
