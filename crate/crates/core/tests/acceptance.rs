//! Acceptance suite: one PASS/FAIL line per criterion with its runtime.
//! Exits non-zero if any criterion fails or exceeds its time budget.

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use carnot_heat::barrier::{self, BarrierParams};
use carnot_heat::calculus::DiffOrder;
use carnot_heat::cli::{self, CommonArgs, Exit};
use carnot_heat::config::InitialData;
use carnot_heat::grid::{BoxDomain, Grid, GridFunction};
use carnot_heat::group::GroupDescriptor;
use carnot_heat::solver::{self, ProblemSpec, SolverConfig};
use carnot_heat::verify;
use carnot_heat::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn h1() -> GroupDescriptor {
    GroupDescriptor::heisenberg(1).unwrap()
}

fn cube3(lo: f64, hi: f64) -> BoxDomain {
    BoxDomain::cube(3, lo, hi).unwrap()
}

fn convergence(studies: &[verify::ConvergenceStudy]) -> Result<Outcome> {
    let pass = studies
        .iter()
        .all(|s| s.finest_error() <= 1e-3 && s.observed_order >= 1.8);
    let detail = studies
        .iter()
        .map(|s| format!("{}: err {:.2e}, order {:.2}", s.name, s.finest_error(), s.observed_order))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail)
}

// h = 1/32 and 1/64 on (−1, 1)
const NESTED: [[usize; 3]; 2] = [[64; 3], [128; 3]];

fn nested() -> Vec<Vec<usize>> {
    NESTED.iter().map(|c| c.to_vec()).collect()
}

fn c1_gradient() -> Result<Outcome> {
    let s = verify::gradient_identity(&h1(), &cube3(-1.0, 1.0), 3.0, &nested(), 0.2, DiffOrder::Fourth)?;
    convergence(&[s])
}

fn c2_divergence() -> Result<Outcome> {
    let studies = [1.0, 3.0]
        .into_iter()
        .map(|g| verify::divergence_identity(&h1(), &cube3(-1.0, 1.0), g, &nested(), 0.2, DiffOrder::Fourth))
        .collect::<Result<Vec<_>>>()?;
    convergence(&studies)
}

fn c3_barrier_operator() -> Result<Outcome> {
    let domain = BoxDomain::new(vec![0.0, 0.0, -1.0], vec![1.0, 1.0, 1.0])?;
    let cells = vec![vec![32, 32, 64], vec![64, 64, 128]];
    let mut pass = true;
    let mut parts = Vec::new();
    for p in [2.0, 2.5] {
        let params = BarrierParams::for_domain(&domain, &h1(), p, p, p + 0.5, 0.5)?;
        let s = verify::barrier_operator_identity(&h1(), &domain, &params, p, &cells, 0.3, 1e-8)?;
        let errs = &s.max_rel_error;
        pass &= s.finest_error() <= 0.02 && errs[1] < errs[0];
        parts.push(format!("p = {p}: err {:.2e} -> {:.2e}", errs[0], errs[1]));
    }
    outcome(pass, parts.join("; "))
}

fn c4_lindqvist() -> Result<Outcome> {
    let mut pass = true;
    let mut worst = f64::INFINITY;
    for p in [1.5, 2.0, 3.0, 4.5] {
        let s = verify::lindqvist_sweep(p, 100_000, 4)?;
        pass &= s.violations == 0 && s.min_gap >= 0.0;
        worst = worst.min(s.min_margin);
    }
    outcome(pass, format!("4 x 1e5 samples, min slack-adjusted margin {worst:.2e}"))
}

fn c5_odd_power() -> Result<Outcome> {
    let s = verify::odd_power_sweep(100_000, 5);
    outcome(
        s.sign_mismatches == 0 && s.case_counts.iter().all(|&c| c > 0),
        format!("{} mismatches, cases {:?}", s.sign_mismatches, s.case_counts),
    )
}

struct PairRun {
    violation: f64,
    tolerance: f64,
    sup_v: f64,
    gronwall_ok: bool,
}

fn run_pair(spec_u: &ProblemSpec, spec_v: &ProblemSpec, cfg: &SolverConfig) -> Result<PairRun> {
    let tr = solver::solve_lockstep(&[spec_u, spec_v], cfg)?;
    let rep = solver::compare(cfg, &tr[0], &tr[1])?;
    let vol = spec_v.grid().domain().volume();
    let (g, _) = solver::gronwall_from_compare(spec_v, &tr[0], &tr[1], rep.tolerance * rep.tolerance * vol)?;
    Ok(PairRun {
        violation: rep.max_violation,
        tolerance: rep.tolerance,
        sup_v: rep.sup_v,
        gronwall_ok: g.conclusion_ok && !tr[1].blew_up(),
    })
}

fn reaction_spec(g: &GroupDescriptor, p: f64, beta: f64, u0: GridFunction) -> ProblemSpec {
    ProblemSpec {
        group: g.clone(),
        p,
        beta,
        q: p,
        gamma: 1.0,
        alpha: 1.0,
        t_end: 0.5,
        u0,
    }
}

/// `v0` random positive, `u0 = v0 (1 − 0.9 w / max w)` with `w` another
/// random positive field, so `u0 ≤ v0` with a varying gap.
fn random_pair(grid: &Arc<Grid>, seed: u64) -> Result<(GridFunction, GridFunction)> {
    let v0 = InitialData::Random { amplitude: 1.0, seed: Some(seed) }.evaluate(grid.clone(), 0)?;
    let w = InitialData::Random { amplitude: 1.0, seed: Some(seed ^ 0x5eed) }.evaluate(grid.clone(), 0)?;
    let wm = w.max();
    let u0 = v0
        .values()
        .iter()
        .zip(w.values())
        .map(|(a, b)| a * (1.0 - 0.9 * b / wm))
        .collect();
    Ok((GridFunction::new(grid.clone(), u0)?, v0))
}

/// Shared by criteria 6 and 7.
fn c6_c7_comparison() -> Result<(Outcome, Outcome)> {
    let cfg = SolverConfig {
        output_stride: 50,
        ..SolverConfig::default()
    };
    let e1 = GroupDescriptor::euclidean(1)?;
    let line = |n: usize| Arc::new(Grid::new(BoxDomain::new(vec![0.0], vec![1.0]).unwrap(), vec![n]).unwrap());
    let mut ok6 = true;
    let mut ok7 = true;
    let mut runs = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut grew = 0;
    for (pi, p) in [2.0, 3.0].into_iter().enumerate() {
        for i in 0..20u64 {
            let seed = 100 * pi as u64 + i;
            let mut prev: Option<f64> = None;
            for n in [128, 256] {
                let (u0, v0) = random_pair(&line(n), seed)?;
                let sv = reaction_spec(&e1, p, p + 0.5, v0);
                let r = run_pair(&sv.with_u0(u0), &sv, &cfg)?;
                runs += 1;
                ok6 &= r.violation <= r.tolerance;
                ok7 &= r.gronwall_ok;
                worst_ratio = worst_ratio.max(r.violation / r.tolerance);
                if let Some(c) = prev {
                    if r.violation > c + 1e-15 * r.sup_v {
                        grew += 1;
                    }
                }
                prev = Some(r.violation);
            }
        }
    }
    let mut h1_viol = Vec::new();
    let mut prev: Option<f64> = None;
    for n in [24, 48] {
        let grid = Arc::new(Grid::new(cube3(-1.0, 1.0), vec![n; 3])?);
        let v0 = InitialData::Random { amplitude: 1.0, seed: Some(7) }.evaluate(grid, 0)?;
        let sv = reaction_spec(&h1(), 2.5, 3.0, v0);
        let r = run_pair(&sv.with_u0(sv.u0.scaled(0.5)), &sv, &cfg)?;
        runs += 1;
        ok6 &= r.violation <= r.tolerance;
        ok7 &= r.gronwall_ok;
        worst_ratio = worst_ratio.max(r.violation / r.tolerance);
        if let Some(c) = prev {
            if r.violation > c + 1e-15 * r.sup_v {
                grew += 1;
            }
        }
        prev = Some(r.violation);
        h1_viol.push(format!("{n}^3: {:.1e}", r.violation));
    }
    ok6 &= grew == 0;
    Ok((
        Outcome {
            pass: ok6,
            detail: format!(
                "40 1-D pairs + H1 pair, each at h and h/2; max violation/tolerance {worst_ratio:.2e}; \
                 growth under refinement in {grew} cases; H1 {}",
                h1_viol.join(", ")
            ),
        },
        Outcome {
            pass: ok7,
            detail: format!("Gronwall conclusion held in {runs} runs: {ok7}"),
        },
    ))
}

fn c8_barrier_inequality() -> Result<Outcome> {
    let mut worst = f64::INFINITY;
    let mut cases = 0;
    for p in [2.0, 2.5, 3.0] {
        for q in [p, p + 0.5] {
            let beta = q + 0.5;
            for eps in [0.1, 0.5] {
                for r_prime in [0.5, 1.0, 2.0] {
                    for n1 in [1, 2] {
                        let (sigma, l) = barrier::barrier_params(p, q, beta, n1, eps, r_prime)?;
                        let params = BarrierParams {
                            l,
                            sigma,
                            x0_prime: vec![0.0; n1],
                            eps,
                            r_prime,
                        };
                        let rep = barrier::verify_barrier_inequality(&params, p, q, beta, n1, 1000)?;
                        worst = worst.min(rep.min_margin);
                        cases += 1;
                    }
                }
            }
        }
    }
    outcome(worst >= 0.0, format!("{cases} parameter sets, min margin {worst:.4e}"))
}

fn c9_global_bound() -> Result<Outcome> {
    let domain = BoxDomain::new(vec![0.0, 0.0, -1.0], vec![1.0, 1.0, 1.0])?;
    let grid = Arc::new(Grid::new(domain.clone(), vec![24; 3])?);
    let u0 = InitialData::Bump { amplitude: 1.0 }.evaluate(grid.clone(), 0)?;
    let spec = ProblemSpec {
        group: h1(),
        p: 2.0,
        beta: 2.0,
        q: 2.0,
        gamma: 1.0,
        alpha: 1.0,
        t_end: 10.0,
        u0,
    };
    let params = BarrierParams::for_domain(&domain, &spec.group, 2.0, 2.0, 2.0, 0.5)?;
    let params = barrier::inflate_l(&params, &spec.u0);
    let bound = barrier::global_bound(&params);
    let cfg = SolverConfig {
        output_stride: 1000,
        ..SolverConfig::default()
    };
    let mut max_sup: f64 = spec.u0.sup_norm();
    let traj = solver::solve_observed(&[&spec], &cfg, |_, _, u| max_sup = max_sup.max(u.sup_norm()))?
        .pop()
        .expect("one trajectory");
    let recorded = traj.sup_norms().into_iter().fold(0.0, f64::max);
    outcome(
        !traj.blew_up() && max_sup <= bound && recorded <= bound,
        format!(
            "{} steps, max sup over every step {max_sup:.4} <= bound {bound:.4} (L = {}, sigma = {}, r' = {:.4})",
            traj.steps, params.l, params.sigma, params.r_prime
        ),
    )
}

fn c10_heat_oracle() -> Result<Outcome> {
    let grid = Arc::new(Grid::new(BoxDomain::new(vec![0.0], vec![1.0])?, vec![128])?);
    let pi = std::f64::consts::PI;
    let spec = ProblemSpec {
        group: GroupDescriptor::euclidean(1)?,
        p: 2.0,
        beta: 1.0,
        q: 2.0,
        gamma: 0.0,
        alpha: 0.0,
        t_end: 0.1,
        u0: GridFunction::from_fn(grid.clone(), |x| (pi * x[0]).sin()),
    };
    let cfg = SolverConfig {
        output_stride: 100_000,
        ..SolverConfig::default()
    };
    let traj = solver::solve(&spec, &cfg)?;
    let decay = (-pi * pi * 0.1f64).exp();
    let exact = GridFunction::from_fn(grid, |x| decay * (pi * x[0]).sin());
    let err = traj
        .last()
        .values()
        .iter()
        .zip(exact.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / exact.sup_norm();
    outcome(err <= 0.01, format!("relative sup error {err:.3e} at t = 0.1"))
}

fn c11_determinism() -> Result<Outcome> {
    let dir = tempfile::tempdir().expect("temp dir");
    let config = dir.path().join("run.conf");
    std::fs::write(
        &config,
        "problem.group = heisenberg:1\nproblem.cells = 12, 12, 12\nproblem.p = 2.5\n\
         problem.beta = 3\nproblem.q = 2.5\nproblem.T = 0.1\nproblem.u0 = random\noutput.stride = 20\n",
    )
    .expect("write config");
    let run = |name: &str| -> Result<Vec<u8>> {
        let out = dir.path().join(name);
        let args = CommonArgs {
            config: Some(config.clone()),
            out: Some(out.clone()),
            seed: 42,
            refine: 0,
        };
        let exit = cli::cmd_solve(&args)?;
        assert_eq!(exit, Exit::Ok);
        Ok(std::fs::read(out.join("manifest.json")).expect("manifest"))
    };
    let (a, b) = (run("a")?, run("b")?);
    let fields_equal = same_tree(&dir.path().join("a/fields"), &dir.path().join("b/fields"));
    outcome(
        a == b && fields_equal,
        format!("manifests of {} bytes identical: {}; fields identical: {fields_equal}", a.len(), a == b),
    )
}

fn same_tree(a: &Path, b: &Path) -> bool {
    let list = |d: &Path| {
        let mut v: Vec<_> = std::fs::read_dir(d)
            .map(|r| r.filter_map(|e| e.ok().map(|e| e.file_name())).collect())
            .unwrap_or_default();
        v.sort();
        v
    };
    let (la, lb) = (list(a), list(b));
    la == lb && la.iter().all(|n| std::fs::read(a.join(n)).ok() == std::fs::read(b.join(n)).ok())
}

fn report(id: &str, name: &str, budget: Duration, took: Duration, r: Result<Outcome>) -> bool {
    let (pass, detail) = match r {
        Ok(o) => (o.pass && took <= budget, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let over = if took > budget { " OVER BUDGET" } else { "" };
    println!(
        "criterion {id:>3}: {}  {name} [{:.1} s / {} s{over}] {detail}",
        if pass { "PASS" } else { "FAIL" },
        took.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed())
}

fn main() {
    let _ = cli::configure_threads();
    let secs = Duration::from_secs;
    let mut all = true;
    let simple: [(&str, &str, u64, fn() -> Result<Outcome>); 5] = [
        ("1", "gradient identity", 10, c1_gradient),
        ("2", "divergence identity", 10, c2_divergence),
        ("3", "analytic L_p V", 30, c3_barrier_operator),
        ("4", "Lindqvist sweep", 5, c4_lindqvist),
        ("5", "odd-power monotonicity", 5, c5_odd_power),
    ];
    for (id, name, budget, f) in simple {
        let (r, took) = timed(f);
        all &= report(id, name, secs(budget), took, r);
    }
    let (r, took) = timed(c6_c7_comparison);
    let (r6, r7) = match r {
        Ok((a, b)) => (Ok(a), Ok(b)),
        Err(e) => {
            let msg = e.to_string();
            (Err(e), Err(carnot_heat::Error::InvalidArgument(msg)))
        }
    };
    all &= report("6", "comparison principle", secs(300), took, r6);
    all &= report("7", "Gronwall wiring (runtime in 6)", secs(300), took, r7);
    let rest: [(&str, &str, u64, fn() -> Result<Outcome>); 4] = [
        ("8", "barrier inequality sweep", 5, c8_barrier_inequality),
        ("9", "global bound", 600, c9_global_bound),
        ("10", "heat oracle", 10, c10_heat_oracle),
        ("11", "determinism", 60, c11_determinism),
    ];
    for (id, name, budget, f) in rest {
        let (r, took) = timed(f);
        all &= report(id, name, secs(budget), took, r);
    }
    if all {
        println!("acceptance: all criteria PASS");
    } else {
        println!("acceptance: FAILURES above");
        std::process::exit(1);
    }
}
