//! Forward-Euler integration of
//!
//! ```text
//! u_t − L_p u = −γ|u|^{β−1}u + α|u|^{q−2}u  in Ω,   u = 0 on ∂Ω,   u(0) = u₀,
//! ```
//!
//! plus the weak-form residual used to classify sub-/super-solutions and
//! the comparison harness.

use std::sync::Arc;

use serde::Serialize;

use crate::calculus::{self, PLaplacian, Workspace, DEFAULT_EPS_REG};
use crate::error::{invalid, Error, Result};
use crate::grid::{self, Grid, GridFunction};
use crate::group::GroupDescriptor;
use crate::inequalities::{self, signed_power, GronwallReport, GronwallSample};
use crate::power::Exponent;

/// One instance of the initial boundary value problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub group: GroupDescriptor,
    pub p: f64,
    pub beta: f64,
    pub q: f64,
    pub gamma: f64,
    pub alpha: f64,
    /// time horizon `T`
    pub t_end: f64,
    pub u0: GridFunction,
}

impl ProblemSpec {
    pub fn grid(&self) -> &Arc<Grid> {
        self.u0.grid()
    }

    /// Check exponent ranges, `u₀ ≥ 0` and boundedness.
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, msg: String| Error::Config {
            field: format!("problem.{name}"),
            message: msg,
        };
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(field("p", format!("need p > 1, got {}", self.p)));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(field("beta", format!("need beta > 0, got {}", self.beta)));
        }
        if !(self.q >= 1.0) || !self.q.is_finite() {
            return Err(field("q", format!("need q >= 1, got {}", self.q)));
        }
        if !(self.gamma >= 0.0) {
            return Err(field("gamma", format!("need gamma >= 0, got {}", self.gamma)));
        }
        if !(self.alpha >= 0.0) {
            return Err(field("alpha", format!("need alpha >= 0, got {}", self.alpha)));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(field("T", format!("need T > 0, got {}", self.t_end)));
        }
        if self.grid().dim() != self.group.total_dim() {
            return Err(field(
                "group",
                format!(
                    "group {} has dimension {} but the domain has {}",
                    self.group.name(),
                    self.group.total_dim(),
                    self.grid().dim()
                ),
            ));
        }
        if !self.u0.all_finite() {
            return Err(field("u0", "initial data must be bounded".into()));
        }
        if self.u0.min() < 0.0 {
            return Err(field("u0", format!("initial data must be >= 0, min is {}", self.u0.min())));
        }
        Ok(())
    }

    /// Same problem with different initial data.
    pub fn with_u0(&self, u0: GridFunction) -> ProblemSpec {
        ProblemSpec { u0, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub eps_reg: f64,
    pub cfl_safety: f64,
    pub output_stride: usize,
    pub max_steps: usize,
    /// comparison tolerance is `max(compare_abs_tol, compare_rel_tol · sup|v|)`
    pub compare_abs_tol: f64,
    pub compare_rel_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eps_reg: DEFAULT_EPS_REG,
            cfl_safety: 0.5,
            output_stride: 1,
            max_steps: 50_000_000,
            compare_abs_tol: 1e-8,
            compare_rel_tol: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, msg: &str| Error::Config {
            field: format!("solver.{name}"),
            message: msg.into(),
        };
        if !(self.eps_reg >= 0.0) {
            return Err(field("eps_reg", "must be >= 0"));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(field("cfl_safety", "must lie in (0, 1]"));
        }
        if self.output_stride == 0 {
            return Err(field("output_stride", "must be positive"));
        }
        if self.max_steps == 0 {
            return Err(field("max_steps", "must be positive"));
        }
        Ok(())
    }
}

/// Why integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    ReachedEnd,
    BlowUp { step: usize, time: f64 },
}

/// Recorded states of one run; `times[0] = 0`, `states[0] = u₀`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<GridFunction>,
    pub termination: Termination,
    pub steps: usize,
}

impl Trajectory {
    /// A time-independent trajectory `v(t) = v` on the given time stamps.
    pub fn constant(v: GridFunction, times: &[f64]) -> Trajectory {
        Trajectory {
            times: times.to_vec(),
            states: vec![v; times.len()],
            termination: Termination::ReachedEnd,
            steps: 0,
        }
    }

    pub fn blew_up(&self) -> bool {
        matches!(self.termination, Termination::BlowUp { .. })
    }

    pub fn sup_norms(&self) -> Vec<f64> {
        self.states.iter().map(GridFunction::sup_norm).collect()
    }

    pub fn last(&self) -> &GridFunction {
        self.states.last().expect("trajectory has at least u0")
    }
}

/// `−γ|u|^{β−1}u + α|u|^{q−2}u`, with `|0|^s·0 = 0`.
#[inline]
pub fn reaction(u: f64, beta: f64, q: f64, gamma: f64, alpha: f64) -> f64 {
    let mut r = 0.0;
    if gamma != 0.0 {
        r -= gamma * signed_power(u, beta - 1.0);
    }
    if alpha != 0.0 {
        r += alpha * signed_power(u, q - 2.0);
    }
    r
}

/// `sup |∂ reaction/∂u|` estimated at `|u| = sup_u`.
fn reaction_slope(spec: &ProblemSpec, sup_u: f64) -> f64 {
    if sup_u == 0.0 {
        return 0.0;
    }
    spec.gamma * spec.beta * sup_u.powf(spec.beta - 1.0)
        + spec.alpha * (spec.q - 1.0).abs() * sup_u.powf(spec.q - 2.0)
}

/// Explicit integrator bound to one grid.
pub struct Stepper<'a> {
    spec: &'a ProblemSpec,
    cfg: &'a SolverConfig,
    op: PLaplacian,
    ws: Workspace,
    absorb: Exponent,
    source: Exponent,
    steps: usize,
    time: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(spec: &'a ProblemSpec, cfg: &'a SolverConfig) -> Result<Self> {
        Ok(Stepper {
            spec,
            cfg,
            op: PLaplacian::new(&spec.group, spec.grid().clone())?,
            ws: Workspace::default(),
            absorb: Exponent::new(spec.beta - 1.0),
            source: Exponent::new(spec.q - 2.0),
            steps: 0,
            time: 0.0,
        })
    }

    /// `(rhs(u), stable dt)` from a single operator application.
    pub fn rhs_and_dt(&mut self, u: &GridFunction) -> Result<(GridFunction, f64)> {
        let s = self.spec;
        let (lap, stats) = self.op.apply_in(u, s.p, self.cfg.eps_reg, &mut self.ws)?;
        let (absorb, source) = (self.absorb, self.source);
        let mut vals = lap.into_values();
        let mut sup: f64 = 0.0;
        for (r, &x) in vals.iter_mut().zip(u.values()) {
            sup = sup.max(x.abs());
            if s.gamma != 0.0 {
                *r -= s.gamma * absorb.signed(x);
            }
            if s.alpha != 0.0 {
                *r += s.alpha * source.signed(x);
            }
        }
        let rhs = GridFunction::new(u.grid().clone(), vals)?;
        Ok((rhs, self.dt_from(stats.mu_max, sup)))
    }

    fn dt_from(&self, mu_max: f64, sup_u: f64) -> f64 {
        let safety = self.cfg.cfl_safety;
        let d_max = (mu_max * (self.spec.p - 1.0)).max(f64::MIN_POSITIVE);
        let dt_diff = safety / (2.0 * d_max * self.op.row_weight());
        let dt_react = safety / (1.0 + reaction_slope(self.spec, sup_u));
        let dt = dt_diff.min(dt_react);
        if dt > 0.0 {
            dt
        } else {
            f64::MIN_POSITIVE
        }
    }

    pub fn stable_dt(&mut self, u: &GridFunction) -> Result<f64> {
        let (_, stats) = self.op.apply_in(u, self.spec.p, self.cfg.eps_reg, &mut self.ws)?;
        Ok(self.dt_from(stats.mu_max, u.sup_norm()))
    }

    /// `u + dt · rhs(u)`.
    pub fn advance(&mut self, u: &GridFunction, dt: f64) -> Result<GridFunction> {
        let (rhs, _) = self.rhs_and_dt(u)?;
        self.advance_with(u, &rhs, dt)
    }

    fn advance_with(&mut self, u: &GridFunction, rhs: &GridFunction, dt: f64) -> Result<GridFunction> {
        self.steps += 1;
        let next = u.axpy(dt, rhs)?;
        if !next.all_finite() {
            return Err(Error::NumericalBlowUp {
                step: self.steps,
                time: self.time + dt,
            });
        }
        self.time += dt;
        Ok(next)
    }
}

/// `L_p u + reaction(u)` nodewise.
pub fn rhs(spec: &ProblemSpec, cfg: &SolverConfig, u: &GridFunction) -> Result<GridFunction> {
    let lap = calculus::p_sub_laplacian(&spec.group, u, spec.p, cfg.eps_reg)?;
    let vals = lap
        .values()
        .iter()
        .zip(u.values())
        .map(|(l, &x)| l + reaction(x, spec.beta, spec.q, spec.gamma, spec.alpha))
        .collect();
    GridFunction::new(u.grid().clone(), vals)
}

/// CFL-limited step: `safety / (2 (p−1) μ_max W)` with `W` the Gershgorin
/// weight of the metric stencil (`N/h²` on a uniform Euclidean grid), capped
/// by `safety / (1 + sup|∂_u reaction|)`.
pub fn stable_dt(spec: &ProblemSpec, cfg: &SolverConfig, u: &GridFunction) -> Result<f64> {
    Stepper::new(spec, cfg)?.stable_dt(u)
}

/// One forward-Euler step `u + dt·rhs(u)`; `dt` should not exceed
/// [`stable_dt`].
pub fn step(spec: &ProblemSpec, cfg: &SolverConfig, u: &GridFunction, dt: f64) -> Result<GridFunction> {
    if !(dt >= 0.0) {
        return invalid(format!("time step must be >= 0, got {dt}"));
    }
    Stepper::new(spec, cfg)?.advance(u, dt)
}

/// Integrate to `spec.t_end` (or blow-up).
pub fn solve(spec: &ProblemSpec, cfg: &SolverConfig) -> Result<Trajectory> {
    Ok(solve_lockstep(&[spec], cfg)?.pop().expect("one trajectory"))
}

/// Integrate several problems on a shared time-step sequence (the minimum
/// of their stable steps), so the trajectories carry identical time stamps.
/// All problems must live on the same grid and share `t_end`.
pub fn solve_lockstep(specs: &[&ProblemSpec], cfg: &SolverConfig) -> Result<Vec<Trajectory>> {
    solve_observed(specs, cfg, |_, _, _| {})
}

/// As [`solve_lockstep`], calling `observer(k, t, u_k(t))` for every problem
/// `k` after every accepted step, whether or not the state is recorded.
pub fn solve_observed(
    specs: &[&ProblemSpec],
    cfg: &SolverConfig,
    mut observer: impl FnMut(usize, f64, &GridFunction) + Send,
) -> Result<Vec<Trajectory>> {
    // run on a pool worker so the per-step parallel loops start hot
    rayon::scope(|_| lockstep_inner(specs, cfg, &mut observer))
}

fn lockstep_inner(
    specs: &[&ProblemSpec],
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(usize, f64, &GridFunction),
) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    let Some(first) = specs.first() else {
        return invalid("no problems to solve");
    };
    for s in specs {
        s.validate()?;
        if !s.u0.same_grid(&first.u0) || s.t_end != first.t_end {
            return invalid("lockstep problems must share grid and horizon");
        }
    }
    let t_end = first.t_end;
    let mut steppers = specs
        .iter()
        .map(|s| Stepper::new(s, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut states: Vec<GridFunction> = specs.iter().map(|s| s.u0.clone()).collect();
    let mut trajs: Vec<Trajectory> = specs
        .iter()
        .map(|s| Trajectory {
            times: vec![0.0],
            states: vec![s.u0.clone()],
            termination: Termination::ReachedEnd,
            steps: 0,
        })
        .collect();
    let mut t = 0.0;
    let mut n = 0usize;
    while t < t_end {
        if n >= cfg.max_steps {
            return Err(Error::MaxStepsExhausted {
                max_steps: cfg.max_steps,
                time: t,
            });
        }
        let mut rhss = Vec::with_capacity(specs.len());
        let mut dt = t_end - t;
        for (st, u) in steppers.iter_mut().zip(&states) {
            let (r, d) = st.rhs_and_dt(u)?;
            dt = dt.min(d);
            rhss.push(r);
        }
        let mut next = Vec::with_capacity(specs.len());
        let mut blow = None;
        for (st, (u, r)) in steppers.iter_mut().zip(states.iter().zip(&rhss)) {
            match st.advance_with(u, r, dt) {
                Ok(v) => next.push(v),
                Err(Error::NumericalBlowUp { step, time }) => {
                    blow = Some(Termination::BlowUp { step, time });
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        n += 1;
        if let Some(term) = blow {
            for tr in &mut trajs {
                tr.termination = term;
                tr.steps = n;
            }
            // keep the last finite state on record
            let last_t = *trajs[0].times.last().expect("nonempty");
            if last_t < t {
                for (tr, u) in trajs.iter_mut().zip(&states) {
                    tr.times.push(t);
                    tr.states.push(u.clone());
                }
            }
            return Ok(trajs);
        }
        states = next;
        // avoid a sliver step from rounding
        t = if t_end - (t + dt) <= 1e-12 * t_end { t_end } else { t + dt };
        for (k, u) in states.iter().enumerate() {
            observer(k, t, u);
        }
        if n % cfg.output_stride == 0 || t >= t_end {
            for (tr, u) in trajs.iter_mut().zip(&states) {
                tr.times.push(t);
                tr.states.push(u.clone());
            }
        }
    }
    for tr in &mut trajs {
        tr.steps = n;
    }
    Ok(trajs)
}

/// `max{u − v, 0}` nodewise.
pub fn positive_part(u: &GridFunction, v: &GridFunction) -> Result<GridFunction> {
    if !u.same_grid(v) {
        return invalid("positive_part: grid mismatch");
    }
    GridFunction::new(
        u.grid().clone(),
        u.values()
            .iter()
            .zip(v.values())
            .map(|(a, b)| (a - b).max(0.0))
            .collect(),
    )
}

/// Space-time weak residual against a nonnegative test trajectory `phi`:
///
/// ```text
/// R = ∬ (∂_t u φ + |∇_H u|^{p−2} ∇_H u · ∇_H φ) + ∬ (γ|u|^{β−1}u − α|u|^{q−2}u) φ
/// ```
///
/// with forward differences in time and the trapezoid rule. `R ≈ 0` for a
/// solution, `R ≤ 0` for a sub-solution, `R ≥ 0` for a super-solution.
pub fn weak_residual(
    spec: &ProblemSpec,
    cfg: &SolverConfig,
    traj: &Trajectory,
    phi: &Trajectory,
) -> Result<f64> {
    if traj.times.len() != phi.times.len()
        || traj.times.iter().zip(&phi.times).any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + a.abs()))
    {
        return invalid("trajectory and test function are sampled at different times");
    }
    if traj.times.len() < 2 {
        return invalid("weak residual needs at least two time samples");
    }
    for f in &phi.states {
        if !f.same_grid(&traj.states[0]) {
            return invalid("test function lives on a different grid");
        }
        if f.min() < 0.0 {
            return invalid("test functions must be nonnegative");
        }
    }
    let g = &spec.group;
    let vol = traj.states[0].grid().cell_volume();
    let eps2 = cfg.eps_reg * cfg.eps_reg;
    // spatial part G_k = ∫ flux(u_k)·∇φ_k + (−reaction(u_k)) φ_k
    let spatial = |u: &GridFunction, f: &GridFunction| -> Result<f64> {
        let gu = calculus::horizontal_gradient(g, u)?;
        let gf = calculus::horizontal_gradient(g, f)?;
        let norm = gu.pointwise_norm();
        let mu = norm.map(|s| {
            let b = s * s + eps2;
            if b == 0.0 {
                0.0
            } else {
                b.powf(0.5 * (spec.p - 2.0))
            }
        });
        let flux_dot = gu.scaled_by(&mu)?.dot(&gf)?;
        let s: f64 = flux_dot
            .values()
            .iter()
            .zip(u.values().iter().zip(f.values()))
            .map(|(fd, (&x, &w))| fd - reaction(x, spec.beta, spec.q, spec.gamma, spec.alpha) * w)
            .sum();
        Ok(s * vol)
    };
    let mut total = 0.0;
    let mut prev = spatial(&traj.states[0], &phi.states[0])?;
    for k in 0..traj.times.len() - 1 {
        let dt = traj.times[k + 1] - traj.times[k];
        let next = spatial(&traj.states[k + 1], &phi.states[k + 1])?;
        let dtu: f64 = traj.states[k + 1]
            .values()
            .iter()
            .zip(traj.states[k].values())
            .zip(phi.states[k].values().iter().zip(phi.states[k + 1].values()))
            .map(|((a, b), (f0, f1))| (a - b) * 0.5 * (f0 + f1))
            .sum::<f64>()
            * vol;
        total += dtu + 0.5 * dt * (prev + next);
        prev = next;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompareReport {
    /// `max_{t,x} (u − v)⁺`
    pub max_violation: f64,
    pub violation_time: f64,
    pub tolerance: f64,
    pub sup_v: f64,
    pub ordered: bool,
}

/// Check `u ≤ v` over all recorded times.
pub fn compare(
    cfg: &SolverConfig,
    traj_u: &Trajectory,
    traj_v: &Trajectory,
) -> Result<CompareReport> {
    if traj_u.times.len() != traj_v.times.len()
        || traj_u.times.iter().zip(&traj_v.times).any(|(a, b)| a != b)
    {
        return invalid("compare: trajectories are sampled at different times");
    }
    let (u0, v0) = (&traj_u.states[0], &traj_v.states[0]);
    if !u0.same_grid(v0) {
        return invalid("compare: grid mismatch");
    }
    if let Some(k) = (0..u0.len()).find(|&k| u0.values()[k] > v0.values()[k]) {
        return Err(Error::Precondition(format!(
            "initial ordering u(0) <= v(0) fails at node {k}: {} > {}",
            u0.values()[k],
            v0.values()[k]
        )));
    }
    let mut max_violation = 0.0;
    let mut violation_time = 0.0;
    let mut sup_v: f64 = 0.0;
    for ((t, u), v) in traj_u.times.iter().zip(&traj_u.states).zip(&traj_v.states) {
        sup_v = sup_v.max(v.sup_norm());
        let viol = u
            .values()
            .iter()
            .zip(v.values())
            .fold(0.0f64, |m, (a, b)| m.max(a - b));
        if viol > max_violation {
            max_violation = viol;
            violation_time = *t;
        }
    }
    let tolerance = cfg.compare_abs_tol.max(cfg.compare_rel_tol * sup_v);
    Ok(CompareReport {
        max_violation,
        violation_time,
        tolerance,
        sup_v,
        ordered: max_violation <= tolerance,
    })
}

/// Energy-level check of the comparison argument: `f(t) = ∫ ((u − v)⁺)² dx`
/// against Gronwall with constant rate
/// `L = 2α · sup (|u|^{q−2}u − |v|^{q−2}v)/(u − v)` over the range of both
/// trajectories.
pub fn gronwall_from_compare(
    spec: &ProblemSpec,
    traj_u: &Trajectory,
    traj_v: &Trajectory,
    tol: f64,
) -> Result<(GronwallReport, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in traj_u.states.iter().chain(&traj_v.states) {
        lo = lo.min(s.min());
        hi = hi.max(s.max());
    }
    let rate = 2.0 * spec.alpha * inequalities::source_lipschitz(spec.q, lo, hi);
    if !rate.is_finite() {
        return invalid(format!(
            "source term is not Lipschitz on [{lo}, {hi}] for q = {}",
            spec.q
        ));
    }
    let f = traj_u
        .states
        .iter()
        .zip(&traj_v.states)
        .map(|(u, v)| positive_part(u, v).map(|w| grid::quadrature(&w.map(|x| x * x))))
        .collect::<Result<Vec<_>>>()?;
    let sample = GronwallSample::new(traj_u.times.clone(), f, vec![rate; traj_u.times.len()])?
        .with_tolerance(tol);
    Ok((inequalities::gronwall_check(&sample)?, rate))
}
