//! Exponential super-solution `V(x) = L e^{σ r}`, `r = |x' − x'₀|`, and the
//! uniform bound `L e^{σ(r′+1)}` it forces on solutions lying below it.

use std::sync::Arc;

use serde::Serialize;

use crate::calculus;
use crate::error::{invalid, Error, Result};
use crate::grid::{BoxDomain, Extension, Grid, GridFunction};
use crate::group::{GroupDescriptor, Point};
use crate::solver::{ProblemSpec, SolverConfig, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierParams {
    #[serde(rename = "L")]
    pub l: f64,
    pub sigma: f64,
    pub x0_prime: Vec<f64>,
    pub eps: f64,
    pub r_prime: f64,
}

impl BarrierParams {
    /// Full construction for a problem on `domain`: `r′`, base point, then
    /// `(σ, L)` from the exponents.
    pub fn for_domain(
        domain: &BoxDomain,
        g: &GroupDescriptor,
        p: f64,
        q: f64,
        beta: f64,
        eps: f64,
    ) -> Result<BarrierParams> {
        let r_prime = r_prime(domain, g)?;
        let x0_prime = choose_x0(domain, g, eps)?;
        let (sigma, l) = barrier_params(p, q, beta, g.horizontal_dim(), eps, r_prime)?;
        Ok(BarrierParams {
            l,
            sigma,
            x0_prime,
            eps,
            r_prime,
        })
    }

    /// `|x' − x'₀|`.
    pub fn distance(&self, x_prime: &[f64]) -> f64 {
        x_prime
            .iter()
            .zip(&self.x0_prime)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn value_at_distance(&self, r: f64) -> f64 {
        self.l * (self.sigma * r).exp()
    }

    /// Closed form of `L_p V` as a function of `r` for `N₁` horizontal
    /// directions:
    /// `((p−1)σ^p + ((N₁−1)/r) σ^{p−1}) L^{p−1} e^{(p−1)σr}`.
    pub fn analytic_p_laplacian(&self, p: f64, n1: usize, r: f64) -> f64 {
        let s = self.sigma;
        ((p - 1.0) * s.powf(p) + (n1 as f64 - 1.0) / r * s.powf(p - 1.0))
            * self.l.powf(p - 1.0)
            * ((p - 1.0) * s * r).exp()
    }

    /// Check `eps ≤ |x'₀ − x'| < r′ + 1` at every node of `grid`.
    pub fn check_placement(&self, grid: &Grid, n1: usize) -> Result<()> {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for k in 0..grid.len() {
            let r = self.distance(&grid.node(k)[..n1]);
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if lo < self.eps {
            return Err(Error::Infeasible(format!(
                "near side: min node distance {lo} < eps = {}",
                self.eps
            )));
        }
        if hi >= self.r_prime + 1.0 {
            return Err(Error::Infeasible(format!(
                "far side: max node distance {hi} >= r' + 1 = {}",
                self.r_prime + 1.0
            )));
        }
        Ok(())
    }
}

fn projection(domain: &BoxDomain, g: &GroupDescriptor) -> Result<(Vec<f64>, Vec<f64>)> {
    let n1 = g.horizontal_dim();
    if domain.dim() != g.total_dim() {
        return invalid(format!(
            "domain dimension {} does not match group {}",
            domain.dim(),
            g.name()
        ));
    }
    Ok((domain.lower()[..n1].to_vec(), domain.upper()[..n1].to_vec()))
}

/// `max |x'|` over the closed box (attained at a corner of the first-stratum
/// projection).
pub fn r_prime(domain: &BoxDomain, g: &GroupDescriptor) -> Result<f64> {
    let (lo, hi) = projection(domain, g)?;
    Ok(lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| a.abs().max(b.abs()).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Base point `eps` below the projection along the first axis, centred in
/// the remaining first-stratum directions.
pub fn choose_x0(domain: &BoxDomain, g: &GroupDescriptor, eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0 && eps < 1.0) {
        return invalid(format!("eps must lie in (0, 1), got {eps}"));
    }
    let (lo, hi) = projection(domain, g)?;
    let mut x0: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    x0[0] = lo[0] - eps;
    // the nearest point of the projection is at distance exactly eps; the
    // farthest is a corner on the upper face of axis 0
    let far = lo
        .iter()
        .zip(&hi)
        .zip(&x0)
        .map(|((a, b), c)| (a - c).abs().max((b - c).abs()).powi(2))
        .sum::<f64>()
        .sqrt();
    let cap = r_prime(domain, g)? + 1.0;
    if far >= cap {
        return Err(Error::Infeasible(format!(
            "far side: max distance {far} from x0' to the domain is not below r' + 1 = {cap}"
        )));
    }
    Ok(x0)
}

/// `(σ, L)` making `V` a super-solution on `eps ≤ r ≤ r′ + 1`, for
/// `p ≤ q < β + 1`:
///
/// * `q > p`: `σ = 1/((q−p)(r′+1))`,
///   `L = max{(2e)^{1/(β+1−q)}, (2((p−1)σ^p + ((N₁−1)/ε)σ^{p−1}))^{1/(β+1−p)}}`
/// * `q = p`: `σ = 1`, `L = max{2^{1/(β+1−q)}, (2(p−1+(N₁−1)/ε))^{1/(β+1−p)}}`
pub fn barrier_params(
    p: f64,
    q: f64,
    beta: f64,
    n1: usize,
    eps: f64,
    r_prime: f64,
) -> Result<(f64, f64)> {
    if !(p > 1.0) {
        return invalid(format!("requires p > 1, got p = {p}"));
    }
    if !(p <= q && q < beta + 1.0) {
        return invalid(format!(
            "requires p <= q < beta + 1, got p = {p}, q = {q}, beta = {beta}"
        ));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return invalid(format!("eps must lie in (0, 1), got {eps}"));
    }
    if !(r_prime > 0.0) {
        return invalid(format!("r' must be positive, got {r_prime}"));
    }
    let k = n1 as f64 - 1.0;
    if q > p {
        let sigma = 1.0 / ((q - p) * (r_prime + 1.0));
        let a = (2.0 * std::f64::consts::E).powf(1.0 / (beta + 1.0 - q));
        let b = (2.0 * ((p - 1.0) * sigma.powf(p) + k / eps * sigma.powf(p - 1.0)))
            .powf(1.0 / (beta + 1.0 - p));
        Ok((sigma, a.max(b)))
    } else {
        let a = 2f64.powf(1.0 / (beta + 1.0 - q));
        let b = (2.0 * (p - 1.0 + k / eps)).powf(1.0 / (beta + 1.0 - p));
        Ok((1.0, a.max(b)))
    }
}

/// Double `L` until it dominates `sup u₀`.
pub fn inflate_l(params: &BarrierParams, u0: &GridFunction) -> BarrierParams {
    let target = u0.max();
    let mut l = params.l;
    while l < target {
        l *= 2.0;
    }
    BarrierParams {
        l,
        ..params.clone()
    }
}

pub fn barrier_value(params: &BarrierParams, x: &Point) -> f64 {
    params.value_at_distance(params.distance(&x.coords()[..params.x0_prime.len()]))
}

/// `V` sampled on `grid`, extended beyond the box by extrapolation.
pub fn barrier_field(params: &BarrierParams, grid: Arc<Grid>) -> GridFunction {
    let n1 = params.x0_prime.len();
    GridFunction::from_fn(grid, |x| params.value_at_distance(params.distance(&x[..n1])))
        .with_extension(Extension::Free)
}

/// Time-independent part of `M_p v = v_t − L_p v − α v^{q−1} + γ v^β`
/// (the corollary uses `γ = α = 1`); powers are plain, so negative `v` is
/// only accepted with integer exponents.
pub fn mp_operator(spec: &ProblemSpec, cfg: &SolverConfig, v: &GridFunction) -> Result<GridFunction> {
    let integer = |s: f64| s.fract() == 0.0;
    if v.min() < 0.0 && !(integer(spec.beta) && integer(spec.q - 1.0)) {
        return invalid("M_p of a function with negative values needs integer exponents");
    }
    let lap = calculus::p_sub_laplacian(&spec.group, v, spec.p, cfg.eps_reg)?;
    let vals = lap
        .values()
        .iter()
        .zip(v.values())
        .map(|(l, &x)| -l - spec.alpha * x.powf(spec.q - 1.0) + spec.gamma * x.powf(spec.beta))
        .collect();
    GridFunction::new(v.grid().clone(), vals)
}

/// `M_p` along a trajectory, with `v_t` by forward differences; the last
/// state reuses the preceding difference.
pub fn mp_operator_trajectory(
    spec: &ProblemSpec,
    cfg: &SolverConfig,
    traj: &Trajectory,
) -> Result<Vec<GridFunction>> {
    let n = traj.states.len();
    if n < 2 {
        return invalid("need at least two states for a time difference");
    }
    (0..n)
        .map(|k| {
            let (a, b) = if k + 1 < n { (k, k + 1) } else { (k - 1, k) };
            let dt = traj.times[b] - traj.times[a];
            let vt = traj.states[b].axpy(-1.0, &traj.states[a])?.scaled(1.0 / dt);
            mp_operator(spec, cfg, &traj.states[k])?.axpy(1.0, &vt)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierInequalityReport {
    pub samples: usize,
    /// min over samples of RHS − LHS
    pub min_margin: f64,
    /// `r` at which the minimum occurs
    pub argmin_r: f64,
}

/// Sample the pointwise super-solution inequality
///
/// ```text
/// (p−1)σ^p + ((N₁−1)/r) σ^{p−1} + L^{q−p} e^{(q−p)σr} ≤ L^{β+1−p} e^{(β+1−p)σr}
/// ```
///
/// at `samples` equispaced `r ∈ [eps, r′+1]`, both endpoints included.
pub fn verify_barrier_inequality(
    params: &BarrierParams,
    p: f64,
    q: f64,
    beta: f64,
    n1: usize,
    samples: usize,
) -> Result<BarrierInequalityReport> {
    if samples == 0 {
        return invalid("need at least one sample");
    }
    let (a, b) = (params.eps, params.r_prime + 1.0);
    let (s, l) = (params.sigma, params.l);
    let k = n1 as f64 - 1.0;
    let mut report = BarrierInequalityReport {
        samples,
        min_margin: f64::INFINITY,
        argmin_r: a,
    };
    for i in 0..samples {
        let r = if samples == 1 {
            a
        } else {
            a + (b - a) * i as f64 / (samples - 1) as f64
        };
        let lhs = (p - 1.0) * s.powf(p)
            + k / r * s.powf(p - 1.0)
            + l.powf(q - p) * ((q - p) * s * r).exp();
        let rhs = l.powf(beta + 1.0 - p) * ((beta + 1.0 - p) * s * r).exp();
        if rhs - lhs < report.min_margin {
            report.min_margin = rhs - lhs;
            report.argmin_r = r;
        }
    }
    Ok(report)
}

/// `L e^{σ(r′+1)}`.
pub fn global_bound(params: &BarrierParams) -> f64 {
    params.value_at_distance(params.r_prime + 1.0)
}
