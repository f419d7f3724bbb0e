//! Convergence studies and property sweeps for the closed-form identities
//! of the horizontal calculus and the algebraic kernels.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::barrier::{self, BarrierParams};
use crate::calculus::{self, DiffOrder, HorizontalField};
use crate::error::Result;
use crate::grid::{BoxDomain, Extension, Grid, GridFunction};
use crate::group::GroupDescriptor;
use crate::inequalities;

/// Max relative error on two nested grids and the observed order.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStudy {
    pub name: String,
    pub h: Vec<f64>,
    pub max_rel_error: Vec<f64>,
    pub observed_order: f64,
}

impl ConvergenceStudy {
    fn from_errors(name: String, h: Vec<f64>, max_rel_error: Vec<f64>) -> Self {
        let n = max_rel_error.len();
        let observed_order = if n >= 2 {
            (max_rel_error[n - 2] / max_rel_error[n - 1]).ln() / (h[n - 2] / h[n - 1]).ln()
        } else {
            f64::NAN
        };
        ConvergenceStudy {
            name,
            h,
            max_rel_error,
            observed_order,
        }
    }

    pub fn finest_error(&self) -> f64 {
        *self.max_rel_error.last().unwrap_or(&f64::NAN)
    }
}

fn horizontal_norm(x: &[f64], n1: usize) -> f64 {
    x[..n1].iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn max_rel_error(
    grid: &Grid,
    got: &[f64],
    keep: impl Fn(&[f64]) -> bool,
    exact: impl Fn(&[f64]) -> f64,
) -> f64 {
    (0..grid.len())
        .filter_map(|k| {
            let x = grid.node(k);
            keep(&x).then(|| {
                let e = exact(&x);
                (got[k] - e).abs() / e.abs()
            })
        })
        .fold(0.0, f64::max)
}

/// `|∇_H |x'|^γ| = γ |x'|^{γ−1}` on nodes with `|x'| ≥ r_min`, for each
/// resolution in `cells` (cells per axis).
pub fn gradient_identity(
    g: &GroupDescriptor,
    domain: &BoxDomain,
    gamma: f64,
    cells: &[Vec<usize>],
    r_min: f64,
    order: DiffOrder,
) -> Result<ConvergenceStudy> {
    let n1 = g.horizontal_dim();
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    for c in cells {
        let grid = Arc::new(Grid::new(domain.clone(), c.clone())?);
        let u = GridFunction::from_fn(grid.clone(), |x| horizontal_norm(x, n1).powf(gamma))
            .with_extension(Extension::Free);
        let norm = calculus::horizontal_gradient_with(g, &u, order)?.pointwise_norm();
        errs.push(max_rel_error(
            &grid,
            norm.values(),
            |x| horizontal_norm(x, n1) >= r_min,
            |x| gamma * horizontal_norm(x, n1).powf(gamma - 1.0),
        ));
        hs.push(grid.h()[0]);
    }
    Ok(ConvergenceStudy::from_errors(
        format!("gradient identity, gamma = {gamma}"),
        hs,
        errs,
    ))
}

/// `div_H (x'/|x'|^γ) = (N_1 − γ)/|x'|^γ` on nodes with `|x'| ≥ r_min`.
pub fn divergence_identity(
    g: &GroupDescriptor,
    domain: &BoxDomain,
    gamma: f64,
    cells: &[Vec<usize>],
    r_min: f64,
    order: DiffOrder,
) -> Result<ConvergenceStudy> {
    let n1 = g.horizontal_dim();
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    for c in cells {
        let grid = Arc::new(Grid::new(domain.clone(), c.clone())?);
        let f = HorizontalField::from_fn(grid.clone(), n1, Extension::Free, |x| {
            let r = horizontal_norm(x, n1);
            x[..n1].iter().map(|v| v / r.powf(gamma)).collect()
        });
        let div = calculus::horizontal_divergence_with(g, &f, order)?;
        errs.push(max_rel_error(
            &grid,
            div.values(),
            |x| horizontal_norm(x, n1) >= r_min,
            |x| (n1 as f64 - gamma) / horizontal_norm(x, n1).powf(gamma),
        ));
        hs.push(grid.h()[0]);
    }
    Ok(ConvergenceStudy::from_errors(
        format!("divergence identity, gamma = {gamma}"),
        hs,
        errs,
    ))
}

/// Discrete `L_p V` against the closed form
/// `(p−1)σ^p L^{p−1} e^{(p−1)σr} + ((N_1−1)/r) σ^{p−1} L^{p−1} e^{(p−1)σr}`
/// on nodes with `r = |x' − x'_0| ≥ r_min`.
pub fn barrier_operator_identity(
    g: &GroupDescriptor,
    domain: &BoxDomain,
    params: &BarrierParams,
    p: f64,
    cells: &[Vec<usize>],
    r_min: f64,
    eps_reg: f64,
) -> Result<ConvergenceStudy> {
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    let n1 = g.horizontal_dim();
    for c in cells {
        let grid = Arc::new(Grid::new(domain.clone(), c.clone())?);
        let v = barrier::barrier_field(params, grid.clone());
        let lv = calculus::p_sub_laplacian(g, &v, p, eps_reg)?;
        errs.push(max_rel_error(
            &grid,
            lv.values(),
            |x| params.distance(&x[..n1]) >= r_min,
            |x| params.analytic_p_laplacian(p, n1, params.distance(&x[..n1])),
        ));
        hs.push(grid.h()[0]);
    }
    Ok(ConvergenceStudy::from_errors(
        format!("analytic L_p V, p = {p}"),
        hs,
        errs,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct LindqvistSweep {
    pub p: f64,
    pub samples: usize,
    /// min over samples of `gap − bound + 1e−12 (1+|c|+|d|)^{2p}`
    pub min_margin: f64,
    pub min_gap: f64,
    pub violations: usize,
}

/// Random `(c, d)` pairs in dimensions 1..=3, split evenly.
pub fn lindqvist_sweep(p: f64, samples: usize, seed: u64) -> Result<LindqvistSweep> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ p.to_bits());
    let mut min_margin = f64::INFINITY;
    let mut min_gap = f64::INFINITY;
    let mut violations = 0;
    for k in 0..samples {
        let dim = 1 + k % 3;
        // mix of scales, including near-coincident and near-zero pairs
        let scale = [1e-3, 0.1, 1.0, 10.0][rng.gen_range(0..4)];
        let c: Vec<f64> = (0..dim).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
        let d: Vec<f64> = match rng.gen_range(0..4) {
            0 => c.iter().map(|v| v + scale * 1e-6 * rng.gen_range(-1.0..1.0)).collect(),
            1 => vec![0.0; dim],
            _ => (0..dim).map(|_| scale * rng.gen_range(-1.0..1.0)).collect(),
        };
        let gap = inequalities::pairing_gap(&c, &d, p)?;
        let bound = inequalities::lindqvist_lower_bound(&c, &d, p)?;
        let nc = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nd = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let margin = gap - bound + 1e-12 * (1.0 + nc + nd).powf(2.0 * p);
        if margin < 0.0 || gap < 0.0 {
            violations += 1;
        }
        min_margin = min_margin.min(margin);
        min_gap = min_gap.min(gap);
    }
    Ok(LindqvistSweep {
        p,
        samples,
        min_margin,
        min_gap,
        violations,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OddPowerSweep {
    pub samples: usize,
    pub sign_mismatches: usize,
    /// samples falling in each of the three printed cases
    /// `u > v > 0`, `u > 0 > v`, `0 > u > v`
    pub case_counts: [usize; 3],
}

pub fn odd_power_sweep(samples: usize, seed: u64) -> OddPowerSweep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    let mut cases = [0usize; 3];
    for k in 0..samples {
        let beta = rng.gen_range(0.05..6.0);
        let scale = [1e-6, 1e-2, 1.0, 50.0][k % 4];
        let a: f64 = scale * rng.gen_range(0.01..1.0);
        let b: f64 = scale * rng.gen_range(0.01..1.0);
        let (u, v) = match k % 5 {
            0 => (a.max(b), a.min(b)),
            1 => (a, -b),
            2 => (-a.min(b), -a.max(b)),
            3 => (a, 0.0),
            _ => (rng.gen_range(-1.0..1.0) * scale, rng.gen_range(-1.0..1.0) * scale),
        };
        if u > v && v > 0.0 {
            cases[0] += 1;
        } else if u > 0.0 && 0.0 > v {
            cases[1] += 1;
        } else if 0.0 > u && u > v {
            cases[2] += 1;
        }
        let gap = inequalities::odd_power_gap(u, v, beta);
        let want = (u - v).partial_cmp(&0.0).map(|o| o as i8);
        let got = gap.partial_cmp(&0.0).map(|o| o as i8);
        if want != got {
            mismatches += 1;
        }
    }
    OddPowerSweep {
        samples,
        sign_mismatches: mismatches,
        case_counts: cases,
    }
}

/// `p = 2`, `eps_reg = 0` on a Euclidean grid reproduces the `2N+1`-point
/// Laplacian to rounding.
pub fn euclidean_stencil_matches(n: usize, cells: usize, seed: u64) -> Result<bool> {
    let g = GroupDescriptor::euclidean(n)?;
    let grid = Arc::new(Grid::new(BoxDomain::cube(n, 0.0, 1.0)?, vec![cells; n])?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let u = GridFunction::new(grid.clone(), vals)?;
    let lap = calculus::p_sub_laplacian(&g, &u, 2.0, 0.0)?;
    let h = grid.h();
    let mut idx = vec![0usize; n];
    for k in 0..grid.len() {
        grid.unravel(k, &mut idx);
        let c = u.values()[k];
        let mut want = 0.0;
        for a in 0..n {
            let nb = |delta: isize| {
                let mut j: Vec<isize> = idx.iter().map(|&i| i as isize).collect();
                j[a] += delta;
                let inside = j[a] >= 0 && j[a] < cells as isize;
                if inside {
                    u.value_at(&j)
                } else {
                    -c
                }
            };
            let (up, dn) = (nb(1), nb(-1));
            want += (up - 2.0 * c + dn) / (h[a] * h[a]);
        }
        if lap.values()[k] != want {
            let tol = 1e-13 * want.abs().max(1.0 / (h[0] * h[0]));
            if (lap.values()[k] - want).abs() > tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
