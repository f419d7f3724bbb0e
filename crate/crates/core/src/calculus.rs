//! Discrete horizontal calculus: `∇_H`, horizontal divergence and the
//! p-sub-Laplacian `L_p u = Σ_j X_j(|∇_H u|^{p−2} X_j u)`.
//!
//! First-order operators use centered differences (fourth order by
//! default). The p-sub-Laplacian is assembled in flux form: because every
//! `X_j` is divergence free (coefficients of stratum `l` only depend on
//! lower strata),
//!
//! ```text
//! L_p u = Σ_{m,n} ∂_m (μ A_mn ∂_n u),   A = Σ_j c_j c_jᵀ,   μ = (|∇_H u|² + ε²)^{(p−2)/2}
//! ```
//!
//! Every term is a difference of face fluxes
//! `μ_f (A_mm ∂_m u + Σ_{q≠m} A_mq ∂_q u)` with the coefficients sampled at
//! the face midpoint and the normal derivative taken across the face. `μ_f`
//! averages the four adjacent one-sided differences for each tangential
//! derivative; inside the flux those four are instead combined with the
//! monotonized-central limiter, which keeps the scheme order-preserving
//! where the mixed coefficients would otherwise break monotonicity.
//! On Euclidean groups with `p = 2` this is exactly the standard
//! `2N + 1`-point Laplacian.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::{Extension, Grid, GridFunction, Padded};
use crate::group::GroupDescriptor;
use crate::power::Exponent;

/// Accuracy of the centered first-derivative stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiffOrder {
    Second,
    #[default]
    Fourth,
}

/// Default regularization of the degenerate/singular flux coefficient.
pub const DEFAULT_EPS_REG: f64 = 1e-8;

#[inline]
fn centered(data: &[f64], off: usize, stride: usize, h: f64, order: DiffOrder) -> f64 {
    match order {
        DiffOrder::Second => (data[off + stride] - data[off - stride]) / (2.0 * h),
        DiffOrder::Fourth => {
            (8.0 * (data[off + stride] - data[off - stride])
                - (data[off + 2 * stride] - data[off - 2 * stride]))
                / (12.0 * h)
        }
    }
}

/// `∇_H u = (X_1 u, …, X_{N_1} u)`, one grid function per field.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizontalField {
    components: Vec<GridFunction>,
}

impl HorizontalField {
    pub fn new(components: Vec<GridFunction>) -> Result<Self> {
        let Some(first) = components.first() else {
            return invalid("horizontal field needs at least one component");
        };
        if components.iter().any(|c| !c.same_grid(first)) {
            return invalid("horizontal field components live on different grids");
        }
        Ok(HorizontalField { components })
    }

    /// Sample an analytic field `x ↦ (F_1(x), …, F_{N_1}(x))`.
    pub fn from_fn(
        grid: Arc<Grid>,
        n1: usize,
        extension: Extension,
        f: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Self {
        let mut comps = vec![Vec::with_capacity(grid.len()); n1];
        for k in 0..grid.len() {
            let v = f(&grid.node(k));
            for (c, x) in comps.iter_mut().zip(v) {
                c.push(x);
            }
        }
        HorizontalField {
            components: comps
                .into_iter()
                .map(|c| {
                    GridFunction::new(grid.clone(), c)
                        .expect("length matches grid")
                        .with_extension(extension)
                })
                .collect(),
        }
    }

    pub fn components(&self) -> &[GridFunction] {
        &self.components
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.components[0].grid()
    }

    /// `|F|` at every node.
    pub fn pointwise_norm(&self) -> GridFunction {
        let n = self.components[0].len();
        let vals = (0..n)
            .map(|k| {
                self.components
                    .iter()
                    .map(|c| c.values()[k] * c.values()[k])
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        GridFunction::new(self.grid().clone(), vals).expect("same grid")
    }

    /// `F · G` at every node.
    pub fn dot(&self, other: &HorizontalField) -> Result<GridFunction> {
        if self.components.len() != other.components.len()
            || !self.components[0].same_grid(&other.components[0])
        {
            return invalid("dot of mismatched horizontal fields");
        }
        let n = self.components[0].len();
        let vals = (0..n)
            .map(|k| {
                self.components
                    .iter()
                    .zip(&other.components)
                    .map(|(a, b)| a.values()[k] * b.values()[k])
                    .sum()
            })
            .collect();
        GridFunction::new(self.grid().clone(), vals)
    }

    /// Nodewise product `w(x) F(x)`.
    pub fn scaled_by(&self, w: &GridFunction) -> Result<HorizontalField> {
        if !w.same_grid(&self.components[0]) {
            return invalid("weight lives on a different grid");
        }
        Ok(HorizontalField {
            components: self
                .components
                .iter()
                .map(|c| {
                    GridFunction::new(
                        c.grid().clone(),
                        c.values().iter().zip(w.values()).map(|(a, b)| a * b).collect(),
                    )
                    .expect("same grid")
                    .with_extension(c.extension())
                })
                .collect(),
        })
    }
}

fn check_grid(g: &GroupDescriptor, grid: &Grid) -> Result<()> {
    if grid.dim() != g.total_dim() {
        return invalid(format!(
            "grid dimension {} does not match group {} (N = {})",
            grid.dim(),
            g.name(),
            g.total_dim()
        ));
    }
    Ok(())
}

pub fn horizontal_gradient(g: &GroupDescriptor, u: &GridFunction) -> Result<HorizontalField> {
    horizontal_gradient_with(g, u, DiffOrder::default())
}

/// Component `j` is `Σ_m c_jm(x) D_m u` with `D_m` the centered difference
/// along axis `m`; ghost values come from `u`'s extension.
pub fn horizontal_gradient_with(
    g: &GroupDescriptor,
    u: &GridFunction,
    order: DiffOrder,
) -> Result<HorizontalField> {
    let grid = u.grid().clone();
    check_grid(g, &grid)?;
    let n = grid.dim();
    let n1 = g.horizontal_dim();
    let pad = Padded::new(u);
    let h = grid.h().to_vec();

    let mut buf = vec![0.0; grid.len() * n1];
    buf.par_chunks_mut(n1).enumerate().for_each(|(k, out)| {
        let mut idx = vec![0; n];
        grid.unravel(k, &mut idx);
        let x: Vec<f64> = idx.iter().enumerate().map(|(a, &i)| grid.coord(a, i as isize)).collect();
        let off = pad.offset(&idx);
        let du: Vec<f64> = (0..n)
            .map(|m| centered(&pad.data, off, pad.strides[m], h[m], order))
            .collect();
        for (j, o) in out.iter_mut().enumerate() {
            let c = g.coeff_raw(j, &x);
            *o = c.iter().zip(&du).map(|(a, b)| a * b).sum();
        }
    });
    split_interleaved(grid, buf, n1, Extension::Free)
}

fn split_interleaved(
    grid: Arc<Grid>,
    buf: Vec<f64>,
    n1: usize,
    ext: Extension,
) -> Result<HorizontalField> {
    let comps = (0..n1)
        .map(|j| {
            GridFunction::new(grid.clone(), buf.iter().skip(j).step_by(n1).copied().collect())
                .map(|f| f.with_extension(ext))
        })
        .collect::<Result<Vec<_>>>()?;
    HorizontalField::new(comps)
}

pub fn horizontal_divergence(g: &GroupDescriptor, f: &HorizontalField) -> Result<GridFunction> {
    horizontal_divergence_with(g, f, DiffOrder::default())
}

/// `Σ_j X_j F_j`, with the same centered stencils as the gradient.
pub fn horizontal_divergence_with(
    g: &GroupDescriptor,
    f: &HorizontalField,
    order: DiffOrder,
) -> Result<GridFunction> {
    let grid = f.grid().clone();
    check_grid(g, &grid)?;
    if f.components.len() != g.horizontal_dim() {
        return invalid(format!(
            "field has {} components, group has N1 = {}",
            f.components.len(),
            g.horizontal_dim()
        ));
    }
    let n = grid.dim();
    let pads: Vec<Padded> = f.components.iter().map(Padded::new).collect();
    let h = grid.h().to_vec();
    let vals: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let mut idx = vec![0; n];
            grid.unravel(k, &mut idx);
            let x: Vec<f64> = idx.iter().enumerate().map(|(a, &i)| grid.coord(a, i as isize)).collect();
            let off = pads[0].offset(&idx);
            let mut s = 0.0;
            for (j, pad) in pads.iter().enumerate() {
                let c = g.coeff_raw(j, &x);
                for (m, cm) in c.iter().enumerate() {
                    if *cm != 0.0 {
                        s += cm * centered(&pad.data, off, pad.strides[m], h[m], order);
                    }
                }
            }
            s
        })
        .collect();
    GridFunction::new(grid, vals)
}

/// `L_p u` with regularized coefficient `(|∇_H u|² + eps_reg²)^{(p−2)/2}`.
pub fn p_sub_laplacian(
    g: &GroupDescriptor,
    u: &GridFunction,
    p: f64,
    eps_reg: f64,
) -> Result<GridFunction> {
    PLaplacian::new(g, u.grid().clone())?.apply(u, p, eps_reg)
}

/// Largest grid dimension handled by [`PLaplacian`].
pub const MAX_DIM: usize = 8;

/// Reusable flux-form p-sub-Laplacian for a fixed group and grid.
///
/// Works on the region of interior nodes plus one ghost layer. Per-node and
/// per-face data are stored row by row along the last axis, one contiguous
/// slice per quantity, so the inner loops run over plain slices.
#[derive(Debug, Clone)]
pub struct PLaplacian {
    grid: Arc<Grid>,
    /// dims / strides of the region
    rdims: Vec<usize>,
    rstrides: Vec<usize>,
    /// `(j, k)` with `c_jk` not identically zero, grouped by `j`
    terms: Vec<(usize, usize)>,
    /// per axis `m`: `c_jk` at the midpoint of face `(r, r + e_m)`, same layout
    face_coef: Vec<Vec<f64>>,
    /// per axis `m`: `A_mm` at the same midpoints, indexed by region node
    face_diag: Vec<Vec<f64>>,
    /// per axis `m`: `(q, A_mq)` at the same midpoints for `q ≠ m` with
    /// `A_mq` not identically zero
    face_mixed: Vec<Vec<(usize, Vec<f64>)>>,
    row_weight: f64,
}

/// Nodewise flux-coefficient statistics from one application.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxStats {
    /// max of `μ = (|∇_H u|² + ε²)^{(p−2)/2}` over the faces of interior nodes
    pub mu_max: f64,
}

/// Scratch buffers reused across applications of one operator.
#[derive(Debug, Default)]
pub struct Workspace {
    pad: Vec<f64>,
    region: Vec<f64>,
    kappa: Vec<f64>,
    mflux: Vec<f64>,
}

impl PLaplacian {
    pub fn new(g: &GroupDescriptor, grid: Arc<Grid>) -> Result<Self> {
        check_grid(g, &grid)?;
        let n = grid.dim();
        if n > MAX_DIM {
            return invalid(format!("p-sub-Laplacian supports up to {MAX_DIM} dimensions, got {n}"));
        }
        let n1 = g.horizontal_dim();
        let rdims: Vec<usize> = grid.n_cells().iter().map(|k| k + 2).collect();
        let rlen: usize = rdims.iter().product();
        let rrow = rdims[n - 1];
        let mut rstrides = vec![1; n];
        for a in (0..n - 1).rev() {
            rstrides[a] = rstrides[a + 1] * rdims[a + 1];
        }
        let h = grid.h().to_vec();
        // dense `[r][j][k]` samples at the midpoints of faces `(r, r + e_m)`
        let sample = |m: usize| -> Vec<f64> {
            let mut out = vec![0.0; rlen * n1 * n];
            out.par_chunks_mut(n1 * n).enumerate().for_each(|(r, o)| {
                let mut x = region_coords(&grid, &rdims, r);
                x[m] += 0.5 * h[m];
                for j in 0..n1 {
                    o[j * n..(j + 1) * n].copy_from_slice(&g.coeff_raw(j, &x));
                }
            });
            out
        };
        let face_dense: Vec<Vec<f64>> = (0..n).map(sample).collect();
        let terms: Vec<(usize, usize)> = (0..n1)
            .flat_map(|j| (0..n).map(move |k| (j, k)))
            .filter(|&(j, k)| {
                face_dense
                    .iter()
                    .any(|d| d.chunks(n1 * n).any(|c| c[j * n + k] != 0.0))
            })
            .collect();
        let rowwise = |dense: &[f64]| -> Vec<f64> {
            let nt = terms.len();
            let mut out = vec![0.0; rlen * nt];
            for (row, chunk) in out.chunks_mut(nt * rrow).enumerate() {
                for (s, &(j, k)) in terms.iter().enumerate() {
                    for t in 0..rrow {
                        chunk[s * rrow + t] = dense[(row * rrow + t) * n1 * n + j * n + k];
                    }
                }
            }
            out
        };
        let face_coef: Vec<Vec<f64>> = face_dense.iter().map(|d| rowwise(d)).collect();
        let face_diag: Vec<Vec<f64>> = face_dense
            .iter()
            .enumerate()
            .map(|(m, fc)| {
                fc.chunks(n1 * n)
                    .map(|c| (0..n1).map(|j| c[j * n + m] * c[j * n + m]).sum())
                    .collect()
            })
            .collect();
        let face_mixed: Vec<Vec<(usize, Vec<f64>)>> = face_dense
            .iter()
            .enumerate()
            .map(|(m, fc)| {
                (0..n)
                    .filter(|&q| q != m)
                    .filter_map(|q| {
                        let vals: Vec<f64> = fc
                            .chunks(n1 * n)
                            .map(|c| (0..n1).map(|j| c[j * n + m] * c[j * n + q]).sum())
                            .collect();
                        vals.iter().any(|&v| v != 0.0).then_some((q, vals))
                    })
                    .collect()
            })
            .collect();
        let mut row_weight: f64 = 0.0;
        let mut idx = vec![0; n];
        for k in 0..grid.len() {
            grid.unravel(k, &mut idx);
            let r: usize = idx.iter().zip(&rstrides).map(|(i, s)| (i + 1) * s).sum();
            let mut w = 0.0;
            for m in 0..n {
                w += 0.5 * (face_diag[m][r] + face_diag[m][r - rstrides[m]]) / (h[m] * h[m]);
            }
            for (m, fm) in face_mixed.iter().enumerate() {
                for (q, vals) in fm {
                    w += 0.25 * (vals[r].abs() + vals[r - rstrides[m]].abs()) / (h[m] * h[*q]);
                }
            }
            row_weight = row_weight.max(w);
        }
        Ok(PLaplacian {
            grid,
            rdims,
            rstrides,
            terms,
            face_coef,
            face_diag,
            face_mixed,
            row_weight,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Gershgorin weight of the metric part of the stencil; the spectral
    /// radius of the linearized operator is at most
    /// `4 (p − 1) μ_max · row_weight`.
    pub fn row_weight(&self) -> f64 {
        self.row_weight
    }

    pub fn apply(&self, u: &GridFunction, p: f64, eps_reg: f64) -> Result<GridFunction> {
        self.apply_with_stats(u, p, eps_reg).map(|(f, _)| f)
    }

    pub fn apply_with_stats(
        &self,
        u: &GridFunction,
        p: f64,
        eps_reg: f64,
    ) -> Result<(GridFunction, FluxStats)> {
        self.apply_in(u, p, eps_reg, &mut Workspace::default())
    }

    /// As [`PLaplacian::apply_with_stats`], reusing the buffers in `ws`.
    pub fn apply_in(
        &self,
        u: &GridFunction,
        p: f64,
        eps_reg: f64,
        ws: &mut Workspace,
    ) -> Result<(GridFunction, FluxStats)> {
        if !(p > 1.0) {
            return invalid(format!("p-sub-Laplacian needs p > 1, got {p}"));
        }
        if !(eps_reg >= 0.0) {
            return invalid(format!("eps_reg must be nonnegative, got {eps_reg}"));
        }
        if !(Arc::ptr_eq(u.grid(), &self.grid) || **u.grid() == *self.grid) {
            return invalid("grid function does not live on the operator's grid");
        }
        let pad = Padded::with_buffer(u, std::mem::take(&mut ws.pad));
        let out = match self.grid.dim() {
            1 => self.kernel::<1>(&pad, p, eps_reg, ws),
            2 => self.kernel::<2>(&pad, p, eps_reg, ws),
            3 => self.kernel::<3>(&pad, p, eps_reg, ws),
            4 => self.kernel::<4>(&pad, p, eps_reg, ws),
            5 => self.kernel::<5>(&pad, p, eps_reg, ws),
            6 => self.kernel::<6>(&pad, p, eps_reg, ws),
            7 => self.kernel::<7>(&pad, p, eps_reg, ws),
            _ => self.kernel::<8>(&pad, p, eps_reg, ws),
        };
        ws.pad = pad.data;
        let (vals, stats) = out?;
        Ok((GridFunction::new(self.grid.clone(), vals)?, stats))
    }

    /// `g2 ← Σ_j (Σ_k c_jk d_k)²` over one row segment.
    fn horiz2(&self, coef: &[f64], stride: usize, d: &[&[f64]], g2: &mut [f64], s: &mut [f64]) {
        let l = g2.len();
        g2.fill(0.0);
        let mut i = 0;
        while i < self.terms.len() {
            let j = self.terms[i].0;
            s.fill(0.0);
            while i < self.terms.len() && self.terms[i].0 == j {
                let c = &coef[i * stride..i * stride + l];
                let dk = &d[self.terms[i].1][..l];
                for ((s, c), dk) in s.iter_mut().zip(c).zip(dk) {
                    *s += c * dk;
                }
                i += 1;
            }
            for (g, s) in g2.iter_mut().zip(s.iter()) {
                *g += s * s;
            }
        }
    }

    fn kernel<const N: usize>(
        &self,
        pad: &Padded,
        p: f64,
        eps_reg: f64,
        ws: &mut Workspace,
    ) -> Result<(Vec<f64>, FluxStats)> {
        let grid = &self.grid;
        let cells: [usize; N] = std::array::from_fn(|a| grid.n_cells()[a]);
        let h: [f64; N] = std::array::from_fn(|a| grid.h()[a]);
        let ps: [usize; N] = std::array::from_fn(|a| pad.strides[a]);
        let rdims = &self.rdims;
        let rlen: usize = rdims.iter().product();
        let rrow = rdims[N - 1];
        // region-row offsets of the outer axes
        let rows: [usize; N] = std::array::from_fn(|a| self.rstrides[a] / rrow);
        let expo = 0.5 * (p - 2.0);
        let power = Exponent::new(expo);
        let linear = expo == 0.0;
        let eps2 = eps_reg * eps_reg;
        let may_blow = expo < 0.0 && eps2 == 0.0;
        let nt = self.terms.len();
        let any_mixed = self.face_mixed.iter().any(|f| !f.is_empty());
        let pad_base = |ridx: &[usize]| -> usize {
            ridx.iter()
                .zip(&ps)
                .map(|(i, s)| (i + crate::grid::HALO - 1) * s)
                .sum()
        };
        let diff = |out: &mut [f64], a: &[f64], b: &[f64], scale: f64| {
            let l = out.len();
            for ((o, a), b) in out.iter_mut().zip(&a[..l]).zip(&b[..l]) {
                *o = (a - b) * scale;
            }
        };

        // pass 1, every region row: forward differences D⁺_0 u … D⁺_{N−1} u
        // then backward ones D⁻_k u, each a slice of length `rrow`
        let width = 2 * N;
        let region = &mut ws.region;
        if !linear || any_mixed {
            region.resize(rlen * width, 0.0);
            region.par_chunks_mut(rrow * width).enumerate().for_each(|(row, chunk)| {
                let mut ridx = [0usize; N];
                unravel_dims(rdims, row * rrow, &mut ridx);
                let base = pad_base(&ridx);
                let (fwd, bwd) = chunk.split_at_mut(N * rrow);
                for m in 0..N {
                    let r = m * rrow..(m + 1) * rrow;
                    diff(&mut fwd[r.clone()], &pad.data[base + ps[m]..], &pad.data[base..], 1.0 / h[m]);
                    diff(&mut bwd[r], &pad.data[base..], &pad.data[base - ps[m]..], 1.0 / h[m]);
                }
            });
        }
        let region = &ws.region;
        let field = |row: usize, f: usize| -> &[f64] {
            let o = (row * width + f) * rrow;
            &region[o..o + rrow]
        };

        // pass 2, faces (r, r + e_m) adjacent to the interior, layout
        // `[row][m][t]`: κ = μ_f A_mm and the tangential flux
        // μ_f Σ_q A_mq ⟨D_q u⟩. μ_f takes the normal derivative across the
        // face and the mean of the four adjacent one-sided tangential
        // differences; ⟨D_q u⟩ combines the same four with the MC limiter
        let kappa = &mut ws.kappa;
        kappa.clear();
        kappa.resize(rlen * N, 0.0);
        let mflux = &mut ws.mflux;
        if any_mixed {
            mflux.clear();
        }
        mflux.resize(rlen * N, 0.0);
        let face_mu = kappa
            .par_chunks_mut(rrow * N)
            .zip(mflux.par_chunks_mut(rrow * N))
            .enumerate()
            .map_init(
                || (vec![0.0; N * rrow], vec![0.0; rrow], vec![0.0; rrow]),
                |(fd, g2, s), (row, (chunk, mchunk))| {
                    let mut ridx = [0usize; N];
                    unravel_dims(rdims, row * rrow, &mut ridx);
                    let mut mu_max: f64 = 0.0;
                    for m in 0..N {
                        // every outer axis other than m must be interior; m
                        // itself may start at the lower ghost
                        let ok = (0..N - 1).all(|a| {
                            if a == m {
                                ridx[a] <= cells[a]
                            } else {
                                ridx[a] >= 1 && ridx[a] <= cells[a]
                            }
                        });
                        if !ok {
                            continue;
                        }
                        let last = m == N - 1;
                        let (t0, l) = if last { (0, cells[m] + 1) } else { (1, cells[N - 1]) };
                        let (row2, t2) = if last { (row, t0 + 1) } else { (row + rows[m], t0) };
                        let diag = &self.face_diag[m][row * rrow + t0..row * rrow + t0 + l];
                        let fm = &self.face_mixed[m];
                        let sides = |k: usize| {
                            (
                                &field(row, k)[t0..t0 + l],
                                &field(row, N + k)[t0..t0 + l],
                                &field(row2, k)[t2..t2 + l],
                                &field(row2, N + k)[t2..t2 + l],
                            )
                        };
                        if !linear {
                            for k in (0..N).filter(|&k| k != m) {
                                let (a1, a2, a3, a4) = sides(k);
                                let o = &mut fd[k * rrow..k * rrow + l];
                                for i in 0..l {
                                    o[i] = 0.25 * (a1[i] + a2[i] + a3[i] + a4[i]);
                                }
                            }
                        }
                        let out = &mut chunk[m * rrow + t0..m * rrow + t0 + l];
                        let g2 = &mut g2[..l];
                        if linear {
                            out.copy_from_slice(diag);
                            g2.fill(1.0);
                            mu_max = 1.0;
                        } else {
                            fd[m * rrow..m * rrow + l].copy_from_slice(&field(row, m)[t0..t0 + l]);
                            let ds: [&[f64]; N] = std::array::from_fn(|k| &fd[k * rrow..k * rrow + l]);
                            let coef = &self.face_coef[m][row * nt * rrow + t0..];
                            self.horiz2(coef, rrow, &ds, g2, &mut s[..l]);
                            g2.iter_mut().for_each(|x| *x += eps2);
                            if may_blow && g2.iter().zip(diag).any(|(&b, &a)| b == 0.0 && a != 0.0) {
                                return None;
                            }
                            power.pow_slice(g2);
                            // A_mm = 0 forces A_mq = 0, so such faces carry no flux
                            for ((o, mu), &a) in out.iter_mut().zip(g2.iter_mut()).zip(diag) {
                                if a != 0.0 {
                                    *o = *mu * a;
                                    mu_max = mu_max.max(*mu);
                                } else {
                                    *mu = 0.0;
                                }
                            }
                        }
                        if !fm.is_empty() {
                            let mo = &mut mchunk[m * rrow + t0..m * rrow + t0 + l];
                            for (q, a) in fm {
                                let a = &a[row * rrow + t0..row * rrow + t0 + l];
                                let (a1, a2, a3, a4) = sides(*q);
                                for i in 0..l {
                                    mo[i] += a[i] * mc(mc(a1[i], a3[i]), mc(a2[i], a4[i]));
                                }
                            }
                            for (o, mu) in mo.iter_mut().zip(g2.iter()) {
                                *o *= mu;
                            }
                        }
                    }
                    Some(mu_max)
                },
            )
            .reduce(|| Some(0.0), max_opt);
        let Some(mu_max) = face_mu else {
            return Err(singular_error(p));
        };
        let kappa = &ws.kappa;
        let kap = |row: usize, m: usize| -> &[f64] {
            let o = row * rrow * N + m * rrow;
            &kappa[o..o + rrow]
        };
        let mflux = &ws.mflux;
        let mfl = |row: usize, m: usize| -> &[f64] {
            let o = row * rrow * N + m * rrow;
            &mflux[o..o + rrow]
        };

        // pass 3, interior rows
        let l = cells[N - 1];
        let inv_h2: [f64; N] = std::array::from_fn(|m| 1.0 / (h[m] * h[m]));
        let mut vals = vec![0.0; grid.len()];
        vals.par_chunks_mut(l).enumerate().for_each(|(irow, out)| {
            let mut idx = [0usize; N];
            unravel_dims(&cells, irow * l, &mut idx);
            let row: usize = (0..N - 1).map(|a| (idx[a] + 1) * rows[a]).sum();
            let off: usize = idx.iter().zip(&ps).map(|(i, s)| (i + crate::grid::HALO) * s).sum();
            let uc = &pad.data[off..off + l];
            out.fill(0.0);
            for m in 0..N {
                let up = &pad.data[off + ps[m]..off + ps[m] + l];
                let dn = &pad.data[off - ps[m]..off - ps[m] + l];
                let kp = &kap(row, m)[1..=l];
                let km = if m == N - 1 { &kap(row, m)[..l] } else { &kap(row - rows[m], m)[1..=l] };
                for i in 0..l {
                    out[i] += (kp[i] * (up[i] - uc[i]) - km[i] * (uc[i] - dn[i])) * inv_h2[m];
                }
                if self.face_mixed[m].is_empty() {
                    continue;
                }
                let fp = &mfl(row, m)[1..=l];
                let fm = if m == N - 1 { &mfl(row, m)[..l] } else { &mfl(row - rows[m], m)[1..=l] };
                let sc = 1.0 / h[m];
                for i in 0..l {
                    out[i] += (fp[i] - fm[i]) * sc;
                }
            }
        });
        Ok((vals, FluxStats { mu_max }))
    }
}

/// Monotonized-central limited mean of two one-sided differences.
#[inline]
fn mc(a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    if a * b > 0.0 {
        (2.0 * a.abs()).min(2.0 * b.abs()).min(c.abs()).copysign(c)
    } else {
        0.0
    }
}

fn max_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        _ => None,
    }
}

fn singular_error(p: f64) -> Error {
    Error::SingularCoefficient(format!(
        "zero horizontal gradient with p = {p} < 2 and eps_reg = 0"
    ))
}

fn unravel_dims(dims: &[usize], mut flat: usize, idx: &mut [usize]) {
    for a in (0..dims.len()).rev() {
        idx[a] = flat % dims[a];
        flat /= dims[a];
    }
}

/// Coordinates of region node `r` (region index 0 is ghost index −1).
fn region_coords(grid: &Grid, rdims: &[usize], r: usize) -> Vec<f64> {
    let mut idx = vec![0; rdims.len()];
    unravel_dims(rdims, r, &mut idx);
    idx.iter()
        .enumerate()
        .map(|(a, &i)| grid.coord(a, i as isize - 1))
        .collect()
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoxDomain;

    fn h1() -> GroupDescriptor {
        GroupDescriptor::heisenberg(1).unwrap()
    }

    fn grid(lo: &[f64], hi: &[f64], n: &[usize]) -> Arc<Grid> {
        Arc::new(Grid::new(BoxDomain::new(lo.to_vec(), hi.to_vec()).unwrap(), n.to_vec()).unwrap())
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let gr = grid(&[-1.0; 3], &[1.0; 3], &[8, 8, 8]);
        let u = GridFunction::constant(gr, 2.5).with_extension(Extension::Free);
        let f = horizontal_gradient(&h1(), &u).unwrap();
        for c in f.components() {
            assert!(c.sup_norm() < 1e-12);
        }
    }

    #[test]
    fn gradient_of_vertical_coordinate() {
        let gr = grid(&[-1.0; 3], &[1.0; 3], &[10, 10, 10]);
        let u = GridFunction::from_fn(gr.clone(), |x| x[2]).with_extension(Extension::Free);
        for order in [DiffOrder::Second, DiffOrder::Fourth] {
            let f = horizontal_gradient_with(&h1(), &u, order).unwrap();
            let want0 = GridFunction::from_fn(gr.clone(), |x| -0.5 * x[1]);
            let want1 = GridFunction::from_fn(gr.clone(), |x| 0.5 * x[0]);
            assert!(max_abs_diff(f.components()[0].values(), want0.values()) < 1e-12);
            assert!(max_abs_diff(f.components()[1].values(), want1.values()) < 1e-12);
        }
    }

    #[test]
    fn gradient_rejects_dimension_mismatch() {
        let gr = grid(&[0.0; 2], &[1.0; 2], &[4, 4]);
        assert!(horizontal_gradient(&h1(), &GridFunction::zeros(gr)).is_err());
    }

    #[test]
    fn divergence_of_constant_field_vanishes() {
        let g = GroupDescriptor::euclidean(2).unwrap();
        let gr = grid(&[0.0; 2], &[1.0; 2], &[6, 6]);
        let f = HorizontalField::from_fn(gr, 2, Extension::Free, |_| vec![1.5, -2.0]);
        assert!(horizontal_divergence(&g, &f).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn divergence_of_position_field_is_dimension() {
        let g = GroupDescriptor::euclidean(2).unwrap();
        let gr = grid(&[-1.0; 2], &[2.0; 2], &[7, 9]);
        let f = HorizontalField::from_fn(gr, 2, Extension::Free, |x| vec![x[0], x[1]]);
        let d = horizontal_divergence(&g, &f).unwrap();
        assert!(d.values().iter().all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn laplacian_of_paraboloid() {
        let g = GroupDescriptor::euclidean(2).unwrap();
        let gr = grid(&[-1.0; 2], &[1.0; 2], &[16, 16]);
        let u = GridFunction::from_fn(gr, |x| x[0] * x[0] + x[1] * x[1]).with_extension(Extension::Free);
        let l = p_sub_laplacian(&g, &u, 2.0, 0.0).unwrap();
        assert!(l.values().iter().all(|v| (v - 4.0).abs() < 1e-10), "{:?}", l.max());
    }

    #[test]
    fn p_laplacian_of_zero_is_zero() {
        let gr = grid(&[-1.0; 3], &[1.0; 3], &[5, 5, 5]);
        for p in [1.5, 2.0, 3.0] {
            let l = p_sub_laplacian(&h1(), &GridFunction::zeros(gr.clone()), p, 1e-8).unwrap();
            assert_eq!(l.sup_norm(), 0.0);
        }
    }

    #[test]
    fn singular_coefficient_is_reported() {
        let gr = grid(&[0.0], &[1.0], &[8]);
        let g = GroupDescriptor::euclidean(1).unwrap();
        let u = GridFunction::constant(gr, 1.0).with_extension(Extension::Free);
        let err = p_sub_laplacian(&g, &u, 1.5, 0.0).unwrap_err();
        assert!(matches!(err, Error::SingularCoefficient(_)));
        assert!(p_sub_laplacian(&g, &u, 1.5, 1e-8).is_ok());
        assert!(p_sub_laplacian(&g, &u, 1.0, 1e-8).is_err());
    }

    #[test]
    fn euclidean_p2_is_standard_stencil() {
        // exact algebraic identity with the (2N+1)-point Laplacian including
        // the odd-reflection ghost layer
        let g = GroupDescriptor::euclidean(2).unwrap();
        let gr = grid(&[0.0; 2], &[1.0, 2.0], &[6, 9]);
        let u = GridFunction::from_fn(gr.clone(), |x| (3.0 * x[0]).sin() * (x[1] * x[1] + 0.3));
        let l = p_sub_laplacian(&g, &u, 2.0, 0.0).unwrap();
        let h = gr.h();
        for k in 0..gr.len() {
            let mut idx = vec![0; 2];
            gr.unravel(k, &mut idx);
            let at = |i: isize, j: isize| {
                let n = gr.n_cells();
                let fold = |v: isize, len: usize| -> (isize, f64) {
                    if v < 0 {
                        (-v - 1, -1.0)
                    } else if v >= len as isize {
                        (2 * len as isize - v - 1, -1.0)
                    } else {
                        (v, 1.0)
                    }
                };
                let (a, sa) = fold(i, n[0]);
                let (b, sb) = fold(j, n[1]);
                sa * sb * u.value_at(&[a, b])
            };
            let (i, j) = (idx[0] as isize, idx[1] as isize);
            let c = at(i, j);
            let want = (at(i + 1, j) - 2.0 * c + at(i - 1, j)) / (h[0] * h[0])
                + (at(i, j + 1) - 2.0 * c + at(i, j - 1)) / (h[1] * h[1]);
            assert!((l.values()[k] - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn dilation_homogeneity_is_exact_on_matched_grids() {
        let g = h1();
        let lam: f64 = 2.0;
        let u = |x: &[f64]| (1.3 * x[0]).sin() * (0.7 * x[1]).cos() + 0.4 * x[2] * x[0] + 0.2 * x[2] * x[2];
        let (lo, hi) = ([0.2, -0.5, -0.8], [1.4, 0.9, 1.1]);
        let gu = grid(&lo, &hi, &[10, 11, 12]);
        let lo_v: Vec<f64> = lo.iter().zip([1, 1, 2]).map(|(a, w)| a / lam.powi(w)).collect();
        let hi_v: Vec<f64> = hi.iter().zip([1, 1, 2]).map(|(a, w)| a / lam.powi(w)).collect();
        let gv = grid(&lo_v, &hi_v, &[10, 11, 12]);
        let fu = GridFunction::from_fn(gu, u).with_extension(Extension::Free);
        let fv = GridFunction::from_fn(gv, |x| u(&[lam * x[0], lam * x[1], lam * lam * x[2]]))
            .with_extension(Extension::Free);
        for p in [2.0, 3.0] {
            let lu = p_sub_laplacian(&g, &fu, p, 0.0).unwrap();
            let lv = p_sub_laplacian(&g, &fv, p, 0.0).unwrap();
            let scale = lam.powf(p);
            for (a, b) in lv.values().iter().zip(lu.values()) {
                assert!((a - scale * b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {}", scale * b);
            }
        }
    }

    #[test]
    fn gradient_identity_converges_on_euclidean_plane() {
        // |∇|x|^3| = 3|x|^2 on R^2, second-order stencil
        let g = GroupDescriptor::euclidean(2).unwrap();
        let err = |n: usize| {
            let gr = grid(&[-1.0; 2], &[1.0; 2], &[n, n]);
            let u = GridFunction::from_fn(gr.clone(), |x| (x[0] * x[0] + x[1] * x[1]).powf(1.5))
                .with_extension(Extension::Free);
            let gn = horizontal_gradient_with(&g, &u, DiffOrder::Second).unwrap().pointwise_norm();
            (0..gr.len())
                .filter_map(|k| {
                    let x = gr.node(k);
                    let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                    (r >= 0.2).then(|| (gn.values()[k] - 3.0 * r * r).abs() / (3.0 * r * r))
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(32), err(64));
        assert!((e1 / e2).log2() > 1.8, "{e1} {e2}");
    }
}
