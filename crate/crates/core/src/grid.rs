//! Cell-centered Cartesian grids over box domains and the functions
//! sampled on them.
//!
//! Node `i` along an axis sits at `lower + (i + 1/2) h`, so every node is
//! interior. Functions carry an [`Extension`] telling the difference
//! stencils how to fill the ghost layers outside the box.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::calculus;
use crate::error::{invalid, Error, Result};
use crate::group::GroupDescriptor;

/// Number of ghost layers every stencil may reach into.
pub(crate) const HALO: usize = 2;

/// Axis-aligned box `Ω = Π (lower_i, upper_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return invalid("box bounds must be nonempty and of equal length");
        }
        for (i, (a, b)) in lower.iter().zip(&upper).enumerate() {
            if !(a < b) || !a.is_finite() || !b.is_finite() {
                return invalid(format!("box axis {i}: need lower < upper, got [{a}, {b}]"));
            }
        }
        Ok(BoxDomain { lower, upper })
    }

    /// The cube `(lo, hi)^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(a, b)| b - a).product()
    }
}

/// Uniform cell-centered grid on a [`BoxDomain`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: BoxDomain,
    n_cells: Vec<usize>,
    h: Vec<f64>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(domain: BoxDomain, n_cells: Vec<usize>) -> Result<Self> {
        if n_cells.len() != domain.dim() {
            return invalid(format!(
                "grid has {} axes but domain has {}",
                n_cells.len(),
                domain.dim()
            ));
        }
        if let Some(i) = n_cells.iter().position(|&n| n < 3) {
            return invalid(format!("axis {i}: need at least 3 nodes, got {}", n_cells[i]));
        }
        let h = (0..domain.dim())
            .map(|i| (domain.upper[i] - domain.lower[i]) / n_cells[i] as f64)
            .collect();
        let strides = strides_of(&n_cells);
        Ok(Grid {
            domain,
            n_cells,
            h,
            strides,
        })
    }

    /// Same domain, every axis refined by `2^k`.
    pub fn refined(&self, k: u32) -> Result<Self> {
        let f = 1usize << k;
        Grid::new(self.domain.clone(), self.n_cells.iter().map(|n| n * f).collect())
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.n_cells.len()
    }

    pub fn n_cells(&self) -> &[usize] {
        &self.n_cells
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn len(&self) -> usize {
        self.n_cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Coordinate of node `i` along `axis`.
    pub fn coord(&self, axis: usize, i: isize) -> f64 {
        self.domain.lower[axis] + (i as f64 + 0.5) * self.h[axis]
    }

    pub fn unravel(&self, mut flat: usize, idx: &mut [usize]) {
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.n_cells[a];
            flat /= self.n_cells[a];
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Physical coordinates of the node with flat index `flat`.
    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim()];
        self.unravel(flat, &mut idx);
        idx.iter()
            .enumerate()
            .map(|(a, &i)| self.coord(a, i as isize))
            .collect()
    }

    /// Smallest of `min(x − lower, upper − x)` over axes, i.e. the distance
    /// from node `flat` to the boundary in the max-norm sense, in cells.
    pub fn cells_from_boundary(&self, flat: usize) -> usize {
        let mut idx = vec![0; self.dim()];
        self.unravel(flat, &mut idx);
        idx.iter()
            .zip(&self.n_cells)
            .map(|(&i, &n)| i.min(n - 1 - i))
            .min()
            .unwrap_or(0)
    }
}

fn strides_of(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for a in (0..dims.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * dims[a + 1];
    }
    s
}

/// How a grid function continues past the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Extension {
    /// Homogeneous Dirichlet: the function vanishes outside the box.
    /// Stencils place that zero on the boundary face (odd reflection of
    /// the ghost layer).
    #[default]
    DirichletZero,
    /// Samples of a function defined on a neighbourhood of the closed box;
    /// ghost layers are filled by polynomial extrapolation.
    Free,
}

/// Real values on the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
    extension: Extension,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid(format!(
                "{} values for a grid with {} nodes",
                values.len(),
                grid.len()
            ));
        }
        Ok(GridFunction {
            grid,
            values,
            extension: Extension::DirichletZero,
        })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        GridFunction {
            grid,
            values: vec![0.0; n],
            extension: Extension::DirichletZero,
        }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let n = grid.len();
        GridFunction {
            grid,
            values: vec![c; n],
            extension: Extension::DirichletZero,
        }
    }

    /// Sample `f` at every node.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(&grid.node(k))).collect();
        GridFunction {
            grid,
            values,
            extension: Extension::DirichletZero,
        }
    }

    pub fn with_extension(mut self, extension: Extension) -> Self {
        self.extension = extension;
        self
    }

    pub fn extension(&self) -> Extension {
        self.extension
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at a (possibly out-of-range) multi-index; outside the box a
    /// Dirichlet function evaluates to 0, a free one to its extrapolation.
    pub fn value_at(&self, idx: &[isize]) -> f64 {
        let inside = idx
            .iter()
            .zip(self.grid.n_cells())
            .all(|(&i, &n)| i >= 0 && (i as usize) < n);
        if inside {
            let flat: usize = idx
                .iter()
                .zip(self.grid.strides())
                .map(|(&i, s)| i as usize * s)
                .sum();
            return self.values[flat];
        }
        match self.extension {
            Extension::DirichletZero => 0.0,
            Extension::Free => {
                let p = Padded::new(self);
                if idx.iter().all(|&i| i >= -(HALO as isize)) {
                    let ok = idx
                        .iter()
                        .zip(self.grid.n_cells())
                        .all(|(&i, &n)| i < (n + HALO) as isize);
                    if ok {
                        return p.at_signed(idx);
                    }
                }
                f64::NAN
            }
        }
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            extension: self.extension,
        }
    }

    /// `self + s·other`, nodewise.
    pub fn axpy(&self, s: f64, other: &GridFunction) -> Result<GridFunction> {
        if !self.same_grid(other) {
            return invalid("grid mismatch in axpy");
        }
        Ok(GridFunction {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + s * b)
                .collect(),
            extension: self.extension,
        })
    }

    pub fn scaled(&self, s: f64) -> GridFunction {
        self.map(|v| s * v)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Write as CSV with header `i1,...,iN,value`, values at 17
    /// significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_csv_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let d = self.grid.dim();
        let header: Vec<String> = (1..=d).map(|i| format!("i{i}")).collect();
        writeln!(w, "{},value", header.join(","))?;
        let mut idx = vec![0; d];
        for (k, v) in self.values.iter().enumerate() {
            self.grid.unravel(k, &mut idx);
            for i in &idx {
                write!(w, "{i},")?;
            }
            writeln!(w, "{v:.16e}")?;
        }
        Ok(())
    }

    /// Read a CSV written by [`GridFunction::write_csv`]. Nodes not listed
    /// are zero.
    pub fn read_csv(grid: Arc<Grid>, path: &Path) -> Result<GridFunction> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(grid, file)
    }

    pub fn read_csv_from(grid: Arc<Grid>, r: impl std::io::Read) -> Result<GridFunction> {
        let d = grid.dim();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers()?.clone();
        let expected: Vec<String> = (1..=d)
            .map(|i| format!("i{i}"))
            .chain(std::iter::once("value".to_string()))
            .collect();
        if headers.iter().collect::<Vec<_>>() != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return invalid(format!("csv header must be `{}`", expected.join(",")));
        }
        let mut values = vec![0.0; grid.len()];
        let mut idx = vec![0usize; d];
        for rec in rdr.records() {
            let rec = rec?;
            for (a, slot) in idx.iter_mut().enumerate() {
                let i: usize = rec[a]
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad index `{}`", &rec[a])))?;
                if i >= grid.n_cells()[a] {
                    return invalid(format!("index {i} out of range on axis {a}"));
                }
                *slot = i;
            }
            let v: f64 = rec[d]
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value `{}`", &rec[d])))?;
            values[grid.ravel(&idx)] = v;
        }
        GridFunction::new(grid, values)
    }
}

/// Midpoint-rule integral `Σ f(node) Π h_i`, summed in node order.
pub fn quadrature(f: &GridFunction) -> f64 {
    f.values.iter().sum::<f64>() * f.grid.cell_volume()
}

/// Discrete `J_p(u) = (∫ |∇_H u|^p + |u|^p dx)^{1/p}`.
pub fn sobolev_norm(g: &GroupDescriptor, u: &GridFunction, p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return invalid(format!("sobolev_norm needs p > 1, got {p}"));
    }
    let grad = calculus::horizontal_gradient(g, u)?;
    let gn = grad.pointwise_norm();
    let integrand: f64 = gn
        .values
        .iter()
        .zip(&u.values)
        .map(|(a, b)| a.powf(p) + b.abs().powf(p))
        .sum();
    Ok((integrand * u.grid.cell_volume()).powf(1.0 / p))
}

/// A grid function copied into an array with [`HALO`] ghost layers on
/// every side, filled according to its [`Extension`].
pub(crate) struct Padded {
    pub data: Vec<f64>,
    pub dims: Vec<usize>,
    pub strides: Vec<usize>,
}

impl Padded {
    pub fn new(f: &GridFunction) -> Self {
        Padded::with_buffer(f, Vec::new())
    }

    /// As [`Padded::new`], reusing `data`'s allocation.
    pub fn with_buffer(f: &GridFunction, mut data: Vec<f64>) -> Self {
        let n = f.grid.n_cells();
        let d = n.len();
        let dims: Vec<usize> = n.iter().map(|k| k + 2 * HALO).collect();
        let strides = strides_of(&dims);
        let total: usize = dims.iter().product();
        // every position is overwritten below
        data.resize(total, 0.0);
        let row = n[d - 1];
        let mut idx = vec![0usize; d];
        for (r, chunk) in f.values.chunks(row).enumerate() {
            f.grid.unravel(r * row, &mut idx);
            let off: usize = idx
                .iter()
                .zip(&strides)
                .map(|(i, s)| (i + HALO) * s)
                .sum();
            data[off..off + row].copy_from_slice(chunk);
        }
        let mut p = Padded { data, dims, strides };
        for axis in 0..d {
            p.fill_axis(axis, n, f.extension);
        }
        p
    }

    fn fill_axis(&mut self, axis: usize, n: &[usize], ext: Extension) {
        let d = self.dims.len();
        let len = n[axis];
        let step = self.strides[axis];
        // lines along `axis`: every padded position with index 0 on `axis`,
        // full padded range for earlier axes, interior range for later ones.
        let ranges: Vec<(usize, usize)> = (0..d)
            .map(|a| {
                if a == axis {
                    (0, 1)
                } else if a < axis {
                    (0, self.dims[a])
                } else {
                    (HALO, HALO + n[a])
                }
            })
            .collect();
        let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        loop {
            let base: usize = idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum();
            let at = |k: isize| base + ((k + HALO as isize) as usize) * step;
            let u = |k: isize, data: &[f64]| data[at(k)];
            let last = len as isize - 1;
            match ext {
                Extension::DirichletZero => {
                    for g in 1..=HALO as isize {
                        self.data[at(-g)] = -u(g - 1, &self.data);
                        self.data[at(last + g)] = -u(last - g + 1, &self.data);
                    }
                }
                Extension::Free => {
                    for g in 1..=HALO as isize {
                        let (l, r) = if len >= 4 {
                            (
                                4.0 * u(-g + 1, &self.data) - 6.0 * u(-g + 2, &self.data)
                                    + 4.0 * u(-g + 3, &self.data)
                                    - u(-g + 4, &self.data),
                                4.0 * u(last + g - 1, &self.data) - 6.0 * u(last + g - 2, &self.data)
                                    + 4.0 * u(last + g - 3, &self.data)
                                    - u(last + g - 4, &self.data),
                            )
                        } else {
                            (
                                3.0 * u(-g + 1, &self.data) - 3.0 * u(-g + 2, &self.data)
                                    + u(-g + 3, &self.data),
                                3.0 * u(last + g - 1, &self.data) - 3.0 * u(last + g - 2, &self.data)
                                    + u(last + g - 3, &self.data),
                            )
                        };
                        self.data[at(-g)] = l;
                        self.data[at(last + g)] = r;
                    }
                }
            }
            // advance the odometer
            let mut a = d;
            loop {
                if a == 0 {
                    return;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < ranges[a].1 {
                    break;
                }
                idx[a] = ranges[a].0;
            }
        }
    }

    /// Offset of the interior multi-index `idx` shifted by `HALO`.
    #[inline]
    pub fn offset(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.strides)
            .map(|(i, s)| (i + HALO) * s)
            .sum()
    }

    pub fn at_signed(&self, idx: &[isize]) -> f64 {
        let off: usize = idx
            .iter()
            .zip(&self.strides)
            .map(|(&i, s)| (i + HALO as isize) as usize * s)
            .sum();
        self.data[off]
    }
}
