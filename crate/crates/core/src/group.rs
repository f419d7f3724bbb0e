//! Stratified Lie groups in exponential coordinates.
//!
//! A group is described by data: strata dimensions, the polynomial
//! coefficients of the left-invariant horizontal fields `X_j`, and the
//! group law. Calculus code only ever sees a [`GroupDescriptor`], so new
//! groups can be plugged in through [`GroupDescriptor::custom`].

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Result};

type CoeffFn = dyn Fn(usize, &[f64]) -> Vec<f64> + Send + Sync;
type LawFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;

/// A point of `G = R^N`, coordinates ordered stratum by stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn origin(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// First-stratum part `x'`.
    pub fn horizontal(&self, n1: usize) -> &[f64] {
        &self.0[..n1]
    }

    /// Euclidean norm `|x'|` of the first-stratum part.
    pub fn horizontal_norm(&self, n1: usize) -> f64 {
        self.horizontal(n1).iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

/// Immutable description of a stratified group.
#[derive(Clone)]
pub struct GroupDescriptor {
    name: String,
    strata_dims: Vec<usize>,
    weights: Vec<u32>,
    coeff: Arc<CoeffFn>,
    law: Arc<LawFn>,
}

impl fmt::Debug for GroupDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupDescriptor")
            .field("name", &self.name)
            .field("strata_dims", &self.strata_dims)
            .finish()
    }
}

impl GroupDescriptor {
    /// Build a group from raw data.
    ///
    /// `coeff(j, x)` must return the `N` coefficients of `X_j` at `x`, and
    /// `law(x, y)` the product `x∘y`. The structural constraints (unit
    /// first-stratum part, triangular dependence) are checked at a few
    /// probe points.
    pub fn custom<C, L>(
        name: impl Into<String>,
        strata_dims: Vec<usize>,
        coeff: C,
        law: L,
    ) -> Result<Self>
    where
        C: Fn(usize, &[f64]) -> Vec<f64> + Send + Sync + 'static,
        L: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        if strata_dims.is_empty() || strata_dims.iter().any(|&d| d == 0) {
            return invalid("strata_dims must be a nonempty list of positive integers");
        }
        let weights = strata_dims
            .iter()
            .enumerate()
            .flat_map(|(k, &d)| std::iter::repeat((k + 1) as u32).take(d))
            .collect();
        let g = GroupDescriptor {
            name: name.into(),
            strata_dims,
            weights,
            coeff: Arc::new(coeff),
            law: Arc::new(law),
        };
        g.check_structure()?;
        Ok(g)
    }

    /// Abelian group `R^n` with a single stratum.
    pub fn euclidean(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("euclidean dimension must be positive");
        }
        Self::custom(
            format!("euclidean:{n}"),
            vec![n],
            move |j, _x| {
                let mut c = vec![0.0; n];
                c[j] = 1.0;
                c
            },
            |x, y| x.iter().zip(y).map(|(a, b)| a + b).collect(),
        )
    }

    /// Heisenberg group `H^n` with coordinates `(x_1..x_n, y_1..y_n, z)` and
    /// the symmetric law `z + z' + (x·y' − y·x')/2`.
    ///
    /// Horizontal fields: `X_j = ∂x_j − (y_j/2)∂z`, `X_{n+j} = ∂y_j + (x_j/2)∂z`.
    pub fn heisenberg(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("heisenberg index must be positive");
        }
        let dim = 2 * n + 1;
        Self::custom(
            format!("heisenberg:{n}"),
            vec![2 * n, 1],
            move |j, x| {
                let mut c = vec![0.0; dim];
                c[j] = 1.0;
                c[2 * n] = if j < n { -0.5 * x[n + j] } else { 0.5 * x[j - n] };
                c
            },
            move |a, b| {
                let mut out: Vec<f64> = a.iter().zip(b).map(|(s, t)| s + t).collect();
                let symp: f64 = (0..n).map(|i| a[i] * b[n + i] - a[n + i] * b[i]).sum();
                out[2 * n] += 0.5 * symp;
                out
            },
        )
    }

    /// Parse `"euclidean:<N>"` or `"heisenberg:<n>"`.
    pub fn from_name(spec: &str) -> Result<Self> {
        let (kind, arg) = spec
            .trim()
            .split_once(':')
            .ok_or_else(|| crate::Error::InvalidArgument(format!("group `{spec}`: expected kind:dim")))?;
        let n: usize = arg
            .trim()
            .parse()
            .map_err(|_| crate::Error::InvalidArgument(format!("group `{spec}`: bad dimension")))?;
        match kind.trim() {
            "euclidean" => Self::euclidean(n),
            "heisenberg" => Self::heisenberg(n),
            other => invalid(format!("unknown group kind `{other}`")),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn strata_dims(&self) -> &[usize] {
        &self.strata_dims
    }

    /// `N = N_1 + … + N_r`.
    pub fn total_dim(&self) -> usize {
        self.weights.len()
    }

    /// `N_1`, the number of horizontal fields.
    pub fn horizontal_dim(&self) -> usize {
        self.strata_dims[0]
    }

    pub fn step(&self) -> usize {
        self.strata_dims.len()
    }

    /// Dilation weight (stratum index, 1-based) of every coordinate.
    pub fn dilation_weights(&self) -> &[u32] {
        &self.weights
    }

    fn check_dim(&self, p: &[f64], what: &str) -> Result<()> {
        if p.len() != self.total_dim() {
            return invalid(format!(
                "{what} has dimension {} but group {} has dimension {}",
                p.len(),
                self.name,
                self.total_dim()
            ));
        }
        Ok(())
    }

    /// `x∘y`.
    pub fn multiply(&self, x: &Point, y: &Point) -> Result<Point> {
        self.check_dim(&x.0, "left factor")?;
        self.check_dim(&y.0, "right factor")?;
        Ok(Point((self.law)(&x.0, &y.0)))
    }

    /// `δ_λ(x)`: coordinate in stratum `k` scaled by `λ^k`.
    pub fn dilate(&self, lambda: f64, x: &Point) -> Result<Point> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return invalid(format!("dilation factor must be positive, got {lambda}"));
        }
        self.check_dim(&x.0, "point")?;
        Ok(Point(
            x.0.iter()
                .zip(&self.weights)
                .map(|(v, &w)| v * lambda.powi(w as i32))
                .collect(),
        ))
    }

    /// Coefficients of `X_j` at `x` (0-based `j < N_1`).
    pub fn vector_field(&self, j: usize, x: &Point) -> Result<Vec<f64>> {
        if j >= self.horizontal_dim() {
            return invalid(format!(
                "horizontal index {j} out of range for N1 = {}",
                self.horizontal_dim()
            ));
        }
        self.check_dim(&x.0, "point")?;
        Ok((self.coeff)(j, &x.0))
    }

    /// Unchecked coefficient evaluation used by the stencil tables.
    pub(crate) fn coeff_raw(&self, j: usize, x: &[f64]) -> Vec<f64> {
        (self.coeff)(j, x)
    }

    /// Coefficients of the commutator `[X_i, X_j]` at `x`, with the
    /// derivatives of the coefficient polynomials taken by centered
    /// differences of step `h`.
    pub fn bracket(&self, i: usize, j: usize, x: &Point, h: f64) -> Result<Vec<f64>> {
        let ci = self.vector_field(i, x)?;
        let cj = self.vector_field(j, x)?;
        let n = self.total_dim();
        let mut out = vec![0.0; n];
        let mut xp = x.clone();
        let mut xm = x.clone();
        for m in 0..n {
            xp.0[m] = x.0[m] + h;
            xm.0[m] = x.0[m] - h;
            let dci: Vec<f64> = (self.coeff)(i, &xp.0)
                .iter()
                .zip((self.coeff)(i, &xm.0))
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect();
            let dcj: Vec<f64> = (self.coeff)(j, &xp.0)
                .iter()
                .zip((self.coeff)(j, &xm.0))
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect();
            for k in 0..n {
                out[k] += ci[m] * dcj[k] - cj[m] * dci[k];
            }
            xp.0[m] = x.0[m];
            xm.0[m] = x.0[m];
        }
        Ok(out)
    }

    fn check_structure(&self) -> Result<()> {
        let n = self.total_dim();
        let n1 = self.horizontal_dim();
        let probes = [0.0, 0.7, -1.3, 2.1, -0.4];
        for shift in 0..3 {
            let x: Vec<f64> = (0..n).map(|i| probes[(i + shift) % probes.len()]).collect();
            for j in 0..n1 {
                let c = (self.coeff)(j, &x);
                if c.len() != n {
                    return invalid(format!("{}: X_{j} has {} coefficients, expected {n}", self.name, c.len()));
                }
                for (m, &v) in c.iter().take(n1).enumerate() {
                    let want = if m == j { 1.0 } else { 0.0 };
                    if v != want {
                        return invalid(format!(
                            "{}: first-stratum part of X_{j} must be the unit vector e_{j}",
                            self.name
                        ));
                    }
                }
            }
            let origin = vec![0.0; n];
            let a = (self.law)(&x, &origin);
            let b = (self.law)(&origin, &x);
            if a != x || b != x {
                return invalid(format!("{}: origin is not the identity element", self.name));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn h1() -> GroupDescriptor {
        GroupDescriptor::heisenberg(1).unwrap()
    }

    #[test]
    fn euclidean_multiply_adds() {
        let g = GroupDescriptor::euclidean(3).unwrap();
        let p = g
            .multiply(&Point::new(vec![1.0, 2.0, 3.0]), &Point::new(vec![4.0, 5.0, 6.0]))
            .unwrap();
        assert_eq!(p.0, vec![5.0, 7.0, 9.0]);
    }

    #[test]
    fn heisenberg_multiply_matches_symplectic_law() {
        let p = h1()
            .multiply(&Point::new(vec![1.0, 0.0, 0.0]), &Point::new(vec![0.0, 1.0, 0.0]))
            .unwrap();
        assert_eq!(p.0, vec![1.0, 1.0, 0.5]);
    }

    #[test]
    fn origin_is_identity() {
        for g in [GroupDescriptor::euclidean(2).unwrap(), h1(), GroupDescriptor::heisenberg(2).unwrap()] {
            let x = Point::new((0..g.total_dim()).map(|i| 0.3 * i as f64 - 1.0).collect());
            let o = Point::origin(g.total_dim());
            assert_eq!(g.multiply(&x, &o).unwrap(), x);
            assert_eq!(g.multiply(&o, &x).unwrap(), x);
        }
    }

    #[test]
    fn multiply_rejects_dimension_mismatch() {
        let g = h1();
        assert!(g.multiply(&Point::new(vec![1.0, 2.0]), &Point::origin(3)).is_err());
    }

    #[test]
    fn dilation_examples() {
        let g = h1();
        let x = Point::new(vec![1.0, 1.0, 1.0]);
        assert_eq!(g.dilate(2.0, &x).unwrap().0, vec![2.0, 2.0, 4.0]);
        assert_eq!(g.dilate(1.0, &x).unwrap(), x);
        let e = GroupDescriptor::euclidean(2).unwrap();
        assert_eq!(e.dilate(3.0, &Point::new(vec![1.0, 2.0])).unwrap().0, vec![3.0, 6.0]);
        assert!(g.dilate(0.0, &x).is_err());
        assert!(g.dilate(-1.0, &x).is_err());
    }

    #[test]
    fn dilation_composes() {
        let g = h1();
        let x = Point::new(vec![0.3, -1.2, 0.7]);
        let a = g.dilate(2.0, &g.dilate(3.0, &x).unwrap()).unwrap();
        let b = g.dilate(6.0, &x).unwrap();
        for (u, v) in a.0.iter().zip(&b.0) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn heisenberg_fields() {
        let g = h1();
        let x = Point::new(vec![0.4, -0.6, 2.0]);
        assert_eq!(g.vector_field(0, &x).unwrap(), vec![1.0, 0.0, 0.3]);
        assert_eq!(g.vector_field(1, &x).unwrap(), vec![0.0, 1.0, 0.2]);
        assert!(g.vector_field(2, &x).is_err());
    }

    #[test]
    fn euclidean_fields_are_unit_vectors() {
        let g = GroupDescriptor::euclidean(3).unwrap();
        let x = Point::new(vec![5.0, -1.0, 2.0]);
        for j in 0..3 {
            let c = g.vector_field(j, &x).unwrap();
            for (m, v) in c.iter().enumerate() {
                assert_eq!(*v, if m == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn fields_are_left_invariant() {
        // X_j(x) = d/ds [x ∘ (s e_j)] at s = 0
        let g = GroupDescriptor::heisenberg(2).unwrap();
        let x = Point::new(vec![0.3, -0.8, 1.1, 0.5, -2.0]);
        let s = 1e-6;
        for j in 0..4 {
            let mut e = Point::origin(5);
            e.0[j] = s;
            let mut em = Point::origin(5);
            em.0[j] = -s;
            let a = g.multiply(&x, &e).unwrap();
            let b = g.multiply(&x, &em).unwrap();
            let c = g.vector_field(j, &x).unwrap();
            for k in 0..5 {
                assert!(((a.0[k] - b.0[k]) / (2.0 * s) - c[k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn dilation_is_automorphism_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for g in [GroupDescriptor::euclidean(3).unwrap(), h1(), GroupDescriptor::heisenberg(2).unwrap()] {
            let n = g.total_dim();
            for _ in 0..10_000 {
                let x = Point::new((0..n).map(|_| rng.gen_range(-3.0..3.0)).collect());
                let y = Point::new((0..n).map(|_| rng.gen_range(-3.0..3.0)).collect());
                let lam = rng.gen_range(0.05..5.0);
                let lhs = g.dilate(lam, &g.multiply(&x, &y).unwrap()).unwrap();
                let rhs = g
                    .multiply(&g.dilate(lam, &x).unwrap(), &g.dilate(lam, &y).unwrap())
                    .unwrap();
                for (a, b) in lhs.0.iter().zip(&rhs.0) {
                    assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn heisenberg_bracket_is_vertical_unit_field() {
        let g = h1();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x = Point::new((0..3).map(|_| rng.gen_range(-5.0..5.0)).collect());
            let b = g.bracket(0, 1, &x, 1e-3).unwrap();
            assert!(b[0].abs() < 1e-12 && b[1].abs() < 1e-12);
            assert!((b[2] - 1.0).abs() < 1e-12, "{b:?}");
        }
    }

    #[test]
    fn higher_strata_coefficients_ignore_own_and_higher_strata() {
        let g = h1();
        let x = Point::new(vec![0.3, 0.4, 0.0]);
        for j in 0..2 {
            let base = g.vector_field(j, &x).unwrap();
            for dz in [-10.0, 3.0, 100.0] {
                let y = Point::new(vec![0.3, 0.4, dz]);
                assert_eq!(g.vector_field(j, &y).unwrap(), base);
            }
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!(GroupDescriptor::from_name("euclidean:2").unwrap().total_dim(), 2);
        assert_eq!(GroupDescriptor::from_name("heisenberg:1").unwrap().total_dim(), 3);
        assert!(GroupDescriptor::from_name("engel:1").is_err());
        assert!(GroupDescriptor::from_name("heisenberg").is_err());
        assert!(GroupDescriptor::from_name("euclidean:0").is_err());
    }

    #[test]
    fn custom_group_structure_is_validated() {
        // X_0 with a wrong first-stratum entry
        let bad = GroupDescriptor::custom(
            "bad",
            vec![2],
            |_j, _x| vec![1.0, 1.0],
            |x, y| x.iter().zip(y).map(|(a, b)| a + b).collect(),
        );
        assert!(bad.is_err());
    }
}
