//! Flat `key = value` run configuration with dotted sections:
//!
//! ```text
//! # comment
//! problem.group = heisenberg:1
//! problem.lower = 0, 0, -1
//! problem.upper = 1, 1, 1
//! problem.cells = 24, 24, 24
//! problem.p = 2
//! problem.u0 = bump
//! solver.cfl_safety = 0.5
//! output.stride = 100
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{BoxDomain, Grid, GridFunction};
use crate::group::GroupDescriptor;
use crate::solver::{ProblemSpec, SolverConfig};

/// Initial-data descriptor.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialData {
    /// smooth compactly supported bump centred in the box, node maximum = amplitude
    Bump { amplitude: f64 },
    /// `A Π sin(π (x_i − a_i)/(b_i − a_i))`
    ProductSine { amplitude: f64 },
    Constant { value: f64 },
    Csv { path: PathBuf },
    /// product sine modulated by random cosine modes; strictly positive inside
    Random { amplitude: f64, seed: Option<u64> },
}

impl InitialData {
    /// Parse `bump`, `bump:A`, `product-sine[:A]`, `constant:c`, a bare
    /// number, `csv:<path>` (relative to `base`) or `random[:seed]`.
    pub fn parse(s: &str, base: &Path) -> std::result::Result<InitialData, String> {
        let s = s.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (s, None),
        };
        let num = |a: Option<&str>, default: f64| -> std::result::Result<f64, String> {
            a.map_or(Ok(default), |t| {
                t.parse::<f64>().map_err(|_| format!("`{t}` is not a number"))
            })
        };
        match head {
            "bump" => Ok(InitialData::Bump { amplitude: num(arg, 1.0)? }),
            "product-sine" => Ok(InitialData::ProductSine { amplitude: num(arg, 1.0)? }),
            "constant" => Ok(InitialData::Constant {
                value: num(arg, f64::NAN).and_then(|v| {
                    if v.is_nan() {
                        Err("constant needs a value, e.g. constant:0.5".into())
                    } else {
                        Ok(v)
                    }
                })?,
            }),
            "csv" => {
                let p = arg.filter(|a| !a.is_empty()).ok_or("csv needs a path")?;
                Ok(InitialData::Csv { path: base.join(p) })
            }
            "random" => Ok(InitialData::Random {
                amplitude: 1.0,
                seed: arg
                    .map(|a| a.parse::<u64>().map_err(|_| format!("`{a}` is not a seed")))
                    .transpose()?,
            }),
            _ => match s.parse::<f64>() {
                Ok(v) => Ok(InitialData::Constant { value: v }),
                Err(_) => Err(format!(
                    "unknown descriptor `{s}` (expected bump, product-sine, constant:c, csv:<path> or random)"
                )),
            },
        }
    }

    pub fn evaluate(&self, grid: Arc<Grid>, seed: u64) -> Result<GridFunction> {
        let d = grid.domain().clone();
        let unit = move |x: &[f64], a: usize| (x[a] - d.lower()[a]) / (d.upper()[a] - d.lower()[a]);
        let n = grid.dim();
        match self {
            InitialData::Bump { amplitude } => {
                let f = GridFunction::from_fn(grid, |x| {
                    (0..n)
                        .map(|a| {
                            let s = 2.0 * unit(x, a) - 1.0;
                            if s.abs() < 1.0 {
                                (1.0 - 1.0 / (1.0 - s * s)).exp()
                            } else {
                                0.0
                            }
                        })
                        .product()
                });
                let m = f.max();
                Ok(f.scaled(amplitude / m))
            }
            InitialData::ProductSine { amplitude } => Ok(GridFunction::from_fn(grid, |x| {
                amplitude
                    * (0..n)
                        .map(|a| (std::f64::consts::PI * unit(x, a)).sin())
                        .product::<f64>()
            })),
            InitialData::Constant { value } => Ok(GridFunction::constant(grid, *value)),
            InitialData::Csv { path } => GridFunction::read_csv(grid, path),
            InitialData::Random { amplitude, seed: own } => {
                let mut rng = ChaCha8Rng::seed_from_u64(own.unwrap_or(seed));
                let modes: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..4)
                    .map(|_| {
                        let w = (0..n).map(|_| rng.gen_range(1..=4) as f64).collect();
                        let ph = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
                        (rng.gen_range(-0.22..0.22), w, ph)
                    })
                    .collect();
                let amp = amplitude * rng.gen_range(0.5..1.5);
                Ok(GridFunction::from_fn(grid, |x| {
                    let base: f64 = (0..n)
                        .map(|a| (std::f64::consts::PI * unit(x, a)).sin())
                        .product();
                    let wobble: f64 = modes
                        .iter()
                        .map(|(c, w, ph)| {
                            c * (0..n)
                                .map(|a| (std::f64::consts::PI * w[a] * unit(x, a) + ph[a]).cos())
                                .product::<f64>()
                        })
                        .sum();
                    amp * base * (1.0 + wobble)
                }))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemConfig {
    pub group: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells: Vec<usize>,
    pub p: f64,
    pub beta: f64,
    pub q: f64,
    pub gamma: f64,
    pub alpha: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub u0: InitialData,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierConfig {
    pub eps: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub stride: usize,
    pub emit_plots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyConfig {
    /// coarse mesh width of the two-grid studies (the fine one is half)
    pub h: f64,
    pub r_min: f64,
    pub samples: usize,
}

/// Parsed run configuration plus the raw entries in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub solver: SolverConfig,
    pub barrier: BarrierConfig,
    pub output: OutputConfig,
    pub compare_scale: f64,
    pub verify: VerifyConfig,
    pub entries: Vec<(String, String)>,
}

fn cfg_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

fn broadcast<T: Copy>(v: &mut Vec<T>, n: usize, given: bool) {
    if v.len() != n && (v.len() == 1 || !given) {
        *v = vec![v[0]; n];
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| cfg_err(key, format!("cannot parse `{v}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|t| parse_num(key, t.trim())).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(cfg_err(key, format!("expected true/false, got `{v}`"))),
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: ProblemConfig {
                group: "heisenberg:1".into(),
                lower: vec![-1.0; 3],
                upper: vec![1.0; 3],
                cells: vec![32; 3],
                p: 2.0,
                beta: 2.0,
                q: 2.0,
                gamma: 1.0,
                alpha: 1.0,
                t_end: 1.0,
                u0: InitialData::Bump { amplitude: 1.0 },
            },
            solver: SolverConfig::default(),
            barrier: BarrierConfig {
                eps: 0.5,
                samples: 1000,
            },
            output: OutputConfig {
                directory: PathBuf::from("out"),
                stride: 1,
                emit_plots: false,
            },
            compare_scale: 0.5,
            verify: VerifyConfig {
                h: 1.0 / 32.0,
                r_min: 0.2,
                samples: 100_000,
            },
            entries: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::parse(&text, base)
    }

    /// Parse config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                cfg_err(&format!("line {}", lineno + 1), "expected `key = value`")
            })?;
            let (k, v) = (k.trim(), v.trim());
            if cfg.entries.iter().any(|(e, _)| e == k) {
                return Err(cfg_err(k, "duplicate key"));
            }
            cfg.set(k, v, base)?;
            cfg.entries.push((k.to_string(), v.to_string()));
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn set(&mut self, k: &str, v: &str, base: &Path) -> Result<()> {
        let pr = &mut self.problem;
        match k {
            "problem.group" => {
                GroupDescriptor::from_name(v).map_err(|e| cfg_err(k, e.to_string()))?;
                pr.group = v.to_string();
            }
            "problem.lower" => pr.lower = parse_list(k, v)?,
            "problem.upper" => pr.upper = parse_list(k, v)?,
            "problem.cells" => pr.cells = parse_list(k, v)?,
            "problem.p" => pr.p = parse_num(k, v)?,
            "problem.beta" => pr.beta = parse_num(k, v)?,
            "problem.q" => pr.q = parse_num(k, v)?,
            "problem.gamma" => pr.gamma = parse_num(k, v)?,
            "problem.alpha" => pr.alpha = parse_num(k, v)?,
            "problem.T" => pr.t_end = parse_num(k, v)?,
            "problem.u0" => pr.u0 = InitialData::parse(v, base).map_err(|m| cfg_err(k, m))?,
            "solver.eps_reg" => self.solver.eps_reg = parse_num(k, v)?,
            "solver.cfl_safety" => self.solver.cfl_safety = parse_num(k, v)?,
            "solver.max_steps" => self.solver.max_steps = parse_num(k, v)?,
            "solver.compare_abs_tol" => self.solver.compare_abs_tol = parse_num(k, v)?,
            "solver.compare_rel_tol" => self.solver.compare_rel_tol = parse_num(k, v)?,
            "barrier.eps" => self.barrier.eps = parse_num(k, v)?,
            "barrier.samples" => self.barrier.samples = parse_num(k, v)?,
            "output.directory" => self.output.directory = base.join(v),
            "output.stride" | "solver.output_stride" => self.output.stride = parse_num(k, v)?,
            "output.emit_plots" => self.output.emit_plots = parse_bool(k, v)?,
            "compare.scale" => self.compare_scale = parse_num(k, v)?,
            "verify.h" => self.verify.h = parse_num(k, v)?,
            "verify.r_min" => self.verify.r_min = parse_num(k, v)?,
            "verify.samples" => self.verify.samples = parse_num(k, v)?,
            _ => return Err(cfg_err(k, "unknown key")),
        }
        Ok(())
    }

    fn check(&mut self) -> Result<()> {
        let n = GroupDescriptor::from_name(&self.problem.group)
            .map_err(|e| cfg_err("problem.group", e.to_string()))?
            .total_dim();
        // omitted or single-valued box entries apply to every axis
        let given = |k: &str| self.entries.iter().any(|(e, _)| e == k);
        let (gl, gu, gc) = (given("problem.lower"), given("problem.upper"), given("problem.cells"));
        let pr = &mut self.problem;
        broadcast(&mut pr.lower, n, gl);
        broadcast(&mut pr.upper, n, gu);
        broadcast(&mut pr.cells, n, gc);
        let pr = &self.problem;
        for (name, len) in [
            ("problem.lower", pr.lower.len()),
            ("problem.upper", pr.upper.len()),
            ("problem.cells", pr.cells.len()),
        ] {
            if len != n {
                return Err(cfg_err(
                    name,
                    format!("group {} needs {n} entries, got {len}", pr.group),
                ));
            }
        }
        self.solver.output_stride = self.output.stride;
        self.solver
            .validate()
            .map_err(|e| match e {
                Error::Config { field, message } if field == "solver.output_stride" => {
                    cfg_err("output.stride", message)
                }
                e => e,
            })?;
        if !(self.barrier.eps > 0.0 && self.barrier.eps < 1.0) {
            return Err(cfg_err("barrier.eps", "must lie in (0, 1)"));
        }
        if self.barrier.samples == 0 {
            return Err(cfg_err("barrier.samples", "must be positive"));
        }
        if !(self.verify.h > 0.0) {
            return Err(cfg_err("verify.h", "must be positive"));
        }
        if !(self.compare_scale > 0.0) {
            return Err(cfg_err("compare.scale", "must be positive"));
        }
        Ok(())
    }

    /// Raw value of `key` as written in the file.
    pub fn entry(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn group(&self) -> Result<GroupDescriptor> {
        GroupDescriptor::from_name(&self.problem.group)
    }

    /// Grid with every axis refined by `2^refine`.
    pub fn grid(&self, refine: u32) -> Result<Grid> {
        let domain = BoxDomain::new(self.problem.lower.clone(), self.problem.upper.clone())
            .map_err(|e| cfg_err("problem.lower", e.to_string()))?;
        let grid = Grid::new(domain, self.problem.cells.clone())
            .map_err(|e| cfg_err("problem.cells", e.to_string()))?;
        grid.refined(refine)
    }

    /// Cells per axis giving mesh width close to `verify.h / 2^refine`.
    pub fn verify_cells(&self, refine: u32) -> Vec<usize> {
        let h = self.verify.h / f64::from(1u32 << refine.min(20));
        self.problem
            .lower
            .iter()
            .zip(&self.problem.upper)
            .map(|(a, b)| (((b - a) / h).round() as usize).max(2))
            .collect()
    }

    pub fn build_spec(&self, refine: u32, seed: u64) -> Result<ProblemSpec> {
        let grid = Arc::new(self.grid(refine)?);
        let u0 = self
            .problem
            .u0
            .evaluate(grid, seed)
            .map_err(|e| cfg_err("problem.u0", e.to_string()))?;
        let pr = &self.problem;
        let spec = ProblemSpec {
            group: self.group()?,
            p: pr.p,
            beta: pr.beta,
            q: pr.q,
            gamma: pr.gamma,
            alpha: pr.alpha,
            t_end: pr.t_end,
            u0,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
# H1 run
problem.group = heisenberg:1
problem.lower = 0, 0, -1
problem.upper = 1, 1, 1
problem.cells = 8, 8, 8
problem.p = 2.5   # trailing comment
problem.u0 = bump:0.75
output.stride = 10
";

    #[test]
    fn parses_sample() {
        let c = RunConfig::parse(SAMPLE, Path::new("/tmp")).unwrap();
        assert_eq!(c.problem.p, 2.5);
        assert_eq!(c.problem.cells, vec![8, 8, 8]);
        assert_eq!(c.output.stride, 10);
        assert_eq!(c.solver.output_stride, 10);
        assert_eq!(c.entries.len(), 7);
        let spec = c.build_spec(1, 0).unwrap();
        assert_eq!(spec.grid().n_cells(), &[16, 16, 16]);
        assert!((spec.u0.max() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn box_entries_follow_the_group_dimension() {
        let c = RunConfig::parse("problem.group = euclidean:1\nproblem.cells = 16", Path::new(".")).unwrap();
        assert_eq!((c.problem.lower, c.problem.upper, c.problem.cells), (vec![-1.0], vec![1.0], vec![16]));
        let c = RunConfig::parse("problem.lower = 0\nproblem.cells = 6", Path::new(".")).unwrap();
        assert_eq!(c.problem.lower, vec![0.0; 3]);
        assert_eq!(c.problem.cells, vec![6; 3]);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = |text: &str, field: &str| match RunConfig::parse(text, Path::new(".")) {
            Err(Error::Config { field: f, .. }) => assert_eq!(f, field, "{text}"),
            other => panic!("{text}: {other:?}"),
        };
        bad("problem.p = two", "problem.p");
        bad("problem.nope = 1", "problem.nope");
        bad("problem.p = 2\nproblem.p = 3", "problem.p");
        bad("just words", "line 1");
        bad("problem.cells = 4, 4", "problem.cells");
        bad("problem.u0 = squiggle", "problem.u0");
        bad("solver.cfl_safety = 2", "solver.cfl_safety");
        bad("output.stride = 0", "output.stride");
    }

    #[test]
    fn descriptors() {
        let b = Path::new("/d");
        assert_eq!(InitialData::parse("0", b).unwrap(), InitialData::Constant { value: 0.0 });
        assert_eq!(
            InitialData::parse("csv: u.csv", b).unwrap(),
            InitialData::Csv { path: "/d/u.csv".into() }
        );
        assert_eq!(
            InitialData::parse("random:7", b).unwrap(),
            InitialData::Random { amplitude: 1.0, seed: Some(7) }
        );
        assert!(InitialData::parse("constant", b).is_err());
    }

    #[test]
    fn random_data_is_positive_and_seeded() {
        let g = Arc::new(Grid::new(BoxDomain::cube(2, 0.0, 1.0).unwrap(), vec![16, 16]).unwrap());
        let r = InitialData::Random { amplitude: 1.0, seed: None };
        let a = r.evaluate(g.clone(), 3).unwrap();
        assert!(a.min() > 0.0);
        assert_eq!(a, r.evaluate(g.clone(), 3).unwrap());
        assert_ne!(a, r.evaluate(g, 4).unwrap());
    }
}
