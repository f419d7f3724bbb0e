//! Algebraic kernels behind the comparison argument: monotonicity of the
//! p-flux `|c|^{p−2}c`, of the odd power `|u|^{β−1}u`, and a discrete
//! Gronwall checker.

use crate::error::{invalid, Result};

/// `|c|^{p−2} c`, with the value 0 at `c = 0` for every `p > 1`.
pub fn p_flux(c: &[f64], p: f64) -> Vec<f64> {
    let n2: f64 = c.iter().map(|v| v * v).sum();
    if n2 == 0.0 {
        return vec![0.0; c.len()];
    }
    let s = n2.powf(0.5 * (p - 2.0));
    c.iter().map(|v| s * v).collect()
}

/// `|u|^{s} u` (sign-preserving power), 0 at `u = 0`.
#[inline]
pub fn signed_power(u: f64, s: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u.abs().powf(s) * u
    }
}

fn check_pair(c: &[f64], d: &[f64], p: f64) -> Result<()> {
    if c.len() != d.len() {
        return invalid(format!("vectors of dimension {} and {}", c.len(), d.len()));
    }
    if !(p > 1.0) {
        return invalid(format!("exponent p must exceed 1, got {p}"));
    }
    Ok(())
}

/// `(|c|^{p−2}c − |d|^{p−2}d) · (c − d)`.
pub fn pairing_gap(c: &[f64], d: &[f64], p: f64) -> Result<f64> {
    check_pair(c, d, p)?;
    let fc = p_flux(c, p);
    let fd = p_flux(d, p);
    Ok(fc
        .iter()
        .zip(&fd)
        .zip(c.iter().zip(d))
        .map(|((a, b), (x, y))| (a - b) * (x - y))
        .sum())
}

/// Lindqvist lower bound for [`pairing_gap`]:
///
/// * `p ≥ 2`: `(4/p²) | |d|^{(p−2)/2}d − |c|^{(p−2)/2}c |²`
/// * `1 < p < 2`: `(p−1) |d − c|² (1 + |c|² + |d|²)^{(p−2)/2}`
///
/// Both branches reduce to `|c − d|²` at `p = 2`.
pub fn lindqvist_lower_bound(c: &[f64], d: &[f64], p: f64) -> Result<f64> {
    check_pair(c, d, p)?;
    if p >= 2.0 {
        // |v|^{(p−2)/2} v is the p-flux for exponent p/2 + 1
        let q = 0.5 * p + 1.0;
        let wc = p_flux(c, q);
        let wd = p_flux(d, q);
        let n2: f64 = wd.iter().zip(&wc).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(4.0 / (p * p) * n2)
    } else {
        let diff2: f64 = c.iter().zip(d).map(|(a, b)| (a - b) * (a - b)).sum();
        let c2: f64 = c.iter().map(|v| v * v).sum();
        let d2: f64 = d.iter().map(|v| v * v).sum();
        Ok((p - 1.0) * diff2 * (1.0 + c2 + d2).powf(0.5 * (p - 2.0)))
    }
}

/// `|u|^{β−1}u − |v|^{β−1}v`; its sign is the sign of `u − v`.
pub fn odd_power_gap(u: f64, v: f64, beta: f64) -> f64 {
    signed_power(u, beta - 1.0) - signed_power(v, beta - 1.0)
}

/// `sup_{lo ≤ v < u ≤ hi} (|u|^{q−2}u − |v|^{q−2}v)/(u − v)`, the Lipschitz
/// constant of the source term on `[lo, hi]`. Infinite for `q < 2` when the
/// range touches 0.
pub fn source_lipschitz(q: f64, lo: f64, hi: f64) -> f64 {
    let (lo, hi) = (lo.min(hi), lo.max(hi));
    if q >= 2.0 {
        // derivative (q−1)|s|^{q−2} is largest at the endpoint of largest modulus
        let m = lo.abs().max(hi.abs());
        if q == 2.0 {
            1.0
        } else {
            (q - 1.0) * m.powf(q - 2.0)
        }
    } else if lo <= 0.0 && hi >= 0.0 {
        if lo == hi {
            0.0
        } else {
            f64::INFINITY
        }
    } else if q == 1.0 {
        0.0
    } else {
        let m = lo.abs().min(hi.abs());
        (q - 1.0) * m.powf(q - 2.0)
    }
}

/// Sampled `f`, `g` on an increasing time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GronwallSample {
    times: Vec<f64>,
    f_values: Vec<f64>,
    g_values: Vec<f64>,
    tol: f64,
}

impl GronwallSample {
    pub fn new(times: Vec<f64>, f_values: Vec<f64>, g_values: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return invalid("gronwall sample is empty");
        }
        if times.len() != f_values.len() || times.len() != g_values.len() {
            return invalid("times, f and g must have equal length");
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("times must be strictly increasing");
        }
        Ok(GronwallSample {
            times,
            f_values,
            g_values,
            tol: 1e-12,
        })
    }

    /// Absolute slack allowed in both the premise and the conclusion.
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn f_values(&self) -> &[f64] {
        &self.f_values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GronwallReport {
    /// forward-difference `f' ≤ g f` held at every step
    pub premise_ok: bool,
    /// `f(t_k) ≤ f(0) exp ∫_0^{t_k} g` held at every sample
    pub conclusion_ok: bool,
    /// `max_k f(t_k) / (f(0) exp ∫g)`, with `0/0 := 0`
    pub max_ratio: f64,
    /// the same ratio at the last sample
    pub final_ratio: f64,
}

pub fn gronwall_check(s: &GronwallSample) -> Result<GronwallReport> {
    if s.times.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("times must be strictly increasing");
    }
    let f = &s.f_values;
    let g = &s.g_values;
    let t = &s.times;
    let premise_ok = (0..t.len() - 1).all(|k| {
        let slope = (f[k + 1] - f[k]) / (t[k + 1] - t[k]);
        slope <= g[k] * f[k].max(f[k + 1]) + s.tol
    });
    let mut integral = 0.0;
    let mut conclusion_ok = true;
    let mut max_ratio = f64::NEG_INFINITY;
    let mut ratio = 0.0;
    for k in 0..t.len() {
        if k > 0 {
            integral += 0.5 * (g[k] + g[k - 1]) * (t[k] - t[k - 1]);
        }
        let bound = f[0] * integral.exp();
        if f[k] > bound + s.tol {
            conclusion_ok = false;
        }
        ratio = if bound == 0.0 {
            if f[k] == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(f[k])
            }
        } else {
            f[k] / bound
        };
        max_ratio = max_ratio.max(ratio);
    }
    Ok(GronwallReport {
        premise_ok,
        conclusion_ok,
        max_ratio,
        final_ratio: ratio,
    })
}
