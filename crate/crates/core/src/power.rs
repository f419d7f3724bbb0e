//! Exponentiation of nonnegative bases with a fixed exponent; quarter-integer
//! exponents avoid `powf`.

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Exponent {
    /// `x^{k/4}` with `k = 4·whole + quarters`, `quarters ∈ 0..4`
    Quarters { whole: i32, quarters: u8 },
    General(f64),
}

impl Exponent {
    pub fn new(e: f64) -> Self {
        let k = 4.0 * e;
        if k.fract() == 0.0 && k.abs() <= 64.0 {
            let k = k as i32;
            Exponent::Quarters {
                whole: k.div_euclid(4),
                quarters: k.rem_euclid(4) as u8,
            }
        } else {
            Exponent::General(e)
        }
    }

    /// `x^e` for `x ≥ 0`.
    #[inline]
    pub fn pow(self, x: f64) -> f64 {
        match self {
            Exponent::Quarters { whole, quarters } => {
                let w = match whole {
                    0 => 1.0,
                    1 => x,
                    2 => x * x,
                    _ => x.powi(whole),
                };
                match quarters {
                    0 => w,
                    1 => w * x.sqrt().sqrt(),
                    2 => w * x.sqrt(),
                    _ => {
                        let s = x.sqrt();
                        w * s * s.sqrt()
                    }
                }
            }
            Exponent::General(e) => x.powf(e),
        }
    }

    /// `x ← x^e` over a slice, dispatching once.
    pub fn pow_slice(self, xs: &mut [f64]) {
        match self {
            Exponent::Quarters { whole: 0, quarters: 0 } => xs.fill(1.0),
            Exponent::Quarters { whole: 0, quarters: 1 } => {
                xs.iter_mut().for_each(|x| *x = x.sqrt().sqrt())
            }
            Exponent::Quarters { whole: 0, quarters: 2 } => {
                xs.iter_mut().for_each(|x| *x = x.sqrt())
            }
            Exponent::Quarters { whole: 1, quarters: 0 } => {}
            Exponent::Quarters { whole: 1, quarters: 2 } => {
                xs.iter_mut().for_each(|x| *x *= x.sqrt())
            }
            Exponent::Quarters { whole: -1, quarters: 2 } => {
                xs.iter_mut().for_each(|x| *x = 1.0 / x.sqrt())
            }
            Exponent::Quarters { whole: -1, quarters: 3 } => {
                xs.iter_mut().for_each(|x| *x = 1.0 / x.sqrt().sqrt())
            }
            e => xs.iter_mut().for_each(|x| *x = e.pow(*x)),
        }
    }

    /// `|u|^e u`, zero at `u = 0`.
    #[inline]
    pub fn signed(self, u: f64) -> f64 {
        if u == 0.0 {
            0.0
        } else {
            self.pow(u.abs()) * u
        }
    }
}
