//! Second-order forward-mode jets.
//!
//! A [`Jet`] carries a value together with its first and second derivative
//! with respect to a single parameter (time, in practice). Arithmetic follows
//! the truncated Taylor rules, so composing jets yields exact derivatives of
//! compositions up to order two.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Numeric type the expression evaluator and the rotation algebra run on.
pub trait Scalar:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn cst(x: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self;
    fn sinh(self) -> Self;
    fn cosh(self) -> Self;
    fn tanh(self) -> Self;
    fn atan(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn cbrt(self) -> Self;
    fn abs(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, e: Self) -> Self;
    fn atan2(self, x: Self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }
    fn one() -> Self {
        Self::cst(1.0)
    }
    fn scale(self, k: f64) -> Self {
        self * Self::cst(k)
    }
}

impl Scalar for f64 {
    fn cst(x: f64) -> Self {
        x
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn tan(self) -> Self {
        f64::tan(self)
    }
    fn sinh(self) -> Self {
        f64::sinh(self)
    }
    fn cosh(self) -> Self {
        f64::cosh(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn atan(self) -> Self {
        f64::atan(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn cbrt(self) -> Self {
        f64::cbrt(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn powf(self, e: Self) -> Self {
        f64::powf(self, e)
    }
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
}

/// Value, first and second derivative.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet {
    pub const fn new(v: f64, d1: f64, d2: f64) -> Self {
        Jet { v, d1, d2 }
    }

    pub const fn constant(v: f64) -> Self {
        Jet {
            v,
            d1: 0.0,
            d2: 0.0,
        }
    }

    /// The independent variable itself at `v`.
    pub const fn variable(v: f64) -> Self {
        Jet {
            v,
            d1: 1.0,
            d2: 0.0,
        }
    }

    /// Apply a scalar function given f, f', f'' at the current value.
    #[inline]
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Jet {
        Jet {
            v: f0,
            d1: f1 * self.d1,
            d2: f2 * self.d1 * self.d1 + f1 * self.d2,
        }
    }

    /// The jet of the derivative: shifts (v, d1, d2) to (d1, d2, ?).
    ///
    /// The third derivative is unknown and reported as NaN so that
    /// accidental use is visible.
    pub fn derivative(self) -> Jet {
        Jet {
            v: self.d1,
            d1: self.d2,
            d2: f64::NAN,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }
}

impl From<f64> for Jet {
    fn from(v: f64) -> Self {
        Jet::constant(v)
    }
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(self, o: Jet) -> Jet {
        Jet::new(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2)
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(self, o: Jet) -> Jet {
        Jet::new(self.v - o.v, self.d1 - o.d1, self.d2 - o.d2)
    }
}

impl Mul for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, o: Jet) -> Jet {
        Jet::new(
            self.v * o.v,
            self.d1 * o.v + self.v * o.d1,
            self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        )
    }
}

impl Div for Jet {
    type Output = Jet;
    #[inline]
    fn div(self, o: Jet) -> Jet {
        let q = self.v / o.v;
        let q1 = (self.d1 - q * o.d1) / o.v;
        let q2 = (self.d2 - 2.0 * q1 * o.d1 - q * o.d2) / o.v;
        Jet::new(q, q1, q2)
    }
}

impl Neg for Jet {
    type Output = Jet;
    #[inline]
    fn neg(self) -> Jet {
        Jet::new(-self.v, -self.d1, -self.d2)
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, o: Jet) {
        *self = *self + o;
    }
}

impl SubAssign for Jet {
    fn sub_assign(&mut self, o: Jet) {
        *self = *self - o;
    }
}

impl MulAssign for Jet {
    fn mul_assign(&mut self, o: Jet) {
        *self = *self * o;
    }
}

impl Scalar for Jet {
    fn cst(x: f64) -> Self {
        Jet::constant(x)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }
    fn tan(self) -> Self {
        let t = self.v.tan();
        let sec2 = 1.0 + t * t;
        self.chain(t, sec2, 2.0 * t * sec2)
    }
    fn sinh(self) -> Self {
        let (s, c) = (self.v.sinh(), self.v.cosh());
        self.chain(s, c, s)
    }
    fn cosh(self) -> Self {
        let (s, c) = (self.v.sinh(), self.v.cosh());
        self.chain(c, s, c)
    }
    fn tanh(self) -> Self {
        let t = self.v.tanh();
        let d = 1.0 - t * t;
        self.chain(t, d, -2.0 * t * d)
    }
    fn atan(self) -> Self {
        let x = self.v;
        let d = 1.0 / (1.0 + x * x);
        self.chain(x.atan(), d, -2.0 * x * d * d)
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let x = self.v;
        self.chain(x.ln(), 1.0 / x, -1.0 / (x * x))
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * s * s))
    }
    fn cbrt(self) -> Self {
        let c = self.v.cbrt();
        let c2 = c * c;
        self.chain(c, 1.0 / (3.0 * c2), -2.0 / (9.0 * c2 * c2 * c))
    }
    fn abs(self) -> Self {
        if self.v < 0.0 {
            -self
        } else {
            self
        }
    }
    fn powi(self, n: i32) -> Self {
        let x = self.v;
        let nf = n as f64;
        match n {
            0 => Jet::constant(1.0),
            1 => self,
            _ => self.chain(
                x.powi(n),
                nf * x.powi(n - 1),
                nf * (nf - 1.0) * x.powi(n - 2),
            ),
        }
    }
    fn powf(self, e: Self) -> Self {
        if e.d1 == 0.0 && e.d2 == 0.0 {
            let x = self.v;
            let p = e.v;
            return self.chain(
                x.powf(p),
                p * x.powf(p - 1.0),
                p * (p - 1.0) * x.powf(p - 2.0),
            );
        }
        (e * self.ln()).exp()
    }
    fn atan2(self, x: Self) -> Self {
        let y = self;
        let n = x.v * y.d1 - y.v * x.d1;
        let d = x.v * x.v + y.v * y.v;
        let n1 = x.v * y.d2 - y.v * x.d2;
        let d1 = 2.0 * (x.v * x.d1 + y.v * y.d1);
        Jet::new(y.v.atan2(x.v), n / d, (n1 * d - n * d1) / (d * d))
    }
}

impl fmt::Display for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}; {}, {})", self.v, self.d1, self.d2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Central differences of a scalar function give the oracle derivatives.
    fn fd(f: impl Fn(f64) -> f64, x: f64) -> (f64, f64) {
        let h = 1e-4;
        let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
        let d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
        (d1, d2)
    }

    fn check(jf: impl Fn(Jet) -> Jet, f: impl Fn(f64) -> f64, x: f64) {
        let j = jf(Jet::variable(x));
        let (d1, d2) = fd(&f, x);
        assert!((j.v - f(x)).abs() < 1e-12, "value at {x}");
        assert!(
            (j.d1 - d1).abs() < 1e-6 * (1.0 + d1.abs()),
            "d1 {} vs {}",
            j.d1,
            d1
        );
        assert!(
            (j.d2 - d2).abs() < 1e-4 * (1.0 + d2.abs()),
            "d2 {} vs {}",
            j.d2,
            d2
        );
    }

    #[test]
    fn elementary_functions_match_finite_differences() {
        for &x in &[0.3, 0.9, 1.7] {
            check(|j| j.sin() * j.cos(), |x| x.sin() * x.cos(), x);
            check(|j| j.tan(), f64::tan, x);
            check(|j| j.sinh() / j.cosh(), |x| x.tanh(), x);
            check(|j| j.tanh(), f64::tanh, x);
            check(|j| j.exp().ln(), |x| x, x);
            check(|j| j.sqrt() * j.cbrt(), |x| x.sqrt() * x.cbrt(), x);
            check(|j| j.powi(5) - j.powi(-2), |x| x.powi(5) - x.powi(-2), x);
            check(|j| j.powf(Jet::constant(1.3)), |x| x.powf(1.3), x);
            check(|j| j.powf(j), |x| x.powf(x), x);
            check(|j| j.atan(), f64::atan, x);
            check(
                |j| (j * j).atan2(Jet::constant(2.0) - j),
                |x| (x * x).atan2(2.0 - x),
                x,
            );
            check(
                |j| Jet::constant(1.0) / (j * j + Jet::constant(1.0)),
                |x| 1.0 / (x * x + 1.0),
                x,
            );
        }
    }

    #[test]
    fn cbrt_is_odd() {
        let j = Jet::variable(-8.0).cbrt();
        assert!((j.v + 2.0).abs() < 1e-15);
        assert!((j.d1 - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn composition_of_jets_is_chain_rule() {
        // y(t) = t^2 as a jet, then sin(y): second derivative 2cos(t^2) - 4t^2 sin(t^2)
        let t = 0.7;
        let y = Jet::new(t * t, 2.0 * t, 2.0);
        let s = y.sin();
        let want = 2.0 * (t * t).cos() - 4.0 * t * t * (t * t).sin();
        assert!((s.d2 - want).abs() < 1e-14);
    }
}
