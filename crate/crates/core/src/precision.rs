//! Scalar types for the radial ODE integrator.
//!
//! The distinguished solution of the radial sinh-Gordon equation is a
//! separatrix: perturbations grow like `exp(2x)`, so certifying that it stays
//! bounded out to `x = 20` needs roughly 1e-18 accuracy in the parameter, the
//! seed and the integration. [`DoubleF64`] (an unevaluated sum of two `f64`s,
//! about 32 significant digits) provides that headroom; plain `f64` is used
//! everywhere else.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

/// Euler–Mascheroni constant to 50 significant digits.
pub const EULER_GAMMA_50: &str = "0.57721566490153286060651209008240243104215933593992";

/// Minimal real-number interface needed by the Taylor integrator.
pub trait Real:
    Copy
    + Send
    + Sync
    + fmt::Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    /// Unit roundoff of the representation.
    const EPSILON: f64;
    /// Smallest local tolerance the integrator accepts for this type.
    const MIN_TOL: f64;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
    fn abs(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }
    fn from_usize(n: usize) -> Self {
        Self::from_f64(n as f64)
    }
    /// 4γ in this precision.
    fn four_gamma() -> Self;
}

impl Real for f64 {
    const EPSILON: f64 = f64::EPSILON;
    const MIN_TOL: f64 = 1e-12;

    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn four_gamma() -> Self {
        DoubleF64::four_gamma().to_f64()
    }
}

/// Double-double number: `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DoubleF64 {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

// ln 2 split into two doubles.
const LN2: DoubleF64 = DoubleF64 {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

impl DoubleF64 {
    pub const fn new(hi: f64, lo: f64) -> Self {
        DoubleF64 { hi, lo }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    pub fn euler_gamma() -> Self {
        EULER_GAMMA_50
            .parse()
            .expect("Euler constant literal is well formed")
    }

    pub fn is_finite(self) -> bool {
        self.hi.is_finite()
    }

    fn ldexp(self, e: i32) -> Self {
        let s = 2f64.powi(e);
        DoubleF64::new(self.hi * s, self.lo * s)
    }

    pub fn powi(self, mut n: u32) -> Self {
        let mut base = self;
        let mut acc = DoubleF64::from(1.0);
        while n > 0 {
            if n & 1 == 1 {
                acc *= base;
            }
            base = base * base;
            n >>= 1;
        }
        acc
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return DoubleF64::from(self.hi.sqrt());
        }
        // One Newton step on the f64 estimate doubles the digits.
        let x = self.hi.sqrt();
        let (p, e) = two_prod(x, x);
        let diff = (self - DoubleF64::new(p, e)).hi;
        DoubleF64::from(x) + DoubleF64::from(diff / (2.0 * x))
    }
}

impl From<f64> for DoubleF64 {
    fn from(x: f64) -> Self {
        DoubleF64 { hi: x, lo: 0.0 }
    }
}

impl PartialOrd for DoubleF64 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            ord => Some(ord),
        }
    }
}

impl Add for DoubleF64 {
    type Output = Self;
    fn add(self, b: Self) -> Self {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DoubleF64 { hi, lo }
    }
}

impl Neg for DoubleF64 {
    type Output = Self;
    fn neg(self) -> Self {
        DoubleF64::new(-self.hi, -self.lo)
    }
}

impl Sub for DoubleF64 {
    type Output = Self;
    fn sub(self, b: Self) -> Self {
        self + (-b)
    }
}

impl Mul for DoubleF64 {
    type Output = Self;
    fn mul(self, b: Self) -> Self {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        DoubleF64 { hi, lo }
    }
}

impl Div for DoubleF64 {
    type Output = Self;
    fn div(self, b: Self) -> Self {
        let q1 = self.hi / b.hi;
        let r = self - b * DoubleF64::from(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * DoubleF64::from(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        DoubleF64 { hi, lo } + DoubleF64::from(q3)
    }
}

impl AddAssign for DoubleF64 {
    fn add_assign(&mut self, b: Self) {
        *self = *self + b;
    }
}

impl SubAssign for DoubleF64 {
    fn sub_assign(&mut self, b: Self) {
        *self = *self - b;
    }
}

impl MulAssign for DoubleF64 {
    fn mul_assign(&mut self, b: Self) {
        *self = *self * b;
    }
}

impl Real for DoubleF64 {
    const EPSILON: f64 = 4.93e-32;
    const MIN_TOL: f64 = 1e-28;

    fn from_f64(x: f64) -> Self {
        DoubleF64::from(x)
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn exp(self) -> Self {
        if self.hi > 709.0 {
            return DoubleF64::from(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return DoubleF64::from(0.0);
        }
        // x = k ln2 + r, then exp(r) = (1 + expm1(r / 512))^512.
        let k = (self.hi / std::f64::consts::LN_2).round();
        let r = (self - LN2 * DoubleF64::from(k)).ldexp(-9);
        let mut term = r;
        let mut sum = r;
        for n in 2..=14 {
            term = term * r / DoubleF64::from(n as f64);
            sum += term;
            if term.hi.abs() < 1e-34 {
                break;
            }
        }
        for _ in 0..9 {
            sum = sum.ldexp(1) + sum * sum;
        }
        (sum + DoubleF64::from(1.0)).ldexp(k as i32)
    }

    fn ln(self) -> Self {
        if self.hi <= 0.0 {
            return DoubleF64::from(f64::NAN);
        }
        let mut y = DoubleF64::from(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - DoubleF64::from(1.0);
        }
        y
    }

    fn four_gamma() -> Self {
        DoubleF64::euler_gamma() * DoubleF64::from(4.0)
    }
}

impl fmt::Display for DoubleF64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}", self.hi + self.lo)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseDoubleError(String);

impl fmt::Display for ParseDoubleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid decimal literal '{}'", self.0)
    }
}

impl std::error::Error for ParseDoubleError {}

impl FromStr for DoubleF64 {
    type Err = ParseDoubleError;

    /// Parses a plain decimal literal (`-12.5e-3` style) without rounding
    /// through `f64`, so literals longer than 17 digits keep their precision.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseDoubleError(s.to_string());
        let t = s.trim();
        let (neg, body) = match t.as_bytes().first() {
            Some(b'-') => (true, &t[1..]),
            Some(b'+') => (false, &t[1..]),
            _ => (false, t),
        };
        let (mantissa, exponent) = match body.find(['e', 'E']) {
            Some(i) => (
                &body[..i],
                body[i + 1..].parse::<i32>().map_err(|_| bad())?,
            ),
            None => (body, 0),
        };
        let mut acc = DoubleF64::from(0.0);
        let mut frac_digits = 0i32;
        let mut seen_dot = false;
        let mut seen_digit = false;
        for c in mantissa.chars() {
            match c {
                '0'..='9' => {
                    seen_digit = true;
                    acc = acc * DoubleF64::from(10.0)
                        + DoubleF64::from(f64::from(c as u8 - b'0'));
                    if seen_dot {
                        frac_digits += 1;
                    }
                }
                '.' if !seen_dot => seen_dot = true,
                '_' => {}
                _ => return Err(bad()),
            }
        }
        if !seen_digit {
            return Err(bad());
        }
        let e = exponent - frac_digits;
        let ten = DoubleF64::from(10.0);
        let scale = ten.powi(e.unsigned_abs());
        let v = if e >= 0 { acc * scale } else { acc / scale };
        Ok(if neg { -v } else { v })
    }
}
