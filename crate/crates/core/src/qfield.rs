//! Exact arithmetic in the real quadratic fields `Q(sqrt(d))`, `d ∈ {2, 3, 5}`.
//!
//! Every value is kept in the canonical form `(a + b*sqrt(d)) / q` with
//! `q > 0` and `gcd(a, b, q) = 1`, so structural equality and hashing agree
//! with equality of real numbers.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::expr;

/// Radicands supported by the library.
pub const RADICANDS: [u32; 3] = [2, 3, 5];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QfieldError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("mixed radicands: sqrt({0}) and sqrt({1})")]
    MixedRadicand(u32, u32),
    #[error("unsupported radicand {0}")]
    UnsupportedRadicand(u32),
    #[error("parse error: {0}")]
    Parse(String),
}

/// An element `(a + b*sqrt(d)) / q` of `Q(sqrt(d))` in canonical form.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct QuadElem {
    a: BigInt,
    b: BigInt,
    q: BigInt,
    d: u32,
}

fn check_radicand(d: u32) -> Result<(), QfieldError> {
    if RADICANDS.contains(&d) {
        Ok(())
    } else {
        Err(QfieldError::UnsupportedRadicand(d))
    }
}

impl QuadElem {
    /// Builds `(a + b*sqrt(d)) / q` and normalizes it.
    pub fn new(
        a: impl Into<BigInt>,
        b: impl Into<BigInt>,
        q: impl Into<BigInt>,
        d: u32,
    ) -> Result<Self, QfieldError> {
        check_radicand(d)?;
        let q = q.into();
        if q.is_zero() {
            return Err(QfieldError::DivisionByZero);
        }
        Ok(Self::normalized(a.into(), b.into(), q, d))
    }

    fn normalized(mut a: BigInt, mut b: BigInt, mut q: BigInt, d: u32) -> Self {
        if q.is_negative() {
            a = -a;
            b = -b;
            q = -q;
        }
        let g = a.gcd(&b).gcd(&q);
        if !g.is_one() && !g.is_zero() {
            a /= &g;
            b /= &g;
            q /= &g;
        }
        if a.is_zero() && b.is_zero() {
            q = BigInt::one();
        }
        QuadElem { a, b, q, d }
    }

    pub fn zero(d: u32) -> Self {
        Self::from_int(0, d)
    }

    pub fn one(d: u32) -> Self {
        Self::from_int(1, d)
    }

    pub fn from_int(n: impl Into<BigInt>, d: u32) -> Self {
        QuadElem { a: n.into(), b: BigInt::zero(), q: BigInt::one(), d }
    }

    pub fn from_ratio(num: impl Into<BigInt>, den: impl Into<BigInt>, d: u32) -> Self {
        let den = den.into();
        assert!(!den.is_zero(), "zero denominator");
        Self::normalized(num.into(), BigInt::zero(), den, d)
    }

    /// `sqrt(d)` itself.
    pub fn sqrt_d(d: u32) -> Self {
        QuadElem { a: BigInt::zero(), b: BigInt::one(), q: BigInt::one(), d }
    }

    /// The golden mean `(1 + sqrt(5)) / 2`.
    pub fn gamma() -> Self {
        QuadElem { a: 1.into(), b: 1.into(), q: 2.into(), d: 5 }
    }

    pub fn a(&self) -> &BigInt {
        &self.a
    }
    pub fn b(&self) -> &BigInt {
        &self.b
    }
    pub fn q(&self) -> &BigInt {
        &self.q
    }
    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    pub fn is_rational(&self) -> bool {
        self.b.is_zero()
    }

    fn same_field(&self, other: &Self) -> Result<(), QfieldError> {
        if self.d == other.d {
            Ok(())
        } else {
            Err(QfieldError::MixedRadicand(self.d, other.d))
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, QfieldError> {
        self.same_field(other)?;
        let a = &self.a * &other.q + &other.a * &self.q;
        let b = &self.b * &other.q + &other.b * &self.q;
        Ok(Self::normalized(a, b, &self.q * &other.q, self.d))
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self, QfieldError> {
        self.try_add(&-other)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self, QfieldError> {
        self.same_field(other)?;
        let d = BigInt::from(self.d);
        let a = &self.a * &other.a + &self.b * &other.b * d;
        let b = &self.a * &other.b + &self.b * &other.a;
        Ok(Self::normalized(a, b, &self.q * &other.q, self.d))
    }

    pub fn try_div(&self, other: &Self) -> Result<Self, QfieldError> {
        self.same_field(other)?;
        if other.is_zero() {
            return Err(QfieldError::DivisionByZero);
        }
        // x / y = x * conj(y) * q_y^2 / (q_y * (a_y^2 - d b_y^2)) after clearing.
        let n = &other.a * &other.a - &other.b * &other.b * BigInt::from(self.d);
        let num = self.try_mul(&QuadElem {
            a: other.a.clone(),
            b: -other.b.clone(),
            q: BigInt::one(),
            d: self.d,
        })?;
        Ok(Self::normalized(num.a * &other.q, num.b * &other.q, num.q * n, self.d))
    }

    pub fn recip(&self) -> Result<Self, QfieldError> {
        Self::one(self.d).try_div(self)
    }

    /// Integer power; negative exponents invert.
    pub fn pow(&self, e: i64) -> Result<Self, QfieldError> {
        let mut base = if e < 0 { self.recip()? } else { self.clone() };
        let mut e = e.unsigned_abs();
        let mut acc = Self::one(self.d);
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            base = &base * &base;
            e >>= 1;
        }
        Ok(acc)
    }

    /// Galois conjugate `sqrt(d) -> -sqrt(d)`.
    pub fn conj(&self) -> Self {
        QuadElem { a: self.a.clone(), b: -self.b.clone(), q: self.q.clone(), d: self.d }
    }

    /// Field norm `x * conj(x)` as a rational `(num, den)` with `den > 0` in lowest terms.
    pub fn norm(&self) -> (BigInt, BigInt) {
        let num = &self.a * &self.a - &self.b * &self.b * BigInt::from(self.d);
        let den = &self.q * &self.q;
        let g = num.gcd(&den);
        (num / &g, den / g)
    }

    /// Exact sign of the real value, by integer case analysis.
    pub fn signum(&self) -> i32 {
        sign_surd(&self.a, &self.b, self.d)
    }

    pub fn abs(&self) -> Self {
        if self.signum() < 0 {
            -self
        } else {
            self.clone()
        }
    }

    /// The unique integer `n` with `n <= x < n + 1`.
    pub fn floor(&self) -> BigInt {
        // a + b*sqrt(d) = (a + floor(b*sqrt(d))) + theta with theta in [0, 1).
        let n = &self.a + floor_b_sqrt_d(&self.b, self.d);
        n.div_floor(&self.q)
    }

    pub fn ceil(&self) -> BigInt {
        -(-self).floor()
    }

    /// Fractional part `x - floor(x)`, always in `[0, 1)`.
    pub fn frac(&self) -> Self {
        self - &Self::from_int(self.floor(), self.d)
    }

    /// Approximate value; only for diagnostics and plotting.
    pub fn to_f64(&self) -> f64 {
        let a = self.a.to_f64().unwrap_or(f64::NAN);
        let b = self.b.to_f64().unwrap_or(f64::NAN);
        let q = self.q.to_f64().unwrap_or(f64::NAN);
        (a + b * (self.d as f64).sqrt()) / q
    }

    /// Parses the text grammar used for points and case files, e.g.
    /// `(1+1*sqrt(5))/2`, `3/4`, `2-sqrt(3)` or `1/gamma^2`.
    pub fn parse(text: &str, d: u32) -> Result<Self, QfieldError> {
        check_radicand(d)?;
        expr::parse_const(text, d).map_err(|e| QfieldError::Parse(e.to_string()))
    }

    pub fn cmp_value(&self, other: &Self) -> Ordering {
        assert_eq!(self.d, other.d, "comparing elements of different fields");
        (self - other).signum().cmp(&0)
    }
}

/// Sign of `a + b*sqrt(d)` for squarefree `d > 1`.
pub(crate) fn sign_surd(a: &BigInt, b: &BigInt, d: u32) -> i32 {
    let sa = sign_of(a);
    let sb = sign_of(b);
    if sb == 0 {
        return sa;
    }
    if sa == 0 || sa == sb {
        return sb;
    }
    // Opposite signs: the larger magnitude wins; a^2 == d b^2 is impossible.
    let lhs = a * a;
    let rhs = b * b * BigInt::from(d);
    if lhs > rhs {
        sa
    } else {
        sb
    }
}

fn sign_of(x: &BigInt) -> i32 {
    if x.is_zero() {
        0
    } else if x.is_negative() {
        -1
    } else {
        1
    }
}

/// `floor(b * sqrt(d))` exactly, via the integer square root of `b^2 d`.
fn floor_b_sqrt_d(b: &BigInt, d: u32) -> BigInt {
    if b.is_zero() {
        return BigInt::zero();
    }
    let m = (b * b * BigInt::from(d)).sqrt();
    if b.is_positive() {
        m
    } else {
        -m - 1
    }
}

impl PartialOrd for QuadElem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        if self.d != other.d {
            return None;
        }
        Some(self.cmp_value(other))
    }
}

impl fmt::Display for QuadElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.b.is_zero() {
            return if self.q.is_one() {
                write!(f, "{}", self.a)
            } else {
                write!(f, "{}/{}", self.a, self.q)
            };
        }
        let op = if self.b.is_negative() { '-' } else { '+' };
        let inner = format!("{}{}{}*sqrt({})", self.a, op, self.b.abs(), self.d);
        if self.q.is_one() {
            write!(f, "({inner})")
        } else {
            write!(f, "({inner})/{}", self.q)
        }
    }
}

impl serde::Serialize for QuadElem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl $trait<&QuadElem> for &QuadElem {
            type Output = QuadElem;
            fn $method(self, rhs: &QuadElem) -> QuadElem {
                self.$checked(rhs).expect("quadratic field operation")
            }
        }
        impl $trait<QuadElem> for QuadElem {
            type Output = QuadElem;
            fn $method(self, rhs: QuadElem) -> QuadElem {
                (&self).$checked(&rhs).expect("quadratic field operation")
            }
        }
        impl $trait<&QuadElem> for QuadElem {
            type Output = QuadElem;
            fn $method(self, rhs: &QuadElem) -> QuadElem {
                (&self).$checked(rhs).expect("quadratic field operation")
            }
        }
        impl $trait<QuadElem> for &QuadElem {
            type Output = QuadElem;
            fn $method(self, rhs: QuadElem) -> QuadElem {
                self.$checked(&rhs).expect("quadratic field operation")
            }
        }
    };
}

forward_binop!(Add, add, try_add);
forward_binop!(Sub, sub, try_sub);
forward_binop!(Mul, mul, try_mul);

impl Neg for &QuadElem {
    type Output = QuadElem;
    fn neg(self) -> QuadElem {
        QuadElem { a: -self.a.clone(), b: -self.b.clone(), q: self.q.clone(), d: self.d }
    }
}

impl Neg for QuadElem {
    type Output = QuadElem;
    fn neg(self) -> QuadElem {
        QuadElem { a: -self.a, b: -self.b, q: self.q, d: self.d }
    }
}
