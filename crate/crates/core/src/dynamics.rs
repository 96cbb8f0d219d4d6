//! The torus map `T(x, y) = (y, {-x - lambda' y})`, its inverse, matrix powers
//! and the link with the integer recursion `0 <= a + lambda b + c < 1`.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Coef, Frame, LPoint, LResult, Ring};
use crate::qfield::{QfieldError, QuadElem};

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Point {
    pub x: QuadElem,
    pub y: QuadElem,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PointError {
    #[error("point must look like (x, y)")]
    Shape,
    #[error(transparent)]
    Field(#[from] QfieldError),
}

impl Point {
    pub fn new(x: QuadElem, y: QuadElem) -> Self {
        assert_eq!(x.d(), y.d(), "coordinates from different fields");
        Point { x, y }
    }

    pub fn origin(d: u32) -> Self {
        Point::new(QuadElem::zero(d), QuadElem::zero(d))
    }

    pub fn d(&self) -> u32 {
        self.x.d()
    }

    pub fn in_torus(&self) -> bool {
        let unit = |c: &QuadElem| c.signum() >= 0 && (c - &QuadElem::one(c.d())).signum() < 0;
        unit(&self.x) && unit(&self.y)
    }

    pub fn add(&self, o: &Point) -> Point {
        Point::new(&self.x + &o.x, &self.y + &o.y)
    }

    pub fn sub(&self, o: &Point) -> Point {
        Point::new(&self.x - &o.x, &self.y - &o.y)
    }

    pub fn scale(&self, k: &QuadElem) -> Point {
        Point::new(&self.x * k, &self.y * k)
    }

    pub fn conj(&self) -> Point {
        Point::new(self.x.conj(), self.y.conj())
    }

    /// `max(|x|, |y|)`.
    pub fn sup_norm(&self) -> QuadElem {
        let (a, b) = (self.x.abs(), self.y.abs());
        if a.cmp_value(&b).is_ge() {
            a
        } else {
            b
        }
    }

    pub fn swap(&self) -> Point {
        Point::new(self.y.clone(), self.x.clone())
    }

    /// Parses `(x, y)` where each coordinate uses the exact expression grammar.
    pub fn parse(text: &str, d: u32) -> Result<Self, PointError> {
        let t = text.trim();
        let inner = t
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or(PointError::Shape)?;
        // split at the top-level comma
        let mut depth = 0i32;
        let mut cut = None;
        for (i, c) in inner.char_indices() {
            match c {
                '(' => depth += 1,
                ')' => depth -= 1,
                ',' if depth == 0 => {
                    if cut.is_some() {
                        return Err(PointError::Shape);
                    }
                    cut = Some(i);
                }
                _ => {}
            }
        }
        let cut = cut.ok_or(PointError::Shape)?;
        Ok(Point::new(
            QuadElem::parse(&inner[..cut], d)?,
            QuadElem::parse(&inner[cut + 1..], d)?,
        ))
    }

    /// Canonical sort key: exact text of both coordinates.
    pub fn key(&self) -> (String, String) {
        (self.x.to_string(), self.y.to_string())
    }

    pub fn to_f64(&self) -> (f64, f64) {
        (self.x.to_f64(), self.y.to_f64())
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl Serialize for Point {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// The eight quadratic parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tag {
    Gamma,
    NegInvGamma,
    InvGamma,
    NegGamma,
    Sqrt2,
    NegSqrt2,
    Sqrt3,
    NegSqrt3,
}

impl Tag {
    pub const ALL: [Tag; 8] = [
        Tag::Gamma,
        Tag::NegInvGamma,
        Tag::Sqrt2,
        Tag::NegSqrt2,
        Tag::InvGamma,
        Tag::NegGamma,
        Tag::Sqrt3,
        Tag::NegSqrt3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tag::Gamma => "gamma",
            Tag::NegInvGamma => "neg-inv-gamma",
            Tag::InvGamma => "inv-gamma",
            Tag::NegGamma => "neg-gamma",
            Tag::Sqrt2 => "sqrt2",
            Tag::NegSqrt2 => "neg-sqrt2",
            Tag::Sqrt3 => "sqrt3",
            Tag::NegSqrt3 => "neg-sqrt3",
        }
    }

    pub fn radicand(self) -> u32 {
        match self {
            Tag::Gamma | Tag::NegInvGamma | Tag::InvGamma | Tag::NegGamma => 5,
            Tag::Sqrt2 | Tag::NegSqrt2 => 2,
            Tag::Sqrt3 | Tag::NegSqrt3 => 3,
        }
    }

    fn lambda_text(self) -> &'static str {
        match self {
            Tag::Gamma => "gamma",
            Tag::NegInvGamma => "-1/gamma",
            Tag::InvGamma => "1/gamma",
            Tag::NegGamma => "-gamma",
            Tag::Sqrt2 => "sqrt(2)",
            Tag::NegSqrt2 => "-sqrt(2)",
            Tag::Sqrt3 => "sqrt(3)",
            Tag::NegSqrt3 => "-sqrt(3)",
        }
    }

    /// `theta` with `-lambda = 2 cos(theta pi)`.
    fn theta(self) -> (i64, i64) {
        match self {
            Tag::Gamma => (4, 5),
            Tag::NegInvGamma => (2, 5),
            Tag::InvGamma => (3, 5),
            Tag::NegGamma => (1, 5),
            Tag::Sqrt2 => (3, 4),
            Tag::NegSqrt2 => (1, 4),
            Tag::Sqrt3 => (5, 6),
            Tag::NegSqrt3 => (1, 6),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown case {0:?}; expected one of gamma, neg-inv-gamma, inv-gamma, neg-gamma, sqrt2, neg-sqrt2, sqrt3, neg-sqrt3")]
pub struct UnknownTag(pub String);

impl FromStr for Tag {
    type Err = UnknownTag;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tag::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| UnknownTag(s.to_string()))
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// 2x2 matrix acting on row vectors from the right.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Mat2(pub [[QuadElem; 2]; 2]);

impl Mat2 {
    pub fn identity(d: u32) -> Self {
        Mat2([
            [QuadElem::one(d), QuadElem::zero(d)],
            [QuadElem::zero(d), QuadElem::one(d)],
        ])
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        let e = |i: usize, j: usize| &(&a[i][0] * &b[0][j]) + &(&a[i][1] * &b[1][j]);
        Mat2([[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]])
    }

    /// Row vector times matrix: `(x, y) M`.
    pub fn apply(&self, p: &Point) -> Point {
        let m = &self.0;
        Point::new(
            &(&p.x * &m[0][0]) + &(&p.y * &m[1][0]),
            &(&p.x * &m[0][1]) + &(&p.y * &m[1][1]),
        )
    }
}

#[derive(Clone, Debug)]
pub struct LambdaCase {
    pub tag: Tag,
    pub lambda: QuadElem,
    pub lambda_conj: QuadElem,
    pub theta: Ratio<i64>,
    pub a_order: u32,
}

impl LambdaCase {
    pub fn new(tag: Tag) -> Self {
        let d = tag.radicand();
        let lambda = QuadElem::parse(tag.lambda_text(), d).expect("built-in constant");
        let lambda_conj = lambda.conj();
        let (p, q) = tag.theta();
        let mut c = LambdaCase { tag, lambda, lambda_conj, theta: Ratio::new(p, q), a_order: 0 };
        let a = c.matrix();
        let mut acc = a.clone();
        let mut h = 1;
        while acc != Mat2::identity(d) {
            acc = acc.mul(&a);
            h += 1;
            assert!(h <= 12, "A has no small order");
        }
        c.a_order = h;
        c
    }

    pub fn d(&self) -> u32 {
        self.tag.radicand()
    }

    /// `A = [[0, -1], [1, -lambda']]`.
    pub fn matrix(&self) -> Mat2 {
        let d = self.d();
        Mat2([
            [QuadElem::zero(d), -QuadElem::one(d)],
            [QuadElem::one(d), -self.lambda_conj.clone()],
        ])
    }

    /// `A^h` for any integer `h`, reduced modulo the order of `A`.
    pub fn matrix_pow(&self, h: i64) -> Mat2 {
        let e = h.rem_euclid(self.a_order as i64);
        let a = self.matrix();
        (0..e).fold(Mat2::identity(self.d()), |acc, _| acc.mul(&a))
    }

    pub fn frame<I: Coef>(&self, n: &BigInt) -> LResult<Frame<I>> {
        Frame::new(self.d(), n, &self.lambda_conj)
    }

    /// Lattice denominator of a point: least `N` with `N z` in `Z[w]^2`.
    pub fn denominator(&self, z: &Point) -> BigInt {
        let r = Ring { d: self.d() };
        r.denominator(&z.x).lcm(&r.denominator(&z.y))
    }
}

/// `T(x, y) = (y, {-x - lambda' y})`.
pub fn step(c: &LambdaCase, z: &Point) -> Point {
    let v = -(&z.x + &(&c.lambda_conj * &z.y));
    let next = Point::new(z.y.clone(), v.frac());
    debug_assert_eq!(next, {
        // matrix form: (x, y) A + (0, ceil(x + lambda' y))
        let shift = QuadElem::from_int((&z.x + &(&c.lambda_conj * &z.y)).ceil(), c.d());
        let m = c.matrix().apply(z);
        Point::new(m.x, &m.y + &shift)
    });
    next
}

/// `T^{-1}(x, y) = ({-y - lambda' x}, x)`.
pub fn step_inv(c: &LambdaCase, z: &Point) -> Point {
    let v = -(&z.y + &(&c.lambda_conj * &z.x));
    Point::new(v.frac(), z.x.clone())
}

/// One step of the integer recursion: `(a, b) -> (b, c)` with `0 <= a + lambda b + c < 1`.
pub fn seq_step(c: &LambdaCase, (a, b): (&BigInt, &BigInt)) -> (BigInt, BigInt) {
    let lb = &c.lambda * &QuadElem::from_int(b.clone(), c.d());
    let next = -a - lb.floor();
    (b.clone(), next)
}

/// `(a, b) -> ({lambda a}, {lambda b})`.
pub fn embed(c: &LambdaCase, (a, b): (&BigInt, &BigInt)) -> Point {
    let f = |k: &BigInt| (&c.lambda * &QuadElem::from_int(k.clone(), c.d())).frac();
    Point::new(f(a), f(b))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BrutePeriod {
    Period(BigUint),
    Exceeded,
}

impl BrutePeriod {
    pub fn value(&self) -> Option<&BigUint> {
        match self {
            BrutePeriod::Period(p) => Some(p),
            BrutePeriod::Exceeded => None,
        }
    }
}

fn brute_lattice<I: Coef>(c: &LambdaCase, z: &Point, cap: u64) -> LResult<BrutePeriod> {
    let frame: Frame<I> = c.frame(&c.denominator(z))?;
    let start = frame.encode(&z.x, &z.y)?;
    let mut w: LPoint<I> = frame.step(&start)?;
    let mut k = 1u64;
    while w != start {
        if k >= cap {
            return Ok(BrutePeriod::Exceeded);
        }
        w = frame.step(&w)?;
        k += 1;
    }
    Ok(BrutePeriod::Period(BigUint::from(k)))
}

/// Minimal period by iterating until the orbit returns to `z`.
pub fn brute_period(c: &LambdaCase, z: &Point, cap: u64) -> BrutePeriod {
    assert!(z.in_torus(), "point outside [0,1)^2");
    brute_lattice::<i128>(c, z, cap)
        .or_else(|_| brute_lattice::<BigInt>(c, z, cap))
        .expect("big-integer lattice cannot overflow")
}

/// `T^k(z)` for `k >= 0`, or `T^{-k}` for negative `k`.
pub fn iterate(c: &LambdaCase, z: &Point, k: i64) -> Point {
    let run = |frame: &Frame<BigInt>| -> LResult<Point> {
        let mut w = frame.encode(&z.x, &z.y)?;
        for _ in 0..k.unsigned_abs() {
            w = if k >= 0 { frame.step(&w)? } else { frame.step_inv(&w)? };
        }
        let (x, y) = frame.decode(&w);
        Ok(Point::new(x, y))
    };
    let frame: Frame<BigInt> = c.frame(&c.denominator(z)).expect("big frame");
    run(&frame).expect("big-integer lattice cannot overflow")
}

/// The sequence `a_0 .. a_{len-1}` generated from `(a_0, a_1)`.
pub fn sequence(c: &LambdaCase, a0: &BigInt, a1: &BigInt, len: usize) -> Vec<BigInt> {
    let mut out = vec![a0.clone(), a1.clone()];
    while out.len() < len {
        let k = out.len();
        let (_, next) = seq_step(c, (&out[k - 2], &out[k - 1]));
        out.push(next);
    }
    out.truncate(len);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(s: &str, d: u32) -> Point {
        Point::parse(s, d).unwrap()
    }

    #[test]
    fn golden_step() {
        let c = LambdaCase::new(Tag::Gamma);
        assert_eq!(step(&c, &Point::origin(5)), Point::origin(5));
        let z = pt("(0, 1/gamma)", 5);
        let t = step(&c, &z);
        assert_eq!(t, pt("(1/gamma, 1/gamma^2)", 5));
        assert_eq!(step_inv(&c, &t), z);
    }

    #[test]
    fn matrix_orders() {
        let orders: Vec<u32> = Tag::ALL.iter().map(|t| LambdaCase::new(*t).a_order).collect();
        assert_eq!(orders, vec![5, 5, 8, 8, 10, 10, 12, 12]);
        let c = LambdaCase::new(Tag::Sqrt3);
        assert_eq!(c.matrix_pow(12), Mat2::identity(3));
        assert_eq!(c.matrix_pow(-1).mul(&c.matrix()), Mat2::identity(3));
    }

    #[test]
    fn sequence_and_embedding() {
        let c = LambdaCase::new(Tag::Gamma);
        let (z, o) = (BigInt::from(0), BigInt::from(1));
        assert_eq!(seq_step(&c, (&z, &o)), (BigInt::from(1), BigInt::from(-1)));
        assert_eq!(embed(&c, (&z, &o)), pt("(0, gamma-1)", 5));
    }

    #[test]
    fn brute_periods() {
        let c = LambdaCase::new(Tag::Gamma);
        let fixed = pt("(gamma^2/(gamma^2+1), gamma^2/(gamma^2+1))", 5);
        assert_eq!(brute_period(&c, &fixed, 10), BrutePeriod::Period(1u32.into()));
        assert_eq!(brute_period(&c, &pt("(0, 1/3)", 5), 100_000), BrutePeriod::Exceeded);
        let c2 = LambdaCase::new(Tag::Sqrt2);
        let z = pt("(0, 1/sqrt(2))", 2);
        assert_eq!(brute_period(&c2, &z, 100), BrutePeriod::Period(6u32.into()));
        assert_eq!(iterate(&c2, &z, 6), z);
        assert_eq!(iterate(&c2, &iterate(&c2, &z, 4), -4), z);
    }

    #[test]
    fn point_parse() {
        let p = pt("((1+1*sqrt(5))/2 - 1, 1/3)", 5);
        assert_eq!(p.x, QuadElem::gamma().recip().unwrap());
        assert!(Point::parse("(1)", 5).is_err());
        assert!(Point::parse("1, 2", 5).is_err());
    }
}
