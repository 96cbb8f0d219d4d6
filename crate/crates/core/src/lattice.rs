//! Fixed-denominator integer coordinates for orbit iteration.
//!
//! A point with both coordinates in `(1/N) Z[w]` is stored as the pair of
//! numerators `N x, N y` in `Z[w]`, where `w = sqrt(d)` for `d = 2, 3` and
//! `w = gamma` for `d = 5`. Every map used by the library (T, its inverse,
//! the scalings) preserves such a lattice once `N` is chosen suitably, so hot
//! loops never touch rational normalization. The coefficient type is generic:
//! `i128` with overflow detection for speed, `BigInt` as the exact fallback.

use std::fmt::Debug;
use std::hash::Hash;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::qfield::{sign_surd, QuadElem};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("integer overflow in lattice arithmetic")]
pub struct Overflow;

pub type LResult<T> = Result<T, Overflow>;

/// Integer backend for lattice coordinates.
pub trait Coef: Clone + Eq + Hash + Ord + Debug + Send + Sync + 'static {
    fn from_big(b: &BigInt) -> Option<Self>;
    fn to_big(&self) -> BigInt;
    fn from_i64(v: i64) -> Self;
    fn add(&self, o: &Self) -> LResult<Self>;
    fn sub(&self, o: &Self) -> LResult<Self>;
    fn mul(&self, o: &Self) -> LResult<Self>;
    fn neg(&self) -> LResult<Self>;
    fn div_floor(&self, o: &Self) -> Self;
    fn is_zero(&self) -> bool;
    /// `floor(self * sqrt(d))`.
    fn floor_mul_sqrt(&self, d: u32) -> LResult<Self>;
    /// Sign of `a + b*sqrt(d)`.
    fn sign_surd(a: &Self, b: &Self, d: u32) -> LResult<i32>;
}

fn isqrt_u128(x: u128) -> u128 {
    let mut s = (x as f64).sqrt() as u128;
    while s.checked_mul(s).map_or(true, |sq| sq > x) {
        s -= 1;
    }
    while (s + 1).checked_mul(s + 1).is_some_and(|sq| sq <= x) {
        s += 1;
    }
    s
}

impl Coef for i128 {
    fn from_big(b: &BigInt) -> Option<Self> {
        b.to_i128()
    }
    fn to_big(&self) -> BigInt {
        BigInt::from(*self)
    }
    fn from_i64(v: i64) -> Self {
        v as i128
    }
    fn add(&self, o: &Self) -> LResult<Self> {
        self.checked_add(*o).ok_or(Overflow)
    }
    fn sub(&self, o: &Self) -> LResult<Self> {
        self.checked_sub(*o).ok_or(Overflow)
    }
    fn mul(&self, o: &Self) -> LResult<Self> {
        self.checked_mul(*o).ok_or(Overflow)
    }
    fn neg(&self) -> LResult<Self> {
        self.checked_neg().ok_or(Overflow)
    }
    fn div_floor(&self, o: &Self) -> Self {
        Integer::div_floor(self, o)
    }
    fn is_zero(&self) -> bool {
        *self == 0
    }
    fn floor_mul_sqrt(&self, d: u32) -> LResult<Self> {
        if *self == 0 {
            return Ok(0);
        }
        let sq = self.checked_mul(*self).ok_or(Overflow)?;
        let sq = (sq as u128).checked_mul(d as u128).ok_or(Overflow)?;
        let m = isqrt_u128(sq) as i128;
        Ok(if *self > 0 { m } else { -m - 1 })
    }
    fn sign_surd(a: &Self, b: &Self, d: u32) -> LResult<i32> {
        let (sa, sb) = (a.signum() as i32, b.signum() as i32);
        if sb == 0 {
            return Ok(sa);
        }
        if sa == 0 || sa == sb {
            return Ok(sb);
        }
        let lhs = a.checked_mul(*a).ok_or(Overflow)? as u128;
        let rhs = (b.checked_mul(*b).ok_or(Overflow)? as u128)
            .checked_mul(d as u128)
            .ok_or(Overflow)?;
        Ok(if lhs > rhs { sa } else { sb })
    }
}

impl Coef for BigInt {
    fn from_big(b: &BigInt) -> Option<Self> {
        Some(b.clone())
    }
    fn to_big(&self) -> BigInt {
        self.clone()
    }
    fn from_i64(v: i64) -> Self {
        BigInt::from(v)
    }
    fn add(&self, o: &Self) -> LResult<Self> {
        Ok(self + o)
    }
    fn sub(&self, o: &Self) -> LResult<Self> {
        Ok(self - o)
    }
    fn mul(&self, o: &Self) -> LResult<Self> {
        Ok(self * o)
    }
    fn neg(&self) -> LResult<Self> {
        Ok(-self)
    }
    fn div_floor(&self, o: &Self) -> Self {
        Integer::div_floor(self, o)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn floor_mul_sqrt(&self, d: u32) -> LResult<Self> {
        if Zero::is_zero(self) {
            return Ok(BigInt::zero());
        }
        let m = (self * self * BigInt::from(d)).sqrt();
        Ok(if self.is_positive() { m } else { -m - 1 })
    }
    fn sign_surd(a: &Self, b: &Self, d: u32) -> LResult<i32> {
        Ok(sign_surd(a, b, d))
    }
}

/// `a + b*w` in `Z[w]`.
#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct Zw<I> {
    pub a: I,
    pub b: I,
}

/// A point given by its numerators over the frame denominator.
#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct LPoint<I> {
    pub x: Zw<I>,
    pub y: Zw<I>,
}

/// Arithmetic in `Z[w]` for one radicand.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ring {
    pub d: u32,
}

impl Ring {
    fn golden(&self) -> bool {
        self.d == 5
    }

    pub fn zero<I: Coef>(&self) -> Zw<I> {
        Zw { a: I::from_i64(0), b: I::from_i64(0) }
    }

    pub fn int<I: Coef>(&self, v: &I) -> Zw<I> {
        Zw { a: v.clone(), b: I::from_i64(0) }
    }

    pub fn add<I: Coef>(&self, x: &Zw<I>, y: &Zw<I>) -> LResult<Zw<I>> {
        Ok(Zw { a: x.a.add(&y.a)?, b: x.b.add(&y.b)? })
    }

    pub fn sub<I: Coef>(&self, x: &Zw<I>, y: &Zw<I>) -> LResult<Zw<I>> {
        Ok(Zw { a: x.a.sub(&y.a)?, b: x.b.sub(&y.b)? })
    }

    pub fn neg<I: Coef>(&self, x: &Zw<I>) -> LResult<Zw<I>> {
        Ok(Zw { a: x.a.neg()?, b: x.b.neg()? })
    }

    pub fn mul<I: Coef>(&self, x: &Zw<I>, y: &Zw<I>) -> LResult<Zw<I>> {
        let ac = x.a.mul(&y.a)?;
        let bd = x.b.mul(&y.b)?;
        let cross = x.a.mul(&y.b)?.add(&x.b.mul(&y.a)?)?;
        if self.golden() {
            // w^2 = w + 1
            Ok(Zw { a: ac.add(&bd)?, b: cross.add(&bd)? })
        } else {
            Ok(Zw { a: ac.add(&bd.mul(&I::from_i64(self.d as i64))?)?, b: cross })
        }
    }

    pub fn scale<I: Coef>(&self, x: &Zw<I>, k: &I) -> LResult<Zw<I>> {
        Ok(Zw { a: x.a.mul(k)?, b: x.b.mul(k)? })
    }

    /// Sign of the real value of `x`.
    pub fn sign<I: Coef>(&self, x: &Zw<I>) -> LResult<i32> {
        if self.golden() {
            // a + b*gamma = ((2a + b) + b*sqrt(5)) / 2
            let two_a_b = x.a.add(&x.a)?.add(&x.b)?;
            I::sign_surd(&two_a_b, &x.b, 5)
        } else {
            I::sign_surd(&x.a, &x.b, self.d)
        }
    }

    /// `floor(x / m)` for a positive integer `m`.
    pub fn floor_div<I: Coef>(&self, x: &Zw<I>, m: &I) -> LResult<I> {
        if self.golden() {
            let num = x.a.add(&x.a)?.add(&x.b)?.add(&x.b.floor_mul_sqrt(5)?)?;
            Ok(num.div_floor(&m.add(m)?))
        } else {
            Ok(x.a.add(&x.b.floor_mul_sqrt(self.d)?)?.div_floor(m))
        }
    }

    /// Converts `m * x` to `Z[w]`, if it lies there.
    pub fn from_quad<I: Coef>(&self, x: &QuadElem, m: &BigInt) -> Option<Zw<I>> {
        let (a, b) = self.big_coords(x, m)?;
        Some(Zw { a: I::from_big(&a)?, b: I::from_big(&b)? })
    }

    fn big_coords(&self, x: &QuadElem, m: &BigInt) -> Option<(BigInt, BigInt)> {
        let (a, b) = if self.golden() {
            // sqrt(5) = 2w - 1
            ((x.a() - x.b()) * m, x.b() * m * 2)
        } else {
            (x.a() * m, x.b() * m)
        };
        let q = x.q();
        if !a.is_multiple_of(q) || !b.is_multiple_of(q) {
            return None;
        }
        Some((a / q, b / q))
    }

    /// `x / m` as a field element.
    pub fn to_quad<I: Coef>(&self, x: &Zw<I>, m: &I) -> QuadElem {
        let (a, b, m) = (x.a.to_big(), x.b.to_big(), m.to_big());
        if self.golden() {
            QuadElem::new(a * 2 + &b, b, m * 2, 5).expect("positive denominator")
        } else {
            QuadElem::new(a, b, m, self.d).expect("positive denominator")
        }
    }

    /// Least positive integer `m` with `m * x` in `Z[w]`.
    pub fn denominator(&self, x: &QuadElem) -> BigInt {
        let q = x.q();
        let (a, b) = if self.golden() {
            (x.a() - x.b(), x.b() * 2)
        } else {
            (x.a().clone(), x.b().clone())
        };
        q / q.gcd(&a.gcd(&b))
    }
}

/// One relation of a compiled linear constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Rel {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Rel {
    pub fn holds(self, sign: i32) -> bool {
        match self {
            Rel::Lt => sign < 0,
            Rel::Le => sign <= 0,
            Rel::Eq => sign == 0,
            Rel::Ne => sign != 0,
            Rel::Gt => sign > 0,
            Rel::Ge => sign >= 0,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Eq => "=",
            Rel::Ne => "!=",
            Rel::Gt => ">",
            Rel::Ge => ">=",
        }
    }
}

/// `px*x + py*y - r` compiled against a frame: sign of `P X + Q Y - R N`.
#[derive(Clone, Debug)]
pub struct LHalfPlane<I> {
    p: Zw<I>,
    q: Zw<I>,
    rn: Zw<I>,
    rel: Rel,
}

/// Region in disjunctive form, minus excluded clauses, inside the unit torus
/// when `torus` is set.
#[derive(Clone, Debug)]
pub struct LRegion<I> {
    pub any: Vec<Vec<LHalfPlane<I>>>,
    pub none: Vec<Vec<LHalfPlane<I>>>,
    pub torus: bool,
}

/// `z -> c z + o`, stored with `O = N o`.
#[derive(Clone, Debug)]
pub struct LAffine<I> {
    c: Zw<I>,
    o: Zw<I>,
    o2: Zw<I>,
}

/// A denominator together with the map constants compiled against it.
#[derive(Clone, Debug)]
pub struct Frame<I> {
    pub ring: Ring,
    pub n: I,
    n_big: BigInt,
    lam_conj: Zw<I>,
}

impl<I: Coef> Frame<I> {
    pub fn new(d: u32, n: &BigInt, lam_conj: &QuadElem) -> LResult<Self> {
        let ring = Ring { d };
        let lam_conj = ring.from_quad(lam_conj, &BigInt::from(1)).ok_or(Overflow)?;
        Ok(Frame { ring, n: I::from_big(n).ok_or(Overflow)?, n_big: n.clone(), lam_conj })
    }

    pub fn denominator(&self) -> &BigInt {
        &self.n_big
    }

    pub fn encode(&self, x: &QuadElem, y: &QuadElem) -> LResult<LPoint<I>> {
        Ok(LPoint {
            x: self.ring.from_quad(x, &self.n_big).ok_or(Overflow)?,
            y: self.ring.from_quad(y, &self.n_big).ok_or(Overflow)?,
        })
    }

    pub fn decode(&self, p: &LPoint<I>) -> (QuadElem, QuadElem) {
        (self.ring.to_quad(&p.x, &self.n), self.ring.to_quad(&p.y, &self.n))
    }

    fn reduce(&self, v: &Zw<I>) -> LResult<Zw<I>> {
        let k = self.ring.floor_div(v, &self.n)?;
        Ok(Zw { a: v.a.sub(&k.mul(&self.n)?)?, b: v.b.clone() })
    }

    /// `T(x, y) = (y, {-x - lambda' y})`.
    pub fn step(&self, p: &LPoint<I>) -> LResult<LPoint<I>> {
        let r = &self.ring;
        let v = r.sub(&r.neg(&p.x)?, &r.mul(&self.lam_conj, &p.y)?)?;
        Ok(LPoint { x: p.y.clone(), y: self.reduce(&v)? })
    }

    /// `T^{-1}(x, y) = ({-y - lambda' x}, x)`.
    pub fn step_inv(&self, p: &LPoint<I>) -> LResult<LPoint<I>> {
        let r = &self.ring;
        let v = r.sub(&r.neg(&p.y)?, &r.mul(&self.lam_conj, &p.x)?)?;
        Ok(LPoint { x: self.reduce(&v)?, y: p.x.clone() })
    }

    pub fn compile_halfplane(
        &self,
        px: &QuadElem,
        py: &QuadElem,
        r: &QuadElem,
        rel: Rel,
    ) -> LResult<LHalfPlane<I>> {
        let ring = &self.ring;
        let l = [px, py, r]
            .iter()
            .map(|c| ring.denominator(c))
            .fold(BigInt::from(1), |acc, m| acc.lcm(&m));
        let p = ring.from_quad(px, &l).ok_or(Overflow)?;
        let q = ring.from_quad(py, &l).ok_or(Overflow)?;
        let rn = ring.from_quad(r, &(&l * &self.n_big)).ok_or(Overflow)?;
        Ok(LHalfPlane { p, q, rn, rel })
    }

    pub fn halfplane_holds(&self, h: &LHalfPlane<I>, z: &LPoint<I>) -> LResult<bool> {
        let r = &self.ring;
        let v = r.sub(&r.add(&r.mul(&h.p, &z.x)?, &r.mul(&h.q, &z.y)?)?, &h.rn)?;
        Ok(h.rel.holds(r.sign(&v)?))
    }

    fn clause_holds(&self, clause: &[LHalfPlane<I>], z: &LPoint<I>) -> LResult<bool> {
        for h in clause {
            if !self.halfplane_holds(h, z)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Unit-square membership `0 <= x, y < 1`.
    pub fn in_torus(&self, z: &LPoint<I>) -> LResult<bool> {
        let r = &self.ring;
        let n = r.int(&self.n);
        for c in [&z.x, &z.y] {
            if r.sign(c)? < 0 || r.sign(&r.sub(c, &n)?)? >= 0 {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn contains(&self, region: &LRegion<I>, z: &LPoint<I>) -> LResult<bool> {
        if region.torus && !self.in_torus(z)? {
            return Ok(false);
        }
        let mut hit = region.any.is_empty();
        for clause in &region.any {
            if self.clause_holds(clause, z)? {
                hit = true;
                break;
            }
        }
        if !hit {
            return Ok(false);
        }
        for clause in &region.none {
            if self.clause_holds(clause, z)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Compiles `z -> c z + o`; `c` must be integral in `Z[w]` and `N o` too.
    pub fn compile_affine(&self, c: &QuadElem, o: (&QuadElem, &QuadElem)) -> LResult<LAffine<I>> {
        let r = &self.ring;
        Ok(LAffine {
            c: r.from_quad(c, &BigInt::from(1)).ok_or(Overflow)?,
            o: r.from_quad(o.0, &self.n_big).ok_or(Overflow)?,
            o2: r.from_quad(o.1, &self.n_big).ok_or(Overflow)?,
        })
    }

    pub fn apply(&self, m: &LAffine<I>, z: &LPoint<I>) -> LResult<LPoint<I>> {
        let r = &self.ring;
        Ok(LPoint {
            x: r.add(&r.mul(&m.c, &z.x)?, &m.o)?,
            y: r.add(&r.mul(&m.c, &z.y)?, &m.o2)?,
        })
    }
}
