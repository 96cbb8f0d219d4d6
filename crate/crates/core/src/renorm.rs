//! First return map, the renormalization map `S`, the periodicity decision
//! and exact period lengths.
//!
//! All orbit work happens in a fixed-denominator lattice (see `lattice`);
//! every public entry point first tries `i128` coordinates and reruns with
//! big integers if an overflow is reported.

use std::collections::HashMap;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::Zero;
use rand::SeedableRng;
use serde::Serialize;
use thiserror::Error;

use crate::cases::{CaseData, Direction, Policy, RMembership, Region};
use crate::dynamics::{brute_period, BrutePeriod, Point};
use crate::lattice::{Coef, Frame, LAffine, LPoint, LRegion, Overflow};
use crate::qfield::QuadElem;
use crate::subst::mat_vec;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RenormError {
    #[error("iteration budget exhausted: {0}")]
    Budget(String),
    #[error("point {0} is not in the inducing domain")]
    NotInDomain(String),
    #[error("point {0} is outside [0,1)^2")]
    NotOnTorus(String),
    #[error("S is undefined on {0}: the point lies in P")]
    InP(String),
    #[error("verdict is not periodic through P")]
    NotPeriodicViaP,
    #[error("point is not aperiodic")]
    NotAperiodic,
    #[error("coordinates are not in the field of the case")]
    WrongField,
}

/// Internal error: overflow triggers the big-integer rerun.
#[derive(Debug)]
pub(crate) enum EngineError {
    Overflow,
    Fatal(RenormError),
}

impl From<Overflow> for EngineError {
    fn from(_: Overflow) -> Self {
        EngineError::Overflow
    }
}

impl From<RenormError> for EngineError {
    fn from(e: RenormError) -> Self {
        EngineError::Fatal(e)
    }
}

type EResult<T> = Result<T, EngineError>;

fn budget(what: impl Into<String>) -> EngineError {
    EngineError::Fatal(RenormError::Budget(what.into()))
}

struct CompiledSub<I> {
    region: LRegion<I>,
    u_inv: LAffine<I>,
    cells: Vec<Vec<LRegion<I>>>,
    /// Power of `U` carried by the audited chain, and its search window.
    sound: (u32, i64),
}

/// A case compiled against one lattice denominator.
pub(crate) struct Engine<'a, I: Coef> {
    pub cd: &'a CaseData,
    pub frame: Frame<I>,
    domain: LRegion<I>,
    subs: Vec<CompiledSub<I>>,
    return_cap: u64,
}

fn compile_region<I: Coef>(frame: &Frame<I>, r: &Region, torus: bool) -> Result<LRegion<I>, Overflow> {
    let clauses = |cs: &Vec<Vec<crate::cases::HalfPlane>>| {
        cs.iter()
            .map(|c| {
                c.iter()
                    .map(|h| frame.compile_halfplane(&h.px, &h.py, &h.r, h.rel))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()
    };
    Ok(LRegion { any: clauses(&r.any)?, none: clauses(&r.none)?, torus })
}

/// Offset of `z -> k (z - v) + v`, i.e. `v (1 - k)`.
fn affine_offset(k: &QuadElem, v: &Point) -> (QuadElem, QuadElem) {
    let one_minus = &QuadElem::one(k.d()) - k;
    (&v.x * &one_minus, &v.y * &one_minus)
}

/// Least denominator that holds the given points and every scaling offset.
pub(crate) fn frame_denominator(cd: &CaseData, pts: &[&Point]) -> BigInt {
    let ring = crate::lattice::Ring { d: cd.d() };
    let mut n = BigInt::from(1);
    for p in pts {
        n = n.lcm(&ring.denominator(&p.x)).lcm(&ring.denominator(&p.y));
    }
    for s in &cd.subdomains {
        n = n.lcm(&ring.denominator(&s.vmap().v.x)).lcm(&ring.denominator(&s.vmap().v.y));
    }
    n
}

pub(crate) enum SOutcome<I> {
    InP,
    Step(SStep<I>),
}

pub(crate) struct SStep<I> {
    pub s_hat: i64,
    pub s: i64,
    pub next: LPoint<I>,
}

impl<'a, I: Coef> Engine<'a, I> {
    pub fn new(cd: &'a CaseData, n: &BigInt) -> Result<Self, Overflow> {
        let frame: Frame<I> = cd.lambda.frame(n)?;
        let domain = compile_region(&frame, &cd.domain, true)?;
        let mut subs = Vec::new();
        for s in &cd.subdomains {
            let kinv = s.scaling.kappa.recip().expect("unit");
            let off = affine_offset(&kinv, &s.vmap().v);
            subs.push(CompiledSub {
                region: compile_region(&frame, &s.region, true)?,
                u_inv: frame.compile_affine(&kinv, (&off.0, &off.1))?,
                cells: s
                    .partitions
                    .iter()
                    .map(|p| {
                        p.cells
                            .iter()
                            .map(|c| compile_region(&frame, &c.region, false))
                            .collect::<Result<Vec<_>, _>>()
                    })
                    .collect::<Result<Vec<_>, _>>()?,
                sound: s.sound_step(),
            });
        }
        Ok(Engine { cd, frame, domain, subs, return_cap: 4 * cd.max_return + 1000 })
    }

    pub fn encode(&self, z: &Point) -> EResult<LPoint<I>> {
        Ok(self.frame.encode(&z.x, &z.y)?)
    }

    pub fn decode(&self, p: &LPoint<I>) -> Point {
        let (x, y) = self.frame.decode(p);
        Point::new(x, y)
    }

    pub fn in_domain(&self, p: &LPoint<I>) -> EResult<bool> {
        Ok(self.frame.contains(&self.domain, p)?)
    }

    pub fn sub_of(&self, p: &LPoint<I>) -> EResult<Option<usize>> {
        if !self.in_domain(p)? {
            return Ok(None);
        }
        for (i, s) in self.subs.iter().enumerate() {
            if self.frame.contains(&s.region, p)? {
                return Ok(Some(i));
            }
        }
        Ok(None)
    }

    pub fn in_sub(&self, sub: usize, p: &LPoint<I>) -> EResult<bool> {
        Ok(self.frame.contains(&self.subs[sub].region, p)?)
    }

    pub fn cell(&self, sub: usize, part: usize, p: &LPoint<I>) -> EResult<Option<usize>> {
        for (i, c) in self.subs[sub].cells[part].iter().enumerate() {
            if self.frame.contains(c, p)? {
                return Ok(Some(i));
            }
        }
        Ok(None)
    }

    /// `T_hat` forward with the number of `T` steps.
    pub fn first_return(&self, p: &LPoint<I>) -> EResult<(LPoint<I>, u64)> {
        let mut q = self.frame.step(p)?;
        let mut k = 1;
        while !self.in_domain(&q)? {
            if k >= self.return_cap {
                return Err(budget(format!("first return from {}", self.decode(p))));
            }
            q = self.frame.step(&q)?;
            k += 1;
        }
        Ok((q, k))
    }

    /// `T_hat^{-1}` with the number of `T^{-1}` steps.
    pub fn first_return_back(&self, p: &LPoint<I>) -> EResult<(LPoint<I>, u64)> {
        let mut q = self.frame.step_inv(p)?;
        let mut k = 1;
        while !self.in_domain(&q)? {
            if k >= self.return_cap {
                return Err(budget(format!("backward return from {}", self.decode(p))));
            }
            q = self.frame.step_inv(&q)?;
            k += 1;
        }
        Ok((q, k))
    }

    /// `T_hat^m` with the signed number of `T` steps.
    pub fn hat(&self, p: &LPoint<I>, m: i64) -> EResult<(LPoint<I>, i64)> {
        let mut q = p.clone();
        let mut s = 0i64;
        for _ in 0..m.unsigned_abs() {
            let (r, k) = if m > 0 { self.first_return(&q)? } else { self.first_return_back(&q)? };
            q = r;
            s += if m > 0 { k as i64 } else { -(k as i64) };
        }
        Ok((q, s))
    }

    pub fn unscale(&self, sub: usize, p: &LPoint<I>) -> EResult<LPoint<I>> {
        Ok(self.frame.apply(&self.subs[sub].u_inv, p)?)
    }

    pub fn unscale_pow(&self, sub: usize, p: &LPoint<I>, k: u32) -> EResult<LPoint<I>> {
        let mut q = p.clone();
        for _ in 0..k {
            q = self.unscale(sub, &q)?;
        }
        Ok(q)
    }

    /// `p` in `U^k(D_sub)`.
    pub fn in_image_pow(&self, sub: usize, p: &LPoint<I>, k: u32) -> EResult<bool> {
        self.in_sub(sub, &self.unscale_pow(sub, p, k)?)
    }

    pub fn sound_power(&self, sub: usize) -> u32 {
        self.subs[sub].sound.0
    }

    pub fn in_image(&self, sub: usize, p: &LPoint<I>) -> EResult<bool> {
        self.in_image_pow(sub, p, 1)
    }

    /// First `m` in the order `0, 1, -1, 2, -2, ...` with `T_hat^m(p)` in `U(D)`.
    pub fn p_search(&self, sub: usize, p: &LPoint<I>) -> EResult<Option<i64>> {
        if self.in_image(sub, p)? {
            return Ok(Some(0));
        }
        let max = self.cd.subdomains[sub].scheme.max_len as i64;
        let (mut fwd, mut back) = (p.clone(), p.clone());
        for m in 1..max {
            fwd = self.first_return(&fwd)?.0;
            if self.in_image(sub, &fwd)? {
                return Ok(Some(m));
            }
            back = self.first_return_back(&back)?.0;
            if self.in_image(sub, &back)? {
                return Ok(Some(-m));
            }
        }
        Ok(None)
    }

    /// Nearest hit of `U^pow(D)` walking in one direction, within `limit` steps.
    fn search(
        &self,
        sub: usize,
        p: &LPoint<I>,
        forward: bool,
        limit: i64,
        pow: u32,
    ) -> EResult<Option<(i64, LPoint<I>, i64)>> {
        let mut q = p.clone();
        let mut s = 0i64;
        for m in 1..=limit {
            let (r, k) = if forward { self.first_return(&q)? } else { self.first_return_back(&q)? };
            q = r;
            s += if forward { k as i64 } else { -(k as i64) };
            if self.in_image_pow(sub, &q, pow)? {
                return Ok(Some((m, q, s)));
            }
        }
        Ok(None)
    }

    /// One application of `S` following the case's choice of `s_hat`.
    pub fn s_step(&self, sub: usize, p: &LPoint<I>) -> EResult<SOutcome<I>> {
        self.s_step_pow(sub, p, 1)
    }

    /// `S` for the scaling `U^pow`; letter overrides only apply to `pow = 1`.
    pub fn s_step_pow(&self, sub: usize, p: &LPoint<I>, pow: u32) -> EResult<SOutcome<I>> {
        if self.in_image_pow(sub, p, pow)? {
            let next = self.unscale_pow(sub, p, pow)?;
            return Ok(SOutcome::Step(SStep { s_hat: 0, s: 0, next }));
        }
        let sd = &self.cd.subdomains[sub];
        let scheme = &sd.scheme;
        let limit = if pow == 1 { scheme.max_len as i64 - 1 } else { self.subs[sub].sound.1 };
        let search = |fwd: bool, lim: i64| self.search(sub, p, fwd, lim, pow);
        let back = search(false, limit)?;
        let finish = |(m, q, s): (i64, LPoint<I>, i64), sign: i64| -> EResult<SOutcome<I>> {
            let next = self.unscale_pow(sub, &q, pow)?;
            Ok(SOutcome::Step(SStep { s_hat: sign * m, s, next }))
        };
        let Some(back) = back else {
            return match search(true, limit)? {
                Some(f) => finish(f, 1),
                None => Ok(SOutcome::InP),
            };
        };
        let b = back.0;
        let mut wanted = None;
        if pow == 1 && !scheme.overrides.is_empty() {
            let letter = if sd.epsilon == 1 {
                self.cell(sub, scheme.partition, &self.unscale(sub, &back.1)?)?
            } else {
                match search(true, limit)? {
                    Some((_, q, _)) => self.cell(sub, scheme.partition, &self.unscale(sub, &q)?)?,
                    None => None,
                }
            };
            if let Some(l) = letter {
                wanted = scheme.overrides.get(&(l, b as u64)).copied();
            }
        }
        let wanted = match (wanted, scheme.policy) {
            (Some(d), _) => d,
            (None, Policy::Forward) => Direction::Forward,
            (None, Policy::Backward) => Direction::Backward,
            (None, Policy::Nearest { ties }) => {
                let cap = if ties == Direction::Forward { b } else { b - 1 };
                return match search(true, cap.min(limit))? {
                    Some(f) => finish(f, 1),
                    None => finish(back, -1),
                };
            }
        };
        match wanted {
            Direction::Backward => finish(back, -1),
            Direction::Forward => match search(true, limit)? {
                Some(f) => finish(f, 1),
                None => finish(back, -1),
            },
        }
    }

    /// Forward orbit until `D` is met, or `p` recurs.
    pub fn r_membership(&self, p: &LPoint<I>, cap: u64) -> EResult<(Option<LPoint<I>>, u64)> {
        let mut q = p.clone();
        let mut k = 0u64;
        loop {
            if self.in_domain(&q)? {
                return Ok((Some(q), k));
            }
            q = self.frame.step(&q)?;
            k += 1;
            if q == *p {
                return Ok((None, k));
            }
            if k >= cap {
                return Err(budget(format!("reaching D from {}", self.decode(p))));
            }
        }
    }

    /// The `T_hat` orbit of `p`: cells in every partition and return times.
    pub fn hat_orbit(&self, sub: usize, p: &LPoint<I>, cap: u64) -> EResult<HatOrbit> {
        let parts = self.cd.subdomains[sub].partitions.len();
        let mut codes: Vec<Vec<Option<usize>>> = vec![Vec::new(); parts];
        let mut times = Vec::new();
        let mut q = p.clone();
        loop {
            for (i, c) in codes.iter_mut().enumerate() {
                c.push(self.cell(sub, i, &q)?);
            }
            let (r, k) = self.first_return(&q)?;
            times.push(k);
            q = r;
            if q == *p {
                break;
            }
            if times.len() as u64 >= cap {
                return Err(budget("T_hat orbit of a P point"));
            }
        }
        Ok(HatOrbit { codes, times })
    }
}

pub(crate) struct HatOrbit {
    pub codes: Vec<Vec<Option<usize>>>,
    pub times: Vec<u64>,
}

/// Runs a computation with `i128` coordinates, falling back to big integers.
pub(crate) trait Job {
    type Out;
    fn run<I: Coef>(&self, e: &Engine<'_, I>) -> EResult<Self::Out>;
}

pub(crate) fn run_job<J: Job>(cd: &CaseData, pts: &[&Point], job: &J) -> Result<J::Out, RenormError> {
    if pts.iter().any(|p| p.d() != cd.d()) {
        return Err(RenormError::WrongField);
    }
    let n = frame_denominator(cd, pts);
    if let Ok(e) = Engine::<i128>::new(cd, &n) {
        match job.run(&e) {
            Ok(v) => return Ok(v),
            Err(EngineError::Fatal(f)) => return Err(f),
            Err(EngineError::Overflow) => {}
        }
    }
    let e = Engine::<BigInt>::new(cd, &n).expect("big-integer frame");
    match job.run(&e) {
        Ok(v) => Ok(v),
        Err(EngineError::Fatal(f)) => Err(f),
        Err(EngineError::Overflow) => unreachable!("big integers do not overflow"),
    }
}

// ---- public API ----

/// One application of `T_hat`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReturnStep {
    pub point: Point,
    pub steps_t: i64,
    /// Label of the landing cell in the scheme partition.
    pub cell: Option<String>,
}

/// One application of `S`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SRecord {
    pub z: Point,
    pub s_hat: i64,
    pub s: i64,
    pub t: Point,
    pub next: Point,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Periodic,
    Aperiodic,
}

/// Where a periodic point's renormalization stopped.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PHit {
    pub level: usize,
    pub point: Point,
    pub hat_period: usize,
    /// Power of `U` applied per `S` step on the way down.
    pub step_power: u32,
    /// Coding of the `T_hat` orbit in the scheme partition (labels).
    pub word: Vec<Option<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub kind: Kind,
    /// Exact minimal period; `None` only when it could not be derived from
    /// the substitution and brute force exceeded its budget.
    #[serde(serialize_with = "ser_opt_display")]
    pub period: Option<BigUint>,
    /// `r(z)`; `None` when the orbit never meets `D`.
    pub r_steps: Option<u64>,
    pub subdomain: Option<usize>,
    pub trajectory: Vec<SRecord>,
    pub cycle_start: Option<usize>,
    pub cycle_len: Option<usize>,
    pub p_hit: Option<PHit>,
}

fn ser_opt_display<S: serde::Serializer, T: std::fmt::Display>(
    v: &Option<T>,
    s: S,
) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.collect_str(v),
        None => s.serialize_none(),
    }
}

impl Verdict {
    pub fn is_periodic(&self) -> bool {
        self.kind == Kind::Periodic
    }

    /// Points of the eventual `S` cycle of an aperiodic verdict.
    pub fn s_cycle(&self) -> Vec<Point> {
        match (self.cycle_start, self.cycle_len) {
            (Some(a), Some(n)) => self.trajectory[a..a + n].iter().map(|r| r.z.clone()).collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DecideOptions {
    /// Cap for the brute-force fallback on periods.
    pub brute_cap: u64,
    /// Cap on the number of `S` levels.
    pub level_cap: usize,
    /// Cap on `T` steps before `D` is reached or the orbit closes.
    pub r_cap: u64,
}

impl Default for DecideOptions {
    fn default() -> Self {
        DecideOptions { brute_cap: 50_000_000, level_cap: 100_000, r_cap: 50_000_000 }
    }
}

fn check_torus(z: &Point) -> Result<(), RenormError> {
    if z.in_torus() {
        Ok(())
    } else {
        Err(RenormError::NotOnTorus(z.to_string()))
    }
}

struct FirstReturnJob<'p>(&'p Point);

impl Job for FirstReturnJob<'_> {
    type Out = ReturnStep;
    fn run<I: Coef>(&self, e: &Engine<'_, I>) -> EResult<ReturnStep> {
        let p = e.encode(self.0)?;
        if !e.in_domain(&p)? {
            return Err(RenormError::NotInDomain(self.0.to_string()).into());
        }
        let (q, k) = e.first_return(&p)?;
        let cell = match e.sub_of(&q)? {
            Some(sub) => {
                let part = e.cd.subdomains[sub].scheme.partition;
                e.cell(sub, part, &q)?
                    .map(|i| e.cd.subdomains[sub].partitions[part].cells[i].label.clone())
            }
            None => None,
        };
        Ok(ReturnStep { point: e.decode(&q), steps_t: k as i64, cell })
    }
}

/// `T_hat(z)` for `z` in `D`.
pub fn first_return(cd: &CaseData, z: &Point) -> Result<ReturnStep, RenormError> {
    check_torus(z)?;
    run_job(cd, &[z], &FirstReturnJob(z))
}

struct HatPowJob<'p>(&'p Point, i64);

impl Job for HatPowJob<'_> {
    type Out = (Point, i64);
    fn run<I: Coef>(&self, e: &Engine<'_, I>) -> EResult<(Point, i64)> {
        let p = e.encode(self.0)?;
        if !e.in_domain(&p)? {
            return Err(RenormError::NotInDomain(self.0.to_string()).into());
        }
        let (q, s) = e.hat(&p, self.1)?;
        Ok((e.decode(&q), s))
    }
}

/// `T_hat^m(z)` and the signed number of `T` steps.
pub fn hat_power(cd: &CaseData, z: &Point, m: i64) -> Result<(Point, i64), RenormError> {
    check_torus(z)?;
    run_job(cd, &[z], &HatPowJob(z, m))
}

struct RJob<'p>(&'p Point, u64);

impl Job for RJob<'_> {
    type Out = RMembership;
    fn run<I: Coef>(&self, e: &Engine<'_, I>) -> EResult<RMembership> {
        let p = e.encode(self.0)?;
        Ok(match e.r_membership(&p, self.1)? {
            (Some(q), k) => RMembership::ReachesD { steps: k, point: e.decode(&q) },
            (None, k) => RMembership::InR { period: k },
        })
    }
}

/// Whether the forward orbit of `z` meets `D`, and after how many steps.
pub fn r_membership(cd: &CaseData, z: &Point) -> Result<RMembership, RenormError> {
    check_torus(z)?;
    run_job(cd, &[z], &RJob(z, DecideOptions::default().r_cap))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PMembership {
    InP,
    Hit(i64),
}

struct PJob<'p>(usize, &'p Point);

impl Job for PJob<'_> {
    type Out = PMembership;
    fn run<I: Coef>(&self, e: &Engine<'_, I>) -> EResult<PMembership> {
        let p = e.encode(self.1)?;
        if !e.in_sub(self.0, &p)? {
            return Err(RenormError::NotInDomain(self.1.to_string()).into());
        }
        Ok(match e.p_search(self.0, &p)? {
            Some(m) => PMembership::Hit(m),
            None => PMembership::InP,
        })
    }
}

/// `P` membership by bounded search `m = 0, 1, -1, 2, -2, ...`.
pub fn p_membership(cd: &CaseData, sub: usize, z: &Point) -> Result<PMembership, RenormError> {
    check_torus(z)?;
    run_job(cd, &[z], &PJob(sub, z))
}

/// `t = V(T^s z) - V(z) A^s` where `T^s z = U^pow(next)`.
fn s_record(cd: &CaseData, sub: usize, pow: u32, z: Point, s_hat: i64, s: i64, next: Point) -> SRecord {
    let sd = &cd.subdomains[sub];
    let v = sd.vmap();
    let a = cd.lambda.matrix_pow(s);
    let up = (0..pow).fold(next.clone(), |w, _| sd.scaling.scale(&w));
    let t = v.apply(&up).sub(&a.apply(&v.apply(&z)));
    SRecord { z, s_hat, s, t, next }
}

struct SJob<'p>(usize, &'p Point);

impl Job for SJob<'_> {
    type Out = SRecord;
    fn run<I: Coef>(&self, e: &Engine<'_, I>) -> EResult<SRecord> {
        let p = e.encode(self.1)?;
        if !e.in_sub(self.0, &p)? {
            return Err(RenormError::NotInDomain(self.1.to_string()).into());
        }
        match e.s_step(self.0, &p)? {
            SOutcome::InP => Err(RenormError::InP(self.1.to_string()).into()),
            SOutcome::Step(st) => {
                Ok(s_record(e.cd, self.0, 1, self.1.clone(), st.s_hat, st.s, e.decode(&st.next)))
            }
        }
    }
}

/// One application of `S` on sub-domain `sub`.
pub fn s_map(cd: &CaseData, sub: usize, z: &Point) -> Result<SRecord, RenormError> {
    check_torus(z)?;
    run_job(cd, &[z], &SJob(sub, z))
}

struct DecideJob<'p>(&'p Point, &'p DecideOptions);

impl Job for DecideJob<'_> {
    type Out = Verdict;
    fn run<I: Coef>(&self, e: &Engine<'_, I>) -> EResult<Verdict> {
        let opts = self.1;
        let start = e.encode(self.0)?;
        let (rz, r_steps) = match e.r_membership(&start, opts.r_cap)? {
            (None, period) => {
                return Ok(Verdict {
                    kind: Kind::Periodic,
                    period: Some(BigUint::from(period)),
                    r_steps: None,
                    subdomain: None,
                    trajectory: Vec::new(),
                    cycle_start: None,
                    cycle_len: None,
                    p_hit: None,
                })
            }
            (Some(q), k) => (q, k),
        };
        let sub = e.sub_of(&rz)?.ok_or_else(|| {
            EngineError::Fatal(RenormError::NotInDomain(e.decode(&rz).to_string()))
        })?;
        let pow = e.sound_power(sub);
        let verdict = |kind, period, pow, orbit: SOrbit<I>, p_hit| {
            let trajectory = orbit
                .steps
                .iter()
                .map(|(z, st)| s_record(e.cd, sub, pow, e.decode(z), st.s_hat, st.s, e.decode(&st.next)))
                .collect();
            Verdict {
                kind,
                period,
                r_steps: Some(r_steps),
                subdomain: Some(sub),
                trajectory,
                cycle_start: orbit.cycle_start,
                cycle_len: orbit.cycle_start.map(|i| orbit.steps.len() - i),
                p_hit,
            }
        };
        let sound = s_orbit(e, sub, rz.clone(), pow, opts)?;
        if sound.cycle_start.is_some() {
            // prefer the single-step cycle when it agrees
            if pow > 1 {
                let single = s_orbit(e, sub, rz, 1, opts)?;
                if single.cycle_start.is_some() {
                    return Ok(verdict(Kind::Aperiodic, None, 1, single, None));
                }
            }
            return Ok(verdict(Kind::Aperiodic, None, pow, sound, None));
        }
        let level = sound.steps.len();
        let (period, hit) = period_from_p(e, sub, level, pow, &sound.last, opts)?;
        Ok(verdict(Kind::Periodic, period, pow, sound, Some(hit)))
    }
}

struct SOrbit<I> {
    steps: Vec<(LPoint<I>, SStep<I>)>,
    /// Set when the orbit closes up; otherwise `last` is in `P`.
    cycle_start: Option<usize>,
    last: LPoint<I>,
}

fn s_orbit<I: Coef>(
    e: &Engine<'_, I>,
    sub: usize,
    mut cur: LPoint<I>,
    pow: u32,
    opts: &DecideOptions,
) -> EResult<SOrbit<I>> {
    let mut visited: HashMap<LPoint<I>, usize> = HashMap::new();
    let mut steps = Vec::new();
    loop {
        if let Some(&i) = visited.get(&cur) {
            return Ok(SOrbit { steps, cycle_start: Some(i), last: cur });
        }
        visited.insert(cur.clone(), steps.len());
        match e.s_step_pow(sub, &cur, pow)? {
            SOutcome::InP => return Ok(SOrbit { steps, cycle_start: None, last: cur }),
            SOutcome::Step(st) => {
                let next = st.next.clone();
                steps.push((cur, st));
                cur = next;
            }
        }
        if steps.len() > opts.level_cap {
            return Err(budget("S orbit did not close"));
        }
    }
}

/// Period from the `T_hat` coding of a `P` point reached after `level` steps
/// of `U^pow`, pushed through an audited chain; brute force on `U^n(p)` when
/// the coding is unusable.
fn period_from_p<I: Coef>(
    e: &Engine<'_, I>,
    sub: usize,
    level: usize,
    pow: u32,
    p: &LPoint<I>,
    opts: &DecideOptions,
) -> EResult<(Option<BigUint>, PHit)> {
    let sd = &e.cd.subdomains[sub];
    let orbit = e.hat_orbit(sub, p, 10_000_000)?;
    let scheme_part = sd.scheme.partition;
    let word = orbit.codes[scheme_part]
        .iter()
        .map(|c| c.map(|i| sd.partitions[scheme_part].cells[i].label.clone()))
        .collect();
    let hit = PHit { level, point: e.decode(p), hat_period: orbit.times.len(), step_power: pow, word };
    let n = level * pow as usize;
    if let Some(v) = counted_period(e, sub, n, p, &orbit)? {
        return Ok((Some(v), hit));
    }
    // U^n(p) lies on the orbit of z
    let mut w = e.decode(p);
    for _ in 0..n {
        w = sd.scaling.scale(&w);
    }
    let period = match brute_period(&e.cd.lambda, &w, opts.brute_cap) {
        BrutePeriod::Period(v) => Some(v),
        BrutePeriod::Exceeded => None,
    };
    Ok((period, hit))
}

/// Counts letters of an audited chain: with `k` its power and `n = qk + r`,
/// the orbit of `U^r(p)` is pushed through the chain's incidence matrix `q` times.
fn counted_period<I: Coef>(
    e: &Engine<'_, I>,
    sub: usize,
    level: usize,
    p: &LPoint<I>,
    orbit: &HatOrbit,
) -> EResult<Option<BigUint>> {
    let sd = &e.cd.subdomains[sub];
    if level == 0 {
        return Ok(Some(orbit.times.iter().map(|&t| BigUint::from(t)).sum()));
    }
    for check in &sd.checks {
        let (src, dst) = sd.chain_partitions(&check.chain);
        if src != dst {
            continue;
        }
        let Some(tau) = sd.partitions[dst].constant_tau() else { continue };
        let k = check.power as usize;
        let (reps, rest) = (level / k, level % k);
        let owned;
        let base = if rest == 0 {
            orbit
        } else {
            let mut w = e.decode(p);
            for _ in 0..rest {
                w = sd.scaling.scale(&w);
            }
            owned = e.hat_orbit(sub, &e.encode(&w)?, 10_000_000)?;
            &owned
        };
        let Some(codes) = base.codes[src].iter().copied().collect::<Option<Vec<usize>>>() else {
            continue;
        };
        let mut v = vec![BigUint::zero(); sd.partitions[src].cells.len()];
        for c in codes {
            v[c] += 1u32;
        }
        let m = sd.chain_subst(&check.chain).incidence();
        for _ in 0..reps {
            v = mat_vec(&m, &v);
        }
        return Ok(Some(v.iter().zip(&tau).map(|(c, &t)| c * BigUint::from(t)).sum()));
    }
    Ok(None)
}

/// Periodicity decision for any torus point with coordinates in the field.
pub fn decide(cd: &CaseData, z: &Point) -> Result<Verdict, RenormError> {
    decide_with(cd, z, &DecideOptions::default())
}

pub fn decide_with(cd: &CaseData, z: &Point, opts: &DecideOptions) -> Result<Verdict, RenormError> {
    check_torus(z)?;
    run_job(cd, &[z], &DecideJob(z, opts))
}

/// The exact period carried by a periodic verdict reached through `P`.
pub fn exact_period(v: &Verdict) -> Result<BigUint, RenormError> {
    match (&v.kind, &v.p_hit, &v.period) {
        (Kind::Periodic, Some(_), Some(p)) => Ok(p.clone()),
        _ => Err(RenormError::NotPeriodicViaP),
    }
}

/// Digits `-t_k A^{-(s_0 + ... + s_k)}` of the `kappa`-expansion of `V(z)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct KappaExpansion {
    pub digits: Vec<Point>,
    /// `V(z) - sum kappa^k digit_k`.
    pub residual: Point,
    pub kappa: QuadElem,
}

pub fn kappa_digits(cd: &CaseData, z: &Point, n: usize) -> Result<KappaExpansion, RenormError> {
    let v = decide(cd, z)?;
    if v.kind != Kind::Aperiodic {
        return Err(RenormError::NotAperiodic);
    }
    let sub = v.subdomain.expect("aperiodic points reach D");
    let sd = &cd.subdomains[sub];
    let (start, len) = (v.cycle_start.unwrap(), v.cycle_len.unwrap());
    let rec = |k: usize| {
        if k < v.trajectory.len() {
            &v.trajectory[k]
        } else {
            &v.trajectory[start + (k - start) % len]
        }
    };
    let rz = match v.r_steps {
        Some(k) => crate::dynamics::iterate(&cd.lambda, z, k as i64),
        None => unreachable!(),
    };
    let vz = sd.vmap().apply(&rz);
    let mut digits = Vec::with_capacity(n);
    let mut acc = Point::origin(cd.d());
    let mut kpow = QuadElem::one(cd.d());
    let mut ssum = 0i64;
    for k in 0..n {
        let r = rec(k);
        ssum += r.s;
        let d = cd.lambda.matrix_pow(-ssum).apply(&r.t).scale(&-QuadElem::one(cd.d()));
        acc = acc.add(&d.scale(&kpow));
        kpow = &kpow * &sd.scaling.kappa;
        digits.push(d);
    }
    Ok(KappaExpansion { digits, residual: vz.sub(&acc), kappa: sd.scaling.kappa.clone() })
}

/// Outcome of auditing `U^k T_hat = T_hat^{eps^k |sigma(l)|} U^k` on samples.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SubstReport {
    pub check: String,
    pub samples: usize,
    pub per_cell: Vec<(String, usize)>,
    pub violations: Vec<String>,
}

impl SubstReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

struct AuditJob<'p> {
    sub: usize,
    chain: &'p [usize],
    power: u32,
    cell: usize,
    z: &'p Point,
}

/// `None` when the sample holds, else a description of the failure.
impl Job for AuditJob<'_> {
    type Out = Option<String>;
    fn run<I: Coef>(&self, e: &Engine<'_, I>) -> EResult<Option<String>> {
        let sd = &e.cd.subdomains[self.sub];
        let sigma = sd.chain_subst(self.chain);
        let (_, dst) = sd.chain_partitions(self.chain);
        let eps = if self.power % 2 == 1 { sd.epsilon } else { 1 };
        let image = sigma.image(self.cell);
        let m = image.len() as i64;
        let z = e.encode(self.z)?;
        let scaled = |p: &LPoint<I>| -> EResult<LPoint<I>> {
            let w = e.decode(p);
            let mut w2 = w;
            for _ in 0..self.power {
                w2 = sd.scaling.scale(&w2);
            }
            e.encode(&w2)
        };
        let uz = scaled(&z)?;
        let (tz, _) = e.first_return(&z)?;
        let expected = scaled(&tz)?;
        let mut word = Vec::with_capacity(image.len());
        let mut q = uz;
        if eps == 1 {
            word.push(e.cell(self.sub, dst, &q)?);
        }
        for j in 1..=m {
            q = if eps == 1 { e.first_return(&q)?.0 } else { e.first_return_back(&q)?.0 };
            if j < m && e.in_image_pow(self.sub, &q, self.power)? {
                return Ok(Some(format!("{}: hits U^{}(D) after {j} returns", self.z, self.power)));
            }
            if eps == 1 && j < m || eps == -1 {
                word.push(e.cell(self.sub, dst, &q)?);
            }
        }
        if eps == -1 {
            word.reverse();
        }
        if q != expected {
            return Ok(Some(format!(
                "{}: T_hat^{} U^{}(z) = {} but U^{} T_hat(z) = {}",
                self.z,
                eps * m as i32,
                self.power,
                e.decode(&q),
                self.power,
                e.decode(&expected)
            )));
        }
        let want: Vec<Option<usize>> = image.iter().map(|&l| Some(l)).collect();
        if word != want {
            let lab = |w: &[Option<usize>]| {
                w.iter()
                    .map(|c| c.map_or("?".to_string(), |i| sd.partitions[dst].cells[i].label.clone()))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            return Ok(Some(format!("{}: coded {} instead of {}", self.z, lab(&word), lab(&want))));
        }
        Ok(None)
    }
}

/// Audits a morphism chain on the given sample points of each source cell.
pub fn verify_chain(
    cd: &CaseData,
    sub: usize,
    chain: &[usize],
    samples: &[(usize, Point)],
) -> Result<SubstReport, RenormError> {
    let sd = &cd.subdomains[sub];
    let (src, _) = sd.chain_partitions(chain);
    let name = chain.iter().map(|&m| sd.morphisms[m].name.as_str()).collect::<Vec<_>>().join(".");
    let mut per_cell = vec![0usize; sd.partitions[src].cells.len()];
    let mut violations = Vec::new();
    for (cell, z) in samples {
        let job = AuditJob { sub, chain, power: chain.len() as u32, cell: *cell, z };
        if let Some(v) = run_job(cd, &[z], &job)? {
            violations.push(format!("[{}] {v}", sd.partitions[src].cells[*cell].label));
        }
        per_cell[*cell] += 1;
    }
    let per_cell = per_cell
        .into_iter()
        .enumerate()
        .map(|(i, n)| (sd.partitions[src].cells[i].label.clone(), n))
        .collect();
    Ok(SubstReport { check: name, samples: samples.len(), per_cell, violations })
}

/// Lattice denominator the engine would use for these points (diagnostics).
pub fn denominator_for(cd: &CaseData, pts: &[&Point]) -> BigInt {
    frame_denominator(cd, pts)
}

/// Audits every check chain of sub-domain `sub` on `samples` random points per
/// source cell (seeded, so reports are reproducible).
pub fn verify_substitution_conditions(
    cd: &CaseData,
    sub: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<SubstReport>, RenormError> {
    use rayon::prelude::*;
    let sd = &cd.subdomains[sub];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for check in &sd.checks {
        let (src, _) = sd.chain_partitions(&check.chain);
        let pts: Vec<(usize, Point)> = (0..sd.partitions[src].cells.len())
            .flat_map(|c| {
                crate::sample::sample_cell(cd, sub, src, c, samples, &mut rng).into_iter().map(move |z| (c, z))
            })
            .collect();
        let parts: Vec<SubstReport> = pts
            .par_chunks(8)
            .map(|chunk| verify_chain(cd, sub, &check.chain, chunk))
            .collect::<Result<_, _>>()?;
        let mut rep = SubstReport { check: check.name.clone(), ..Default::default() };
        rep.per_cell = sd.partitions[src].cells.iter().map(|c| (c.label.clone(), 0)).collect();
        for p in parts {
            rep.samples += p.samples;
            rep.violations.extend(p.violations);
            for (slot, (_, n)) in rep.per_cell.iter_mut().zip(p.per_cell) {
                slot.1 += n;
            }
        }
        let thin = rep.per_cell.iter().filter(|(_, n)| *n < samples).map(|(l, n)| format!("[{l}] only {n} samples"));
        rep.violations.extend(thin.collect::<Vec<_>>());
        out.push(rep);
    }
    Ok(out)
}

/// Observed first-return times on one cell against its declared values.
#[derive(Clone, Debug, Serialize)]
pub struct ReturnTimeRow {
    pub subdomain: String,
    pub partition: String,
    pub cell: String,
    pub declared: Vec<u64>,
    pub observed: Vec<u64>,
    pub samples: usize,
}

impl ReturnTimeRow {
    /// Every observed value is declared.
    pub fn passed(&self) -> bool {
        self.samples > 0 && self.observed.iter().all(|t| self.declared.contains(t))
    }
}

/// Samples each cell of every partition that declares return times.
pub fn verify_return_times(cd: &CaseData, samples: usize, seed: u64) -> Result<Vec<ReturnTimeRow>, RenormError> {
    use rayon::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut jobs = Vec::new();
    for (si, sd) in cd.subdomains.iter().enumerate() {
        for (pi, part) in sd.partitions.iter().enumerate() {
            for (ci, cell) in part.cells.iter().enumerate() {
                if cell.tau.is_empty() {
                    continue;
                }
                let pts = crate::sample::sample_cell(cd, si, pi, ci, samples, &mut rng);
                jobs.push((sd.name.clone(), part.name.clone(), cell.label.clone(), cell.tau.clone(), pts));
            }
        }
    }
    jobs.into_par_iter()
        .map(|(subdomain, partition, cell, declared, pts)| {
            let mut observed = pts
                .iter()
                .map(|z| first_return(cd, z).map(|r| r.steps_t as u64))
                .collect::<Result<Vec<_>, _>>()?;
            observed.sort_unstable();
            observed.dedup();
            let mut declared = declared;
            declared.sort_unstable();
            Ok(ReturnTimeRow { subdomain, partition, cell, declared, observed, samples: pts.len() })
        })
        .collect()
}

/// Least `m >= 1` with `T_hat^m(z) = z`.
pub fn hat_period(cd: &CaseData, z: &Point, cap: u64) -> Result<u64, RenormError> {
    struct HatPeriodJob<'p>(&'p Point, u64);
    impl Job for HatPeriodJob<'_> {
        type Out = u64;
        fn run<I: Coef>(&self, e: &Engine<'_, I>) -> EResult<u64> {
            let p = e.encode(self.0)?;
            if !e.in_domain(&p)? {
                return Err(RenormError::NotInDomain(self.0.to_string()).into());
            }
            let mut q = e.first_return(&p)?.0;
            let mut m = 1;
            while q != p {
                if m >= self.1 {
                    return Err(budget("T_hat period"));
                }
                q = e.first_return(&q)?.0;
                m += 1;
            }
            Ok(m)
        }
    }
    check_torus(z)?;
    run_job(cd, &[z], &HatPeriodJob(z, cap))
}
