//! Per-denominator certification: every candidate of `(1/Q) Z[lambda]^2` in
//! `D` whose conjugate image `V(z)'` lies in the `delta` box is decided.

use num_bigint::BigInt;
use rayon::prelude::*;
use serde::Serialize;

use crate::cases::CaseData;
use crate::dynamics::Point;
use crate::qfield::QuadElem;
use crate::renorm::{decide_with, DecideOptions, Kind, RenormError, Verdict};

/// Generator of `Z[lambda]` as a module over `Z`: `Z[lambda] = Z + Z w`.
pub fn ring_generator(d: u32) -> QuadElem {
    if d == 5 {
        QuadElem::gamma()
    } else {
        QuadElem::sqrt_d(d)
    }
}

fn lattice_elem(m: &BigInt, n: &BigInt, q: u64, w: &QuadElem) -> QuadElem {
    let d = w.d();
    let num = &QuadElem::from_int(m.clone(), d) + &(w * &QuadElem::from_int(n.clone(), d));
    &num * &QuadElem::from_ratio(1, q, d)
}

/// All `c = (m + n w)/q` with `0 <= c < 1` and `lo <= c' <= hi`.
fn coordinate_values(q: u64, lo: &QuadElem, hi: &QuadElem, w: &QuadElem) -> Vec<QuadElem> {
    let d = w.d();
    let qq = QuadElem::from_int(q, d);
    let wc = w.conj();
    let spread = w - &wc;
    let one = QuadElem::one(d);
    let n_lo = (&(&QuadElem::zero(d) - &(&qq * hi)) * &spread.recip().unwrap()).ceil();
    let n_hi = (&(&qq * &(&one - lo)) * &spread.recip().unwrap()).floor();
    let mut out = Vec::new();
    let mut n = n_lo;
    while n <= n_hi {
        let nf = QuadElem::from_int(n.clone(), d);
        let nw = &nf * w;
        let nwc = &nf * &wc;
        let m_lo = (-&nw).ceil().max((&(&qq * lo) - &nwc).ceil());
        let m_hi = ((&qq - &nw).ceil() - BigInt::from(1)).min((&(&qq * hi) - &nwc).floor());
        let mut m = m_lo;
        while m <= m_hi {
            out.push(lattice_elem(&m, &n, q, w));
            m += 1;
        }
        n += 1;
    }
    out
}

/// Conjugate bounds on one coordinate: `|c' (x' - v')| <= delta`.
fn conj_window(c: &QuadElem, v: &QuadElem, delta: &QuadElem) -> (QuadElem, QuadElem) {
    let r = delta * &c.conj().abs().recip().expect("nonzero scale");
    let vc = v.conj();
    (&vc - &r, &vc + &r)
}

/// Points of `(1/q) Z[lambda]^2` in sub-domain `sub` with `|V(z)'|_inf <= delta`,
/// in canonical order.
pub fn enumerate_candidates(cd: &CaseData, sub: usize, q: u64) -> Vec<Point> {
    assert!(q >= 1, "denominator must be positive");
    let sd = &cd.subdomains[sub];
    let vm = sd.vmap();
    let w = ring_generator(cd.d());
    let (xl, xh) = conj_window(&vm.c, &vm.v.x, &sd.delta);
    let (yl, yh) = conj_window(&vm.c, &vm.v.y, &sd.delta);
    let xs = coordinate_values(q, &xl, &xh, &w);
    let ys = coordinate_values(q, &yl, &yh, &w);
    let mut pts: Vec<Point> = xs
        .iter()
        .flat_map(|x| ys.iter().map(move |y| Point::new(x.clone(), y.clone())))
        .filter(|z| cd.in_domain(z) == Some(sub))
        .collect();
    pts.sort_by_key(Point::key);
    pts
}

/// `|V(z)'|_inf <= delta` on sub-domain `sub`.
pub fn within_delta(cd: &CaseData, sub: usize, z: &Point) -> bool {
    let sd = &cd.subdomains[sub];
    sd.vmap().apply(z).conj().sup_norm() <= sd.delta
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conclusion {
    AllPeriodic,
    AperiodicFound,
}

#[derive(Clone, Debug, Serialize)]
pub struct CandidateEntry {
    pub subdomain: String,
    pub point: Point,
    pub kind: Kind,
    pub period: Option<String>,
    pub r_steps: Option<u64>,
    pub p_level: Option<usize>,
    pub s_cycle: Vec<Point>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub version: String,
    pub brute_cap: u64,
    pub level_cap: usize,
    pub r_cap: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub case: String,
    pub q: u64,
    pub delta: Vec<(String, QuadElem)>,
    pub candidates: Vec<CandidateEntry>,
    pub conclusion: Conclusion,
    /// Aperiodic cycle points outside the `delta` box; non-empty means a data error.
    pub delta_violations: Vec<Point>,
    pub provenance: Provenance,
}

impl Certificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn aperiodic(&self) -> impl Iterator<Item = &CandidateEntry> {
        self.candidates.iter().filter(|c| c.kind == Kind::Aperiodic)
    }
}

fn entry(cd: &CaseData, sub: usize, z: Point, v: &Verdict) -> CandidateEntry {
    CandidateEntry {
        subdomain: cd.subdomains[sub].name.clone(),
        kind: v.kind,
        period: v.period.as_ref().map(|p| p.to_string()),
        r_steps: v.r_steps,
        p_level: v.p_hit.as_ref().map(|h| h.level),
        s_cycle: v.s_cycle(),
        point: z,
    }
}

pub fn certify_q(cd: &CaseData, q: u64) -> Result<Certificate, RenormError> {
    certify_q_with(cd, q, &DecideOptions::default())
}

pub fn certify_q_with(cd: &CaseData, q: u64, opts: &DecideOptions) -> Result<Certificate, RenormError> {
    let jobs: Vec<(usize, Point)> = (0..cd.subdomains.len())
        .flat_map(|s| enumerate_candidates(cd, s, q).into_iter().map(move |z| (s, z)))
        .collect();
    let decided: Vec<(usize, Point, Verdict)> = jobs
        .into_par_iter()
        .map(|(s, z)| decide_with(cd, &z, opts).map(|v| (s, z, v)))
        .collect::<Result<_, _>>()?;
    let mut delta_violations = Vec::new();
    let mut candidates = Vec::with_capacity(decided.len());
    for (s, z, v) in &decided {
        if let Some(vs) = v.subdomain {
            delta_violations.extend(v.s_cycle().into_iter().filter(|p| !within_delta(cd, vs, p)));
        }
        candidates.push(entry(cd, *s, z.clone(), v));
    }
    let conclusion = if candidates.iter().all(|c| c.kind == Kind::Periodic) {
        Conclusion::AllPeriodic
    } else {
        Conclusion::AperiodicFound
    };
    Ok(Certificate {
        case: cd.tag().name().to_string(),
        q,
        delta: cd.subdomains.iter().map(|s| (s.name.clone(), s.delta.clone())).collect(),
        candidates,
        conclusion,
        delta_violations,
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION").to_string(),
            brute_cap: opts.brute_cap,
            level_cap: opts.level_cap,
            r_cap: opts.r_cap,
        },
    })
}

/// Closed-open rectangle `[x0, x1) x [y0, y1)` of the torus.
#[derive(Clone, Debug)]
pub struct Rect {
    pub x0: QuadElem,
    pub y0: QuadElem,
    pub x1: QuadElem,
    pub y1: QuadElem,
}

impl Rect {
    pub fn unit(d: u32) -> Self {
        let (z, o) = (QuadElem::zero(d), QuadElem::one(d));
        Rect { x0: z.clone(), y0: z, x1: o.clone(), y1: o }
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.x0 <= p.x && p.x < self.x1 && self.y0 <= p.y && p.y < self.y1
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub point: Point,
    pub kind: Kind,
    pub period: Option<String>,
}

/// Classifies the grid `(i/q, j/q)` inside `region`, row by row.
pub fn scan_aperiodic(cd: &CaseData, q: u64, region: &Rect) -> Result<Vec<ScanRow>, RenormError> {
    scan_with(cd, q, region, &DecideOptions::default())
}

pub fn scan_with(cd: &CaseData, q: u64, region: &Rect, opts: &DecideOptions) -> Result<Vec<ScanRow>, RenormError> {
    let d = cd.d();
    let pts: Vec<Point> = (0..q)
        .flat_map(|j| (0..q).map(move |i| (i, j)))
        .map(|(i, j)| Point::new(QuadElem::from_ratio(i, q, d), QuadElem::from_ratio(j, q, d)))
        .filter(|p| region.contains(p))
        .collect();
    pts.into_par_iter()
        .map(|p| {
            let v = decide_with(cd, &p, opts)?;
            Ok(ScanRow { period: v.period.as_ref().map(|x| x.to_string()), kind: v.kind, point: p })
        })
        .collect()
}
