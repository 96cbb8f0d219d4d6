//! Random exact sample points inside cells and domains.

use rand::Rng;

use crate::cases::{CaseData, Region};
use crate::dynamics::Point;
use crate::qfield::QuadElem;

/// `lo + (hi - lo) k / m` with random `k`, `m`.
fn between<R: Rng>(rng: &mut R, lo: &QuadElem, hi: &QuadElem) -> QuadElem {
    let m: i64 = rng.gen_range(24..=160);
    let k: i64 = rng.gen_range(1..m);
    lo + &(&(hi - lo) * &QuadElem::from_ratio(k, m, lo.d()))
}

/// A random point of the sub-domain's sampling box (given in the `V` frame),
/// forced onto the first equality of `region` if it has one.
fn candidate<R: Rng>(cd: &CaseData, sub: usize, region: &Region, rng: &mut R) -> Option<Point> {
    let sd = &cd.subdomains[sub];
    let b = &sd.sample_box;
    let w = Point::new(between(rng, &b[0], &b[1]), between(rng, &b[2], &b[3]));
    let z = sd.vmap().invert(&w);
    let Some(h) = region.equalities().first().copied() else {
        return Some(z);
    };
    if !h.py.is_zero() {
        let y = (&h.r - &(&h.px * &z.x)).try_div(&h.py).ok()?;
        Some(Point::new(z.x, y))
    } else {
        let x = h.r.try_div(&h.px).ok()?;
        Some(Point::new(x, z.y))
    }
}

/// Up to `count` random points of a cell (by rejection).
pub fn sample_cell<R: Rng>(
    cd: &CaseData,
    sub: usize,
    part: usize,
    cell: usize,
    count: usize,
    rng: &mut R,
) -> Vec<Point> {
    let sd = &cd.subdomains[sub];
    let region = &sd.partitions[part].cells[cell].region;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count * 4000 {
        if out.len() == count {
            break;
        }
        if let Some(z) = candidate(cd, sub, region, rng) {
            if sd.cell_of(part, &z) == Some(cell) && cd.in_domain(&z) == Some(sub) {
                out.push(z);
            }
        }
    }
    out
}

/// Up to `count` random points of the sub-domain.
pub fn sample_subdomain<R: Rng>(cd: &CaseData, sub: usize, count: usize, rng: &mut R) -> Vec<Point> {
    let mut out = Vec::with_capacity(count);
    let empty = Region::default();
    for _ in 0..count * 4000 {
        if out.len() == count {
            break;
        }
        if let Some(z) = candidate(cd, sub, &empty, rng) {
            if cd.in_domain(&z) == Some(sub) {
                out.push(z);
            }
        }
    }
    out
}

/// A random point of `(1/q) Z^2` in `[0,1)^2`.
pub fn rational_point<R: Rng>(d: u32, q: i64, rng: &mut R) -> Point {
    let c = |rng: &mut R| QuadElem::from_ratio(rng.gen_range(0..q), q, d);
    Point::new(c(rng), c(rng))
}
