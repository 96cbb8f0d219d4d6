use std::collections::BTreeSet;

use discrot::certify::{certify_q, enumerate_candidates, ring_generator, within_delta, Conclusion};
use discrot::dynamics::{Point, Tag};
use discrot::qfield::QuadElem;
use discrot::registry::case;
use discrot::renorm::Kind;

/// Every `(m + n w)/q` pair from a generous floating box, filtered exactly.
fn brute_candidates(t: Tag, sub: usize, q: u64) -> BTreeSet<(String, String)> {
    let cd = case(t);
    let d = cd.d();
    let w = ring_generator(d);
    let sd = &cd.subdomains[sub];
    let reach = sd.delta.to_f64() / sd.vmap().c.conj().to_f64().abs()
        + sd.vmap().v.x.conj().to_f64().abs().max(sd.vmap().v.y.conj().to_f64().abs());
    let spread = (w.to_f64() - w.conj().to_f64()).abs();
    let nmax = (q as f64 * (reach + 1.0) / spread).ceil() as i64 + 3;
    let mmax = q as i64 + nmax * (w.to_f64().abs().ceil() as i64 + 1) + 3;
    let coords: Vec<QuadElem> = (-nmax..=nmax)
        .flat_map(|n| (-mmax..=mmax).map(move |m| (m, n)))
        .map(|(m, n)| &(&QuadElem::from_int(m, d) + &(&w * &QuadElem::from_int(n, d))) * &QuadElem::from_ratio(1, q, d))
        .filter(|c| c.signum() >= 0 && c < &QuadElem::one(d))
        .collect();
    let mut out = BTreeSet::new();
    for x in &coords {
        for y in &coords {
            let z = Point::new(x.clone(), y.clone());
            if cd.in_domain(&z) == Some(sub) && within_delta(cd, sub, &z) {
                out.insert(z.key());
            }
        }
    }
    out
}

#[test]
fn enumeration_is_exhaustive() {
    for t in Tag::ALL {
        for sub in 0..case(t).subdomains.len() {
            // the sqrt3 conjugate window is several hundred units wide
            let top = if t == Tag::Sqrt3 { 1 } else { 3 };
            for q in 1..=top {
                let got: BTreeSet<_> = enumerate_candidates(case(t), sub, q).iter().map(Point::key).collect();
                assert_eq!(got, brute_candidates(t, sub, q), "{t:?} sub {sub} q {q}");
            }
        }
    }
}

#[test]
fn candidates_grow_with_multiples() {
    for t in [Tag::Gamma, Tag::Sqrt2, Tag::NegSqrt3, Tag::InvGamma] {
        let cd = case(t);
        for q in 1..=3 {
            let small: BTreeSet<_> = enumerate_candidates(cd, 0, q).iter().map(Point::key).collect();
            for k in 2..=3 {
                let big: BTreeSet<_> = enumerate_candidates(cd, 0, k * q).iter().map(Point::key).collect();
                assert!(small.is_subset(&big), "{t:?} {q} in {}", k * q);
            }
        }
    }
}

#[test]
fn certificates() {
    let g = case(Tag::Gamma);
    let c1 = certify_q(g, 1).unwrap();
    assert_eq!(c1.conclusion, Conclusion::AllPeriodic);
    assert!(c1.candidates.iter().all(|c| c.kind == Kind::Periodic));
    let c3 = certify_q(g, 3).unwrap();
    assert_eq!(c3.conclusion, Conclusion::AperiodicFound);
    assert!(c3.delta_violations.is_empty());
    for e in c3.aperiodic() {
        assert!(!e.s_cycle.is_empty());
    }
    let s2 = case(Tag::Sqrt2);
    for q in [2, 3] {
        assert_eq!(certify_q(s2, q).unwrap().conclusion, Conclusion::AllPeriodic);
    }
    let json = c3.to_json();
    assert!(json.contains("\"conclusion\": \"aperiodic-found\""));
    assert_eq!(json, certify_q(g, 3).unwrap().to_json());
}
