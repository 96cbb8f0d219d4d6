use proptest::prelude::*;
use rand::SeedableRng;

use discrot::cases::CaseData;
use discrot::certify::certify_q;
use discrot::dynamics::{brute_period, iterate, Point, Tag};
use discrot::qfield::QuadElem;
use discrot::registry::case;
use discrot::renorm::{
    decide, exact_period, first_return, kappa_digits, p_membership, s_map, verify_substitution_conditions, Kind,
    PMembership,
};
use discrot::sample::{sample_cell, sample_subdomain};

fn pt(cd: &CaseData, s: &str) -> Point {
    Point::parse(s, cd.d()).unwrap()
}

fn from_v(cd: &CaseData, sub: usize, s: &str) -> Point {
    cd.subdomains[sub].vmap().invert(&pt(cd, s))
}

#[test]
fn return_times() {
    let cd = case(Tag::NegInvGamma);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let zero = cd.subdomains[0].partitions[0].index_of("0").unwrap();
    for z in sample_cell(cd, 0, 0, zero, 10, &mut rng) {
        assert_eq!(first_return(cd, &z).unwrap().steps_t, 1);
    }
    let g = case(Tag::Gamma);
    for z in sample_subdomain(g, 0, 20, &mut rng) {
        let r = first_return(g, &z).unwrap();
        assert_eq!(r.steps_t, 1);
        assert_eq!(r.point, discrot::dynamics::step(&g.lambda, &z));
    }
    let s3 = case(Tag::Sqrt3);
    let three = s3.subdomains[0].partitions[0].index_of("3").unwrap();
    for z in sample_cell(s3, 0, 0, three, 3, &mut rng) {
        assert_eq!(first_return(s3, &z).unwrap().steps_t, 7406);
    }
}

#[test]
fn p_points() {
    let g = case(Tag::Gamma);
    assert_eq!(p_membership(g, 0, &pt(g, "(0, 1/gamma)")).unwrap(), PMembership::InP);
    let u = g.scale(0, &pt(g, "(0, 1/3)"));
    assert_eq!(p_membership(g, 0, &u).unwrap(), PMembership::Hit(0));
    let s2 = case(Tag::Sqrt2);
    assert_eq!(p_membership(s2, 0, &pt(s2, "(sqrt(2)-1, sqrt(2)-1)")).unwrap(), PMembership::InP);
}

#[test]
fn s_map_examples() {
    let g = case(Tag::Gamma);
    assert_eq!(s_map(g, 0, &pt(g, "(0, 1/3)")).unwrap().next, pt(g, "(0, gamma^2/3)"));
    let s2 = case(Tag::Sqrt2);
    let z = pt(s2, "((3-sqrt(2))/4, (2*sqrt(2)-1)/4)");
    assert_eq!(s_map(s2, 0, &z).unwrap().next, pt(s2, "((3*sqrt(2)-3)/4, (3-sqrt(2))/4)"));
    let s3 = case(Tag::Sqrt3);
    let z = from_v(s3, 1, "(5/7, 3*sqrt(3)/7)");
    let next = s_map(s3, 1, &z).unwrap().next;
    let v2 = s3.subdomains[1].vmap();
    assert_eq!(v2.apply(&next), v2.apply(&z).scale(&QuadElem::parse("2+sqrt(3)", 3).unwrap()));
}

/// `t = V(T^s z) - V(z) A^s`, recomputed by iterating `T`.
#[test]
fn translations_recompute() {
    let cd = case(Tag::Sqrt2);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let sd = &cd.subdomains[0];
    for z in sample_subdomain(cd, 0, 30, &mut rng) {
        if p_membership(cd, 0, &z).unwrap() == PMembership::InP {
            continue;
        }
        let r = s_map(cd, 0, &z).unwrap();
        let ts = iterate(&cd.lambda, &z, r.s);
        assert_eq!(ts, sd.scaling.scale(&r.next));
        let want = sd.vmap().apply(&ts).sub(&cd.lambda.matrix_pow(r.s).apply(&sd.vmap().apply(&z)));
        assert_eq!(r.t, want);
    }
}

#[test]
fn printed_translations_neg_sqrt3() {
    let cd = case(Tag::NegSqrt3);
    let v = decide(cd, &from_v(cd, 0, "(2/7, sqrt(3)/7 + 1/7)")).unwrap();
    let want = [("(-3+sqrt(3), -2+2*sqrt(3))", 3), ("(1, 0)", 11), ("(-1, sqrt(3)-1)", 5)];
    for (rec, (t, s)) in v.trajectory.iter().zip(want) {
        assert_eq!(rec.t, pt(cd, t));
        assert_eq!(rec.s.rem_euclid(12), s);
    }
}

#[test]
fn printed_translations_gamma() {
    let cd = case(Tag::Gamma);
    let v = decide(cd, &pt(cd, "(0, gamma^2/3)")).unwrap();
    for rec in &v.trajectory[..2] {
        assert_eq!(rec.t, pt(cd, "(0, -1/gamma)"));
        assert_eq!(rec.s.rem_euclid(5), 0);
    }
}

#[test]
fn decide_examples() {
    let g = case(Tag::Gamma);
    let v = decide(g, &pt(g, "(0, 1/3)")).unwrap();
    assert_eq!((v.kind, v.cycle_len), (Kind::Aperiodic, Some(4)));
    let ig = case(Tag::InvGamma);
    let v = decide(ig, &pt(ig, "(1/4, 1/(4*gamma^3))")).unwrap();
    assert_eq!((v.kind, v.cycle_len), (Kind::Aperiodic, Some(3)));
    let ns2 = case(Tag::NegSqrt2);
    assert_eq!(decide(ns2, &pt(ns2, "(3/4, (5-sqrt(2))/4)")).unwrap().kind, Kind::Aperiodic);
    // every candidate of the half-integer lattice, and a window of it
    assert!(certify_q(ns2, 2).unwrap().aperiodic().next().is_none());
    for a in 0..2 {
        for b in -3..=3 {
            for c in 0..2 {
                for e in -3..=3 {
                    let x = QuadElem::new(a, b, 2, 2).unwrap().frac();
                    let y = QuadElem::new(c, e, 2, 2).unwrap().frac();
                    assert!(decide(ns2, &Point::new(x, y)).unwrap().is_periodic());
                }
            }
        }
    }
    for t in Tag::ALL {
        let cd = case(t);
        assert_eq!(decide(cd, &Point::origin(cd.d())).unwrap().period, Some(1u32.into()));
    }
}

#[test]
fn exact_periods() {
    let g = case(Tag::Gamma);
    let v = decide(g, &pt(g, "(gamma^2/(gamma^2+1), 1/(gamma^2+1))")).unwrap();
    let beta = g.period_rows.iter().find(|r| r.label == "centre of D_beta").unwrap();
    let v0 = decide(g, &beta.point_at(g, 0)).unwrap();
    assert_eq!(exact_period(&v0).unwrap(), 3u32.into());
    assert!(v.is_periodic());
    let s2 = case(Tag::Sqrt2);
    let v = decide(s2, &pt(s2, "(1/sqrt(2), 1/sqrt(2))")).unwrap();
    assert_eq!(exact_period(&v).unwrap(), 3u32.into());
    let ng = case(Tag::NegGamma);
    let alpha = ng.period_rows.iter().find(|r| r.label == "D_alpha").unwrap();
    assert_eq!(exact_period(&decide(ng, &alpha.point_at(ng, 0)).unwrap()).unwrap(), 210u32.into());
    assert!(exact_period(&decide(g, &pt(g, "(0, 1/3)")).unwrap()).is_err());
}

/// The residual after `n` digits is `kappa^n V(S^n R z) A^{-(s_0 + ... + s_{n-1})}`.
fn check_kappa(cd: &CaseData, z: &Point, n: usize) {
    let v = decide(cd, z).unwrap();
    let e = kappa_digits(cd, z, n).unwrap();
    assert_eq!(e.digits.len(), n);
    let sd = &cd.subdomains[v.subdomain.unwrap()];
    let (start, len) = (v.cycle_start.unwrap(), v.cycle_len.unwrap());
    let rec = |k: usize| if k < v.trajectory.len() { &v.trajectory[k] } else { &v.trajectory[start + (k - start) % len] };
    let ssum: i64 = (0..n).map(|k| rec(k).s).sum();
    let w = if n == 0 { rec(0).z.clone() } else { rec(n - 1).next.clone() };
    let kn = sd.scaling.kappa.pow(n as i64).unwrap();
    let want = cd.lambda.matrix_pow(-ssum).apply(&sd.vmap().apply(&w)).scale(&kn);
    assert_eq!(e.residual, want);
}

#[test]
fn kappa_expansions() {
    let g = case(Tag::Gamma);
    check_kappa(g, &pt(g, "(0, 1/3)"), 4);
    check_kappa(g, &pt(g, "(0, 1/3)"), 0);
    assert_eq!(kappa_digits(g, &pt(g, "(0, 1/3)"), 0).unwrap().residual, g.subdomains[0].vmap().apply(&pt(g, "(0, 1/3)")));
    let ns3 = case(Tag::NegSqrt3);
    check_kappa(ns3, &from_v(ns3, 0, "(2/7, sqrt(3)/7 + 1/7)"), 4);
    assert!(kappa_digits(g, &Point::origin(5), 3).is_err());
}

#[test]
fn audit_examples() {
    let nig = case(Tag::NegInvGamma);
    let sd = &nig.subdomains[0];
    let labels = |s: &discrot::subst::Substitution, part: usize, l: usize| {
        s.image(l).iter().map(|&i| sd.partitions[part].cells[i].label.clone()).collect::<String>()
    };
    assert_eq!(labels(&sd.morphisms[0].subst, 0, 1), "01110");
    let s3 = &case(Tag::Sqrt3).subdomains[1];
    assert_eq!(s3.partitions[0].cells[s3.morphisms[0].subst.image(2)[0]].label, "0");
    let ns3 = &case(Tag::NegSqrt3).subdomains[0];
    let img: Vec<_> = ns3.morphisms[0].subst.image(0).iter().map(|&i| ns3.partitions[0].cells[i].label.as_str()).collect();
    assert_eq!(img, ["0", "2", "0"]);
    for t in [Tag::NegInvGamma, Tag::Sqrt2, Tag::NegSqrt2] {
        for r in verify_substitution_conditions(case(t), 0, 20, 3).unwrap() {
            assert!(r.passed(), "{t:?}: {:?}", r.violations);
        }
    }
}

/// Aperiodic cycles avoid `P`, periodic verdicts have positive periods.
#[test]
fn verdict_invariants() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    for t in Tag::ALL {
        let cd = case(t);
        for _ in 0..25 {
            let z = discrot::sample::rational_point(cd.d(), 9, &mut rng);
            let v = decide(cd, &z).unwrap();
            match v.kind {
                Kind::Periodic => {
                    let p = v.period.clone().unwrap();
                    assert!(p >= 1u32.into());
                    if let Some(b) = brute_period(&cd.lambda, &z, 200_000).value() {
                        assert_eq!(*b, p);
                    }
                }
                Kind::Aperiodic => {
                    let sub = v.subdomain.unwrap();
                    for c in v.s_cycle() {
                        assert_ne!(p_membership(cd, sub, &c).unwrap(), PMembership::InP);
                    }
                }
            }
        }
    }
}

fn lattice_point(d: u32) -> impl Strategy<Value = Point> {
    let c = (-30i64..30, -30i64..30).prop_map(move |(a, b)| {
        let w = discrot::certify::ring_generator(d);
        (&(&QuadElem::from_int(a, d) + &(&w * &QuadElem::from_int(b, d))) * &QuadElem::from_ratio(1, 7, d)).frac()
    });
    (c.clone(), c).prop_map(|(x, y)| Point::new(x, y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// The S orbit of a field point recurs or reaches P within the budget.
    #[test]
    fn eventually_periodic((t, z) in proptest::sample::select(Tag::ALL.to_vec())
        .prop_flat_map(|t| (Just(t), lattice_point(t.radicand())))) {
        let v = decide(case(t), &z).unwrap();
        prop_assert!(v.is_periodic() || v.cycle_len.unwrap() >= 1);
    }
}
