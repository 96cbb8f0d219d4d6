//! End-to-end acceptance run: one line per criterion, nonzero exit on failure.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use num_bigint::BigUint;
use rand::SeedableRng;

use discrot::cases::CaseData;
use discrot::certify::{certify_q, scan_aperiodic, Conclusion, Rect};
use discrot::dynamics::{brute_period, BrutePeriod, Point, Tag};
use discrot::expr::eval_integer;
use discrot::qfield::QuadElem;
use discrot::registry::case;
use discrot::renorm::{
    decide, first_return, hat_period, hat_power, verify_return_times, verify_substitution_conditions, Kind,
};
use discrot::sample::{rational_point, sample_subdomain};
use discrot::subst::thue_morse_check;

type Outcome = Result<String, String>;

const BRUTE_LIMIT: u64 = 1_000_000;

fn p(cd: &CaseData, s: &str) -> Point {
    Point::parse(s, cd.d()).unwrap()
}

/// Every period row of a case, scaled rows up to `min(n_max, 4)`.
fn check_rows(tag: Tag) -> Result<usize, String> {
    let cd = case(tag);
    let mut checked = 0;
    for row in &cd.period_rows {
        let top = if row.scaled { row.n_max.min(4) } else { 0 };
        for n in 0..=top {
            let z = row.point_at(cd, n);
            let want = eval_integer(&row.formula, n as i64).map_err(|e| e.to_string())?;
            let want = want.to_biguint().ok_or("negative formula value")?;
            let v = decide(cd, &z).map_err(|e| format!("{}: {e}", row.label))?;
            if v.kind != Kind::Periodic || v.period.as_ref() != Some(&want) {
                return Err(format!("{} {} n={n}: got {:?}, want {want}", tag.name(), row.label, v.period));
            }
            if want <= BigUint::from(BRUTE_LIMIT) {
                match brute_period(&cd.lambda, &z, BRUTE_LIMIT + 1) {
                    BrutePeriod::Period(b) if b == want => {}
                    other => return Err(format!("{} {} n={n}: brute {other:?}", tag.name(), row.label)),
                }
            }
            checked += 1;
        }
    }
    Ok(checked)
}

/// A closed form must coincide with the formula of some row for `n = 0..=3`.
fn has_row(tag: Tag, f: impl Fn(u32) -> u64) -> bool {
    case(tag).period_rows.iter().any(|r| {
        (0..=3).all(|n| {
            let k = if r.scaled { n } else { 0 };
            eval_integer(&r.formula, k as i64).ok().and_then(|v| v.to_biguint()) == Some(BigUint::from(f(n)))
        })
    })
}

fn criterion1() -> Outcome {
    let forms: [fn(u32) -> u64; 4] = [
        |n| (5 * 4u64.pow(n) + 1) / 3,
        |n| 5 * (5 * 4u64.pow(n) + 1) / 3,
        |n| (10 * 4u64.pow(n) - 1) / 3,
        |n| 5 * (10 * 4u64.pow(n) - 1) / 3,
    ];
    if let Some(i) = forms.iter().position(|f| !has_row(Tag::Gamma, f)) {
        return Err(format!("closed form #{i} has no matching row"));
    }
    let k = check_rows(Tag::Gamma)?;
    Ok(format!("{k} exact periods"))
}

fn criterion2() -> Outcome {
    let consts: [(Tag, u64); 5] =
        [(Tag::Sqrt2, 4), (Tag::NegGamma, 11), (Tag::NegGamma, 25), (Tag::NegInvGamma, 5), (Tag::NegSqrt2, 10)];
    for (t, c) in consts {
        if !has_row(t, |_| c) {
            return Err(format!("{}: no constant row {c}", t.name()));
        }
    }
    if !has_row(Tag::InvGamma, |n| (10 * 4u64.pow(n) + 11) / 3) {
        return Err("inv-gamma: no (10*4^n+11)/3 row".into());
    }
    // the constant 4 belongs to the orbit of (0, 1/2)
    let cd = case(Tag::Sqrt2);
    let v = decide(cd, &p(cd, "(0, 1/2)")).map_err(|e| e.to_string())?;
    if v.period != Some(4u32.into()) {
        return Err(format!("sqrt2 (0,1/2): {:?}", v.period));
    }
    let mut total = 0;
    for t in [Tag::NegInvGamma, Tag::Sqrt2, Tag::NegSqrt2, Tag::InvGamma, Tag::NegGamma] {
        total += check_rows(t)?;
    }
    Ok(format!("{total} exact periods over five parameters"))
}

fn criterion3() -> Outcome {
    let expected: [(Tag, &[usize]); 8] = [
        (Tag::Gamma, &[4]),
        (Tag::NegInvGamma, &[4]),
        (Tag::Sqrt2, &[4]),
        (Tag::NegSqrt2, &[4]),
        (Tag::InvGamma, &[3]),
        (Tag::NegGamma, &[4]),
        (Tag::Sqrt3, &[4, 2]),
        (Tag::NegSqrt3, &[4]),
    ];
    let mut n = 0;
    for (tag, lens) in expected {
        let cd = case(tag);
        let ws: Vec<_> = cd.subdomains.iter().flat_map(|s| &s.witnesses).collect();
        if ws.iter().map(|w| w.cycle.len()).collect::<Vec<_>>() != lens {
            return Err(format!("{}: witness lengths differ", tag.name()));
        }
        for w in ws {
            let v = decide(cd, &w.cycle[0]).map_err(|e| e.to_string())?;
            let got = v.s_cycle();
            let Some(k) = got.iter().position(|z| *z == w.cycle[0]) else {
                return Err(format!("{}: {} not on its own S cycle ({:?})", tag.name(), w.cycle[0], v.kind));
            };
            let rotated: Vec<_> = got[k..].iter().chain(&got[..k]).cloned().collect();
            if v.kind != Kind::Aperiodic || rotated != w.cycle {
                return Err(format!("{}: cycle {:?}", tag.name(), rotated.iter().map(|z| z.to_string()).collect::<Vec<_>>()));
            }
            n += 1;
        }
    }
    // the golden cycle, spelled out
    let cd = case(Tag::Gamma);
    let g2 = (&QuadElem::gamma() * &QuadElem::gamma()).to_string();
    let want: Vec<Point> = ["(0, 1/3)", &format!("(0, ({g2})/3)"), "(0, 2/3)", &format!("(0, 1/(3*({g2})))")]
        .iter()
        .map(|s| p(cd, s))
        .collect();
    if decide(cd, &want[0]).map_err(|e| e.to_string())?.s_cycle() != want {
        return Err("golden cycle mismatch".into());
    }
    Ok(format!("{n} witness cycles match"))
}

fn criterion4() -> Outcome {
    use Conclusion::*;
    let table: [(Tag, u64, Conclusion); 17] = [
        (Tag::Gamma, 1, AllPeriodic),
        (Tag::Gamma, 2, AllPeriodic),
        (Tag::Gamma, 3, AperiodicFound),
        (Tag::NegInvGamma, 1, AllPeriodic),
        (Tag::NegInvGamma, 2, AllPeriodic),
        (Tag::NegInvGamma, 3, AperiodicFound),
        (Tag::Sqrt2, 1, AllPeriodic),
        (Tag::Sqrt2, 2, AllPeriodic),
        (Tag::Sqrt2, 3, AllPeriodic),
        (Tag::NegSqrt2, 1, AllPeriodic),
        (Tag::NegSqrt2, 2, AllPeriodic),
        (Tag::NegSqrt2, 3, AllPeriodic),
        (Tag::InvGamma, 1, AllPeriodic),
        (Tag::InvGamma, 2, AllPeriodic),
        (Tag::InvGamma, 3, AllPeriodic),
        (Tag::Sqrt3, 1, AllPeriodic),
        (Tag::NegSqrt3, 1, AllPeriodic),
    ];
    for (tag, q, want) in table {
        let c = certify_q(case(tag), q).map_err(|e| e.to_string())?;
        if c.conclusion != want || !c.delta_violations.is_empty() {
            return Err(format!("{} Q={q}: {:?}", tag.name(), c.conclusion));
        }
    }
    // the Q = 3 golden certificate contains the orbit of (0, 1/3)
    let cd = case(Tag::Gamma);
    let cycle: BTreeSet<_> =
        decide(cd, &p(cd, "(0, 1/3)")).unwrap().s_cycle().iter().map(Point::key).collect();
    let c = certify_q(cd, 3).unwrap();
    if !c.aperiodic().any(|e| e.s_cycle.iter().map(Point::key).collect::<BTreeSet<_>>() == cycle) {
        return Err("gamma Q=3 misses the (0,1/3) class".into());
    }
    Ok("17 certificates as stated".into())
}

fn criterion5() -> Outcome {
    let cd = case(Tag::Sqrt3);
    let rows = verify_return_times(cd, 25, 5).map_err(|e| e.to_string())?;
    let mut seen: BTreeSet<(String, u64)> = BTreeSet::new();
    for r in &rows {
        if !r.passed() {
            return Err(format!("{} cell {}: observed {:?}, declared {:?}", r.subdomain, r.cell, r.observed, r.declared));
        }
        seen.extend(r.observed.iter().map(|&t| (r.subdomain.clone(), t)));
    }
    for s in &cd.specials {
        let t = first_return(cd, &s.point).map_err(|e| e.to_string())?.steps_t as u64;
        if t != s.return_time {
            return Err(format!("{}: return {t}, want {}", s.name, s.return_time));
        }
        seen.insert((cd.subdomains[cd.in_domain(&s.point).unwrap()].name.clone(), t));
    }
    let table: [u64; 15] =
        [1601, 1733, 3175, 3307, 3230, 7406, 9771, 3021, 3593, 9799, 11473, 7907, 19459, 15524, 18171];
    let all: BTreeSet<u64> = seen.iter().map(|(_, t)| *t).collect();
    if let Some(t) = table.iter().find(|t| !all.contains(t)) {
        return Err(format!("return time {t} never observed"));
    }
    Ok(format!("{} cells, all {} table values observed", rows.len(), table.len()))
}

fn criterion6() -> Outcome {
    let cd = case(Tag::NegSqrt3);
    let s = cd.specials.iter().find(|s| s.return_time == 183).ok_or("no isolated point")?;
    let w = cd.subdomains[0].vmap().apply(&s.point);
    if w != p(cd, "(1/2, 1-sqrt(3)/2)") {
        return Err(format!("isolated point stored as {w}"));
    }
    let t = first_return(cd, &s.point).map_err(|e| e.to_string())?.steps_t;
    let h = hat_period(cd, &s.point, 1000).map_err(|e| e.to_string())?;
    if t != 183 || h != 10 {
        return Err(format!("return {t}, T_hat period {h}"));
    }
    Ok("return time 183, T_hat period 10".into())
}

fn criterion7() -> Outcome {
    let mut total = 0;
    for tag in Tag::ALL {
        let cd = case(tag);
        for sub in 0..cd.subdomains.len() {
            for r in verify_substitution_conditions(cd, sub, 200, 11).map_err(|e| e.to_string())? {
                if !r.passed() {
                    return Err(format!("{} {}: {:?}", tag.name(), r.check, &r.violations[..r.violations.len().min(3)]));
                }
                total += r.samples;
            }
        }
    }
    Ok(format!("{total} samples, no violations"))
}

/// `U^{2k} T_hat(z) = T_hat^{|sigma^2(l)|} U^{2k}(z)` for each self-map chain of power `k`.
fn two_level_substitution(tag: Tag, rng: &mut rand_chacha::ChaCha8Rng) -> Result<usize, String> {
    let cd = case(tag);
    let mut n = 0;
    for (si, sd) in cd.subdomains.iter().enumerate() {
        for check in &sd.checks {
            let (src, dst) = sd.chain_partitions(&check.chain);
            if src != dst {
                continue;
            }
            let sigma = sd.chain_subst(&check.chain);
            let u = sd.scaling.power(2 * check.power);
            for z in sample_subdomain(cd, si, 100, rng) {
                let Some(l) = sd.cell_of(src, &z) else { continue };
                let m = sigma.expand(&[l], 2).map_err(|e| e.to_string())?.len() as i64;
                let lhs = u.scale(&first_return(cd, &z).map_err(|e| e.to_string())?.point);
                let rhs = hat_power(cd, &u.scale(&z), m).map_err(|e| e.to_string())?.0;
                if lhs != rhs {
                    return Err(format!("{} {}: {z}", tag.name(), check.name));
                }
                n += 1;
            }
        }
    }
    Ok(n)
}

/// `U^n S^n R(z)` shares the `T_hat` orbit of `R(z)` for `n <= 2`.
fn orbit_identity(tag: Tag, rng: &mut rand_chacha::ChaCha8Rng) -> Result<usize, String> {
    let cd = case(tag);
    let mut n_ok = 0;
    for _ in 0..100 {
        let z = rational_point(cd.d(), 7, rng);
        let v = decide(cd, &z).map_err(|e| e.to_string())?;
        let (Some(sub), Some(r)) = (v.subdomain, v.r_steps) else { continue };
        let sd = &cd.subdomains[sub];
        let pow = v.p_hit.as_ref().map_or(1, |h| h.step_power);
        let rz = discrot::dynamics::iterate(&cd.lambda, &z, r as i64);
        for (n, rec) in v.trajectory.iter().take(2).enumerate() {
            let target = sd.scaling.power(pow * (n as u32 + 1)).scale(&rec.next);
            if !on_hat_orbit(cd, &rz, &target, 20_000)? {
                return Err(format!("{}: U^{} S^{} R({z}) off the orbit", tag.name(), n + 1, n + 1));
            }
            n_ok += 1;
        }
    }
    Ok(n_ok)
}

fn on_hat_orbit(cd: &CaseData, start: &Point, target: &Point, cap: usize) -> Result<bool, String> {
    let (mut f, mut b) = (start.clone(), start.clone());
    for _ in 0..cap {
        if f == *target || b == *target {
            return Ok(true);
        }
        f = hat_power(cd, &f, 1).map_err(|e| e.to_string())?.0;
        b = hat_power(cd, &b, -1).map_err(|e| e.to_string())?.0;
        if f == *start {
            return Ok(false);
        }
    }
    Ok(false)
}

fn grid_agreement(tag: Tag) -> Result<(usize, usize), String> {
    let cd = case(tag);
    let (mut agree, mut skipped) = (0, 0);
    for q in 1..=12u64 {
        let pts: Vec<Point> = scan_aperiodic(cd, q, &Rect::unit(cd.d()))
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|r| r.point)
            .collect();
        for z in pts {
            let v = decide(cd, &z).map_err(|e| e.to_string())?;
            match (brute_period(&cd.lambda, &z, BRUTE_LIMIT), &v.period) {
                (BrutePeriod::Period(b), Some(p)) if b == *p => agree += 1,
                (BrutePeriod::Exceeded, _) => skipped += 1,
                (b, _) => return Err(format!("{} {z}: decide {:?} {:?}, brute {b:?}", tag.name(), v.kind, v.period)),
            }
        }
    }
    Ok((agree, skipped))
}

fn criterion8() -> Outcome {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    let (mut two_level, mut orbit, mut agree, mut skipped) = (0, 0, 0, 0);
    for tag in Tag::ALL {
        two_level += two_level_substitution(tag, &mut rng)?;
        orbit += orbit_identity(tag, &mut rng)?;
        let (a, s) = grid_agreement(tag)?;
        agree += a;
        skipped += s;
    }
    Ok(format!(
        "{two_level} two-level substitution checks, {orbit} orbit checks, {agree} grid agreements ({skipped} beyond the brute budget)"
    ))
}

fn criterion9() -> Outcome {
    if !thue_morse_check(10_000) {
        return Err("run-length property fails".into());
    }
    let sd = &case(Tag::Gamma).subdomains[0];
    let part = &sd.partitions[sd.scheme.partition];
    let sigma = &sd.morphisms[sd.scheme.levels[0]].subst;
    let w = |s: &str| s.chars().map(|c| part.index_of(&c.to_string()).unwrap()).collect::<Vec<_>>();
    let lhs = sigma.apply(&w("10")).map_err(|e| e.to_string())?;
    if lhs != [w("10"), w("110"), w("10")].concat() {
        return Err("sigma(10) != (10)(110)(10)".into());
    }
    Ok("10^4 prefix and sigma(10) = (10)(110)(10)".into())
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn criterion10() -> Outcome {
    let cert = |t| in_pool(t, || certify_q(case(Tag::Gamma), 3).unwrap().to_json());
    let scan = |t| {
        in_pool(t, || serde_json::to_string(&scan_aperiodic(case(Tag::Gamma), 9, &Rect::unit(5)).unwrap()).unwrap())
    };
    let (c1, c4) = (cert(1), cert(4));
    let (s1, s4) = (scan(1), scan(4));
    if c1 != c4 || s1 != s4 {
        return Err("outputs differ between thread counts".into());
    }
    Ok(format!("certificate {} bytes, scan {} bytes identical on 1 and 4 threads", c1.len(), s1.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("golden-mean period table", criterion1),
        ("period tables for five more parameters", criterion2),
        ("aperiodic witness cycles", criterion3),
        ("certification by denominator", criterion4),
        ("sqrt3 return-time tables", criterion5),
        ("-sqrt3 isolated point", criterion6),
        ("substitution audit, 200 samples per cell", criterion7),
        ("substitution identities and grid agreement", criterion8),
        ("Thue-Morse", criterion9),
        ("determinism across thread counts", criterion10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or(e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = t.elapsed().as_secs_f64();
        match out {
            Ok(msg) => println!("criterion {:>2} PASS  {name}: {msg} ({secs:.1}s)", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {msg} ({secs:.1}s)", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
