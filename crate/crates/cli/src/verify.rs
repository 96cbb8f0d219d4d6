//! Table-by-table checks for one case.

use std::fmt::Write;

use num_bigint::BigUint;
use serde::Serialize;

use discrot::cases::CaseData;
use discrot::certify::within_delta;
use discrot::dynamics::{brute_period, BrutePeriod, Mat2};
use discrot::expr::eval_integer;
use discrot::renorm::{
    decide, first_return, hat_period, verify_return_times, verify_substitution_conditions, Kind, RenormError,
};

const SEED: u64 = 0x5eed;

#[derive(Serialize)]
pub struct Section {
    pub name: &'static str,
    pub passed: bool,
    pub lines: Vec<String>,
}

fn section(name: &'static str, lines: Vec<(bool, String)>) -> Section {
    Section { name, passed: lines.iter().all(|(ok, _)| *ok), lines: lines.into_iter().map(|(_, l)| l).collect() }
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

pub fn run(cd: &CaseData, samples: usize, budget: u64) -> Result<Vec<Section>, RenormError> {
    let mut out = Vec::new();

    let m = cd.lambda.matrix();
    let ident = Mat2::identity(cd.d());
    let order = (1..=24).scan(ident.clone(), |acc, k| {
        *acc = acc.mul(&m);
        Some((k, *acc == ident))
    });
    let found = order.filter(|(_, id)| *id).map(|(k, _)| k).next();
    let ok = found == Some(cd.lambda.a_order);
    out.push(section("matrix order", vec![(ok, format!("{} declared {}, found {found:?}", mark(ok), cd.lambda.a_order))]));

    let rows = verify_return_times(cd, samples, SEED)?;
    out.push(section(
        "return times",
        rows.iter()
            .map(|r| {
                let ok = r.passed();
                (ok, format!("{} {}/{} {}: {:?} ({} samples)", mark(ok), r.subdomain, r.partition, r.cell, r.observed, r.samples))
            })
            .collect(),
    ));

    let mut lines = Vec::new();
    for sub in 0..cd.subdomains.len() {
        for r in verify_substitution_conditions(cd, sub, samples, SEED)? {
            let ok = r.passed();
            let mut l = format!("{} {}: {} samples", mark(ok), r.check, r.samples);
            if let Some(v) = r.violations.first() {
                let _ = write!(l, "; {} violations, first: {v}", r.violations.len());
            }
            lines.push((ok, l));
        }
    }
    out.push(section("substitutions", lines));

    let mut wl = Vec::new();
    let mut dl = Vec::new();
    for (i, sd) in cd.subdomains.iter().enumerate() {
        for w in &sd.witnesses {
            let v = decide(cd, &w.cycle[0])?;
            let got = v.s_cycle();
            let same = got.len() == w.cycle.len()
                && got.iter().position(|z| *z == w.cycle[0]).is_some_and(|k| {
                    got[k..].iter().chain(&got[..k]).eq(w.cycle.iter())
                });
            let ok = v.kind == Kind::Aperiodic && same;
            wl.push((ok, format!("{} {}: cycle of length {} from {}", mark(ok), sd.name, w.cycle.len(), w.cycle[0])));
            let inside = w.cycle.iter().all(|z| within_delta(cd, i, z));
            dl.push((inside, format!("{} {}: delta {} bounds the witness cycle", mark(inside), sd.name, sd.delta)));
        }
    }
    out.push(section("witness cycles", wl));
    out.push(section("delta constants", dl));

    let mut sl = Vec::new();
    for s in &cd.specials {
        let t = first_return(cd, &s.point)?.steps_t as u64;
        let mut ok = t == s.return_time;
        let mut l = format!("{}: return time {t}", s.name);
        if let Some(h) = s.hat_period {
            let got = hat_period(cd, &s.point, 10_000)?;
            ok &= got == h;
            let _ = write!(l, ", T_hat period {got}");
        }
        sl.push((ok, format!("{} {l}", mark(ok))));
    }
    out.push(section("special points", sl));

    let mut pl = Vec::new();
    for row in &cd.period_rows {
        let top = if row.scaled { row.n_max } else { 0 };
        for n in 0..=top {
            let z = row.point_at(cd, n);
            let v = decide(cd, &z)?;
            let want = eval_integer(&row.formula, n as i64).ok().and_then(|w| w.to_biguint());
            let mut ok = v.period.is_some() && v.period == want;
            let mut l = format!("{} n={n}: {}", row.label, v.period.as_ref().map_or("?".into(), BigUint::to_string));
            if v.period.as_ref().is_some_and(|p| *p <= BigUint::from(budget)) {
                let b = brute_period(&cd.lambda, &z, budget + 1);
                ok &= b.value() == v.period.as_ref();
                if let BrutePeriod::Period(b) = b {
                    let _ = write!(l, " (brute {b})");
                }
            }
            pl.push((ok, format!("{} {l}", mark(ok))));
        }
    }
    out.push(section("periods", pl));
    Ok(out)
}

pub fn text(report: &[Section]) -> String {
    let mut s = String::new();
    for sec in report {
        let _ = writeln!(s, "{} {}", if sec.passed { "PASS" } else { "FAIL" }, sec.name);
        for l in &sec.lines {
            let _ = writeln!(s, "  {l}");
        }
    }
    s
}
