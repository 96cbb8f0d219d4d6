//! Scan output: csv, text and a static svg scatter.

use std::fmt::Write;

use discrot::certify::ScanRow;
use discrot::renorm::Kind;

const SIZE: f64 = 600.0;

fn kind(k: Kind) -> &'static str {
    match k {
        Kind::Periodic => "periodic",
        Kind::Aperiodic => "aperiodic",
    }
}

pub fn csv(rows: &[ScanRow]) -> String {
    let mut s = String::from("x,y,verdict,period\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.point.x, r.point.y, kind(r.kind), r.period.as_deref().unwrap_or(""));
    }
    s
}

pub fn text(rows: &[ScanRow]) -> String {
    let aper = rows.iter().filter(|r| r.kind == Kind::Aperiodic).count();
    let mut s = format!("{} points, {} aperiodic\n", rows.len(), aper);
    for r in rows.iter().filter(|r| r.kind == Kind::Aperiodic) {
        let _ = writeln!(s, "  {}", r.point);
    }
    s
}

/// One square per grid point, aperiodic points dark; `y` grows upwards.
pub fn svg(rows: &[ScanRow], q: u64) -> String {
    let cell = SIZE / q as f64;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         <rect width=\"{SIZE}\" height=\"{SIZE}\" fill=\"white\"/>\n"
    );
    for r in rows {
        let (x, y) = r.point.to_f64();
        let fill = match r.kind {
            Kind::Periodic => "#d8d8d8",
            Kind::Aperiodic => "#101010",
        };
        let _ = writeln!(
            s,
            "<rect x=\"{:.3}\" y=\"{:.3}\" width=\"{cell:.3}\" height=\"{cell:.3}\" fill=\"{fill}\"/>",
            x * SIZE,
            SIZE - y * SIZE - cell
        );
    }
    s.push_str("</svg>\n");
    s
}
