use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use discrot::cases::CaseData;
use discrot::certify::{certify_q_with, scan_with, Rect};
use discrot::dynamics::{brute_period, iterate, BrutePeriod, Point, Tag};
use discrot::qfield::QuadElem;
use discrot::registry::case;
use discrot::renorm::{decide_with, DecideOptions, Kind, Verdict};
use discrot::subst::thue_morse_check;

mod render;
mod verify;

#[derive(Parser)]
#[command(name = "discrot", version, about = "Exact periodicity decisions for quadratic discretized rotations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether the orbit of a point is periodic.
    Decide {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        common: Common,
    },
    /// Check a case's tables: return times, substitutions, witnesses, periods.
    Verify {
        #[arg(long = "case")]
        tag: Tag,
        /// Random samples per cell.
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Decide every candidate point with denominator Q.
    Certify {
        #[arg(long = "case")]
        tag: Tag,
        #[arg(long)]
        q: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Classify the grid (i/Q, j/Q).
    Scan {
        #[arg(long = "case")]
        tag: Tag,
        #[arg(long)]
        q: u64,
        /// Closed-open rectangle "x0,y0,x1,y1" (exact values).
        #[arg(long)]
        region: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Minimal periods of every period-table row for n = 0..=N.
    PeriodTable {
        #[arg(long = "case")]
        tag: Tag,
        #[arg(long, default_value_t = 3)]
        n: u32,
        #[command(flatten)]
        common: Common,
    },
    /// Run lengths of the Thue-Morse word against the 010/01110 fixed point.
    ThueMorse {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[command(flatten)]
        common: Common,
    },
    /// The first N points of the orbit of a point under T.
    Orbit {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Target {
    #[arg(long = "case")]
    tag: Tag,
    /// Exact point such as "(0, 1/3)" or "(1/sqrt(2), (3-sqrt(2))/4)".
    #[arg(long)]
    point: String,
}

#[derive(Args)]
struct Common {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Step budget for brute-force cross-checks.
    #[arg(long, default_value_t = 1_000_000)]
    budget: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
    Svg,
}

/// Failures mapped to exit codes.
enum Failure {
    Usage(String),
    Check(String),
}

type Run = Result<(String, bool), Failure>;

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

fn parse_point(cd: &CaseData, text: &str) -> Result<Point, Failure> {
    let z = Point::parse(text, cd.d()).map_err(|e| usage(format!("bad point {text:?}: {e}")))?;
    if !z.in_torus() {
        return Err(usage(format!("{z} is outside [0,1)^2")));
    }
    Ok(z)
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn unsupported(f: Format) -> Failure {
    usage(format!("format {:?} is not available for this command", f.to_possible_value().unwrap().get_name()))
}

fn verdict_text(v: &Verdict) -> String {
    let mut s = String::new();
    match v.kind {
        Kind::Periodic => {
            let p = v.period.as_ref().map_or("unknown (budget)".to_string(), |p| p.to_string());
            s += &format!("periodic\nperiod: {p}\n");
        }
        Kind::Aperiodic => s += "aperiodic\n",
    }
    match v.r_steps {
        Some(r) => s += &format!("steps to D: {r}\n"),
        None => s += "never meets D\n",
    }
    if let Some(h) = &v.p_hit {
        s += &format!("reaches P at level {} in {} (T_hat period {})\n", h.level, h.point, h.hat_period);
    }
    if let (Some(start), Some(len)) = (v.cycle_start, v.cycle_len) {
        s += &format!("S cycle of length {len} after {start} steps:\n");
        for r in &v.trajectory[start..start + len] {
            s += &format!("  {}  s_hat {}  s {}  t {}\n", r.z, r.s_hat, r.s, r.t);
        }
    }
    s
}

fn opts(c: &Common) -> DecideOptions {
    DecideOptions { brute_cap: c.budget.max(DecideOptions::default().brute_cap), ..Default::default() }
}

fn run(cmd: &Command) -> Run {
    match cmd {
        Command::Decide { target, common } => {
            let cd = case(target.tag);
            let z = parse_point(cd, &target.point)?;
            let v = decide_with(cd, &z, &opts(common)).map_err(|e| Failure::Check(e.to_string()))?;
            match common.format {
                Format::Text => Ok((verdict_text(&v), true)),
                Format::Json => Ok((json(&v), true)),
                f => Err(unsupported(f)),
            }
        }
        Command::Verify { tag, samples, common } => {
            let report = verify::run(case(*tag), *samples, common.budget).map_err(|e| Failure::Check(e.to_string()))?;
            let ok = report.iter().all(|r| r.passed);
            match common.format {
                Format::Text => Ok((verify::text(&report), ok)),
                Format::Json => Ok((json(&report), ok)),
                f => Err(unsupported(f)),
            }
        }
        Command::Certify { tag, q, common } => {
            if *q == 0 {
                return Err(usage("Q must be positive"));
            }
            let c = certify_q_with(case(*tag), *q, &opts(common)).map_err(|e| Failure::Check(e.to_string()))?;
            let ok = c.delta_violations.is_empty();
            match common.format {
                Format::Json => Ok((c.to_json() + "\n", ok)),
                Format::Text => {
                    let aper = c.aperiodic().count();
                    let s = format!(
                        "case {} Q={}: {} candidates, {} aperiodic, conclusion {}\n",
                        c.case,
                        c.q,
                        c.candidates.len(),
                        aper,
                        serde_json::to_value(c.conclusion).unwrap().as_str().unwrap()
                    );
                    Ok((s, ok))
                }
                f => Err(unsupported(f)),
            }
        }
        Command::Scan { tag, q, region, common } => {
            let cd = case(*tag);
            if *q == 0 {
                return Err(usage("Q must be positive"));
            }
            let rect = match region {
                Some(r) => parse_rect(cd, r)?,
                None => Rect::unit(cd.d()),
            };
            let rows = scan_with(cd, *q, &rect, &opts(common)).map_err(|e| Failure::Check(e.to_string()))?;
            let out = match common.format {
                Format::Csv => render::csv(&rows),
                Format::Json => json(&rows),
                Format::Svg => render::svg(&rows, *q),
                Format::Text => render::text(&rows),
            };
            Ok((out, true))
        }
        Command::PeriodTable { tag, n, common } => period_table(case(*tag), *n, common),
        Command::ThueMorse { n, common } => {
            if *n == 0 {
                return Err(usage("n must be positive"));
            }
            let ok = thue_morse_check(*n);
            let verdict = if ok { "pass" } else { "fail" };
            match common.format {
                Format::Text => Ok((format!("thue-morse n={n}: {verdict}\n"), ok)),
                Format::Json => Ok((json(&serde_json::json!({ "n": n, "pass": ok })), ok)),
                f => Err(unsupported(f)),
            }
        }
        Command::Orbit { target, n, common } => {
            let cd = case(target.tag);
            let z = parse_point(cd, &target.point)?;
            let pts: Vec<Point> =
                std::iter::successors(Some(z), |w| Some(iterate(&cd.lambda, w, 1))).take(*n).collect();
            match common.format {
                Format::Text => Ok((pts.iter().enumerate().map(|(k, p)| format!("{k} {p}\n")).collect(), true)),
                Format::Csv => {
                    let body: String = pts.iter().enumerate().map(|(k, p)| format!("{k},{},{}\n", p.x, p.y)).collect();
                    Ok((format!("k,x,y\n{body}"), true))
                }
                Format::Json => Ok((json(&pts), true)),
                f => Err(unsupported(f)),
            }
        }
    }
}

fn parse_rect(cd: &CaseData, text: &str) -> Result<Rect, Failure> {
    let v: Vec<QuadElem> = text
        .split(',')
        .map(|s| QuadElem::parse(s.trim(), cd.d()).map_err(|e| usage(format!("bad region: {e}"))))
        .collect::<Result<_, _>>()?;
    let [x0, y0, x1, y1] = <[QuadElem; 4]>::try_from(v).map_err(|_| usage("region needs four values"))?;
    Ok(Rect { x0, y0, x1, y1 })
}

#[derive(serde::Serialize)]
struct TableRow {
    label: String,
    formula: String,
    n: u32,
    period: Option<String>,
    formula_value: String,
    brute: Option<String>,
    ok: bool,
}

fn period_table(cd: &CaseData, n_top: u32, common: &Common) -> Run {
    let mut rows = Vec::new();
    for row in &cd.period_rows {
        let top = if row.scaled { n_top } else { 0 };
        for n in 0..=top {
            let z = row.point_at(cd, n);
            let v = decide_with(cd, &z, &opts(common)).map_err(|e| Failure::Check(e.to_string()))?;
            let want = discrot::expr::eval_integer(&row.formula, n as i64).map_err(|e| Failure::Check(e.to_string()))?;
            let period = v.period.clone();
            let small = period.as_ref().is_some_and(|p| *p <= common.budget.into());
            let brute = if small {
                match brute_period(&cd.lambda, &z, common.budget + 1) {
                    BrutePeriod::Period(b) => Some(b),
                    BrutePeriod::Exceeded => None,
                }
            } else {
                None
            };
            let ok = period.as_ref().map(|p| p.to_string()) == Some(want.to_string())
                && (!small || brute.as_ref() == period.as_ref());
            rows.push(TableRow {
                label: row.label.clone(),
                formula: row.formula_text.clone(),
                n,
                period: period.map(|p| p.to_string()),
                formula_value: want.to_string(),
                brute: brute.map(|b| b.to_string()),
                ok,
            });
        }
    }
    let ok = rows.iter().all(|r| r.ok);
    let out = match common.format {
        Format::Json => json(&rows),
        Format::Csv => {
            let mut s = String::from("label,formula,n,period,brute,ok\n");
            for r in &rows {
                s += &format!(
                    "\"{}\",\"{}\",{},{},{},{}\n",
                    r.label,
                    r.formula,
                    r.n,
                    r.period.as_deref().unwrap_or(""),
                    r.brute.as_deref().unwrap_or(""),
                    r.ok
                );
            }
            s
        }
        Format::Text => {
            let mut s = String::new();
            let mut last = "";
            for r in &rows {
                if r.label != last {
                    s += &format!("{}  [{}]\n", r.label, r.formula);
                    last = &r.label;
                }
                let brute = r.brute.as_deref().map_or(String::new(), |b| format!("  brute {b}"));
                let mark = if r.ok { "" } else { "  MISMATCH" };
                s += &format!("  n={}  {}{brute}{mark}\n", r.n, r.period.as_deref().unwrap_or("?"));
            }
            s
        }
        f => return Err(unsupported(f)),
    };
    Ok((out, ok))
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Decide { common, .. }
        | Command::Verify { common, .. }
        | Command::Certify { common, .. }
        | Command::Scan { common, .. }
        | Command::PeriodTable { common, .. }
        | Command::ThueMorse { common, .. }
        | Command::Orbit { common, .. } => common,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = common(&cli.command);
    if let Some(t) = c.threads {
        if t == 0 || rayon::ThreadPoolBuilder::new().num_threads(t).build_global().is_err() {
            eprintln!("error: bad thread count");
            return ExitCode::from(2);
        }
    }
    match run(&cli.command) {
        Ok((text, ok)) => {
            let written = match &c.out {
                Some(path) => fs::write(path, text.as_bytes()),
                None => io::stdout().write_all(text.as_bytes()),
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Check(m)) => {
            eprintln!("failed: {m}");
            ExitCode::from(1)
        }
    }
}
