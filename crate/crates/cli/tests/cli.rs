use std::process::{Command, Output};

fn discrot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_discrot")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn decide_verdicts() {
    let o = discrot(&["decide", "--case", "gamma", "--point", "(0, 1/gamma)"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("periodic"));

    let o = discrot(&["decide", "--case", "neg-sqrt2", "--point", "(3/4, (5-sqrt(2))/4)"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("aperiodic"));
    assert!(stdout(&o).contains("S cycle of length 4"));

    let o = discrot(&["decide", "--case", "sqrt3", "--point", "(0,0)", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["kind"], "periodic");
    assert_eq!(v["period"], "1");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(discrot(&["decide", "--case", "gamma", "--point", "(1/2"]).status.code(), Some(2));
    assert_eq!(discrot(&["decide", "--case", "gamma", "--point", "(3/2, 0)"]).status.code(), Some(2));
    assert_eq!(discrot(&["decide", "--case", "pi", "--point", "(0,0)"]).status.code(), Some(2));
    assert_eq!(discrot(&["thue-morse", "--format", "svg"]).status.code(), Some(2));
}

#[test]
fn verify_isolated_return() {
    let o = discrot(&["verify", "--case", "neg-sqrt3", "--samples", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("return time 183"));
    assert!(!s.contains("FAIL"));
}

#[test]
fn period_table_rows() {
    let o = discrot(&["period-table", "--case", "inv-gamma", "--n", "2", "--format", "csv"]);
    assert!(o.status.success());
    let s = stdout(&o);
    let mu: Vec<&str> =
        s.lines().filter(|l| l.starts_with("\"D_mu\"")).map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(mu, ["7", "17", "57"]);
}

#[test]
fn scan_svg_is_byte_stable() {
    let args = ["scan", "--case", "gamma", "--q", "6", "--format", "svg", "--threads", "3"];
    let a = discrot(&args);
    let b = discrot(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let s = stdout(&a);
    assert!(s.starts_with("<svg"));
    assert_eq!(s.matches("<rect").count(), 36 + 1);
}

#[test]
fn scan_csv_and_region() {
    let o = discrot(&["scan", "--case", "gamma", "--q", "3", "--format", "csv", "--region", "0,0,1/2,1"]);
    let s = stdout(&o);
    let mut lines = s.lines();
    assert_eq!(lines.next(), Some("x,y,verdict,period"));
    assert_eq!(lines.count(), 6);
    assert!(s.contains("0,1/3,aperiodic,\n"));
}

#[test]
fn thue_morse_passes() {
    let o = discrot(&["thue-morse", "--n", "1000"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "thue-morse n=1000: pass\n");
}

#[test]
fn certify_json() {
    let dir = std::env::temp_dir().join(format!("discrot-cert-{}", std::process::id()));
    let path = dir.to_str().unwrap();
    let o = discrot(&["certify", "--case", "gamma", "--q", "1", "--format", "json", "--out", path]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&dir).unwrap()).unwrap();
    std::fs::remove_file(&dir).unwrap();
    assert_eq!(v["case"], "gamma");
    assert_eq!(v["conclusion"], "all-periodic");
    assert!(v["delta_violations"].as_array().unwrap().is_empty());
}

#[test]
fn orbit_returns() {
    let o = discrot(&["orbit", "--case", "sqrt2", "--point", "(0, 1/2)", "--n", "5", "--format", "csv"]);
    let s = stdout(&o);
    let rows: Vec<&str> = s.lines().collect();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[1], "0,0,1/2");
    assert_eq!(rows[5], "4,0,1/2");
}
