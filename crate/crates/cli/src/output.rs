//! Report serialization: JSON, CSV and the summary line.

use std::fmt::Write as _;

use isospec::experiments::{ExperimentReport, Status};

/// Round-trip representation of a double: 17 significant digits.
pub fn csv_number(x: f64) -> String {
    format!("{x:.16e}")
}

/// Compact human-readable number: up to 10 significant digits, trailing
/// zeros dropped.
pub fn display_number(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let a = x.abs();
    if a != 0.0 && !(1e-4..1e7).contains(&a) {
        return format!("{x:.6e}");
    }
    let digits = if a == 0.0 { 0 } else { (9 - a.log10().floor() as i32).max(0) as usize };
    let s = format!("{x:.digits$}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.') } else { &s };
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

pub fn config_comment(report: &ExperimentReport) -> String {
    format!("# config: {}\n", serde_json::to_string(&report.config).expect("config serializes"))
}

pub fn report_json(report: &ExperimentReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// One row per replica (or per labeled estimate), preceded by a comment line
/// holding the resolved config.
pub fn replicas_csv(report: &ExperimentReport) -> String {
    let t = &report.replicas;
    let mut out = config_comment(report);
    let labeled = !t.labels.is_empty();
    let mut header: Vec<&str> = Vec::new();
    if labeled {
        header.push("label");
    }
    header.extend(t.columns.iter().map(String::as_str));
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, row) in t.rows.iter().enumerate() {
        let mut cells: Vec<String> = Vec::with_capacity(row.len() + 1);
        if labeled {
            cells.push(t.labels[i].clone());
        }
        cells.extend(row.iter().map(|&v| csv_number(v)));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn timing_json(report: &ExperimentReport, seconds: f64, workers: usize) -> String {
    let v = serde_json::json!({
        "scenario": report.scenario,
        "runtime_seconds": seconds,
        "workers": workers,
        "config": report.config,
    });
    let mut s = serde_json::to_string_pretty(&v).expect("timing serializes");
    s.push('\n');
    s
}

pub fn summary_line(report: &ExperimentReport) -> String {
    let mut s = format!("{}", report.scenario.name());
    match (&report.headline, report.headline_value()) {
        (Some(k), Some(v)) => write!(s, " {k}={}", display_number(v)).unwrap(),
        _ => s.push_str(" headline=none"),
    }
    match &report.bound {
        Some(b) => write!(s, " bound={}", display_number(b.value)).unwrap(),
        None => s.push_str(" bound=none"),
    }
    let status = match report.status {
        Status::Pass => "pass",
        Status::Fail => "fail",
        Status::Reported => "reported",
    };
    write!(s, " status={status}").unwrap();
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use isospec::experiments::{ExperimentConfig, Scenario, Table};

    #[test]
    fn numbers() {
        assert_eq!(display_number(3.5999999999999996), "3.6");
        assert_eq!(display_number(0.0625), "0.0625");
        assert_eq!(display_number(0.0), "0");
        assert_eq!(display_number(-2.5), "-2.5");
        assert_eq!(display_number(1e-9), "1.000000e-9");
        let x = 0.1 + 0.2;
        assert_eq!(csv_number(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn csv_layout() {
        let cfg = ExperimentConfig::defaults(Scenario::Bounds);
        let mut r = ExperimentReport::new(&cfg);
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![1.0, 2.0]);
        r.replicas = t;
        let csv = replicas_csv(&r);
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# config: {"));
        assert_eq!(lines[1], "a,b");
        assert_eq!(lines[2], "1.0000000000000000e0,2.0000000000000000e0");
    }
}
