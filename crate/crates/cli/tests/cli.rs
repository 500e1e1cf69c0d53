use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn isospec(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_isospec"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("ISOSPEC_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn oracles_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"n": 2, "m": 20000}"#).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = isospec(&["oracles", "--config", path(&cfg), "--seed", "7", "--out", path(out)], Some(threads));
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ra = fs::read(a.join("report.json")).unwrap();
    assert_eq!(ra, fs::read(b.join("report.json")).unwrap());
    assert_eq!(fs::read(a.join("replicas.csv")).unwrap(), fs::read(b.join("replicas.csv")).unwrap());
    let report: serde_json::Value = serde_json::from_slice(&ra).unwrap();
    assert_eq!(report["config"]["rng"]["seed"], 7);
    assert!(a.join("timing.json").exists());
}

#[test]
fn bounds_prints_default_entry_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"n": 100, "d": 4, "spectrum": {"kind": "pm_split", "c": 10.0}}"#).unwrap();
    let out = dir.path().join("out");
    let o = isospec(&["bounds", "--config", path(&cfg), "--out", path(&out)], None);
    assert_eq!(o.status.code(), Some(0));
    let line = String::from_utf8(o.stdout).unwrap();
    assert!(line.starts_with("bounds "), "{line}");
    assert!(line.contains("bound=3.6 "), "{line}");
}

#[test]
fn malformed_config_exits_2_without_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, "{ n: ").unwrap();
    let out = dir.path().join("out");
    let o = isospec(&["marginals", "--config", path(&cfg), "--out", path(&out)], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let o = isospec(&["marginals", "--config", path(&dir.path().join("missing.json")), "--out", path(&out)], None);
    assert_eq!(o.status.code(), Some(2));
    let o = isospec(&["marginals", "--set", "no_such_key=1", "--out", path(&out)], None);
    assert_eq!(o.status.code(), Some(2));
    let o = isospec(&["nonsense"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn plot_data_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = isospec(
        &[
            "submatrix", "--set", "n=512", "--set", "k=8", "--set", "replicas=20", "--out", path(&out), "--plot",
            "spectral-hist", "--plot", "qq",
        ],
        None,
    );
    assert!(matches!(o.status.code(), Some(0) | Some(1)), "{}", String::from_utf8_lossy(&o.stderr));
    let hist = fs::read_to_string(out.join("plot_spectral_hist.csv")).unwrap();
    let header = hist.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.contains("semicircle_density"));
    assert_eq!(hist.lines().filter(|l| !l.starts_with('#')).count(), 51);
    assert!(out.join("plot_qq.csv").exists());

    let out2 = dir.path().join("out2");
    let o = isospec(&["bounds", "--out", path(&out2), "--plot", "ecdf"], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out2.join("plot_ecdf.csv").exists());
}

#[test]
fn failed_assertion_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = isospec(
        &["schurhorn", "--set", "n=64", "--set", "replicas=2", "--set", "ladder=[]", "--set", "tolerances.max_stat_range=[10.0,11.0]",
          "--out", path(&out)],
        None,
    );
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8(o.stdout).unwrap().contains("status=fail"));
}
