use std::path::Path;
use std::process::{Command, Output};

fn excursus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_excursus")).args(args).env("EXCURSUS_THREADS", "1").output().expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("c.csv"));
    let run = |out: &Path, seed: &str, threads: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_excursus"))
            .args(["simulate", "--spec", "bm-drift:mu=0.5", "--n", "20", "--horizon", "0.5", "--seed", seed, "--out", arg(out)])
            .env("EXCURSUS_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out).unwrap()
    };
    let first = run(&a, "42", "1");
    assert_eq!(first, run(&b, "42", "3"));
    assert_ne!(first, run(&c, "43", "1"));
    let header = String::from_utf8_lossy(&first);
    assert!(header.starts_with("path_id,t,x\n"));
}

#[test]
fn williams_table_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let o = excursus(&["williams", "--spec", "bm-drift:mu=0.5", "--n", "50", "--seed", "9", "--out", arg(p)]);
        assert!(o.status.success());
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("gamma,rho,zeta\n"));
    assert_eq!(text.lines().count(), 51);
}

#[test]
fn unknown_spec_names_the_presets() {
    let dir = tempfile::tempdir().unwrap();
    let o = excursus(&["eigen", "--spec", "geometric", "--out", arg(&dir.path().join("e.csv"))]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    for name in ["brownian", "bm-drift", "ou"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn verify_all_on_brownian_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("manifest.json");
    let o = excursus(&["verify", "all", "--spec", "brownian", "--seed", "3", "--report", arg(&report)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let checks = m["checks"].as_array().unwrap();
    assert!(checks.len() >= 6, "{} checks", checks.len());
    assert_eq!(m["passed"], true);
    assert!(checks.iter().all(|c| c["passed"].is_boolean() && c["id"].is_string()));
}

#[test]
fn failed_verdict_sets_the_exit_status() {
    // Height(0.01) is below the resolvable scale at ε = 0.01 and is refused
    let o = excursus(&["levy-verify", "--spec", "bm-drift:mu=0.5", "--n", "100", "--seed", "1", "--functional", "height:0.01"]);
    assert_eq!(o.status.code(), Some(2));
    let o = excursus(&["suite", "nightly"]);
    assert!(!o.status.success());
}

#[test]
fn tables_have_the_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let e = dir.path().join("e.csv");
    assert!(excursus(&["eigen", "--spec", "ou:theta=1", "--alpha", "0.5", "--stride", "50", "--out", arg(&e)]).status.success());
    assert!(std::fs::read_to_string(&e).unwrap().starts_with("x,g1,g2,g1_plus,g2_plus\n"));

    let f = dir.path().join("f.csv");
    assert!(excursus(&["fpt", "--spec", "brownian", "--x", "1", "--y", "0", "--tmax", "2", "--points", "4", "--out", arg(&f)]).status.success());
    let text = std::fs::read_to_string(&f).unwrap();
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    let exact = (-0.25f64).exp() / (2.0 * std::f64::consts::PI * 8.0).sqrt();
    assert!((last[1] - exact).abs() < 1e-6 * exact, "{text}");

    let (p, x) = (dir.path().join("p.csv"), dir.path().join("x.csv"));
    let o = excursus(&["simulate", "--spec", "brownian", "--n", "3", "--seed", "1", "--out", arg(&p), "--excursions", arg(&x)]);
    assert!(o.status.success());
    assert!(std::fs::read_to_string(&x).unwrap().starts_with("path_id,u,level,duration\n"));
}

#[test]
fn vervaat_round_trips_a_loop_file() {
    let dir = tempfile::tempdir().unwrap();
    let bridge = dir.path().join("bridge.csv");
    let values = [0.0, 0.4, -0.3, -0.7, 0.2, 0.0];
    let mut text = String::from("t,x\n");
    for (i, v) in values.iter().enumerate() {
        text += &format!("{},{v}\n", i as f64 / 5.0);
    }
    std::fs::write(&bridge, text).unwrap();

    let exc = dir.path().join("exc.csv");
    assert!(excursus(&["vervaat", "--direction", "fwd", "--input", arg(&bridge), "--out", arg(&exc)]).status.success());
    let back = dir.path().join("back.csv");
    // the minimum sat at step 3 of 5
    assert!(excursus(&["vervaat", "--direction", "inv", "--input", arg(&exc), "--u", "0.4", "--out", arg(&back)]).status.success());

    let read = |p: &Path| -> Vec<f64> {
        std::fs::read_to_string(p).unwrap().lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect()
    };
    let e = read(&exc);
    assert!(e.iter().all(|&v| v >= 0.0) && e[0] == 0.0 && e[5] == 0.0, "{e:?}");
    let b = read(&back);
    for (x, y) in b.iter().zip(values) {
        assert!((x - y).abs() < 1e-15, "{b:?}");
    }

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "t,x\n0,0\n0.5,1\n1,0.3\n").unwrap();
    assert_eq!(excursus(&["vervaat", "--direction", "fwd", "--input", arg(&bad), "--out", arg(&exc)]).status.code(), Some(2));
}
