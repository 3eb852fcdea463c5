use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn qsolab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsolab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn make(dir: &TempDir, name: &str, args: &[&str]) -> PathBuf {
    let out = path(dir, name);
    let mut full = vec!["make"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["--out", s(&out)]);
    let o = qsolab(&full);
    assert!(o.status.success(), "make failed: {}", stderr(&o));
    out
}

fn value(text: &str, key: &str) -> String {
    let prefix = format!("{key}=");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("missing {key} in\n{text}"))
        .to_string()
}

#[test]
fn validate_reports_axiom_failures() {
    let dir = TempDir::new().unwrap();
    let good = make(&dir, "d.json", &["diamond", "--dim", "3"]);
    assert_eq!(qsolab(&["validate", s(&good)]).status.code(), Some(0));

    let bad = path(&dir, "bad.json");
    fs::write(
        &bad,
        r#"{"dim": 2, "symmetric": true, "q": [[[0.5, 0.4], [1, 0]], [[1, 0], [0, 1]]]}"#,
    )
    .unwrap();
    let o = qsolab(&["validate", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("RowNotStochastic (i=1,j=1)"));

    let asym = path(&dir, "asym.json");
    fs::write(
        &asym,
        r#"{"dim": 2, "symmetric": true, "q": [[[1, 0], [1, 0]], [[0, 1], [0, 1]]]}"#,
    )
    .unwrap();
    assert_eq!(qsolab(&["validate", s(&asym)]).status.code(), Some(1));

    let broken = path(&dir, "broken.json");
    fs::write(&broken, "{\"dim\": 2,\n\"q\": [").unwrap();
    let o = qsolab(&["validate", s(&broken)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"));
}

#[test]
fn make_round_trips_through_validate() {
    let dir = TempDir::new().unwrap();
    let base = make(&dir, "r.json", &["random", "--dim", "4", "--seed", "3"]);
    let kinds: Vec<Vec<&str>> = vec![
        vec!["diamond", "--dim", "4", "--anchor", "vertex:2"],
        vec!["diamond", "--dim", "3", "--anchor", "0.2,0.3,0.5"],
        vec!["flat", "--dim", "3"],
        vec!["sharp", "--dim", "3"],
        vec!["block", "--dim", "4", "--split", "2"],
        vec!["block", "--dim", "6", "--split", "3", "--h", "1,2,3,1,1,1"],
        vec!["averaging", "--dim", "4", "--seed", "1"],
        vec!["random", "--dim", "5", "--alpha", "0.5"],
        vec!["perturb", "--in", s(&base), "--eps", "0.3"],
    ];
    for (n, args) in kinds.iter().enumerate() {
        let f = make(&dir, &format!("k{n}.json"), args);
        let o = qsolab(&["validate", s(&f)]);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    }
    assert_eq!(
        qsolab(&["make", "block", "--dim", "4", "--out", "x.json"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        qsolab(&["make", "nonsense", "--out", "x.json"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn make_diamond_uniform_columns() {
    let dir = TempDir::new().unwrap();
    let f = make(
        &dir,
        "d.json",
        &["diamond", "--dim", "3", "--anchor", "uniform"],
    );
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(f).unwrap()).unwrap();
    for plane in v["q"].as_array().unwrap() {
        for col in plane.as_array().unwrap() {
            for x in col.as_array().unwrap() {
                assert!((x.as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn classify_examples() {
    let dir = TempDir::new().unwrap();
    let diamond = make(&dir, "d.json", &["diamond", "--dim", "3"]);
    let o = qsolab(&["classify", s(&diamond), "--horizon", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(value(&out, "quasi_mixing"), "CertifiedYes");
    assert_eq!(value(&out, "certificate_eps"), "2");
    assert_eq!(value(&out, "all_window_check"), "true");

    let block = make(&dir, "b.json", &["block", "--dim", "4", "--split", "2"]);
    let out = stdout(&qsolab(&["classify", s(&block), "--horizon", "5"]));
    assert_eq!(value(&out, "quasi_mixing"), "CertifiedNo");
    assert_eq!(value(&out, "refutation_block_a"), "{1,2}");

    let base = make(
        &dir,
        "r.json",
        &["random", "--dim", "4", "--seed", "9", "--alpha", "0.2"],
    );
    let pert = make(
        &dir,
        "p.json",
        &["perturb", "--in", s(&base), "--eps", "0.1"],
    );
    let csv = path(&dir, "classify.csv");
    let out = stdout(&qsolab(&[
        "classify",
        s(&pert),
        "--horizon",
        "5",
        "--csv",
        s(&csv),
        "--empirical",
    ]));
    assert_eq!(value(&out, "quasi_mixing"), "CertifiedYes");
    assert!(value(&out, "delta1_exact").parse::<f64>().unwrap() <= 1.8 + 1e-12);
    assert!(out.contains("empirical_norm_mixing_residual="));
    let text = fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn classify_grid_mode_and_nonsymmetric_note() {
    let dir = TempDir::new().unwrap();
    let flat = make(&dir, "f.json", &["flat", "--dim", "3"]);
    let out = stdout(&qsolab(&[
        "classify",
        s(&flat),
        "--horizon",
        "3",
        "--grid",
        "20",
    ]));
    assert_ne!(value(&out, "quasi_mixing"), "CertifiedYes");
    assert!(out.contains("note=nonsymmetric"));
}

#[test]
fn metrics_examples() {
    let dir = TempDir::new().unwrap();
    let r = make(&dir, "r.json", &["random", "--dim", "3"]);
    let out = stdout(&qsolab(&["metrics", s(&r), s(&r)]));
    assert_eq!(value(&out, "hat_du"), "0");
    assert_eq!(value(&out, "du_lower"), "0");
    assert_eq!(value(&out, "quarter_certificate"), "0");

    let a = make(
        &dir,
        "a.json",
        &["diamond", "--dim", "3", "--anchor", "vertex:1"],
    );
    let b = make(
        &dir,
        "b.json",
        &["diamond", "--dim", "3", "--anchor", "vertex:2"],
    );
    let out = stdout(&qsolab(&["metrics", s(&a), s(&b)]));
    assert_eq!(value(&out, "hat_du"), "2");
    assert_eq!(value(&out, "du_interval"), "[2, 2]");

    let f = make(&dir, "f.json", &["flat", "--dim", "3"]);
    let g = make(&dir, "g.json", &["sharp", "--dim", "3"]);
    let out = stdout(&qsolab(&["metrics", s(&f), s(&g)]));
    assert_eq!(value(&out, "hat_du"), "2");
    assert!(value(&out, "du_lower").parse::<f64>().unwrap() <= 1e-12);
    assert!(out.contains("warning=d_u degenerate for nonsymmetric operators"));

    let other = make(&dir, "o.json", &["random", "--dim", "4"]);
    assert_eq!(
        qsolab(&["metrics", s(&r), s(&other)]).status.code(),
        Some(1)
    );
}

#[test]
fn perturb_stays_within_two_eps() {
    let dir = TempDir::new().unwrap();
    let r = make(&dir, "r.json", &["random", "--dim", "4", "--seed", "5"]);
    let p = make(&dir, "p.json", &["perturb", "--in", s(&r), "--eps", "0.1"]);
    let out = stdout(&qsolab(&["metrics", s(&r), s(&p)]));
    assert!(value(&out, "hat_du").parse::<f64>().unwrap() <= 0.2 + 1e-12);
}

fn decay_rows(dir: &TempDir, op: &Path, horizon: usize) -> Vec<(f64, Option<f64>)> {
    let out = path(dir, "decay.csv");
    let svg = path(dir, "decay.svg");
    let h = horizon.to_string();
    let o = qsolab(&[
        "decay",
        s(op),
        "--horizon",
        &h,
        "--starts",
        "2",
        "--out",
        s(&out),
        "--svg",
        s(&svg),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    let text = fs::read_to_string(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,delta_n_lower,bound_if_certified"));
    lines
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            (cells[1].parse().unwrap(), cells[2].parse().ok())
        })
        .collect()
}

#[test]
fn decay_examples() {
    let dir = TempDir::new().unwrap();
    let diamond = make(&dir, "d.json", &["diamond", "--dim", "3"]);
    assert!(decay_rows(&dir, &diamond, 5).iter().all(|(e, _)| *e == 0.0));

    let r = make(
        &dir,
        "r.json",
        &["random", "--dim", "3", "--seed", "2", "--alpha", "0.3"],
    );
    let p = make(&dir, "p.json", &["perturb", "--in", s(&r), "--eps", "0.2"]);
    let rows = decay_rows(&dir, &p, 20);
    for (n, (est, bound)) in rows.iter().enumerate() {
        assert!(*est <= 2.0 * 0.8f64.powi(n as i32 + 1) + 1e-9);
        assert!(bound.is_some());
    }
    for w in rows.windows(2) {
        assert!(w[1].0 <= w[0].0 + 1e-9);
    }

    let avg = make(&dir, "a.json", &["averaging", "--dim", "3", "--seed", "4"]);
    for (n, (est, _)) in decay_rows(&dir, &avg, 12).iter().enumerate() {
        assert!(*est <= 2.0f64.powi(-(n as i32)) + 1e-9);
    }
}

#[test]
fn coarsen_examples() {
    let dir = TempDir::new().unwrap();
    let r = make(&dir, "r.json", &["random", "--dim", "5"]);
    let out = path(&dir, "c.json");
    let o = qsolab(&["coarsen", s(&r), "--partition", "1-2|3-5", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&qsolab(&["validate", s(&out)])).contains("dim=2"));

    let part = path(&dir, "part.json");
    fs::write(
        &part,
        r#"{"fine_dim": 5, "blocks": [[0], [1, 2], [3, 4]], "weights": [1, 1, 2, 1, 3]}"#,
    )
    .unwrap();
    let o = qsolab(&["coarsen", s(&r), "--partition", s(&part), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&qsolab(&["validate", s(&out)])).contains("dim=3"));

    let o = qsolab(&["coarsen", s(&r), "--partition", "1-2|2-5", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn census_is_deterministic_and_thread_independent() {
    let dir = TempDir::new().unwrap();
    let a = path(&dir, "a.csv");
    let b = path(&dir, "b.csv");
    let args = |p: &Path| {
        vec![
            "census".to_string(),
            "--dim".into(),
            "4".into(),
            "--samples".into(),
            "50".into(),
            "--seed".into(),
            "11".into(),
            "--horizon".into(),
            "5".into(),
            "--out".into(),
            s(p).to_string(),
        ]
    };
    let o = Command::new(env!("CARGO_BIN_EXE_qsolab"))
        .args(args(&a))
        .output()
        .unwrap();
    assert!(o.status.success());
    let summary = stdout(&o);
    assert_eq!(value(&summary, "density_check"), "pass");
    let o = Command::new(env!("CARGO_BIN_EXE_qsolab"))
        .args(args(&b))
        .env("QSOLAB_THREADS", "1")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 51);
}

#[test]
fn census_edge_cases() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "c.csv");
    let svg = path(&dir, "c.svg");
    let o = qsolab(&[
        "census",
        "--dim",
        "1",
        "--samples",
        "10",
        "--out",
        s(&out),
        "--svg",
        s(&svg),
    ]);
    assert!(o.status.success());
    assert_eq!(value(&stdout(&o), "raw_certified_fraction"), "1");
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let o = qsolab(&[
        "census",
        "--dim",
        "3",
        "--samples",
        "10",
        "--eps",
        "1.5",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = qsolab(&["census", "--dim", "3", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_qsolab"))
        .args(["census", "--dim", "2", "--samples", "2", "--out", s(&out)])
        .env("QSOLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
