use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fixtures() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tts_mos")
}

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_langsim"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn rho_of(report: &str, measure: &str, lang: &str) -> f64 {
    report
        .lines()
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|f| f[0] == measure && f[2] == lang)
        .unwrap_or_else(|| panic!("no row {measure}/{lang} in\n{report}"))[4]
        .parse()
        .unwrap()
}

#[test]
fn typological_tts_correlations() {
    let out = run(
        &[
            "correlate",
            "--table",
            "phonological.csv",
            "--table",
            "inventory.csv",
            "--table",
            "featural.csv",
            "--scores",
            "mos.csv",
            "--task",
            "mos",
            "--anchor",
            "target",
        ],
        &fixtures(),
    );
    let report = stdout(&out);
    for (m, l, want) in [
        ("phonological", "hin", -0.65),
        ("inventory", "hin", -0.67),
        ("featural", "hin", -0.65),
        ("phonological", "tel", -0.95),
        ("featural", "tel", -0.71),
    ] {
        let got = rho_of(&report, m, l);
        assert!((got - want).abs() <= 0.005, "{m}/{l}: {got} vs {want}");
    }
}

#[test]
fn correlate_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("rep");
    let out = run(
        &[
            "correlate",
            "--table",
            "speech-sc.csv",
            "--scores",
            "mos.csv",
            "--task",
            "mos",
            "--anchor",
            "target",
            "--out",
            out_dir.to_str().unwrap(),
        ],
        &fixtures(),
    );
    stdout(&out);
    let csv = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert!(csv.starts_with("measure,anchor,anchor_lang,n,rho\n"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let rows = json["correlations"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r["task"] == "mos" && r["n"] == 5));
}

#[test]
fn ensemble_of_tables_stays_in_unit_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "ensemble",
            "--table",
            "phonological.csv",
            "--table",
            "featural.csv",
            "--target",
            "hin",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        &fixtures(),
    );
    stdout(&out);
    let text = fs::read_to_string(dir.path().join("ensemble.csv")).unwrap();
    let values: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("lang_a"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(!values.is_empty());
    assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn errors_are_one_line_with_typed_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let sc = fixtures().join("speech-sc.csv");
    let sc = sc.to_str().unwrap();
    let cases: [(&[&str], i32, &str); 4] = [
        (
            &["rank", "--table", "missing.csv", "--target", "hin"],
            3,
            "error[io]",
        ),
        (
            &["rank", "--table", sc, "--target", "xyz"],
            6,
            "error[lookup]",
        ),
        (
            &[
                "cluster",
                "--store",
                "nope.json",
                "--k",
                "2",
                "--seed",
                "1",
                "--out",
                "o",
            ],
            3,
            "error[io]",
        ),
        (&["rank", "--bogus"], 2, "error[usage]"),
    ];
    for (args, code, prefix) in cases {
        let out = run(args, dir.path());
        let err = String::from_utf8_lossy(&out.stderr);
        assert_eq!(out.status.code(), Some(code), "{args:?}: {err}");
        assert!(err.starts_with(prefix), "{args:?}: {err}");
        assert_eq!(err.trim_end().lines().count(), 1, "{args:?}: {err}");
    }
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"], &fixtures());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("featurize"));
}
