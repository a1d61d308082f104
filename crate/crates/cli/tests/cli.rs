use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use approx::assert_abs_diff_eq;
use mlca_cli::FitDocument;
use tempfile::TempDir;

const CSV: &str = "\
school,a,b,c,x
s1,1,0,yes,0.5
s1,1,1,no,-1.0
s1,0,0,yes,0.2
s1,1,1,maybe,1.3
s2,0,1,no,-0.4
s2,1,0,yes,0.9
s2,0,0,no,-1.7
s2,1,1,yes,0.1
s3,1,,yes,0.0
s3,0,1,maybe,0.6
";

fn mlca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlca")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn setup() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    std::fs::write(&csv, CSV).unwrap();
    (dir, csv)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn one_class_reports_sample_frequencies() {
    let (dir, csv) = setup();
    let json = dir.path().join("f.json");
    let out = mlca(&["fit", "--data", s(&csv), "--items", "a,b,c", "--out", s(&json)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = FitDocument::read(&json).unwrap();
    // the row with a missing response is dropped: 9 complete rows
    assert_abs_diff_eq!(doc.response_probabilities[0][(0, 1)], 5.0 / 9.0, epsilon = 1e-12);
    assert_abs_diff_eq!(doc.response_probabilities[1][(0, 1)], 5.0 / 9.0, epsilon = 1e-12);
    let c = &doc.response_probabilities[2];
    let yes = doc.items[2].categories.iter().position(|v| v == "yes").unwrap();
    assert_abs_diff_eq!(c[(0, yes)], 4.0 / 9.0, epsilon = 1e-12);
    assert_eq!(doc.n_low(), 1);
    let text = stdout(&out);
    assert!(text.contains("RESPONSE PROBABILITIES:"));
    assert!(text.contains("P(c=yes|C)"));
}

#[test]
fn stored_fit_renders_identically() {
    let (dir, csv) = setup();
    let json = dir.path().join("f.json");
    let fit = mlca(&[
        "fit", "--data", s(&csv), "--items", "a,b,c", "--group", "school", "--classes", "2", "--covariates", "x",
        "--extended", "--out", s(&json),
    ]);
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    let again = mlca(&["summary", "--fit", s(&json)]);
    assert_eq!(again.stdout, fit.stdout);
    let doc = FitDocument::read(&json).unwrap();
    assert!(doc.posteriors.is_some() && doc.vcov.is_some());
}

#[test]
fn select_with_single_cells_matches_fit() {
    let (_dir, csv) = setup();
    let base = ["--data", s(&csv), "--items", "a,b,c", "--classes", "2", "--seed", "4"];
    let fit = mlca(&[&["fit"], &base[..]].concat());
    let sel = mlca(&[&["select"], &base[..]].concat());
    assert!(fit.status.success() && sel.status.success());
    assert_eq!(fit.stdout, sel.stdout);
}

#[test]
fn select_writes_its_table() {
    let (dir, csv) = setup();
    let table = dir.path().join("sel.csv");
    let out = mlca(&["select", "--data", s(&csv), "--items", "a,b", "--classes", "1:2", "--table", s(&table)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("MODEL SELECTION (SEQUENTIAL):"));
    let text = std::fs::read_to_string(&table).unwrap();
    assert!(text.starts_with("T,M,ll,npar,"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn verbose_prints_iterations_to_stderr() {
    let (_dir, csv) = setup();
    let out = mlca(&["-v", "fit", "--data", s(&csv), "--items", "a,b,c", "--classes", "2"]);
    assert!(out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.lines().any(|l| l.contains("iter") && l.contains("ll ")), "{err}");
}

#[test]
fn plot_options() {
    let (dir, csv) = setup();
    let json = dir.path().join("f.json");
    let svg = dir.path().join("p.svg");
    assert!(mlca(&["fit", "--data", s(&csv), "--items", "a,b,c", "--classes", "2", "--out", s(&json)])
        .status
        .success());
    let ok = mlca(&["plot", "--fit", s(&json), "--out", s(&svg), "--horiz", "false", "--clab", "Low,High"]);
    assert!(ok.status.success());
    let text = std::fs::read_to_string(&svg).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    assert!(doc.descendants().any(|n| n.text() == Some("High")));
    assert!(text.contains("rotate(-90"));
    let bars = doc.descendants().filter(|n| n.attribute("class") == Some("bar")).count();
    assert_eq!(bars, 3 * 2);

    let bad = mlca(&["plot", "--fit", s(&json), "--out", s(&svg), "--clab", "only"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("--clab"));
}

#[test]
fn user_errors_exit_with_one() {
    let (dir, csv) = setup();
    let missing = dir.path().join("none.csv");
    for args in [
        vec!["fit", "--data", s(&missing), "--items", "a"],
        vec!["fit", "--data", s(&csv), "--items", "zzz"],
        vec!["fit", "--data", s(&csv), "--items", "a", "--group-classes", "2"],
        vec!["fit", "--data", s(&csv), "--items", "a", "--estimator", "three_step"],
        vec!["select", "--data", s(&csv), "--items", "a", "--classes", "3:1"],
        vec!["fit", "--nonsense"],
    ] {
        let out = mlca(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = mlca(&["fit", "--data", s(&missing), "--items", "a"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("none.csv"));
    assert_eq!(mlca(&["--help"]).status.code(), Some(0));
}

#[test]
fn newer_fit_files_are_refused() {
    let (dir, _) = setup();
    let json = dir.path().join("f.json");
    std::fs::write(&json, "{\"schema_version\": 2}").unwrap();
    let out = mlca(&["summary", "--fit", s(&json)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema version 2"));
}

#[test]
fn simulate_writes_data_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let truth = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/truth.json");
    let out_csv = dir.path().join("sim.csv");
    let out = mlca(&[
        "simulate", "--truth", s(&truth), "--groups", "4", "--group-size", "5", "--seed", "9", "--out", s(&out_csv),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let data = std::fs::read_to_string(&out_csv).unwrap();
    assert_eq!(data.lines().count(), 21);
    let latent = std::fs::read_to_string(dir.path().join("sim.latent.csv")).unwrap();
    assert!(latent.starts_with("group,unit,x,w"));
    assert_eq!(latent.lines().count(), 21);

    let again = dir.path().join("again.csv");
    mlca(&[
        "simulate", "--truth", s(&truth), "--groups", "4", "--group-size", "5", "--seed", "9", "--out", s(&again),
    ]);
    assert_eq!(std::fs::read(&again).unwrap(), data.as_bytes());
}
