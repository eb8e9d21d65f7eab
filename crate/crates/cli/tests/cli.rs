use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BASE: &str = r#"
dim = 3
alpha = [0]

[potential]
kind = "hardy"
lambda = 2.0

[grid]
r_min = 1e-6
r_max = 1e4
points = 512

[modes]
k_max = 1

[time]
t_min = 0.1
t_max = 1.0
points_per_decade = 2

[[lorentz]]
p = 1
q = "inf"
sigma = 1
theta = "inf"
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn run(dir: &Path, cfg: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hardylab"))
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_exits_zero() {
    let o = Command::new(env!("CARGO_BIN_EXE_hardylab")).arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("norm-scan"));
}

#[test]
fn unknown_key_is_invalid_input() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), &BASE.replace("lambda = 2.0", "lambda = 2.0\nlamda = 3.0"));
    let o = run(d.path(), &cfg, &["classify"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("lamda"));
}

#[test]
fn unknown_theorem_is_invalid_input() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), BASE);
    let o = run(d.path(), &cfg, &["verify", "T9.9"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn contradicting_criticality_override_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(
        d.path(),
        &BASE.replace("lambda = 2.0", "lambda = -0.25\ncriticality = \"subcritical\""),
    );
    let o = run(d.path(), &cfg, &["classify"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("lambda_*"), "{}", stderr(&o));
}

#[test]
fn classify_prints_the_exponent_table() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), BASE);
    let o = run(d.path(), &cfg, &["classify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(d.path().join("out/classify.txt")).unwrap();
    assert!(text.contains("subcritical"));
}

#[test]
fn empty_time_range_gives_header_only_csv_and_a_warning() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), &BASE.replace("points_per_decade = 2", "points_per_decade = 0"));
    let o = run(d.path(), &cfg, &["norm-scan"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dir = d.path().join("out/norm_scan");
    let files: Vec<_> = std::fs::read_dir(&dir).unwrap().flatten().collect();
    assert!(!files.is_empty());
    for f in files {
        let text = std::fs::read_to_string(f.path()).unwrap();
        assert_eq!(text.trim_end(), "t,empirical_lower,upper_env,lower_env,phi_alpha,case_tag");
    }
    let manifest = std::fs::read_to_string(d.path().join("out/manifest.toml")).unwrap();
    assert!(manifest.contains("[[runs.warnings]]"), "{manifest}");
}

#[test]
fn report_marks_missing_rows_and_checks_integrity() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), BASE);

    let o = run(d.path(), &cfg, &["report"]);
    assert_eq!(o.status.code(), Some(1), "report without prior output: {}", stderr(&o));

    assert_eq!(run(d.path(), &cfg, &["classify"]).status.code(), Some(0));
    let o = run(d.path(), &cfg, &["report"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(d.path().join("out/report.csv")).unwrap();
    assert!(csv.starts_with("kind,theorem,spec,tuple,alpha,verdict,fitted,predicted,note"));
    assert_eq!(csv.lines().filter(|l| l.contains(",MISSING,")).count(), 7);

    std::fs::write(d.path().join("out/classify.txt"), "tampered").unwrap();
    let o = run(d.path(), &cfg, &["report"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("integrity"), "{}", stderr(&o));
}
