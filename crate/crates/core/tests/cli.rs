//! End-to-end tests of the `sqbound` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn sqbound(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqbound"))
        .args(args)
        .env_clear()
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn thm2_with_small_b_is_rejected() {
    let dir = TempDir::new().unwrap();
    let out_csv = dir.path().join("o.csv");
    let cfg = write_config(
        dir.path(),
        "c.toml",
        &format!(
            "experiment = \"thm2\"\nY = 2\nB = 3\nm_values = [8]\nout_path = \"{}\"\n",
            out_csv.display()
        ),
    );
    let out = sqbound(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("B >= 2Y"), "{msg}");
    assert!(msg.contains("line 3"), "{msg}");
    assert!(!out_csv.exists());
}

#[test]
fn identical_runs_write_identical_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "experiment = \"thm2\"\nY = 1\nB = 4\nm_values = [8, 32]\nreps = 100\nseed = 3\nout_path = \"unused\"\n",
    );
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (path, threads) in [(&a, "1"), (&b, "3")] {
        let out = sqbound(&[
            "run",
            "--config",
            &cfg,
            "--out",
            path.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    let (a, b) = (fs::read(a).unwrap(), fs::read(b).unwrap());
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# sqbound "));
    assert_eq!(text.lines().filter(|l| l.starts_with("thm2,")).count(), 8);
}

#[test]
fn flags_override_config() {
    let dir = TempDir::new().unwrap();
    let target = dir.path().join("o.csv");
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "experiment = \"thm3\"\nY = 1\nB = 4\nd = 4\nm_values = [8]\nlearners = [\"zero\"]\nreps = 10\nout_path = \"x\"\n",
    );
    let out = sqbound(&[
        "run",
        "--config",
        &cfg,
        "--out",
        target.to_str().unwrap(),
        "--seed",
        "11",
        "--reps",
        "5",
        "--learners",
        "erm,vaw",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(target).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("thm3,")).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("thm3,erm,1,4,4,4,8,5,11,"), "{}", rows[0]);
    assert!(rows[1].starts_with("thm3,vaw,"));
}

#[test]
fn envelope_row() {
    let dir = TempDir::new().unwrap();
    let target = dir.path().join("e.csv");
    let cfg = write_config(
        dir.path(),
        "c.toml",
        &format!(
            "experiment = \"envelope\"\nY = 1\nB = 2\nd = 10\nm_values = [100]\nout_path = \"{}\"\n",
            target.display()
        ),
    );
    let out = sqbound(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(target).unwrap();
    let row = text.lines().find(|l| l.starts_with("envelope,")).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[11], "0.14");
}

#[test]
fn sweep_appends_rate_fit() {
    let dir = TempDir::new().unwrap();
    let target = dir.path().join("s.csv");
    let cfg = write_config(
        dir.path(),
        "c.toml",
        &format!(
            "experiment = \"sweep\"\nY = 1\nB = 4\nd = 8\nm_values = [64, 256, 1024]\nlearners = [\"erm\"]\n\
             reps = 400\nseed = 1\nout_path = \"{}\"\n",
            target.display()
        ),
    );
    let out = sqbound(&["sweep", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(target).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let marker = lines.iter().rposition(|l| l.starts_with('#')).unwrap();
    assert_eq!(lines[marker + 1], "learner,slope,r_squared");
    let fit: Vec<&str> = lines[marker + 2].split(',').collect();
    assert_eq!(fit[0], "erm");
    let slope: f64 = fit[1].parse().unwrap();
    assert!((-1.25..=-0.75).contains(&slope), "slope {slope}");
}

#[test]
fn missing_out_path_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "experiment = \"sweep\"\nY = 1\nB = 4\nd = 8\nm_values = [16, 64]\n",
    );
    let out = sqbound(&["sweep", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("out_path"));
}

#[test]
fn unreadable_config_and_unwritable_output_are_io_errors() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.toml");
    let out = sqbound(&["run", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    let blocked = dir.path().join("no-such-dir").join("o.csv");
    let cfg = write_config(
        dir.path(),
        "c.toml",
        &format!(
            "experiment = \"envelope\"\nY = 1\nB = 2\nd = 3\nm_values = [10]\nout_path = \"{}\"\n",
            blocked.display()
        ),
    );
    let out = sqbound(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn syntax_errors_report_their_line() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "experiment = \"thm2\"\nY = 1\nB = = 4\n");
    let out = sqbound(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn verify_suites() {
    for suite in ["lemma1", "divergence"] {
        let out = sqbound(&["verify", suite]);
        assert_eq!(out.status.code(), Some(0), "{suite}");
        let report = String::from_utf8(out.stdout).unwrap();
        assert!(
            report
                .lines()
                .all(|l| l.starts_with("PASS ") || l.ends_with("0 failed")),
            "{report}"
        );
    }
    let a = sqbound(&["verify", "divergence"]);
    let b = sqbound(&["verify", "divergence"]);
    assert_eq!(a.stdout, b.stdout);
    let report = String::from_utf8(a.stdout).unwrap();
    assert!(report.contains("kl - chi2"));
    assert!(report.contains("two-point chi2"));
    assert!(report.contains("sign-family exact KL"));

    let out = sqbound(&["verify", "everything"]);
    assert_eq!(out.status.code(), Some(2));
}
