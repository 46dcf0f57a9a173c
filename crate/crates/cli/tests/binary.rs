use std::path::Path;
use std::process::{Command, Output};

fn pathfk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pathfk")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn small(kind: &str, fixture: &str, extra: &str) -> String {
    format!(
        "[experiment]\nkind = \"{kind}\"\nfixture = \"{fixture}\"\n\
         [grid]\nsteps = 8\nstart_value = 0.4\n[simulation]\nn_paths = 400\nseed = 5\n{extra}"
    )
}

fn error_record(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("stderr record");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{line}: {e}"))
}

#[test]
fn list_fixtures_prints_catalogue() {
    let out = pathfk(&["--list-fixtures"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ["linear-c0.1-sq", "integral-x2-c0", "martingale-terminal"] {
        assert!(text.contains(id));
    }
}

#[test]
fn help_documents_exit_codes() {
    let text = String::from_utf8(pathfk(&["--help"]).stdout).unwrap();
    for code in ["0", "2", "3", "4", "5", "6", "7"] {
        assert!(text.lines().any(|l| l.trim_start().starts_with(&format!("{code}  "))), "{code}");
    }
}

#[test]
fn successful_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small("solve", "martingale-terminal", ""));
    let out_dir = dir.path().join("out");
    let batch = dir.path().join("batch.csv");
    let out = pathfk(&[
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
        "--export-batch",
        batch.to_str().unwrap(),
        "--threads",
        "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["results.csv", "diagnostics.csv", "manifest.json", "solution.csv"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let results = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert!(results.starts_with("# schema=1\n"));
    assert!(results.lines().skip(2).all(|l| l.contains(",martingale-terminal,5,") && l.ends_with("PASS")));
    assert_eq!(std::fs::read_to_string(&batch).unwrap().lines().count(), 1 + 400 * 8);
}

#[test]
fn seed_override_changes_results_and_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small("solve", "martingale-terminal", ""));
    let read = |seed: &str, sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = pathfk(&["--config", &cfg, "--seed", seed, "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success());
        let manifest: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
        (std::fs::read(out_dir.join("results.csv")).unwrap(), manifest["config_sha256"].clone())
    };
    let (a, ha) = read("5", "a");
    let (b, hb) = read("6", "b");
    assert_ne!(a, b);
    assert_ne!(ha, hb);
    assert_eq!(read("5", "c"), (a, ha));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out_arg = out_dir.to_str().unwrap();
    let cases: [(String, i32); 5] = [
        ("[experiment]\nkind = \"solve\"\n".into(), 2),
        (small("integrate", "martingale-terminal", ""), 3),
        (small("solve", "no-such-fixture", ""), 4),
        (
            small(
                "solve",
                "linear-c0.1-sq",
                "[solver]\nscheme = \"picard\"\npicard_iterations = 1\npicard_tolerance = 1e-300\n",
            ),
            5,
        ),
        (small("solve", "linear-c0.1-sq", "[tolerance]\nse_factor = 0.0\nz_absolute = 0.0\n"), 7),
    ];
    for (body, code) in cases {
        let cfg = write_config(dir.path(), &body);
        let out = pathfk(&["--config", &cfg, "--out", out_arg]);
        assert_eq!(out.status.code(), Some(code), "{body}\n{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(error_record(&out)["code"], code);
    }

    let blocker = dir.path().join("a-file");
    std::fs::write(&blocker, b"").unwrap();
    let cfg = write_config(dir.path(), &small("solve", "martingale-terminal", ""));
    let out = pathfk(&["--config", &cfg, "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(6));
    assert_eq!(error_record(&out)["error"], "io");

    let out = pathfk(&["--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verdict_failure_still_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &small("solve", "linear-c0.1-sq", "[tolerance]\nse_factor = 0.0\nz_absolute = 0.0\n"),
    );
    let out_dir = dir.path().join("out");
    let out = pathfk(&["--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(7));
    let results = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert!(results.contains(",FAIL"));
}

#[test]
fn prefix_csv_resolves_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("prefix.csv"), "time,value_0\n0,0.1\n0.2,0.5\n").unwrap();
    let cfg = write_config(
        dir.path(),
        "[experiment]\nkind = \"solve\"\nfixture = \"heat-quadratic\"\n\
         [grid]\nsteps = 8\nprefix_csv = \"prefix.csv\"\n[simulation]\nn_paths = 2000\n[tolerance]\nz_absolute = 0.2\n",
    );
    let out_dir = dir.path().join("out");
    let out = pathfk(&["--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let results = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    // u = x² + T - t = 0.25 + 0.8
    assert!(results.lines().nth(2).unwrap().contains(",y_root,0.2,"));
    assert!(results.contains(",1.05,"));
}
