use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 9

[kinetics]
alpha = 1.6
gamma = 0.04
k_r = 4.0
n_tot = 400

[ssa]
replicas = 5
t_end = 0.1

[cpi]
t_end = 1.0

[cpi.ensemble.xi]
kind = "gauss_legendre"
n = 4

[cpi.ensemble.engine]
kind = "ssa"
replicas = 3

[reference.xi]
kind = "gauss_legendre"
n = 8

[fixed_point]
max_iter = 2
noise_seeds = 2

[fixed_point.ensemble.xi]
kind = "monte_carlo"
ne = 6

[fixed_point.ensemble.engine]
kind = "ssa"
replicas = 2

[continuation]
beta_min = 5.5
beta_max = 6.5
max_points = 5
"#;

fn eqfree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eqfree"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn run(cmd: &str, config: &Path, out: &Path, workers: &str) -> Output {
    eqfree(&[
        cmd,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--workers",
        workers,
    ])
}

fn csvs(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (PathBuf::from(p.file_name().unwrap()), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn every_command_is_identical_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("small.toml");
    std::fs::write(&config, SMALL).unwrap();
    for cmd in ["ssa", "cpi", "reference", "fixed-point", "continuation"] {
        let a = tmp.path().join(format!("{cmd}-1"));
        let b = tmp.path().join(format!("{cmd}-4"));
        let ra = run(cmd, &config, &a, "1");
        let rb = run(cmd, &config, &b, "4");
        assert_eq!(ra.status.code(), rb.status.code(), "{cmd}");
        let (fa, fb) = (csvs(&a), csvs(&b));
        assert!(!fa.is_empty(), "{cmd} wrote no CSV: {}", String::from_utf8_lossy(&ra.stderr));
        assert_eq!(fa, fb, "{cmd} differs between 1 and 4 workers");

        // Re-running from the resolved configuration reproduces the bytes.
        let c = tmp.path().join(format!("{cmd}-rerun"));
        let rc = run(cmd, &a.join("resolved_config.toml"), &c, "2");
        assert_eq!(ra.status.code(), rc.status.code(), "{cmd}");
        assert_eq!(fa, csvs(&c), "{cmd} differs when re-run from resolved_config.toml");
    }
}

#[test]
fn outputs_start_with_a_provenance_comment() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("small.toml");
    std::fs::write(&config, SMALL).unwrap();
    let out = tmp.path().join("ssa");
    assert!(run("ssa", &config, &out, "0").status.success());
    let text = std::fs::read_to_string(out.join("ssa.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# eqfree ") && header.contains(" seed=9 config_sha256="), "{header}");
    assert!(lines.next().unwrap().starts_with("t,"));
}

#[test]
fn seed_flag_overrides_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("small.toml");
    std::fs::write(&config, SMALL).unwrap();
    let out = tmp.path().join("o");
    let r = eqfree(&["ssa", "--config", config.to_str().unwrap(), "--seed", "123", "--out", out.to_str().unwrap()]);
    assert!(r.status.success());
    let resolved = std::fs::read_to_string(out.join("resolved_config.toml")).unwrap();
    assert!(resolved.contains("seed = 123"), "{resolved}");
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cases = [
        "[kinetics]\nalpah = 1.0\n",
        "[ssa]\nreplicas = 0\n",
        "[beta]\nform = \"affine\"\nb0 = 0.1\nb1 = 0.5\n",
        "[cpi]\nfit_window = 1\n",
        "[cpi.ensemble.xi]\nkind = \"gauss_legendre\"\nn = 2\n",
    ];
    for (k, text) in cases.iter().enumerate() {
        let config = tmp.path().join(format!("bad{k}.toml"));
        std::fs::write(&config, text).unwrap();
        let cmd = if k >= 3 { "cpi" } else { "ssa" };
        let r = run(cmd, &config, &out, "1");
        assert_eq!(r.status.code(), Some(2), "case {k}: {}", String::from_utf8_lossy(&r.stderr));
        assert!(String::from_utf8_lossy(&r.stderr).contains("config error"), "case {k}");
    }
    let r = eqfree(&["ssa", "--config", "/nonexistent/file.toml"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_code_three() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("abort.toml");
    // A huge projective step pushes the expansion off the simplex.
    std::fs::write(
        &config,
        "[cpi]\nt_end = 30.0\ndt_cc = 25.0\n[cpi.ensemble.engine]\nkind = \"oracle\"\n[cpi.ensemble.xi]\nkind = \"gauss_legendre\"\nn = 4\n",
    )
    .unwrap();
    let out = tmp.path().join("o");
    let r = run("cpi", &config, &out, "1");
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(out.join("cpi.csv").exists());
}
