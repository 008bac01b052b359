use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_capstan-sim");

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("capstan-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let p = dir.join("spec.json");
    std::fs::write(&p, json).unwrap();
    p
}

fn run(args: &[&str], threads: Option<&str>) -> Output {
    let mut c = Command::new(BIN);
    c.args(args);
    match threads {
        Some(t) => c.env("CAPSTAN_SIM_THREADS", t),
        None => c.env_remove("CAPSTAN_SIM_THREADS"),
    };
    c.output().unwrap()
}

fn stdout_of(args: &[&str], threads: Option<&str>) -> String {
    let o = run(args, threads);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

#[test]
fn csv_starts_with_schema_row() {
    let dir = scratch("schema");
    let cfg = write_config(&dir, r#"{"cycles": 500, "warmup_cycles": 50}"#);
    let cfg = cfg.to_str().unwrap();
    for (cmd, name) in [
        ("bank-sweep", "bank-sweep"),
        ("ordering-sweep", "ordering-sweep"),
        ("merge-sweep", "merge-sweep"),
        ("scanner-sweep", "scanner-sweep"),
        ("kernel", "kernel"),
    ] {
        let out = stdout_of(&[cmd, "--config", cfg, "--out", "-"], None);
        let first = out.lines().next().unwrap();
        assert_eq!(first, format!("#schema,capstan-sim/{name},v1,seed=51966"));
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = scratch("seed");
    let cfg = write_config(&dir, r#"{"seed": 11, "cycles": 500}"#);
    let cfg = cfg.to_str().unwrap();
    let a = stdout_of(&["ordering-sweep", "--config", cfg, "--out", "-"], None);
    assert!(a.starts_with("#schema,capstan-sim/ordering-sweep,v1,seed=11\n"));
    let b = stdout_of(&["ordering-sweep", "--config", cfg, "--seed", "12", "--out", "-"], None);
    assert!(b.starts_with("#schema,capstan-sim/ordering-sweep,v1,seed=12\n"));
    assert_ne!(a.lines().nth(2), b.lines().nth(2));
}

#[test]
fn output_is_identical_across_runs_and_thread_counts() {
    let dir = scratch("determinism");
    let cfg = write_config(&dir, r#"{"cycles": 1500, "warmup_cycles": 100}"#);
    let cfg = cfg.to_str().unwrap();
    for cmd in ["bank-sweep", "merge-sweep", "scanner-sweep"] {
        for format in ["csv", "json"] {
            let mut outs = Vec::new();
            for threads in [None, Some("1"), Some("3"), Some("1")] {
                let path = dir.join(format!("{cmd}-{}.{format}", outs.len()));
                let p = path.to_str().unwrap();
                stdout_of(&[cmd, "--config", cfg, "--seed", "99", "--out", p, "--format", format], threads);
                outs.push(std::fs::read(&path).unwrap());
            }
            assert!(outs.windows(2).all(|w| w[0] == w[1]), "{cmd} {format} differs between runs");
        }
    }
}

#[test]
fn kernel_json_reports_pass() {
    let dir = scratch("kernel");
    let cfg = write_config(
        &dir,
        r#"{"kernel": {"name": "SpMSpM", "dataset": {"kind": "generate", "rows": 40, "cols": 30, "density": 0.1, "float": false}}}"#,
    );
    let out = stdout_of(&["kernel", "--config", cfg.to_str().unwrap(), "--out", "-", "--format", "json"], None);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["schema"], "capstan-sim/kernel");
    assert_eq!(v["results"]["kernel"], "SpMSpM");
    assert_eq!(v["results"]["passed"], true);
}

#[test]
fn kernel_runs_on_fixture() {
    let dir = scratch("fixture");
    let mtx = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/web200.mtx");
    let cfg = write_config(
        &dir,
        &format!(
            r#"{{"kernel": {{"name": "Sssp", "source": 3, "dataset": {{"kind": "matrix-market", "path": {:?}}}}}}}"#,
            mtx.to_str().unwrap()
        ),
    );
    let out = stdout_of(&["kernel", "--config", cfg.to_str().unwrap(), "--out", "-"], None);
    let row = out.lines().nth(2).unwrap();
    assert!(row.starts_with("Sssp,200,200,489,"), "{row}");
    assert!(row.contains(",true,"), "{row}");
}

#[test]
fn bad_inputs_exit_with_code_two() {
    let dir = scratch("errors");
    let missing = dir.join("nope.json");
    let o = run(&["bank-sweep", "--config", missing.to_str().unwrap(), "--out", "-"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));

    let cfg = write_config(&dir, r#"{"partitions": 3}"#);
    let o = run(&["kernel", "--config", cfg.to_str().unwrap(), "--out", "-"], None);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(&dir, r#"{"spmu": {"lanes": 0}}"#);
    let o = run(&["bank-sweep", "--config", cfg.to_str().unwrap(), "--out", "-"], None);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["kernel", "--out", "-", "--format", "xml"], None);
    assert_eq!(o.status.code(), Some(2));
}
