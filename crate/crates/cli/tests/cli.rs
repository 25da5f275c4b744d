use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"
dim = 1
horizon = 0.05
n_list = [16, 32]
mc_paths = 100
master_seed = 3

[test_function]
dim = 1
[[test_function.terms]]
wave = "cos"
k = [1]

[initial]
kind = "equispaced"
"#;

fn dk(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dk")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn duality_and_simulate_write_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", CONFIG);
    let out = dir.path().join("out");
    let out_s = out.display().to_string();

    let run = dk(&["duality", "--config", &cfg, "--out", &out_s, "--seed", "9"]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let csv = std::fs::read_to_string(out.join("duality.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 9);
    assert_eq!(manifest["command"], "duality");
    assert_eq!(manifest["resolved"].as_array().unwrap().len(), 2);

    let run = dk(&["simulate", "--config", &cfg, "--out", &out_s, "--paths", "2", "--threads", "1"]);
    assert_eq!(run.status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("path_id,t,mass,energy,entropy,fisher,min_value,neg_mass\n"));
    assert!(csv.lines().skip(1).any(|l| l.starts_with("1,")));
}

#[test]
fn weak_error_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", CONFIG);
    let read = |sub: &str| {
        let out = dir.path().join(sub);
        let run = dk(&["weak-error", "--config", &cfg, "--out", &out.display().to_string()]);
        assert_eq!(run.status.code(), Some(0));
        std::fs::read_to_string(out.join("weak_error.csv")).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn rejected_configurations_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out").display().to_string();
    let pinned = write_config(
        dir.path(),
        "pinned.toml",
        &format!("{CONFIG}\n[regularization]\ndelta_constant = 0.01\ncutoff = 8\n"),
    );
    let run = dk(&["duality", "--config", &pinned, "--out", &out]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("coercivity"));

    let good = write_config(dir.path(), "good.toml", CONFIG);
    assert_eq!(dk(&["weak-error", "--config", &good, "--paths", "5", "--out", &out]).status.code(), Some(2));
    let missing = dir.path().join("missing.toml").display().to_string();
    assert_eq!(dk(&["structure", "--config", &missing, "--out", &out]).status.code(), Some(2));
    assert_eq!(dk(&["structure", "--config", &good, "--out", &out]).status.code(), Some(2));
}
