use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const S_ONE: &str = r#"
schema_version = 1
seed = 5

[scenario]
builtin = "s-one"

[engine]
horizon = 3
particles = [20, 50]
replicates = 4
functions = ["one", "ind-0"]
births = 10
"#;

const GAUSSIAN: &str = r#"
schema_version = 1
seed = 9

[scenario.gaussian]
dt = 1.0
q = 0.05
survival = 0.9
alpha = 0.8
mu_rate = 2.0
region = [[0.0, 50.0], [0.0, 50.0]]
velocity_sd = 1.0

[engine]
horizon = 4
particles = [30]
replicates = 3
"#;

fn bflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bflow"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("bflow runs")
}

fn with_config(text: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), text).unwrap();
    dir
}

fn read(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn exact_writes_the_flow() {
    let dir = with_config(S_ONE);
    let out = bflow(dir.path(), &["exact", "--config", "run.toml", "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let flow = read(dir.path(), "o/flow.csv");
    let rows: Vec<Vec<f64>> = flow
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    // step, gamma_0, gamma_1, mass, eta_0, eta_1
    assert!((rows[1][1] - 0.59).abs() < 1e-12);
    assert!((rows[1][2] - 0.41).abs() < 1e-12);
    assert!((rows[1][3] - 1.0).abs() < 1e-12);
    let semigroup = read(dir.path(), "o/semigroup.csv");
    assert!(semigroup.starts_with("p,n,q_pn,beta_Ppn,c_pn,b_pn\n"));
    assert_eq!(semigroup.lines().count(), 1 + 10);
    assert!(read(dir.path(), "o/regime.csv").contains("regime,unit-potential"));
}

#[test]
fn horizon_zero_is_the_initial_intensity() {
    let dir = with_config(&S_ONE.replace("horizon = 3", "horizon = 0"));
    let out = bflow(dir.path(), &["exact", "--config", "run.toml", "--out", "o"]);
    assert!(out.status.success());
    let flow = read(dir.path(), "o/flow.csv");
    assert_eq!(flow.lines().collect::<Vec<_>>()[1..], ["0,0.3,0.2,0.5,0.6,0.4"]);
}

#[test]
fn missing_seed_is_a_usage_error() {
    let dir = with_config(&S_ONE.replace("seed = 5", ""));
    let out = bflow(dir.path(), &["particles", "--config", "run.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed required"));
    // the flag supplies it
    let out = bflow(dir.path(), &["exact", "--config", "run.toml", "--seed", "1"]);
    assert!(out.status.success());
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = S_ONE.replace("builtin = \"s-one\"", "builtin = \"s-none\"");
    let dir = with_config(&bad);
    assert_eq!(bflow(dir.path(), &["exact", "--config", "run.toml"]).status.code(), Some(2));
    let dir = with_config("schema_version = 1\nseed = 1\n[scenario]\nstates = [\"a\"]\npotential = [1.0]\ntransition = [[0.9]]\nimmigration = [1.0]\n");
    let out = bflow(dir.path(), &["exact", "--config", "run.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sums to"));
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let unknown = bflow(d, &["verify", "--seed", "1", "--checks", "flow-consistency,bogus"]);
    assert_eq!(unknown.status.code(), Some(2));
    let ok = bflow(d, &["verify", "--seed", "1", "--checks", "flow-consistency", "--out", "a"]);
    assert_eq!(ok.status.code(), Some(0));
    let bad = bflow(d, &["verify", "--seed", "1", "--checks", "flow-consistency", "--self-test", "--out", "b"]);
    assert_eq!(bad.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&read(d, "b/report.json")).unwrap();
    assert_eq!(report["passed"], false);
    assert_eq!(report["corruption"], 0.1);
    for record in report["records"].as_array().unwrap() {
        for key in ["id", "statistic", "oracle", "se", "bound", "verdict", "n_samples", "seed", "tolerance"] {
            assert!(record.get(key).is_some(), "record lacks {key}");
        }
    }
}

#[test]
fn particles_aggregate_one_row_per_n_and_step() {
    let dir = with_config(S_ONE);
    let out = bflow(dir.path(), &["particles", "--config", "run.toml", "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let agg = read(dir.path(), "o/aggregate.csv");
    let mass_rows: Vec<&str> = agg.lines().filter(|l| l.contains(",mass,")).collect();
    assert_eq!(mass_rows.len(), 2 * 4);
    assert!(agg.lines().skip(1).all(|l| l.ends_with(",exact")));
    assert_eq!(read(dir.path(), "o/runs.csv").lines().count(), 1 + 2 * 4 * 4);
    assert_eq!(read(dir.path(), "o/births.csv").lines().count(), 1 + 4 * 4);
}

#[test]
fn gaussian_outputs_flag_missing_oracles() {
    let dir = with_config(GAUSSIAN);
    let out = bflow(dir.path(), &["particles", "--config", "run.toml", "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let agg = read(dir.path(), "o/aggregate.csv");
    for line in agg.lines().skip(1) {
        let kind = if line.contains(",mass,") { "exact" } else { "none" };
        assert!(line.ends_with(kind), "{line}");
    }
    let out = bflow(dir.path(), &["simulate", "--config", "run.toml", "--out", "s"]);
    assert!(out.status.success());
    assert!(read(dir.path(), "s/trajectory.csv").starts_with("replicate,step,target_id,px,py,vx,vy\n"));
    let out = bflow(dir.path(), &["exact", "--config", "run.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = with_config(S_ONE);
    for cmd in ["simulate", "particles"] {
        for out in ["r1", "r2"] {
            let o = bflow(dir.path(), &[cmd, "--config", "run.toml", "--out", out]);
            assert!(o.status.success());
        }
    }
    for file in ["trajectory.csv", "intensity.csv", "runs.csv", "aggregate.csv", "births.csv"] {
        assert_eq!(read(dir.path(), &format!("r1/{file}")), read(dir.path(), &format!("r2/{file}")));
    }
}
