use std::collections::BTreeMap;
use std::fs;
use std::process::{Command, Output};

fn mpflow(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mpflow"));
    cmd.args(args).env_remove("MPFLOW_PRIMARY_PATH_ONLY");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn mpflow")
}

/// bucket_start_ms -> subflow ids with nonzero bytes
fn busy_subflows(csv: &str) -> BTreeMap<u64, Vec<u32>> {
    let mut out: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
    for line in csv.lines().skip(1).filter(|l| !l.starts_with('#')) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 7, "{line}");
        let bytes: u64 = cols[3].parse().unwrap();
        let entry = out.entry(cols[0].parse().unwrap()).or_default();
        if bytes > 0 {
            entry.push(cols[1].parse().unwrap());
        }
    }
    out
}

#[test]
fn list_scenarios_names_the_builtins() {
    let out = mpflow(&["list-scenarios"], &[]);
    assert!(out.status.success());
    let names: Vec<String> = String::from_utf8(out.stdout).unwrap().lines().map(str::to_owned).collect();
    for want in ["fig4", "fig5", "fig6_default", "fig6_ppos", "steady_default", "steady_ppos"] {
        assert!(names.iter().any(|n| n == want), "missing {want}");
    }
}

#[test]
fn run_writes_csv_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let out = mpflow(
        &["run", "--scenario", "steady_default", "--duration-ms", "3000", "--out", path.to_str().unwrap()],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(&path).unwrap();
    assert!(csv.starts_with("bucket_start_ms,subflow_id,pair,bytes_acked,throughput_bps,low_prio,alive\n"));
    let busy = busy_subflows(&csv);
    assert_eq!(busy.keys().copied().collect::<Vec<_>>(), vec![0, 1000, 2000]);
    assert_eq!(busy[&2000], vec![1, 2, 3]);
}

#[test]
fn env_var_forces_primary_path_only() {
    let args = ["run", "--scenario", "steady_default", "--duration-ms", "3000"];
    let out = mpflow(&args, &[("MPFLOW_PRIMARY_PATH_ONLY", "1")]);
    assert!(out.status.success());
    let busy = busy_subflows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(busy[&2000], vec![1]);

    let out = mpflow(&args, &[("MPFLOW_PRIMARY_PATH_ONLY", "0")]);
    let busy = busy_subflows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(busy[&2000], vec![1, 2, 3]);
}

#[test]
fn bucket_width_is_honoured() {
    let out = mpflow(&["run", "--scenario", "steady_ppos", "--duration-ms", "2000", "--bucket-ms", "500"], &[]);
    assert!(out.status.success());
    let busy = busy_subflows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(busy.keys().copied().collect::<Vec<_>>(), vec![0, 500, 1000, 1500]);
}

#[test]
fn validate_accepts_good_and_rejects_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(
        &good,
        r#"
name = "tiny"
duration_ms = 2000

[topology]
local = ["10.0.0.1"]
remote = ["10.0.1.2"]
links = [{ local = 0, remote = 0, bandwidth_bps = 1000000, delay_ms = 10 }]
"#,
    )
    .unwrap();
    let out = mpflow(&["validate", good.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("tiny: ok"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "name = \"x\"\nduration_ms = 0\n").unwrap();
    let out = mpflow(&["validate", bad.to_str().unwrap()], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error:"));

    let out = mpflow(&["run", "--scenario", dir.path().join("missing.toml").to_str().unwrap()], &[]);
    assert!(!out.status.success());
}
