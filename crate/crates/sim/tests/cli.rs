use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cima-sim"));
    cmd.args(args).env_remove("CIMA_OUTPUT_DIR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

#[test]
fn run_writes_replications_and_aggregate() {
    let out = cli(&["run", "--users", "4", "--load", "0.5", "--horizon", "100000", "--replications", "3"], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = stdout(&out);
    assert!(csv.starts_with(
        "protocol,N,lambda_tot,pattern,horizon,seed,replication,q_avg,delay,collisions,bound_violations,arrival_checksum"
    ));
    assert_eq!(column(&csv, "replication"), ["0", "1", "2", "-1"]);
    assert_eq!(column(&csv, "seed"), ["1", "2", "3", "1"]);
    assert!(column(&csv, "collisions").iter().all(|c| c == "0"));
    let delay: f64 = column(&csv, "delay")[3].parse().unwrap();
    assert!(delay <= 16.0, "{delay}");
}

#[test]
fn tdma_above_capacity_is_flagged_unstable() {
    let out = cli(
        &["run", "--protocol", "tdma", "--users", "4", "--load", "0.75", "--horizon", "100000", "--replications", "2"],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(column(&stdout(&out), "trend_stable").iter().all(|s| s == "false"));
}

#[test]
fn identical_config_gives_byte_identical_csv() {
    let args = ["run", "--protocol", "backoff", "--users", "6", "--load", "0.4", "--horizon", "5000"];
    let a = cli(&args, &[]);
    let b = cli(&args, &[]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    fs::write(&cfg, r#"{"protocol": "tdma", "users": 4, "load": 0.3, "horizon": 2000, "seed": 9, "replications": 2}"#)
        .unwrap();
    let out = cli(&["run", "--config", cfg.to_str().unwrap(), "--protocol", "cima", "--seed", "20"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let csv = stdout(&out);
    assert!(column(&csv, "protocol").iter().all(|p| p == "cima"));
    assert_eq!(column(&csv, "seed"), ["20", "21", "20"]);
    assert!(column(&csv, "horizon").iter().all(|h| h == "2000"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let odd = cli(&["run", "--users", "5", "--load", "0.5", "--horizon", "100"], &[]);
    assert_eq!(odd.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&odd.stderr).contains("even number of users"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"users": 2, "load": 0.3, "horizn": 10}"#).unwrap();
    assert_eq!(cli(&["run", "--config", cfg.to_str().unwrap()], &[]).status.code(), Some(2));
    assert_eq!(cli(&["run", "--users", "2", "--rates", "0.5,1.5"], &[]).status.code(), Some(2));
    assert_eq!(cli(&["run", "--load", "0.2"], &[]).status.code(), Some(2));
}

#[test]
fn zero_load_marks_delay_not_applicable() {
    let out = cli(&["run", "--users", "2", "--load", "0", "--horizon", "500", "--replications", "2"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let csv = stdout(&out);
    assert!(column(&csv, "delay").iter().all(|d| d == "NA"));
    assert!(column(&csv, "q_avg").iter().all(|q| q == "0"));
}

#[test]
fn sweep_pairs_protocols_and_honours_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(
        &[
            "sweep", "--users", "4", "--load", "0.5", "--horizon", "3000", "--axis", "load", "--values", "0.3,0.6",
            "--protocols", "cima,tdma,backoff",
        ],
        &[("CIMA_OUTPUT_DIR", dir.path())],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(column(&csv, "protocol"), ["cima", "tdma", "backoff", "cima", "tdma", "backoff"]);
    assert!(column(&csv, "replication").iter().all(|r| r == "-1"));
    let sums = column(&csv, "arrival_checksum");
    assert!(sums[..3].iter().all(|s| *s == sums[0]));
    assert!(sums[3..].iter().all(|s| *s == sums[3]));
    assert_ne!(sums[0], sums[3]);

    let svg_path = dir.path().join("fig.svg");
    let plot = cli(
        &[
            "plot", "--input", dir.path().join("sweep.csv").to_str().unwrap(), "--kind", "delay_vs_load", "--bound",
            "--output", svg_path.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(plot.status.code(), Some(0));
    let svg = fs::read_to_string(&svg_path).unwrap();
    assert_eq!(svg.matches("class=\"series\"").count(), 3);
    assert!(svg.contains("stroke-dasharray"));
}

#[test]
fn empty_sweep_is_header_only() {
    let out = cli(&["sweep", "--users", "4", "--load", "0.5", "--axis", "users", "--values="], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).lines().count(), 1);
}

#[test]
fn plot_names_missing_column() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("t.csv");
    fs::write(&table, "protocol,N,delay\ncima,4,2.0\n").unwrap();
    let out = cli(&["plot", "--input", table.to_str().unwrap(), "--kind", "delay_vs_load"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda_tot"));
}

#[test]
fn quick_verify_passes() {
    let out = cli(&["verify", "--quick"], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert_eq!(stdout(&out).lines().filter(|l| l.starts_with("[PASS]")).count(), 10);
}
