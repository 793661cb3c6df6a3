use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uavcoop"))
}

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("uavcoop-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SMALL: &str = r#"
seed = 1
subchannels = 4
r_min = 2e5
slot_duration = 0.5
total_slots = 40

[bs]
position = [0.0, 0.0, 25.0]

[[uav]]
id = 0
position = [300.0, 0.0, 100.0]
tasks = [0]

[[uav]]
id = 1
position = [1400.0, 0.0, 100.0]
tasks = [1]

[[task]]
id = 0
center = [320.0, 0.0, 0.0]
failure_tolerance = 0.6
data_volume = 5e6

[[task]]
id = 1
center = [1420.0, 0.0, 0.0]
failure_tolerance = 0.6
data_volume = 5e6
"#;

#[test]
fn run_writes_slot_csv_and_search_trees() {
    let dir = scratch("run");
    let scen = dir.join("s.toml");
    fs::write(&scen, SMALL).unwrap();
    let out = dir.join("out");
    let o = run(&[
        "run",
        "--scenario",
        scen.to_str().unwrap(),
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
        "--dump-search-tree",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("run_cooperative_seed9.csv")).unwrap();
    assert!(csv.starts_with("slot,time,sum_rate,"));
    assert_eq!(csv.lines().count(), 41);
    let trees = out.join("search_tree_cooperative_seed9");
    assert!(fs::read_dir(trees).unwrap().count() > 0);
}

#[test]
fn scheme_flag_overrides_scenario() {
    let dir = scratch("scheme");
    let out = dir.join("out");
    let o = run(&[
        "run",
        "--scenario",
        repo("scenarios/comparison.toml").to_str().unwrap(),
        "--scheme",
        "separate",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert!(out.join("run_separate_seed0.csv").exists());
    let bad = run(&[
        "run",
        "--scenario",
        repo("scenarios/comparison.toml").to_str().unwrap(),
        "--scheme",
        "telepathy",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&bad), 1);
}

#[test]
fn replicate_writes_summaries_and_aggregate() {
    let dir = scratch("rep");
    let scen = dir.join("s.toml");
    fs::write(&scen, SMALL).unwrap();
    let out = dir.join("out");
    let o = run(&[
        "replicate",
        "--scenario",
        scen.to_str().unwrap(),
        "--seeds",
        "1,2,3",
        "--all-schemes",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summaries = fs::read_to_string(out.join("summaries.csv")).unwrap();
    assert_eq!(summaries.lines().count(), 1 + 9);
    let aggregate = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert!(aggregate.starts_with("group,metric,n,mean,ci_low,ci_high"));
    assert!(aggregate.contains("cooperative,mean_sum_rate,3,"));
}

#[test]
fn unknown_key_is_a_validation_error() {
    let dir = scratch("unknown");
    let scen = dir.join("s.toml");
    fs::write(&scen, format!("{SMALL}\nsubchanels = 3\n")).unwrap();
    let o = run(&["run", "--scenario", scen.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("subchanels"));
}

#[test]
fn missing_base_station_is_a_validation_error() {
    let dir = scratch("nobs");
    let scen = dir.join("s.toml");
    fs::write(&scen, SMALL.replace("[bs]\nposition = [0.0, 0.0, 25.0]\n", "")).unwrap();
    let o = run(&["run", "--scenario", scen.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bs.position"));
}

#[test]
fn bad_seed_list_is_a_validation_error() {
    let o = run(&[
        "replicate",
        "--scenario",
        repo("scenarios/comparison.toml").to_str().unwrap(),
        "--seeds",
        "0",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn missing_scenario_file_is_a_runtime_error() {
    let dir = scratch("missing");
    let o = run(&["run", "--scenario", dir.join("nope.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn exhausted_node_budget_exits_with_budget_code() {
    let dir = scratch("budget");
    let scen = dir.join("s.toml");
    fs::write(&scen, format!("node_budget = 1\n{SMALL}")).unwrap();
    let out = dir.join("out");
    let o = run(&["run", "--scenario", scen.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    // The run still completes and writes its records.
    assert!(out.join("run_cooperative_seed1.csv").exists());
}

#[test]
fn oracle_prints_reference_values() {
    let o = run(&["oracle", repo("scenarios/oracle_small.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    let value = |key: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(key)).unwrap();
        let v = line.split("objective=").nth(1).unwrap().split_whitespace().next().unwrap();
        v.parse().unwrap()
    };
    let exhaustive = value("exhaustive_allocation");
    let bnb = value("branch_and_bound");
    assert!((exhaustive - bnb).abs() <= 1e-9 * exhaustive);
    assert!(value("dc_power_control") >= value("grid_power_search") * 0.98);
}

#[test]
fn oversized_oracle_instance_exceeds_budget() {
    let dir = scratch("oracle");
    let path = dir.join("big.toml");
    let mut text = String::from("subchannels = 4\np_max = 0.2\n");
    for i in 0..7 {
        text += &format!(
            "[[link]]\nkind = \"U2u\"\ntx = {i}\nrx = {}\ngain = [1e-10, 1e-10, 1e-10, 1e-10]\ncross = [{}]\n",
            100 + i,
            vec!["1e-12"; 7].join(", ")
        );
    }
    fs::write(&path, text).unwrap();
    let o = run(&["oracle", path.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn plot_writes_svgs() {
    let dir = scratch("plot");
    let scen = dir.join("s.toml");
    fs::write(&scen, SMALL).unwrap();
    let out = dir.join("out");
    let o = run(&[
        "plot",
        "--scenario",
        scen.to_str().unwrap(),
        "--seeds",
        "2",
        "--subchannels",
        "2,4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for name in [
        "sum_rate_vs_subchannels.svg",
        "trajectories_cooperative.svg",
        "trajectories_noncooperative.svg",
        "trajectories_separate.svg",
    ] {
        let svg = fs::read_to_string(out.join(name)).unwrap();
        assert!(svg.contains("<svg"), "{name}");
    }
}
