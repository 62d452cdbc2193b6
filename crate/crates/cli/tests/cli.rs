use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_truckflow");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    let out = run(dir, args);
    out.status.code().unwrap()
}

const ZONES: &str = "zone_id,centroid_lat,centroid_lon,population,establishments,employees,annual_payroll
A,40.0,-90.0,1000,10,100,5000
B,41.0,-89.0,2000,20,200,10000
C,39.0,-91.0,3000,30,300,15000
";

const FLOWS: &str = "origin_zone,destination_zone,annual_total_trips
A,B,30
B,C,100
C,A,200
A,C,1000
";

fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("zones.csv"), ZONES).unwrap();
    fs::write(dir.path().join("flows.csv"), FLOWS).unwrap();
    dir
}

fn field(csv: &str, row: &str, col: usize) -> f64 {
    csv.lines()
        .find(|l| l.split(',').next() == Some(row))
        .unwrap_or_else(|| panic!("no row {row}"))
        .split(',')
        .nth(col)
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn stats_on_four_rows_match_hand_values() {
    let dir = fixture();
    let out = run(dir.path(), &["stats", "--flows", "flows.csv", "--zones", "zones.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("variable,mean,median,min,max\n"));
    assert_eq!(field(&csv, "annual_total_trips", 1), 332.5);
    assert_eq!(field(&csv, "annual_total_trips", 2), 150.0);
    assert_eq!(field(&csv, "annual_total_trips", 3), 30.0);
    assert_eq!(field(&csv, "annual_total_trips", 4), 1000.0);
    let log_mean = (30f64.ln() + 100f64.ln() + 200f64.ln() + 1000f64.ln()) / 4.0;
    assert!((field(&csv, "log_truck_trips", 1) - log_mean).abs() < 1e-12);
    // origins A, B, C, A
    assert_eq!(field(&csv, "orig_pop", 1), 1750.0);
    assert_eq!(field(&csv, "orig_pop", 2), 1500.0);
    assert!((field(&csv, "log_dest_est", 3) - 10f64.ln()).abs() < 1e-12);
}

#[test]
fn config_file_applies_and_flags_override() {
    let dir = fixture();
    let p = dir.path();
    fs::write(p.join("cfg.txt"), "# small model\nrounds = 3\nmax_depth = 2\nmin_child_weight = 1\nk = 5\n").unwrap();
    let base = ["train", "--flows", "flows.csv", "--zones", "zones.csv", "--train-fraction", "0.75"];
    let with = |extra: &[&'static str]| -> Vec<&'static str> { base.iter().chain(extra).copied().collect() };
    assert_eq!(code(p, &with(&["--config", "cfg.txt", "--out", "a.json"])), 0);
    assert_eq!(code(p, &with(&["--config", "cfg.txt", "--rounds", "2", "--out", "b.json"])), 0);
    let a = fs::read_to_string(p.join("a.json")).unwrap();
    let b = fs::read_to_string(p.join("b.json")).unwrap();
    assert!(a.contains("\"rounds\":3") && a.contains("\"max_depth\":2"));
    assert!(b.contains("\"rounds\":2") && b.contains("\"max_depth\":2"));
}

#[test]
fn training_twice_gives_identical_files() {
    let dir = fixture();
    let p = dir.path();
    let args = |out: &'static str| {
        vec!["train", "--flows", "flows.csv", "--zones", "zones.csv", "--rounds", "4", "--min-child-weight", "1", "--subsample", "0.5", "--out", out]
    };
    assert_eq!(code(p, &args("m1.json")), 0);
    assert_eq!(code(p, &args("m2.json")), 0);
    assert_eq!(fs::read(p.join("m1.json")).unwrap(), fs::read(p.join("m2.json")).unwrap());
}

/// Every subcommand: one successful call, one domain failure, one usage
/// failure.
#[test]
fn exit_code_matrix() {
    let dir = fixture();
    let p = dir.path();
    let data = ["--flows", "syn/od_flows.csv", "--zones", "syn/zones.csv"];
    let missing = ["--flows", "absent.csv", "--zones", "syn/zones.csv"];
    let with = |head: &[&str], tail: &[&str]| -> Vec<String> { head.iter().chain(tail).map(|s| s.to_string()).collect() };
    let check = |args: Vec<String>, want: i32| {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = run(p, &refs);
        assert_eq!(
            out.status.code(),
            Some(want),
            "{refs:?}\nstderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    let small = ["--rounds", "3", "--min-child-weight", "1", "--train-fraction", "0.75"];

    // synth; its output feeds the other subcommands
    check(with(&["synth", "--zones", "8", "--out-dir", "syn"], &[]), 0);
    check(with(&["synth", "--zones", "3", "--scale", "1e-30", "--out-dir", "syn0"], &[]), 1);
    check(with(&["synth", "--zones", "many"], &[]), 2);
    // ingest
    check(with(&["ingest", "--out", "ds.csv"], &data), 0);
    check(with(&["ingest"], &missing), 1);
    check(with(&["ingest", "--flows", "flows.csv"], &[]), 2);
    // stats
    check(with(&["stats", "--data", "ds.csv"], &[]), 0);
    check(with(&["stats", "--data", "absent.csv"], &[]), 1);
    check(with(&["stats", "--bogus"], &[]), 2);
    // train
    check(with(&["train", "--out", "m.json"], &[&data[..], &small[..]].concat()), 0);
    check(with(&["train"], &[&missing[..], &small[..]].concat()), 1);
    check(with(&["train", "--eta", "0"], &data), 2);
    // evaluate
    check(with(&["evaluate", "--model", "m.json", "--train-fraction", "0.75"], &data), 0);
    check(with(&["evaluate", "--model", "absent.json"], &data), 1);
    check(with(&["evaluate", "--model"], &[]), 2);
    // cv
    check(with(&["cv", "--k", "2", "--all-rows"], &[&data[..], &small[..]].concat()), 0);
    check(with(&["cv", "--k", "2"], &[&missing[..], &small[..]].concat()), 1);
    check(with(&["cv", "--k", "1"], &data), 2);
    // tune
    fs::write(p.join("grid.csv"), "max_depth,1,2\nrounds,2\n").unwrap();
    fs::write(p.join("badgrid.csv"), "depth,1\n").unwrap();
    check(with(&["tune", "--grid", "grid.csv", "--k", "2", "--train-fraction", "0.75", "--min-child-weight", "1"], &data), 0);
    check(with(&["tune", "--grid", "absent.csv", "--k", "2"], &data), 1);
    check(with(&["tune", "--grid", "badgrid.csv"], &data), 2);
    // explain
    check(with(&["explain", "--model", "m.json", "--partition", "all", "--interactions", "GCD,orig_pop"], &data), 0);
    check(with(&["explain", "--model", "absent.json"], &data), 1);
    check(with(&["explain", "--model", "m.json", "--interactions", "GCD,nope"], &data), 2);
    // plot
    for kind in ["importance", "beeswarm", "dependence"] {
        check(with(&["plot", kind, "--in", "shap_values.csv", "--out", &format!("{kind}.svg")], &[]), 0);
        check(with(&["plot", kind, "--in", "absent.csv", "--out", "x.svg"], &[]), 1);
        check(with(&["plot", kind, "--out", "x.svg"], &[]), 2);
    }
    check(with(&["plot", "interaction", "--in", "interaction_GCD_orig_pop.csv", "--out", "i.svg"], &[]), 0);
    check(with(&["plot", "interaction", "--in", "shap_values.csv", "--out", "i.svg"], &[]), 1);
    check(with(&["plot", "dependence", "--in", "shap_values.csv", "--out", "d.svg", "--feature", "nope"], &[]), 2);
    check(with(&["plot", "sideways"], &[]), 2);
    check(with(&["frobnicate"], &[]), 2);
    check(with(&["--help"], &[]), 0);
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = fixture();
    fs::write(dir.path().join("bad.txt"), "colour = blue\n").unwrap();
    assert_eq!(code(dir.path(), &["stats", "--config", "bad.txt", "--data", "x.csv"]), 2);
    assert_eq!(code(dir.path(), &["stats", "--config", "absent.txt", "--data", "x.csv"]), 1);
}
