//! Acceptance criteria AC-1 to AC-8, one test each. Every test prints a
//! single `AC-n PASS|FAIL ...` line straight to stdout so the verdicts show
//! up even when the harness captures output. AC-9 needs real survey data and
//! only runs on request (`--ignored`).

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use truckflow::features::{build_feature_matrix, great_circle_distance, EARTH_RADIUS_MILES, GCD_FEATURE};
use truckflow::gbt::{self, GbtModel, Hyperparams, Node, Tree};
use truckflow::harness::{train_test_split, SplitSpec};
use truckflow::ingest::{self, Centroid};
use truckflow::rng::{self, Prng};
use truckflow::shap::{
    shap_exact, shap_fast, shap_interactions, shap_interactions_exact, spearman, zero_crossing_threshold, ShapTable,
    SignReference, DEFAULT_SMOOTHING_WINDOW,
};
use truckflow::FeatureMatrix;

const BIN: &str = env!("CARGO_BIN_EXE_truckflow");

fn verdict(id: &str, pass: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{id} {} {detail}", if pass { "PASS" } else { "FAIL" });
    let _ = out.flush();
}

// ---------------------------------------------------------------------------
// Random ensembles

fn random_tree(r: &mut Prng, n_features: usize, max_depth: usize) -> Tree {
    fn grow(r: &mut Prng, nodes: &mut Vec<Node>, depth: usize, max_depth: usize, m: usize) -> f64 {
        let at = nodes.len();
        if depth < max_depth && r.random::<f64>() < 0.75 {
            let feature = r.random_range(0..m as u64) as usize;
            let threshold = r.random::<f64>();
            nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
            let left = nodes.len();
            let cl = grow(r, nodes, depth + 1, max_depth, m);
            let right = nodes.len();
            let cr = grow(r, nodes, depth + 1, max_depth, m);
            nodes[at] = Node::Split { feature, threshold, left, right, cover: cl + cr };
            cl + cr
        } else {
            let cover = 0.1 + 20.0 * r.random::<f64>();
            nodes.push(Node::Leaf { value: 6.0 * r.random::<f64>() - 3.0, cover });
            cover
        }
    }
    let mut nodes = Vec::new();
    grow(r, &mut nodes, 0, max_depth, n_features);
    Tree::from_nodes(nodes)
}

/// AC-1's suite: 50 ensembles of up to 5 trees of depth up to 3 over 6
/// features, with 20 instances each.
fn oracle_suite() -> Vec<(GbtModel, Vec<Vec<f64>>)> {
    let names: Vec<String> = (0..6).map(|i| format!("x{i}")).collect();
    (0..50u64)
        .map(|e| {
            let mut r = rng::stream(2024, &[e]);
            let n_trees = 1 + r.random_range(0..5u64) as usize;
            let trees = (0..n_trees)
                .map(|_| {
                    let depth = 1 + r.random_range(0..3u64) as usize;
                    random_tree(&mut r, 6, depth)
                })
                .collect();
            let base = r.random::<f64>() * 2.0 - 1.0;
            let model = GbtModel::from_parts(base, trees, Hyperparams::default(), names.clone()).unwrap();
            let xs = (0..20).map(|_| (0..6).map(|_| r.random::<f64>()).collect()).collect();
            (model, xs)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Shared end-to-end run

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn cli(dir: &Path, args: &[&str]) {
    let out = Command::new(BIN).current_dir(dir).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "truckflow {args:?} failed\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

const ARTIFACTS: [&str; 11] = [
    "zones.csv",
    "od_flows.csv",
    "model.json",
    "metrics.csv",
    "shap_values.csv",
    "interaction_GCD_orig_pop.csv",
    "importance.svg",
    "beeswarm.svg",
    "dependence.svg",
    "interaction.svg",
    "importance_target.svg",
];

/// synth 60 zones -> train (defaults, 500 rounds) -> evaluate on the 30% test
/// split -> explain 500 test rows -> every plot.
fn pipeline() -> Run {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let data = ["--flows", "od_flows.csv", "--zones", "zones.csv"];
    let with = |head: &[&'static str]| -> Vec<&'static str> { head.iter().chain(&data).copied().collect() };
    cli(p, &["synth", "--zones", "60", "--seed", "42"]);
    cli(p, &with(&["train", "--seed", "42", "--out", "model.json"]));
    cli(p, &with(&["evaluate", "--model", "model.json", "--out", "metrics.csv"]));
    cli(
        p,
        &with(&[
            "explain",
            "--model",
            "model.json",
            "--partition",
            "test",
            "--sample",
            "500",
            "--out",
            "shap_values.csv",
            "--interactions",
            "GCD,orig_pop",
        ]),
    );
    for kind in ["importance", "beeswarm", "dependence"] {
        cli(p, &["plot", kind, "--in", "shap_values.csv", "--out", &format!("{kind}.svg")]);
    }
    cli(p, &["plot", "importance", "--sign-vs-target", "--in", "shap_values.csv", "--out", "importance_target.svg"]);
    cli(p, &["plot", "interaction", "--in", "interaction_GCD_orig_pop.csv", "--out", "interaction.svg"]);
    Run { dir }
}

fn shared_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(pipeline)
}

fn synthetic_matrix(run: &Run) -> FeatureMatrix {
    let flows = ingest::load_od_flows(&run.path("od_flows.csv")).unwrap();
    let zones = ingest::load_zones(&run.path("zones.csv")).unwrap();
    build_feature_matrix(&ingest::join_dataset(&flows, &zones).unwrap()).unwrap()
}

fn metric(csv: &str, column: &str) -> f64 {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let values: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == column).unwrap();
    values[i].parse().unwrap()
}

// ---------------------------------------------------------------------------
// Criteria

#[test]
fn ac1_fast_attribution_matches_enumeration() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (model, xs) in oracle_suite() {
        for x in &xs {
            let fast = shap_fast(&model, x).unwrap();
            let exact = shap_exact(&model, x).unwrap();
            for (a, b) in fast.phi.iter().zip(&exact.phi) {
                worst = worst.max((a - b).abs());
            }
            worst = worst.max((fast.base_value - exact.base_value).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-9 && secs < 10.0;
    verdict("AC-1", pass, &format!("max |fast - exact| = {worst:.3e} over 1000 instances in {secs:.2} s"));
    assert!(pass);
}

#[test]
fn ac2_local_accuracy() {
    let mut worst = 0.0f64;
    for (model, xs) in oracle_suite() {
        for x in &xs {
            let e = shap_fast(&model, x).unwrap();
            worst = worst.max((e.total() - model.predict(x).unwrap()).abs());
        }
    }
    let suite_worst = worst;
    let run = shared_run();
    let model = GbtModel::load(&run.path("model.json")).unwrap();
    let (_, test) = train_test_split(&synthetic_matrix(run), &SplitSpec::default()).unwrap();
    let rounds = model.trees().len();
    for i in 0..100 {
        let x = test.row(i);
        let e = shap_fast(&model, x).unwrap();
        worst = worst.max((e.total() - model.predict(x).unwrap()).abs());
    }
    let pass = worst <= 1e-9 && rounds == 500;
    verdict(
        "AC-2",
        pass,
        &format!("max |phi0 + sum phi - f(x)| = {worst:.3e} (oracle suite {suite_worst:.3e}; 100 rows of a {rounds}-tree model)"),
    );
    assert!(pass);
}

#[test]
fn ac3_interactions() {
    let mut asym = 0.0f64;
    let mut row_gap = 0.0f64;
    let mut oracle_gap = 0.0f64;
    for (model, xs) in oracle_suite().into_iter().take(20) {
        for x in xs.iter().take(5) {
            let im = shap_interactions(&model, x).unwrap();
            let ex = shap_interactions_exact(&model, x).unwrap();
            let phi = shap_fast(&model, x).unwrap().phi;
            for i in 0..6 {
                for j in 0..6 {
                    asym = asym.max((im.get(i, j) - im.get(j, i)).abs());
                    oracle_gap = oracle_gap.max((im.get(i, j) - ex.get(i, j)).abs());
                }
                row_gap = row_gap.max((im.row_sum(i) - phi[i]).abs());
            }
        }
    }

    // x0 < 0 -> 0; otherwise x1 < 0 -> 0 else 4; covers 50 / 25 / 25
    let tree = Tree::from_nodes(vec![
        Node::Split { feature: 0, threshold: 0.0, left: 1, right: 2, cover: 100.0 },
        Node::Leaf { value: 0.0, cover: 50.0 },
        Node::Split { feature: 1, threshold: 0.0, left: 3, right: 4, cover: 50.0 },
        Node::Leaf { value: 0.0, cover: 25.0 },
        Node::Leaf { value: 4.0, cover: 25.0 },
    ]);
    let names = vec!["x1".to_string(), "x2".to_string()];
    let hand = GbtModel::from_parts(0.0, vec![tree], Hyperparams::default(), names).unwrap();
    let x = [1.0, 1.0];
    let phi = shap_fast(&hand, &x).unwrap().phi;
    let im = shap_interactions(&hand, &x).unwrap();
    let hand_ok = phi == vec![1.5, 1.5] && im.get(0, 1) == 0.5 && im.get(1, 0) == 0.5 && im.get(0, 0) == 1.0;

    // each tree splits on a single feature
    let mut additive_worst = 0.0f64;
    let names: Vec<String> = (0..4).map(|i| format!("x{i}")).collect();
    for seed in 0..20u64 {
        let mut r = rng::stream(77, &[seed]);
        let trees = (0..4)
            .map(|f| {
                let t = Tree::from_nodes(vec![
                    Node::Split { feature: f, threshold: r.random(), left: 1, right: 2, cover: 10.0 },
                    Node::Leaf { value: r.random::<f64>() - 0.5, cover: 4.0 },
                    Node::Leaf { value: r.random::<f64>() - 0.5, cover: 6.0 },
                ]);
                t
            })
            .collect();
        let model = GbtModel::from_parts(0.0, trees, Hyperparams::default(), names.clone()).unwrap();
        let x: Vec<f64> = (0..4).map(|_| r.random()).collect();
        let m = shap_interactions(&model, &x).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    additive_worst = additive_worst.max(m.get(i, j).abs());
                }
            }
        }
    }

    let pass = asym == 0.0 && row_gap <= 1e-8 && oracle_gap <= 1e-9 && hand_ok && additive_worst <= 1e-9;
    verdict(
        "AC-3",
        pass,
        &format!(
            "asymmetry {asym:.1e}, row-sum gap {row_gap:.3e}, fast vs enumeration {oracle_gap:.3e}, hand tree phi={phi:?} Phi12={} Phi11={}, additive off-diagonal {additive_worst:.1e}",
            im.get(0, 1),
            im.get(0, 0)
        ),
    );
    assert!(pass);
}

#[test]
fn ac4_boosting_sanity() {
    let start = Instant::now();
    let mut r = rng::stream(4, &[0]);
    let rows: Vec<Vec<f64>> = (0..1000).map(|_| vec![r.random::<f64>(), r.random::<f64>()]).collect();
    let y: Vec<f64> = rows.iter().map(|x| 2.0 * x[0] + x[1]).collect();
    let m = FeatureMatrix::from_rows(&["x1", "x2"], &rows, y.clone()).unwrap();
    let params = Hyperparams {
        eta: 0.1,
        rounds: 200,
        subsample: 1.0,
        colsample_bytree: 1.0,
        ..Hyperparams::default()
    };
    let (_, log) = gbt::train_with_log(&m, &params, None).unwrap();
    let monotone = log.train_rmse.windows(2).all(|w| w[1] <= w[0]);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
    let last = *log.train_rmse.last().unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = monotone && last <= 0.05 * sd && secs < 30.0 && log.train_rmse.len() == 200;
    verdict(
        "AC-4",
        pass,
        &format!(
            "rmse non-increasing: {monotone}; final {last:.4} vs 5% of sd {:.4}; {secs:.2} s",
            0.05 * sd
        ),
    );
    assert!(pass);
}

#[test]
fn ac5_gravity_recovery() {
    let run = shared_run();
    let metrics = fs::read_to_string(run.path("metrics.csv")).unwrap();
    let r2 = metric(&metrics, "r_squared");
    let n_test = metric(&metrics, "n");
    let model = GbtModel::load(&run.path("model.json")).unwrap();
    let pairs = synthetic_matrix(run).n_rows();
    let p = model.params();
    let paper = Hyperparams { seed: p.seed, ..Hyperparams::default() };
    let pass = r2 >= 0.80 && *p == paper && model.trees().len() == 500;
    verdict(
        "AC-5",
        pass,
        &format!("test R^2 = {r2:.4} (log space) on {n_test} of {pairs} OD pairs"),
    );
    assert!(pass);
}

#[test]
fn ac6_qualitative_findings() {
    let run = shared_run();
    let table = ShapTable::read(fs::File::open(run.path("shap_values.csv")).unwrap()).unwrap();
    let importance = table.importance(SignReference::Attribution).unwrap();
    let top = importance.features[0].name.clone();
    let g = table.feature_index("GCD").unwrap();
    assert_eq!(g, GCD_FEATURE);
    let (values, phi) = (table.column(g), table.phi_column(g));
    let rho = spearman(&values, &phi);
    let points: Vec<(f64, f64)> = values.iter().copied().zip(phi.iter().copied()).collect();
    let crossing = zero_crossing_threshold(&points, DEFAULT_SMOOTHING_WINDOW);
    let mut all_gcd = synthetic_matrix(run).column(GCD_FEATURE);
    all_gcd.sort_by(f64::total_cmp);
    let n = all_gcd.len();
    let median = if n % 2 == 1 { all_gcd[n / 2] } else { (all_gcd[n / 2 - 1] + all_gcd[n / 2]) / 2.0 };
    let within = crossing.is_some_and(|c| (c - median).abs() <= 0.25 * median);
    let svg = fs::read_to_string(run.path("dependence.svg")).unwrap();
    let annotated = svg.contains("class=\"threshold\"");
    let pass = table.rows.len() == 500 && top == "GCD" && rho <= -0.9 && within && annotated;
    verdict(
        "AC-6",
        pass,
        &format!(
            "top feature {top}; Spearman(GCD, phi_GCD) = {rho:.4}; crossing {} vs median GCD {median:.1} (+/-25%); {} rows",
            crossing.map_or("none".to_string(), |c| format!("{c:.1}")),
            table.rows.len()
        ),
    );
    assert!(pass);
}

#[test]
fn ac7_determinism() {
    let first = shared_run();
    let second = pipeline();
    let differing: Vec<&str> = ARTIFACTS
        .iter()
        .copied()
        .filter(|f| fs::read(first.path(f)).unwrap() != fs::read(second.path(f)).unwrap())
        .collect();
    let pass = differing.is_empty();
    verdict(
        "AC-7",
        pass,
        &format!("{} artifacts compared byte for byte; differing: {differing:?}", ARTIFACTS.len()),
    );
    assert!(pass);
}

/// Chord-length form of the great-circle distance, independent of the
/// library's haversine.
fn chord_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    let unit = |(lat, lon): (f64, f64)| {
        let (la, lo) = (lat.to_radians(), lon.to_radians());
        [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
    };
    let (u, v) = (unit(a), unit(b));
    let chord = ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2) + (u[2] - v[2]).powi(2)).sqrt();
    2.0 * EARTH_RADIUS_MILES * (chord / 2.0).asin()
}

const STATS_ZONES: &str = "zone_id,centroid_lat,centroid_lon,population,establishments,employees,annual_payroll
Z1,40.0,-90.0,1000,10,100,5000
Z2,41.0,-89.0,2000,20,200,10000
Z3,39.0,-91.0,3000,30,300,15000
Z4,42.0,-80.0,4000,40,400,20000
Z5,35.0,-100.0,5000,50,500,25000
";

const STATS_FLOWS: &str = "origin_zone,destination_zone,annual_total_trips
Z1,Z2,30
Z1,Z3,45
Z2,Z1,60
Z2,Z4,90
Z3,Z5,120
Z3,Z1,150
Z4,Z2,300
Z4,Z5,600
Z5,Z3,1200
Z5,Z4,2400
";

fn stats_fixture_matches() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("zones.csv"), STATS_ZONES).unwrap();
    fs::write(dir.path().join("flows.csv"), STATS_FLOWS).unwrap();
    cli(dir.path(), &["stats", "--flows", "flows.csv", "--zones", "zones.csv", "--out", "stats.csv"]);
    let csv = fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    let row = |name: &str| -> Vec<f64> {
        csv.lines()
            .find(|l| l.split(',').next() == Some(name))
            .unwrap()
            .split(',')
            .skip(1)
            .map(|v| v.parse().unwrap())
            .collect()
    };
    // hand values: trips sum 4995; origins Z1 Z1 Z2 Z2 Z3 Z3 Z4 Z4 Z5 Z5;
    // destinations Z2 Z3 Z1 Z4 Z5 Z1 Z2 Z5 Z3 Z4
    let expected: [(&str, [f64; 4]); 5] = [
        ("annual_total_trips", [499.5, 135.0, 30.0, 2400.0]),
        ("orig_pop", [3000.0, 3000.0, 1000.0, 5000.0]),
        ("dest_pop", [3000.0, 3000.0, 1000.0, 5000.0]),
        ("orig_emp", [300.0, 300.0, 100.0, 500.0]),
        ("dest_ap", [15000.0, 15000.0, 5000.0, 25000.0]),
    ];
    let mut bad = Vec::new();
    for (name, want) in expected {
        if row(name) != want {
            bad.push(format!("{name}: got {:?}, want {want:?}", row(name)));
        }
    }
    (bad.is_empty(), if bad.is_empty() { "exact".into() } else { bad.join("; ") })
}

#[test]
fn ac8_geometry_and_stats() {
    let antipode = great_circle_distance(Centroid { lat: 0.0, lon: 0.0 }, Centroid { lat: 0.0, lon: 180.0 }).unwrap();
    let antipode_ok = (antipode - PI * 3958.7613).abs() <= 1e-3;

    let (chicago, philadelphia) = ((41.8781, -87.6298), (39.9526, -75.1652));
    let library = great_circle_distance(
        Centroid { lat: chicago.0, lon: chicago.1 },
        Centroid { lat: philadelphia.0, lon: philadelphia.1 },
    )
    .unwrap();
    let oracle = chord_distance(chicago, philadelphia);
    let oracle_agrees = (library - oracle).abs() <= 1e-6;
    let city_ok = (library - 665.5).abs() <= 1.0;

    let (stats_ok, stats_detail) = stats_fixture_matches();
    let ln30 = format!("{:.1}", 30f64.ln());
    let ln_ok = ln30 == "3.4";

    let pass = antipode_ok && oracle_agrees && city_ok && stats_ok && ln_ok;
    verdict(
        "AC-8",
        pass,
        &format!(
            "antipode {antipode:.4} (ok: {antipode_ok}); Chicago-Philadelphia {library:.3} mi, independent oracle {oracle:.3} (agree: {oracle_agrees}), target 665.5 +/- 1.0 (ok: {city_ok}); stats fixture {stats_detail}; ln(30) -> {ln30} (ok: {ln_ok})"
        ),
    );
    assert!(antipode_ok && oracle_agrees && stats_ok && ln_ok, "geometry or stats checks failed");
    assert!(city_ok, "Chicago-Philadelphia distance {library:.3} is outside 665.5 +/- 1.0");
}

/// Real-data smoke run. Point `TRUCKFLOW_REAL_DATA` at a directory holding
/// `od_flows.csv`, `zone_centroids.csv`, `counties.csv`, `crosswalk.csv` and
/// `exclude.txt`, then run with `--ignored`.
#[test]
#[ignore = "needs user-supplied survey data"]
fn ac9_real_data_smoke() {
    let Some(root) = std::env::var_os("TRUCKFLOW_REAL_DATA") else {
        verdict("AC-9", false, "TRUCKFLOW_REAL_DATA is not set");
        panic!("TRUCKFLOW_REAL_DATA is not set");
    };
    let root = PathBuf::from(root);
    let out = tempfile::tempdir().unwrap();
    let arg = |f: &str| root.join(f).to_string_lossy().into_owned();
    let (flows, centroids, counties, crosswalk, exclude) = (
        arg("od_flows.csv"),
        arg("zone_centroids.csv"),
        arg("counties.csv"),
        arg("crosswalk.csv"),
        arg("exclude.txt"),
    );
    let data = [
        "--flows", &flows, "--zones", &centroids, "--counties", &counties, "--crosswalk", &crosswalk, "--exclude", &exclude,
    ];
    let run = |head: &[&str]| {
        let args: Vec<&str> = head.iter().chain(&data).copied().collect();
        Command::new(BIN).current_dir(out.path()).args(&args).output().unwrap()
    };
    let ingest = run(&["ingest", "--out", "dataset.csv"]);
    let log = String::from_utf8_lossy(&ingest.stderr).into_owned();
    let retained = ingest::load_dataset(&out.path().join("dataset.csv")).map(|d| d.len()).unwrap_or(0);
    let chain_ok = ingest.status.success()
        && [
            vec!["train", "--data", "dataset.csv", "--out", "model.json"],
            vec!["evaluate", "--data", "dataset.csv", "--model", "model.json"],
            vec!["explain", "--data", "dataset.csv", "--model", "model.json"],
        ]
        .iter()
        .all(|a| Command::new(BIN).current_dir(out.path()).args(a).status().unwrap().success());
    let pass = retained == 209_851 && chain_ok;
    verdict("AC-9", pass, &format!("retained {retained} rows (want 209851); chain ok: {chain_ok}; {}", log.trim()));
    assert!(pass);
}
