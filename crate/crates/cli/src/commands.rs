use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use truckflow::features::{self, FeatureMatrix};
use truckflow::gbt::{self, GbtModel, Hyperparams};
use truckflow::harness::{self, MetricVariant, SplitSpec};
use truckflow::ingest::{self, AugmentedRecord, FilterOptions, OdRecord, ZoneAttributes};
use truckflow::plot;
use truckflow::shap::{self, ShapTable, SignReference};
use truckflow::synth::{self, GravityParams};

use crate::{
    Cmd, CvArgs, DataArgs, EvaluateArgs, ExplainArgs, IngestArgs, ModelArgs, Partition, PlotCmd, StatsArgs,
    SynthArgs, TrainArgs, TuneArgs,
};

pub enum CliError {
    Usage(String),
    Domain(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Domain(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Usage(msg.into()))
}

pub fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Synth(a) => synth_cmd(a),
        Cmd::Ingest(a) => ingest_cmd(a),
        Cmd::Stats(a) => stats_cmd(a),
        Cmd::Train(a) => train_cmd(a),
        Cmd::Evaluate(a) => evaluate_cmd(a),
        Cmd::Cv(a) => cv_cmd(a),
        Cmd::Tune(a) => tune_cmd(a),
        Cmd::Explain(a) => explain_cmd(a),
        Cmd::Plot(p) => plot_cmd(p),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(f))
}

// ---------------------------------------------------------------------------
// Data loading

/// Flows and zone attributes from the raw inputs, after filtering.
fn raw_tables(d: &DataArgs) -> Result<(Vec<OdRecord>, Vec<ZoneAttributes>)> {
    let (Some(flows_path), Some(zones_path)) = (&d.flows, &d.zones) else {
        return usage("select input data with --data FILE or --flows FILE --zones FILE");
    };
    let flows = ingest::load_od_flows(flows_path)?;
    let mut excluded = match &d.exclude {
        Some(p) => ingest::load_exclusions(p)?,
        None => BTreeSet::new(),
    };
    let zones = match &d.counties {
        None => ingest::load_zones(zones_path)?,
        Some(counties_path) => {
            let centroids = ingest::load_zone_centroids(zones_path)?;
            let mut rows = ingest::load_counties(counties_path)?;
            if let Some(x) = &d.crosswalk {
                ingest::apply_crosswalk(&mut rows, &ingest::load_crosswalk(x)?);
            }
            let universe: BTreeSet<String> = centroids.keys().cloned().collect();
            let report = ingest::aggregate_counties(&rows, &universe)?;
            if report.warning_count() > 0 {
                eprintln!(
                    "warning: {} county row(s) name zones without a centroid and were skipped",
                    report.warning_count()
                );
            }
            let (zones, degenerate) = ingest::attach_centroids(&report.zones, &centroids)?;
            let dropped: Vec<&String> = report.empty_zones.iter().chain(&degenerate).collect();
            if !dropped.is_empty() {
                eprintln!(
                    "warning: {} zone(s) lack positive attributes and are excluded",
                    dropped.len()
                );
            }
            excluded.extend(dropped.into_iter().cloned());
            zones
        }
    };
    let options = FilterOptions {
        excluded_zones: excluded,
        exclude_intrazonal: d.exclude_intrazonal,
    };
    let (flows, report) = ingest::filter_records(flows, &options);
    eprintln!(
        "flows: {} read, {} excluded zone, {} zero trips, {} intrazonal, {} retained",
        report.input, report.removed_excluded_zone, report.removed_zero_trips, report.removed_intrazonal, report.retained
    );
    Ok((flows, zones))
}

fn load_records(d: &DataArgs) -> Result<Vec<AugmentedRecord>> {
    if let Some(path) = &d.data {
        if d.flows.is_some() || d.zones.is_some() {
            return usage("--data cannot be combined with --flows/--zones");
        }
        let mut rows = ingest::load_dataset(path)?;
        let excluded = match &d.exclude {
            Some(p) => ingest::load_exclusions(p)?,
            None => BTreeSet::new(),
        };
        rows.retain(|r| {
            !excluded.contains(&r.origin_zone)
                && !excluded.contains(&r.destination_zone)
                && !(d.exclude_intrazonal && r.origin_zone == r.destination_zone)
        });
        return Ok(rows);
    }
    let (flows, zones) = raw_tables(d)?;
    Ok(ingest::join_dataset(&flows, &zones)?)
}

fn load_matrix(d: &DataArgs) -> Result<FeatureMatrix> {
    let records = load_records(d)?;
    if records.is_empty() {
        return Err(CliError::Domain(anyhow!("no flow records left after filtering")));
    }
    Ok(features::build_feature_matrix(&records)?)
}

fn split(matrix: &FeatureMatrix, seed: u64, train_fraction: f64) -> Result<(FeatureMatrix, FeatureMatrix)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return usage(format!("--train-fraction must be in (0, 1), got {train_fraction}"));
    }
    Ok(harness::train_test_split(matrix, &SplitSpec { train_fraction, seed })?)
}

fn hyperparams(m: &ModelArgs, seed: u64) -> Hyperparams {
    let d = Hyperparams::default();
    Hyperparams {
        max_depth: m.max_depth.unwrap_or(d.max_depth),
        min_child_weight: m.min_child_weight.unwrap_or(d.min_child_weight),
        eta: m.eta.unwrap_or(d.eta),
        subsample: m.subsample.unwrap_or(d.subsample),
        colsample_bytree: m.colsample_bytree.unwrap_or(d.colsample_bytree),
        rounds: m.rounds.unwrap_or(d.rounds),
        lambda: m.lambda.unwrap_or(d.lambda),
        gamma: m.gamma.unwrap_or(d.gamma),
        seed,
        early_stopping_rounds: None,
    }
}

fn checked(params: Hyperparams) -> Result<Hyperparams> {
    match params.validate() {
        Ok(()) => Ok(params),
        Err(e) => usage(e.to_string()),
    }
}

fn variant(plus_one: bool) -> MetricVariant {
    if plus_one {
        MetricVariant::PlusOne
    } else {
        MetricVariant::LogSpace
    }
}

// ---------------------------------------------------------------------------
// Subcommands

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let d = GravityParams::default();
    let mut params = GravityParams {
        k: a.scale.unwrap_or(d.k),
        alpha: a.alpha.unwrap_or(d.alpha),
        beta: a.beta.unwrap_or(d.beta),
        gamma: a.decay.unwrap_or(d.gamma),
        sigma: a.sigma.unwrap_or(d.sigma),
        seed: a.seed,
    };
    if let Err(e) = params.validate() {
        return usage(e.to_string());
    }
    if a.zones < 2 {
        return usage(format!("--zones must be at least 2, got {}", a.zones));
    }
    let zones = synth::generate_zones(a.zones, a.seed)?;
    if a.calibrate {
        params.k = synth::calibrate_k(&zones, &params, synth::TARGET_MEDIAN_TRIPS)?;
        eprintln!("calibrated scale k = {}", params.k);
    }
    let flows = synth::generate_gravity_flows(&zones, &params)?;
    if flows.is_empty() {
        return Err(CliError::Domain(anyhow!("every flow rounds to zero; raise --scale or use --calibrate")));
    }
    let zones_path = a.out_dir.join("zones.csv");
    let flows_path = a.out_dir.join("od_flows.csv");
    ingest::write_zones(create(&zones_path)?, &zones)?;
    ingest::write_od_flows(create(&flows_path)?, &flows)?;
    eprintln!("wrote {} zones and {} flows to {}", zones.len(), flows.len(), a.out_dir.display());
    Ok(())
}

fn ingest_cmd(a: IngestArgs) -> Result<()> {
    if a.data.data.is_some() {
        return usage("ingest reads raw tables; use --flows and --zones");
    }
    let (flows, zones) = raw_tables(&a.data)?;
    let rows = ingest::join_dataset(&flows, &zones)?;
    ingest::write_dataset(create(&a.out)?, &rows)?;
    if let Some(p) = &a.zones_out {
        ingest::write_zones(create(p)?, &zones)?;
    }
    eprintln!("wrote {} rows to {}", rows.len(), a.out.display());
    Ok(())
}

fn stats_cmd(a: StatsArgs) -> Result<()> {
    let records = load_records(&a.data)?;
    let stats = features::dataset_stats(&records)?;
    match &a.out {
        Some(p) => features::write_stats_csv(create(p)?, &stats)?,
        None => features::write_stats_csv(io::stdout().lock(), &stats)?,
    }
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let params = checked(hyperparams(&a.model, a.split.seed))?;
    let matrix = load_matrix(&a.data)?;
    let (train, _) = split(&matrix, a.split.seed, a.split.train_fraction)?;
    let model = gbt::train(&train, &params)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    model.save(&a.out)?;
    eprintln!("trained {} trees on {} rows; wrote {}", model.trees().len(), train.n_rows(), a.out.display());
    Ok(())
}

fn load_model(path: &Path, matrix: &FeatureMatrix) -> Result<GbtModel> {
    let model = GbtModel::load(path)?;
    if model.feature_names() != matrix.feature_names() {
        return Err(CliError::Domain(anyhow!(
            "{} was trained on different features",
            path.display()
        )));
    }
    Ok(model)
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let matrix = load_matrix(&a.data)?;
    let model = load_model(&a.model, &matrix)?;
    let seed = a.seed.unwrap_or(model.params().seed);
    let (_, test) = split(&matrix, seed, a.train_fraction)?;
    let report = harness::evaluate(&model, &test, variant(a.rmsle_plus_one))?;
    harness::write_metrics_csv(io::stdout().lock(), &report)?;
    if let Some(p) = &a.out {
        harness::write_metrics_csv(create(p)?, &report)?;
    }
    Ok(())
}

fn cv_cmd(a: CvArgs) -> Result<()> {
    let params = checked(hyperparams(&a.model, a.split.seed))?;
    if a.k < 2 {
        return usage(format!("--k must be at least 2, got {}", a.k));
    }
    let matrix = load_matrix(&a.data)?;
    let rows = if a.all_rows {
        matrix
    } else {
        split(&matrix, a.split.seed, a.split.train_fraction)?.0
    };
    let report = harness::kfold_cv(&rows, a.k, &params, a.split.seed, variant(a.rmsle_plus_one))?;
    match &a.out {
        Some(p) => harness::write_cv_csv(create(p)?, &report)?,
        None => harness::write_cv_csv(io::stdout().lock(), &report)?,
    }
    eprintln!(
        "rmsle {:.4} +/- {:.4}, r2 {:.4} +/- {:.4}",
        report.mean_rmsle, report.std_rmsle, report.mean_r_squared, report.std_r_squared
    );
    Ok(())
}

fn tune_cmd(a: TuneArgs) -> Result<()> {
    let base = checked(hyperparams(&a.model, a.split.seed))?;
    if a.k < 2 {
        return usage(format!("--k must be at least 2, got {}", a.k));
    }
    let text = fs::read_to_string(&a.grid).with_context(|| format!("cannot read {}", a.grid.display()))?;
    let grid = match harness::Grid::parse(&text) {
        Ok(g) => g,
        Err(e) => return usage(format!("{}: {e}", a.grid.display())),
    };
    for p in grid.configurations(&base) {
        if let Err(e) = p.validate() {
            return usage(format!("{}: {e}", a.grid.display()));
        }
    }
    let matrix = load_matrix(&a.data)?;
    let (train, _) = split(&matrix, a.split.seed, a.split.train_fraction)?;
    let result = harness::grid_search(&train, &grid, &base, a.k, a.split.seed, variant(a.rmsle_plus_one))?;
    harness::write_grid_csv(create(&a.out)?, &result)?;
    // the best configuration, printed in config-file form
    let b = result.best_params();
    let mut out = io::stdout().lock();
    writeln!(out, "max_depth = {}", b.max_depth)?;
    writeln!(out, "min_child_weight = {}", b.min_child_weight)?;
    writeln!(out, "eta = {}", b.eta)?;
    writeln!(out, "subsample = {}", b.subsample)?;
    writeln!(out, "colsample_bytree = {}", b.colsample_bytree)?;
    writeln!(out, "rounds = {}", b.rounds)?;
    writeln!(out, "lambda = {}", b.lambda)?;
    writeln!(out, "gamma = {}", b.gamma)?;
    Ok(())
}

fn explain_cmd(a: ExplainArgs) -> Result<()> {
    let matrix = load_matrix(&a.data)?;
    let model = load_model(&a.model, &matrix)?;
    let pair = match &a.interactions {
        None => None,
        Some(spec) => {
            let Some((x, y)) = spec.split_once(',') else {
                return usage(format!("--interactions expects A,B, got `{spec}`"));
            };
            let (x, y) = (x.trim(), y.trim());
            let (Some(i), Some(j)) = (matrix.feature_index(x), matrix.feature_index(y)) else {
                return usage(format!(
                    "unknown feature in `{spec}`; known features: {}",
                    matrix.feature_names().join(", ")
                ));
            };
            if i == j {
                return usage("--interactions needs two different features");
            }
            Some((i, j))
        }
    };
    if a.sample == 0 {
        return usage("--sample must be at least 1");
    }
    let seed = a.seed.unwrap_or(model.params().seed);
    let rows = match a.partition {
        Partition::All => matrix,
        Partition::Train => split(&matrix, seed, a.train_fraction)?.0,
        Partition::Test => split(&matrix, seed, a.train_fraction)?.1,
    };
    let take: Vec<usize> = (0..rows.n_rows().min(a.sample)).collect();
    let sample = rows.select_rows(&take);
    let explanations = shap::explain_rows(&model, sample.rows())?;
    let table = ShapTable::new(&sample, &explanations)?;
    table.write(create(&a.out)?)?;
    eprintln!("explained {} rows; wrote {}", sample.n_rows(), a.out.display());
    if let Some((i, j)) = pair {
        let path = a.interactions_out.clone().unwrap_or_else(|| {
            let names = sample.feature_names();
            sibling(&a.out, &format!("interaction_{}_{}.csv", names[i], names[j]))
        });
        let matrices = shap::interactions_rows(&model, sample.rows())?;
        shap::write_interaction_csv(create(&path)?, &sample, &matrices, i, j)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    match path.parent() {
        Some(dir) => dir.join(name),
        None => PathBuf::from(name),
    }
}

fn read_table(path: &Path) -> Result<ShapTable> {
    let f = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    ShapTable::read(io::BufReader::new(f)).with_context(|| path.display().to_string()).map_err(Into::into)
}

fn write_svg(path: &Path, svg: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(svg.as_bytes())?;
    w.flush()?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn plot_cmd(p: PlotCmd) -> Result<()> {
    match p {
        PlotCmd::Importance { common, sign_vs_target } => {
            let table = read_table(&common.input)?;
            let targets = table.targets();
            let sign = if sign_vs_target {
                SignReference::Target(&targets)
            } else {
                SignReference::Attribution
            };
            let svg = plot::plot_importance(&table.importance(sign)?)?;
            write_svg(&common.out, &svg)
        }
        PlotCmd::Beeswarm { common } => {
            let table = read_table(&common.input)?;
            let importance = table.importance(SignReference::Attribution)?;
            let svg = plot::plot_beeswarm(&importance, &table.value_rows(), &table.explanations())?;
            write_svg(&common.out, &svg)
        }
        PlotCmd::Dependence { common, feature, window } => {
            let table = read_table(&common.input)?;
            let Some(f) = table.feature_index(&feature) else {
                return usage(format!(
                    "unknown feature `{feature}`; known features: {}",
                    table.feature_names.join(", ")
                ));
            };
            if window == 0 {
                return usage("--window must be at least 1");
            }
            let svg = plot::plot_dependence(&feature, &table.column(f), &table.phi_column(f), window)?;
            write_svg(&common.out, &svg)
        }
        PlotCmd::Interaction { common } => {
            let f = File::open(&common.input).with_context(|| format!("cannot read {}", common.input.display()))?;
            let ((a, b), rows) = shap::read_interaction_csv(io::BufReader::new(f))?;
            let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
            let svg = plot::plot_interaction(&a, &b, &col(0), &col(1), &col(2))?;
            write_svg(&common.out, &svg)
        }
    }
}
