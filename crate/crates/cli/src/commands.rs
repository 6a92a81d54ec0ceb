use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde_json::json;

use bondforest::baseline::{evaluate_ols, fit_ols_rows_present, OlsEvaluation, Resampling};
use bondforest::forest::default_mtry;
use bondforest::importance::{minimal_depth, permutation_importance, rank_report, PermutationConfig};
use bondforest::io::{parse_csv, parse_predictor_csv, write_csv, ParseOptions};
use bondforest::stability::{run_stability, StabilityConfig, StabilityTuning};
use bondforest::synth::{generate, GeneratorConfig};
use bondforest::tuning::{grid_search_mtry, ntree_scan, MtryCurve, NtreeScan, ScanRow};
use bondforest::{Dataset, Error, Forest, ForestParams, OobReport, PermutationScore, Schema};

use crate::manifest::Run;

/// Tree counts reported by default in convergence tables.
pub const SCAN_SIZES: [usize; 9] = [50, 100, 200, 350, 500, 700, 1000, 1400, 2000];

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Training data CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Column given in basis points; divided by 100 on read. Repeatable.
    #[arg(long = "bps", value_name = "COLUMN")]
    pub bps: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ForestArgs {
    /// Number of trees.
    #[arg(long, default_value_t = bondforest::forest::DEFAULT_TREES)]
    pub trees: usize,
    /// Predictors tried per split [default: max(1, P/3)].
    #[arg(long)]
    pub mtry: Option<usize>,
    /// A node is split only while it holds more than this many observations.
    #[arg(long, default_value_t = bondforest::forest::DEFAULT_NODE_SIZE)]
    pub node_size: usize,
    /// Depth limit; unlimited when absent.
    #[arg(long)]
    pub max_depth: Option<usize>,
}

impl ForestArgs {
    fn resolve(&self, p: usize, seed: u64) -> ForestParams {
        ForestParams {
            n_trees: self.trees,
            mtry: self.mtry.unwrap_or_else(|| default_mtry(p)),
            node_size: self.node_size,
            max_depth: self.max_depth,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Score {
    Raw,
    Normalized,
    Percent,
}

impl From<Score> for PermutationScore {
    fn from(s: Score) -> Self {
        match s {
            Score::Raw => PermutationScore::Raw,
            Score::Normalized => PermutationScore::Normalized,
            Score::Percent => PermutationScore::Percent,
        }
    }
}

fn forest_json(p: &ForestParams) -> serde_json::Value {
    json!({
        "n_trees": p.n_trees,
        "mtry": p.mtry,
        "node_size": p.node_size,
        "max_depth": p.max_depth,
        "seed": p.seed,
    })
}

fn load_dataset(run: &mut Run, args: &DataArgs) -> Result<Dataset> {
    let bytes = run.read_input(&args.data)?;
    let opts = ParseOptions {
        bps_columns: args.bps.clone(),
    };
    parse_csv(&bytes[..], &Schema::cat_bond(), &opts).with_context(|| format!("in {}", args.data.display()))
}

fn load_model(run: &mut Run, path: &Path) -> Result<Forest> {
    let bytes = run.read_input(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Model("not UTF-8".into()))?;
    Forest::from_json(&text).with_context(|| format!("in {}", path.display()))
}

// ---------------------------------------------------------------- gen-data

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    /// Generator configuration (JSON); its seed is replaced by --seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of rows [default: 934, or the config's value].
    #[arg(long)]
    pub rows: Option<usize>,
    /// Standard deviation of the response noise [default: 1.0, or the config's value].
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// Output file name inside --out-dir. The generator configuration is
    /// written next to it with a `.config.json` suffix.
    #[arg(long, default_value = "data.csv")]
    pub output: String,
}

pub fn gen_data(run: &mut Run, a: &GenDataArgs) -> Result<serde_json::Value> {
    let mut cfg = match &a.config {
        Some(path) => {
            let bytes = run.read_input(path)?;
            serde_json::from_slice::<GeneratorConfig>(&bytes)
                .with_context(|| format!("{} is not a generator configuration", path.display()))?
        }
        None => GeneratorConfig::new(bondforest::synth::DEFAULT_ROWS, run.seed),
    };
    cfg.seed = run.seed;
    if let Some(n) = a.rows {
        cfg.n = n;
    }
    if let Some(sd) = a.noise_sd {
        cfg.noise_sd = sd;
    }
    let ds = generate(&cfg)?;
    let mut csv = Vec::new();
    write_csv(&ds, &mut csv)?;
    run.write_output(&a.output, &csv)?;
    let stem = a.output.strip_suffix(".csv").unwrap_or(&a.output);
    let config_text = serde_json::to_string_pretty(&cfg)? + "\n";
    run.write_output(&format!("{stem}.config.json"), config_text.as_bytes())?;
    Ok(json!({ "generator": cfg, "output": a.output }))
}

// ------------------------------------------------------------------- train

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// Model file name inside --out-dir.
    #[arg(long, default_value = "model.json")]
    pub model: String,
}

#[derive(Debug, serde::Serialize)]
struct TrainReport {
    n: usize,
    p: usize,
    n_trees: usize,
    mtry: usize,
    node_size: usize,
    max_depth: Option<usize>,
    seed: u64,
    mse_oob: f64,
    r2_oob: f64,
    n_covered: usize,
    n_never_oob: usize,
    training_digest: String,
}

impl TrainReport {
    fn text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "N                  {}", self.n);
        let _ = writeln!(out, "P                  {}", self.p);
        let _ = writeln!(out, "K (trees)          {}", self.n_trees);
        let _ = writeln!(out, "mtry               {}", self.mtry);
        let _ = writeln!(out, "node size          {}", self.node_size);
        let depth = self.max_depth.map_or_else(|| "unlimited".to_string(), |d| d.to_string());
        let _ = writeln!(out, "max depth          {depth}");
        let _ = writeln!(out, "MSE_OOB            {:.6}", self.mse_oob);
        let _ = writeln!(out, "R2_OOB             {:.2}%", 100.0 * self.r2_oob);
        let _ = writeln!(out, "rows never OOB     {}", self.n_never_oob);
        out
    }
}

pub fn train(run: &mut Run, a: &TrainArgs) -> Result<serde_json::Value> {
    let ds = load_dataset(run, &a.data)?;
    let params = a.forest.resolve(ds.n_features(), run.seed);
    let forest = Forest::fit(&ds, &params)?;
    let oob = forest.oob(&ds)?;
    let report = TrainReport {
        n: ds.n_rows(),
        p: ds.n_features(),
        n_trees: params.n_trees,
        mtry: params.mtry,
        node_size: params.node_size,
        max_depth: params.max_depth,
        seed: params.seed,
        mse_oob: oob.mse,
        r2_oob: oob.r2,
        n_covered: oob.n_covered,
        n_never_oob: oob.n_never_oob,
        training_digest: forest.training_digest().to_string(),
    };
    run.write_output(&a.model, forest.to_json()?.as_bytes())?;
    run.write_output("train_report.json", (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
    run.write_output("train_report.txt", report.text().as_bytes())?;
    Ok(json!({ "forest": forest_json(&params), "model": a.model }))
}

// -------------------------------------------------------------------- tune

#[derive(Debug, Clone, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// mtry values to cross-validate [default: 1..=P].
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Tree counts for the out-of-bag convergence scan.
    #[arg(long, value_delimiter = ',', default_values_t = SCAN_SIZES)]
    pub scan: Vec<usize>,
    /// Skip the convergence scan.
    #[arg(long)]
    pub no_scan: bool,
}

fn scan_text(scan: &NtreeScan) -> String {
    let mut out = String::from("     K      MSE_OOB    R2_OOB\n");
    for r in &scan.rows {
        let _ = writeln!(out, "{:>6} {:>12.6} {:>8.2}%", r.n_trees, r.mse_oob, 100.0 * r.r2_oob);
    }
    let _ = writeln!(out, "chosen K: {}", scan.chosen);
    out
}

fn curve_text(curve: &MtryCurve) -> String {
    let mut out = String::from("mtry  mean CV R2\n");
    for (m, r) in curve.grid.iter().zip(&curve.mean_cv_r2) {
        let _ = writeln!(out, "{m:>4} {:>10.2}%", 100.0 * r);
    }
    let _ = writeln!(out, "chosen mtry: {}", curve.chosen);
    out
}

pub fn tune(run: &mut Run, a: &TuneArgs) -> Result<serde_json::Value> {
    let ds = load_dataset(run, &a.data)?;
    let p = ds.n_features();
    let fixed = a.forest.resolve(p, run.seed);
    let grid: Vec<usize> = if a.grid.is_empty() { (1..=p).collect() } else { a.grid.clone() };
    let curve = grid_search_mtry(&ds, &grid, a.folds, &fixed, run.seed)?;
    run.write_output("mtry_curve.csv", curve.to_csv().as_bytes())?;
    let mut text = curve_text(&curve);
    if !a.no_scan {
        let params = ForestParams {
            mtry: curve.chosen,
            ..fixed
        };
        let scan = ntree_scan(&ds, &a.scan, &params, run.seed)?;
        run.write_output("oob_convergence.csv", scan.to_csv().as_bytes())?;
        text.push('\n');
        text.push_str(&scan_text(&scan));
    }
    run.write_output("tune.txt", text.as_bytes())?;
    Ok(json!({
        "forest": forest_json(&fixed),
        "grid": grid,
        "folds": a.folds,
        "scan": if a.no_scan { None } else { Some(&a.scan) },
    }))
}

// -------------------------------------------------------------- importance

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImportanceMethod {
    Both,
    Permutation,
    MinimalDepth,
}

#[derive(Debug, Clone, Args)]
pub struct ImportanceArgs {
    /// Model file written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// The model's training data.
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = ImportanceMethod::Both)]
    pub method: ImportanceMethod,
    /// Permutations averaged per tree and feature.
    #[arg(long, default_value_t = 1)]
    pub repetitions: usize,
    /// Permutation score used for ranking.
    #[arg(long, value_enum, default_value_t = Score::Percent)]
    pub score: Score,
}

pub fn importance(run: &mut Run, a: &ImportanceArgs) -> Result<serde_json::Value> {
    let forest = load_model(run, &a.model)?;
    let ds = load_dataset(run, &a.data)?;
    let cfg = PermutationConfig {
        seed: run.seed,
        repetitions: a.repetitions,
        primary: a.score.into(),
    };
    let (csv, text) = match a.method {
        ImportanceMethod::Both => {
            let pi = permutation_importance(&forest, &ds, &cfg)?;
            let table = rank_report(&pi, &minimal_depth(&forest))?;
            (table.to_csv(), table.to_text())
        }
        ImportanceMethod::Permutation => {
            let pi = permutation_importance(&forest, &ds, &cfg)?;
            let mut csv = String::from("feature,raw,normalized,percent,std_error,rank\n");
            let mut rank = vec![0; pi.features.len()];
            for (r, &f) in pi.ranking.iter().enumerate() {
                rank[f] = r + 1;
            }
            for f in 0..pi.features.len() {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    pi.features[f], pi.raw[f], pi.normalized[f], pi.percent[f], pi.std_error[f], rank[f]
                );
            }
            let scores = pi.scores(cfg.primary);
            let mut text = String::from("rank  feature          score\n");
            for (r, &f) in pi.ranking.iter().enumerate() {
                let _ = writeln!(text, "{:>4}  {:<16}{:>8.3}", r + 1, pi.features[f], scores[f]);
            }
            (csv, text)
        }
        ImportanceMethod::MinimalDepth => {
            let md = minimal_depth(&forest);
            let mut csv = String::from("feature,minimal_depth,rank,selected\n");
            let mut rank = vec![0; md.features.len()];
            for (r, &f) in md.ranking.iter().enumerate() {
                rank[f] = r + 1;
            }
            for f in 0..md.features.len() {
                let _ = writeln!(csv, "{},{},{},{}", md.features[f], md.mean_depth[f], rank[f], md.selected[f]);
            }
            let mut text = format!("threshold {:.3}\nrank  feature          depth\n", md.threshold);
            for (r, &f) in md.ranking.iter().enumerate() {
                let _ = writeln!(text, "{:>4}  {:<16}{:>8.3}", r + 1, md.features[f], md.mean_depth[f]);
            }
            (csv, text)
        }
    };
    run.write_output("importance.csv", csv.as_bytes())?;
    run.write_output("importance.txt", text.as_bytes())?;
    Ok(json!({
        "method": format!("{:?}", a.method),
        "repetitions": a.repetitions,
        "score": format!("{:?}", a.score),
    }))
}

// --------------------------------------------------------------- stability

#[derive(Debug, Clone, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    /// Use --mtry for both halves instead of cross-validating it per half.
    #[arg(long)]
    pub no_tune: bool,
    /// mtry values cross-validated per half [default: 1..=P].
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Trees per cross-validation forest [default: --trees].
    #[arg(long)]
    pub cv_trees: Option<usize>,
    #[arg(long, value_enum, default_value_t = Score::Percent)]
    pub score: Score,
}

fn stability_config(
    p: usize,
    seed: u64,
    forest: ForestParams,
    iterations: usize,
    tune: Option<StabilityTuning>,
    score: Score,
) -> StabilityConfig {
    StabilityConfig {
        iterations,
        tune,
        forest,
        permutation_score: score.into(),
        ..StabilityConfig::defaults(p, seed)
    }
}

pub fn stability(run: &mut Run, a: &StabilityArgs) -> Result<serde_json::Value> {
    let ds = load_dataset(run, &a.data)?;
    let p = ds.n_features();
    let forest = a.forest.resolve(p, run.seed);
    let tune = (!a.no_tune).then(|| StabilityTuning {
        grid: if a.grid.is_empty() { (1..=p).collect() } else { a.grid.clone() },
        folds: a.folds,
        n_trees: a.cv_trees.unwrap_or(forest.n_trees),
    });
    let cfg = stability_config(p, run.seed, forest, a.iterations, tune, a.score);
    let report = run_stability(&ds, &cfg)?;
    run.write_output("stability_iterations.csv", report.iterations_csv().as_bytes())?;
    run.write_output("stability_agreement.csv", report.agreement_csv().as_bytes())?;
    run.write_output("stability_frequency.csv", report.frequency_csv().as_bytes())?;
    run.write_output("stability_summary.csv", report.summary_csv().as_bytes())?;
    run.write_output("stability.txt", report.to_text().as_bytes())?;
    Ok(serde_json::to_value(&cfg)?)
}

// ---------------------------------------------------------------- baseline

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scheme {
    Bootstrap,
    Kfold,
    Loocv,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = Scheme::Bootstrap)]
    pub scheme: Scheme,
    /// Bootstrap resamples.
    #[arg(long, default_value_t = 700)]
    pub resamples: usize,
    /// Folds for k-fold cross-validation.
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
}

fn scheme_name(s: &Resampling) -> String {
    match s {
        Resampling::BootstrapOob { resamples } => format!("bootstrap_oob({resamples})"),
        Resampling::KFold { folds } => format!("kfold({folds})"),
        Resampling::Loocv => "loocv".into(),
    }
}

pub fn baseline(run: &mut Run, a: &BaselineArgs) -> Result<serde_json::Value> {
    let ds = load_dataset(run, &a.data)?;
    let schemes: Vec<Resampling> = match a.scheme {
        Scheme::Bootstrap => vec![Resampling::BootstrapOob { resamples: a.resamples }],
        Scheme::Kfold => vec![Resampling::KFold { folds: a.folds }],
        Scheme::Loocv => vec![Resampling::Loocv],
        Scheme::All => vec![
            Resampling::BootstrapOob { resamples: a.resamples },
            Resampling::KFold { folds: a.folds },
            Resampling::Loocv,
        ],
    };
    let model = fit_ols_rows_present(&ds, &(0..ds.n_rows()).collect::<Vec<_>>())?;
    let evals: Vec<OlsEvaluation> = schemes
        .iter()
        .map(|&s| evaluate_ols(&ds, s, run.seed))
        .collect::<bondforest::Result<_>>()?;
    let mut csv = String::from("scheme,r2,mse,n_predicted,resamples,skipped,withheld\n");
    let mut text = String::from("OLS baseline (main effects, treatment-coded levels)\n");
    for e in &evals {
        let name = scheme_name(&e.scheme);
        let _ = writeln!(
            csv,
            "{name},{},{},{},{},{},{}",
            e.r2, e.mse, e.n_predicted, e.resamples, e.skipped, e.withheld
        );
        let _ = writeln!(
            text,
            "{name:<20} R2 {:>7.2}%  MSE {:.6}  ({} of {} resamples skipped, {} held-out rows with unseen levels)",
            100.0 * e.r2,
            e.mse,
            e.skipped,
            e.resamples,
            e.withheld
        );
    }
    let dropped = model.dropped();
    if !dropped.is_empty() {
        let _ = writeln!(text, "levels absent from the data, coefficients fixed at 0: {}", dropped.join(", "));
    }
    run.write_output("baseline_coefficients.csv", model.coefficients_csv().as_bytes())?;
    run.write_output("baseline_r2.csv", csv.as_bytes())?;
    run.write_output("baseline.txt", text.as_bytes())?;
    Ok(json!({ "schemes": schemes }))
}

// ----------------------------------------------------------------- predict

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    /// Model file written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// CSV of records to score; a `guidance` column and an `id` column are
    /// used when present, and the response column is ignored.
    #[arg(long, conflicts_with = "set", required_unless_present = "set")]
    pub input: Option<PathBuf>,
    /// One record given as name=value pairs, e.g. `--set el=1.5 --set trigger=Indemnity`.
    #[arg(long, value_name = "NAME=VALUE")]
    pub set: Vec<String>,
    /// Column given in basis points; divided by 100 on read. Repeatable.
    #[arg(long = "bps", value_name = "COLUMN")]
    pub bps: Vec<String>,
    /// Price guidance (spread, percent) to compare against; applies to rows
    /// without their own guidance value.
    #[arg(long)]
    pub guidance: Option<f64>,
    /// Half-width of the band, in percentage points, within which guidance
    /// counts as fair. An arbitrary default, not a market convention.
    #[arg(long, default_value_t = 1.0)]
    pub band: f64,
    /// Output file name inside --out-dir.
    #[arg(long, default_value = "predictions.csv")]
    pub output: String,
}

/// Compares guidance to the model: `over` means guidance exceeds the
/// prediction by more than `band`, `under` that it falls short by more.
pub fn label(prediction: f64, guidance: f64, band: f64) -> &'static str {
    let gap = prediction - guidance;
    if gap.abs() <= band {
        "fair"
    } else if gap < 0.0 {
        "over"
    } else {
        "under"
    }
}

fn record_from_pairs(schema: &Schema, pairs: &[String], bps: &[String]) -> Result<Vec<f64>> {
    let mut row: Vec<Option<f64>> = vec![None; schema.n_features()];
    for pair in pairs {
        let Some((name, value)) = pair.split_once('=') else {
            bail!("`{pair}` is not of the form NAME=VALUE");
        };
        let (name, value) = (name.trim(), value.trim());
        if name.eq_ignore_ascii_case(&schema.response().name) {
            continue;
        }
        let f = schema.feature_index(name).ok_or_else(|| Error::UnknownColumn { column: name.into() })?;
        let spec = schema.feature(f);
        let v = if spec.is_categorical() {
            spec.level_index(value).ok_or_else(|| Error::UnknownLevel {
                row: 1,
                column: spec.name.clone(),
                value: value.into(),
            })? as f64
        } else {
            let v: f64 = value.parse().map_err(|_| Error::NotNumeric {
                row: 1,
                column: spec.name.clone(),
                value: value.into(),
            })?;
            if bps.iter().any(|b| b.eq_ignore_ascii_case(&spec.name)) { v / 100.0 } else { v }
        };
        if !schema.check_value(f, v) {
            return Err(Error::OutOfRange {
                row: 1,
                column: spec.name.clone(),
                value: v,
                range: spec.range.describe(),
            }
            .into());
        }
        if row[f].replace(v).is_some() {
            return Err(Error::DuplicateColumn { column: spec.name.clone() }.into());
        }
    }
    row.iter()
        .enumerate()
        .map(|(f, v)| {
            v.ok_or_else(|| anyhow::anyhow!("no value given for `{}`; pass --set {}=VALUE", schema.feature(f).name, schema.feature(f).name))
        })
        .collect()
}

pub fn predict(run: &mut Run, a: &PredictArgs) -> Result<(serde_json::Value, String)> {
    if !(a.band.is_finite() && a.band >= 0.0) {
        bail!("--band must be finite and non-negative");
    }
    let forest = load_model(run, &a.model)?;
    let schema = forest.schema().clone();
    let (rows, ids, guidance) = match &a.input {
        Some(path) => {
            let bytes = run.read_input(path)?;
            let opts = ParseOptions {
                bps_columns: a.bps.clone(),
            };
            let table = parse_predictor_csv(&bytes[..], &schema, &opts, &["id", "guidance"])
                .with_context(|| format!("in {}", path.display()))?;
            let n = table.rows.len();
            let ids = table.extras[0].clone();
            let guidance = match &table.extras[1] {
                Some(cells) => cells
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        if c.trim().is_empty() {
                            return Ok(a.guidance);
                        }
                        c.trim().parse::<f64>().map(Some).map_err(|_| Error::NotNumeric {
                            row: i + 1,
                            column: "guidance".into(),
                            value: c.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?,
                None => vec![a.guidance; n],
            };
            (table.rows, ids, guidance)
        }
        None => (vec![record_from_pairs(&schema, &a.set, &a.bps)?], None, vec![a.guidance]),
    };
    let mut csv = String::new();
    csv.push_str(if ids.is_some() { "row,id," } else { "row," });
    csv.push_str("prediction,guidance,gap,label\n");
    for (i, row) in rows.iter().enumerate() {
        let pred = forest.predict(row)?;
        if let Some(ids) = &ids {
            let _ = write!(csv, "{},{},", i + 1, ids[i]);
        } else {
            let _ = write!(csv, "{},", i + 1);
        }
        match guidance[i] {
            Some(g) => {
                let _ = writeln!(csv, "{pred},{g},{},{}", pred - g, label(pred, g, a.band));
            }
            None => {
                let _ = writeln!(csv, "{pred},,,");
            }
        }
    }
    run.write_output(&a.output, csv.as_bytes())?;
    let params = json!({
        "records": rows.len(),
        "guidance": a.guidance,
        "band": a.band,
        "set": a.set,
        "bps": a.bps,
    });
    Ok((params, csv))
}

// ------------------------------------------------------------------ report

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Model file written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// The model's training data.
    #[command(flatten)]
    pub data: DataArgs,
    /// Tree counts for the convergence table, evaluated on the model's own
    /// leading trees; counts above the model's size are dropped.
    #[arg(long, value_delimiter = ',', default_values_t = SCAN_SIZES)]
    pub scan: Vec<usize>,
    /// Report only the full model in the convergence table.
    #[arg(long)]
    pub no_scan: bool,
    /// mtry values to cross-validate [default: 1..=P].
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Trees per cross-validation forest [default: the model's size].
    #[arg(long)]
    pub cv_trees: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub repetitions: usize,
    #[arg(long, value_enum, default_value_t = Score::Percent)]
    pub score: Score,
    /// Also run an untuned split-half stability analysis with this many iterations.
    #[arg(long)]
    pub stability_iterations: Option<usize>,
}

fn convergence(forest: &Forest, ds: &Dataset, sizes: &[usize]) -> Result<Vec<ScanRow>> {
    let reports: Vec<OobReport> = forest.oob_prefixes(ds, sizes)?;
    Ok(sizes
        .iter()
        .zip(reports)
        .map(|(&k, r)| ScanRow {
            n_trees: k,
            mse_oob: r.mse,
            r2_oob: r.r2,
        })
        .collect())
}

pub fn report(run: &mut Run, a: &ReportArgs) -> Result<serde_json::Value> {
    let forest = load_model(run, &a.model)?;
    let ds = load_dataset(run, &a.data)?;
    let params = *forest.params();
    let p = ds.n_features();
    let k = forest.n_trees();

    let mut sizes: Vec<usize> = if a.no_scan {
        vec![]
    } else {
        a.scan.iter().copied().filter(|&s| s >= 1 && s < k).collect()
    };
    sizes.push(k);
    sizes.sort_unstable();
    sizes.dedup();
    let rows = convergence(&forest, &ds, &sizes)?;
    let mut conv = String::from("n_trees,mse_oob,r2_oob\n");
    for r in &rows {
        let _ = writeln!(conv, "{},{},{}", r.n_trees, r.mse_oob, r.r2_oob);
    }
    run.write_output("oob_convergence.csv", conv.as_bytes())?;

    let grid: Vec<usize> = if a.grid.is_empty() { (1..=p).collect() } else { a.grid.clone() };
    let cv_fixed = ForestParams {
        n_trees: a.cv_trees.unwrap_or(k),
        ..params
    };
    let curve = grid_search_mtry(&ds, &grid, a.folds, &cv_fixed, run.seed)?;
    run.write_output("mtry_curve.csv", curve.to_csv().as_bytes())?;

    let cfg = PermutationConfig {
        seed: run.seed,
        repetitions: a.repetitions,
        primary: a.score.into(),
    };
    let table = rank_report(&permutation_importance(&forest, &ds, &cfg)?, &minimal_depth(&forest))?;
    run.write_output("importance.csv", table.to_csv().as_bytes())?;

    let stab = match a.stability_iterations {
        Some(iterations) => {
            let scfg = stability_config(p, run.seed, params, iterations, None, a.score);
            let report = run_stability(&ds, &scfg)?;
            run.write_output("stability_summary.csv", report.summary_csv().as_bytes())?;
            Some(report)
        }
        None => None,
    };

    let full = rows.last().expect("model size is always reported");
    let mut md = String::from("# Forest report\n\n## Model\n\n| field | value |\n|---|---|\n");
    let _ = writeln!(md, "| N | {} |", ds.n_rows());
    let _ = writeln!(md, "| P | {p} |");
    let _ = writeln!(md, "| K | {k} |");
    let _ = writeln!(md, "| mtry | {} |", params.mtry);
    let _ = writeln!(md, "| node size | {} |", params.node_size);
    let _ = writeln!(md, "| MSE_OOB | {:.6} |", full.mse_oob);
    let _ = writeln!(md, "| R2_OOB | {:.2}% |", 100.0 * full.r2_oob);
    let _ = writeln!(md, "| training data sha256 | `{}` |", forest.training_digest());
    md.push_str("\n## Out-of-bag convergence\n\n| K | MSE_OOB | R2_OOB |\n|---:|---:|---:|\n");
    for r in &rows {
        let _ = writeln!(md, "| {} | {:.6} | {:.2}% |", r.n_trees, r.mse_oob, 100.0 * r.r2_oob);
    }
    let _ = write!(
        md,
        "\n## mtry cross-validation ({} folds, {} trees)\n\n| mtry | mean CV R2 |\n|---:|---:|\n",
        a.folds, cv_fixed.n_trees
    );
    for (m, r) in curve.grid.iter().zip(&curve.mean_cv_r2) {
        let mark = if *m == curve.chosen { " (chosen)" } else { "" };
        let _ = writeln!(md, "| {m}{mark} | {:.2}% |", 100.0 * r);
    }
    let _ = write!(
        md,
        "\n## Variable importance\n\nMinimal-depth threshold: {:.3}\n\n\
         | feature | % increase MSE | permutation rank | minimal depth | depth rank | selected |\n\
         |---|---:|---:|---:|---:|:---:|\n",
        table.threshold
    );
    let mut by_rank: Vec<_> = table.rows.iter().collect();
    by_rank.sort_by_key(|r| r.permutation_rank);
    for r in by_rank {
        let _ = writeln!(
            md,
            "| {} | {:.3} | {} | {:.3} | {} | {} |",
            r.feature,
            r.percent,
            r.permutation_rank,
            r.minimal_depth,
            r.minimal_depth_rank,
            if r.selected { "yes" } else { "no" }
        );
    }
    if let Some(s) = &stab {
        md.push_str("\n## Split-half stability\n\n```\n");
        md.push_str(&s.to_text());
        md.push_str("```\n");
    }
    run.write_output("summary.md", md.as_bytes())?;

    Ok(json!({
        "scan": sizes,
        "grid": curve.grid,
        "folds": a.folds,
        "cv_trees": cv_fixed.n_trees,
        "repetitions": a.repetitions,
        "score": format!("{:?}", a.score),
        "stability_iterations": a.stability_iterations,
    }))
}
