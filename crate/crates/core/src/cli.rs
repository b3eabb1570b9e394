//! Command-line surface: argument definitions and command implementations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bundle::{load_bundle, save_bundle, ModelBundle};
use crate::eval::{
    cross_validate_classifier, cross_validate_regressor, render_table, scatter_csv, EvalError, DEFAULT_FOLDS,
    DEFAULT_LEVEL,
};
use crate::features::{ModelId, SeasonClock};
use crate::ingest::{DiagnosticKind, DEFAULT_MAX_GAP};
use crate::pipeline::{forecast, load_labels, make_dataset, prepare_climate, train_bundle, PreparedClimate, TrainingConfig};
use crate::synth::{generate_seasons, SynthConfig};
use crate::tree::dot::to_dot;
use crate::warning::WarningRule;
use crate::Error;

#[derive(Debug, Parser)]
#[command(name = "sunnpest", version, about = "Sunn Pest phase and nymph-stage forecaster")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the phase tree and stage forests and write a model bundle.
    Train(TrainArgs),
    /// Cross-validate both learners and report accuracy and intervals.
    Evaluate(EvaluateArgs),
    /// Forecast phase, stage composition and spray warning per station-day.
    Predict(PredictArgs),
    /// Write one tree of a bundle as a Graphviz DOT file.
    ExportDot(ExportDotArgs),
    /// Generate a labeled synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Table,
    Records,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Climate CSV files; stations may span several files.
    #[arg(long, required = true, num_args = 1..)]
    pub climate: Vec<PathBuf>,
    /// Label CSV file.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value = "m2", value_parser = ModelId::from_str)]
    pub model: ModelId,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Day of year on which accumulation restarts.
    #[arg(long, default_value_t = 1)]
    pub cycle_start: u32,
    /// Longest gap, in days, that is filled by interpolation.
    #[arg(long, default_value_t = DEFAULT_MAX_GAP)]
    pub max_gap: usize,
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    pub report_format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Bundle output path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    pub folds: usize,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    pub level: f64,
    /// Also write the full report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write out-of-fold predicted and actual stage ratios as CSV.
    #[arg(long)]
    pub scatter: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WarnArgs {
    /// Nymph stages whose combined share triggers the warning.
    #[arg(long, value_delimiter = ',', default_values_t = [2u8, 3])]
    pub warn_stages: Vec<u8>,
    #[arg(long, default_value_t = 0.55)]
    pub warn_threshold: f64,
    /// Allow a spray window outside phase 3.
    #[arg(long)]
    pub ignore_phase: bool,
}

impl WarnArgs {
    fn rule(&self) -> Result<WarningRule, Error> {
        WarningRule::new(self.warn_stages.iter().copied(), self.warn_threshold, !self.ignore_phase).map_err(Error::Invalid)
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub climate: Vec<PathBuf>,
    /// First day to forecast (YYYY-MM-DD).
    #[arg(long)]
    pub from: Option<NaiveDate>,
    /// Last day to forecast (YYYY-MM-DD).
    #[arg(long)]
    pub to: Option<NaiveDate>,
    #[command(flatten)]
    pub warn: WarnArgs,
    #[arg(long, value_enum, default_value_t = ReportFormat::Records)]
    pub report_format: ReportFormat,
    /// Also write line-delimited records to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WhichTree {
    Phase,
    Stage(u8),
}

impl FromStr for WhichTree {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("phase") {
            return Ok(WhichTree::Phase);
        }
        match s.parse::<u8>() {
            Ok(n @ 1..=5) => Ok(WhichTree::Stage(n)),
            _ => Err(format!("expected `phase` or a stage 1..5, got `{s}`")),
        }
    }
}

#[derive(Debug, Args)]
pub struct ExportDotArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// `phase` or a nymph stage 1..5.
    #[arg(long, default_value = "phase", value_parser = WhichTree::from_str)]
    pub which: WhichTree,
    /// Tree of the stage forest to export.
    #[arg(long, default_value_t = 0)]
    pub tree_index: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for climate.csv, labels.csv and truth.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub years: u32,
    #[arg(long, default_value_t = 2)]
    pub stations: u32,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 2015)]
    pub start_year: i32,
    #[arg(long, default_value_t = 1)]
    pub cycle_start: u32,
    #[arg(long, default_value_t = 0.02)]
    pub missing_rate: f64,
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn io_out(e: std::io::Error) -> Error {
    Error::Io {
        path: "<stdout>".into(),
        source: e,
    }
}

fn load_climate(paths: &[PathBuf], clock: SeasonClock, max_gap: usize, err: &mut dyn Write) -> Result<PreparedClimate, Error> {
    let sources = paths
        .iter()
        .map(|p| Ok((p.display().to_string(), read(p)?)))
        .collect::<Result<Vec<_>, Error>>()?;
    let prepared = prepare_climate(&sources, clock, max_gap)?;
    let mut empty_cells: BTreeMap<&str, usize> = BTreeMap::new();
    for (file, d) in &prepared.diagnostics {
        if d.kind == DiagnosticKind::EmptyCell {
            *empty_cells.entry(file).or_default() += 1;
        } else {
            writeln!(err, "warning: {file}:{}: {}", d.line, d.message).map_err(io_out)?;
        }
    }
    for (file, n) in empty_cells {
        writeln!(err, "note: {file}: {n} empty cells treated as missing").map_err(io_out)?;
    }
    for (station, date, v) in &prepared.violations {
        writeln!(err, "warning: {station} {date}: {}", v.message).map_err(io_out)?;
    }
    for report in &prepared.gap_reports {
        for span in report.unrepairable() {
            writeln!(
                err,
                "warning: {} {}: {} days missing from {} to {}, left unfilled",
                report.station_id,
                span.field,
                span.days(),
                span.first,
                span.last
            )
            .map_err(io_out)?;
        }
    }
    Ok(prepared)
}

fn load_dataset(d: &DataArgs, err: &mut dyn Write) -> Result<(crate::features::Dataset, SeasonClock), Error> {
    let clock = SeasonClock::new(d.cycle_start)?;
    let climate = load_climate(&d.climate, clock, d.max_gap, err)?;
    let labels = load_labels(&read(&d.labels)?)?;
    for m in &labels.diagnostics {
        writeln!(err, "warning: {}: {m}", d.labels.display()).map_err(io_out)?;
    }
    Ok((make_dataset(&climate, &labels, d.model)?, clock))
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Error> {
    let (ds, clock) = load_dataset(&a.data, err)?;
    let cfg = TrainingConfig::with_seed(a.data.seed, clock, a.data.max_gap);
    let bundle = train_bundle(&ds, &cfg)?;
    save_bundle(&bundle, &a.out)?;
    match a.data.report_format {
        ReportFormat::Records => {
            let summary = serde_json::json!({
                "bundle": a.out.display().to_string(),
                "model_id": bundle.feature_set.model_id,
                "features": bundle.feature_set.fields,
                "metadata": bundle.metadata,
                "phase_tree_nodes": bundle.phase_tree.node_count(),
                "phase_tree_depth": bundle.phase_tree.depth(),
                "forest_nodes": bundle.ratio_predictor.forests.iter().map(|f| f.node_count()).collect::<Vec<_>>(),
            });
            writeln!(out, "{summary}").map_err(io_out)?;
        }
        ReportFormat::Table => {
            let m = &bundle.metadata;
            let mut s = String::new();
            writeln!(s, "model {} with {} features", bundle.feature_set.model_id, bundle.feature_set.len()).unwrap();
            writeln!(
                s,
                "instances {} ({} with nymph counts), dropped {} without features, {} without labels",
                m.instances, m.regression_instances, m.dropped_no_features, m.dropped_no_label
            )
            .unwrap();
            writeln!(
                s,
                "phase tree: {} nodes, {} leaves, depth {}",
                bundle.phase_tree.node_count(),
                bundle.phase_tree.leaf_count(),
                bundle.phase_tree.depth()
            )
            .unwrap();
            for f in &bundle.ratio_predictor.forests {
                writeln!(
                    s,
                    "stage {} forest: {} trees, {} nodes",
                    f.target_stage.unwrap_or(0),
                    f.trees.len(),
                    f.node_count()
                )
                .unwrap();
            }
            writeln!(s, "wrote {}", a.out.display()).unwrap();
            out.write_all(s.as_bytes()).map_err(io_out)?;
        }
    }
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Error> {
    let (ds, _) = load_dataset(&a.data, err)?;
    let seed = a.data.seed;
    let classifier = TrainingConfig::with_seed(seed, SeasonClock::default(), a.data.max_gap);
    let class_report = cross_validate_classifier(&ds, &classifier.classifier, a.folds, seed, a.level)?;
    let reg_report = match cross_validate_regressor(&ds, &classifier.forest, a.folds, seed, a.level) {
        Err(EvalError::NoRegressionInstances) => return Err(Error::NoRegressionInstances),
        r => r?,
    };
    let report = class_report.merge(reg_report);
    if let Some(path) = &a.out {
        write_file(path, &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
    }
    if let (Some(path), Some(r)) = (&a.scatter, &report.regression) {
        write_file(path, &scatter_csv(&r.predictions))?;
    }
    match a.data.report_format {
        ReportFormat::Table => out.write_all(render_table(&report).as_bytes()),
        ReportFormat::Records => writeln!(out, "{}", serde_json::to_string(&report).expect("report serializes")),
    }
    .map_err(io_out)
}

fn cmd_predict(a: &PredictArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Error> {
    if let (Some(f), Some(t)) = (a.from, a.to) {
        if f > t {
            return Err(Error::Invalid(format!("--from {f} is after --to {t}")));
        }
    }
    let rule = a.warn.rule()?;
    let bundle = load_bundle(&a.bundle)?;
    let climate = load_climate(&a.climate, bundle.season_clock, bundle.metadata.max_gap, err)?;
    let run = forecast(&bundle, &climate, a.from, a.to, &rule)?;
    for s in &run.skipped {
        writeln!(err, "warning: {} {}: not forecast, {}", s.station_id, s.date, s.reason).map_err(io_out)?;
    }
    let mut records = String::new();
    for f in &run.forecasts {
        records.push_str(&serde_json::to_string(f).expect("forecast serializes"));
        records.push('\n');
    }
    if let Some(path) = &a.out {
        write_file(path, &records)?;
    }
    match a.report_format {
        ReportFormat::Records => out.write_all(records.as_bytes()),
        ReportFormat::Table => {
            let mut s = String::new();
            writeln!(
                s,
                "{:<10} {:<10} {:>5} {:>6} {:>6} {:>6} {:>6} {:>6}  warning",
                "station", "date", "phase", "n1", "n2", "n3", "n4", "n5"
            )
            .unwrap();
            for f in &run.forecasts {
                let r = f.ratios.as_array();
                writeln!(
                    s,
                    "{:<10} {:<10} {:>5} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>6.3}  {}",
                    f.station_id, f.date, f.phase.number(), r[0], r[1], r[2], r[3], r[4], f.warning
                )
                .unwrap();
            }
            out.write_all(s.as_bytes())
        }
    }
    .map_err(io_out)
}

fn cmd_export_dot(a: &ExportDotArgs, out: &mut dyn Write) -> Result<(), Error> {
    let bundle: ModelBundle = load_bundle(&a.bundle)?;
    let (tree, title, names) = match a.which {
        WhichTree::Phase => (
            &bundle.phase_tree,
            "phase".to_string(),
            Some(vec!["phase 1".to_string(), "phase 2".into(), "phase 3".into()]),
        ),
        WhichTree::Stage(s) => {
            let forest = &bundle.ratio_predictor.forests[s as usize - 1];
            let tree = forest.trees.get(a.tree_index).ok_or_else(|| {
                Error::Invalid(format!(
                    "stage {s} forest has {} trees, no tree {}",
                    forest.trees.len(),
                    a.tree_index
                ))
            })?;
            (tree, format!("stage {s} tree {}", a.tree_index), None)
        }
    };
    write_file(&a.out, &to_dot(tree, &title, names.as_deref()))?;
    writeln!(out, "wrote {} ({} nodes)", a.out.display(), tree.node_count()).map_err(io_out)
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<(), Error> {
    let cfg = SynthConfig {
        years: a.years,
        stations: a.stations,
        rng_seed: a.seed,
        start_year: a.start_year,
        cycle_start: SeasonClock::new(a.cycle_start)?,
        missing_rate: a.missing_rate,
        ..SynthConfig::default()
    };
    let season = generate_seasons(&cfg)?;
    fs::create_dir_all(&a.out).map_err(|source| Error::Io {
        path: a.out.display().to_string(),
        source,
    })?;
    write_file(&a.out.join("climate.csv"), &season.climate_csv)?;
    write_file(&a.out.join("labels.csv"), &season.labels_csv)?;
    write_file(
        &a.out.join("truth.json"),
        &(serde_json::to_string(&season.truth).expect("truth serializes") + "\n"),
    )?;
    writeln!(
        out,
        "wrote {} station-days and {} injected gaps to {}",
        season.truth.days.len(),
        season.truth.gaps.len(),
        a.out.display()
    )
    .map_err(io_out)
}

/// Runs one parsed command, writing results to `out` and diagnostics to `err`.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Error> {
    match &cli.command {
        Command::Train(a) => cmd_train(a, out, err),
        Command::Evaluate(a) => cmd_evaluate(a, out, err),
        Command::Predict(a) => cmd_predict(a, out, err),
        Command::ExportDot(a) => cmd_export_dot(a, out),
        Command::Synth(a) => cmd_synth(a, out),
    }
}
