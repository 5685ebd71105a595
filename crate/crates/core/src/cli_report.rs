//! Command-line front end and benchmark table rendering.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;
use walkdir::WalkDir;

use crate::augmentation::AugmentationConfig;
use crate::config::{ConfigError, ConfigFile, EvalSection, CONFIG_ENV};
use crate::dataset_pipeline::{
    plan_dataset, render_condition_grid, simulate_dataset, ClassMode, PairingRule, PipelineConfig, PipelineError,
};
use crate::depth_eval::{aggregate, evaluate_pair, DatasetSummary, EvalError, EvalPair, MetricsReport, Pooling};
use crate::image_formation::{planar_depth_to_range, CameraIntrinsics, DepthKind, FormationError, FormationSpace};
use crate::imageio::{self, DepthFormat, ImageIoError, Rgb8};
use crate::water_optics::{OpticsError, WaterClassId};

/// Dataset labels that, when present, lead the column order.
pub const PREFERRED_DATASET_ORDER: [&str; 3] = ["FLSea-Canyon", "FLSea-Red Sea", "SQUID"];
pub const MISSING: &str = "--";
pub const PER_IMAGE_FILE: &str = "per_image.jsonl";
pub const EVAL_SUMMARY_FILE: &str = "summary.json";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ImageIoError> for CliError {
    fn from(e: ImageIoError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FormationError> for CliError {
    fn from(e: FormationError) -> Self {
        match e {
            FormationError::InvalidIntrinsics(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<OpticsError> for CliError {
    fn from(e: OpticsError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::InvalidConfig(_) | PipelineError::Optics(_) | PipelineError::Augment(_) => {
                CliError::Config(e.to_string())
            }
            PipelineError::Formation(f) => f.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidConfig(_) | EvalError::NonPositiveScale(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("no summaries to tabulate")]
    Empty,
    #[error("more than one summary for model `{model}` on dataset `{dataset}`")]
    Duplicate { model: String, dataset: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum TableFormat {
    #[default]
    #[value(name = "md", alias = "markdown")]
    Markdown,
    #[value(name = "csv")]
    Csv,
}

/// One model's AbsRel and δ1 per dataset column; `None` renders as `--`.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub model: String,
    pub cells: Vec<[Option<f64>; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkTable {
    pub datasets: Vec<String>,
    pub rows: Vec<BenchmarkRow>,
}

fn fixed4(v: f64) -> String {
    format!("{v:.4}")
}

impl BenchmarkTable {
    /// Rows follow first appearance of each model. Summaries without a model
    /// or dataset label are grouped under `model` / `dataset`.
    pub fn from_summaries(summaries: &[DatasetSummary]) -> Result<Self, ReportError> {
        if summaries.is_empty() {
            return Err(ReportError::Empty);
        }
        let label = |s: &Option<String>, fallback: &str| s.clone().unwrap_or_else(|| fallback.to_string());

        let mut seen: Vec<String> = Vec::new();
        for s in summaries {
            let d = label(&s.dataset, "dataset");
            if !seen.contains(&d) {
                seen.push(d);
            }
        }
        let mut datasets: Vec<String> = PREFERRED_DATASET_ORDER
            .iter()
            .filter(|p| seen.iter().any(|d| d == *p))
            .map(|p| p.to_string())
            .collect();
        datasets.extend(seen.into_iter().filter(|d| !PREFERRED_DATASET_ORDER.contains(&d.as_str())));

        let mut rows: Vec<BenchmarkRow> = Vec::new();
        for s in summaries {
            let model = label(&s.model, "model");
            let dataset = label(&s.dataset, "dataset");
            let col = datasets.iter().position(|d| *d == dataset).expect("dataset collected above");
            let row = match rows.iter().position(|r| r.model == model) {
                Some(i) => &mut rows[i],
                None => {
                    rows.push(BenchmarkRow {
                        model: model.clone(),
                        cells: vec![[None, None]; datasets.len()],
                    });
                    rows.last_mut().expect("just pushed")
                }
            };
            if row.cells[col] != [None, None] {
                return Err(ReportError::Duplicate { model, dataset });
            }
            let finite = |v: f64| v.is_finite().then_some(v);
            row.cells[col] = [finite(s.abs_rel), s.delta1().and_then(finite)];
        }
        Ok(BenchmarkTable { datasets, rows })
    }

    /// `best[col][metric]`: the winning 4-decimal value, lowest AbsRel and
    /// highest δ1. Ties are decided on the printed value.
    fn best(&self) -> Vec<[Option<String>; 2]> {
        (0..self.datasets.len())
            .map(|col| {
                let pick = |metric: usize, lower: bool| {
                    self.rows
                        .iter()
                        .filter_map(|r| r.cells[col][metric])
                        .map(|v| fixed4(v).parse::<f64>().expect("formatted float parses"))
                        .reduce(|a, b| if (b < a) == lower { b } else { a })
                        .map(fixed4)
                };
                [pick(0, true), pick(1, false)]
            })
            .collect()
    }

    pub fn to_markdown(&self) -> String {
        let best = self.best();
        let mut out = String::from("| Model |");
        for d in &self.datasets {
            let d = d.replace('|', "\\|");
            write!(out, " {d} AbsRel ↓ | {d} δ1 ↑ |").unwrap();
        }
        out.push_str("\n|:---|");
        out.push_str(&"---:|".repeat(2 * self.datasets.len()));
        out.push('\n');
        for row in &self.rows {
            write!(out, "| {} |", row.model.replace('|', "\\|")).unwrap();
            for (cell, best) in row.cells.iter().zip(&best) {
                for m in 0..2 {
                    match cell[m] {
                        None => write!(out, " {MISSING} |").unwrap(),
                        Some(v) => {
                            let s = fixed4(v);
                            if best[m].as_deref() == Some(s.as_str()) {
                                write!(out, " **{s}** |").unwrap();
                            } else {
                                write!(out, " {s} |").unwrap();
                            }
                        }
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let mut header = vec!["model".to_string()];
        for d in &self.datasets {
            header.push(format!("{d} AbsRel"));
            header.push(format!("{d} delta1"));
        }
        w.write_record(&header).expect("in-memory csv write");
        for row in &self.rows {
            let mut rec = vec![row.model.clone()];
            for cell in &row.cells {
                for v in cell {
                    rec.push(v.map(fixed4).unwrap_or_else(|| MISSING.to_string()));
                }
            }
            w.write_record(&rec).expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
    }

    pub fn render(&self, format: TableFormat) -> String {
        match format {
            TableFormat::Markdown => self.to_markdown(),
            TableFormat::Csv => self.to_csv(),
        }
    }
}

/// Renders dataset summaries as a benchmark table. Best values per column are
/// bolded in markdown; CSV carries the same numbers unmarked.
pub fn emit_table(summaries: &[DatasetSummary], format: TableFormat) -> Result<String, ReportError> {
    Ok(BenchmarkTable::from_summaries(summaries)?.render(format))
}

// ---------------------------------------------------------------------------
// Command line

#[derive(Debug, Parser)]
#[command(name = "uwsim", version, about = "Underwater RGB-D simulation and metric depth evaluation")]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true, env = CONFIG_ENV, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Log per-record progress (RUST_LOG takes precedence).
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pair RGB and depth files and write the planned manifest.
    Manifest(ManifestArgs),
    /// Render an underwater copy of an RGB-D dataset.
    Simulate(SimulateArgs),
    /// Render one RGB-D pair under every water class as a tiled image.
    Grid(GridArgs),
    /// Score predicted depth maps against ground truth.
    Eval(EvalArgs),
    /// Turn evaluation summaries into a benchmark table.
    Table(TableArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ColorSpaceArg {
    Srgb,
    Linear,
}

impl From<ColorSpaceArg> for FormationSpace {
    fn from(c: ColorSpaceArg) -> Self {
        match c {
            ColorSpaceArg::Srgb => FormationSpace::Srgb,
            ColorSpaceArg::Linear => FormationSpace::Linear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DepthKindArg {
    Range,
    Planar,
}

impl From<DepthKindArg> for DepthKind {
    fn from(d: DepthKindArg) -> Self {
        match d {
            DepthKindArg::Range => DepthKind::Range,
            DepthKindArg::Planar => DepthKind::Planar,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolingArg {
    PerImage,
    PerPixel,
}

impl From<PoolingArg> for Pooling {
    fn from(p: PoolingArg) -> Self {
        match p {
            PoolingArg::PerImage => Pooling::PerImage,
            PoolingArg::PerPixel => Pooling::PerPixel,
        }
    }
}

fn parse_intrinsics(s: &str) -> Result<CameraIntrinsics, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [fx, fy, cx, cy] => CameraIntrinsics::new(fx, fy, cx, cy).map_err(|e| e.to_string()),
        _ => Err("expected fx,fy,cx,cy".into()),
    }
}

/// Options shared by every command that renders.
#[derive(Debug, Clone, Args)]
pub struct RenderOptions {
    /// Water classes to use, comma separated (default: every class in the table).
    #[arg(long, value_delimiter = ',', value_name = "CLASSES")]
    pub water_classes: Option<Vec<String>>,
    /// Coefficient table file replacing the bundled one.
    #[arg(long, value_name = "FILE")]
    pub table: Option<PathBuf>,
    /// Space the formation model is evaluated in.
    #[arg(long, value_enum)]
    pub color_space: Option<ColorSpaceArg>,
    /// Whether depth files hold range along the ray or planar z.
    #[arg(long, value_enum)]
    pub depth_kind: Option<DepthKindArg>,
    /// Pinhole intrinsics `fx,fy,cx,cy` in pixels, needed for planar depth.
    #[arg(long, value_parser = parse_intrinsics, value_name = "FX,FY,CX,CY")]
    pub intrinsics: Option<CameraIntrinsics>,
    /// Meters per unit for 16-bit PNG depth.
    #[arg(long, value_name = "METERS")]
    pub depth_scale: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct DatasetOptions {
    /// Root of the clean RGB images (.png, .jpg, .jpeg).
    #[arg(long, value_name = "DIR")]
    pub rgb: PathBuf,
    /// Root of the depth maps, mirroring the RGB layout.
    #[arg(long, value_name = "DIR")]
    pub depth: PathBuf,
    /// Depth file name template, e.g. `{stem}.pfm` or `{stem}_depth.png`.
    #[arg(long, value_name = "TEMPLATE")]
    pub pairing: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Render every image once per water class instead of sampling one.
    #[arg(long)]
    pub all_classes: bool,
    /// Disable exposure and grayscale augmentation.
    #[arg(long)]
    pub no_augment: bool,
    #[command(flatten)]
    pub render: RenderOptions,
}

#[derive(Debug, Clone, Args)]
pub struct ManifestArgs {
    #[command(flatten)]
    pub dataset: DatasetOptions,
    /// Write the manifest here instead of standard output.
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub dataset: DatasetOptions,
    /// Output directory.
    #[arg(long, short, value_name = "DIR")]
    pub output: Option<PathBuf>,
    /// Worker threads (0: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Clean RGB image.
    #[arg(long, value_name = "FILE")]
    pub rgb: PathBuf,
    /// Depth map for the image.
    #[arg(long, value_name = "FILE")]
    pub depth: PathBuf,
    /// Output PNG.
    #[arg(long, short, value_name = "FILE")]
    pub output: PathBuf,
    #[command(flatten)]
    pub render: RenderOptions,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Root of predicted depth maps.
    #[arg(long, value_name = "DIR")]
    pub pred: PathBuf,
    /// Root of ground-truth depth maps; predictions are matched by relative path and stem.
    #[arg(long, value_name = "DIR")]
    pub gt: PathBuf,
    /// Directory for the per-image records and summary.
    #[arg(long, short, value_name = "DIR")]
    pub output: Option<PathBuf>,
    /// Model label stored in the summary.
    #[arg(long)]
    pub model: Option<String>,
    /// Dataset label stored in the summary.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Multiplier converting predictions to meters.
    #[arg(long, value_name = "FACTOR")]
    pub unit_scale: Option<f64>,
    /// Ignore ground truth beyond this depth (meters).
    #[arg(long, value_name = "METERS")]
    pub max_depth: Option<f64>,
    /// Rescale each prediction by median(gt) / median(pred) before scoring.
    #[arg(long)]
    pub median_align: bool,
    #[arg(long, value_enum)]
    pub pooling: Option<PoolingArg>,
    /// Meters per unit for 16-bit PNG depth.
    #[arg(long, value_name = "METERS")]
    pub depth_scale: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TableArgs {
    /// Summary files written by `eval`.
    #[arg(required = true, value_name = "SUMMARY")]
    pub summaries: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "md")]
    pub format: TableFormat,
    /// Write the table here instead of standard output.
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

fn apply_render_options(cfg: &mut PipelineConfig, r: &RenderOptions) {
    if let Some(classes) = &r.water_classes {
        cfg.water_classes = classes.iter().map(|c| WaterClassId::new(c.trim())).collect();
    }
    if let Some(t) = &r.table {
        cfg.coefficient_table = Some(t.clone());
    }
    if let Some(c) = r.color_space {
        cfg.color_space = c.into();
    }
    if let Some(d) = r.depth_kind {
        cfg.depth_kind = d.into();
    }
    if let Some(k) = r.intrinsics {
        cfg.intrinsics = Some(k);
    }
    if let Some(s) = r.depth_scale {
        cfg.depth_scale = s;
    }
}

fn apply_dataset_options(cfg: &mut PipelineConfig, d: &DatasetOptions) -> Result<(), CliError> {
    apply_render_options(cfg, &d.render);
    if let Some(seed) = d.seed {
        cfg.seed = seed;
    }
    if let Some(p) = &d.pairing {
        cfg.pairing = PairingRule::new(p.clone()).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if d.all_classes {
        cfg.class_mode = ClassMode::AllClasses;
    }
    if d.no_augment {
        cfg.augmentation = AugmentationConfig {
            enabled: false,
            ..cfg.augmentation.clone()
        };
    }
    Ok(())
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => imageio::write_atomic(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_manifest(file: ConfigFile, args: &ManifestArgs) -> Result<(), CliError> {
    let mut cfg = file.simulate;
    apply_dataset_options(&mut cfg, &args.dataset)?;
    cfg.validate()?;
    let table = cfg.active_table()?;
    let manifest = plan_dataset(&args.dataset.rgb, &args.dataset.depth, &cfg, &table)?;
    write_or_print(args.output.as_deref(), &manifest.to_jsonl())
}

fn cmd_simulate(file: ConfigFile, args: &SimulateArgs) -> Result<(), CliError> {
    let mut cfg = file.simulate;
    apply_dataset_options(&mut cfg, &args.dataset)?;
    if let Some(o) = &args.output {
        cfg.output_dir = o.clone();
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    let table = cfg.active_table()?;
    let manifest = plan_dataset(&args.dataset.rgb, &args.dataset.depth, &cfg, &table)?;
    let summary = simulate_dataset(&manifest, &table, &cfg)?;
    if !summary.failures.is_empty() {
        warn!("{} of {} records failed", summary.failures.len(), summary.total);
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    );
    Ok(())
}

#[derive(Serialize)]
struct GridLayout<'a> {
    output: &'a Path,
    columns: usize,
    rows: usize,
    tile_width: usize,
    tile_height: usize,
    tiles: Vec<&'a str>,
}

fn cmd_grid(file: ConfigFile, args: &GridArgs) -> Result<(), CliError> {
    let mut cfg = file.simulate;
    apply_render_options(&mut cfg, &args.render);
    cfg.validate()?;
    let table = cfg.active_table()?;
    let rgb = imageio::read_rgb8(&args.rgb)?;
    let mut depth = imageio::read_depth(&args.depth, cfg.depth_scale)?;
    if cfg.depth_kind == DepthKind::Planar {
        let k = cfg.intrinsics.as_ref().expect("validated above");
        depth = planar_depth_to_range(&depth, k)?;
    }
    let clean = cfg.color_space.decode_rgb8(rgb.width, rgb.height, &rgb.bytes)?;
    let grid = render_condition_grid(&clean, &depth, &table, cfg.color_space)?;
    let composite = grid.compose();
    let (width, height) = composite.dims();
    imageio::write_png_rgb8(
        &args.output,
        &Rgb8 {
            width,
            height,
            bytes: cfg.color_space.encode_rgb8(&composite),
        },
    )?;
    let (tile_width, tile_height) = grid.tile_size();
    let layout = GridLayout {
        output: &args.output,
        columns: grid.columns,
        rows: grid.rows(),
        tile_width,
        tile_height,
        tiles: grid.tiles.iter().map(|t| t.label.as_str()).collect(),
    };
    println!("{}", serde_json::to_string_pretty(&layout).expect("layout serializes"));
    Ok(())
}

fn depth_files(root: &Path) -> Result<BTreeMap<PathBuf, PathBuf>, CliError> {
    if !root.is_dir() {
        return Err(CliError::Data(format!("{}: not a directory", root.display())));
    }
    let mut out = BTreeMap::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::Data(e.to_string()))?;
        let path = entry.path();
        if entry.file_type().is_file() && DepthFormat::from_path(path).is_some() {
            let rel = path.strip_prefix(root).expect("walk stays under root");
            let key = rel.with_extension("");
            if let Some(prev) = out.insert(key, path.to_path_buf()) {
                return Err(CliError::Data(format!(
                    "ambiguous depth files {} and {}",
                    prev.display(),
                    path.display()
                )));
            }
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct ImageRecord<'a> {
    ground_truth: &'a Path,
    prediction: &'a Path,
    #[serde(skip_serializing_if = "Option::is_none")]
    excluded: Option<String>,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    metrics: Option<&'a MetricsReport>,
}

fn evaluation_settings(file: ConfigFile, args: &EvalArgs) -> EvalSection {
    let mut s = file.eval;
    if let Some(u) = args.unit_scale {
        s.unit_scale = u;
    }
    if let Some(m) = args.max_depth {
        s.max_depth_cap = Some(m);
    }
    if args.median_align {
        s.median_align = true;
    }
    if let Some(p) = args.pooling {
        s.pooling = p.into();
    }
    if let Some(d) = args.depth_scale {
        s.depth_scale = d;
    }
    s
}

fn cmd_eval(file: ConfigFile, args: &EvalArgs) -> Result<(), CliError> {
    let settings = evaluation_settings(file, args);
    let metrics_cfg = settings.metrics();
    metrics_cfg.validate()?;
    if !(settings.depth_scale.is_finite() && settings.depth_scale > 0.0) {
        return Err(CliError::Config(format!("depth_scale must be positive, got {}", settings.depth_scale)));
    }

    let gt = depth_files(&args.gt)?;
    let pred = depth_files(&args.pred)?;
    if gt.is_empty() {
        return Err(CliError::Data(format!("no depth maps under {}", args.gt.display())));
    }
    let missing: Vec<String> = gt
        .iter()
        .filter(|(k, _)| !pred.contains_key(*k))
        .map(|(_, p)| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Data(format!("no prediction for: {}", missing.join(", "))));
    }
    let pairs: Vec<(&PathBuf, &PathBuf)> = gt.iter().map(|(k, g)| (g, &pred[k])).collect();

    let results: Vec<Result<Result<MetricsReport, EvalError>, CliError>> = pairs
        .par_iter()
        .map(|(g, p)| {
            let gt_map = imageio::read_depth(g, settings.depth_scale)?;
            let pred_map = imageio::read_depth(p, settings.depth_scale)?;
            let pair = EvalPair::new(pred_map, gt_map)
                .map_err(|e| CliError::Data(format!("{}: {e}", g.display())))?;
            Ok(evaluate_pair(&pair, &metrics_cfg))
        })
        .collect();

    let mut reports = Vec::new();
    let mut lines = Vec::new();
    let mut excluded = 0;
    for ((g, p), result) in pairs.iter().zip(&results) {
        let record = match result {
            Err(e) => return Err(CliError::Data(e.to_string())),
            Ok(Ok(report)) => {
                reports.push(report.clone());
                ImageRecord {
                    ground_truth: g,
                    prediction: p,
                    excluded: None,
                    metrics: Some(report),
                }
            }
            Ok(Err(e @ EvalError::EmptyMask)) | Ok(Err(e @ EvalError::ZeroMedian)) => {
                warn!("excluding {}: {e}", g.display());
                excluded += 1;
                ImageRecord {
                    ground_truth: g,
                    prediction: p,
                    excluded: Some(e.to_string()),
                    metrics: None,
                }
            }
            Ok(Err(e)) => return Err(CliError::Data(format!("{}: {e}", g.display()))),
        };
        lines.push(serde_json::to_string(&record).expect("record serializes"));
    }

    let mut summary = aggregate(&reports, settings.pooling)?;
    summary.model = args.model.clone();
    summary.dataset = args.dataset.clone();
    summary.excluded_images = excluded;
    let summary_text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    if let Some(dir) = &args.output {
        imageio::write_lines(&dir.join(PER_IMAGE_FILE), &lines)?;
        imageio::write_atomic(&dir.join(EVAL_SUMMARY_FILE), format!("{summary_text}\n").as_bytes())?;
    }
    info!("evaluated {} images ({} excluded)", reports.len(), excluded);
    println!("{summary_text}");
    Ok(())
}

fn cmd_table(args: &TableArgs) -> Result<(), CliError> {
    let mut summaries = Vec::new();
    for p in &args.summaries {
        let text = std::fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        let s: DatasetSummary =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        summaries.push(s);
    }
    let text = emit_table(&summaries, args.format).map_err(|e| CliError::Data(e.to_string()))?;
    write_or_print(args.output.as_deref(), &text)
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    if let Command::Table(args) = &cli.command {
        return cmd_table(args);
    }
    let file = ConfigFile::resolve(cli.config.as_deref())?;
    match &cli.command {
        Command::Manifest(a) => cmd_manifest(file, a),
        Command::Simulate(a) => cmd_simulate(file, a),
        Command::Grid(a) => cmd_grid(file, a),
        Command::Eval(a) => cmd_eval(file, a),
        Command::Table(_) => unreachable!("handled above"),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let default_level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level))
        .format_timestamp(None)
        .try_init();
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
