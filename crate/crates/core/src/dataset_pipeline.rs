//! Synthetic underwater dataset generation.
//!
//! A run is planned into a [`DatasetManifest`] (input pairs, assigned water
//! class, augmentation, output paths) and then rendered record by record.
//! Every random choice is derived from `(global_seed, record index)`, so the
//! manifest and every output byte are independent of the worker count.
//!
//! # Manifest file
//!
//! JSON Lines. The first line is a header object:
//!
//! | field           | type   | meaning                                     |
//! |-----------------|--------|---------------------------------------------|
//! | `format`        | string | always `"uwsim-manifest"`                   |
//! | `version`       | int    | schema version, currently `1`               |
//! | `global_seed`   | u64    | seed all per-record randomness derives from |
//! | `config_digest` | string | SHA-256 (hex) of the effective configuration|
//! | `record_count`  | int    | number of record lines that follow          |
//!
//! Each following line is one [`ManifestRecord`]:
//!
//! | field               | type          | meaning                                   |
//! |---------------------|---------------|-------------------------------------------|
//! | `index`             | int           | position in lexicographic `rgb_path` order|
//! | `rgb_path`          | string        | clean RGB input                           |
//! | `depth_path`        | string        | paired depth input                        |
//! | `assigned_class`    | string        | water class label                         |
//! | `augmentation`      | object        | `exposure_gain`, `grayscale`, `seed`      |
//! | `intrinsics`        | object / null | `fx`, `fy`, `cx`, `cy` for planar depth   |
//! | `output_rgb_path`   | string        | rendered image, relative to the output dir|
//! | `output_depth_path` | string        | copied depth, relative to the output dir  |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use walkdir::WalkDir;

use crate::augmentation::{sample_augmentation, AugmentError, AugmentOrder, AugmentationConfig, AugmentationSpec};
use crate::image_formation::{
    planar_depth_to_range, render_underwater, srgb_eotf, CameraIntrinsics, DepthKind, DepthMap, FormationError,
    FormationSpace, LinearImage,
};
use crate::imageio::{self, ImageIoError, Rgb8};
use crate::water_optics::{CoefficientTable, OpticsError, WaterClassId};

pub const MANIFEST_FORMAT: &str = "uwsim-manifest";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

const RGB_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

// Independent random streams derived from the global seed.
const STREAM_CLASS: u64 = 0x636c_6173_7321;
const STREAM_AUGMENT: u64 = 0x6175_676d_656e;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unpaired RGB files (no depth match): {}", display_paths(.0))]
    UnpairedFile(Vec<PathBuf>),
    #[error("no RGB-D pairs found")]
    EmptyDataset,
    #[error("cannot read directory {path}: {message}")]
    Directory { path: PathBuf, message: String },
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Formation(#[from] FormationError),
    #[error(transparent)]
    Io(#[from] ImageIoError),
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error("invalid manifest at line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("all {} records failed", .0.total)]
    AllRecordsFailed(Box<RunSummary>),
}

fn display_paths(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
}

/// Whether each image gets one sampled class or is rendered once per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassMode {
    #[default]
    PerImage,
    AllClasses,
}

/// Maps an RGB file to its depth file. `{stem}` is replaced by the RGB file
/// stem; the depth file is looked up in the same relative sub-directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PairingRule(String);

impl Default for PairingRule {
    fn default() -> Self {
        PairingRule("{stem}.pfm".into())
    }
}

impl PairingRule {
    pub fn new(template: impl Into<String>) -> Result<Self, PipelineError> {
        let t = template.into();
        if !t.contains("{stem}") || t.contains('/') || t.contains('\\') {
            return Err(PipelineError::InvalidConfig(format!(
                "pairing rule `{t}` must contain {{stem}} and no path separators"
            )));
        }
        Ok(PairingRule(t))
    }

    pub fn depth_name(&self, stem: &str) -> String {
        self.0.replace("{stem}", stem)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Classes to sample from; empty means every class in the table.
    pub water_classes: Vec<WaterClassId>,
    pub coefficient_table: Option<PathBuf>,
    pub color_space: FormationSpace,
    pub depth_kind: DepthKind,
    pub intrinsics: Option<CameraIntrinsics>,
    pub class_mode: ClassMode,
    /// Meters per unit for 16-bit PNG depth.
    pub depth_scale: f64,
    pub pairing: PairingRule,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses all available cores.
    pub workers: usize,
    pub augmentation: AugmentationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            water_classes: Vec::new(),
            coefficient_table: None,
            color_space: FormationSpace::Linear,
            depth_kind: DepthKind::Range,
            intrinsics: None,
            class_mode: ClassMode::PerImage,
            depth_scale: 0.001,
            pairing: PairingRule::default(),
            output_dir: PathBuf::from("uwsim-out"),
            workers: 0,
            augmentation: AugmentationConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.augmentation.validate()?;
        PairingRule::new(self.pairing.0.clone())?;
        if !(self.depth_scale.is_finite() && self.depth_scale > 0.0) {
            return Err(PipelineError::InvalidConfig(format!(
                "depth_scale must be positive, got {}",
                self.depth_scale
            )));
        }
        match (self.depth_kind, &self.intrinsics) {
            (DepthKind::Planar, None) => {
                return Err(PipelineError::InvalidConfig(
                    "planar depth requires camera intrinsics".into(),
                ))
            }
            (_, Some(k)) => k.validate()?,
            _ => {}
        }
        Ok(())
    }

    /// Loads the configured table (or the bundled one) restricted to the
    /// configured classes.
    pub fn active_table(&self) -> Result<CoefficientTable, PipelineError> {
        let table = match &self.coefficient_table {
            Some(path) => crate::water_optics::load_coefficient_table(path)?,
            None => CoefficientTable::bundled(),
        };
        if self.water_classes.is_empty() {
            Ok(table)
        } else {
            Ok(table.subset(&self.water_classes)?)
        }
    }

    /// SHA-256 over every field that influences output content. The output
    /// directory and worker count are excluded.
    pub fn digest(&self, table: &CoefficientTable) -> String {
        #[derive(Serialize)]
        struct Effective<'a> {
            seed: u64,
            water_classes: Vec<WaterClassId>,
            table: String,
            color_space: FormationSpace,
            depth_kind: DepthKind,
            intrinsics: &'a Option<CameraIntrinsics>,
            class_mode: ClassMode,
            depth_scale: f64,
            pairing: &'a PairingRule,
            augmentation: &'a AugmentationConfig,
        }
        let effective = Effective {
            seed: self.seed,
            water_classes: table.class_ids(),
            table: table.to_text(),
            color_space: self.color_space,
            depth_kind: self.depth_kind,
            intrinsics: &self.intrinsics,
            class_mode: self.class_mode,
            depth_scale: self.depth_scale,
            pairing: &self.pairing,
            augmentation: &self.augmentation,
        };
        let bytes = serde_json::to_vec(&effective).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub index: usize,
    pub rgb_path: PathBuf,
    pub depth_path: PathBuf,
    pub assigned_class: Option<WaterClassId>,
    pub augmentation: Option<AugmentationSpec>,
    pub intrinsics: Option<CameraIntrinsics>,
    pub output_rgb_path: PathBuf,
    pub output_depth_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
    pub global_seed: u64,
    pub config_digest: String,
}

#[derive(Serialize, Deserialize)]
struct ManifestHeader {
    format: String,
    version: u32,
    global_seed: u64,
    config_digest: String,
    record_count: usize,
}

impl DatasetManifest {
    pub fn to_jsonl(&self) -> String {
        let header = ManifestHeader {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            global_seed: self.global_seed,
            config_digest: self.config_digest.clone(),
            record_count: self.records.len(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, PipelineError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(PipelineError::Manifest {
            line: 1,
            message: "empty manifest".into(),
        })?;
        let header: ManifestHeader = serde_json::from_str(first).map_err(|e| PipelineError::Manifest {
            line: 1,
            message: e.to_string(),
        })?;
        if header.format != MANIFEST_FORMAT || header.version != MANIFEST_VERSION {
            return Err(PipelineError::Manifest {
                line: 1,
                message: format!("unsupported manifest {} v{}", header.format, header.version),
            });
        }
        let mut records = Vec::with_capacity(header.record_count);
        for (i, line) in lines {
            records.push(serde_json::from_str(line).map_err(|e| PipelineError::Manifest {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        if records.len() != header.record_count {
            return Err(PipelineError::Manifest {
                line: text.lines().count(),
                message: format!("header announces {} records, found {}", header.record_count, records.len()),
            });
        }
        Ok(DatasetManifest {
            records,
            global_seed: header.global_seed,
            config_digest: header.config_digest,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        imageio::write_atomic(path, self.to_jsonl().as_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Manifest {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        Self::from_jsonl(&text)
    }
}

/// Mixes `(seed, stream, index)` into a 64-bit seed with SplitMix64 rounds.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(mix(mix(seed) ^ stream) ^ index)
}

fn has_rgb_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| RGB_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn list_files(root: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    if !root.is_dir() {
        return Err(PipelineError::Directory {
            path: root.to_path_buf(),
            message: "not a directory".into(),
        });
    }
    let mut files = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| PipelineError::Directory {
            path: root.to_path_buf(),
            message: e.to_string(),
        })?;
        if entry.file_type().is_file() {
            files.push(entry.path().strip_prefix(root).expect("walk stays under root").to_path_buf());
        }
    }
    Ok(files)
}

/// Pairs every RGB image under `rgb_root` with a depth file under
/// `depth_root`. Records are sorted by `rgb_path`; classes and augmentations
/// are left unassigned.
pub fn build_manifest(rgb_root: &Path, depth_root: &Path, pairing: &PairingRule) -> Result<DatasetManifest, PipelineError> {
    let mut rgb_files: Vec<PathBuf> = list_files(rgb_root)?
        .into_iter()
        .filter(|p| has_rgb_extension(p))
        .collect();
    rgb_files.sort();
    let depth_files = list_files(depth_root)?;

    let mut used = vec![false; depth_files.len()];
    let mut unpaired = Vec::new();
    let mut records = Vec::new();
    for rel in rgb_files {
        let stem = rel.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let depth_rel = rel.with_file_name(pairing.depth_name(stem));
        match depth_files.iter().position(|d| *d == depth_rel) {
            Some(pos) => {
                used[pos] = true;
                records.push(ManifestRecord {
                    index: records.len(),
                    rgb_path: rgb_root.join(&rel),
                    depth_path: depth_root.join(&depth_rel),
                    assigned_class: None,
                    augmentation: None,
                    intrinsics: None,
                    output_rgb_path: Path::new("rgb").join(rel.with_extension("png")),
                    output_depth_path: Path::new("depth").join(&depth_rel),
                });
            }
            None => unpaired.push(rgb_root.join(&rel)),
        }
    }
    if !unpaired.is_empty() {
        return Err(PipelineError::UnpairedFile(unpaired));
    }
    for (d, _) in depth_files.iter().zip(&used).filter(|(_, u)| !**u) {
        warn!("depth file without RGB partner: {}", depth_root.join(d).display());
    }
    if records.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    Ok(DatasetManifest {
        records,
        global_seed: 0,
        config_digest: String::new(),
    })
}

/// Draws one class per record, uniformly, from `(seed, record index)`.
pub fn assign_water_types(
    mut manifest: DatasetManifest,
    classes: &[WaterClassId],
    table: &CoefficientTable,
    seed: u64,
) -> Result<DatasetManifest, PipelineError> {
    if classes.is_empty() {
        return Err(PipelineError::InvalidConfig("no water classes to assign".into()));
    }
    for c in classes {
        table.lookup(c)?;
    }
    for rec in &mut manifest.records {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_CLASS, rec.index as u64));
        rec.assigned_class = Some(classes[rng.gen_range(0..classes.len())].clone());
    }
    manifest.global_seed = seed;
    Ok(manifest)
}

/// Replaces every record with one record per class. Outputs go to
/// `rgb/<class>/...`.
pub fn expand_all_classes(
    manifest: DatasetManifest,
    classes: &[WaterClassId],
    table: &CoefficientTable,
) -> Result<DatasetManifest, PipelineError> {
    if classes.is_empty() {
        return Err(PipelineError::InvalidConfig("no water classes to assign".into()));
    }
    for c in classes {
        table.lookup(c)?;
    }
    let mut records = Vec::with_capacity(manifest.records.len() * classes.len());
    for rec in manifest.records {
        let rel = rec.output_rgb_path.strip_prefix("rgb").unwrap_or(&rec.output_rgb_path).to_path_buf();
        for c in classes {
            records.push(ManifestRecord {
                index: records.len(),
                assigned_class: Some(c.clone()),
                output_rgb_path: Path::new("rgb").join(c.as_str()).join(&rel),
                ..rec.clone()
            });
        }
    }
    Ok(DatasetManifest { records, ..manifest })
}

pub fn assign_augmentations(
    mut manifest: DatasetManifest,
    config: &AugmentationConfig,
    seed: u64,
) -> Result<DatasetManifest, PipelineError> {
    for rec in &mut manifest.records {
        rec.augmentation = Some(sample_augmentation(
            derive_seed(seed, STREAM_AUGMENT, rec.index as u64),
            config,
        )?);
    }
    Ok(manifest)
}

/// Full planning step: pair, assign classes and augmentations, stamp digest.
pub fn plan_dataset(
    rgb_root: &Path,
    depth_root: &Path,
    config: &PipelineConfig,
    table: &CoefficientTable,
) -> Result<DatasetManifest, PipelineError> {
    config.validate()?;
    let classes = table.class_ids();
    let manifest = build_manifest(rgb_root, depth_root, &config.pairing)?;
    let mut manifest = match config.class_mode {
        ClassMode::PerImage => assign_water_types(manifest, &classes, table, config.seed)?,
        ClassMode::AllClasses => expand_all_classes(manifest, &classes, table)?,
    };
    manifest = assign_augmentations(manifest, &config.augmentation, config.seed)?;
    if config.depth_kind == DepthKind::Planar {
        for rec in &mut manifest.records {
            rec.intrinsics = config.intrinsics;
        }
    }
    manifest.global_seed = config.seed;
    manifest.config_digest = config.digest(table);
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFailure {
    pub index: usize,
    pub rgb_path: PathBuf,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub total: usize,
    pub succeeded: usize,
    pub failures: Vec<RecordFailure>,
    pub wall_time_secs: f64,
    pub workers: usize,
    pub config_digest: String,
}

/// Everything needed to turn one clean RGB-D pair into an underwater image.
#[derive(Debug, Clone, Copy)]
pub struct RenderSettings<'a> {
    pub space: FormationSpace,
    pub depth_kind: DepthKind,
    pub intrinsics: Option<&'a CameraIntrinsics>,
    pub order: AugmentOrder,
}

/// Renders one record in memory: decode, range conversion, formation model,
/// augmentation, re-encode.
pub fn render_record(
    rgb: &Rgb8,
    depth: &DepthMap,
    coeffs: &crate::water_optics::WaterCoefficients,
    augmentation: &AugmentationSpec,
    settings: &RenderSettings<'_>,
) -> Result<Rgb8, PipelineError> {
    let clean = settings.space.decode_rgb8(rgb.width, rgb.height, &rgb.bytes)?;
    let converted;
    let range = match (settings.depth_kind, settings.intrinsics) {
        (DepthKind::Planar, Some(k)) => {
            converted = planar_depth_to_range(depth, k)?;
            &converted
        }
        (DepthKind::Planar, None) => {
            return Err(PipelineError::InvalidConfig("planar depth requires camera intrinsics".into()))
        }
        (DepthKind::Range, _) => depth,
    };
    let rendered = match settings.order {
        AugmentOrder::AfterRender => {
            let img = render_underwater(&clean, range, coeffs)?;
            if augmentation.is_identity() {
                img
            } else {
                augmentation.apply(&img)?
            }
        }
        AugmentOrder::BeforeRender => {
            let img = if augmentation.is_identity() {
                clean
            } else {
                augmentation.apply(&clean)?
            };
            render_underwater(&img, range, coeffs)?
        }
    };
    Ok(Rgb8 {
        width: rgb.width,
        height: rgb.height,
        bytes: settings.space.encode_rgb8(&rendered),
    })
}

fn simulate_record(
    rec: &ManifestRecord,
    table: &CoefficientTable,
    config: &PipelineConfig,
) -> Result<(), PipelineError> {
    let class = rec
        .assigned_class
        .as_ref()
        .ok_or_else(|| PipelineError::InvalidConfig(format!("record {} has no water class", rec.index)))?;
    let coeffs = table.lookup(class)?;
    let aug = rec.augmentation.unwrap_or(AugmentationSpec::identity(0));
    let rgb = imageio::read_rgb8(&rec.rgb_path)?;
    let depth = imageio::read_depth(&rec.depth_path, config.depth_scale)?;
    let settings = RenderSettings {
        space: config.color_space,
        depth_kind: config.depth_kind,
        intrinsics: rec.intrinsics.as_ref().or(config.intrinsics.as_ref()),
        order: config.augmentation.order,
    };
    let out = render_record(&rgb, &depth, coeffs, &aug, &settings)?;
    imageio::write_png_rgb8(&config.output_dir.join(&rec.output_rgb_path), &out)?;
    Ok(())
}

fn copy_depth(src: &Path, dst: &Path) -> Result<(), PipelineError> {
    let bytes = fs::read(src).map_err(|e| ImageIoError::Io {
        path: src.to_path_buf(),
        source: e,
    })?;
    imageio::write_atomic(dst, &bytes)?;
    Ok(())
}

/// Renders every record into `config.output_dir`, copies depth files
/// unchanged, then writes the manifest (successful records only) and a run
/// summary. Per-record failures are collected; the run fails only if every
/// record fails.
pub fn simulate_dataset(
    manifest: &DatasetManifest,
    table: &CoefficientTable,
    config: &PipelineConfig,
) -> Result<RunSummary, PipelineError> {
    config.validate()?;
    let start = Instant::now();
    fs::create_dir_all(&config.output_dir).map_err(|e| PipelineError::Directory {
        path: config.output_dir.clone(),
        message: e.to_string(),
    })?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if config.workers > 0 {
        builder = builder.num_threads(config.workers);
    }
    let pool = builder
        .build()
        .map_err(|e| PipelineError::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    let workers = pool.current_num_threads();

    // Depth copies, once per distinct output path.
    let mut depth_jobs: BTreeMap<&Path, &Path> = BTreeMap::new();
    for rec in &manifest.records {
        depth_jobs.insert(&rec.output_depth_path, &rec.depth_path);
    }
    let depth_jobs: Vec<(&Path, &Path)> = depth_jobs.into_iter().collect();

    let (render_results, depth_results) = pool.install(|| {
        let render: Vec<Result<(), PipelineError>> = manifest
            .records
            .par_iter()
            .map(|rec| simulate_record(rec, table, config))
            .collect();
        let depth: Vec<Result<(), PipelineError>> = depth_jobs
            .par_iter()
            .map(|(dst, src)| copy_depth(src, &config.output_dir.join(dst)))
            .collect();
        (render, depth)
    });

    let depth_errors: BTreeMap<&Path, String> = depth_jobs
        .iter()
        .zip(depth_results)
        .filter_map(|((dst, _), r)| r.err().map(|e| (*dst, e.to_string())))
        .collect();

    let mut failures = Vec::new();
    let mut ok_records = Vec::new();
    for (rec, result) in manifest.records.iter().zip(render_results) {
        let error = match result {
            Err(e) => Some(e.to_string()),
            Ok(()) => depth_errors.get(rec.output_depth_path.as_path()).cloned(),
        };
        match error {
            Some(error) => {
                warn!("record {} ({}) failed: {error}", rec.index, rec.rgb_path.display());
                // A render may have succeeded while its depth copy failed.
                let _ = fs::remove_file(config.output_dir.join(&rec.output_rgb_path));
                failures.push(RecordFailure {
                    index: rec.index,
                    rgb_path: rec.rgb_path.clone(),
                    error,
                });
            }
            None => ok_records.push(rec.clone()),
        }
    }

    // Depth copies no surviving record refers to.
    for (dst, _) in &depth_jobs {
        if !ok_records.iter().any(|r| r.output_depth_path == *dst) {
            let _ = fs::remove_file(config.output_dir.join(dst));
        }
    }

    let summary = RunSummary {
        total: manifest.records.len(),
        succeeded: ok_records.len(),
        failures,
        wall_time_secs: start.elapsed().as_secs_f64(),
        workers,
        config_digest: manifest.config_digest.clone(),
    };
    let written = DatasetManifest {
        records: ok_records,
        global_seed: manifest.global_seed,
        config_digest: manifest.config_digest.clone(),
    };
    written.write(&config.output_dir.join(MANIFEST_FILE))?;
    imageio::write_atomic(
        &config.output_dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary).expect("summary serializes").as_bytes(),
    )?;
    info!(
        "simulated {}/{} records in {:.2}s with {} workers",
        summary.succeeded, summary.total, summary.wall_time_secs, workers
    );
    if summary.succeeded == 0 && summary.total > 0 {
        return Err(PipelineError::AllRecordsFailed(Box::new(summary)));
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridTile {
    pub label: String,
    pub image: LinearImage,
}

/// Clean image, depth visualization, then one rendering per water class.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionGrid {
    pub tiles: Vec<GridTile>,
    pub columns: usize,
}

impl ConditionGrid {
    pub fn rows(&self) -> usize {
        self.tiles.len().div_ceil(self.columns)
    }

    pub fn tile_size(&self) -> (usize, usize) {
        self.tiles[0].image.dims()
    }

    /// Top-left pixel of tile `i`.
    pub fn tile_origin(&self, i: usize) -> (usize, usize) {
        let (w, h) = self.tile_size();
        ((i % self.columns) * w, (i / self.columns) * h)
    }

    /// Tiles laid out row-major; unused cells are black.
    pub fn compose(&self) -> LinearImage {
        let (w, h) = self.tile_size();
        let cw = w * self.columns;
        let ch = h * self.rows();
        let mut data = vec![[0.0; 3]; cw * ch];
        for (i, tile) in self.tiles.iter().enumerate() {
            let (x0, y0) = self.tile_origin(i);
            for (y, row) in tile.image.pixels().chunks(w).enumerate() {
                let dst = (y0 + y) * cw + x0;
                data[dst..dst + w].copy_from_slice(row);
            }
        }
        LinearImage::new(cw, ch, data).expect("grid dimensions are positive")
    }
}

/// Grayscale depth visualization: near is bright, invalid is black. Gray
/// levels are chosen in encoded space and mapped into `space`.
pub fn depth_visualization(depth: &DepthMap, space: FormationSpace) -> LinearImage {
    let valid = depth.values().iter().copied().filter(|v| DepthMap::is_valid_value(*v));
    let (lo, hi) = valid.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let data = depth
        .values()
        .iter()
        .map(|&v| {
            if !DepthMap::is_valid_value(v) {
                return [0.0; 3];
            }
            let t = if span > 0.0 { (v - lo) / span } else { 0.0 };
            let gray = 1.0 - 0.85 * t;
            let g = match space {
                FormationSpace::Linear => srgb_eotf(gray),
                FormationSpace::Srgb => gray,
            };
            [g; 3]
        })
        .collect();
    LinearImage::new(depth.width(), depth.height(), data).expect("depth map dimensions are positive")
}

/// Renders `clean` under every class in `table`, in table order.
pub fn render_condition_grid(
    clean: &LinearImage,
    depth: &DepthMap,
    table: &CoefficientTable,
    space: FormationSpace,
) -> Result<ConditionGrid, PipelineError> {
    if clean.dims() != depth.dims() {
        return Err(FormationError::DimensionMismatch {
            left: clean.dims(),
            right: depth.dims(),
        }
        .into());
    }
    let mut tiles = vec![
        GridTile {
            label: "RGB".into(),
            image: clean.clone(),
        },
        GridTile {
            label: "Depth".into(),
            image: depth_visualization(depth, space),
        },
    ];
    let rendered: Vec<Result<GridTile, FormationError>> = table
        .entries()
        .par_iter()
        .map(|c| {
            Ok(GridTile {
                label: format!("Type {}", c.class_id),
                image: render_underwater(clean, depth, c)?,
            })
        })
        .collect();
    for tile in rendered {
        tiles.push(tile?);
    }
    let columns = tiles.len().min(5);
    Ok(ConditionGrid { tiles, columns })
}
