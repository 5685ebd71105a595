//! Physics-based underwater image simulation for RGB-D datasets, plus a
//! depth-evaluation engine and benchmark table generation.

pub mod augmentation;
pub mod cli_report;
pub mod config;
pub mod dataset_pipeline;
pub mod depth_eval;
pub mod image_formation;
pub mod imageio;
pub mod water_optics;

pub use augmentation::{AugmentationConfig, AugmentationSpec};
pub use dataset_pipeline::{DatasetManifest, ManifestRecord, PipelineConfig};
pub use depth_eval::{evaluate_pair, DatasetSummary, EvalConfig, MetricsReport, Pooling};
pub use image_formation::{render_underwater, DepthMap, FormationSpace, LinearImage};
pub use water_optics::{CoefficientTable, WaterClassId, WaterCoefficients};
