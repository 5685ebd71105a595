//! Metric depth evaluation: masking, unit rescaling, AbsRel, threshold
//! accuracy, scale-invariant log error and dataset-level pooling.
//!
//! All reductions run sequentially in pixel order so results are bit-stable
//! regardless of how pairs are scheduled.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image_formation::DepthMap;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no valid ground-truth pixels")]
    EmptyMask,
    #[error("prediction is not positive at pixel {0}")]
    NonPositivePrediction(usize),
    #[error("depth is not positive at pixel {0}")]
    NonPositiveDepth(usize),
    #[error("unit scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("median depth is zero")]
    ZeroMedian,
    #[error("dimension mismatch: prediction {prediction:?}, ground truth {ground_truth:?}")]
    DimensionMismatch {
        prediction: (usize, usize),
        ground_truth: (usize, usize),
    },
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
    #[error("no valid images to aggregate")]
    NoValidImages,
    #[error("reports were produced with different settings: {0}")]
    InconsistentReports(String),
}

/// Per-pixel validity flags, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask(Vec<bool>);

impl Mask {
    pub fn from_flags(flags: Vec<bool>) -> Self {
        Mask(flags)
    }

    pub fn flags(&self) -> &[bool] {
        &self.0
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub prediction: DepthMap,
    pub ground_truth: DepthMap,
}

impl EvalPair {
    pub fn new(prediction: DepthMap, ground_truth: DepthMap) -> Result<Self, EvalError> {
        if prediction.dims() != ground_truth.dims() {
            return Err(EvalError::DimensionMismatch {
                prediction: prediction.dims(),
                ground_truth: ground_truth.dims(),
            });
        }
        Ok(EvalPair {
            prediction,
            ground_truth,
        })
    }

    fn check_mask(&self, mask: &Mask) -> Result<(), EvalError> {
        if mask.0.len() != self.ground_truth.values().len() {
            return Err(EvalError::InvalidConfig(format!(
                "mask has {} entries for {} pixels",
                mask.0.len(),
                self.ground_truth.values().len()
            )));
        }
        if mask.is_empty() {
            return Err(EvalError::EmptyMask);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Multiplier applied to predictions before anything else.
    pub unit_scale: f64,
    pub max_depth_cap: Option<f64>,
    pub delta_thresholds: Vec<f64>,
    pub silog_lambda: f64,
    pub median_align: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            unit_scale: 1.0,
            max_depth_cap: None,
            delta_thresholds: vec![1.25, 1.25 * 1.25, 1.25 * 1.25 * 1.25],
            silog_lambda: 0.5,
            median_align: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.unit_scale.is_finite() && self.unit_scale > 0.0) {
            return Err(EvalError::NonPositiveScale(self.unit_scale));
        }
        if let Some(cap) = self.max_depth_cap {
            if cap.is_nan() || cap <= 0.0 {
                return Err(EvalError::InvalidConfig(format!("max depth cap must be positive, got {cap}")));
            }
        }
        if self.delta_thresholds.is_empty() {
            return Err(EvalError::InvalidConfig("at least one delta threshold is required".into()));
        }
        if let Some(t) = self.delta_thresholds.iter().find(|t| !(t.is_finite() && **t > 1.0)) {
            return Err(EvalError::InvalidConfig(format!("delta threshold must exceed 1, got {t}")));
        }
        if !(0.0..=1.0).contains(&self.silog_lambda) {
            return Err(EvalError::InvalidConfig(format!(
                "silog lambda must lie in [0, 1], got {}",
                self.silog_lambda
            )));
        }
        Ok(())
    }
}

/// A ground-truth pixel is valid iff finite, positive and (when `cap` is set)
/// not beyond the cap.
pub fn valid_mask(gt: &DepthMap, cap: Option<f64>) -> Mask {
    let cap = cap.unwrap_or(f64::INFINITY);
    Mask(gt.values().iter().map(|&d| d.is_finite() && d > 0.0 && d <= cap).collect())
}

/// Multiplies valid values by `unit_scale`; invalid values are left untouched.
pub fn rescale_prediction(pred: &DepthMap, unit_scale: f64) -> Result<DepthMap, EvalError> {
    if !(unit_scale.is_finite() && unit_scale > 0.0) {
        return Err(EvalError::NonPositiveScale(unit_scale));
    }
    let mut out = pred.clone();
    if unit_scale != 1.0 {
        for v in out.values_mut() {
            if DepthMap::is_valid_value(*v) {
                *v *= unit_scale;
            }
        }
    }
    Ok(out)
}

pub fn abs_rel(pair: &EvalPair, mask: &Mask) -> Result<f64, EvalError> {
    pair.check_mask(mask)?;
    let gt = pair.ground_truth.values();
    let pred = pair.prediction.values();
    let mut sum = 0.0;
    for i in mask.indices() {
        sum += (gt[i] - pred[i]).abs() / gt[i];
    }
    Ok(sum / mask.count() as f64)
}

/// `max(d / p, p / d) < threshold`, decided exactly for the given floats.
///
/// For positive `d`, `p`: `p / d < t` iff `t * d - p > 0`, and a fused
/// multiply-add yields that difference with a single rounding, which never
/// changes its sign.
#[inline]
pub fn within_ratio(d: f64, p: f64, threshold: f64) -> bool {
    threshold.mul_add(d, -p) > 0.0 && threshold.mul_add(p, -d) > 0.0
}

pub fn delta_accuracy(pair: &EvalPair, mask: &Mask, threshold: f64) -> Result<f64, EvalError> {
    pair.check_mask(mask)?;
    if !(threshold.is_finite() && threshold > 1.0) {
        return Err(EvalError::InvalidConfig(format!("delta threshold must exceed 1, got {threshold}")));
    }
    let gt = pair.ground_truth.values();
    let pred = pair.prediction.values();
    let mut hits = 0usize;
    for i in mask.indices() {
        if !DepthMap::is_valid_value(pred[i]) {
            return Err(EvalError::NonPositivePrediction(i));
        }
        if within_ratio(gt[i], pred[i], threshold) {
            hits += 1;
        }
    }
    Ok(hits as f64 / mask.count() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct LogStats {
    n: usize,
    sum: f64,
    sq_sum: f64,
}

fn log_stats(pair: &EvalPair, mask: &Mask) -> Result<LogStats, EvalError> {
    let gt = pair.ground_truth.values();
    let pred = pair.prediction.values();
    let mut s = LogStats::default();
    for i in mask.indices() {
        if !DepthMap::is_valid_value(gt[i]) || !DepthMap::is_valid_value(pred[i]) {
            return Err(EvalError::NonPositiveDepth(i));
        }
        let g = pred[i].ln() - gt[i].ln();
        s.n += 1;
        s.sum += g;
        s.sq_sum += g * g;
    }
    Ok(s)
}

fn silog_from_sums(n: f64, sum: f64, sq_sum: f64, lambda: f64) -> f64 {
    let mean = sum / n;
    (sq_sum / n - lambda * mean * mean).max(0.0)
}

/// Scale-invariant log error: `mean(g^2) - lambda * mean(g)^2` with
/// `g = ln(pred) - ln(gt)`.
pub fn silog(pair: &EvalPair, mask: &Mask, lambda: f64) -> Result<f64, EvalError> {
    pair.check_mask(mask)?;
    let s = log_stats(pair, mask)?;
    Ok(silog_from_sums(s.n as f64, s.sum, s.sq_sum, lambda))
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Scale factor `median(gt) / median(pred)` over the mask.
pub fn median_scale(pair: &EvalPair, mask: &Mask) -> Result<f64, EvalError> {
    pair.check_mask(mask)?;
    let gt = pair.ground_truth.values();
    let pred = pair.prediction.values();
    if let Some(i) = mask.indices().find(|&i| !DepthMap::is_valid_value(pred[i])) {
        return Err(EvalError::NonPositivePrediction(i));
    }
    let mg = median(mask.indices().map(|i| gt[i]).collect());
    let mp = median(mask.indices().map(|i| pred[i]).collect());
    if mg == 0.0 || mp == 0.0 {
        return Err(EvalError::ZeroMedian);
    }
    Ok(mg / mp)
}

/// Multiplies the whole prediction by [`median_scale`].
pub fn median_scale_align(pair: &EvalPair, mask: &Mask) -> Result<EvalPair, EvalError> {
    let s = median_scale(pair, mask)?;
    let mut prediction = pair.prediction.clone();
    for v in prediction.values_mut() {
        *v *= s;
    }
    Ok(EvalPair {
        prediction,
        ground_truth: pair.ground_truth.clone(),
    })
}

/// Counts of valid-GT pixels dropped because the prediction was unusable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Prediction zero or negative: excluded from delta and SiLog.
    pub nonpositive_predictions: usize,
    /// Prediction NaN or infinite: excluded from every metric.
    pub nonfinite_predictions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub abs_rel: f64,
    pub delta: Vec<f64>,
    pub delta_thresholds: Vec<f64>,
    pub silog: f64,
    pub silog_lambda: f64,
    /// Pixels with valid ground truth.
    pub valid_pixels: usize,
    pub diagnostics: Diagnostics,
    /// Scale applied by median alignment, when enabled.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub median_scale: Option<f64>,
    // Sufficient statistics for pixel-pooled aggregation.
    pub abs_rel_pixels: usize,
    pub log_pixels: usize,
    pub delta_hits: Vec<usize>,
    pub log_sum: f64,
    pub log_sq_sum: f64,
}

/// rescale -> mask -> optional median alignment -> metrics.
pub fn evaluate_pair(pair: &EvalPair, config: &EvalConfig) -> Result<MetricsReport, EvalError> {
    config.validate()?;
    let prediction = rescale_prediction(&pair.prediction, config.unit_scale)?;
    let mut pair = EvalPair::new(prediction, pair.ground_truth.clone())?;
    let gt_mask = valid_mask(&pair.ground_truth, config.max_depth_cap);
    if gt_mask.is_empty() {
        return Err(EvalError::EmptyMask);
    }

    let pred = pair.prediction.values();
    let mut diagnostics = Diagnostics::default();
    let mut finite = gt_mask.0.clone();
    let mut positive = gt_mask.0.clone();
    for i in gt_mask.indices() {
        if !pred[i].is_finite() {
            diagnostics.nonfinite_predictions += 1;
            finite[i] = false;
            positive[i] = false;
        } else if pred[i] <= 0.0 {
            diagnostics.nonpositive_predictions += 1;
            positive[i] = false;
        }
    }
    let finite = Mask(finite);
    let positive = Mask(positive);
    if positive.is_empty() {
        return Err(EvalError::EmptyMask);
    }

    let mut scale = None;
    if config.median_align {
        let s = median_scale(&pair, &positive)?;
        pair = median_scale_align(&pair, &positive)?;
        scale = Some(s);
    }

    let abs = abs_rel(&pair, &finite)?;
    let gt = pair.ground_truth.values();
    let pred = pair.prediction.values();
    let delta_hits: Vec<usize> = config
        .delta_thresholds
        .iter()
        .map(|&t| positive.indices().filter(|&i| within_ratio(gt[i], pred[i], t)).count())
        .collect();
    let stats = log_stats(&pair, &positive)?;
    let n_pos = stats.n as f64;

    Ok(MetricsReport {
        abs_rel: abs,
        delta: delta_hits.iter().map(|&h| h as f64 / n_pos).collect(),
        delta_thresholds: config.delta_thresholds.clone(),
        silog: silog_from_sums(n_pos, stats.sum, stats.sq_sum, config.silog_lambda),
        silog_lambda: config.silog_lambda,
        valid_pixels: gt_mask.count(),
        diagnostics,
        median_scale: scale,
        abs_rel_pixels: finite.count(),
        log_pixels: stats.n,
        delta_hits,
        log_sum: stats.sum,
        log_sq_sum: stats.sq_sum,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// Unweighted mean of per-image metrics.
    #[default]
    PerImage,
    /// Metrics recomputed over the union of all valid pixels.
    PerPixel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    pub pooling: Pooling,
    pub image_count: usize,
    #[serde(default)]
    pub excluded_images: usize,
    pub valid_pixels: usize,
    pub abs_rel: f64,
    pub delta: Vec<f64>,
    pub delta_thresholds: Vec<f64>,
    pub silog: f64,
}

impl DatasetSummary {
    /// Accuracy at threshold 1.25, falling back to the first threshold.
    pub fn delta1(&self) -> Option<f64> {
        self.delta_thresholds
            .iter()
            .position(|&t| t == 1.25)
            .or(if self.delta.is_empty() { None } else { Some(0) })
            .map(|i| self.delta[i])
    }
}

pub fn aggregate(reports: &[MetricsReport], pooling: Pooling) -> Result<DatasetSummary, EvalError> {
    let first = reports.first().ok_or(EvalError::NoValidImages)?;
    for r in reports {
        if r.delta_thresholds != first.delta_thresholds {
            return Err(EvalError::InconsistentReports("delta thresholds differ".into()));
        }
        if r.silog_lambda != first.silog_lambda {
            return Err(EvalError::InconsistentReports("silog lambda differs".into()));
        }
    }
    let k = first.delta_thresholds.len();
    let valid_pixels = reports.iter().map(|r| r.valid_pixels).sum();

    let (abs, delta, silog) = match pooling {
        Pooling::PerImage => {
            let n = reports.len() as f64;
            let mut abs = 0.0;
            let mut silog = 0.0;
            let mut delta = vec![0.0; k];
            for r in reports {
                abs += r.abs_rel;
                silog += r.silog;
                for (acc, d) in delta.iter_mut().zip(&r.delta) {
                    *acc += d;
                }
            }
            (abs / n, delta.into_iter().map(|d| d / n).collect(), silog / n)
        }
        Pooling::PerPixel => {
            let mut abs_weighted = 0.0;
            let mut abs_px = 0usize;
            let mut log_px = 0usize;
            let mut hits = vec![0usize; k];
            let mut sum = 0.0;
            let mut sq_sum = 0.0;
            for r in reports {
                abs_weighted += r.abs_rel * r.abs_rel_pixels as f64;
                abs_px += r.abs_rel_pixels;
                log_px += r.log_pixels;
                for (acc, h) in hits.iter_mut().zip(&r.delta_hits) {
                    *acc += h;
                }
                sum += r.log_sum;
                sq_sum += r.log_sq_sum;
            }
            let n = log_px as f64;
            (
                abs_weighted / abs_px as f64,
                hits.into_iter().map(|h| h as f64 / n).collect(),
                silog_from_sums(n, sum, sq_sum, first.silog_lambda),
            )
        }
    };

    Ok(DatasetSummary {
        model: None,
        dataset: None,
        pooling,
        image_count: reports.len(),
        excluded_images: 0,
        valid_pixels,
        abs_rel: abs,
        delta,
        delta_thresholds: first.delta_thresholds.clone(),
        silog,
    })
}
