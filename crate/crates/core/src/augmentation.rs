//! Seeded photometric augmentations: exposure gain and grayscale.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image_formation::{clamp_unit, LinearImage};

/// Rec. 709 luminance weights, applied to linear-light R, G, B.
pub const LUMA_WEIGHTS: [f64; 3] = [0.2126, 0.7152, 0.0722];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("exposure gain must be positive, got {0}")]
    NonPositiveGain(f64),
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
}

/// Whether augmentations are applied to the rendered underwater image or
/// to the clean image before rendering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentOrder {
    #[default]
    AfterRender,
    BeforeRender,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationConfig {
    pub enabled: bool,
    pub min_gain: f64,
    pub max_gain: f64,
    pub grayscale_probability: f64,
    pub order: AugmentOrder,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            enabled: true,
            min_gain: 0.5,
            max_gain: 2.0,
            grayscale_probability: 0.1,
            order: AugmentOrder::AfterRender,
        }
    }
}

impl AugmentationConfig {
    pub fn disabled() -> Self {
        AugmentationConfig {
            enabled: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let (lo, hi) = (self.min_gain, self.max_gain);
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(AugmentError::InvalidConfig(format!(
                "gain interval [{lo}, {hi}] must satisfy 0 < min <= max"
            )));
        }
        if !(0.0..=1.0).contains(&self.grayscale_probability) {
            return Err(AugmentError::InvalidConfig(format!(
                "grayscale probability {} outside [0, 1]",
                self.grayscale_probability
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub exposure_gain: f64,
    pub grayscale: bool,
    pub seed: u64,
}

impl AugmentationSpec {
    pub fn identity(seed: u64) -> Self {
        AugmentationSpec {
            exposure_gain: 1.0,
            grayscale: false,
            seed,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.exposure_gain == 1.0 && !self.grayscale
    }

    /// Exposure first, then grayscale.
    pub fn apply(&self, img: &LinearImage) -> Result<LinearImage, AugmentError> {
        let mut out = apply_exposure(img, self.exposure_gain)?;
        if self.grayscale {
            out = to_grayscale(&out);
        }
        Ok(out)
    }
}

pub fn apply_exposure(img: &LinearImage, gain: f64) -> Result<LinearImage, AugmentError> {
    if !(gain.is_finite() && gain > 0.0) {
        return Err(AugmentError::NonPositiveGain(gain));
    }
    let mut out = img.clone();
    if gain != 1.0 {
        for px in out.pixels_mut() {
            for v in px.iter_mut() {
                *v = clamp_unit(*v * gain);
            }
        }
    }
    Ok(out)
}

pub fn to_grayscale(img: &LinearImage) -> LinearImage {
    let mut out = img.clone();
    for px in out.pixels_mut() {
        let y = if px[0] == px[1] && px[1] == px[2] {
            px[0]
        } else {
            LUMA_WEIGHTS[0] * px[0] + LUMA_WEIGHTS[1] * px[1] + LUMA_WEIGHTS[2] * px[2]
        };
        *px = [y; 3];
    }
    out
}

/// Draws an augmentation from `config` using only `seed`.
///
/// The gain is log-uniform over `[min_gain, max_gain]`.
pub fn sample_augmentation(seed: u64, config: &AugmentationConfig) -> Result<AugmentationSpec, AugmentError> {
    config.validate()?;
    if !config.enabled {
        return Ok(AugmentationSpec::identity(seed));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: f64 = rng.gen();
    let g: f64 = rng.gen();
    let exposure_gain = if config.min_gain == config.max_gain {
        config.min_gain
    } else {
        let (lo, hi) = (config.min_gain.ln(), config.max_gain.ln());
        (lo + u * (hi - lo)).exp().clamp(config.min_gain, config.max_gain)
    };
    Ok(AugmentationSpec {
        exposure_gain,
        grayscale: g < config.grayscale_probability,
        seed,
    })
}
