//! Perceptual preprocessing operators: aspect-preserving zoom-out, squint
//! (brightness/contrast) and the edge/colour/equalization enhancement
//! composite. All operators are pure and bit-reproducible.

mod enhance;
mod raster;
mod resize;
mod squint;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use enhance::{canny, enhance, equalize_histogram, hsv_mask, rgb_to_hsv, to_grayscale, EnhanceParams, HsvRange};
pub use raster::RasterImage;
pub use resize::{zoom_out, zoom_out_dimensions};
pub use squint::{contrast_factor, squint, squint_lut};

/// Smallest long side a zoom-out step may target.
pub const MIN_ZOOM_TARGET: u32 = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageOpsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid preprocess spec: {0}")]
    InvalidSpec(String),
    #[error("decode failed: {0}")]
    Decode(String),
    #[error("encode failed: {0}")]
    Encode(String),
    #[error("i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PreprocessOp {
    ZoomOut { target_long_side: u32 },
    Squint { brightness_delta: i32, contrast_delta: i32 },
    Enhance(EnhanceParams),
}

impl PreprocessOp {
    fn validate(&self) -> Result<(), ImageOpsError> {
        match self {
            PreprocessOp::ZoomOut { target_long_side } if *target_long_side < MIN_ZOOM_TARGET => Err(
                ImageOpsError::InvalidSpec(format!("zoom-out target {target_long_side} is below {MIN_ZOOM_TARGET}")),
            ),
            PreprocessOp::Squint { brightness_delta, contrast_delta }
                if !(-255..=255).contains(brightness_delta) || !(-255..=255).contains(contrast_delta) =>
            {
                Err(ImageOpsError::InvalidSpec(format!(
                    "squint deltas ({brightness_delta}, {contrast_delta}) outside -255..=255"
                )))
            }
            PreprocessOp::Enhance(p) if p.canny_low >= p.canny_high => Err(ImageOpsError::InvalidSpec(format!(
                "canny_low {} must be below canny_high {}",
                p.canny_low, p.canny_high
            ))),
            _ => Ok(()),
        }
    }

    pub fn apply(&self, img: &RasterImage) -> Result<RasterImage, ImageOpsError> {
        match self {
            PreprocessOp::ZoomOut { target_long_side } => Ok(zoom_out(img, *target_long_side)),
            PreprocessOp::Squint { brightness_delta, contrast_delta } => {
                Ok(squint(img, *brightness_delta, *contrast_delta))
            }
            PreprocessOp::Enhance(params) => enhance(img, params),
        }
    }

    /// Short column label, e.g. `zoom-out 64`, `B-32; C+32`, `Enhance`.
    pub fn label(&self) -> String {
        match self {
            PreprocessOp::ZoomOut { target_long_side } => format!("zoom-out {target_long_side}"),
            PreprocessOp::Squint { brightness_delta, contrast_delta } => {
                format!("B{brightness_delta:+}; C{contrast_delta:+}")
            }
            PreprocessOp::Enhance(_) => "Enhance".to_string(),
        }
    }
}

/// Ordered chain of preprocessing operators.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreprocessSpec {
    pub chain: Vec<PreprocessOp>,
}

impl PreprocessSpec {
    pub fn new(chain: Vec<PreprocessOp>) -> Result<Self, ImageOpsError> {
        let spec = Self { chain };
        spec.validate()?;
        Ok(spec)
    }

    pub fn zoom_out(target_long_side: u32) -> Self {
        Self { chain: vec![PreprocessOp::ZoomOut { target_long_side }] }
    }

    pub fn squint(brightness_delta: i32, contrast_delta: i32) -> Self {
        Self { chain: vec![PreprocessOp::Squint { brightness_delta, contrast_delta }] }
    }

    pub fn enhance(params: EnhanceParams) -> Self {
        Self { chain: vec![PreprocessOp::Enhance(params)] }
    }

    pub fn validate(&self) -> Result<(), ImageOpsError> {
        if self.chain.is_empty() {
            return Err(ImageOpsError::InvalidSpec("empty preprocessing chain".into()));
        }
        self.chain.iter().try_for_each(PreprocessOp::validate)
    }

    pub fn apply(&self, img: &RasterImage) -> Result<RasterImage, ImageOpsError> {
        self.validate()?;
        let mut current = img.clone();
        for op in &self.chain {
            current = op.apply(&current)?;
        }
        Ok(current)
    }

    /// Compact JSON with a fixed field order; equal specs give equal strings.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("spec serialization is infallible")
    }

    pub fn canonical_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn label(&self) -> String {
        self.chain.iter().map(PreprocessOp::label).collect::<Vec<_>>().join(" + ")
    }

    pub fn contains_enhance(&self) -> bool {
        self.chain.iter().any(|op| matches!(op, PreprocessOp::Enhance(_)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_labels() {
        assert_eq!(PreprocessSpec::squint(-32, 32).label(), "B-32; C+32");
        assert_eq!(PreprocessSpec::squint(-128, 64).label(), "B-128; C+64");
        assert_eq!(PreprocessSpec::enhance(EnhanceParams::default()).label(), "Enhance");
        assert_eq!(PreprocessSpec::zoom_out(64).label(), "zoom-out 64");
    }

    #[test]
    fn validation() {
        assert!(PreprocessSpec::zoom_out(7).validate().is_err());
        assert!(PreprocessSpec::zoom_out(8).validate().is_ok());
        assert!(PreprocessSpec::squint(-256, 0).validate().is_err());
        let bad = EnhanceParams { canny_low: 90, canny_high: 90, ..EnhanceParams::default() };
        assert!(PreprocessSpec::enhance(bad).validate().is_err());
        assert!(PreprocessSpec::new(vec![]).is_err());
    }

    #[test]
    fn canonical_json_is_stable() {
        let spec = PreprocessSpec::new(vec![
            PreprocessOp::Squint { brightness_delta: -32, contrast_delta: 32 },
            PreprocessOp::ZoomOut { target_long_side: 64 },
        ])
        .unwrap();
        assert_eq!(
            spec.canonical_json(),
            r#"{"chain":[{"op":"squint","brightness_delta":-32,"contrast_delta":32},{"op":"zoom_out","target_long_side":64}]}"#
        );
        let back: PreprocessSpec = serde_json::from_str(&spec.canonical_json()).unwrap();
        assert_eq!(back.canonical_hash(), spec.canonical_hash());
    }

    #[test]
    fn chain_applies_in_order() {
        let img = RasterImage::filled(200, 100, 3, 128).unwrap();
        let spec = PreprocessSpec::new(vec![
            PreprocessOp::ZoomOut { target_long_side: 50 },
            PreprocessOp::Squint { brightness_delta: -32, contrast_delta: 32 },
        ])
        .unwrap();
        let out = spec.apply(&img).unwrap();
        assert_eq!((out.width(), out.height()), (50, 25));
        assert!(out.data().iter().all(|&v| v == 96));
    }
}
