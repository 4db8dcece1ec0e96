use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};
use sha2::{Digest, Sha256};

use super::ImageOpsError;

/// Decoded 8-bit image, row-major, interleaved channels.
///
/// Only grayscale (1 channel) and RGB (3 channels) are represented. Alpha is
/// dropped on decode.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RasterImage {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self, ImageOpsError> {
        if width == 0 || height == 0 {
            return Err(ImageOpsError::InvalidInput(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(ImageOpsError::InvalidInput(format!(
                "unsupported channel count {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(ImageOpsError::InvalidInput(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    /// An image with every sample set to `value`.
    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self, ImageOpsError> {
        let len = width as usize * height as usize * channels as usize;
        Self::new(width, height, channels, vec![value; len])
    }

    pub fn from_rgb_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> [u8; 3]) -> Result<Self, ImageOpsError> {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, 3, data)
    }

    pub fn from_gray_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> u8) -> Result<Self, ImageOpsError> {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, 1, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn long_side(&self) -> u32 {
        self.width.max(self.height)
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.channels as usize;
        let i = (y as usize * self.width as usize + x as usize) * c;
        &self.data[i..i + c]
    }

    /// SHA-256 over dimensions, channel count and samples. Independent of
    /// whichever container the pixels were decoded from.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.width.to_le_bytes());
        hasher.update(self.height.to_le_bytes());
        hasher.update([self.channels]);
        hasher.update(&self.data);
        hex::encode(hasher.finalize())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ImageOpsError> {
        let dynamic = image::load_from_memory(bytes).map_err(|e| ImageOpsError::Decode(e.to_string()))?;
        Self::from_dynamic(dynamic)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, ImageOpsError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| ImageOpsError::Io(format!("{}: {e}", path.display())))?;
        Self::decode(&bytes).map_err(|e| match e {
            ImageOpsError::Decode(msg) => ImageOpsError::Decode(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn from_dynamic(dynamic: DynamicImage) -> Result<Self, ImageOpsError> {
        let grayscale = matches!(
            dynamic,
            DynamicImage::ImageLuma8(_)
                | DynamicImage::ImageLumaA8(_)
                | DynamicImage::ImageLuma16(_)
                | DynamicImage::ImageLumaA16(_)
        );
        if grayscale {
            let buf = dynamic.to_luma8();
            let (w, h) = buf.dimensions();
            Self::new(w, h, 1, buf.into_raw())
        } else {
            let buf = dynamic.to_rgb8();
            let (w, h) = buf.dimensions();
            Self::new(w, h, 3, buf.into_raw())
        }
    }

    fn to_dynamic(&self) -> DynamicImage {
        match self.channels {
            1 => DynamicImage::ImageLuma8(
                image::GrayImage::from_raw(self.width, self.height, self.data.clone())
                    .expect("length checked at construction"),
            ),
            _ => DynamicImage::ImageRgb8(
                image::RgbImage::from_raw(self.width, self.height, self.data.clone())
                    .expect("length checked at construction"),
            ),
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImageOpsError> {
        let mut out = Cursor::new(Vec::new());
        self.to_dynamic()
            .write_to(&mut out, ImageFormat::Png)
            .map_err(|e| ImageOpsError::Encode(e.to_string()))?;
        Ok(out.into_inner())
    }

    /// Writes PNG or JPEG depending on the file extension (PNG when unknown).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ImageOpsError> {
        let path = path.as_ref();
        let format = match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
            Some(ext) if ext == "jpg" || ext == "jpeg" => ImageFormat::Jpeg,
            _ => ImageFormat::Png,
        };
        self.to_dynamic()
            .save_with_format(path, format)
            .map_err(|e| ImageOpsError::Encode(format!("{}: {e}", path.display())))
    }
}
