use super::RasterImage;

/// Gain of the linear contrast adjustment for an integer delta in `-255..=255`.
pub fn contrast_factor(contrast_delta: i32) -> f64 {
    let c = contrast_delta as f64;
    (259.0 * (c + 255.0)) / (255.0 * (259.0 - c))
}

/// Lookup table mapping each input sample to its squinted value.
pub fn squint_lut(brightness_delta: i32, contrast_delta: i32) -> [u8; 256] {
    let factor = contrast_factor(contrast_delta);
    let mut lut = [0u8; 256];
    for (v, slot) in lut.iter_mut().enumerate() {
        let mapped = factor * (v as f64 - 128.0) + 128.0 + brightness_delta as f64;
        // f64::round rounds half away from zero
        *slot = mapped.round().clamp(0.0, 255.0) as u8;
    }
    lut
}

/// Brightness shift plus contrast gain about mid-gray, applied per sample.
pub fn squint(img: &RasterImage, brightness_delta: i32, contrast_delta: i32) -> RasterImage {
    let lut = squint_lut(brightness_delta.clamp(-255, 255), contrast_delta.clamp(-255, 255));
    let data = img.data().iter().map(|&v| lut[v as usize]).collect();
    RasterImage::new(img.width(), img.height(), img.channels(), data).expect("same shape as input")
}
