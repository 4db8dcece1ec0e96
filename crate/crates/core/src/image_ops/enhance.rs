use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{ImageOpsError, RasterImage};

/// Inclusive HSV box on the 0..=255 scale. Hue wraps when `h_lo > h_hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HsvRange {
    pub h_lo: u8,
    pub h_hi: u8,
    pub s_lo: u8,
    pub s_hi: u8,
    pub v_lo: u8,
    pub v_hi: u8,
}

impl HsvRange {
    /// Any hue with saturation and value at least 64.
    pub const SATURATED: HsvRange = HsvRange { h_lo: 0, h_hi: 255, s_lo: 64, s_hi: 255, v_lo: 64, v_hi: 255 };

    pub fn contains(&self, [h, s, v]: [u8; 3]) -> bool {
        let hue_ok = if self.h_lo <= self.h_hi {
            (self.h_lo..=self.h_hi).contains(&h)
        } else {
            h >= self.h_lo || h <= self.h_hi
        };
        hue_ok && (self.s_lo..=self.s_hi).contains(&s) && (self.v_lo..=self.v_hi).contains(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnhanceParams {
    pub canny_low: u8,
    pub canny_high: u8,
    pub hsv_ranges: Vec<HsvRange>,
}

impl Default for EnhanceParams {
    fn default() -> Self {
        Self { canny_low: 50, canny_high: 150, hsv_ranges: vec![HsvRange::SATURATED] }
    }
}

/// Luma with BT.601 weights, rounded to nearest in exact integer arithmetic.
pub fn to_grayscale(img: &RasterImage) -> Result<RasterImage, ImageOpsError> {
    if img.channels() != 3 {
        return Err(ImageOpsError::InvalidInput("grayscale conversion needs an RGB image".into()));
    }
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| luma(p[0], p[1], p[2]))
        .collect();
    RasterImage::new(img.width(), img.height(), 1, data)
}

fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

/// RGB to HSV with every component on 0..=255 (hue scaled from degrees).
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> [u8; 3] {
    let (rf, gf, bf) = (r as f64, g as f64, b as f64);
    let max = rf.max(gf).max(bf);
    let min = rf.min(gf).min(bf);
    let delta = max - min;
    let s = if max == 0.0 { 0.0 } else { (255.0 * delta / max).round() };
    let hue_deg = if delta == 0.0 {
        0.0
    } else if max == rf {
        (60.0 * ((gf - bf) / delta)).rem_euclid(360.0)
    } else if max == gf {
        60.0 * ((bf - rf) / delta + 2.0)
    } else {
        60.0 * ((rf - gf) / delta + 4.0)
    };
    [(hue_deg * 255.0 / 360.0).round() as u8, s as u8, max as u8]
}

pub fn hsv_mask(img: &RasterImage, ranges: &[HsvRange]) -> Result<RasterImage, ImageOpsError> {
    if img.channels() != 3 {
        return Err(ImageOpsError::InvalidInput("HSV segmentation needs an RGB image".into()));
    }
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| {
            let hsv = rgb_to_hsv(p[0], p[1], p[2]);
            if ranges.iter().any(|r| r.contains(hsv)) {
                255
            } else {
                0
            }
        })
        .collect();
    RasterImage::new(img.width(), img.height(), 1, data)
}

/// Histogram equalization of a single-channel image. A constant image is
/// returned unchanged.
pub fn equalize_histogram(gray: &RasterImage) -> Result<RasterImage, ImageOpsError> {
    if gray.channels() != 1 {
        return Err(ImageOpsError::InvalidInput("histogram equalization needs one channel".into()));
    }
    let mut hist = [0u64; 256];
    for &v in gray.data() {
        hist[v as usize] += 1;
    }
    let total = gray.data().len() as u64;
    let mut cdf = [0u64; 256];
    let mut running = 0;
    for (slot, count) in cdf.iter_mut().zip(hist) {
        running += count;
        *slot = running;
    }
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    let denom = total - cdf_min;
    if denom == 0 {
        return Ok(gray.clone());
    }
    let mut lut = [0u8; 256];
    for (v, slot) in lut.iter_mut().enumerate() {
        let num = cdf[v].saturating_sub(cdf_min) * 255;
        *slot = ((2 * num + denom) / (2 * denom)) as u8;
    }
    let data = gray.data().iter().map(|&v| lut[v as usize]).collect();
    RasterImage::new(gray.width(), gray.height(), 1, data)
}

fn gaussian_kernel_5(sigma: f64) -> [f64; 5] {
    let mut k = [0.0; 5];
    for (i, slot) in k.iter_mut().enumerate() {
        let d = i as f64 - 2.0;
        *slot = (-(d * d) / (2.0 * sigma * sigma)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.map(|v| v / sum)
}

struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    fn at_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }
}

fn blur(gray: &RasterImage) -> Plane {
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let k = gaussian_kernel_5(1.4);
    let src = Plane { width: w, height: h, data: gray.data().iter().map(|&v| v as f64).collect() };
    let mut horizontal = Plane { width: w, height: h, data: vec![0.0; w * h] };
    for y in 0..h {
        for x in 0..w {
            horizontal.data[y * w + x] =
                (0..5).map(|i| k[i] * src.at_clamped(x as isize + i as isize - 2, y as isize)).sum();
        }
    }
    let mut out = Plane { width: w, height: h, data: vec![0.0; w * h] };
    for y in 0..h {
        for x in 0..w {
            out.data[y * w + x] =
                (0..5).map(|i| k[i] * horizontal.at_clamped(x as isize, y as isize + i as isize - 2)).sum();
        }
    }
    out
}

/// Canny edge map of a single-channel image: Gaussian blur (5x5, sigma 1.4),
/// Sobel gradients, non-maximum suppression, double threshold and 8-connected
/// hysteresis. Edge pixels are 255, everything else 0.
pub fn canny(gray: &RasterImage, low: u8, high: u8) -> Result<RasterImage, ImageOpsError> {
    if gray.channels() != 1 {
        return Err(ImageOpsError::InvalidInput("edge detection needs one channel".into()));
    }
    if low >= high {
        return Err(ImageOpsError::InvalidInput(format!("canny_low {low} must be below canny_high {high}")));
    }
    let smoothed = blur(gray);
    let (w, h) = (smoothed.width, smoothed.height);
    let mut magnitude = vec![0.0f64; w * h];
    let mut direction = vec![0u8; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| smoothed.at_clamped(x + dx, y + dy);
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let i = y as usize * w + x as usize;
            magnitude[i] = gx.hypot(gy);
            let angle = gy.atan2(gx).to_degrees().rem_euclid(180.0);
            direction[i] = match angle {
                a if !(22.5..157.5).contains(&a) => 0,
                a if a < 67.5 => 1,
                a if a < 112.5 => 2,
                _ => 3,
            };
        }
    }

    let mag_at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            magnitude[y as usize * w + x as usize]
        }
    };
    let (low, high) = (low as f64, high as f64);
    // 0 = suppressed, 1 = weak, 2 = strong
    let mut class = vec![0u8; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let m = magnitude[i];
            if m < low {
                continue;
            }
            let (dx, dy) = match direction[i] {
                0 => (1, 0),
                1 => (1, 1),
                2 => (0, 1),
                _ => (-1, 1),
            };
            // ties on plateaus resolve toward the forward neighbour
            if m >= mag_at(x + dx, y + dy) && m > mag_at(x - dx, y - dy) {
                class[i] = if m >= high { 2 } else { 1 };
            }
        }
    }

    let mut edges = vec![0u8; w * h];
    let mut queue: VecDeque<usize> = class.iter().enumerate().filter(|(_, &c)| c == 2).map(|(i, _)| i).collect();
    for &i in &queue {
        edges[i] = 255;
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if class[j] == 1 && edges[j] == 0 {
                    edges[j] = 255;
                    queue.push_back(j);
                }
            }
        }
    }
    RasterImage::new(gray.width(), gray.height(), 1, edges)
}

/// Three-channel composite: Canny edges of the luma, HSV segmentation mask,
/// and equalized luma.
pub fn enhance(img: &RasterImage, params: &EnhanceParams) -> Result<RasterImage, ImageOpsError> {
    if img.channels() != 3 {
        return Err(ImageOpsError::InvalidInput("enhancement needs an RGB image, got grayscale".into()));
    }
    let gray = to_grayscale(img)?;
    let edges = canny(&gray, params.canny_low, params.canny_high)?;
    let mask = hsv_mask(img, &params.hsv_ranges)?;
    let equalized = equalize_histogram(&gray)?;
    let data = edges
        .data()
        .iter()
        .zip(mask.data())
        .zip(equalized.data())
        .flat_map(|((&e, &m), &q)| [e, m, q])
        .collect();
    RasterImage::new(img.width(), img.height(), 3, data)
}
