use super::RasterImage;

/// Output dimensions for an aspect-preserving downscale to `target_long_side`.
///
/// The long side becomes `target_long_side`; the short side is
/// `round(short * target / long)` (half away from zero), clamped to at least 1.
/// Inputs whose long side is already within the target are returned as-is.
pub fn zoom_out_dimensions(width: u32, height: u32, target_long_side: u32) -> (u32, u32) {
    let target = target_long_side.max(1);
    let long = width.max(height);
    if long <= target {
        return (width, height);
    }
    let short = width.min(height) as u64;
    let scaled = ((2 * short * target as u64 + long as u64) / (2 * long as u64)).max(1) as u32;
    if width >= height {
        (target, scaled)
    } else {
        (scaled, target)
    }
}

/// Aspect-preserving box (area-average) downscale. Never upsamples.
pub fn zoom_out(img: &RasterImage, target_long_side: u32) -> RasterImage {
    let (out_w, out_h) = zoom_out_dimensions(img.width(), img.height(), target_long_side);
    if (out_w, out_h) == (img.width(), img.height()) {
        return img.clone();
    }
    box_downscale(img, out_w, out_h)
}

/// Per-axis coverage of source pixels by one output pixel, in units of
/// `1/out_len` source pixels. Output pixel `o` spans `[o*in_len, (o+1)*in_len)`
/// and source pixel `i` spans `[i*out_len, (i+1)*out_len)`.
fn axis_weights(in_len: u32, out_len: u32) -> Vec<Vec<(usize, u64)>> {
    let (in_len, out_len) = (in_len as u64, out_len as u64);
    (0..out_len)
        .map(|o| {
            let start = o * in_len;
            let end = start + in_len;
            let first = start / out_len;
            let last = (end - 1) / out_len;
            (first..=last)
                .filter_map(|i| {
                    let lo = start.max(i * out_len);
                    let hi = end.min((i + 1) * out_len);
                    (hi > lo).then_some((i as usize, hi - lo))
                })
                .collect()
        })
        .collect()
}

/// Exact rational area averaging. Every output sample is
/// `round(sum(w_x * w_y * v) / (in_w * in_h))` computed in integers, so the
/// result is identical on every platform.
pub(crate) fn box_downscale(img: &RasterImage, out_w: u32, out_h: u32) -> RasterImage {
    let xw = axis_weights(img.width(), out_w);
    let yw = axis_weights(img.height(), out_h);
    let channels = img.channels() as usize;
    let in_w = img.width() as usize;
    let denom = img.width() as u64 * img.height() as u64;
    let src = img.data();

    let mut out = Vec::with_capacity(out_w as usize * out_h as usize * channels);
    let mut acc = vec![0u64; channels];
    for ys in &yw {
        for xs in &xw {
            acc.iter_mut().for_each(|a| *a = 0);
            for &(sy, wy) in ys {
                let row = sy * in_w;
                for &(sx, wx) in xs {
                    let w = wx * wy;
                    let base = (row + sx) * channels;
                    for (c, a) in acc.iter_mut().enumerate() {
                        *a += w * src[base + c] as u64;
                    }
                }
            }
            out.extend(acc.iter().map(|&a| ((2 * a + denom) / (2 * denom)).min(255) as u8));
        }
    }
    RasterImage::new(out_w, out_h, img.channels(), out).expect("dimensions computed from input")
}
