use super::config::OpticalConfig;
use crate::error::{Error, Result};
use crate::image::Image;

/// Sub-samples per axis used to integrate the blur kernel.
const KERNEL_SAMPLES: usize = 48;

/// Convolution kernel for a uniform disk of `radius_px` sensor pixels.
///
/// The PSF is treated as constant over each pixel, so the kernel is the
/// disk integrated against the pixel-overlap tent `(1-|wx|)(1-|wy|)`. This
/// keeps sub-pixel disks from collapsing to the identity.
pub fn disk_kernel(radius_px: f64) -> Image {
    let half = (radius_px + 1.0).ceil() as usize;
    let size = 2 * half + 1;
    let mut k = Image::zeros(size, size);
    let r2 = radius_px * radius_px;
    let step = 2.0 / KERNEL_SAMPLES as f64;
    for kr in 0..size {
        for kc in 0..size {
            let dy = kr as f64 - half as f64;
            let dx = kc as f64 - half as f64;
            let mut acc = 0.0;
            for i in 0..KERNEL_SAMPLES {
                let wy = -1.0 + (i as f64 + 0.5) * step;
                let ty = 1.0 - wy.abs();
                for j in 0..KERNEL_SAMPLES {
                    let wx = -1.0 + (j as f64 + 0.5) * step;
                    let (px, py) = (dx + wx, dy + wy);
                    if px * px + py * py <= r2 {
                        acc += ty * (1.0 - wx.abs());
                    }
                }
            }
            k.set(kr, kc, acc);
        }
    }
    let total = k.sum();
    if total > 0.0 {
        k.scaled(1.0 / total)
    } else {
        // radius below the integration resolution: identity
        let mut id = Image::zeros(size, size);
        id.set(half, half, 1.0);
        id
    }
}

/// Cyclic convolution of `img` with `kernel` (odd-sized, centered).
pub fn convolve(img: &Image, kernel: &Image) -> Image {
    let (n, m) = img.shape();
    let hk = (kernel.rows / 2) as isize;
    let mut out = Image::zeros(n, m);
    for kr in 0..kernel.rows {
        for kc in 0..kernel.cols {
            let w = kernel.get(kr, kc);
            if w == 0.0 {
                continue;
            }
            let dr = kr as isize - hk;
            let dc = kc as isize - hk;
            for r in 0..n {
                let sr = (r as isize - dr).rem_euclid(n as isize) as usize;
                let src = &img.data[sr * m..(sr + 1) * m];
                let dst = &mut out.data[r * m..(r + 1) * m];
                for c in 0..m {
                    let sc = (c as isize - dc).rem_euclid(m as isize) as usize;
                    dst[c] += w * src[sc];
                }
            }
        }
    }
    out
}

/// Blurs a sensor-plane image by a uniform emitter disk of the given
/// object-space diameter.
pub fn blur_emitter(img: &Image, emitter_diameter: f64, cfg: &OpticalConfig) -> Result<Image> {
    if !(emitter_diameter >= 0.0) {
        return Err(Error::InvalidInput("emitter diameter must be >= 0".into()));
    }
    if emitter_diameter == 0.0 {
        return Ok(img.clone());
    }
    let radius_px = 0.5 * emitter_diameter * cfg.magnification / cfg.pixel_pitch;
    Ok(convolve(img, &disk_kernel(radius_px)))
}
