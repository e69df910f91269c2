use super::config::OpticalConfig;
use crate::error::Result;
use crate::image::Image;

/// Sampling of the pupil plane.
///
/// The grid is `fft_size` samples per side in centered layout: sample
/// `(r, c)` sits at spatial frequency `((c - F/2) df, (r - F/2) df)`. Only
/// samples with normalized radius `rho <= 1` carry light; they are listed in
/// `support_idx` so inner loops touch nothing else.
#[derive(Debug, Clone)]
pub struct PupilGrid {
    pub size: usize,
    /// frequency step, cycles per meter
    pub df: f64,
    /// pupil radius in samples
    pub radius: f64,
    pub rho: Vec<f64>,
    pub support: Vec<bool>,
    /// centered indices of support samples, row-major order
    pub support_idx: Vec<usize>,
    /// normalized pupil coordinates (u, v) = (fx, fy) / cutoff per support sample
    pub coords: Vec<[f64; 2]>,
    pub fx: Vec<f64>,
    pub fy: Vec<f64>,
    /// FFT-order position of each support sample
    pub fft_pos: Vec<usize>,
}

impl PupilGrid {
    pub fn new(cfg: &OpticalConfig) -> Result<Self> {
        cfg.validate()?;
        let f = cfg.fft_size();
        let df = 1.0 / (f as f64 * cfg.fine_pixel());
        let cutoff = cfg.cutoff();
        let half = (f / 2) as isize;
        let mut rho = vec![0.0; f * f];
        let mut support = vec![false; f * f];
        let mut support_idx = Vec::new();
        let mut coords = Vec::new();
        let mut fxs = Vec::new();
        let mut fys = Vec::new();
        let mut fft_pos = Vec::new();
        for r in 0..f {
            for c in 0..f {
                let fy = (r as isize - half) as f64 * df;
                let fx = (c as isize - half) as f64 * df;
                let rr = (fx * fx + fy * fy).sqrt() / cutoff;
                let i = r * f + c;
                rho[i] = rr;
                if rr <= 1.0 {
                    support[i] = true;
                    support_idx.push(i);
                    coords.push([fx / cutoff, fy / cutoff]);
                    fxs.push(fx);
                    fys.push(fy);
                    fft_pos.push(((r + f / 2) % f) * f + (c + f / 2) % f);
                }
            }
        }
        Ok(PupilGrid {
            size: f,
            df,
            radius: cutoff / df,
            rho,
            support,
            support_idx,
            coords,
            fx: fxs,
            fy: fys,
            fft_pos,
        })
    }

    pub fn n_support(&self) -> usize {
        self.support_idx.len()
    }

    /// Scatters per-support-sample values into a full centered grid, zero elsewhere.
    pub fn to_image(&self, values: &[f64]) -> Image {
        let mut img = Image::zeros(self.size, self.size);
        for (k, &i) in self.support_idx.iter().enumerate() {
            img.data[i] = values[k];
        }
        img
    }

    /// Gathers support-sample values from a full centered grid.
    pub fn from_image(&self, img: &Image) -> Vec<f64> {
        self.support_idx.iter().map(|&i| img.data[i]).collect()
    }
}
