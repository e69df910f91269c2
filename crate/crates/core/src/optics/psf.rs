use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::config::OpticalConfig;
use super::mask::{Mask, MaskKind};
use super::pupil::PupilGrid;
use crate::error::{Error, Result};
use crate::image::Image;

/// Emitter position in object-space meters.
pub type Position = [f64; 3];

/// PSF image at one emitter position, optionally with its position derivatives.
#[derive(Debug, Clone)]
pub struct PsfEval {
    /// photons per pixel
    pub h: Image,
    /// dh/dx, dh/dy, dh/dz in photons per pixel per meter
    pub dh: Option<[Image; 3]>,
    pub position: Position,
}

impl PsfEval {
    pub fn grads(&self) -> Result<&[Image; 3]> {
        self.dh
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("PSF evaluated without derivatives".into()))
    }
}

/// Pixel-level cotangents of the four PSF outputs.
#[derive(Debug, Clone, Default)]
pub struct PsfCotangent {
    pub h: Option<Image>,
    pub dh: [Option<Image>; 3],
}

/// Intermediate fields kept by [`Optics::psf_gradients_taped`] for the reverse pass.
pub struct PsfTape {
    /// pupil field per support sample
    pupil_field: Vec<Complex64>,
    /// exp(i * total phase) per support sample
    phasor: Vec<Complex64>,
    /// fine-grid fields in FFT order: E, dE/dx, dE/dy, dE/dz
    fields: [Vec<Complex64>; 4],
}

/// Scalar Fourier-optics PSF model with analytic position derivatives.
///
/// The pupil field `A exp(i (phi_M + phi_DF(z) + 2 pi (fx x + fy y)))` is
/// transformed on a grid `oversample` times finer than the sensor, squared,
/// and binned to sensor pixels. Lateral position enters as a linear phase
/// ramp, so derivatives with respect to x, y and z are exact.
pub struct Optics {
    pub cfg: OpticalConfig,
    pub pupil: PupilGrid,
    /// d(phi_DF)/dz per support sample
    kz: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    norm: f64,
    /// sensor pixel of every fine sample, indexed in FFT order
    fine_to_pixel: Vec<u32>,
    origin_offset: f64,
}

impl std::fmt::Debug for Optics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Optics").field("cfg", &self.cfg).finish()
    }
}

impl Optics {
    pub fn new(cfg: OpticalConfig) -> Result<Self> {
        let pupil = PupilGrid::new(&cfg)?;
        let k0 = 2.0 * PI / cfg.wavelength;
        let kz = pupil
            .support_idx
            .iter()
            .map(|&i| {
                let s = cfg.na * pupil.rho[i];
                k0 * (cfg.n_medium * cfg.n_medium - s * s).sqrt()
            })
            .collect();
        let gx = pupil.fx.iter().map(|f| 2.0 * PI * f).collect();
        let gy = pupil.fy.iter().map(|f| 2.0 * PI * f).collect();
        let f = cfg.fft_size();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(f);
        let inv = planner.plan_fft_inverse(f);
        let norm = cfg.psf_photons() / ((f * f) as f64 * pupil.n_support() as f64);
        let s = cfg.oversample;
        let n = cfg.grid;
        let mut fine_to_pixel = vec![0u32; f * f];
        for kr in 0..f {
            let pr = ((kr + f / 2) % f) / s;
            for kc in 0..f {
                let pc = ((kc + f / 2) % f) / s;
                fine_to_pixel[kr * f + kc] = (pr * n + pc) as u32;
            }
        }
        // Put position 0 at the center of sensor pixel (grid/2, grid/2).
        let origin_offset = 0.5 * (s as f64 - 1.0) * cfg.fine_pixel();
        Ok(Optics {
            cfg,
            pupil,
            kz,
            gx,
            gy,
            fwd,
            inv,
            norm,
            fine_to_pixel,
            origin_offset,
        })
    }

    pub fn grid(&self) -> usize {
        self.cfg.grid
    }

    pub fn background(&self) -> f64 {
        self.cfg.background_per_pixel()
    }

    /// Object-space position of the center of sensor pixel (row, col).
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        let n = self.cfg.grid as f64;
        let p = self.cfg.object_pixel();
        ((col as f64 - n / 2.0) * p, (row as f64 - n / 2.0) * p)
    }

    /// Defocus phase over the full centered pupil grid, zero off support.
    pub fn defocus_phase(&self, z: f64) -> Result<Image> {
        self.check_z(z)?;
        let vals: Vec<f64> = self.kz.iter().map(|k| k * z).collect();
        Ok(self.pupil.to_image(&vals))
    }

    fn check_z(&self, z: f64) -> Result<()> {
        if !z.is_finite() {
            return Err(Error::NonFinite("depth".into()));
        }
        if z.abs() > self.cfg.max_abs_z {
            return Err(Error::DepthOutOfRange {
                z,
                limit: self.cfg.max_abs_z,
            });
        }
        Ok(())
    }

    fn check_inputs(&self, mask: &Mask, pos: Position) -> Result<()> {
        mask.check(&self.pupil)?;
        if !(pos[0].is_finite() && pos[1].is_finite()) {
            return Err(Error::NonFinite("position".into()));
        }
        let half = self.cfg.half_fov();
        if pos[0].abs() > half || pos[1].abs() > half {
            return Err(Error::OutOfView {
                x: pos[0],
                y: pos[1],
                half_fov: half,
            });
        }
        self.check_z(pos[2])
    }

    fn phasor(&self, mask: &Mask, pos: Position) -> (Vec<Complex64>, Vec<Complex64>) {
        let xe = pos[0] + self.origin_offset;
        let ye = pos[1] + self.origin_offset;
        let z = pos[2];
        let n = self.pupil.n_support();
        let mut phasor = Vec::with_capacity(n);
        let mut field = Vec::with_capacity(n);
        for k in 0..n {
            let (mask_phase, amp) = match mask.kind {
                MaskKind::Phase => (mask.values[k], 1.0),
                MaskKind::Amplitude => (0.0, mask.values[k]),
            };
            let phi = mask_phase + z * self.kz[k] + self.gx[k] * xe + self.gy[k] * ye;
            let e = Complex64::from_polar(1.0, phi);
            phasor.push(e);
            field.push(e * amp);
        }
        (field, phasor)
    }

    fn fft2(&self, buf: &mut [Complex64], inverse: bool) {
        let plan = if inverse { &self.inv } else { &self.fwd };
        let f = self.cfg.fft_size();
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(buf, &mut scratch);
        transpose_square(buf, f);
        plan.process_with_scratch(buf, &mut scratch);
        transpose_square(buf, f);
    }

    fn transform(&self, field: &[Complex64], mult: Option<&[f64]>) -> Vec<Complex64> {
        let f = self.cfg.fft_size();
        let mut buf = vec![Complex64::new(0.0, 0.0); f * f];
        match mult {
            None => {
                for (k, &pos) in self.pupil.fft_pos.iter().enumerate() {
                    buf[pos] = field[k];
                }
            }
            Some(g) => {
                for (k, &pos) in self.pupil.fft_pos.iter().enumerate() {
                    buf[pos] = field[k] * Complex64::new(0.0, g[k]);
                }
            }
        }
        self.fft2(&mut buf, false);
        buf
    }

    fn bin(&self, fine: impl Iterator<Item = f64>) -> Image {
        let n = self.cfg.grid;
        let mut img = Image::zeros(n, n);
        for (k, v) in fine.enumerate() {
            img.data[self.fine_to_pixel[k] as usize] += v;
        }
        img
    }

    /// PSF intensity without derivatives.
    pub fn compute_psf(&self, mask: &Mask, pos: Position) -> Result<PsfEval> {
        self.check_inputs(mask, pos)?;
        let (field, _) = self.phasor(mask, pos);
        let e = self.transform(&field, None);
        let c = self.norm;
        let h = self.bin(e.iter().map(|v| c * v.norm_sqr()));
        Ok(PsfEval {
            h,
            dh: None,
            position: pos,
        })
    }

    /// Intensity on the fine (oversampled) grid in FFT order, before binning.
    pub fn fine_intensity(&self, mask: &Mask, pos: Position) -> Result<Vec<f64>> {
        self.check_inputs(mask, pos)?;
        let (field, _) = self.phasor(mask, pos);
        let c = self.norm;
        Ok(self.transform(&field, None).iter().map(|v| c * v.norm_sqr()).collect())
    }

    /// Bins a fine intensity after shifting it cyclically by `dy` fine rows
    /// and `dx` fine columns. Equals the PSF of an emitter displaced by
    /// `(dx, dy)` fine samples.
    pub fn bin_shifted(&self, fine: &[f64], dy: isize, dx: isize) -> Image {
        let f = self.cfg.fft_size();
        let fi = f as isize;
        let n = self.cfg.grid;
        let mut img = Image::zeros(n, n);
        let ry = dy.rem_euclid(fi) as usize;
        let rx = dx.rem_euclid(fi) as usize;
        for kr in 0..f {
            let tr = (kr + ry) % f;
            let src = &fine[kr * f..(kr + 1) * f];
            let dst = &self.fine_to_pixel[tr * f..(tr + 1) * f];
            for kc in 0..f {
                let tc = (kc + rx) % f;
                img.data[dst[tc] as usize] += src[kc];
            }
        }
        img
    }

    /// PSF intensity and its analytic derivatives with respect to x, y and z.
    pub fn psf_gradients(&self, mask: &Mask, pos: Position) -> Result<PsfEval> {
        self.psf_gradients_taped(mask, pos).map(|(eval, _)| eval)
    }

    pub fn psf_gradients_taped(&self, mask: &Mask, pos: Position) -> Result<(PsfEval, PsfTape)> {
        self.check_inputs(mask, pos)?;
        let (field, phasor) = self.phasor(mask, pos);
        let e = self.transform(&field, None);
        let ex = self.transform(&field, Some(&self.gx));
        let ey = self.transform(&field, Some(&self.gy));
        let ez = self.transform(&field, Some(&self.kz));
        let c = self.norm;
        let h = self.bin(e.iter().map(|v| c * v.norm_sqr()));
        let deriv = |d: &[Complex64]| {
            self.bin(
                e.iter()
                    .zip(d)
                    .map(|(a, b)| 2.0 * c * (a.re * b.re + a.im * b.im)),
            )
        };
        let dh = [deriv(&ex), deriv(&ey), deriv(&ez)];
        let eval = PsfEval {
            h,
            dh: Some(dh),
            position: pos,
        };
        let tape = PsfTape {
            pupil_field: field,
            phasor,
            fields: [e, ex, ey, ez],
        };
        Ok((eval, tape))
    }

    /// Reverse pass: maps pixel-level cotangents of (h, dh/dx, dh/dy, dh/dz)
    /// to the cotangent of the mask values (d loss / d phase or d loss / d amplitude).
    pub fn psf_backward(&self, mask: &Mask, tape: &PsfTape, cot: &PsfCotangent) -> Vec<f64> {
        let f = self.cfg.fft_size();
        let c2 = 2.0 * self.norm;
        let zero = Complex64::new(0.0, 0.0);
        let pix = |img: &Option<Image>, k: usize| -> f64 {
            img.as_ref()
                .map_or(0.0, |im| im.data[self.fine_to_pixel[k] as usize])
        };
        let [e, ex, ey, ez] = &tape.fields;
        let mut e_bar = vec![zero; f * f];
        let mut d_bar: [Vec<Complex64>; 3] = [vec![zero; f * f], vec![zero; f * f], vec![zero; f * f]];
        let used = [cot.dh[0].is_some(), cot.dh[1].is_some(), cot.dh[2].is_some()];
        for k in 0..f * f {
            let gh = pix(&cot.h, k);
            let g = [pix(&cot.dh[0], k), pix(&cot.dh[1], k), pix(&cot.dh[2], k)];
            e_bar[k] = (e[k] * gh + ex[k] * g[0] + ey[k] * g[1] + ez[k] * g[2]) * c2;
            for j in 0..3 {
                if used[j] {
                    d_bar[j][k] = e[k] * (g[j] * c2);
                }
            }
        }
        self.fft2(&mut e_bar, true);
        let mut p_bar: Vec<Complex64> = self.pupil.fft_pos.iter().map(|&p| e_bar[p]).collect();
        let mults: [&[f64]; 3] = [&self.gx, &self.gy, &self.kz];
        for j in 0..3 {
            if !used[j] {
                continue;
            }
            let mut buf = std::mem::take(&mut d_bar[j]);
            self.fft2(&mut buf, true);
            for (k, &p) in self.pupil.fft_pos.iter().enumerate() {
                // adjoint of multiplication by i*g is multiplication by -i*g
                p_bar[k] += buf[p] * Complex64::new(0.0, -mults[j][k]);
            }
        }
        match mask.kind {
            MaskKind::Phase => p_bar
                .iter()
                .zip(&tape.pupil_field)
                .map(|(pb, p)| -(pb.conj() * p).im)
                .collect(),
            MaskKind::Amplitude => p_bar
                .iter()
                .zip(&tape.phasor)
                .map(|(pb, ph)| (pb.conj() * ph).re)
                .collect(),
        }
    }
}

fn transpose_square(buf: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in r + 1..n {
            buf.swap(r * n + c, c * n + r);
        }
    }
}
