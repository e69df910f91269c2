use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Meta;

/// Microscope and sensor constants.
///
/// Emitter positions are expressed in object-space meters. The sensor pixel
/// pitch maps to `pixel_pitch / magnification` in object space, so a lateral
/// shift of one object-space pixel moves the image by exactly one sensor pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticalConfig {
    pub na: f64,
    pub n_medium: f64,
    /// meters
    pub wavelength: f64,
    pub magnification: f64,
    /// 4f relay focal length, meters. Informational: the pupil is sampled in
    /// normalized spatial frequency, so the relay only rescales the mask size.
    pub focal_length: f64,
    /// sensor-plane pixel pitch, meters
    pub pixel_pitch: f64,
    /// sensor pixels per side
    pub grid: usize,
    /// fine samples per sensor pixel per axis used by the FFT
    pub oversample: usize,
    pub signal_photons: f64,
    pub background_fraction: f64,
    /// |z| guard for the defocus model, meters
    pub max_abs_z: f64,
}

impl Default for OpticalConfig {
    /// Microscope constants of the reference system at desk-scale resolution.
    fn default() -> Self {
        OpticalConfig {
            na: 1.4,
            n_medium: 1.518,
            wavelength: 550e-9,
            magnification: 111.11,
            focal_length: 0.150,
            pixel_pitch: 49.58e-6,
            grid: 32,
            oversample: 4,
            signal_photons: 5000.0,
            background_fraction: 0.01,
            max_abs_z: 10e-6,
        }
    }
}

impl OpticalConfig {
    /// Full-resolution configuration (256 x 256 sensor).
    pub fn full_scale() -> Self {
        OpticalConfig {
            grid: 256,
            ..Default::default()
        }
    }

    pub fn with_grid(mut self, grid: usize) -> Self {
        self.grid = grid;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.na > 0.0 && self.na < self.n_medium) {
            return bad("numerical aperture must satisfy 0 < NA < n");
        }
        if !self.grid.is_power_of_two() || self.grid < 2 {
            return bad("grid must be a power of two >= 2");
        }
        if self.oversample == 0 {
            return bad("oversample must be >= 1");
        }
        for (name, v) in [
            ("wavelength", self.wavelength),
            ("magnification", self.magnification),
            ("focal_length", self.focal_length),
            ("pixel_pitch", self.pixel_pitch),
            ("max_abs_z", self.max_abs_z),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.signal_photons >= 0.0 && self.signal_photons.is_finite()) {
            return bad("signal_photons must be non-negative");
        }
        if !(0.0..1.0).contains(&self.background_fraction) {
            return bad("background_fraction must lie in [0, 1)");
        }
        // The pupil has to fit inside the FFT grid without overlapping its
        // periodic copies.
        if self.pupil_diameter_fraction() >= 1.0 {
            return Err(Error::Config(format!(
                "oversample {} too small: pupil spans {:.2} of the FFT grid",
                self.oversample,
                self.pupil_diameter_fraction()
            )));
        }
        Ok(())
    }

    /// Object-space size of one sensor pixel.
    pub fn object_pixel(&self) -> f64 {
        self.pixel_pitch / self.magnification
    }

    pub fn fine_pixel(&self) -> f64 {
        self.object_pixel() / self.oversample as f64
    }

    pub fn fft_size(&self) -> usize {
        self.grid * self.oversample
    }

    /// Coherent cutoff frequency NA / lambda, cycles per meter.
    pub fn cutoff(&self) -> f64 {
        self.na / self.wavelength
    }

    /// Pupil diameter as a fraction of the FFT grid width.
    pub fn pupil_diameter_fraction(&self) -> f64 {
        2.0 * self.cutoff() * self.fine_pixel()
    }

    pub fn half_fov(&self) -> f64 {
        0.5 * self.grid as f64 * self.object_pixel()
    }

    /// Photons in the PSF of an unobstructed pupil.
    pub fn psf_photons(&self) -> f64 {
        self.signal_photons * (1.0 - self.background_fraction)
    }

    /// Constant per-pixel background rate.
    pub fn background_per_pixel(&self) -> f64 {
        self.background_fraction * self.signal_photons / (self.grid * self.grid) as f64
    }

    pub fn to_meta(&self) -> Meta {
        Meta::new()
            .with("na", self.na)
            .with("n_medium", self.n_medium)
            .with("wavelength_m", self.wavelength)
            .with("magnification", self.magnification)
            .with("focal_length_m", self.focal_length)
            .with("pixel_pitch_m", self.pixel_pitch)
            .with("grid", self.grid)
            .with("oversample", self.oversample)
            .with("signal_photons", self.signal_photons)
            .with("background_fraction", self.background_fraction)
    }
}
