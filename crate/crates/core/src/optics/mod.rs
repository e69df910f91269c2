//! Fourier-optics PSF simulation.

mod blur;
mod config;
mod mask;
mod psf;
mod pupil;

pub use blur::{blur_emitter, convolve, disk_kernel};
pub use config::OpticalConfig;
pub use mask::{Mask, MaskKind};
pub use psf::{Optics, Position, PsfCotangent, PsfEval, PsfTape};
pub use pupil::PupilGrid;

/// Defocus phase `(2 pi / lambda) z sqrt(n^2 - (NA rho)^2)` at normalized pupil radius `rho`.
pub fn defocus_at(cfg: &OpticalConfig, rho: f64, z: f64) -> f64 {
    let s = cfg.na * rho;
    2.0 * std::f64::consts::PI / cfg.wavelength * z * (cfg.n_medium * cfg.n_medium - s * s).sqrt()
}
