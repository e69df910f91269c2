//! Reference masks: open aperture, a CMOS-optimal phase mask and a coarse
//! binary coded aperture.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fisher::InfoModel;
use crate::image::{Image, Meta};
use crate::optics::{Mask, MaskKind, Optics};
use crate::optimize::{optimize_mask, AdamConfig, OptimizeConfig, ParamSpec};
use crate::param::{load_mask, MaskParams};

pub const LEVIN_CELLS: usize = 13;
pub const LEVIN_SEED: u64 = 2007;

/// Settings that produce the shipped Fisher phase mask: Zernike phase
/// coefficients minimizing the flashing-source (single-frame) CRB.
pub fn fisher_mask_config() -> OptimizeConfig {
    OptimizeConfig {
        epochs: 400,
        param: ParamSpec::Zernike,
        n_coeffs: 55,
        model: InfoModel::Flashing,
        adam: AdamConfig {
            lr: 0.05,
            beta1: 0.9,
            ..AdamConfig::default()
        },
        val_every: 20,
        seed: 11,
        ..OptimizeConfig::default()
    }
}

pub fn design_fisher_mask(optics: &Optics) -> Result<MaskParams> {
    Ok(optimize_mask(optics, &fisher_mask_config(), None, |_| {})?.best)
}

/// `cells x cells` binary pattern with exactly half the cells inside the
/// pupil open, drawn from a seeded shuffle.
pub fn coarse_binary_pattern(cells: usize, seed: u64) -> Image {
    let half = (cells / 2) as f64;
    let radius = cells as f64 / 2.0;
    let inside: Vec<usize> = (0..cells * cells)
        .filter(|i| {
            let (r, c) = ((i / cells) as f64 - half, (i % cells) as f64 - half);
            (r * r + c * c).sqrt() <= radius
        })
        .collect();
    let mut order = inside.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut img = Image::zeros(cells, cells);
    for &i in &order[..inside.len().div_ceil(2)] {
        img.data[i] = 1.0;
    }
    img
}

pub fn coarse_meta() -> Meta {
    Meta::new()
        .with("param", "coarse")
        .with("kind", MaskKind::Amplitude.as_str())
        .with("units", "transmittance")
}

/// Writes `fisher.ceo1` and `levin.ceo1` (with sidecars) into `dir`.
pub fn write_baseline_data(dir: &Path, optics: &Optics) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let fisher = design_fisher_mask(optics)?;
    fisher.save(dir.join("fisher.ceo1"))?;
    fisher.write_zernike_csv(dir.join("fisher_zernike.csv"))?;
    let levin = coarse_binary_pattern(LEVIN_CELLS, LEVIN_SEED);
    let path = dir.join("levin.ceo1");
    levin.write_ceo1(&path)?;
    coarse_meta().write(&path)
}

/// Directory holding the shipped baseline files.
pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

/// Resolves `open`, `fisher`, `levin` or a path to a mask file.
pub fn named_mask(name: &str, optics: &Optics) -> Result<Mask> {
    match name {
        "open" => Ok(Mask::open(&optics.pupil)),
        "fisher" | "levin" => load_mask(data_dir().join(format!("{name}.ceo1")), &optics.pupil),
        path => {
            let p = Path::new(path);
            if !p.exists() {
                return Err(Error::Config(format!(
                    "unknown mask '{name}' (expected open, fisher, levin or a file path)"
                )));
            }
            load_mask(p, &optics.pupil)
        }
    }
}
