//! Differentiable mask parameterizations.
//!
//! Every representation produces a raw scalar field over the pupil support.
//! Phase masks use it directly in radians; amplitude masks pass it through a
//! sigmoid. Gradients flow back from mask values to parameters by hand-written
//! adjoints.

pub mod neural;
pub mod zernike;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Meta};
use crate::optics::{Mask, MaskKind, PupilGrid};
pub use neural::{Activation, Mlp, DEFAULT_LAYERS, OMEGA_0};
use neural::{init_params, param_count, sigmoid};

pub const DEFAULT_ZERNIKE_TERMS: usize = 55;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Repr {
    /// one value per sample of the full pupil grid; only support samples are used
    PixelWise { pupil_size: usize },
    /// Noll-ordered coefficients, radians
    Zernike { n_coeffs: usize },
    Neural { layers: Vec<usize>, activation: Activation },
}

impl Repr {
    pub fn tag(&self) -> &'static str {
        match self {
            Repr::PixelWise { .. } => "pixel",
            Repr::Zernike { .. } => "zernike",
            Repr::Neural { .. } => "neural",
        }
    }
}

/// A parameterized mask: representation, output kind and flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskParams {
    pub repr: Repr,
    pub kind: MaskKind,
    pub values: Vec<f64>,
}

impl MaskParams {
    /// Deterministic initialization. Pixel-wise and Zernike parameters start at
    /// zero (an open aperture for phase, uniform 0.5 transmittance for amplitude).
    pub fn init(repr: Repr, kind: MaskKind, seed: u64) -> Result<Self> {
        let values = match &repr {
            Repr::PixelWise { pupil_size } => vec![0.0; pupil_size * pupil_size],
            Repr::Zernike { n_coeffs } => {
                if *n_coeffs == 0 {
                    return Err(Error::Config("at least one Zernike coefficient required".into()));
                }
                vec![0.0; *n_coeffs]
            }
            Repr::Neural { layers, activation } => {
                Mlp::new(layers, *activation, &vec![0.0; param_count(layers)])?;
                init_params(layers, *activation, seed)
            }
        };
        Ok(MaskParams { repr, kind, values })
    }

    /// Sinusoidal phase network.
    pub fn npm(seed: u64) -> Self {
        Self::init(
            Repr::Neural {
                layers: DEFAULT_LAYERS.to_vec(),
                activation: Activation::Sine,
            },
            MaskKind::Phase,
            seed,
        )
        .expect("default layers are valid")
    }

    /// Softplus network with sigmoid output giving transmittance.
    pub fn nam(seed: u64) -> Self {
        Self::init(
            Repr::Neural {
                layers: DEFAULT_LAYERS.to_vec(),
                activation: Activation::Softplus,
            },
            MaskKind::Amplitude,
            seed,
        )
        .expect("default layers are valid")
    }

    pub fn pixel(kind: MaskKind, pupil: &PupilGrid) -> Self {
        Self::init(Repr::PixelWise { pupil_size: pupil.size }, kind, 0).expect("pixel init")
    }

    pub fn zernike(n_coeffs: usize) -> Result<Self> {
        Self::init(Repr::Zernike { n_coeffs }, MaskKind::Phase, 0)
    }

    /// Sets the final layer of a neural representation to zero.
    pub fn zero_output_layer(&mut self) {
        if let Repr::Neural { layers, .. } = &self.repr {
            let last = layers[layers.len() - 2] * layers[layers.len() - 1] + layers[layers.len() - 1];
            let n = self.values.len();
            self.values[n - last..].iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn check_pupil(&self, pupil: &PupilGrid) -> Result<()> {
        if let Repr::PixelWise { pupil_size } = self.repr {
            if pupil_size != pupil.size {
                return Err(Error::ShapeMismatch {
                    expected: (pupil.size, pupil.size),
                    got: (pupil_size, pupil_size),
                });
            }
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{} parameter {i}", self.repr.tag())));
        }
        Ok(())
    }

    /// Raw field at each support sample.
    pub fn raw(&self, pupil: &PupilGrid) -> Result<Vec<f64>> {
        self.check_pupil(pupil)?;
        Ok(match &self.repr {
            Repr::PixelWise { .. } => pupil.support_idx.iter().map(|&i| self.values[i]).collect(),
            Repr::Zernike { n_coeffs } => {
                let b = zernike::basis(&pupil.coords, *n_coeffs);
                b.chunks_exact(*n_coeffs)
                    .map(|row| row.iter().zip(&self.values).map(|(z, c)| z * c).sum())
                    .collect()
            }
            Repr::Neural { layers, activation } => Mlp::new(layers, *activation, &self.values)?.forward(&pupil.coords),
        })
    }

    pub fn render(&self, pupil: &PupilGrid) -> Result<Mask> {
        let raw = self.raw(pupil)?;
        let values: Vec<f64> = match self.kind {
            MaskKind::Phase => raw,
            MaskKind::Amplitude => raw.into_iter().map(sigmoid).collect(),
        };
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("rendered mask sample {i}")));
        }
        Ok(Mask { kind: self.kind, values })
    }

    /// Pulls a mask-value cotangent back to the parameters. `mask` must be the
    /// output of [`MaskParams::render`] for these parameters.
    pub fn backward(&self, pupil: &PupilGrid, mask: &Mask, mask_bar: &[f64]) -> Result<Vec<f64>> {
        self.check_pupil(pupil)?;
        let raw_bar: Vec<f64> = match self.kind {
            MaskKind::Phase => mask_bar.to_vec(),
            MaskKind::Amplitude => mask
                .values
                .iter()
                .zip(mask_bar)
                .map(|(a, g)| g * a * (1.0 - a))
                .collect(),
        };
        let grad = match &self.repr {
            Repr::PixelWise { .. } => {
                let mut g = vec![0.0; self.values.len()];
                for (k, &i) in pupil.support_idx.iter().enumerate() {
                    g[i] = raw_bar[k];
                }
                g
            }
            Repr::Zernike { n_coeffs } => {
                let b = zernike::basis(&pupil.coords, *n_coeffs);
                let mut g = vec![0.0; *n_coeffs];
                for (row, rb) in b.chunks_exact(*n_coeffs).zip(&raw_bar) {
                    for (gk, z) in g.iter_mut().zip(row) {
                        *gk += z * rb;
                    }
                }
                g
            }
            Repr::Neural { layers, activation } => {
                Mlp::new(layers, *activation, &self.values)?.backward(&pupil.coords, &raw_bar)
            }
        };
        if let Some(i) = grad.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {} parameter {i}", self.repr.tag())));
        }
        Ok(grad)
    }

    /// Loss and gradient with respect to the parameters, given a loss on masks
    /// that returns its own gradient with respect to mask values.
    pub fn grad_loss<F>(&self, pupil: &PupilGrid, loss: F) -> Result<(f64, Vec<f64>)>
    where
        F: FnOnce(&Mask) -> Result<(f64, Vec<f64>)>,
    {
        let mask = self.render(pupil)?;
        let (l, mask_bar) = loss(&mask)?;
        let g = self.backward(pupil, &mask, &mask_bar)?;
        Ok((l, g))
    }

    pub fn meta(&self) -> Meta {
        let mut m = Meta::new().with("param", self.repr.tag()).with("kind", self.kind.as_str());
        match &self.repr {
            Repr::PixelWise { pupil_size } => m.insert("pupil_size", pupil_size),
            Repr::Zernike { n_coeffs } => m.insert("n_coeffs", n_coeffs),
            Repr::Neural { layers, activation } => {
                let l: Vec<String> = layers.iter().map(|v| v.to_string()).collect();
                m.insert("layers", l.join(","));
                m.insert("activation", activation.as_str());
            }
        }
        m
    }

    /// Writes the parameters as a CEO1 grid plus a sidecar with the type tag.
    /// Pixel-wise parameters are stored as the full pupil grid, the others as a
    /// single row.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let img = match self.repr {
            Repr::PixelWise { pupil_size } => Image::from_vec(pupil_size, pupil_size, self.values.clone())?,
            _ => Image::from_vec(1, self.values.len(), self.values.clone())?,
        };
        img.write_ceo1(path)?;
        self.meta().write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = Image::read_ceo1(path)?;
        let meta = Meta::read(path)?;
        Self::from_parts(&img, &meta).map_err(|reason| Error::Format {
            path: path.to_path_buf(),
            reason,
        })
    }

    fn from_parts(img: &Image, meta: &Meta) -> std::result::Result<Self, String> {
        let kind = meta
            .get("kind")
            .and_then(MaskKind::parse)
            .ok_or("missing or unknown 'kind'")?;
        let repr = match meta.get("param") {
            Some("pixel") => {
                if img.rows != img.cols {
                    return Err("pixel-wise parameters must be square".into());
                }
                Repr::PixelWise { pupil_size: img.rows }
            }
            Some("zernike") => Repr::Zernike {
                n_coeffs: img.data.len(),
            },
            Some("neural") => {
                let layers = meta
                    .get("layers")
                    .ok_or("missing 'layers'")?
                    .split(',')
                    .map(|s| s.trim().parse::<usize>().map_err(|e| e.to_string()))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let activation = meta
                    .get("activation")
                    .and_then(Activation::parse)
                    .ok_or("missing or unknown 'activation'")?;
                if param_count(&layers) != img.data.len() {
                    return Err("parameter count does not match layers".into());
                }
                Repr::Neural { layers, activation }
            }
            other => return Err(format!("not a parameter file (param={other:?})")),
        };
        Ok(MaskParams {
            repr,
            kind,
            values: img.data.clone(),
        })
    }

    pub fn write_zernike_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        if !matches!(self.repr, Repr::Zernike { .. }) {
            return Err(Error::InvalidInput("not a Zernike parameterization".into()));
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "index,coefficient")?;
        for (i, c) in self.values.iter().enumerate() {
            writeln!(f, "{},{:.9e}", i + 1, c)?;
        }
        Ok(())
    }
}

/// Reads a mask file of any supported layout and renders it onto `pupil`.
///
/// * `param=grid`: a mask sampled on a centered pupil grid; resampled by
///   nearest neighbour using the `pupil_radius` key.
/// * `param=coarse`: a small centered grid whose extent spans the pupil
///   diameter (used for cell-based amplitude masks).
/// * `param=pixel|zernike|neural`: parameters, rendered.
pub fn load_mask(path: impl AsRef<Path>, pupil: &PupilGrid) -> Result<Mask> {
    let path = path.as_ref();
    let meta = Meta::read(path)?;
    let fmt = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    match meta.get("param") {
        Some("grid") | Some("coarse") => {
            let img = Image::read_ceo1(path)?;
            let kind = meta
                .get("kind")
                .and_then(MaskKind::parse)
                .ok_or_else(|| fmt("missing or unknown 'kind'".into()))?;
            let radius = if meta.get("param") == Some("coarse") {
                img.rows as f64 / 2.0
            } else {
                meta.get("pupil_radius")
                    .ok_or_else(|| fmt("missing 'pupil_radius'".into()))?
                    .parse::<f64>()
                    .map_err(|e| fmt(e.to_string()))?
            };
            let mask = Mask::from_grid(kind, &img, radius, pupil);
            mask.check(pupil)?;
            Ok(mask)
        }
        _ => MaskParams::load(path)?.render(pupil),
    }
}

/// Writes a rendered mask as a full pupil grid (phase wrapped for export).
pub fn save_mask(mask: &Mask, pupil: &PupilGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    mask.wrapped().to_image(pupil).write_ceo1(path)?;
    mask.meta(pupil).write(path)
}
