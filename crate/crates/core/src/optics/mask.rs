use serde::{Deserialize, Serialize};

use super::pupil::PupilGrid;
use crate::error::{Error, Result};
use crate::image::{Image, Meta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    /// phase delay in radians, unbounded
    Phase,
    /// amplitude transmittance in [0, 1]
    Amplitude,
}

impl MaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskKind::Phase => "phase",
            MaskKind::Amplitude => "amplitude",
        }
    }

    pub fn parse(s: &str) -> Option<MaskKind> {
        match s {
            "phase" => Some(MaskKind::Phase),
            "amplitude" => Some(MaskKind::Amplitude),
            _ => None,
        }
    }
}

/// A pupil modulation sampled on the support of a [`PupilGrid`].
///
/// `values` has one entry per support sample; everything outside the support
/// is implicitly zero (no light). Use [`Mask::to_image`] for the full grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub kind: MaskKind,
    pub values: Vec<f64>,
}

impl Mask {
    pub fn open(pupil: &PupilGrid) -> Mask {
        Mask {
            kind: MaskKind::Phase,
            values: vec![0.0; pupil.n_support()],
        }
    }

    pub fn phase(values: Vec<f64>) -> Mask {
        Mask {
            kind: MaskKind::Phase,
            values,
        }
    }

    pub fn amplitude(values: Vec<f64>) -> Mask {
        Mask {
            kind: MaskKind::Amplitude,
            values,
        }
    }

    pub fn check(&self, pupil: &PupilGrid) -> Result<()> {
        if self.values.len() != pupil.n_support() {
            return Err(Error::InvalidInput(format!(
                "mask has {} samples, pupil support has {}",
                self.values.len(),
                pupil.n_support()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("mask sample {i}")));
        }
        if self.kind == MaskKind::Amplitude
            && self.values.iter().any(|&v| !(0.0..=1.0).contains(&v))
        {
            return Err(Error::InvalidInput(
                "amplitude transmittance outside [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Hard 0/1 transmittance at the 0.5 level. Phase masks are returned unchanged.
    pub fn binarized(&self) -> Mask {
        match self.kind {
            MaskKind::Phase => self.clone(),
            MaskKind::Amplitude => Mask::amplitude(
                self.values
                    .iter()
                    .map(|&a| if a >= 0.5 { 1.0 } else { 0.0 })
                    .collect(),
            ),
        }
    }

    /// Phase wrapped to (-pi, pi]; used for export only.
    pub fn wrapped(&self) -> Mask {
        use std::f64::consts::PI;
        match self.kind {
            MaskKind::Amplitude => self.clone(),
            MaskKind::Phase => Mask::phase(
                self.values
                    .iter()
                    .map(|&p| {
                        let w = (p + PI).rem_euclid(2.0 * PI) - PI;
                        if w == -PI {
                            PI
                        } else {
                            w
                        }
                    })
                    .collect(),
            ),
        }
    }

    /// Fraction of open-aperture energy transmitted.
    pub fn transmission(&self) -> f64 {
        match self.kind {
            MaskKind::Phase => 1.0,
            MaskKind::Amplitude => {
                self.values.iter().map(|a| a * a).sum::<f64>() / self.values.len().max(1) as f64
            }
        }
    }

    pub fn to_image(&self, pupil: &PupilGrid) -> Image {
        pupil.to_image(&self.values)
    }

    pub fn meta(&self, pupil: &PupilGrid) -> Meta {
        Meta::new()
            .with("param", "grid")
            .with("kind", self.kind.as_str())
            .with(
                "units",
                match self.kind {
                    MaskKind::Phase => "rad",
                    MaskKind::Amplitude => "transmittance",
                },
            )
            .with("pupil_size", pupil.size)
            .with("pupil_radius", pupil.radius)
    }

    /// Resamples a full centered mask grid of any size onto `pupil` by
    /// nearest neighbour in normalized pupil coordinates. `src_radius` is the
    /// pupil radius of the source grid in samples.
    pub fn from_grid(kind: MaskKind, src: &Image, src_radius: f64, pupil: &PupilGrid) -> Mask {
        let half = (src.rows / 2) as f64;
        let values = pupil
            .coords
            .iter()
            .map(|[u, v]| {
                let c = (half + u * src_radius).round().clamp(0.0, (src.cols - 1) as f64) as usize;
                let r = (half + v * src_radius).round().clamp(0.0, (src.rows - 1) as f64) as usize;
                src.get(r, c)
            })
            .collect();
        Mask { kind, values }
    }
}
