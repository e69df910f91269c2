//! Brownian trajectories, coded event-video rendering, model-based 3D
//! position recovery from binned event frames, and accuracy scoring.
//!
//! The estimator maximizes the Normal approximation of the intensity-ratio
//! likelihood, holding the previous pose at the previous estimate. It
//! replaces a learned decoder so tracking accuracy is tied directly to the
//! same forward model the masks were designed with.

use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventsim::{simulate_bin, BinnedFrame, SimConfig};
use crate::fisher::{crb, fisher_event, DEFAULT_RIDGE};
use crate::image::Image;
use crate::optics::{convolve, disk_kernel, Mask, Optics, Position, PsfEval};
use crate::optimize::{random_direction, SpeedModel};

/// Axis-aligned box, object-space meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Volume {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Default for Volume {
    /// 8 x 8 x 4 um centered on the optical axis and the focal plane.
    fn default() -> Self {
        Volume {
            lo: [-4e-6, -4e-6, -2e-6],
            hi: [4e-6, 4e-6, 2e-6],
        }
    }
}

impl Volume {
    pub fn validate(&self) -> Result<()> {
        if (0..3).all(|k| self.lo[k].is_finite() && self.hi[k].is_finite() && self.hi[k] > self.lo[k]) {
            Ok(())
        } else {
            Err(Error::Config(format!("degenerate volume {self:?}")))
        }
    }

    pub fn contains(&self, p: Position) -> bool {
        (0..3).all(|k| p[k] >= self.lo[k] && p[k] <= self.hi[k])
    }

    pub fn clamp(&self, p: Position) -> Position {
        std::array::from_fn(|k| p[k].clamp(self.lo[k], self.hi[k]))
    }

    /// Mirror-reflects each coordinate back into the box.
    pub fn reflect(&self, p: Position) -> Position {
        std::array::from_fn(|k| {
            let (lo, hi) = (self.lo[k], self.hi[k]);
            if p[k] >= lo && p[k] <= hi {
                return p[k];
            }
            let w = hi - lo;
            let t = (p[k] - lo).rem_euclid(2.0 * w);
            lo + if t > w { 2.0 * w - t } else { t }
        })
    }

    fn sample(&self, rng: &mut impl Rng) -> Position {
        std::array::from_fn(|k| rng.random_range(self.lo[k]..=self.hi[k]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub positions: Vec<Position>,
    /// seconds per step
    pub dt: f64,
    pub volume: Volume,
}

impl Trajectory {
    /// Number of bins, one per step.
    pub fn n_bins(&self) -> usize {
        self.positions.len().saturating_sub(1)
    }

    /// Bin-end positions, the ground truth of each binned frame.
    pub fn bin_ends(&self) -> &[Position] {
        &self.positions[1..]
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_positions_csv(&self.positions, path)
    }
}

pub const DEFAULT_DT: f64 = 1e-3;

/// Seeded Brownian-style walk: isotropic directions, magnitudes from
/// `speed`, reflected into `volume`. `n_steps` counts positions, so one step
/// yields just the start point.
pub fn brownian_trajectory(n_steps: usize, seed: u64, volume: Volume, speed: &SpeedModel) -> Result<Trajectory> {
    if n_steps == 0 {
        return Err(Error::Config("trajectory needs at least one position".into()));
    }
    volume.validate()?;
    speed.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = volume.sample(&mut rng);
    let mut positions = Vec::with_capacity(n_steps);
    positions.push(p);
    for _ in 1..n_steps {
        let d = random_direction(&mut rng);
        let s = speed.sample(&mut rng);
        p = volume.reflect([p[0] + d[0] * s, p[1] + d[1] * s, p[2] + d[2] * s]);
        positions.push(p);
    }
    Ok(Trajectory {
        positions,
        dt: DEFAULT_DT,
        volume,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub subframes: usize,
    /// object-space emitter diameter, meters
    pub emitter_diameter: f64,
    /// shot noise plus Gaussian read noise when true, exact intensities otherwise
    pub noise: bool,
    /// Gaussian sigma as a fraction of the frame's signal peak
    pub noise_rel: f64,
    pub sim: SimConfig,
    pub seed: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            subframes: 16,
            emitter_diameter: 300e-9,
            noise: true,
            noise_rel: 0.01,
            sim: SimConfig::default(),
            seed: 0,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subframes == 0 {
            return Err(Error::Config("subframes must be >= 1".into()));
        }
        if !(self.emitter_diameter >= 0.0) || !(self.noise_rel >= 0.0) {
            return Err(Error::Config("emitter diameter and noise level must be >= 0".into()));
        }
        if !(self.sim.threshold > 0.0) {
            return Err(Error::Config("threshold must be positive".into()));
        }
        Ok(())
    }
}

/// Emitter blur kernel on the sensor grid.
pub fn emitter_kernel(optics: &Optics, diameter: f64) -> Image {
    let cfg = &optics.cfg;
    disk_kernel(0.5 * diameter * cfg.magnification / cfg.pixel_pitch)
}

/// Gaussian read-noise sigma, in photons, for a signal frame.
pub fn read_sigma(h: &Image, rel: f64) -> f64 {
    rel * h.max()
}

/// Renders one bin between `start` and `end`: `subframes + 1` frames
/// sharing the start frame as the event reference.
///
/// With noise on, each frame is `Poisson(h + beta)` plus Gaussian read
/// noise, and the sensor takes logs of `max(F + sigma^2, beta)`. The
/// `sigma^2` offset makes the log input's variance equal its mean, so dark
/// pixels stay quiet and a pure Poisson model remains accurate.
#[allow(clippy::too_many_arguments)]
pub fn render_bin(
    optics: &Optics,
    mask: &Mask,
    start: Position,
    end: Position,
    t0: f64,
    dt: f64,
    cfg: &RenderConfig,
    rng: &mut impl Rng,
) -> Result<BinnedFrame> {
    let kernel = emitter_kernel(optics, cfg.emitter_diameter);
    let beta = optics.background();
    let n = cfg.subframes;
    let mut sigma = 0.0;
    let mut frames = Vec::with_capacity(n + 1);
    let mut times = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let f = j as f64 / n as f64;
        let p: Position = std::array::from_fn(|k| start[k] + f * (end[k] - start[k]));
        let h = convolve(&optics.compute_psf(mask, p)?.h, &kernel);
        if j == 0 {
            sigma = read_sigma(&h, cfg.noise_rel);
        }
        frames.push(if cfg.noise {
            noisy_frame(&h, beta, sigma, rng)
        } else {
            h.map(|v| v + beta)
        });
        times.push(t0 + f * dt);
    }
    let (offset, floor) = if cfg.noise {
        (sigma * sigma, beta)
    } else {
        (0.0, cfg.sim.log_floor)
    };
    let sim = SimConfig {
        log_floor: floor,
        ..cfg.sim
    };
    simulate_bin(&frames, &times, offset, &sim)
}

/// Photon counts `Poisson(h + beta)` plus zero-mean Gaussian noise, clamped at zero.
fn noisy_frame(h: &Image, beta: f64, sigma: f64, rng: &mut impl Rng) -> Image {
    let read = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"));
    let mut out = h.clone();
    for v in out.data.iter_mut() {
        let lam = *v + beta;
        let shot = if lam > 0.0 {
            Poisson::new(lam).expect("positive rate").sample(rng)
        } else {
            0.0
        };
        let jitter = read.map_or(0.0, |n| n.sample(rng));
        *v = (shot + jitter).max(0.0);
    }
    out
}

/// Per-bin noise stream, independent of how bins are scheduled.
fn bin_rng(seed: u64, bin: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(bin as u64 + 1);
    rng
}

/// One binned event frame per trajectory step. Each bin restarts the event
/// reference at its first frame.
pub fn render_coded_event_video(
    optics: &Optics,
    traj: &Trajectory,
    mask: &Mask,
    cfg: &RenderConfig,
) -> Result<Vec<BinnedFrame>> {
    cfg.validate()?;
    mask.check(&optics.pupil)?;
    (0..traj.n_bins())
        .into_par_iter()
        .map(|i| {
            let mut rng = bin_rng(cfg.seed, i);
            render_bin(
                optics,
                mask,
                traj.positions[i],
                traj.positions[i + 1],
                i as f64 * traj.dt,
                traj.dt,
                cfg,
                &mut rng,
            )
        })
        .collect()
}

/// Coarse search and refinement settings of the estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// lateral candidates per side, in fine-grid samples
    pub lateral_steps: usize,
    /// axial candidates per side
    pub axial_steps: usize,
    /// axial candidate spacing, meters
    pub axial_spacing: f64,
    pub refine_iters: usize,
    pub emitter_diameter: f64,
    pub threshold: f64,
    /// read-noise sigma assumed by the model, as a fraction of the signal peak
    pub read_noise_rel: f64,
    /// Drops the log-variance term of the likelihood (variance-weighted least
    /// squares). Exact, noise-free frames are not draws from the noise model,
    /// and on them the log-variance term biases the fit toward dim poses.
    pub weighted_least_squares: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            lateral_steps: 5,
            axial_steps: 5,
            axial_spacing: 150e-9,
            refine_iters: 20,
            emitter_diameter: 300e-9,
            threshold: SimConfig::default().threshold,
            read_noise_rel: RenderConfig::default().noise_rel,
            weighted_least_squares: false,
        }
    }
}

impl EstimatorConfig {
    /// Estimator settings matching a renderer.
    pub fn matching(render: &RenderConfig) -> Self {
        EstimatorConfig {
            emitter_diameter: render.emitter_diameter,
            threshold: render.sim.threshold,
            read_noise_rel: if render.noise { render.noise_rel } else { 0.0 },
            weighted_least_squares: !render.noise,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub position: Position,
    /// the frame had no events; the previous estimate was returned
    pub no_information: bool,
}

/// Maximum-likelihood position estimator for one mask.
pub struct Estimator<'a> {
    optics: &'a Optics,
    mask: &'a Mask,
    kernel: Image,
    volume: Volume,
    cfg: EstimatorConfig,
}

struct Frame {
    /// exponentiated measurement per pixel
    r: Vec<f64>,
    /// model intensity at the previous pose, background included
    mu: Vec<f64>,
    /// background plus read-noise offset
    b: f64,
}

impl<'a> Estimator<'a> {
    pub fn new(optics: &'a Optics, mask: &'a Mask, volume: Volume, cfg: EstimatorConfig) -> Result<Self> {
        mask.check(&optics.pupil)?;
        volume.validate()?;
        if !(cfg.threshold > 0.0) || !(cfg.axial_spacing > 0.0) {
            return Err(Error::Config("estimator threshold and spacing must be positive".into()));
        }
        Ok(Estimator {
            optics,
            mask,
            kernel: emitter_kernel(optics, cfg.emitter_diameter),
            volume,
            cfg,
        })
    }

    /// Blurred PSF model with position derivatives.
    pub fn model(&self, pos: Position) -> Result<PsfEval> {
        let e = self.optics.psf_gradients(self.mask, pos)?;
        let dh = e.grads()?;
        Ok(PsfEval {
            h: convolve(&e.h, &self.kernel),
            dh: Some(std::array::from_fn(|k| convolve(&dh[k], &self.kernel))),
            position: pos,
        })
    }

    fn blurred(&self, img: &Image) -> Image {
        convolve(img, &self.kernel)
    }

    #[inline]
    fn pixel_nll(&self, r: f64, mu: f64, nu: f64) -> f64 {
        let s2 = nu / (mu * mu) + nu * nu / (mu * mu * mu);
        let d = r - nu / mu;
        let fit = 0.5 * d * d / s2;
        if self.cfg.weighted_least_squares {
            fit
        } else {
            fit + 0.5 * s2.ln()
        }
    }

    fn nll(&self, f: &Frame, h: &Image) -> f64 {
        (0..f.r.len()).map(|i| self.pixel_nll(f.r[i], f.mu[i], h.data[i] + f.b)).sum()
    }

    /// Negative log-likelihood of the current pose `pos`, given the frame and
    /// the previous pose.
    pub fn negative_log_likelihood(&self, frame: &BinnedFrame, prev: Position, pos: Position) -> Result<f64> {
        let f = self.prepare(frame, prev)?;
        let h = self.blurred(&self.optics.compute_psf(self.mask, pos)?.h);
        Ok(self.nll(&f, &h))
    }

    fn prepare(&self, frame: &BinnedFrame, prev: Position) -> Result<Frame> {
        let n = self.optics.grid();
        if (frame.rows, frame.cols) != (n, n) {
            return Err(Error::ShapeMismatch {
                expected: (n, n),
                got: (frame.rows, frame.cols),
            });
        }
        let hp = self.blurred(&self.optics.compute_psf(self.mask, prev)?.h);
        let sigma = read_sigma(&hp, self.cfg.read_noise_rel);
        let b = self.optics.background() + sigma * sigma;
        let t = self.cfg.threshold;
        Ok(Frame {
            // a count k means the log change lies between k T and (k + sign k) T
            r: frame
                .counts
                .iter()
                .map(|&c| (t * (c as f64 + 0.5 * c.signum() as f64)).exp())
                .collect(),
            mu: hp.data.iter().map(|v| v + b).collect(),
            b,
        })
    }

    /// Grid search around `prev` followed by Fisher-scoring refinement.
    pub fn estimate(&self, frame: &BinnedFrame, prev: Position) -> Result<Estimate> {
        if !self.volume.contains(prev) {
            return Err(Error::InvalidInput(format!("previous estimate {prev:?} outside the volume")));
        }
        if frame.is_empty() {
            return Ok(Estimate {
                position: prev,
                no_information: true,
            });
        }
        let f = self.prepare(frame, prev)?;
        let d = self.optics.cfg.fine_pixel();
        let ls = self.cfg.lateral_steps as isize;
        let az = self.cfg.axial_steps as isize;
        let mut best = (f64::INFINITY, prev);
        for kz in -az..=az {
            let z = (prev[2] + kz as f64 * self.cfg.axial_spacing).clamp(self.volume.lo[2], self.volume.hi[2]);
            let fine = self.optics.fine_intensity(self.mask, [prev[0], prev[1], z])?;
            for dy in -ls..=ls {
                for dx in -ls..=ls {
                    let h = self.blurred(&self.optics.bin_shifted(&fine, dy, dx));
                    let v = self.nll(&f, &h);
                    if v < best.0 {
                        best = (v, [prev[0] + dx as f64 * d, prev[1] + dy as f64 * d, z]);
                    }
                }
            }
        }
        let pos = self.refine(&f, self.volume.clamp(best.1), best.0)?;
        Ok(Estimate {
            position: pos,
            no_information: false,
        })
    }

    /// Gradient and expected information of the likelihood in the current pose.
    fn score(&self, f: &Frame, e: &PsfEval) -> Result<(Vector3<f64>, Matrix3<f64>)> {
        let dh = e.grads()?;
        let mut g = Vector3::zeros();
        let mut info = Matrix3::zeros();
        for i in 0..f.r.len() {
            let (mu, nu) = (f.mu[i], e.h.data[i] + f.b);
            let s2 = nu / (mu * mu) + nu * nu / (mu * mu * mu);
            let ds2 = 1.0 / (mu * mu) + 2.0 * nu / (mu * mu * mu);
            let d = f.r[i] - nu / mu;
            // d(nll)/d(nu) and the expected curvature in nu
            let (dnu, inu) = if self.cfg.weighted_least_squares {
                (-d / (s2 * mu) - 0.5 * ds2 * d * d / (s2 * s2), 1.0 / (mu * mu * s2))
            } else {
                (
                    -d / (s2 * mu) + 0.5 * ds2 * (1.0 / s2 - d * d / (s2 * s2)),
                    1.0 / (mu * mu * s2) + 0.5 * ds2 * ds2 / (s2 * s2),
                )
            };
            let j = Vector3::new(dh[0].data[i], dh[1].data[i], dh[2].data[i]);
            g += j * dnu;
            info += j * j.transpose() * inu;
        }
        Ok((g, info))
    }

    fn refine(&self, f: &Frame, start: Position, start_nll: f64) -> Result<Position> {
        let mut pos = start;
        let mut cur = start_nll;
        for _ in 0..self.cfg.refine_iters {
            let e = self.model(pos)?;
            let (g, info) = self.score(f, &e)?;
            let reg = info + Matrix3::identity() * (1e-9 * info.trace() / 3.0);
            let Some(step) = reg.cholesky().map(|c| c.solve(&(-g))) else {
                break;
            };
            // keep each update inside the coarse grid cell scale
            let scale = (step.norm() / 200e-9).max(1.0);
            let mut t = 1.0 / scale;
            let mut moved = false;
            for _ in 0..8 {
                let cand = self.volume.clamp(std::array::from_fn(|k| pos[k] + t * step[k]));
                let h = self.blurred(&self.optics.compute_psf(self.mask, cand)?.h);
                let v = self.nll(f, &h);
                if v < cur {
                    let moved_by = (0..3).map(|k| (cand[k] - pos[k]).powi(2)).sum::<f64>().sqrt();
                    pos = cand;
                    cur = v;
                    moved = moved_by > 1e-12;
                    break;
                }
                t *= 0.5;
            }
            if !moved || t * step.norm() < 1e-11 {
                break;
            }
        }
        Ok(pos)
    }

    fn pair_nll(&self, f: &Frame, mu: &Image, nu: &Image) -> f64 {
        (0..f.r.len())
            .map(|i| self.pixel_nll(f.r[i], mu.data[i] + f.b, nu.data[i] + f.b))
            .sum()
    }

    /// Gradient and expected information in both poses, ordered (prev, current).
    fn pair_score(&self, f: &Frame, ep: &PsfEval, ec: &PsfEval) -> Result<(Vector6<f64>, Matrix6<f64>)> {
        let (jp, jc) = (ep.grads()?, ec.grads()?);
        let mut g = Vector6::zeros();
        let mut info = Matrix6::zeros();
        for i in 0..f.r.len() {
            let (mu, nu) = (ep.h.data[i] + f.b, ec.h.data[i] + f.b);
            let (mu2, mu3) = (mu * mu, mu * mu * mu);
            let m = nu / mu;
            let s2 = nu / mu2 + nu * nu / mu3;
            let d = f.r[i] - m;
            let (dm_mu, dm_nu) = (-nu / mu2, 1.0 / mu);
            let (ds_mu, ds_nu) = (-2.0 * nu / mu3 - 3.0 * nu * nu / (mu3 * mu), 1.0 / mu2 + 2.0 * nu / mu3);
            let jm = Vector6::new(
                dm_mu * jp[0].data[i],
                dm_mu * jp[1].data[i],
                dm_mu * jp[2].data[i],
                dm_nu * jc[0].data[i],
                dm_nu * jc[1].data[i],
                dm_nu * jc[2].data[i],
            );
            let js = Vector6::new(
                ds_mu * jp[0].data[i],
                ds_mu * jp[1].data[i],
                ds_mu * jp[2].data[i],
                ds_nu * jc[0].data[i],
                ds_nu * jc[1].data[i],
                ds_nu * jc[2].data[i],
            );
            if self.cfg.weighted_least_squares {
                g += jm * (-d / s2) - js * (0.5 * d * d / (s2 * s2));
                info += jm * jm.transpose() / s2;
            } else {
                g += jm * (-d / s2) + js * (0.5 * (1.0 / s2 - d * d / (s2 * s2)));
                info += jm * jm.transpose() / s2 + js * js.transpose() * (0.5 / (s2 * s2));
            }
        }
        Ok((g, info))
    }

    /// Joint maximum a posteriori refinement of both poses of a bin, with a
    /// Gaussian prior (mean `prior`, information `prior_info`) on the
    /// previous pose. Returns the refined current pose and its posterior
    /// information.
    pub fn refine_pair(
        &self,
        frame: &BinnedFrame,
        prior: Position,
        prior_info: &Matrix3<f64>,
        current: Position,
    ) -> Result<(Position, Matrix3<f64>)> {
        let f = self.prepare(frame, prior)?;
        let lam = {
            let mut m = Matrix6::zeros();
            m.fixed_view_mut::<3, 3>(0, 0).copy_from(prior_info);
            m
        };
        let objective = |x: &Vector6<f64>, mu: &Image, nu: &Image| {
            let d = Vector3::new(x[0] - prior[0], x[1] - prior[1], x[2] - prior[2]);
            self.pair_nll(&f, mu, nu) + 0.5 * (d.transpose() * prior_info * d)[0]
        };
        let pos = |x: &Vector6<f64>, o: usize| -> Position { [x[o], x[o + 1], x[o + 2]] };
        let psf = |p: Position| -> Result<Image> { Ok(self.blurred(&self.optics.compute_psf(self.mask, p)?.h)) };
        let mut x = Vector6::new(prior[0], prior[1], prior[2], current[0], current[1], current[2]);
        let mut cur = objective(&x, &psf(pos(&x, 0))?, &psf(pos(&x, 3))?);
        let mut info = Matrix6::zeros();
        for it in 0..=self.cfg.refine_iters {
            let (ep, ec) = (self.model(pos(&x, 0))?, self.model(pos(&x, 3))?);
            let (mut g, i6) = self.pair_score(&f, &ep, &ec)?;
            info = i6;
            if it == self.cfg.refine_iters {
                break;
            }
            let d = Vector3::new(x[0] - prior[0], x[1] - prior[1], x[2] - prior[2]);
            let gp = prior_info * d;
            for k in 0..3 {
                g[k] += gp[k];
            }
            let h = info + lam;
            let reg = h + Matrix6::identity() * (1e-9 * h.trace() / 6.0);
            let Some(step) = reg.cholesky().map(|c| c.solve(&(-g))) else {
                break;
            };
            let mut t = 1.0 / (step.norm() / 200e-9).max(1.0);
            let mut accepted = false;
            for _ in 0..8 {
                let cand = x + step * t;
                let (p, c) = (self.volume.clamp(pos(&cand, 0)), self.volume.clamp(pos(&cand, 3)));
                let cand = Vector6::new(p[0], p[1], p[2], c[0], c[1], c[2]);
                let v = objective(&cand, &psf(p)?, &psf(c)?);
                if v < cur {
                    x = cand;
                    cur = v;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted || t * step.norm() < 1e-11 {
                break;
            }
        }
        // information on the current pose after marginalizing the previous one
        let pp = info.fixed_view::<3, 3>(0, 0) + prior_info;
        let pc = info.fixed_view::<3, 3>(0, 3).into_owned();
        let cc = info.fixed_view::<3, 3>(3, 3).into_owned();
        let post = match pp.cholesky() {
            Some(ch) => cc - pc.transpose() * ch.solve(&pc),
            None => cc,
        };
        Ok((pos(&x, 3), 0.5 * (post + post.transpose())))
    }

    /// Per-axis bound on the current pose with the previous pose known,
    /// using the blurred model.
    pub fn current_crb(&self, prev: Position, pos: Position) -> Result<Vec<f64>> {
        let m = fisher_event(&self.model(pos)?, &self.model(prev)?, self.optics.background())?;
        crb(&m.current_block(), DEFAULT_RIDGE)
    }
}

/// Prior information on the known start pose: 1 nm standard deviation.
const START_INFO: f64 = 1e18;

/// Sequential tracking from the known start pose.
///
/// Each bin is first located with the previous pose held at the previous
/// estimate, then both poses are refined jointly with the previous
/// estimate's posterior as a prior. Without the joint step, per-bin errors
/// accumulate as a random walk.
pub fn track(estimator: &Estimator, frames: &[BinnedFrame], start: Position) -> Result<Vec<Estimate>> {
    let mut prev = start;
    let mut info = Matrix3::identity() * START_INFO;
    let mut out = Vec::with_capacity(frames.len());
    for fr in frames {
        let e = estimator.estimate(fr, prev)?;
        if e.no_information {
            out.push(e);
            continue;
        }
        let (pos, post) = estimator.refine_pair(fr, prev, &info, e.position)?;
        prev = pos;
        info = post;
        out.push(Estimate {
            position: pos,
            no_information: false,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    pub estimates: Vec<Position>,
    /// estimate minus truth, per axis
    pub errors: Vec<[f64; 3]>,
    pub rmse_3d: f64,
    pub l1_z: f64,
}

pub fn score(truth: &[Position], estimates: &[Position]) -> Result<TrackResult> {
    if truth.len() != estimates.len() {
        return Err(Error::InvalidInput(format!(
            "{} ground-truth positions but {} estimates",
            truth.len(),
            estimates.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("nothing to score".into()));
    }
    let errors: Vec<[f64; 3]> = truth
        .iter()
        .zip(estimates)
        .map(|(t, e)| std::array::from_fn(|k| e[k] - t[k]))
        .collect();
    let n = errors.len() as f64;
    let sq: f64 = errors.iter().map(|e| e.iter().map(|v| v * v).sum::<f64>()).sum();
    let l1: f64 = errors.iter().map(|e| e[2].abs()).sum();
    Ok(TrackResult {
        estimates: estimates.to_vec(),
        errors,
        rmse_3d: (sq / n).sqrt(),
        l1_z: l1 / n,
    })
}

/// Combines several runs into one score over all bins.
pub fn score_many(runs: &[TrackResult]) -> Result<(f64, f64)> {
    let n: usize = runs.iter().map(|r| r.errors.len()).sum();
    if n == 0 {
        return Err(Error::InvalidInput("nothing to score".into()));
    }
    let sq: f64 = runs
        .iter()
        .flat_map(|r| &r.errors)
        .map(|e| e.iter().map(|v| v * v).sum::<f64>())
        .sum();
    let l1: f64 = runs.iter().flat_map(|r| &r.errors).map(|e| e[2].abs()).sum();
    Ok(((sq / n as f64).sqrt(), l1 / n as f64))
}

pub const POSITIONS_HEADER: &str = "step,x_nm,y_nm,z_nm";
pub const SUMMARY_HEADER: &str = "mask,rmse3d_nm,l1z_nm";

pub fn write_positions_csv(positions: &[Position], path: impl AsRef<Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{POSITIONS_HEADER}")?;
    for (i, p) in positions.iter().enumerate() {
        writeln!(w, "{i},{:.4},{:.4},{:.4}", p[0] * 1e9, p[1] * 1e9, p[2] * 1e9)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub mask: String,
    pub rmse_3d: f64,
    pub l1_z: f64,
}

pub fn write_summary_csv(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{:.4},{:.4}", r.mask, r.rmse_3d * 1e9, r.l1_z * 1e9)?;
    }
    Ok(())
}
