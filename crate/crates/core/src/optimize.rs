//! Mask design by Adam descent on the CRB loss.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::{depth_planes, CrbObjective, InfoModel, DEFAULT_RIDGE};
use crate::optics::{Mask, MaskKind, Optics};
use crate::param::{MaskParams, Repr, DEFAULT_LAYERS};
use crate::param::Activation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.99,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be > 0 (got {})", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1) (got {b})")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("eps must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(Error::InvalidInput(format!(
            "adam: {} parameters, {} gradients, {} state entries",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i}")));
    }
    state.t += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let c2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Distribution of per-step displacement magnitudes, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SpeedModel {
    /// `|N(mean, sd)|`, clamped below at 1 nm
    Normal { mean: f64, sd: f64 },
    Fixed { step: f64 },
}

impl Default for SpeedModel {
    fn default() -> Self {
        SpeedModel::Normal {
            mean: 100e-9,
            sd: 20e-9,
        }
    }
}

pub const MIN_STEP: f64 = 1e-9;

impl SpeedModel {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SpeedModel::Normal { mean, sd } => mean.is_finite() && sd >= 0.0 && sd.is_finite(),
            SpeedModel::Fixed { step } => step > 0.0 && step.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid speed model {self:?}")))
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            SpeedModel::Normal { mean, sd } => {
                let n = Normal::new(mean, sd).expect("validated");
                n.sample(rng).abs().max(MIN_STEP)
            }
            SpeedModel::Fixed { step } => step.max(MIN_STEP),
        }
    }
}

/// Uniformly random rotation matrix (columns are orthonormal directions),
/// from a normalized Gaussian quaternion.
pub fn random_rotation(rng: &mut impl Rng) -> [[f64; 3]; 3] {
    let mut q = [0.0f64; 4];
    loop {
        for v in q.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-12 {
            q.iter_mut().for_each(|v| *v /= n);
            break;
        }
    }
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Isotropic unit vector.
pub fn random_direction(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-12 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Three mutually orthogonal motions: the columns of a random rotation, each
/// scaled by an independent magnitude.
pub fn sample_motion_batch(rng: &mut impl Rng, speed: &SpeedModel) -> [[f64; 3]; 3] {
    let r = random_rotation(rng);
    std::array::from_fn(|k| {
        let s = speed.sample(rng);
        [r[0][k] * s, r[1][k] * s, r[2][k] * s]
    })
}

/// `n` independent isotropic motions.
pub fn sample_motions(n: usize, seed: u64, speed: &SpeedModel) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let d = random_direction(&mut rng);
            let s = speed.sample(&mut rng);
            [d[0] * s, d[1] * s, d[2] * s]
        })
        .collect()
}

/// Named mask representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamSpec {
    /// sinusoidal network, phase
    Npm,
    /// softplus/sigmoid network, amplitude
    Nam,
    PixelPhase,
    PixelAmplitude,
    Zernike,
}

impl ParamSpec {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "npm" => Some(ParamSpec::Npm),
            "nam" => Some(ParamSpec::Nam),
            "pixel-phase" => Some(ParamSpec::PixelPhase),
            "pixel-amplitude" => Some(ParamSpec::PixelAmplitude),
            "zernike" => Some(ParamSpec::Zernike),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ParamSpec::Npm => "npm",
            ParamSpec::Nam => "nam",
            ParamSpec::PixelPhase => "pixel-phase",
            ParamSpec::PixelAmplitude => "pixel-amplitude",
            ParamSpec::Zernike => "zernike",
        }
    }

    pub fn build(self, optics: &Optics, n_coeffs: usize, seed: u64) -> Result<MaskParams> {
        let neural = |activation| Repr::Neural {
            layers: DEFAULT_LAYERS.to_vec(),
            activation,
        };
        match self {
            ParamSpec::Npm => MaskParams::init(neural(Activation::Sine), MaskKind::Phase, seed),
            ParamSpec::Nam => MaskParams::init(neural(Activation::Softplus), MaskKind::Amplitude, seed),
            ParamSpec::PixelPhase => Ok(MaskParams::pixel(MaskKind::Phase, &optics.pupil)),
            ParamSpec::PixelAmplitude => Ok(MaskParams::pixel(MaskKind::Amplitude, &optics.pupil)),
            ParamSpec::Zernike => MaskParams::zernike(n_coeffs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub epochs: usize,
    pub param: ParamSpec,
    pub n_coeffs: usize,
    pub model: InfoModel,
    pub n_planes: usize,
    /// planes span `[-half_range, half_range]`, meters
    pub half_range: f64,
    pub adam: AdamConfig,
    pub speed: SpeedModel,
    pub seed: u64,
    pub val_motions: usize,
    pub val_seed: u64,
    /// validate every this many epochs (and at the last epoch)
    pub val_every: usize,
    pub ridge: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            epochs: 500,
            param: ParamSpec::Npm,
            n_coeffs: 55,
            model: InfoModel::Event,
            n_planes: 11,
            half_range: 1.5e-6,
            adam: AdamConfig::default(),
            speed: SpeedModel::default(),
            seed: 0,
            val_motions: 100,
            val_seed: 0x5eed_0001,
            val_every: 50,
            ridge: DEFAULT_RIDGE,
        }
    }
}

impl OptimizeConfig {
    /// Desk-scale preset: 500 epochs, with a step size chosen per
    /// representation family. Amplitude masks sit behind a sigmoid and need
    /// a larger step to leave the all-open start.
    pub fn desk(param: ParamSpec) -> Self {
        let lr = match param {
            ParamSpec::Nam | ParamSpec::PixelAmplitude => 1e-2,
            ParamSpec::Npm | ParamSpec::PixelPhase | ParamSpec::Zernike => 3e-3,
        };
        OptimizeConfig {
            epochs: 500,
            param,
            adam: AdamConfig {
                lr,
                ..AdamConfig::default()
            },
            ..OptimizeConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        self.speed.validate()?;
        if self.n_planes == 0 {
            return Err(Error::Config("n_planes must be >= 1".into()));
        }
        if !(self.half_range >= 0.0 && self.half_range.is_finite()) {
            return Err(Error::Config("half_range must be finite and >= 0".into()));
        }
        if self.model == InfoModel::Event && self.val_motions == 0 {
            return Err(Error::Config("val_motions must be >= 1".into()));
        }
        if self.val_every == 0 {
            return Err(Error::Config("val_every must be >= 1".into()));
        }
        if self.param == ParamSpec::Zernike && self.n_coeffs == 0 {
            return Err(Error::Config("n_coeffs must be >= 1".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::Config("ridge must be >= 0".into()));
        }
        Ok(())
    }

    pub fn objective(&self) -> CrbObjective {
        let mut o = CrbObjective::new(depth_planes(self.n_planes, self.half_range), self.model);
        o.ridge = self.ridge;
        o
    }

    pub fn validation_motions(&self) -> Vec<[f64; 3]> {
        sample_motions(self.val_motions, self.val_seed, &self.speed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRow {
    pub epoch: usize,
    pub train: f64,
    pub val: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    /// parameters with the lowest validation loss
    pub best: MaskParams,
    pub best_val: f64,
    pub best_epoch: usize,
    pub last: MaskParams,
    pub history: Vec<LossRow>,
}

impl OptimizeResult {
    pub fn mask(&self, optics: &Optics) -> Result<Mask> {
        self.best.render(&optics.pupil)
    }
}

/// Runs the design loop. `init` overrides the representation built from
/// `cfg.param`. `on_epoch` sees every history row as it is produced.
pub fn optimize_mask(
    optics: &Optics,
    cfg: &OptimizeConfig,
    init: Option<MaskParams>,
    mut on_epoch: impl FnMut(&LossRow),
) -> Result<OptimizeResult> {
    cfg.validate()?;
    let mut params = match init {
        Some(p) => p,
        None => cfg.param.build(optics, cfg.n_coeffs, cfg.seed)?,
    };
    let objective = cfg.objective();
    let val_motions = cfg.validation_motions();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut state = AdamState::new(params.values.len());
    let pupil = &optics.pupil;

    let validate = |p: &MaskParams| -> Result<f64> { objective.loss(optics, &p.render(pupil)?, &val_motions) };
    let train = |p: &MaskParams, motions: &[[f64; 3]], epoch: usize| -> Result<(f64, Vec<f64>)> {
        p.grad_loss(pupil, |m| objective.loss_and_grad(optics, m, motions))
            .map_err(|e| annotate(e, epoch))
    };

    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let batch = sample_motion_batch(&mut rng, &cfg.speed);
    let mut pending = train(&params, &batch, 0)?;
    let v0 = validate(&params).map_err(|e| annotate(e, 0))?;
    let row = LossRow {
        epoch: 0,
        train: pending.0,
        val: Some(v0),
    };
    on_epoch(&row);
    history.push(row);
    let mut best = (params.clone(), v0, 0);

    for epoch in 1..=cfg.epochs {
        adam_step(&mut params.values, &pending.1, &mut state, &cfg.adam).map_err(|e| annotate(e, epoch))?;
        let batch = sample_motion_batch(&mut rng, &cfg.speed);
        pending = train(&params, &batch, epoch)?;
        let val = if epoch % cfg.val_every == 0 || epoch == cfg.epochs {
            let v = validate(&params).map_err(|e| annotate(e, epoch))?;
            if v < best.1 {
                best = (params.clone(), v, epoch);
            }
            Some(v)
        } else {
            None
        };
        let row = LossRow {
            epoch,
            train: pending.0,
            val,
        };
        on_epoch(&row);
        history.push(row);
    }
    Ok(OptimizeResult {
        best: best.0,
        best_val: best.1,
        best_epoch: best.2,
        last: params,
        history,
    })
}

fn annotate(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite(s) => Error::NonFinite(format!("epoch {epoch}: {s}")),
        Error::Singular(s) => Error::Singular(format!("epoch {epoch}: {s}")),
        other => other,
    }
}

pub fn write_loss_csv(history: &[LossRow], path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "epoch,train_loss,val_loss")?;
    for r in history {
        match r.val {
            Some(v) => writeln!(f, "{},{:.9e},{:.9e}", r.epoch, r.train, v)?,
            None => writeln!(f, "{},{:.9e},", r.epoch, r.train)?,
        }
    }
    Ok(())
}

/// Writes `loss.csv`, `mask.ceo1` (parameters), `mask_rendered.ceo1` and PSF
/// snapshots at the range ends and focus into `dir`. The caller writes `config.json`.
pub fn write_run_outputs(dir: &Path, optics: &Optics, cfg: &OptimizeConfig, result: &OptimizeResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_loss_csv(&result.history, dir.join("loss.csv"))?;
    result.best.save(dir.join("mask.ceo1"))?;
    let mask = result.mask(optics)?;
    crate::param::save_mask(&mask, &optics.pupil, dir.join("mask_rendered.ceo1"))?;
    for z in [-cfg.half_range, 0.0, cfg.half_range] {
        let psf = optics.compute_psf(&mask, [0.0, 0.0, z])?;
        let name = format!("psf_z{}.ceo1", format_um(z));
        let path = dir.join(name);
        psf.h.write_ceo1(&path)?;
        optics
            .cfg
            .to_meta()
            .with("units", "photons")
            .with("z_m", z)
            .write(&path)?;
    }
    Ok(())
}

/// Depth label in micrometers with an explicit sign, e.g. `+1.5`, `-1.5`, `0`.
pub fn format_um(z: f64) -> String {
    let um = (z * 1e6 * 1e4).round() / 1e4;
    if um == 0.0 {
        return "0".into();
    }
    let s = format!("{um:+.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}
