//! Command-line front end.
//!
//! Every subcommand resolves its settings from defaults, an optional JSON
//! file (`--config`) and flags, in that order, and writes the resolved
//! document to `config.json` in its output directory. Exit codes: 0 on
//! success, 2 for configuration or input errors, 3 for numerical failures.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::baselines::{named_mask, write_baseline_data};
use crate::error::{Error, Result};
use crate::fisher::{depth_planes, write_curve_csv, CrbObjective, InfoModel, DEFAULT_RIDGE};
use crate::optics::{Mask, OpticalConfig, Optics};
use crate::optimize::{format_um, optimize_mask, sample_motions, write_run_outputs, OptimizeConfig, ParamSpec, SpeedModel};
use crate::reduce::{set_mode, ReductionMode};
use crate::tracking::{
    brownian_trajectory, render_coded_event_video, score, score_many, track, write_positions_csv, write_summary_csv,
    Estimator, EstimatorConfig, RenderConfig, SummaryRow, TrackResult, Volume,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "codedevent", version, about = "Design and evaluate coded optics for event cameras")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct CommonArgs {
    /// Seed for every random draw of the run
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Strict left-to-right reductions for bit-identical reruns
    #[arg(long, global = true)]
    deterministic: bool,
    /// Worker threads for inner parallel loops (0 = all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// JSON settings file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the resolved settings as JSON and exit
    #[arg(long, global = true)]
    dump_config: bool,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sensor pixels per side
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Signal photons per frame
    #[arg(long, global = true)]
    photons: Option<f64>,
    /// Background as a fraction of the signal
    #[arg(long, global = true)]
    background: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render PSFs of a mask over a range of depths
    Psf(PsfArgs),
    /// Design a mask by minimizing the CRB
    Optimize(OptimizeArgs),
    /// CRB-versus-depth curve of a mask
    Crb(CrbArgs),
    /// Simulate and score 3D tracking for one or more masks
    Track(TrackArgs),
    /// Mean CRB over a sweep of photons, background or speed
    Ablate(AblateArgs),
    /// Regenerate the baseline masks
    Baselines,
}

#[derive(Args, Debug)]
struct PsfArgs {
    /// open, fisher, levin or a mask file
    #[arg(long)]
    mask: Option<String>,
    /// Depths as start:stop:count, meters
    #[arg(long, allow_hyphen_values = true)]
    z: Option<String>,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    /// npm, nam, pixel-phase, pixel-amplitude or zernike
    #[arg(long)]
    parameterization: Option<String>,
    #[arg(long)]
    n_coeffs: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    /// event or flashing
    #[arg(long)]
    model: Option<String>,
    /// Train on a fixed step length (meters) instead of random speeds
    #[arg(long)]
    fixed_speed: Option<f64>,
    #[arg(long)]
    val_every: Option<usize>,
    /// Start from the desk-scale preset for the parameterization
    #[arg(long)]
    desk: bool,
}

#[derive(Args, Debug)]
struct CrbArgs {
    #[arg(long)]
    mask: Option<String>,
    #[arg(long)]
    motions: Option<usize>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    planes: Option<usize>,
    #[arg(long)]
    fixed_speed: Option<f64>,
    /// Threshold amplitude masks at 0.5
    #[arg(long)]
    binarize: bool,
}

#[derive(Args, Debug)]
struct TrackArgs {
    /// Comma-separated masks, each `name` or `label=path`
    #[arg(long, value_delimiter = ',')]
    masks: Option<Vec<String>>,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    /// on or off
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    binarize: bool,
}

#[derive(Args, Debug)]
struct AblateArgs {
    /// photons, background or speed
    #[arg(long)]
    sweep: Option<String>,
    /// Comma-separated sweep values
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    values: Option<Vec<f64>>,
    #[arg(long)]
    mask: Option<String>,
    #[arg(long)]
    motions: Option<usize>,
    #[arg(long)]
    binarize: bool,
}

/// Settings shared by every subcommand plus the subcommand's own block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig<T> {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// 0 uses every core
    pub workers: usize,
    pub deterministic: bool,
    pub out: PathBuf,
    pub optics: OpticalConfig,
    pub settings: T,
}

impl<T: Default> Default for RunConfig<T> {
    fn default() -> Self {
        RunConfig {
            command: String::new(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: 0,
            workers: 0,
            deterministic: false,
            out: PathBuf::new(),
            optics: OpticalConfig::default(),
            settings: T::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZRange {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl ZRange {
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Config(format!("--z expects start:stop:count, got '{s}'"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
        let r = ZRange { start, stop, count };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::Config("depth range needs finite ends and count >= 1".into()));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        (0..self.count)
            .map(|i| self.start + (self.stop - self.start) * i as f64 / (self.count - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsfSettings {
    pub mask: String,
    pub z: ZRange,
    /// lateral emitter position, meters
    pub x: f64,
    pub y: f64,
}

impl Default for PsfSettings {
    fn default() -> Self {
        PsfSettings {
            mask: "open".into(),
            z: ZRange {
                start: -1.5e-6,
                stop: 1.5e-6,
                count: 7,
            },
            x: 0.0,
            y: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrbSettings {
    pub mask: String,
    pub binarize: bool,
    pub model: InfoModel,
    pub motions: usize,
    pub planes: usize,
    pub half_range: f64,
    pub speed: SpeedModel,
    pub ridge: f64,
}

impl Default for CrbSettings {
    fn default() -> Self {
        CrbSettings {
            mask: "open".into(),
            binarize: false,
            model: InfoModel::Event,
            motions: 1000,
            planes: 30,
            half_range: 1.5e-6,
            speed: SpeedModel::default(),
            ridge: DEFAULT_RIDGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackSettings {
    pub masks: Vec<String>,
    pub binarize: bool,
    pub trajectories: usize,
    /// bins per trajectory
    pub bins: usize,
    pub volume: Volume,
    pub speed: SpeedModel,
    pub render: RenderConfig,
}

impl Default for TrackSettings {
    fn default() -> Self {
        TrackSettings {
            masks: vec!["fisher".into(), "open".into(), "levin".into()],
            binarize: true,
            trajectories: 5,
            bins: 200,
            volume: Volume::default(),
            speed: SpeedModel::default(),
            render: RenderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    Photons,
    Background,
    Speed,
}

impl Sweep {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "photons" => Ok(Sweep::Photons),
            "background" => Ok(Sweep::Background),
            "speed" => Ok(Sweep::Speed),
            _ => Err(Error::Config(format!("unknown sweep '{s}' (photons, background or speed)"))),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Sweep::Photons => "photons",
            Sweep::Background => "background",
            Sweep::Speed => "speed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSettings {
    pub sweep: Sweep,
    pub values: Vec<f64>,
    pub mask: String,
    pub binarize: bool,
    pub motions: usize,
    pub planes: usize,
}

impl Default for AblateSettings {
    fn default() -> Self {
        AblateSettings {
            sweep: Sweep::Photons,
            values: vec![500.0, 1000.0, 2000.0, 5000.0, 10000.0, 20000.0],
            mask: "fisher".into(),
            binarize: false,
            motions: 100,
            planes: 30,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSettings {}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let c = &cli.common;
    match cli.command {
        Command::Psf(a) => {
            let mut rc: RunConfig<PsfSettings> = resolve(c, "psf")?;
            if let Some(m) = a.mask {
                rc.settings.mask = m;
            }
            if let Some(z) = a.z {
                rc.settings.z = ZRange::parse(&z)?;
            }
            execute(c, rc, cmd_psf)
        }
        Command::Optimize(a) => {
            let mut rc: RunConfig<OptimizeConfig> = resolve(c, "optimize")?;
            let s = &mut rc.settings;
            if let Some(p) = a.parameterization {
                s.param = ParamSpec::parse(&p).ok_or_else(|| Error::Config(format!("unknown parameterization '{p}'")))?;
            }
            if a.desk {
                let d = OptimizeConfig::desk(s.param);
                s.epochs = d.epochs;
                s.adam = d.adam;
            }
            if let Some(v) = a.n_coeffs {
                s.n_coeffs = v;
            }
            if let Some(v) = a.epochs {
                s.epochs = v;
            }
            if let Some(v) = a.lr {
                s.adam.lr = v;
            }
            if let Some(v) = a.beta1 {
                s.adam.beta1 = v;
            }
            if let Some(v) = a.beta2 {
                s.adam.beta2 = v;
            }
            if let Some(m) = a.model {
                s.model = parse_model(&m)?;
            }
            if let Some(v) = a.fixed_speed {
                s.speed = SpeedModel::Fixed { step: v };
            }
            if let Some(v) = a.val_every {
                s.val_every = v;
            }
            s.seed = rc.seed;
            execute(c, rc, cmd_optimize)
        }
        Command::Crb(a) => {
            let mut rc: RunConfig<CrbSettings> = resolve(c, "crb")?;
            let s = &mut rc.settings;
            if let Some(m) = a.mask {
                s.mask = m;
            }
            if let Some(v) = a.motions {
                s.motions = v;
            }
            if let Some(m) = a.model {
                s.model = parse_model(&m)?;
            }
            if let Some(v) = a.planes {
                s.planes = v;
            }
            if let Some(v) = a.fixed_speed {
                s.speed = SpeedModel::Fixed { step: v };
            }
            s.binarize |= a.binarize;
            execute(c, rc, cmd_crb)
        }
        Command::Track(a) => {
            let mut rc: RunConfig<TrackSettings> = resolve(c, "track")?;
            let s = &mut rc.settings;
            if let Some(m) = a.masks {
                s.masks = m;
            }
            if let Some(v) = a.trajectories {
                s.trajectories = v;
            }
            if let Some(v) = a.bins {
                s.bins = v;
            }
            if let Some(n) = a.noise {
                s.render.noise = match n.as_str() {
                    "on" => true,
                    "off" => false,
                    _ => return Err(Error::Config(format!("--noise expects on or off, got '{n}'"))),
                };
            }
            s.binarize |= a.binarize;
            execute(c, rc, cmd_track)
        }
        Command::Ablate(a) => {
            let mut rc: RunConfig<AblateSettings> = resolve(c, "ablate")?;
            let s = &mut rc.settings;
            if let Some(v) = a.sweep {
                s.sweep = Sweep::parse(&v)?;
            }
            if let Some(v) = a.values {
                s.values = v;
            }
            if let Some(m) = a.mask {
                s.mask = m;
            }
            if let Some(v) = a.motions {
                s.motions = v;
            }
            s.binarize |= a.binarize;
            execute(c, rc, cmd_ablate)
        }
        Command::Baselines => {
            let rc: RunConfig<BaselineSettings> = resolve(c, "baselines")?;
            execute(c, rc, cmd_baselines)
        }
    }
}

fn parse_model(s: &str) -> Result<InfoModel> {
    match s {
        "event" => Ok(InfoModel::Event),
        "flashing" => Ok(InfoModel::Flashing),
        _ => Err(Error::Config(format!("unknown model '{s}' (event or flashing)"))),
    }
}

/// Defaults, then the JSON file, then the shared flags.
fn resolve<T>(c: &CommonArgs, command: &str) -> Result<RunConfig<T>>
where
    T: Default + DeserializeOwned,
{
    let mut rc: RunConfig<T> = match &c.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if !rc.command.is_empty() && rc.command != command {
        return Err(Error::Config(format!(
            "config file is for '{}', not '{command}'",
            rc.command
        )));
    }
    rc.command = command.into();
    rc.version = env!("CARGO_PKG_VERSION").into();
    if let Some(s) = c.seed {
        rc.seed = s;
    }
    if let Some(w) = c.workers {
        rc.workers = w;
    }
    rc.deterministic |= c.deterministic;
    if let Some(o) = &c.out {
        rc.out = o.clone();
    }
    if rc.out.as_os_str().is_empty() {
        rc.out = PathBuf::from("runs").join(command);
    }
    if let Some(g) = c.grid {
        rc.optics.grid = g;
    }
    if let Some(p) = c.photons {
        rc.optics.signal_photons = p;
    }
    if let Some(b) = c.background {
        rc.optics.background_fraction = b;
    }
    Ok(rc)
}

fn execute<T, F>(c: &CommonArgs, rc: RunConfig<T>, body: F) -> Result<()>
where
    T: Serialize + Send + Sync,
    F: FnOnce(&RunConfig<T>, &Optics) -> Result<()> + Send,
{
    let json = serde_json::to_string_pretty(&rc).map_err(|e| Error::Config(e.to_string()))?;
    if c.dump_config {
        let _ = writeln!(std::io::stdout(), "{json}");
        return Ok(());
    }
    rc.optics.validate()?;
    let optics = Optics::new(rc.optics.clone())?;
    set_mode(if rc.deterministic {
        ReductionMode::Sequential
    } else {
        ReductionMode::Pairwise
    });
    std::fs::create_dir_all(&rc.out)?;
    std::fs::write(rc.out.join("config.json"), json + "\n")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(rc.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| body(&rc, &optics))
}

/// Resolves a mask spec: `open`, `fisher`, `levin`, a path, or `label=path`.
pub fn resolve_mask(spec: &str, optics: &Optics, binarize: bool) -> Result<(String, Mask)> {
    let (label, target) = match spec.split_once('=') {
        Some((l, t)) => (l.to_string(), t),
        None => (
            Path::new(spec)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| spec.to_string()),
            spec,
        ),
    };
    let mask = named_mask(target, optics)?;
    Ok((label, if binarize { mask.binarized() } else { mask }))
}

fn cmd_psf(rc: &RunConfig<PsfSettings>, optics: &Optics) -> Result<()> {
    let s = &rc.settings;
    s.z.validate()?;
    let (_, mask) = resolve_mask(&s.mask, optics, false)?;
    let mut summary = std::io::BufWriter::new(std::fs::File::create(rc.out.join("psf_summary.csv"))?);
    writeln!(summary, "index,z_m,file,photons,peak,centroid_x_m,centroid_y_m")?;
    for (i, z) in s.z.values().into_iter().enumerate() {
        let h = optics.compute_psf(&mask, [s.x, s.y, z])?.h;
        let name = format!("psf_{i:03}_z{}.ceo1", format_um(z));
        let path = rc.out.join(&name);
        h.write_ceo1(&path)?;
        optics.cfg.to_meta().with("units", "photons").with("z_m", z).write(&path)?;
        let total = h.sum();
        let (mut cx, mut cy) = (0.0, 0.0);
        for r in 0..h.rows {
            for c in 0..h.cols {
                let (x, y) = optics.pixel_center(r, c);
                cx += x * h.get(r, c);
                cy += y * h.get(r, c);
            }
        }
        writeln!(
            summary,
            "{i},{z:.6e},{name},{total:.6e},{:.6e},{:.6e},{:.6e}",
            h.max(),
            cx / total,
            cy / total
        )?;
    }
    println!("wrote {} PSFs to {}", s.z.count, rc.out.display());
    Ok(())
}

fn cmd_optimize(rc: &RunConfig<OptimizeConfig>, optics: &Optics) -> Result<()> {
    let cfg = &rc.settings;
    let every = cfg.val_every;
    let result = optimize_mask(optics, cfg, None, |row| {
        if let Some(v) = row.val {
            if row.epoch % every == 0 || row.epoch == cfg.epochs {
                println!("epoch {:>5}  train {:.6e}  val {:.6e}", row.epoch, row.train, v);
            }
        }
    })?;
    write_run_outputs(&rc.out, optics, cfg, &result)?;
    println!(
        "best validation loss {:.6e} at epoch {}; outputs in {}",
        result.best_val,
        result.best_epoch,
        rc.out.display()
    );
    Ok(())
}

fn cmd_crb(rc: &RunConfig<CrbSettings>, optics: &Optics) -> Result<()> {
    let s = &rc.settings;
    if s.planes == 0 {
        return Err(Error::Config("planes must be >= 1".into()));
    }
    s.speed.validate()?;
    let (label, mask) = resolve_mask(&s.mask, optics, s.binarize)?;
    let mut obj = CrbObjective::new(depth_planes(s.planes, s.half_range), s.model);
    obj.ridge = s.ridge;
    let motions = sample_motions(s.motions, rc.seed, &s.speed);
    let rows = obj.curve(optics, &mask, &motions)?;
    write_curve_csv(&rows, rc.out.join("crb_curve.csv"))?;
    let n: usize = rows.iter().map(|r| r.crb.len()).sum();
    let total: f64 = rows.iter().flat_map(|r| r.crb.iter()).sum();
    let mean = total / n as f64;
    let mut f = std::fs::File::create(rc.out.join("crb_summary.csv"))?;
    writeln!(f, "mask,mean_crb_nm,loss")?;
    writeln!(f, "{label},{:.6},{total:.6e}", mean * 1e9)?;
    println!("{label}: mean CRB {:.3} nm over {} planes", mean * 1e9, rows.len());
    Ok(())
}

/// Tracks every trajectory under one mask; returns per-trajectory results.
pub fn track_mask(optics: &Optics, mask: &Mask, s: &TrackSettings, seed: u64) -> Result<Vec<TrackResult>> {
    let est = Estimator::new(optics, mask, s.volume, EstimatorConfig::matching(&s.render))?;
    (0..s.trajectories)
        .map(|t| {
            let traj = brownian_trajectory(s.bins + 1, traj_seed(seed, t), s.volume, &s.speed)?;
            let render = RenderConfig {
                seed: render_seed(seed, t),
                ..s.render.clone()
            };
            let frames = render_coded_event_video(optics, &traj, mask, &render)?;
            let est = track(&est, &frames, traj.positions[0])?;
            let pos: Vec<_> = est.iter().map(|e| e.position).collect();
            score(traj.bin_ends(), &pos)
        })
        .collect()
}

pub fn traj_seed(seed: u64, t: usize) -> u64 {
    seed.wrapping_mul(1000).wrapping_add(t as u64)
}

pub fn render_seed(seed: u64, t: usize) -> u64 {
    traj_seed(seed, t) ^ 0x00c0_ffee
}

fn cmd_track(rc: &RunConfig<TrackSettings>, optics: &Optics) -> Result<()> {
    let s = &rc.settings;
    if s.bins == 0 || s.trajectories == 0 {
        return Err(Error::Config("track needs bins >= 1 and trajectories >= 1".into()));
    }
    if s.masks.is_empty() {
        return Err(Error::Config("no masks given".into()));
    }
    s.render.validate()?;
    s.volume.validate()?;
    let masks = s
        .masks
        .iter()
        .map(|m| resolve_mask(m, optics, s.binarize))
        .collect::<Result<Vec<_>>>()?;
    for t in 0..s.trajectories {
        let traj = brownian_trajectory(s.bins + 1, traj_seed(rc.seed, t), s.volume, &s.speed)?;
        write_positions_csv(traj.bin_ends(), rc.out.join(format!("truth_{t}.csv")))?;
    }
    let mut summary = Vec::new();
    for (label, mask) in &masks {
        let runs = track_mask(optics, mask, s, rc.seed)?;
        for (t, r) in runs.iter().enumerate() {
            write_positions_csv(&r.estimates, rc.out.join(format!("estimate_{label}_{t}.csv")))?;
        }
        let (rmse, l1) = score_many(&runs)?;
        println!("{label}: rmse {:.2} nm, z L1 {:.2} nm", rmse * 1e9, l1 * 1e9);
        summary.push(SummaryRow {
            mask: label.clone(),
            rmse_3d: rmse,
            l1_z: l1,
        });
    }
    write_summary_csv(&summary, rc.out.join("summary.csv"))
}

/// Mean event CRB over the evaluation planes for each sweep value.
pub fn ablation_curve(base: &OpticalConfig, mask_spec: &str, s: &AblateSettings, seed: u64) -> Result<Vec<(f64, f64)>> {
    if s.values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let obj = CrbObjective::new(depth_planes(s.planes, 1.5e-6), InfoModel::Event);
    let default_motions = sample_motions(s.motions, seed, &SpeedModel::default());
    s.values
        .iter()
        .map(|&v| {
            let mut cfg = base.clone();
            let mut motions = default_motions.clone();
            match s.sweep {
                Sweep::Photons => cfg.signal_photons = v,
                Sweep::Background => cfg.background_fraction = v,
                Sweep::Speed => {
                    let speed = SpeedModel::Fixed { step: v };
                    speed.validate()?;
                    motions = sample_motions(s.motions, seed, &speed);
                }
            }
            cfg.validate()?;
            let optics = Optics::new(cfg)?;
            let (_, mask) = resolve_mask(mask_spec, &optics, s.binarize)?;
            Ok((v, obj.mean_crb(&optics, &mask, &motions)?))
        })
        .collect()
}

fn cmd_ablate(rc: &RunConfig<AblateSettings>, _optics: &Optics) -> Result<()> {
    let s = &rc.settings;
    let rows = ablation_curve(&rc.optics, &s.mask, s, rc.seed)?;
    let path = rc.out.join(format!("ablate_{}.csv", s.sweep.as_str()));
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(f, "{},mean_crb_nm", s.sweep.as_str())?;
    for (v, c) in &rows {
        writeln!(f, "{v:.6e},{:.6}", c * 1e9)?;
        println!("{} {v:.4e}: {:.3} nm", s.sweep.as_str(), c * 1e9);
    }
    Ok(())
}

fn cmd_baselines(rc: &RunConfig<BaselineSettings>, optics: &Optics) -> Result<()> {
    write_baseline_data(&rc.out, optics)?;
    println!("baseline masks written to {}", rc.out.display());
    Ok(())
}
