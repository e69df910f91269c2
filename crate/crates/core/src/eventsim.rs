//! Idealized event-camera simulation.
//!
//! Each pixel keeps a reference log intensity. Whenever the current log
//! intensity has moved `k >= 1` whole thresholds away from the reference, the
//! pixel emits `k` events of that polarity (timestamps interpolated linearly
//! between frames) and the reference advances to the last crossed level.
//! Under this rule the binned polarity sum of a bin that starts at the
//! reference frame satisfies `|T * counts - dL| < T` for every pixel.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    /// column index
    pub u: u32,
    /// row index
    pub v: u32,
    /// seconds
    pub t: f64,
    pub polarity: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedFrame {
    pub rows: usize,
    pub cols: usize,
    pub counts: Vec<i32>,
    pub t_start: f64,
    pub t_end: f64,
    pub n_subframes: usize,
}

impl BinnedFrame {
    pub fn zeros(rows: usize, cols: usize, t_start: f64, t_end: f64) -> Self {
        BinnedFrame {
            rows,
            cols,
            counts: vec![0; rows * cols],
            t_start,
            t_end,
            n_subframes: 0,
        }
    }

    pub fn get(&self, r: usize, c: usize) -> i32 {
        self.counts[r * self.cols + c]
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    pub fn to_image(&self) -> Image {
        Image {
            rows: self.rows,
            cols: self.cols,
            data: self.counts.iter().map(|&c| c as f64).collect(),
        }
    }

    /// `T * counts`, the binned estimate of the log-intensity change.
    pub fn log_change(&self, threshold: f64) -> Image {
        self.to_image().scaled(threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimConfig {
    /// contrast threshold in natural-log units
    pub threshold: f64,
    /// seconds; 0 disables the refractory period
    pub refractory: f64,
    /// lower clamp applied before taking logs, photons
    pub log_floor: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            threshold: 0.1,
            refractory: 0.0,
            log_floor: 1e-12,
        }
    }
}

/// Elementwise `log(max(frame + background, floor))`.
pub fn log_intensity(frame: &Image, background: f64, floor: f64) -> Result<Image> {
    if let Some(v) = frame.data.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "intensity frame has a negative or NaN pixel ({v})"
        )));
    }
    Ok(frame.map(|v| (v + background).max(floor).ln()))
}

/// Idealized log-difference measurement `log(I_t + b) - log(I_prev + b)`.
pub fn log_diff_measurement(current: &Image, previous: &Image, background: f64) -> Result<Image> {
    current.check_same_shape(previous)?;
    let mut out = Image::zeros(current.rows, current.cols);
    for i in 0..out.data.len() {
        out.data[i] = (current.data[i] + background).ln() - (previous.data[i] + background).ln();
    }
    Ok(out)
}

/// Converts a sequence of intensity frames into an event stream sorted by
/// `(t, v, u)`. The first frame initializes every reference level.
pub fn simulate_events(
    frames: &[Image],
    timestamps: &[f64],
    background: f64,
    cfg: &SimConfig,
) -> Result<Vec<EventRecord>> {
    if frames.len() < 2 {
        return Err(Error::InvalidInput("need at least two frames".into()));
    }
    if frames.len() != timestamps.len() {
        return Err(Error::InvalidInput("one timestamp per frame required".into()));
    }
    if !(cfg.threshold > 0.0) {
        return Err(Error::Config("threshold must be positive".into()));
    }
    if timestamps.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("timestamps must increase strictly".into()));
    }
    let (rows, cols) = frames[0].shape();
    for f in frames {
        frames[0].check_same_shape(f)?;
    }
    let logs = frames
        .iter()
        .map(|f| log_intensity(f, background, cfg.log_floor))
        .collect::<Result<Vec<_>>>()?;
    let mut events = Vec::new();
    for px in 0..rows * cols {
        let series: Vec<f64> = logs.iter().map(|l| l.data[px]).collect();
        let (u, v) = ((px % cols) as u32, (px / cols) as u32);
        for (t, polarity) in pixel_events(&series, timestamps, cfg) {
            events.push(EventRecord { u, v, t, polarity });
        }
    }
    sort_events(&mut events);
    Ok(events)
}

pub fn sort_events(events: &mut [EventRecord]) {
    events.sort_by(|a, b| {
        a.t.total_cmp(&b.t)
            .then(a.v.cmp(&b.v))
            .then(a.u.cmp(&b.u))
    });
}

/// Events of a single pixel given its log-intensity samples.
pub fn pixel_events(log_series: &[f64], timestamps: &[f64], cfg: &SimConfig) -> Vec<(f64, i8)> {
    let thr = cfg.threshold;
    let mut out = Vec::new();
    let mut reference = log_series[0];
    let mut last_event = f64::NEG_INFINITY;
    for i in 1..log_series.len() {
        let (l0, l1) = (log_series[i - 1], log_series[i]);
        let (t0, t1) = (timestamps[i - 1], timestamps[i]);
        let delta = l1 - reference;
        let mut k = (delta.abs() / thr).floor();
        // guard against k*thr rounding past |delta|, or leaving a full threshold behind
        if k * thr > delta.abs() {
            k -= 1.0;
        } else if delta.abs() - k * thr >= thr {
            k += 1.0;
        }
        if k < 1.0 {
            continue;
        }
        let sign = delta.signum();
        let polarity = if sign > 0.0 { 1 } else { -1 };
        for j in 1..=k as usize {
            let level = reference + sign * thr * j as f64;
            let frac = if l1 != l0 {
                ((level - l0) / (l1 - l0)).clamp(0.0, 1.0)
            } else {
                1.0
            };
            let t = t0 + frac * (t1 - t0);
            if cfg.refractory > 0.0 && t - last_event < cfg.refractory {
                continue;
            }
            last_event = t;
            out.push((t, polarity));
        }
        // The reference tracks the crossed level even when the refractory
        // period suppressed the event itself.
        reference += sign * thr * k;
    }
    out
}

/// Sums event polarities per pixel over `[t_start, t_end)`.
pub fn bin_events(
    events: &[EventRecord],
    rows: usize,
    cols: usize,
    t_start: f64,
    t_end: f64,
) -> Result<BinnedFrame> {
    if !(t_start < t_end) {
        return Err(Error::InvalidInput("bin requires t_start < t_end".into()));
    }
    let mut frame = BinnedFrame::zeros(rows, cols, t_start, t_end);
    for e in events {
        if e.t >= t_start && e.t < t_end {
            let (u, v) = (e.u as usize, e.v as usize);
            if u >= cols || v >= rows {
                return Err(Error::InvalidInput(format!("event at ({u}, {v}) outside sensor")));
            }
            frame.counts[v * cols + u] += e.polarity as i32;
        }
    }
    Ok(frame)
}

/// Simulates a bin whose first frame is the reference and bins every event
/// emitted afterwards, including ones stamped exactly at the last frame.
pub fn simulate_bin(
    frames: &[Image],
    timestamps: &[f64],
    background: f64,
    cfg: &SimConfig,
) -> Result<BinnedFrame> {
    let events = simulate_events(frames, timestamps, background, cfg)?;
    let (rows, cols) = frames[0].shape();
    let t_start = timestamps[0];
    let t_last = *timestamps.last().unwrap();
    let t_end = t_last + (t_last - t_start).max(f64::MIN_POSITIVE) * 1e-9;
    let mut frame = bin_events(&events, rows, cols, t_start, t_end)?;
    frame.t_end = t_last;
    frame.n_subframes = frames.len() - 1;
    Ok(frame)
}

/// Additive Gaussian sensor noise with the given standard deviation, clamped at zero.
pub fn add_gaussian_noise(frame: &Image, sigma: f64, rng: &mut impl Rng) -> Image {
    if sigma <= 0.0 {
        return frame.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let mut out = frame.clone();
    for v in out.data.iter_mut() {
        *v = (*v + normal.sample(rng)).max(0.0);
    }
    out
}

pub fn write_events_csv(events: &[EventRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t,u,v,p")?;
    for e in events {
        writeln!(f, "{},{},{},{}", e.t, e.u, e.v, e.polarity)?;
    }
    Ok(())
}

pub fn read_events_csv(path: impl AsRef<Path>) -> Result<Vec<EventRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("t,u,v,p") {
        return Err(bad("expected header t,u,v,p".into()));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(bad(format!("line {}: expected 4 fields", i + 2)));
        }
        let parse_err = |e: String| bad(format!("line {}: {e}", i + 2));
        let polarity: i8 = parts[3].trim().parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?;
        if polarity != 1 && polarity != -1 {
            return Err(parse_err("polarity must be +1 or -1".into()));
        }
        out.push(EventRecord {
            t: parts[0].trim().parse().map_err(|e: std::num::ParseFloatError| parse_err(e.to_string()))?,
            u: parts[1].trim().parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?,
            v: parts[2].trim().parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?,
            polarity,
        });
    }
    Ok(out)
}
