//! C interface to `codedevent`.
//!
//! Objects are opaque handles created by `ce_*_new`/`ce_mask_*` functions and
//! released with the matching `*_free`. Every fallible call returns a
//! [`CeStatus`]; on failure, [`ce_last_error_message`] describes the error
//! for the calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use codedevent::baselines::named_mask;
use codedevent::fisher::{crb, event_crb_at, fisher_flashing, CrbObjective, InfoModel, DEFAULT_RIDGE};
use codedevent::optics::{Mask, OpticalConfig, Optics};
use codedevent::optimize::{sample_motions, SpeedModel};
use codedevent::Error;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CeStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    InvalidInput = 3,
    Numerical = 4,
    Io = 5,
    BufferSize = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CeMaskKind {
    Phase = 0,
    Amplitude = 1,
}

/// Optical model handle.
pub struct CeOptics(Optics);

/// Pupil mask handle, bound to the support of the optics it was made for.
pub struct CeMask(Mask);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> CeStatus {
    match e {
        Error::Config(_) => CeStatus::Config,
        Error::NonFinite(_) | Error::Singular(_) => CeStatus::Numerical,
        Error::Io(_) | Error::Format { .. } => CeStatus::Io,
        _ => CeStatus::InvalidInput,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (CeStatus, String)>) -> CeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CeStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CeStatus::Panic
        }
    }
}

fn lib<T>(r: codedevent::Result<T>) -> Result<T, (CeStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (CeStatus, String) {
    (CeStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (CeStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, need: usize, what: &str) -> Result<&'a mut [f64], (CeStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err((CeStatus::BufferSize, format!("{what} holds {len} values, {need} needed")));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ce_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`). Returns the full message length
/// excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ce_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Optics with the default microscope and the given sensor size, photon
/// budget and background fraction.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn ce_optics_new(
    grid: usize,
    signal_photons: f64,
    background_fraction: f64,
    out: *mut *mut CeOptics,
) -> CeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = OpticalConfig {
            grid,
            signal_photons,
            background_fraction,
            ..OpticalConfig::default()
        };
        let optics = lib(Optics::new(cfg))?;
        *out = Box::into_raw(Box::new(CeOptics(optics)));
        Ok(())
    })
}

/// Optics with every setting at its default.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn ce_optics_new_default(out: *mut *mut CeOptics) -> CeStatus {
    let d = OpticalConfig::default();
    ce_optics_new(d.grid, d.signal_photons, d.background_fraction, out)
}

/// # Safety
/// `optics` must be null or a handle from `ce_optics_new*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ce_optics_free(optics: *mut CeOptics) {
    if !optics.is_null() {
        drop(Box::from_raw(optics));
    }
}

/// Sensor pixels per side (0 for a null handle).
///
/// # Safety
/// `optics` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ce_optics_grid(optics: *const CeOptics) -> usize {
    optics.as_ref().map_or(0, |o| o.0.grid())
}

/// Number of pupil samples inside the aperture, the length of mask value arrays.
///
/// # Safety
/// `optics` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ce_optics_pupil_support(optics: *const CeOptics) -> usize {
    optics.as_ref().map_or(0, |o| o.0.pupil.n_support())
}

/// Mask by name (`open`, `fisher`, `levin`) or mask file path.
///
/// # Safety
/// `optics` must be a live handle, `name` a NUL-terminated string and `out`
/// a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn ce_mask_load(optics: *const CeOptics, name: *const c_char, out: *mut *mut CeMask) -> CeStatus {
    guard(|| {
        let o = deref(optics, "optics")?;
        if name.is_null() {
            return Err(null("name"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let name = CStr::from_ptr(name)
            .to_str()
            .map_err(|_| (CeStatus::InvalidInput, "name is not UTF-8".to_string()))?;
        let mask = lib(named_mask(name, &o.0))?;
        *out = Box::into_raw(Box::new(CeMask(mask)));
        Ok(())
    })
}

/// Mask from per-sample values over the pupil support (phase in radians or
/// transmittance in [0, 1]).
///
/// # Safety
/// `optics` must be a live handle, `values` must point to `len` doubles and
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn ce_mask_from_values(
    optics: *const CeOptics,
    kind: CeMaskKind,
    values: *const f64,
    len: usize,
    out: *mut *mut CeMask,
) -> CeStatus {
    guard(|| {
        let o = deref(optics, "optics")?;
        if values.is_null() {
            return Err(null("values"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let v = std::slice::from_raw_parts(values, len).to_vec();
        let mask = match kind {
            CeMaskKind::Phase => Mask::phase(v),
            CeMaskKind::Amplitude => Mask::amplitude(v),
        };
        lib(mask.check(&o.0.pupil))?;
        *out = Box::into_raw(Box::new(CeMask(mask)));
        Ok(())
    })
}

/// # Safety
/// `mask` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ce_mask_free(mask: *mut CeMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// PSF in photons per pixel, row-major `grid x grid`, for an emitter at
/// object-space position (x, y, z) in meters.
///
/// # Safety
/// Handles must be live; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ce_psf(
    optics: *const CeOptics,
    mask: *const CeMask,
    x: f64,
    y: f64,
    z: f64,
    out: *mut f64,
    len: usize,
) -> CeStatus {
    guard(|| {
        let (o, m) = (deref(optics, "optics")?, deref(mask, "mask")?);
        let n = o.0.grid();
        let dst = out_slice(out, len, n * n, "out")?;
        let psf = lib(o.0.compute_psf(&m.0, [x, y, z]))?;
        dst.copy_from_slice(&psf.h.data);
        Ok(())
    })
}

/// PSF and its derivatives with respect to x, y and z (photons per pixel
/// per meter). Each output holds `grid x grid` values.
///
/// # Safety
/// Handles must be live; each output must point to `len` writable doubles.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ce_psf_gradients(
    optics: *const CeOptics,
    mask: *const CeMask,
    x: f64,
    y: f64,
    z: f64,
    h: *mut f64,
    dx: *mut f64,
    dy: *mut f64,
    dz: *mut f64,
    len: usize,
) -> CeStatus {
    guard(|| {
        let (o, m) = (deref(optics, "optics")?, deref(mask, "mask")?);
        let n = o.0.grid() * o.0.grid();
        let outs = [
            out_slice(h, len, n, "h")?,
            out_slice(dx, len, n, "dx")?,
            out_slice(dy, len, n, "dy")?,
            out_slice(dz, len, n, "dz")?,
        ];
        let e = lib(o.0.psf_gradients(&m.0, [x, y, z]))?;
        let g = lib(e.grads())?;
        let [oh, ox, oy, oz] = outs;
        oh.copy_from_slice(&e.h.data);
        ox.copy_from_slice(&g[0].data);
        oy.copy_from_slice(&g[1].data);
        oz.copy_from_slice(&g[2].data);
        Ok(())
    })
}

/// Moving-source bounds (meters) for an emitter at depth `z` moving by
/// (mx, my, mz). `out` receives x, y, z of the previous pose, then x, y, z
/// of the current pose.
///
/// # Safety
/// Handles must be live; `out` must point to 6 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ce_event_crb(
    optics: *const CeOptics,
    mask: *const CeMask,
    z: f64,
    mx: f64,
    my: f64,
    mz: f64,
    out: *mut f64,
) -> CeStatus {
    guard(|| {
        let (o, m) = (deref(optics, "optics")?, deref(mask, "mask")?);
        let dst = out_slice(out, 6, 6, "out")?;
        let r = lib(event_crb_at(&o.0, &m.0, z, [mx, my, mz], DEFAULT_RIDGE))?;
        dst.copy_from_slice(&r.per_parameter);
        Ok(())
    })
}

/// Single-frame bounds (meters) on x, y, z for an on-axis emitter at depth `z`.
///
/// # Safety
/// Handles must be live; `out` must point to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ce_flashing_crb(optics: *const CeOptics, mask: *const CeMask, z: f64, out: *mut f64) -> CeStatus {
    guard(|| {
        let (o, m) = (deref(optics, "optics")?, deref(mask, "mask")?);
        let dst = out_slice(out, 3, 3, "out")?;
        let psf = lib(o.0.psf_gradients(&m.0, [0.0, 0.0, z]))?;
        let fi = lib(fisher_flashing(&psf, o.0.background()))?;
        dst.copy_from_slice(&lib(crb(&fi, DEFAULT_RIDGE))?);
        Ok(())
    })
}

/// Mean moving-source bound (meters) over 30 planes in +-1.5 um and
/// `n_motions` seeded isotropic motions of about 100 nm.
///
/// # Safety
/// Handles must be live; `out` must point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn ce_mean_event_crb(
    optics: *const CeOptics,
    mask: *const CeMask,
    n_motions: usize,
    seed: u64,
    out: *mut f64,
) -> CeStatus {
    guard(|| {
        let (o, m) = (deref(optics, "optics")?, deref(mask, "mask")?);
        let dst = out_slice(out, 1, 1, "out")?;
        let motions = sample_motions(n_motions, seed, &SpeedModel::default());
        dst[0] = lib(CrbObjective::evaluation(InfoModel::Event).mean_crb(&o.0, &m.0, &motions))?;
        Ok(())
    })
}
