//! C ABI over `emitter-coherence`.
//!
//! Every fallible call returns an [`EmcStatus`]; on failure the message is
//! available from [`emc_last_error_message`] on the same thread. Objects are
//! opaque handles released with their `_free` function. Rates are angular
//! (rad/s) and times are seconds.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use emitter_coherence::classifier::Regime;
use emitter_coherence::diffusion::{g2_diffused_curve, QuadratureSpec};
use emitter_coherence::dynamics::{emission_rate, g2_resonant, DampingRegime};
use emitter_coherence::fitting::{estimate_g2_guess, fit_g2, G2Fixed};
use emitter_coherence::models::diffusion_rate;
use emitter_coherence::montecarlo::{correlate, simulate_stream, DiffusionProcess, PhotonStream};
use emitter_coherence::types::{CorrelationCurve, DetuningDistribution, EmitterParams};
use emitter_coherence::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmcStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    Numerical = 3,
    Io = 4,
    Panic = 5,
}

/// Damping regime of the driven population, as returned by [`emc_fit_g2`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmcDamping {
    Oscillatory = 0,
    CriticallyDamped = 1,
    Overdamped = 2,
}

/// Coherent-driving class for a dephasing slope, see [`emc_regime_from_slope`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmcRegime {
    FullyCoherentPiCapable = 0,
    CoherentPi2Only = 1,
    IncoherentUnderdamped = 2,
    Overdamped = 3,
}

/// Emitter parameters.
pub struct EmcEmitter(EmitterParams);

/// Simulated photon arrival times.
pub struct EmcStream(PhotonStream);

/// Coincidence histogram.
pub struct EmcCurve(CorrelationCurve);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EmcG2Fit {
    pub omega: f64,
    pub omega_sigma: f64,
    pub gamma_perp: f64,
    pub gamma_perp_sigma: f64,
    pub gamma_c: f64,
    pub gamma_c_sigma: f64,
    pub reduced_chi2: f64,
    pub damping: i32,
    pub pinned_at_floor: bool,
    pub converged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> EmcStatus {
    match e {
        Error::Io { .. } => EmcStatus::Io,
        e if e.is_numerical() => EmcStatus::Numerical,
        _ => EmcStatus::InvalidArgument,
    }
}

struct Fail(EmcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(EmcStatus::NullPointer, format!("{what} is NULL"))
}

/// Runs `f`, records any failure and converts panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> EmcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EmcStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            EmcStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(p: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a>(p: *mut f64, n: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

/// Message of the last failed call on this thread, or NULL if none.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn emc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn emc_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Creates an emitter handle. Release it with [`emc_emitter_free`].
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn emc_emitter_new(
    gamma: f64,
    gamma_c: f64,
    omega: f64,
    delta: f64,
    out: *mut *mut EmcEmitter,
) -> EmcStatus {
    guard(|| {
        let p = EmitterParams::new(gamma, gamma_c, omega, delta)?;
        write(out, Box::into_raw(Box::new(EmcEmitter(p))), "out")
    })
}

/// # Safety
/// `emitter` must be NULL or a handle from [`emc_emitter_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn emc_emitter_free(emitter: *mut EmcEmitter) {
    if !emitter.is_null() {
        drop(Box::from_raw(emitter));
    }
}

/// Resonant correlation function at delay `tau`.
///
/// # Safety
/// `emitter` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn emc_g2_resonant(emitter: *const EmcEmitter, tau: f64, out: *mut f64) -> EmcStatus {
    guard(|| {
        let e = deref(emitter, "emitter")?;
        if !tau.is_finite() {
            return Err(Fail(EmcStatus::InvalidArgument, "tau must be finite".into()));
        }
        write(out, g2_resonant(&e.0, tau.abs()), "out")
    })
}

/// Steady-state excited-state population.
///
/// # Safety
/// `emitter` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn emc_emission_rate(emitter: *const EmcEmitter, out: *mut f64) -> EmcStatus {
    guard(|| {
        let e = deref(emitter, "emitter")?;
        write(out, emission_rate(&e.0), "out")
    })
}

/// Correlation function averaged over a Gaussian detuning spread of standard
/// deviation `sigma`, evaluated at `n` delays.
///
/// # Safety
/// `taus` and `out` must each point to `n` doubles; `emitter` must be live.
#[no_mangle]
pub unsafe extern "C" fn emc_g2_diffused(
    emitter: *const EmcEmitter,
    sigma: f64,
    taus: *const f64,
    n: usize,
    out: *mut f64,
) -> EmcStatus {
    guard(|| {
        let e = deref(emitter, "emitter")?;
        let taus = slice(taus, n, "taus")?;
        let out = slice_mut(out, n, "out")?;
        let dist = DetuningDistribution::new(sigma, 0.0)?;
        let abs: Vec<f64> = taus.iter().map(|t| t.abs()).collect();
        let g2 = if dist.is_degenerate() {
            abs.iter().map(|&t| g2_resonant(&e.0, t)).collect()
        } else {
            g2_diffused_curve(&e.0, &dist, &abs, &QuadratureSpec::auto_for(&e.0, &dist))?
        };
        out.copy_from_slice(&g2);
        Ok(())
    })
}

/// Spectral diffusion rate bound from scan speed (Hz/s) and linewidths (Hz).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emc_diffusion_rate(u_l: f64, dv_ftl: f64, dv_single: f64, out: *mut f64) -> EmcStatus {
    guard(|| write(out, diffusion_rate(u_l, dv_ftl, dv_single)?, "out"))
}

/// Coherent-driving class of a dephasing-versus-Rabi slope.
#[no_mangle]
pub extern "C" fn emc_regime_from_slope(m: f64) -> EmcRegime {
    match Regime::from_slope(m) {
        Regime::FullyCoherentPiCapable => EmcRegime::FullyCoherentPiCapable,
        Regime::CoherentPi2Only => EmcRegime::CoherentPi2Only,
        Regime::IncoherentUnderdamped => EmcRegime::IncoherentUnderdamped,
        Regime::Overdamped => EmcRegime::Overdamped,
    }
}

/// Simulates a detected photon stream without spectral diffusion.
///
/// # Safety
/// `emitter` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn emc_stream_simulate(
    emitter: *const EmcEmitter,
    duration: f64,
    efficiency: f64,
    seed: u64,
    out: *mut *mut EmcStream,
) -> EmcStatus {
    guard(|| {
        let e = deref(emitter, "emitter")?;
        let s = simulate_stream(&e.0, &DiffusionProcess::none(seed), duration, efficiency)?;
        write(out, Box::into_raw(Box::new(EmcStream(s))), "out")
    })
}

/// Wraps caller-supplied arrival times (seconds, sorted) as a stream.
///
/// # Safety
/// `times` must point to `n` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn emc_stream_from_times(
    times: *const f64,
    n: usize,
    duration: f64,
    out: *mut *mut EmcStream,
) -> EmcStatus {
    guard(|| {
        let t = slice(times, n, "times")?;
        let s = PhotonStream::new(t.to_vec(), duration, 0)?;
        write(out, Box::into_raw(Box::new(EmcStream(s))), "out")
    })
}

/// Number of photons in the stream; 0 for NULL.
///
/// # Safety
/// `stream` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn emc_stream_len(stream: *const EmcStream) -> usize {
    stream.as_ref().map_or(0, |s| s.0.len())
}

/// Copies up to `capacity` arrival times into `buf`; writes the count copied.
///
/// # Safety
/// `stream` must be live, `buf` hold `capacity` doubles, `written` be writable.
#[no_mangle]
pub unsafe extern "C" fn emc_stream_copy_times(
    stream: *const EmcStream,
    buf: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> EmcStatus {
    guard(|| {
        let s = deref(stream, "stream")?;
        let buf = slice_mut(buf, capacity, "buf")?;
        let n = capacity.min(s.0.len());
        buf[..n].copy_from_slice(&s.0.arrival_times()[..n]);
        write(written, n, "written")
    })
}

/// # Safety
/// `stream` must be NULL or a live handle, and not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn emc_stream_free(stream: *mut EmcStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

/// Coincidence histogram of a stream over |tau| <= `max_tau`.
///
/// # Safety
/// `stream` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn emc_correlate(
    stream: *const EmcStream,
    bin_width: f64,
    max_tau: f64,
    out: *mut *mut EmcCurve,
) -> EmcStatus {
    guard(|| {
        let s = deref(stream, "stream")?;
        let c = correlate(&s.0, bin_width, max_tau)?;
        write(out, Box::into_raw(Box::new(EmcCurve(c))), "out")
    })
}

/// Builds a histogram from bin centres and raw counts.
///
/// # Safety
/// `taus` and `counts` must each point to `n` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn emc_curve_new(
    taus: *const f64,
    counts: *const f64,
    n: usize,
    bin_width: f64,
    out: *mut *mut EmcCurve,
) -> EmcStatus {
    guard(|| {
        let t = slice(taus, n, "taus")?;
        let c = slice(counts, n, "counts")?;
        let curve = CorrelationCurve::new(t.to_vec(), c.to_vec(), bin_width)?;
        write(out, Box::into_raw(Box::new(EmcCurve(curve))), "out")
    })
}

/// Number of bins; 0 for NULL.
///
/// # Safety
/// `curve` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn emc_curve_len(curve: *const EmcCurve) -> usize {
    curve.as_ref().map_or(0, |c| c.0.len())
}

/// Copies bin centres, raw counts and normalised g2 into arrays of length
/// `emc_curve_len(curve)`. Any output pointer may be NULL to skip it.
///
/// # Safety
/// `curve` must be live; non-NULL outputs must hold `emc_curve_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn emc_curve_copy(
    curve: *const EmcCurve,
    taus: *mut f64,
    counts: *mut f64,
    g2: *mut f64,
) -> EmcStatus {
    guard(|| {
        let c = &deref(curve, "curve")?.0;
        let n = c.len();
        if !taus.is_null() {
            slice_mut(taus, n, "taus")?.copy_from_slice(c.tau_bins());
        }
        if !counts.is_null() {
            slice_mut(counts, n, "counts")?.copy_from_slice(c.counts());
        }
        if !g2.is_null() {
            slice_mut(g2, n, "g2")?.copy_from_slice(&c.g2());
        }
        Ok(())
    })
}

/// # Safety
/// `curve` must be NULL or a live handle, and not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn emc_curve_free(curve: *mut EmcCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

/// Fits Rabi frequency and dephasing to a histogram, starting from a guess
/// read off the curve. `sigma` is the detuning spread held fixed (0 for none).
///
/// # Safety
/// `curve` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn emc_fit_g2(curve: *const EmcCurve, gamma: f64, sigma: f64, out: *mut EmcG2Fit) -> EmcStatus {
    guard(|| {
        let c = &deref(curve, "curve")?.0;
        let fixed = G2Fixed {
            gamma,
            dist: DetuningDistribution::new(sigma, 0.0)?,
        };
        let guess = estimate_g2_guess(c, gamma)?;
        let r = fit_g2(c, &fixed, &guess)?;
        let fit = EmcG2Fit {
            omega: r.omega.value,
            omega_sigma: r.omega.sigma,
            gamma_perp: r.gamma_perp.value,
            gamma_perp_sigma: r.gamma_perp.sigma,
            gamma_c: r.gamma_c.value,
            gamma_c_sigma: r.gamma_c.sigma,
            reduced_chi2: r.fit.reduced_chi2(),
            damping: match r.regime {
                DampingRegime::Oscillatory => EmcDamping::Oscillatory,
                DampingRegime::CriticallyDamped => EmcDamping::CriticallyDamped,
                DampingRegime::Overdamped => EmcDamping::Overdamped,
            } as i32,
            pinned_at_floor: r.pinned_at_floor,
            converged: r.fit.converged,
        };
        write(out, fit, "out")
    })
}
