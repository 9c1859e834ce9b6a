//! C ABI over the `wqed` library.
//!
//! Chains are opaque handles created by one of the `wq_chain_new_*` constructors and
//! released with [`wq_chain_free`]. Every fallible call returns a [`WqStatus`]; on failure
//! the message is kept per thread and can be copied out with [`wq_last_error_message`].
//! Results are written through caller-provided pointers only on success.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use wqed::engine::{default_calibration, Channel, EngineSystem};
use wqed::single_photon::{scatter_regularized, time_delay};
use wqed::{
    build_232, build_pair, DrivenLambdaEmitter, Emitter, EmitterChain, Error, Incidence,
    PairGeometry, PhaseMode,
};

pub const WQ_MODE_MARKOVIAN: c_int = 0;
pub const WQ_MODE_EXACT: c_int = 1;
pub const WQ_INCIDENCE_LEFT: c_int = 0;
pub const WQ_INCIDENCE_RIGHT: c_int = 1;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NumericFailure = 3,
    CalibrationFailure = 4,
    /// The requested quantity is undefined at this point (zero transmission, no flux).
    Undefined = 5,
    Panic = 6,
}

/// Opaque emitter chain.
pub struct WqChain {
    chain: EmitterChain,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> WqStatus {
    match err {
        Error::InvalidParameter(_) | Error::Model(_) | Error::Config { .. } | Error::Grid(_) => {
            WqStatus::InvalidArgument
        }
        Error::Calibration(_) | Error::CalibrationRequired => WqStatus::CalibrationFailure,
        Error::UndefinedPhase { .. } | Error::IllDefined(_) => WqStatus::Undefined,
        _ => WqStatus::NumericFailure,
    }
}

/// Run `f`, converting errors and panics into a status plus the thread's last error.
fn guard<F: FnOnce() -> Result<(), (WqStatus, String)>>(f: F) -> WqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            WqStatus::Ok
        }
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            WqStatus::Panic
        }
    }
}

fn lib<T>(r: wqed::Result<T>) -> Result<T, (WqStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (WqStatus, String) {
    (WqStatus::NullPointer, format!("{what} is null"))
}

fn chain_ref<'a>(chain: *const WqChain) -> Result<&'a EmitterChain, (WqStatus, String)> {
    // SAFETY: the caller passes a handle obtained from a constructor and not yet freed.
    unsafe { chain.as_ref() }.map(|c| &c.chain).ok_or_else(|| null("chain"))
}

fn mode_of(mode: c_int) -> Result<PhaseMode, (WqStatus, String)> {
    match mode {
        WQ_MODE_MARKOVIAN => Ok(PhaseMode::Markovian),
        WQ_MODE_EXACT => Ok(PhaseMode::Exact),
        _ => Err((WqStatus::InvalidArgument, format!("unknown phase mode {mode}"))),
    }
}

fn incidence_of(inc: c_int) -> Result<Incidence, (WqStatus, String)> {
    match inc {
        WQ_INCIDENCE_LEFT => Ok(Incidence::Left),
        WQ_INCIDENCE_RIGHT => Ok(Incidence::Right),
        _ => Err((WqStatus::InvalidArgument, format!("unknown incidence {inc}"))),
    }
}

fn store_chain(chain: EmitterChain, out: *mut *mut WqChain) -> Result<(), (WqStatus, String)> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    let h = Box::into_raw(Box::new(WqChain { chain }));
    // SAFETY: `out` is non-null and points to writable storage for one pointer.
    unsafe { *out = h };
    Ok(())
}

/// Pair of two-level emitters at `-+ k0l / 2` with frequencies `omega0 +- delta / 2`.
#[no_mangle]
pub extern "C" fn wq_chain_new_pair(
    omega0: f64,
    delta: f64,
    gamma: f64,
    k0l: f64,
    loss: f64,
    out: *mut *mut WqChain,
) -> WqStatus {
    guard(|| {
        let p = lib(PairGeometry::new(omega0, delta, gamma, k0l).and_then(|p| p.with_loss(loss)))?;
        store_chain(lib(build_pair(&p))?, out)
    })
}

/// Two-level / driven three-level / two-level chain. `k0l` is the phase between the outer
/// emitters; the driven emitter sits in the middle.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub extern "C" fn wq_chain_new_232(
    omega0: f64,
    delta: f64,
    gamma: f64,
    rabi: f64,
    lambda_detuning: f64,
    k0l: f64,
    loss: f64,
    out: *mut *mut WqChain,
) -> WqStatus {
    guard(|| {
        let c = lib(build_232(omega0, delta, gamma, rabi, lambda_detuning, 0.5 * k0l, loss))?;
        store_chain(c, out)
    })
}

/// Single driven three-level emitter at the origin.
#[no_mangle]
pub extern "C" fn wq_chain_new_lambda(
    omega0: f64,
    detuning: f64,
    rabi: f64,
    gamma: f64,
    loss_excited: f64,
    loss_metastable: f64,
    out: *mut *mut WqChain,
) -> WqStatus {
    guard(|| {
        let e = lib(DrivenLambdaEmitter::new(omega0, detuning, rabi, gamma, loss_excited, loss_metastable, 0.0))?;
        store_chain(lib(EmitterChain::new(vec![Emitter::Lambda(e)], omega0))?, out)
    })
}

/// Release a chain. Null is ignored.
#[no_mangle]
pub extern "C" fn wq_chain_free(chain: *mut WqChain) {
    if !chain.is_null() {
        // SAFETY: the handle came from `Box::into_raw` in a constructor and is freed once.
        drop(unsafe { Box::from_raw(chain) });
    }
}

/// Number of emitters, or 0 for a null handle.
#[no_mangle]
pub extern "C" fn wq_chain_len(chain: *const WqChain) -> usize {
    chain_ref(chain).map(|c| c.len()).unwrap_or(0)
}

/// Single-photon transmission amplitude `t(k)`.
#[no_mangle]
pub extern "C" fn wq_transmission(
    chain: *const WqChain,
    k: f64,
    mode: c_int,
    re: *mut f64,
    im: *mut f64,
) -> WqStatus {
    guard(|| {
        let c = chain_ref(chain)?;
        if re.is_null() || im.is_null() {
            return Err(null("output"));
        }
        let t = lib(scatter_regularized(c, k, mode_of(mode)?))?.t;
        // SAFETY: both pointers are non-null and writable.
        unsafe {
            *re = t.re;
            *im = t.im;
        }
        Ok(())
    })
}

/// Calibrated inelastic fluxes into the transmitted and reflected channels.
#[no_mangle]
pub extern "C" fn wq_inelastic_flux(
    chain: *const WqChain,
    k: f64,
    incidence: c_int,
    transmitted: *mut f64,
    reflected: *mut f64,
) -> WqStatus {
    guard(|| {
        let c = chain_ref(chain)?;
        if transmitted.is_null() || reflected.is_null() {
            return Err(null("output"));
        }
        let cal = lib(default_calibration())?;
        let fo = lib(EngineSystem::new(c, incidence_of(incidence)?).and_then(|s| s.fourth_order(k)))?;
        let f = cal.flux(&fo);
        // SAFETY: both pointers are non-null and writable.
        unsafe {
            *transmitted = f.transmitted;
            *reflected = f.reflected;
        }
        Ok(())
    })
}

/// Transmitted-channel g2 at `n` delays; `out` receives `n` values.
#[no_mangle]
pub extern "C" fn wq_g2(
    chain: *const WqChain,
    k: f64,
    incidence: c_int,
    times: *const f64,
    n: usize,
    out: *mut f64,
) -> WqStatus {
    guard(|| {
        let c = chain_ref(chain)?;
        if n == 0 {
            return Ok(());
        }
        if times.is_null() || out.is_null() {
            return Err(null("delay or output array"));
        }
        // SAFETY: the caller guarantees `n` readable values at `times`.
        let ts = unsafe { std::slice::from_raw_parts(times, n) };
        let g = lib(EngineSystem::new(c, incidence_of(incidence)?).and_then(|s| s.g2(k, ts, Channel::Transmitted)))?;
        // SAFETY: the caller guarantees `n` writable values at `out`.
        unsafe { ptr::copy_nonoverlapping(g.as_ptr(), out, n) };
        Ok(())
    })
}

/// Group delay `d arg t / dk`.
#[no_mangle]
pub extern "C" fn wq_time_delay(chain: *const WqChain, k: f64, mode: c_int, out: *mut f64) -> WqStatus {
    guard(|| {
        let c = chain_ref(chain)?;
        if out.is_null() {
            return Err(null("output"));
        }
        let tau = lib(time_delay(c, k, mode_of(mode)?))?;
        // SAFETY: `out` is non-null and writable.
        unsafe { *out = tau };
        Ok(())
    })
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated, truncated to
/// `len`). Returns the full message length including the terminator, or 0 if there is none.
#[no_mangle]
pub extern "C" fn wq_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = (bytes.len() - 1).min(len - 1);
            // SAFETY: `buf` holds at least `len` bytes; we write `n + 1 <= len`.
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wq_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}
