//! C ABI over the simulator, MLD evaluation, trained network detectors and
//! complexity counts.
//!
//! Every fallible function returns an [`OtfsStatus`]; on failure the message
//! is available from [`otfs_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use otfs_mimo::complexity::{rm_cnn, rm_mld, rm_mlp, rm_mrc_ml_total, rm_resnet, ComplexityQuery};
use otfs_mimo::config::Config;
use otfs_mimo::neural::{Checkpoint, TrainedDetector};
use otfs_mimo::pipeline::TestBank;
use otfs_mimo::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtfsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Parse = 5,
    Numeric = 6,
    Overflow = 7,
    Panic = 8,
}

/// Real-multiplication counts for one configuration.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OtfsComplexity {
    pub mld: u64,
    pub mrc_ml_total: u64,
    pub mlp: u64,
    pub cnn: u64,
    pub resnet: u64,
}

/// One BER point.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OtfsBerPoint {
    pub snr_db: f64,
    pub symbols: u64,
    pub bit_errors: u64,
    pub ber: f64,
}

/// Simulator bound to one configuration. Test frames are simulated on first use.
pub struct OtfsSimulator {
    config: Config,
    bank: Option<TestBank>,
}

/// Trained network detector with its input scaler.
pub struct OtfsModel {
    detector: TrainedDetector,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> OtfsStatus {
    match err.root() {
        Error::Io(_) => OtfsStatus::Io,
        Error::Parse(_) => OtfsStatus::Parse,
        Error::Config(_) | Error::InvalidProfile(_) | Error::Unsupported(_) => OtfsStatus::Config,
        Error::InvalidParameter(_)
        | Error::InvalidDimension(_)
        | Error::InvalidLength(_)
        | Error::InvalidClass { .. }
        | Error::InvalidInput(_) => OtfsStatus::InvalidArgument,
        Error::Capacity(_) => OtfsStatus::Overflow,
        _ => OtfsStatus::Numeric,
    }
}

fn guard<F: FnOnce() -> Result<(), (OtfsStatus, String)>>(f: F) -> OtfsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OtfsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            OtfsStatus::Panic
        }
    }
}

fn lift(err: Error) -> (OtfsStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (OtfsStatus, String) {
    (OtfsStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (OtfsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (OtfsStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn otfs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn otfs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must point to writable storage for one [`OtfsComplexity`].
#[no_mangle]
pub unsafe extern "C" fn otfs_complexity(
    m: u64,
    n: u64,
    nt: u64,
    nr: u64,
    q: u64,
    out: *mut OtfsComplexity,
) -> OtfsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let query = ComplexityQuery::new(m, n, nt, nr, q).map_err(lift)?;
        let narrow = |v: u128| {
            u64::try_from(v).map_err(|_| (OtfsStatus::Overflow, format!("count {v} does not fit in 64 bits")))
        };
        *out = OtfsComplexity {
            mld: narrow(rm_mld(&query))?,
            mrc_ml_total: narrow(rm_mrc_ml_total(&query))?,
            mlp: narrow(rm_mlp(&query))?,
            cnn: narrow(rm_cnn(&query))?,
            resnet: narrow(rm_resnet(&query))?,
        };
        Ok(())
    })
}

/// Builds a simulator from a TOML configuration document.
///
/// # Safety
/// `config_toml` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn otfs_simulator_new(config_toml: *const c_char, out: *mut *mut OtfsSimulator) -> OtfsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = c_str(config_toml, "config_toml")?;
        let config = Config::from_toml_str(text).map_err(lift)?;
        *out = Box::into_raw(Box::new(OtfsSimulator { config, bank: None }));
        Ok(())
    })
}

/// # Safety
/// `sim` must come from [`otfs_simulator_new`] and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn otfs_simulator_free(sim: *mut OtfsSimulator) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Number of symbols per SNR point the simulator will test.
///
/// # Safety
/// `sim` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn otfs_simulator_test_symbols(sim: *const OtfsSimulator, out: *mut u64) -> OtfsStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let c = &sim.config;
        *out = (c.test_frames() * c.system.nt * c.system.grid_size()) as u64;
        Ok(())
    })
}

unsafe fn ber_points(
    sim: *mut OtfsSimulator,
    model: Option<&OtfsModel>,
    snr_db: *const f64,
    count: usize,
    out: *mut OtfsBerPoint,
) -> Result<(), (OtfsStatus, String)> {
    let sim = sim.as_mut().ok_or_else(|| null("sim"))?;
    if count == 0 {
        return Ok(());
    }
    if snr_db.is_null() {
        return Err(null("snr_db"));
    }
    if out.is_null() {
        return Err(null("out"));
    }
    let snrs = slice::from_raw_parts(snr_db, count);
    if sim.bank.is_none() {
        sim.bank = Some(TestBank::simulate(&sim.config).map_err(lift)?);
    }
    let bank = sim.bank.as_ref().expect("simulated above");
    let reports = match model {
        None => bank.mld_reports(snrs),
        Some(m) => bank.nn_reports(&m.detector, snrs),
    }
    .map_err(lift)?;
    let out = slice::from_raw_parts_mut(out, count);
    for (slot, r) in out.iter_mut().zip(&reports) {
        *slot = OtfsBerPoint { snr_db: r.snr_db, symbols: r.symbols, bit_errors: r.bit_errors, ber: r.ber() };
    }
    Ok(())
}

/// MLD bit-error rate at each of `count` SNR values.
///
/// # Safety
/// `snr_db` must hold `count` doubles and `out` room for `count` points.
#[no_mangle]
pub unsafe extern "C" fn otfs_simulator_mld_ber(
    sim: *mut OtfsSimulator,
    snr_db: *const f64,
    count: usize,
    out: *mut OtfsBerPoint,
) -> OtfsStatus {
    guard(|| ber_points(sim, None, snr_db, count, out))
}

/// Network bit-error rate on the same test frames as [`otfs_simulator_mld_ber`].
///
/// # Safety
/// As for [`otfs_simulator_mld_ber`]; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn otfs_simulator_model_ber(
    sim: *mut OtfsSimulator,
    model: *const OtfsModel,
    snr_db: *const f64,
    count: usize,
    out: *mut OtfsBerPoint,
) -> OtfsStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        ber_points(sim, Some(model), snr_db, count, out)
    })
}

/// Loads a checkpoint file written by `otfs-mimo train`.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn otfs_model_load(path: *const c_char, out: *mut *mut OtfsModel) -> OtfsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = c_str(path, "path")?;
        let detector = Checkpoint::load(Path::new(path)).and_then(Checkpoint::into_detector).map_err(lift)?;
        *out = Box::into_raw(Box::new(OtfsModel { detector }));
        Ok(())
    })
}

/// Parses a checkpoint from its JSON text.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn otfs_model_from_json(json: *const c_char, out: *mut *mut OtfsModel) -> OtfsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = c_str(json, "json")?;
        let detector = Checkpoint::from_json(text).and_then(Checkpoint::into_detector).map_err(lift)?;
        *out = Box::into_raw(Box::new(OtfsModel { detector }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from a loader and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn otfs_model_free(model: *mut OtfsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Constellation order the network classifies into, or 0 for NULL.
///
/// # Safety
/// `model` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn otfs_model_order(model: *const OtfsModel) -> u32 {
    model.as_ref().map_or(0, |m| m.detector.model.q() as u32)
}

/// Classifies `count` samples given as interleaved `[re, im]` pairs.
///
/// # Safety
/// `features` must hold `2 * count` doubles and `classes` room for `count` values.
#[no_mangle]
pub unsafe extern "C" fn otfs_model_predict(
    model: *const OtfsModel,
    features: *const f64,
    count: usize,
    classes: *mut u32,
) -> OtfsStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if count == 0 {
            return Ok(());
        }
        if features.is_null() {
            return Err(null("features"));
        }
        if classes.is_null() {
            return Err(null("classes"));
        }
        let flat = slice::from_raw_parts(features, 2 * count);
        let rows: Vec<[f64; 2]> = flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        let decided = model.detector.predict(&rows).map_err(lift)?;
        let out = slice::from_raw_parts_mut(classes, count);
        for (slot, c) in out.iter_mut().zip(decided) {
            *slot = c as u32;
        }
        Ok(())
    })
}
