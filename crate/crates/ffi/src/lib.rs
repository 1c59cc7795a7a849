//! C interface: load a checkpoint, predict CAD sequences from SVG documents,
//! inspect and reconstruct sequences.
//!
//! Every function returns a [`D2cStatus`]. On failure the message is kept per
//! thread and read with [`d2c_last_error_message`]. Handles are opaque and
//! released with their matching `_free` function.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use d2c::cad::{validate_cad_sequence, CadSequence, CAD_PARAM_COUNT};
use d2c::checkpoint::Checkpoint;
use d2c::geom::{reconstruct, sample_shape};
use d2c::ingest::drawing_from_svg;
use d2c::nn::model::Model;
use d2c::pipeline::infer_views;
use d2c::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D2cStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    InvalidGeometry = 4,
    Checkpoint = 5,
    Internal = 6,
    Panic = 7,
}

/// Loaded model.
pub struct D2cModel {
    model: Model,
}

/// Fixed-length CAD command sequence.
pub struct D2cSequence {
    seq: CadSequence,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> D2cStatus {
    match e {
        Error::Geometry(_) | Error::Sampling(_) => D2cStatus::InvalidGeometry,
        Error::Checkpoint(_) => D2cStatus::Checkpoint,
        Error::Contract(_) | Error::NonFiniteLoss { .. } | Error::Io(_) | Error::Json(_) => D2cStatus::Internal,
        _ => D2cStatus::InvalidInput,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (D2cStatus, String)>) -> D2cStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => D2cStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside d2c".into());
            D2cStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (D2cStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (D2cStatus, String) {
    (D2cStatus::NullArgument, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (D2cStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (D2cStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn d2c_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn d2c_model_load(path: *const c_char, out: *mut *mut D2cModel) -> D2cStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let model = Checkpoint::load(Path::new(path)).and_then(|c| c.model()).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(D2cModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`d2c_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn d2c_model_free(model: *mut D2cModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of drawings the model expects (1, 3 or 4); 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2c_model_view_count(model: *const D2cModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.config.view_mode.views().len())
}

/// Predicts a sequence from SVG documents given in the model's view order
/// (front, top, right, isometric, restricted to its view mode).
///
/// # Safety
/// `svgs` must point to `count` NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn d2c_infer_svg(
    model: *const D2cModel,
    svgs: *const *const c_char,
    count: usize,
    out: *mut *mut D2cSequence,
) -> D2cStatus {
    guard(|| {
        let model = &model.as_ref().ok_or_else(|| null("model"))?.model;
        if out.is_null() {
            return Err(null("out"));
        }
        if svgs.is_null() && count > 0 {
            return Err(null("svgs"));
        }
        let wanted = model.config.view_mode.views();
        if count > wanted.len() {
            return Err((D2cStatus::InvalidInput, format!("model takes {} drawings, got {count}", wanted.len())));
        }
        let mut views = BTreeMap::new();
        for (i, v) in wanted.iter().enumerate().take(count) {
            let text = str_arg(*svgs.add(i), "svg")?;
            views.insert(*v, drawing_from_svg(text, *v).map_err(lib_err)?);
        }
        let seq = infer_views(model, &views).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(D2cSequence { seq }));
        Ok(())
    })
}

/// Parses the line-per-command text form.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn d2c_sequence_from_text(text: *const c_char, out: *mut *mut D2cSequence) -> D2cStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let seq = CadSequence::from_text(str_arg(text, "text")?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(D2cSequence { seq }));
        Ok(())
    })
}

/// # Safety
/// `seq` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn d2c_sequence_free(seq: *mut D2cSequence) {
    if !seq.is_null() {
        drop(Box::from_raw(seq));
    }
}

/// Total commands including padding; 0 for a null handle.
///
/// # Safety
/// `seq` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2c_sequence_len(seq: *const D2cSequence) -> usize {
    seq.as_ref().map_or(0, |s| s.seq.len())
}

/// Kind index (SOL 0, Line 1, Arc 2, Circle 3, Extrude 4, EOS 5) and the 15
/// argument bins of command `index`; unused slots hold 256.
///
/// # Safety
/// `kind` must be writable; `params` must hold 15 values.
#[no_mangle]
pub unsafe extern "C" fn d2c_sequence_command(
    seq: *const D2cSequence,
    index: usize,
    kind: *mut u32,
    params: *mut u16,
) -> D2cStatus {
    guard(|| {
        let seq = &seq.as_ref().ok_or_else(|| null("seq"))?.seq;
        if kind.is_null() || params.is_null() {
            return Err(null("output"));
        }
        let c = seq
            .commands()
            .get(index)
            .ok_or_else(|| (D2cStatus::InvalidInput, format!("index {index} out of range 0..{}", seq.len())))?;
        *kind = c.kind.index() as u32;
        ptr::copy_nonoverlapping(c.params.0.as_ptr(), params, CAD_PARAM_COUNT);
        Ok(())
    })
}

/// Text form of the sequence; release with [`d2c_string_free`].
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn d2c_sequence_to_text(seq: *const D2cSequence, out: *mut *mut c_char) -> D2cStatus {
    guard(|| {
        let seq = &seq.as_ref().ok_or_else(|| null("seq"))?.seq;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = CString::new(seq.to_text()).map_err(|e| (D2cStatus::Internal, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Number of grammar violations (0 means well-formed); `usize::MAX` for null.
///
/// # Safety
/// `seq` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2c_sequence_violations(seq: *const D2cSequence) -> usize {
    seq.as_ref().map_or(usize::MAX, |s| validate_cad_sequence(&s.seq).len())
}

/// Reconstructs the solid and writes `k` surface points as `x y z` triples
/// into `xyz` (room for `3·k` doubles).
///
/// # Safety
/// `xyz` must have room for `3·k` doubles.
#[no_mangle]
pub unsafe extern "C" fn d2c_sample_surface(seq: *const D2cSequence, k: usize, seed: u64, xyz: *mut f64) -> D2cStatus {
    guard(|| {
        let seq = &seq.as_ref().ok_or_else(|| null("seq"))?.seq;
        if xyz.is_null() {
            return Err(null("xyz"));
        }
        let solid = reconstruct(seq).map_err(|r| (D2cStatus::InvalidGeometry, format!("invalid sequence: {r}")))?;
        let cloud = sample_shape(&solid, k, seed).map_err(lib_err)?;
        let out = std::slice::from_raw_parts_mut(xyz, 3 * k);
        for (chunk, p) in out.chunks_exact_mut(3).zip(&cloud.points) {
            chunk.copy_from_slice(&[p.x, p.y, p.z]);
        }
        Ok(())
    })
}

/// # Safety
/// `s` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn d2c_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
