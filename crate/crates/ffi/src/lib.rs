//! C ABI over the `semcom` library.
//!
//! Every function returns a [`SemcomStatus`]; on failure the message is
//! available from [`semcom_last_error`] on the same thread. Models and
//! channels are opaque handles released with their `_free` functions.
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use semcom::channel::{noise_variance_from_snr, sample_channel, ChannelRealization};
use semcom::datasets::PIXELS;
use semcom::diffcore::Tensor;
use semcom::metrics::{ssim, SsimParams};
use semcom::rng::{self, substream};
use semcom::transceiver::{read_checkpoint, reconstruct, write_checkpoint, ModelDims, PassOptions, TransceiverParams, Variant};
use semcom::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SemcomStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Checkpoint = 5,
    Dimension = 6,
    Numerical = 7,
    Panic = 8,
}

/// Trained or freshly initialized transceiver parameters.
pub struct SemcomModel {
    params: TransceiverParams,
}

/// One draw of the K-user MIMO interference channel.
pub struct SemcomChannel {
    realization: ChannelRealization,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SemcomStatus {
    match e {
        Error::Io(_) | Error::Fetch(_) => SemcomStatus::Io,
        Error::Parse { .. } => SemcomStatus::Parse,
        Error::Checkpoint(_) => SemcomStatus::Checkpoint,
        Error::ShapeMismatch { .. } | Error::Dimension(_) => SemcomStatus::Dimension,
        Error::Numerical { .. } | Error::NonFiniteLoss { .. } | Error::DegenerateInput(_) => SemcomStatus::Numerical,
        Error::NonScalarLoss(_) | Error::Config { .. } => SemcomStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail::Lib(Error::Io(e))
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SemcomStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SemcomStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            SemcomStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg);
            SemcomStatus::InvalidArgument
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SemcomStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    unsafe { p.as_ref() }.ok_or(Fail::Null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    unsafe { p.as_mut() }.ok_or(Fail::Null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, Fail> {
    if p.is_null() {
        return Err(Fail::Null("path"));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Fail::Arg("path is not valid UTF-8".into()))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn slice_out<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[unsafe(no_mangle)]
pub extern "C" fn semcom_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[unsafe(no_mangle)]
pub extern "C" fn semcom_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Fresh model with Glorot-initialized weights. `variant` is the checkpoint
/// tag: 0 csi_free, 1 csir, 2 csitr, 3 interference_free, 4 semi_conventional.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn semcom_model_new(
    variant: u32,
    users: usize,
    tx: usize,
    rx: usize,
    block_len: usize,
    hidden: usize,
    seed: u64,
    out: *mut *mut SemcomModel,
) -> SemcomStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        let variant = Variant::from_tag(variant).ok_or_else(|| Fail::Arg(format!("unknown variant tag {variant}")))?;
        let dims = ModelDims {
            users,
            tx,
            rx,
            block_len,
            hidden,
            image_len: PIXELS,
        };
        let params = TransceiverParams::init(variant, dims, &mut substream(seed, rng::INIT, &[]))?;
        *out = Box::into_raw(Box::new(SemcomModel { params }));
        Ok(())
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn semcom_model_load(path: *const c_char, out: *mut *mut SemcomModel) -> SemcomStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        let path = unsafe { path_arg(path) }?;
        let params = read_checkpoint(BufReader::new(File::open(path)?))?;
        *out = Box::into_raw(Box::new(SemcomModel { params }));
        Ok(())
    })
}

/// Writes a checkpoint file.
///
/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn semcom_model_save(model: *const SemcomModel, path: *const c_char) -> SemcomStatus {
    guard(|| {
        let model = unsafe { non_null(model, "model") }?;
        let path = unsafe { path_arg(path) }?;
        write_checkpoint(BufWriter::new(File::create(path)?), &model.params)?;
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn semcom_model_free(model: *mut SemcomModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Variant tag, user count and pixels per image of a model.
///
/// # Safety
/// All pointers must be valid.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn semcom_model_info(
    model: *const SemcomModel,
    variant: *mut u32,
    users: *mut usize,
    image_len: *mut usize,
) -> SemcomStatus {
    guard(|| {
        let m = unsafe { non_null(model, "model") }?;
        *unsafe { out_ptr(variant, "variant") }? = m.params.variant.tag();
        *unsafe { out_ptr(users, "users") }? = m.params.dims.users;
        *unsafe { out_ptr(image_len, "image_len") }? = m.params.dims.image_len;
        Ok(())
    })
}

/// Draws a Rayleigh channel with `σ² = P·10^(−snr_db/10)` from `seed`.
///
/// # Safety
/// `out` must be writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn semcom_channel_sample(
    users: usize,
    tx: usize,
    rx: usize,
    snr_db: f64,
    power: f64,
    seed: u64,
    out: *mut *mut SemcomChannel,
) -> SemcomStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        if users == 0 || tx == 0 || rx == 0 {
            return Err(Fail::Arg("users, tx and rx must be at least 1".into()));
        }
        if !(power > 0.0) || !snr_db.is_finite() {
            return Err(Fail::Arg("power must be positive and snr_db finite".into()));
        }
        let var = noise_variance_from_snr(snr_db, power);
        let realization = sample_channel(users, tx, rx, var, &mut substream(seed, rng::CHANNEL, &[]));
        *out = Box::into_raw(Box::new(SemcomChannel { realization }));
        Ok(())
    })
}

/// Releases a channel. NULL is ignored.
///
/// # Safety
/// `channel` must come from this library and not be used afterwards.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn semcom_channel_free(channel: *mut SemcomChannel) {
    if !channel.is_null() {
        drop(unsafe { Box::from_raw(channel) });
    }
}

/// Copies the flattened channel state (length `2·K²·N_t·N_r`) into `buf`.
/// `written` receives the required length even when `cap` is too small.
///
/// # Safety
/// `buf` must hold `cap` doubles.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn semcom_channel_csi(
    channel: *const SemcomChannel,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> SemcomStatus {
    guard(|| {
        let ch = unsafe { non_null(channel, "channel") }?;
        let csi = ch.realization.flatten_csi();
        *unsafe { out_ptr(written, "written") }? = csi.len();
        if cap < csi.len() {
            return Err(Fail::Arg(format!("buffer holds {cap} values, need {}", csi.len())));
        }
        unsafe { slice_out(buf, cap, "buf") }?[..csi.len()].copy_from_slice(&csi);
        Ok(())
    })
}

/// Sends `batch` images per user through `model` over `channel` (shared by
/// every sample) and writes the reconstructions.
///
/// `images` and `out` hold `users × batch × image_len` doubles, user-major,
/// values in `[−1, 1]`. Noise comes from `seed`.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn semcom_model_transmit(
    model: *const SemcomModel,
    channel: *const SemcomChannel,
    images: *const f64,
    batch: usize,
    seed: u64,
    power: f64,
    out: *mut f64,
) -> SemcomStatus {
    guard(|| {
        let m = unsafe { non_null(model, "model") }?;
        let ch = unsafe { non_null(channel, "channel") }?;
        if batch == 0 {
            return Err(Fail::Arg("batch must be at least 1".into()));
        }
        let d = m.params.dims;
        let per_user = batch * d.image_len;
        let total = d.users * per_user;
        let input = unsafe { slice_arg(images, total, "images") }?;
        let output = unsafe { slice_out(out, total, "out") }?;
        let tensors = input
            .chunks(per_user)
            .map(|c| Tensor::matrix(batch, d.image_len, c.to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        let channels = vec![ch.realization.clone(); batch];
        let pass = PassOptions {
            power,
            ..PassOptions::default()
        };
        let rec = reconstruct(&m.params, &tensors, &channels, &pass, &mut substream(seed, rng::NOISE, &[]))?;
        for (dst, t) in output.chunks_mut(per_user).zip(&rec) {
            dst.copy_from_slice(t.data());
        }
        Ok(())
    })
}

/// Global-statistics SSIM of two images in `[−1, 1]`.
///
/// # Safety
/// `a` and `b` must hold `len` doubles.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn semcom_ssim(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> SemcomStatus {
    guard(|| {
        let a = unsafe { slice_arg(a, len, "a") }?;
        let b = unsafe { slice_arg(b, len, "b") }?;
        *unsafe { out_ptr(out, "out") }? = ssim(a, b, &SsimParams::default())?;
        Ok(())
    })
}
