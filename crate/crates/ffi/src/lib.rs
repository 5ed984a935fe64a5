//! C ABI over the dspgan library.
//!
//! Every function returns a [`DspganStatus`]. Results come back through out
//! pointers; handles are opaque and released with their `_free` function.
//! After a failure, `dspgan_last_error` describes it for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use dspgan::excitation::sine_excitation;
use dspgan::signal::{mel_mcd, resample, FrameParams, MelAnalyzer, Waveform, SAMPLE_RATE};
use dspgan::train::{copy_synth, F0Source, VocoderSet};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DspganStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Model = 4,
    Signal = 5,
    Panic = 6,
}

/// Trained generator, DSP vocoder and optional pitch predictor.
pub struct DspganVocoder {
    models: VocoderSet,
}

/// Owned array of doubles returned by the library.
pub struct DspganBuffer {
    data: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(DspganStatus, String);

impl From<dspgan::Error> for Failure {
    fn from(e: dspgan::Error) -> Self {
        use dspgan::Error as E;
        let status = match e {
            E::Io(_) | E::Missing(_) | E::Truncated(_) | E::Format(_) => DspganStatus::Io,
            E::Checkpoint(_) | E::Config(_) | E::NonFinite(_) | E::NonFiniteGradient(_) => {
                DspganStatus::Model
            }
            E::InvalidF0(_) | E::Hyperparameter { .. } => DspganStatus::InvalidArgument,
            _ => DspganStatus::Signal,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(DspganStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DspganStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DspganStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DspganStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure(
            DspganStatus::NullPointer,
            format!("{name} is null"),
        ));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{name} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(
            DspganStatus::NullPointer,
            format!("{name} is null"),
        ));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(DspganStatus::NullPointer, format!("{name} is null")))
}

fn waveform(samples: &[f64], sample_rate: u32) -> Result<Waveform, Failure> {
    if sample_rate == 0 {
        return Err(invalid("sample_rate must be positive"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(invalid("samples must be finite"));
    }
    let w = Waveform::new(samples.to_vec(), sample_rate);
    Ok(if sample_rate == SAMPLE_RATE {
        w
    } else {
        resample(&w, SAMPLE_RATE)?
    })
}

fn boxed(data: Vec<f64>) -> *mut DspganBuffer {
    Box::into_raw(Box::new(DspganBuffer { data }))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dspgan_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread; empty if none. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dspgan_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a generator and DSP vocoder checkpoint. `pitch_path` may be null.
///
/// # Safety
/// Paths must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dspgan_vocoder_load(
    generator_path: *const c_char,
    dsp_path: *const c_char,
    pitch_path: *const c_char,
    out: *mut *mut DspganVocoder,
) -> DspganStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let generator = path_arg(generator_path, "generator_path")?;
        let dsp = path_arg(dsp_path, "dsp_path")?;
        let pitch = if pitch_path.is_null() {
            None
        } else {
            Some(path_arg(pitch_path, "pitch_path")?)
        };
        let models = VocoderSet::load(&generator, &dsp, pitch.as_deref())?;
        *out = Box::into_raw(Box::new(DspganVocoder { models }));
        Ok(())
    })
}

/// # Safety
/// `vocoder` must be null or come from `dspgan_vocoder_load`, freed once.
#[no_mangle]
pub unsafe extern "C" fn dspgan_vocoder_free(vocoder: *mut DspganVocoder) {
    if !vocoder.is_null() {
        drop(Box::from_raw(vocoder));
    }
}

/// Copy synthesis of `samples` through the GAN path at 24 kHz. f0 comes
/// from the pitch predictor when one was loaded, else from the reference
/// tracker. Either MCD pointer may be null.
///
/// # Safety
/// `samples` must hold `len` doubles; out pointers must be writable or null
/// where allowed.
#[no_mangle]
pub unsafe extern "C" fn dspgan_copy_synth(
    vocoder: *const DspganVocoder,
    samples: *const f64,
    len: usize,
    sample_rate: u32,
    seed: u64,
    out: *mut *mut DspganBuffer,
    mcd_gan_db: *mut f64,
    mcd_dsp_db: *mut f64,
) -> DspganStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let vocoder = vocoder
            .as_ref()
            .ok_or_else(|| Failure(DspganStatus::NullPointer, "vocoder is null".into()))?;
        let input = waveform(slice_arg(samples, len, "samples")?, sample_rate)?;
        let source = if vocoder.models.pitch.is_some() {
            F0Source::Predictor
        } else {
            F0Source::Reference
        };
        let c = copy_synth(&input, &vocoder.models, &source, seed)?;
        if let Some(m) = mcd_gan_db.as_mut() {
            *m = c.mcd_gan;
        }
        if let Some(m) = mcd_dsp_db.as_mut() {
            *m = c.mcd_dsp;
        }
        *out = boxed(c.gan.samples);
        Ok(())
    })
}

/// Log-mel spectrogram, frame-major (`frames × n_mels`).
///
/// # Safety
/// `samples` must hold `len` doubles; `out` and `n_mels` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dspgan_log_mel(
    samples: *const f64,
    len: usize,
    sample_rate: u32,
    out: *mut *mut DspganBuffer,
    n_mels: *mut usize,
) -> DspganStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let n_mels = out_arg(n_mels, "n_mels")?;
        let audio = waveform(slice_arg(samples, len, "samples")?, sample_rate)?;
        let mel = MelAnalyzer::new(&FrameParams::default())?.log_mel(&audio)?;
        *n_mels = mel.n_mels;
        *out = boxed(mel.values);
        Ok(())
    })
}

/// Mel cepstral distortion in dB between two signals at one rate.
///
/// # Safety
/// `a` and `b` must hold `a_len` and `b_len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dspgan_mcd(
    a: *const f64,
    a_len: usize,
    b: *const f64,
    b_len: usize,
    sample_rate: u32,
    out: *mut f64,
) -> DspganStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let analyzer = MelAnalyzer::new(&FrameParams::default())?;
        let ma = analyzer.log_mel(&waveform(slice_arg(a, a_len, "a")?, sample_rate)?)?;
        let mb = analyzer.log_mel(&waveform(slice_arg(b, b_len, "b")?, sample_rate)?)?;
        *out = mel_mcd(&ma, &mb)?;
        Ok(())
    })
}

/// Harmonic sine excitation for a per-sample f0 track (0 = unvoiced).
///
/// # Safety
/// `f0` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dspgan_sine_excitation(
    f0: *const f64,
    len: usize,
    harmonics: usize,
    sample_rate: f64,
    out: *mut *mut DspganBuffer,
) -> DspganStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = std::ptr::null_mut();
        if !(sample_rate > 0.0) {
            return Err(invalid("sample_rate must be positive"));
        }
        let e = sine_excitation(slice_arg(f0, len, "f0")?, harmonics, sample_rate)?;
        *out = boxed(e.samples);
        Ok(())
    })
}

/// Number of doubles in `buffer`; 0 for null.
///
/// # Safety
/// `buffer` must be null or a live buffer.
#[no_mangle]
pub unsafe extern "C" fn dspgan_buffer_len(buffer: *const DspganBuffer) -> usize {
    buffer.as_ref().map_or(0, |b| b.data.len())
}

/// Pointer to the first double, valid until the buffer is freed; null for
/// null.
///
/// # Safety
/// `buffer` must be null or a live buffer.
#[no_mangle]
pub unsafe extern "C" fn dspgan_buffer_data(buffer: *const DspganBuffer) -> *const f64 {
    buffer
        .as_ref()
        .map_or(std::ptr::null(), |b| b.data.as_ptr())
}

/// # Safety
/// `buffer` must be null or come from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn dspgan_buffer_free(buffer: *mut DspganBuffer) {
    if !buffer.is_null() {
        drop(Box::from_raw(buffer));
    }
}
