//! C interface to `specklevar`.
//!
//! Stacks and maps are opaque heap handles owned by the caller and released
//! with `sv_stack_free` / `sv_map_free`. Every function returns an
//! [`SvStatus`]; on failure `sv_last_error` gives a message for the calling
//! thread. Results are written through out-pointers only on success.
//!
//! Panics never cross the boundary: they are reported as `SV_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use num_complex::Complex32;
use specklevar::analysis::{self, Polarity};
use specklevar::mcv::{self, McvKind, Normalization, PixelStats, Undefined};
use specklevar::polarimetry;
use specklevar::scan::{self, EstimationMode, ScanOptions};
use specklevar::simulator::{self, Scenario};
use specklevar::stack::{self, Samples, ScalarMap, Shape, SpeckleStack};
use specklevar::Error;

/// Opaque image stack.
pub struct SvStack(SpeckleStack);

/// Opaque 2-D map with per-pixel validity.
pub struct SvMap(ScalarMap);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Precondition = 5,
    /// The estimator has no value for this input (zero mean vector).
    Undefined = 6,
    Internal = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvKind {
    R = 0,
    Vv = 1,
    Vn = 2,
    Az = 3,
    Single = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvPolarity {
    /// High values indicate change.
    High = 0,
    /// Low values indicate permanent scatterers.
    Low = 1,
}

/// Estimation settings. `window` and `frame` are only read when `spatial` is
/// non-zero; `channel` only for `SV_KIND_SINGLE`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SvEstimator {
    pub kind: SvKind,
    pub channel: usize,
    pub spatial: i32,
    pub window: usize,
    pub frame: usize,
    pub unbiased: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(SvStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => SvStatus::Io,
            Error::Header { .. } | Error::NonFinite { .. } => SvStatus::Format,
            Error::Shape(_) | Error::Precondition(_) | Error::OutOfRange { .. } => SvStatus::Precondition,
            Error::Numeric(_) | Error::Image(_) => SvStatus::Internal,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SvStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(SvStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SvStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("panic: {msg}"));
            SvStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn kind_of(kind: SvKind, channel: usize) -> McvKind {
    match kind {
        SvKind::R => McvKind::R,
        SvKind::Vv => McvKind::VV,
        SvKind::Vn => McvKind::VN,
        SvKind::Az => McvKind::AZ,
        SvKind::Single => McvKind::Single(channel),
    }
}

impl SvEstimator {
    fn mode(&self) -> EstimationMode {
        if self.spatial != 0 {
            EstimationMode::Spatial {
                window: self.window,
                frame: self.frame,
            }
        } else {
            EstimationMode::Temporal
        }
    }

    fn options(&self) -> ScanOptions {
        ScanOptions {
            normalization: if self.unbiased != 0 {
                Normalization::Unbiased
            } else {
                Normalization::MaxLikelihood
            },
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread ("" after a success).
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn sv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

// Stacks ------------------------------------------------------------------

#[no_mangle]
pub unsafe extern "C" fn sv_stack_read(path: *const c_char, out: *mut *mut SvStack) -> SvStatus {
    guard(|| {
        let st = stack::read_stack(&path_arg(path)?)?;
        put(out, SvStack(st))
    })
}

#[no_mangle]
pub unsafe extern "C" fn sv_stack_write(st: *const SvStack, path: *const c_char) -> SvStatus {
    guard(|| {
        let st = borrow(st, "stack")?;
        Ok(stack::write_stack(&st.0, &path_arg(path)?)?)
    })
}

/// Copy `n·p·h·w` floats laid out `[t][c][y][x]` into a new real stack.
#[no_mangle]
pub unsafe extern "C" fn sv_stack_from_real(
    n_time: usize,
    n_chan: usize,
    height: usize,
    width: usize,
    data: *const f32,
    out: *mut *mut SvStack,
) -> SvStatus {
    guard(|| {
        let shape = Shape::new(n_time, n_chan, height, width);
        let d = slice_arg(data, shape.len(), "data")?;
        put(out, SvStack(SpeckleStack::real(shape, d.to_vec())?))
    })
}

/// Copy `2·n·p·h·w` floats of interleaved `(re, im)` pairs into a new
/// complex stack.
#[no_mangle]
pub unsafe extern "C" fn sv_stack_from_complex(
    n_time: usize,
    n_chan: usize,
    height: usize,
    width: usize,
    data: *const f32,
    out: *mut *mut SvStack,
) -> SvStatus {
    guard(|| {
        let shape = Shape::new(n_time, n_chan, height, width);
        let d = slice_arg(data, 2 * shape.len(), "data")?;
        let z = d.chunks_exact(2).map(|c| Complex32::new(c[0], c[1])).collect();
        put(out, SvStack(SpeckleStack::complex(shape, z)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn sv_stack_free(st: *mut SvStack) {
    if !st.is_null() {
        drop(Box::from_raw(st));
    }
}

/// Writes `[n_time, n_chan, height, width]` to `dims` and 1 to
/// `is_complex` for complex stacks (either may be null).
#[no_mangle]
pub unsafe extern "C" fn sv_stack_shape(st: *const SvStack, dims: *mut usize, is_complex: *mut i32) -> SvStatus {
    guard(|| {
        let st = &borrow(st, "stack")?.0;
        let s = st.shape();
        if !dims.is_null() {
            std::slice::from_raw_parts_mut(dims, 4).copy_from_slice(&[s.n_time, s.n_chan, s.height, s.width]);
        }
        if !is_complex.is_null() {
            *is_complex = matches!(st.samples(), Samples::Complex(_)) as i32;
        }
        Ok(())
    })
}

/// Copy samples out. `len` is the number of floats available at `buf`:
/// `n·p·h·w` for real stacks, twice that (interleaved) for complex ones.
#[no_mangle]
pub unsafe extern "C" fn sv_stack_data(st: *const SvStack, buf: *mut f32, len: usize) -> SvStatus {
    guard(|| {
        let st = &borrow(st, "stack")?.0;
        let flat: Vec<f32> = match st.samples() {
            Samples::Real(d) => d.clone(),
            Samples::Complex(d) => d.iter().flat_map(|z| [z.re, z.im]).collect(),
        };
        if len != flat.len() {
            return Err(invalid(format!("buffer holds {len} floats, stack has {}", flat.len())));
        }
        if buf.is_null() {
            return Err(null("buffer"));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(&flat);
        Ok(())
    })
}

/// Generate a stack from a JSON scenario.
#[no_mangle]
pub unsafe extern "C" fn sv_simulate_json(scenario: *const c_char, out: *mut *mut SvStack) -> SvStatus {
    guard(|| {
        if scenario.is_null() {
            return Err(null("scenario"));
        }
        let text = CStr::from_ptr(scenario).to_str().map_err(|_| invalid("scenario is not UTF-8"))?;
        let sc = Scenario::from_json(text).map_err(|e| invalid(e.to_string()))?;
        put(out, SvStack(simulator::simulate(&sc)?))
    })
}

macro_rules! stack_to_stack {
    ($name:ident, $f:expr) => {
        #[no_mangle]
        pub unsafe extern "C" fn $name(st: *const SvStack, out: *mut *mut SvStack) -> SvStatus {
            guard(|| {
                let st = borrow(st, "stack")?;
                put(out, SvStack($f(&st.0)?))
            })
        }
    };
}

stack_to_stack!(sv_amplitudes, polarimetry::amplitudes);
stack_to_stack!(sv_intensities, polarimetry::intensities);
stack_to_stack!(sv_to_stokes, polarimetry::to_stokes);

/// Average groups of `k` frames of a real stack.
#[no_mangle]
pub unsafe extern "C" fn sv_integrate_time(st: *const SvStack, k: usize, out: *mut *mut SvStack) -> SvStatus {
    guard(|| {
        let st = borrow(st, "stack")?;
        put(out, SvStack(st.0.integrate_time(k)?))
    })
}

// Maps --------------------------------------------------------------------

#[no_mangle]
pub unsafe extern "C" fn sv_compute_map(st: *const SvStack, est: SvEstimator, out: *mut *mut SvMap) -> SvStatus {
    guard(|| {
        let st = borrow(st, "stack")?;
        let map = scan::compute_map_with(&st.0, kind_of(est.kind, est.channel), est.mode(), est.options())?;
        put(out, SvMap(map))
    })
}

/// Activity map `1/γ²`. Saturated pixels stay valid in `out`; if
/// `saturated` is non-null it receives a 0/1 map of them.
#[no_mangle]
pub unsafe extern "C" fn sv_vmai_map(
    st: *const SvStack,
    est: SvEstimator,
    out: *mut *mut SvMap,
    saturated: *mut *mut SvMap,
) -> SvStatus {
    guard(|| {
        let st = borrow(st, "stack")?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let v = scan::compute_vmai_map_with(&st.0, kind_of(est.kind, est.channel), est.mode(), est.options())?;
        if !saturated.is_null() {
            put(saturated, SvMap(v.saturation_map()))?;
        }
        put(out, SvMap(v.map))
    })
}

#[no_mangle]
pub unsafe extern "C" fn sv_temporal_dop(st: *const SvStack, out: *mut *mut SvMap) -> SvStatus {
    guard(|| {
        let st = borrow(st, "stack")?;
        put(out, SvMap(polarimetry::temporal_dop(&st.0)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn sv_inverse_dop(dop: *const SvMap, out: *mut *mut SvMap) -> SvStatus {
    guard(|| {
        let dop = borrow(dop, "map")?;
        put(out, SvMap(polarimetry::inverse_dop(&dop.0)))
    })
}

#[no_mangle]
pub unsafe extern "C" fn sv_map_read(path: *const c_char, out: *mut *mut SvMap) -> SvStatus {
    guard(|| {
        let m = stack::read_map(&path_arg(path)?)?;
        put(out, SvMap(m))
    })
}

#[no_mangle]
pub unsafe extern "C" fn sv_map_write(map: *const SvMap, path: *const c_char) -> SvStatus {
    guard(|| {
        let m = borrow(map, "map")?;
        Ok(stack::write_map(&m.0, &path_arg(path)?)?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn sv_map_free(map: *mut SvMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

#[no_mangle]
pub unsafe extern "C" fn sv_map_dims(map: *const SvMap, height: *mut usize, width: *mut usize) -> SvStatus {
    guard(|| {
        let m = &borrow(map, "map")?.0;
        if height.is_null() || width.is_null() {
            return Err(null("output pointer"));
        }
        *height = m.height;
        *width = m.width;
        Ok(())
    })
}

/// Copy the `height·width` row-major values. Undefined pixels hold -1.
#[no_mangle]
pub unsafe extern "C" fn sv_map_values(map: *const SvMap, buf: *mut f64, len: usize) -> SvStatus {
    guard(|| {
        let m = &borrow(map, "map")?.0;
        if len != m.len() {
            return Err(invalid(format!("buffer holds {len} values, map has {}", m.len())));
        }
        if buf.is_null() {
            return Err(null("buffer"));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(&m.values);
        Ok(())
    })
}

/// Copy the validity flags as 0/1 bytes.
#[no_mangle]
pub unsafe extern "C" fn sv_map_valid(map: *const SvMap, buf: *mut u8, len: usize) -> SvStatus {
    guard(|| {
        let m = &borrow(map, "map")?.0;
        if len != m.len() {
            return Err(invalid(format!("buffer holds {len} flags, map has {}", m.len())));
        }
        if buf.is_null() {
            return Err(null("buffer"));
        }
        for (d, v) in std::slice::from_raw_parts_mut(buf, len).iter_mut().zip(&m.valid) {
            *d = *v as u8;
        }
        Ok(())
    })
}

// Analysis ----------------------------------------------------------------

#[no_mangle]
pub unsafe extern "C" fn sv_pearson(a: *const SvMap, b: *const SvMap, out: *mut f64) -> SvStatus {
    guard(|| {
        let (a, b) = (borrow(a, "map a")?, borrow(b, "map b")?);
        let r = analysis::pearson(&a.0, &b.0)?;
        *out.as_mut().ok_or_else(|| null("output pointer"))? = r;
        Ok(())
    })
}

/// Area under the ROC curve of `map` against a 0/1 `truth` map.
#[no_mangle]
pub unsafe extern "C" fn sv_roc_auc(
    map: *const SvMap,
    truth: *const SvMap,
    polarity: SvPolarity,
    out: *mut f64,
) -> SvStatus {
    guard(|| {
        let (m, t) = (borrow(map, "map")?, borrow(truth, "truth")?);
        let pol = match polarity {
            SvPolarity::High => Polarity::HighIsChange,
            SvPolarity::Low => Polarity::LowIsPs,
        };
        let auc = analysis::roc(&m.0, &t.0, pol)?.auc;
        *out.as_mut().ok_or_else(|| null("output pointer"))? = auc;
        Ok(())
    })
}

/// Coefficient of variation from a mean vector `mu[p]` and a row-major
/// covariance `cov[p·p]`. Returns `SV_STATUS_UNDEFINED` where the estimator
/// has no value.
#[no_mangle]
pub unsafe extern "C" fn sv_mcv(
    mu: *const f64,
    cov: *const f64,
    p: usize,
    kind: SvKind,
    channel: usize,
    out: *mut f64,
) -> SvStatus {
    guard(|| {
        if p == 0 {
            return Err(invalid("p must be positive"));
        }
        let mu = slice_arg(mu, p, "mu")?.to_vec();
        let cov = slice_arg(cov, p * p, "cov")?.to_vec();
        let stats = PixelStats::new(mu, cov).map_err(|e| invalid(e.to_string()))?;
        let kind = kind_of(kind, channel);
        if let McvKind::Single(c) = kind {
            if c >= p {
                return Err(invalid(format!("channel {c} out of range for p = {p}")));
            }
        }
        let g = mcv::mcv(&stats, kind).map_err(|u: Undefined| Fail(SvStatus::Undefined, u.to_string()))?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = g;
        Ok(())
    })
}
