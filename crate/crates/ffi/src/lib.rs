//! C ABI over the fraclab measure toolkit.
//!
//! Measures are opaque `FlMeasure` handles created by the `fl_measure_*`
//! constructors and released with `fl_measure_free`. Every fallible call
//! returns an `FlStatus`; on failure `fl_last_error` describes the problem.
//! Results are written through out-pointers only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use fraclab::energy::{energy_fourier_side, energy_spatial, EnergyOptions};
use fraclab::fourier::{fourier_transform, spherical_average};
use fraclab::ifs::{box_dimension, moran_dimension, natural_measure_default, stochastic_sample, IfsFamily};
use fraclab::measure::io::{self, MeasureFormat};
use fraclab::measure::{builtin, frostman_exponent, FrostmanOptions};
use fraclab::{DiscreteMeasure, LabError};

/// Opaque measure handle.
pub struct FlMeasure {
    inner: DiscreteMeasure,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidMeasure = 3,
    ResolutionExceeded = 4,
    Empty = 5,
    DimensionMismatch = 6,
    CapExceeded = 7,
    Uncalibrated = 8,
    InsufficientScales = 9,
    Numerical = 10,
    Format = 11,
    Io = 12,
    Panic = 13,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &LabError) -> FlStatus {
    match e {
        LabError::InvalidMeasure(_) => FlStatus::InvalidMeasure,
        LabError::InvalidArgument(_) => FlStatus::InvalidArgument,
        LabError::ResolutionExceeded { .. } => FlStatus::ResolutionExceeded,
        LabError::EmptyRestriction | LabError::EmptySlice => FlStatus::Empty,
        LabError::DimensionMismatch { .. } => FlStatus::DimensionMismatch,
        LabError::CapExceeded { .. } => FlStatus::CapExceeded,
        LabError::Uncalibrated => FlStatus::Uncalibrated,
        LabError::InsufficientScales { .. } => FlStatus::InsufficientScales,
        LabError::Numerical(_) => FlStatus::Numerical,
        LabError::Format(_) => FlStatus::Format,
        LabError::Io(_) => FlStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Lab(LabError),
}

impl From<LabError> for Fail {
    fn from(e: LabError) -> Self {
        Fail::Lab(e)
    }
}

/// Runs `f`, converting errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FlStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            FlStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg);
            FlStatus::InvalidArgument
        }
        Ok(Err(Fail::Lab(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            FlStatus::Panic
        }
    }
}

unsafe fn measure<'a>(m: *const FlMeasure) -> Result<&'a DiscreteMeasure, Fail> {
    m.as_ref().map(|h| &h.inner).ok_or(Fail::Null("measure"))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Arg(format!("{what} is not valid UTF-8")))
}

fn emit(handle: *mut *mut FlMeasure, mu: DiscreteMeasure) {
    // SAFETY: callers check `handle` for null before building the measure.
    unsafe { *handle = Box::into_raw(Box::new(FlMeasure { inner: mu })) };
}

fn family(name: &str, ratio: f64, dim: usize) -> Result<IfsFamily, Fail> {
    Ok(match name {
        "cantor" => IfsFamily::Cantor,
        "cantor-dust" => IfsFamily::CantorDust,
        "four-corner" => IfsFamily::FourCorner { ratio },
        "sierpinski" => IfsFamily::Sierpinski,
        "uniform-cube" => IfsFamily::UniformCube { dim },
        other => return Err(Fail::Arg(format!("unknown IFS family '{other}'"))),
    })
}

/// Message for the last failed call on this thread, or NULL. The pointer stays
/// valid until the next fraclab call on the same thread.
#[no_mangle]
pub extern "C" fn fl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a measure from `n` points of dimension `dim` (row-major in `points`)
/// and `n` positive weights.
///
/// # Safety
/// `points` must hold `n * dim` doubles, `weights` must hold `n` doubles and
/// `handle` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_measure_from_points(
    dim: usize,
    points: *const f64,
    weights: *const f64,
    n: usize,
    gen_scale: f64,
    handle: *mut *mut FlMeasure,
) -> FlStatus {
    guard(|| {
        out(handle, "handle")?;
        let pts = slice(points, n.checked_mul(dim).ok_or(Fail::Arg("size overflow".into()))?, "points")?;
        let w = slice(weights, n, "weights")?;
        emit(handle, DiscreteMeasure::new(dim, pts.to_vec(), w.to_vec(), gen_scale)?);
        Ok(())
    })
}

/// Built-in measures: "unit-interval" and "unit-square" (midpoint grids with
/// `n` points per side), "segment", "circle", "uniform-random", "gaussian"
/// (σ = 0.2) and "ball" (radius 0.5). `dim` is used by the random families.
///
/// # Safety
/// `name` must be a NUL-terminated string and `handle` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_measure_builtin(
    name: *const c_char,
    dim: usize,
    n: usize,
    seed: u64,
    handle: *mut *mut FlMeasure,
) -> FlStatus {
    guard(|| {
        out(handle, "handle")?;
        let mu = match string(name, "name")? {
            "unit-interval" => builtin::uniform_grid(1, n)?,
            "unit-square" => builtin::uniform_grid(2, n)?,
            "segment" => builtin::segment(n)?,
            "circle" => builtin::circle(n)?,
            "uniform-random" => builtin::uniform_random(dim, n, seed)?,
            "gaussian" => builtin::gaussian_cloud(dim, n, 0.2, seed)?,
            "ball" => builtin::uniform_ball(dim, n, 0.5, seed)?,
            other => return Err(Fail::Arg(format!("unknown builtin measure '{other}'"))),
        };
        emit(handle, mu);
        Ok(())
    })
}

/// Natural measure of a built-in IFS ("cantor", "cantor-dust", "four-corner",
/// "sierpinski", "uniform-cube") at `depth`. `ratio` is read by four-corner
/// and `dim` by uniform-cube.
///
/// # Safety
/// `family_name` must be a NUL-terminated string and `handle` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_measure_ifs(
    family_name: *const c_char,
    ratio: f64,
    dim: usize,
    depth: u32,
    handle: *mut *mut FlMeasure,
) -> FlStatus {
    guard(|| {
        out(handle, "handle")?;
        let spec = family(string(family_name, "family")?, ratio, dim)?.spec()?;
        emit(handle, natural_measure_default(&spec, depth)?);
        Ok(())
    })
}

/// Chaos-game sample of a built-in IFS.
///
/// # Safety
/// As for [`fl_measure_ifs`].
#[no_mangle]
pub unsafe extern "C" fn fl_measure_chaos(
    family_name: *const c_char,
    ratio: f64,
    dim: usize,
    n_points: usize,
    seed: u64,
    handle: *mut *mut FlMeasure,
) -> FlStatus {
    guard(|| {
        out(handle, "handle")?;
        let spec = family(string(family_name, "family")?, ratio, dim)?.spec()?;
        emit(handle, stochastic_sample(&spec, n_points, 100, seed)?);
        Ok(())
    })
}

/// Reads a measure file in either format.
///
/// # Safety
/// `path` must be a NUL-terminated string and `handle` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_measure_load(path: *const c_char, handle: *mut *mut FlMeasure) -> FlStatus {
    guard(|| {
        out(handle, "handle")?;
        emit(handle, io::load(Path::new(string(path, "path")?))?);
        Ok(())
    })
}

/// Writes a measure; `binary` selects the binary format over text.
///
/// # Safety
/// `m` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fl_measure_save(m: *const FlMeasure, path: *const c_char, binary: bool) -> FlStatus {
    guard(|| {
        let format = if binary { MeasureFormat::Binary } else { MeasureFormat::Text };
        io::save(measure(m)?, Path::new(string(path, "path")?), format)?;
        Ok(())
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `m` must be NULL or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn fl_measure_free(m: *mut FlMeasure) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of points; 0 for NULL.
///
/// # Safety
/// `m` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_measure_len(m: *const FlMeasure) -> usize {
    m.as_ref().map_or(0, |h| h.inner.len())
}

/// Ambient dimension; 0 for NULL.
///
/// # Safety
/// `m` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_measure_dim(m: *const FlMeasure) -> usize {
    m.as_ref().map_or(0, |h| h.inner.dim())
}

/// Total mass; NaN for NULL.
///
/// # Safety
/// `m` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_measure_total_mass(m: *const FlMeasure) -> f64 {
    m.as_ref().map_or(f64::NAN, |h| h.inner.total_mass())
}

/// Generation scale; NaN for NULL.
///
/// # Safety
/// `m` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_measure_gen_scale(m: *const FlMeasure) -> f64 {
    m.as_ref().map_or(f64::NAN, |h| h.inner.gen_scale())
}

/// Copies the coordinates (len * dim doubles) and weights (len doubles).
/// Either output may be NULL to skip it.
///
/// # Safety
/// Non-NULL outputs must have room for the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn fl_measure_copy(m: *const FlMeasure, points: *mut f64, weights: *mut f64) -> FlStatus {
    guard(|| {
        let mu = measure(m)?;
        if !points.is_null() {
            ptr::copy_nonoverlapping(mu.points().as_ptr(), points, mu.points().len());
        }
        if !weights.is_null() {
            ptr::copy_nonoverlapping(mu.weights().as_ptr(), weights, mu.len());
        }
        Ok(())
    })
}

/// μ(B(x, r)) for a point `x` of the measure's dimension.
///
/// # Safety
/// `x` must hold `dim` doubles and `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_ball_mass(m: *const FlMeasure, x: *const f64, r: f64, result: *mut f64) -> FlStatus {
    guard(|| {
        let mu = measure(m)?;
        let res = out(result, "result")?;
        let x = slice(x, mu.dim(), "x")?;
        if r.is_nan() || r < mu.gen_scale() {
            return Err(LabError::ResolutionExceeded {
                requested: r,
                gen_scale: mu.gen_scale(),
            }
            .into());
        }
        *res = mu.ball_mass(x, r);
        Ok(())
    })
}

/// Box-counting dimension over dyadic scales in [delta_min, delta_max].
///
/// # Safety
/// `m` must be a live handle; `value` and `std_error` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_box_dimension(
    m: *const FlMeasure,
    delta_min: f64,
    delta_max: f64,
    value: *mut f64,
    std_error: *mut f64,
) -> FlStatus {
    guard(|| {
        let est = box_dimension(measure(m)?, delta_min, delta_max)?;
        *out(value, "value")? = est.value;
        *out(std_error, "std_error")? = est.stderr;
        Ok(())
    })
}

/// Frostman exponent and constant from ball masses at `n_centers` sampled
/// centres on dyadic radii in [r_min, r_max].
///
/// # Safety
/// `m` must be a live handle; `exponent` and `constant` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_frostman_exponent(
    m: *const FlMeasure,
    r_min: f64,
    r_max: f64,
    n_centers: usize,
    seed: u64,
    exponent: *mut f64,
    constant: *mut f64,
) -> FlStatus {
    guard(|| {
        let mut opts = FrostmanOptions::new(r_min, r_max, n_centers);
        opts.seed = seed;
        let rep = frostman_exponent(measure(m)?, &opts)?;
        *out(exponent, "exponent")? = rep.exponent;
        *out(constant, "constant")? = rep.constant;
        Ok(())
    })
}

/// Riesz s-energy with pair distances clamped below `mollify_scale`.
///
/// # Safety
/// `m` must be a live handle and `result` writable.
#[no_mangle]
pub unsafe extern "C" fn fl_energy_spatial(m: *const FlMeasure, s: f64, mollify_scale: f64, result: *mut f64) -> FlStatus {
    guard(|| {
        *out(result, "result")? = energy_spatial(measure(m)?, &EnergyOptions::new(s, mollify_scale))?;
        Ok(())
    })
}

/// Frequency-side energy without the self-interaction term, using the
/// calibrated constant for the measure's dimension.
///
/// # Safety
/// `m` must be a live handle and `result` writable.
#[no_mangle]
pub unsafe extern "C" fn fl_energy_fourier(m: *const FlMeasure, s: f64, mollify_scale: f64, result: *mut f64) -> FlStatus {
    guard(|| {
        let mu = measure(m)?;
        let opts = EnergyOptions::new(s, mollify_scale).calibrated(mu.dim())?;
        *out(result, "result")? = energy_fourier_side(mu, &opts)?.off_diagonal;
        Ok(())
    })
}

/// μ̂(ξ) = Σ w e^{-2πi x·ξ}.
///
/// # Safety
/// `xi` must hold `dim` doubles; `re` and `im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_fourier_transform(m: *const FlMeasure, xi: *const f64, re: *mut f64, im: *mut f64) -> FlStatus {
    guard(|| {
        let mu = measure(m)?;
        let z = fourier_transform(mu, slice(xi, mu.dim(), "xi")?);
        *out(re, "re")? = z.re;
        *out(im, "im")? = z.im;
        Ok(())
    })
}

/// Mean of |μ̂(rω)|² over `n_directions` unit vectors ω.
///
/// # Safety
/// `m` must be a live handle and `result` writable.
#[no_mangle]
pub unsafe extern "C" fn fl_spherical_average(m: *const FlMeasure, r: f64, n_directions: usize, result: *mut f64) -> FlStatus {
    guard(|| {
        *out(result, "result")? = spherical_average(measure(m)?, r, n_directions)?.value;
        Ok(())
    })
}

/// Similarity dimension of a built-in IFS.
///
/// # Safety
/// `family_name` must be a NUL-terminated string and `result` writable.
#[no_mangle]
pub unsafe extern "C" fn fl_moran_dimension(family_name: *const c_char, ratio: f64, dim: usize, result: *mut f64) -> FlStatus {
    guard(|| {
        let res = out(result, "result")?;
        *res = moran_dimension(&family(string(family_name, "family")?, ratio, dim)?.spec()?);
        Ok(())
    })
}
