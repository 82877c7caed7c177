//! C interface to `cramer-gmm`.
//!
//! Mixtures and direction sets are passed as opaque handles created by the
//! `*_new` / `*_load` functions and released with the matching `*_free`.
//! Every fallible function returns a [`CgStatus`]; on failure a description
//! is kept per thread and can be copied out with [`cg_last_error_message`].
//! Output parameters are written only on success. Panics never cross the
//! boundary: they are reported as [`CgStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cramer_gmm::gmm_nd::{DirectionSet, GmmN};
use cramer_gmm::nalgebra::{DMatrix, DVector};
use cramer_gmm::{io, kernel, Error, Gmm1};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonFinite = 4,
    Io = 5,
    Parse = 6,
    Panic = 7,
}

/// Univariate Gaussian mixture.
pub struct CgGmm1(Gmm1);

/// Multivariate Gaussian mixture with `Sigma_j = S_j^T S_j`.
pub struct CgGmmN(GmmN);

/// Unit directions with the weight that turns a per-direction sum into the
/// sliced distance.
pub struct CgDirections(DirectionSet);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> CgStatus {
    match err {
        Error::DimensionMismatch { .. } | Error::ShapeMismatch(_) => CgStatus::DimensionMismatch,
        Error::NonFinite(_) => CgStatus::NonFinite,
        Error::Io(_) => CgStatus::Io,
        Error::MalformedModel(_) | Error::MalformedPoints { .. } => CgStatus::Parse,
        _ => CgStatus::InvalidArgument,
    }
}

fn guard<F>(f: F) -> CgStatus
where
    F: FnOnce() -> Result<(), CgStatus>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CgStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic");
            CgStatus::Panic
        }
    }
}

fn fail(err: Error) -> CgStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn null(name: &str) -> CgStatus {
    set_error(format!("{name} is null"));
    CgStatus::NullPointer
}

unsafe fn slice<'a>(p: *const f64, n: usize, name: &str) -> Result<&'a [f64], CgStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a>(p: *mut f64, n: usize, name: &str) -> Result<&'a mut [f64], CgStatus> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, CgStatus> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, CgStatus> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p).to_str().map(Path::new).map_err(|_| {
        set_error("path is not valid UTF-8");
        CgStatus::InvalidArgument
    })
}

fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), CgStatus> {
    if out.is_null() {
        return Err(null("out"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len` bytes) and returns the full message length
/// plus one. Passing a null `buf` only queries the length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cg_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Standard normal CDF.
#[no_mangle]
pub extern "C" fn cg_phi_cdf(x: f64) -> f64 {
    kernel::phi_cdf(x)
}

/// Standard normal density.
#[no_mangle]
pub extern "C" fn cg_phi_pdf(x: f64) -> f64 {
    kernel::phi_pdf(x)
}

/// `U(x) = x Phi(x) + phi(x)`.
#[no_mangle]
pub extern "C" fn cg_u(x: f64) -> f64 {
    kernel::u_fn(x)
}

/// `V(x) = (U(x) + U(-x)) / 2`.
#[no_mangle]
pub extern "C" fn cg_v(x: f64) -> f64 {
    kernel::v_fn(x)
}

/// Builds a univariate mixture from `n` weights, means and standard
/// deviations. Weights must sum to one; deviations may be zero.
///
/// # Safety
/// The three arrays must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cg_gmm1_new(
    weights: *const f64,
    means: *const f64,
    stds: *const f64,
    n: usize,
    out: *mut *mut CgGmm1,
) -> CgStatus {
    guard(|| {
        let w = slice(weights, n, "weights")?;
        let m = slice(means, n, "means")?;
        let s = slice(stds, n, "stds")?;
        let g = Gmm1::new(w.to_vec(), m.to_vec(), s.to_vec()).map_err(fail)?;
        write_out(out, CgGmm1(g))
    })
}

/// Releases a mixture. Null is ignored.
///
/// # Safety
/// `g` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cg_gmm1_free(g: *mut CgGmm1) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Number of components, or 0 for null.
///
/// # Safety
/// `g` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cg_gmm1_len(g: *const CgGmm1) -> usize {
    g.as_ref().map_or(0, |g| g.0.len())
}

/// Squared Cramér 2-distance between two univariate mixtures.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cg_c2_squared(
    a: *const CgGmm1,
    b: *const CgGmm1,
    out: *mut f64,
) -> CgStatus {
    guard(|| {
        let (a, b) = (handle(a, "a")?, handle(b, "b")?);
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = cramer_gmm::c2_squared(&a.0, &b.0);
        Ok(())
    })
}

/// Distance and its gradient with respect to the parameters of `a`. Each
/// gradient array must hold `n = cg_gmm1_len(a)` values.
///
/// # Safety
/// Handles must be live; output arrays must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn cg_c2_squared_grad(
    a: *const CgGmm1,
    b: *const CgGmm1,
    n: usize,
    loss: *mut f64,
    d_weights: *mut f64,
    d_means: *mut f64,
    d_stds: *mut f64,
) -> CgStatus {
    guard(|| {
        let (a, b) = (handle(a, "a")?, handle(b, "b")?);
        if n != a.0.len() {
            return Err(fail(Error::DimensionMismatch {
                expected: a.0.len(),
                got: n,
            }));
        }
        let loss = loss.as_mut().ok_or_else(|| null("loss"))?;
        let dw = slice_mut(d_weights, n, "d_weights")?;
        let dm = slice_mut(d_means, n, "d_means")?;
        let ds = slice_mut(d_stds, n, "d_stds")?;
        let (l, g) = cramer_gmm::c2_squared_grad(&a.0, &b.0);
        *loss = l;
        dw.copy_from_slice(&g.d_weights);
        dm.copy_from_slice(&g.d_means);
        ds.copy_from_slice(&g.d_stds);
        Ok(())
    })
}

/// Builds a multivariate mixture. `means` holds `n * dim` values (component
/// major); `scales` holds `n` row-major `dim x dim` matrices `S_j`.
///
/// # Safety
/// Arrays must have the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cg_gmmn_new(
    dim: usize,
    n: usize,
    weights: *const f64,
    means: *const f64,
    scales: *const f64,
    out: *mut *mut CgGmmN,
) -> CgStatus {
    guard(|| {
        let w = slice(weights, n, "weights")?;
        let m = slice(means, n * dim, "means")?;
        let s = slice(scales, n * dim * dim, "scales")?;
        let means = m.chunks(dim.max(1)).map(DVector::from_column_slice).collect();
        let scales = s
            .chunks(dim * dim)
            .map(|c| DMatrix::from_row_slice(dim, dim, c))
            .collect();
        let g = GmmN::new(w.to_vec(), means, scales).map_err(fail)?;
        write_out(out, CgGmmN(g))
    })
}

/// Loads a JSON model file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cg_gmmn_load(path: *const c_char, out: *mut *mut CgGmmN) -> CgStatus {
    guard(|| {
        let g = io::load_model(path_arg(path)?).map_err(fail)?;
        write_out(out, CgGmmN(g))
    })
}

/// Writes a JSON model file.
///
/// # Safety
/// `g` must be live; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cg_gmmn_save(g: *const CgGmmN, path: *const c_char) -> CgStatus {
    guard(|| {
        let g = handle(g, "g")?;
        io::save_model(path_arg(path)?, &g.0).map_err(fail)
    })
}

/// Releases a mixture. Null is ignored.
///
/// # Safety
/// `g` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cg_gmmn_free(g: *mut CgGmmN) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Dimension, or 0 for null.
///
/// # Safety
/// `g` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cg_gmmn_dim(g: *const CgGmmN) -> usize {
    g.as_ref().map_or(0, |g| g.0.dim())
}

/// Number of components, or 0 for null.
///
/// # Safety
/// `g` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cg_gmmn_len(g: *const CgGmmN) -> usize {
    g.as_ref().map_or(0, |g| g.0.len())
}

/// `t` independent uniform directions on the unit sphere in `dim >= 2`
/// dimensions, seeded.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cg_directions_uniform(
    dim: usize,
    t: usize,
    seed: u64,
    out: *mut *mut CgDirections,
) -> CgStatus {
    guard(|| {
        let d = DirectionSet::uniform(dim, t, seed).map_err(fail)?;
        write_out(out, CgDirections(d))
    })
}

/// `t` evenly spaced planar directions starting at `offset_angle` radians.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cg_directions_equidistant_2d(
    t: usize,
    offset_angle: f64,
    out: *mut *mut CgDirections,
) -> CgStatus {
    guard(|| {
        let d = DirectionSet::equidistant_2d(t, offset_angle).map_err(fail)?;
        write_out(out, CgDirections(d))
    })
}

/// Releases a direction set. Null is ignored.
///
/// # Safety
/// `d` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cg_directions_free(d: *mut CgDirections) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Number of directions, or 0 for null.
///
/// # Safety
/// `d` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cg_directions_len(d: *const CgDirections) -> usize {
    d.as_ref().map_or(0, |d| d.0.len())
}

/// Sliced squared Cramér 2-distance estimate over `dirs`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cg_sliced_c2_squared(
    a: *const CgGmmN,
    b: *const CgGmmN,
    dirs: *const CgDirections,
    out: *mut f64,
) -> CgStatus {
    guard(|| {
        let (a, b, d) = (handle(a, "a")?, handle(b, "b")?, handle(dirs, "dirs")?);
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = cramer_gmm::sliced_c2_squared(&a.0, &b.0, &d.0).map_err(fail)?;
        Ok(())
    })
}

/// Sliced distance and its gradient with respect to `a`. With `n` components
/// and dimension `dim`, `d_weights` holds `n` values, `d_means` `n * dim` and
/// `d_scales` `n * dim * dim` (row-major per component).
///
/// # Safety
/// Handles must be live; output arrays must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn cg_sliced_c2_squared_grad(
    a: *const CgGmmN,
    b: *const CgGmmN,
    dirs: *const CgDirections,
    loss: *mut f64,
    d_weights: *mut f64,
    d_means: *mut f64,
    d_scales: *mut f64,
) -> CgStatus {
    guard(|| {
        let (a, b, d) = (handle(a, "a")?, handle(b, "b")?, handle(dirs, "dirs")?);
        let (n, dim) = (a.0.len(), a.0.dim());
        let loss = loss.as_mut().ok_or_else(|| null("loss"))?;
        let dw = slice_mut(d_weights, n, "d_weights")?;
        let dm = slice_mut(d_means, n * dim, "d_means")?;
        let ds = slice_mut(d_scales, n * dim * dim, "d_scales")?;
        let (l, g) = cramer_gmm::sliced_c2_squared_grad(&a.0, &b.0, &d.0).map_err(fail)?;
        *loss = l;
        dw.copy_from_slice(&g.d_weights);
        for (j, m) in g.d_means.iter().enumerate() {
            dm[j * dim..(j + 1) * dim].copy_from_slice(m.as_slice());
        }
        for (j, s) in g.d_scales.iter().enumerate() {
            for r in 0..dim {
                for c in 0..dim {
                    ds[j * dim * dim + r * dim + c] = s[(r, c)];
                }
            }
        }
        Ok(())
    })
}
