//! C ABI over the beltscan pipeline.
//!
//! Objects cross the boundary as opaque handles created by `*_load` or
//! `bs_reconstruct` and released with the matching `*_free`. Every fallible
//! call returns a `BsStatus`; on failure `bs_last_error` describes the cause
//! until the next call on the same thread. Buffers are caller-owned and sized
//! from the matching query function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use beltscan::calibration::GradientRegressor;
use beltscan::evaluation::icp_align;
use beltscan::gbf::Grid;
use beltscan::markers::{match_displacement, DetectorConfig, MarkerObservation, MatchConfig};
use beltscan::reconstruction::{poisson_integrate, reconstruct_scan, Reconstruction, ReconstructionConfig};
use beltscan::scandir::{read_scan_dir, write_reconstruction, LoadedScan};
use beltscan::{Band, Error, GradientField, Mask};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    InsufficientData = 4,
    AmbiguousMatch = 5,
    Degenerate = 6,
    Io = 7,
    Format = 8,
    Diverged = 9,
    Panic = 10,
}

/// Trained gradient regressor.
pub struct BsGradientModel {
    inner: GradientRegressor,
}

/// Frames, background and manifest of a scan directory.
pub struct BsScan {
    inner: LoadedScan,
}

/// Stitched normals, integrated height and per-frame poses.
pub struct BsReconstruction {
    inner: Reconstruction,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BsPose {
    pub frame_index: usize,
    pub tx_px: f64,
    pub ty_px: f64,
    pub confidence: f64,
}

/// `p' = rotation * p + translation`, rotation row-major.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BsRigidTransform {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BsStatus {
    match e {
        Error::InvalidInput(_) | Error::OutOfBounds { .. } | Error::UnsupportedRegion(_) | Error::EmptyMask => {
            BsStatus::InvalidInput
        }
        Error::DimensionMismatch { .. } => BsStatus::DimensionMismatch,
        Error::InsufficientData(_) | Error::MissingControlPoint { .. } => BsStatus::InsufficientData,
        Error::AmbiguousMatch { .. } => BsStatus::AmbiguousMatch,
        Error::Degenerate(_) => BsStatus::Degenerate,
        Error::Io { .. } => BsStatus::Io,
        Error::Format(_) | Error::Json(_) | Error::Image(_) => BsStatus::Format,
        Error::Diverged { .. } => BsStatus::Diverged,
    }
}

enum Fail {
    Status(BsStatus, String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(BsStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic for `bs_last_error`.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BsStatus::Ok,
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            BsStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Status(BsStatus::InvalidInput, format!("{what} is not UTF-8")))?;
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

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, need: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len != need {
        return Err(Fail::Status(
            BsStatus::DimensionMismatch,
            format!("{what} holds {len} values, need {need}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Library version, static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. Valid until the next call.
#[no_mangle]
pub extern "C" fn bs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a gradient model JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_gradient_model_load(path: *const c_char, out: *mut *mut BsGradientModel) -> BsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = GradientRegressor::load(&path_arg(path, "path")?)?;
        put(out, BsGradientModel { inner });
        Ok(())
    })
}

/// # Safety
/// `model` must come from `bs_gradient_model_load` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn bs_gradient_model_free(model: *mut BsGradientModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Reads a scan directory written by `beltscan simulate`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_scan_load(dir: *const c_char, out: *mut *mut BsScan) -> BsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = read_scan_dir(&path_arg(dir, "dir")?)?;
        put(out, BsScan { inner });
        Ok(())
    })
}

/// Number of frames, 0 for NULL.
///
/// # Safety
/// `scan` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn bs_scan_frame_count(scan: *const BsScan) -> usize {
    scan.as_ref().map_or(0, |s| s.inner.frames.len())
}

/// # Safety
/// `scan` must come from `bs_scan_load` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn bs_scan_free(scan: *mut BsScan) {
    if !scan.is_null() {
        drop(Box::from_raw(scan));
    }
}

/// Full pipeline with default settings; `use_marker_prior` seeds flow with the belt encoder.
///
/// # Safety
/// Handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_reconstruct(
    scan: *const BsScan,
    model: *const BsGradientModel,
    use_marker_prior: bool,
    out: *mut *mut BsReconstruction,
) -> BsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let scan = &handle(scan, "scan")?.inner;
        let model = &handle(model, "model")?.inner;
        let cfg = ReconstructionConfig {
            use_marker_prior,
            ..ReconstructionConfig::default()
        };
        let detector = DetectorConfig::for_radius(scan.manifest.marker_spec.dot_radius_px);
        let inner = reconstruct_scan(&scan.frames, &scan.background, model, &detector, &cfg)?;
        put(out, BsReconstruction { inner });
        Ok(())
    })
}

/// Mosaic size in pixels.
///
/// # Safety
/// `rec` must be live; `width` and `height` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn bs_reconstruction_dims(rec: *const BsReconstruction, width: *mut usize, height: *mut usize) -> BsStatus {
    guard(|| {
        let rec = &handle(rec, "rec")?.inner;
        if width.is_null() || height.is_null() {
            return Err(null("width or height"));
        }
        (*width, *height) = rec.height.dims();
        Ok(())
    })
}

/// Copies the height field (mm, row-major); `len` must be `width * height`.
///
/// # Safety
/// `rec` must be live and `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bs_reconstruction_height(rec: *const BsReconstruction, buf: *mut f64, len: usize) -> BsStatus {
    guard(|| {
        let rec = &handle(rec, "rec")?.inner;
        let src = rec.height.data();
        out_slice(buf, len, src.len(), "buf")?.copy_from_slice(src);
        Ok(())
    })
}

/// Copies unit normals as interleaved xyz; `len` must be `3 * width * height`.
///
/// # Safety
/// `rec` must be live and `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bs_reconstruction_normals(rec: *const BsReconstruction, buf: *mut f64, len: usize) -> BsStatus {
    guard(|| {
        let rec = &handle(rec, "rec")?.inner;
        let src = rec.normals.data();
        let dst = out_slice(buf, len, 3 * src.len(), "buf")?;
        for (d, n) in dst.chunks_exact_mut(3).zip(src) {
            d.copy_from_slice(n);
        }
        Ok(())
    })
}

/// Number of registered frames, 0 for NULL.
///
/// # Safety
/// `rec` must be live or NULL.
#[no_mangle]
pub unsafe extern "C" fn bs_reconstruction_pose_count(rec: *const BsReconstruction) -> usize {
    rec.as_ref().map_or(0, |r| r.inner.poses.len())
}

/// Copies per-frame poses; `len` must equal `bs_reconstruction_pose_count`.
///
/// # Safety
/// `rec` must be live and `buf` writable for `len` poses.
#[no_mangle]
pub unsafe extern "C" fn bs_reconstruction_poses(rec: *const BsReconstruction, buf: *mut BsPose, len: usize) -> BsStatus {
    guard(|| {
        let rec = &handle(rec, "rec")?.inner;
        let dst = out_slice(buf, len, rec.poses.len(), "buf")?;
        for (d, p) in dst.iter_mut().zip(&rec.poses) {
            *d = BsPose {
                frame_index: p.frame_index,
                tx_px: p.pose.tx,
                ty_px: p.pose.ty,
                confidence: p.confidence,
            };
        }
        Ok(())
    })
}

/// Writes the reconstruction output files into `dir`.
///
/// # Safety
/// `rec` must be live and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bs_reconstruction_save(rec: *const BsReconstruction, dir: *const c_char, preview: bool) -> BsStatus {
    guard(|| {
        let rec = &handle(rec, "rec")?.inner;
        write_reconstruction(&path_arg(dir, "dir")?, rec, preview)?;
        Ok(())
    })
}

/// # Safety
/// `rec` must come from `bs_reconstruct` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn bs_reconstruction_free(rec: *mut BsReconstruction) {
    if !rec.is_null() {
        drop(Box::from_raw(rec));
    }
}

/// Integrates a full rectangular gradient field (mm/mm) into a zero-mean height field (mm).
///
/// # Safety
/// `gx`, `gy` and `out_height` must each hold `width * height` doubles.
#[no_mangle]
pub unsafe extern "C" fn bs_poisson_integrate(
    gx: *const f64,
    gy: *const f64,
    width: usize,
    height: usize,
    pixel_pitch: f64,
    out_height: *mut f64,
) -> BsStatus {
    guard(|| {
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Fail::Status(BsStatus::InvalidInput, "grid size overflows".into()))?;
        let (gx, gy) = (slice_arg(gx, n, "gx")?, slice_arg(gy, n, "gy")?);
        let out = out_slice(out_height, n, n, "out_height")?;
        let g = GradientField::new(width, height, pixel_pitch, gx.iter().zip(gy).map(|(&a, &b)| [a, b]).collect())?;
        let h = poisson_integrate(&g, &Mask::full(width, height))?;
        out.copy_from_slice(h.data());
        Ok(())
    })
}

/// Point-to-point ICP; clouds are interleaved xyz with `n_source` and `n_target` points.
///
/// # Safety
/// Point buffers must hold `3 * n` doubles; `out` must be valid; `out_residual` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn bs_icp_align(
    source: *const f64,
    n_source: usize,
    target: *const f64,
    n_target: usize,
    max_iter: usize,
    tol: f64,
    out: *mut BsRigidTransform,
    out_residual: *mut f64,
) -> BsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cloud = |p, n: usize, what| -> Result<Vec<[f64; 3]>, Fail> {
            Ok(slice_arg(p, 3 * n, what)?.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
        };
        let r = icp_align(&cloud(source, n_source, "source")?, &cloud(target, n_target, "target")?, max_iter, tol)?;
        let t = &r.transform;
        let mut rotation = [0.0; 9];
        for i in 0..3 {
            rotation[3 * i..3 * i + 3].copy_from_slice(&t.rotation[i]);
        }
        *out = BsRigidTransform { rotation, translation: t.translation };
        if !out_residual.is_null() {
            *out_residual = r.final_residual();
        }
        Ok(())
    })
}

/// Belt advance in px between two sorted lists of marker x positions from one band.
///
/// Returns `BS_STATUS_AMBIGUOUS_MATCH` when the interval pattern aliases.
///
/// # Safety
/// `prev_x` and `next_x` must hold `n_prev` and `n_next` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bs_marker_displacement(
    prev_x: *const f64,
    n_prev: usize,
    next_x: *const f64,
    n_next: usize,
    out: *mut f64,
) -> BsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let obs = |p, n, what, frame_index| -> Result<MarkerObservation, Fail> {
            Ok(MarkerObservation {
                band: Band::Left,
                frame_index,
                centers: slice_arg(p, n, what)?.iter().map(|&x| [x, 0.0]).collect(),
            })
        };
        let m = match_displacement(
            &obs(prev_x, n_prev, "prev_x", 0)?,
            &obs(next_x, n_next, "next_x", 1)?,
            &MatchConfig::default(),
        )?;
        *out = m.displacement_px;
        Ok(())
    })
}

/// Kind tag of a GBF1 grid file: 1 height, 2 gradient, 3 normal, 4 mask.
///
/// # Safety
/// `path` must be a NUL-terminated string and `kind` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_gbf_kind(path: *const c_char, kind: *mut u32) -> BsStatus {
    guard(|| {
        if kind.is_null() {
            return Err(null("kind"));
        }
        *kind = match Grid::load(path_arg(path, "path")?)? {
            Grid::Height(_) => 1,
            Grid::Gradient(_) => 2,
            Grid::Normal(_) => 3,
            Grid::Mask { .. } => 4,
        };
        Ok(())
    })
}
