//! C ABI over the scanpath library.
//!
//! Every fallible function returns an [`SpStatus`]; on failure the message
//! is available from [`sp_last_error`] on the same thread. Objects are
//! opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use scanpath::gaze::{self, Bounds, FormatOptions};
use scanpath::generator::generate_scanpath_stream;
use scanpath::model::{self, BuildConfig, ScanPathModel, UpdateRule};
use scanpath::{Error, FeatureSpec, GazeRecording, GeneratorConfig};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Argument = 3,
    Config = 4,
    Schema = 5,
    Parse = 6,
    EmptyDataset = 7,
    Io = 8,
    Version = 9,
    ModelFormat = 10,
    Generation = 11,
    Feature = 12,
    BufferTooSmall = 13,
    Panic = 14,
}

/// Update rule for the per-level cluster count.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpUpdateRule {
    Constant = 0,
    Halving = 1,
    LinearDecay = 2,
}

impl From<SpUpdateRule> for UpdateRule {
    fn from(r: SpUpdateRule) -> Self {
        match r {
            SpUpdateRule::Constant => UpdateRule::Constant,
            SpUpdateRule::Halving => UpdateRule::Halving,
            SpUpdateRule::LinearDecay => UpdateRule::LinearDecay,
        }
    }
}

/// Model building parameters. A `merge_radius` <= 0 selects the derived
/// default.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SpBuildConfig {
    pub max_level: u32,
    pub num_clusters: u32,
    pub dyn_cluster: bool,
    pub rule: SpUpdateRule,
    pub merge_radius: f64,
    pub pca_variance: f64,
    pub time_weight: f64,
    pub seed: u64,
    pub kmeans_restarts: u32,
    pub ignore_time: bool,
}

/// Generation parameters.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SpGeneratorConfig {
    pub max_clusters: u32,
    pub max_subclusters: u32,
    pub dyn_cluster: bool,
    pub rule: SpUpdateRule,
    pub seed: u64,
    pub clamp_to_unit: bool,
    pub support_weighted: bool,
}

/// A learned scan path model.
pub struct SpModel {
    inner: ScanPathModel,
}

/// One generated scan path.
pub struct SpScanPath {
    inner: GazeRecording,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(err: &Error) -> SpStatus {
    match err {
        Error::Argument(_) => SpStatus::Argument,
        Error::Config(_) => SpStatus::Config,
        Error::Schema(_) => SpStatus::Schema,
        Error::Parse { .. } => SpStatus::Parse,
        Error::EmptyDataset => SpStatus::EmptyDataset,
        Error::Io { .. } => SpStatus::Io,
        Error::Version { .. } => SpStatus::Version,
        Error::ModelFormat(_) => SpStatus::ModelFormat,
        Error::Generation(_) => SpStatus::Generation,
        Error::Feature(_) => SpStatus::Feature,
    }
}

struct Fail(SpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SpStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SpStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(SpStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    non_null(p, what)?;
    CStr::from_ptr(p).to_str().map_err(|_| Fail(SpStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// Message of the last failed call on this thread (empty after a success).
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn sp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn sp_build_config_default() -> SpBuildConfig {
    let d = BuildConfig::default();
    SpBuildConfig {
        max_level: d.max_level as u32,
        num_clusters: d.num_clusters as u32,
        dyn_cluster: d.dyn_cluster,
        rule: SpUpdateRule::Constant,
        merge_radius: 0.0,
        pca_variance: d.pca_variance,
        time_weight: d.time_weight,
        seed: d.seed,
        kmeans_restarts: d.kmeans_restarts as u32,
        ignore_time: false,
    }
}

#[no_mangle]
pub extern "C" fn sp_generator_config_default() -> SpGeneratorConfig {
    let d = GeneratorConfig::default();
    SpGeneratorConfig {
        max_clusters: d.max_clusters as u32,
        max_subclusters: d.max_subclusters as u32,
        dyn_cluster: d.dyn_cluster,
        rule: SpUpdateRule::Constant,
        seed: d.seed,
        clamp_to_unit: d.clamp_to_unit,
        support_weighted: d.support_weighted,
    }
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Reads a model file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sp_model_load(path: *const c_char, out: *mut *mut SpModel) -> SpStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        put(out, SpModel { inner: model::load_model(path)? });
        Ok(())
    })
}

/// Learns a model from a gaze CSV (columns x, y, optional t, rec,
/// stimulus, participant). Coordinates outside [0,1] are rescaled by their
/// extent; timestamps are normalized per recording.
///
/// # Safety
/// `path` must be a NUL-terminated string; `config` and `out` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sp_model_train_csv(
    path: *const c_char,
    config: *const SpBuildConfig,
    out: *mut *mut SpModel,
) -> SpStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        non_null(config, "config")?;
        let path = str_arg(path, "path")?;
        let c = *config;
        let raw = gaze::load_recordings(path, &FormatOptions::default())?;
        let own = Bounds::of(&raw)?;
        let bounds = if own.is_unit() { Bounds { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: 1.0 } } else { own };
        let mut ds = gaze::normalize(&raw, Some(&bounds))?;
        if c.ignore_time {
            ds = ds.without_time();
        }
        let build = BuildConfig {
            max_level: c.max_level as usize,
            num_clusters: c.num_clusters as usize,
            dyn_cluster: c.dyn_cluster,
            rule: c.rule.into(),
            merge_radius: (c.merge_radius > 0.0).then_some(c.merge_radius),
            pca_variance: c.pca_variance,
            time_weight: c.time_weight,
            seed: c.seed,
            kmeans_restarts: c.kmeans_restarts as usize,
        };
        put(out, SpModel { inner: model::generate_model(&ds, &build)? });
        Ok(())
    })
}

/// Writes a model file.
///
/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sp_model_save(model: *const SpModel, path: *const c_char) -> SpStatus {
    guard(|| {
        non_null(model, "model")?;
        let path = str_arg(path, "path")?;
        model::save_model(&(*model).inner, path)?;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sp_model_free(model: *mut SpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Point dimension of the model: 2 (x, y) or 3 (x, y, t). 0 for null.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn sp_model_dim(model: *const SpModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.dim)
}

/// Number of levels. 0 for null.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn sp_model_levels(model: *const SpModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.depth())
}

/// Number of nodes on 1-based `level`; 0 when out of range or null.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn sp_model_node_count(model: *const SpModel, level: usize) -> usize {
    match model.as_ref() {
        Some(m) if level >= 1 => m.inner.levels.get(level - 1).map_or(0, Vec::len),
        _ => 0,
    }
}

/// Generates scan path number `stream` for `config.seed`. The same
/// (seed, stream) pair always yields the same scan path.
///
/// # Safety
/// `model` must come from this library; `config` and `out` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sp_generate(
    model: *const SpModel,
    config: *const SpGeneratorConfig,
    stream: u64,
    out: *mut *mut SpScanPath,
) -> SpStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        non_null(model, "model")?;
        non_null(config, "config")?;
        let c = *config;
        let cfg = GeneratorConfig {
            max_clusters: c.max_clusters as usize,
            max_subclusters: c.max_subclusters as usize,
            dyn_cluster: c.dyn_cluster,
            rule: c.rule.into(),
            seed: c.seed,
            clamp_to_unit: c.clamp_to_unit,
            support_weighted: c.support_weighted,
            max_level: None,
        };
        let (rec, _) = generate_scanpath_stream(&(*model).inner, &cfg, stream)?;
        put(out, SpScanPath { inner: rec });
        Ok(())
    })
}

/// # Safety
/// `path` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sp_scanpath_free(path: *mut SpScanPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Number of points. 0 for null.
///
/// # Safety
/// `path` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn sp_scanpath_len(path: *const SpScanPath) -> usize {
    path.as_ref().map_or(0, |p| p.inner.len())
}

/// Copies the points as consecutive (x, y, t) triples into `buf`, which
/// must hold `3 * sp_scanpath_len(path)` doubles. t is NaN for untimed
/// scan paths.
///
/// # Safety
/// `path` must come from this library; `buf` must point to `capacity`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sp_scanpath_points(path: *const SpScanPath, buf: *mut f64, capacity: usize) -> SpStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(buf, "buf")?;
        let pts = (*path).inner.points();
        let need = 3 * pts.len();
        if capacity < need {
            return Err(Fail(SpStatus::BufferTooSmall, format!("buffer holds {capacity} doubles, need {need}")));
        }
        let out = std::slice::from_raw_parts_mut(buf, need);
        for (chunk, p) in out.chunks_exact_mut(3).zip(pts) {
            chunk.copy_from_slice(&[p.x, p.y, p.t.unwrap_or(f64::NAN)]);
        }
        Ok(())
    })
}

/// Heatmap of `path` on a `width` x `height` grid, row-major from the top
/// left cell, summing to 1. `buf` must hold `width * height` doubles.
///
/// # Safety
/// `path` must come from this library; `buf` must point to `capacity`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sp_featurize_heatmap(
    path: *const SpScanPath,
    width: usize,
    height: usize,
    buf: *mut f64,
    capacity: usize,
) -> SpStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(buf, "buf")?;
        let f = FeatureSpec::Heatmap { width, height }.extract(&(*path).inner)?;
        if capacity < f.values.len() {
            return Err(Fail(
                SpStatus::BufferTooSmall,
                format!("buffer holds {capacity} doubles, need {}", f.values.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, f.values.len()).copy_from_slice(&f.values);
        Ok(())
    })
}
