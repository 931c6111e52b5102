//! C ABI for tsclv.
//!
//! Every fallible function returns a [`TsclvStatus`] and writes its result
//! through an out-pointer. On failure the message is available from
//! [`tsclv_last_error_message`] on the same thread until the next call.
//! Handles are opaque; release each one with its `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tsclv::clustering::{cluster, ClusteringConfig, ClusteringResult, Method};
use tsclv::distances::{distance_matrix, DistanceMatrix, Measure, MeasureKind};
use tsclv::forecast::{forecast, select_arima};
use tsclv::ingest::{aggregate_weekly, parse_transactions, ColumnMap, ParseOptions, SeriesMatrix, WeekId, WeeklySeries};
use tsclv::validity::{silhouette, sim_index};
use tsclv::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsclvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Shape = 3,
    Degenerate = 4,
    Config = 5,
    Input = 6,
    Range = 7,
    Constraint = 8,
    EmptyInput = 9,
    Prerequisite = 10,
    AllFitsFailed = 11,
    Format = 12,
    Io = 13,
    BufferTooSmall = 14,
    Panic = 99,
}

/// Weekly series for a set of named entities.
pub struct TsclvSeriesMatrix(SeriesMatrix);

/// Symmetric pairwise distance matrix.
pub struct TsclvDistanceMatrix(DistanceMatrix);

/// Partition of the entities of a distance matrix.
pub struct TsclvClustering(ClusteringResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TsclvStatus {
    match e {
        Error::Shape(_) => TsclvStatus::Shape,
        Error::Degenerate(_) => TsclvStatus::Degenerate,
        Error::Config(_) => TsclvStatus::Config,
        Error::Input(_) => TsclvStatus::Input,
        Error::Range(_) => TsclvStatus::Range,
        Error::Constraint(_) => TsclvStatus::Constraint,
        Error::EmptyInput(_) => TsclvStatus::EmptyInput,
        Error::Prerequisite { .. } => TsclvStatus::Prerequisite,
        Error::AllFitsFailed(_) => TsclvStatus::AllFitsFailed,
        Error::Format(_) | Error::Csv(_) | Error::Json(_) => TsclvStatus::Format,
        Error::Io(_) => TsclvStatus::Io,
    }
}

struct Failure(TsclvStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail(status: TsclvStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Run `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TsclvStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TsclvStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TsclvStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(TsclvStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(TsclvStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(TsclvStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(TsclvStatus::NullPointer, format!("{what} is null")))
}

fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    unsafe { p.as_mut() }.ok_or_else(|| fail(TsclvStatus::NullPointer, format!("{what} is null")))
}

fn write_buffer<T: Copy>(src: &[T], dst: *mut T, len: usize) -> Result<(), Failure> {
    if len < src.len() {
        return Err(fail(TsclvStatus::BufferTooSmall, format!("buffer holds {len} values, need {}", src.len())));
    }
    if src.is_empty() {
        return Ok(());
    }
    if dst.is_null() {
        return Err(fail(TsclvStatus::NullPointer, "output buffer is null"));
    }
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len()) };
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next tsclv call on the same thread.
#[no_mangle]
pub extern "C" fn tsclv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tsclv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a series matrix from `n` rows of `t` values in row-major order.
/// `labels` holds `n` entity names, or is NULL for `e1`, `e2`, ...
/// The week grid starts at `start_year`-W`start_week`.
///
/// # Safety
/// `values` must point to `n * t` doubles and `labels`, when non-NULL, to
/// `n` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn tsclv_series_matrix_new(
    values: *const f64,
    n: usize,
    t: usize,
    labels: *const *const c_char,
    start_year: i32,
    start_week: u32,
    out: *mut *mut TsclvSeriesMatrix,
) -> TsclvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let len = n.checked_mul(t).ok_or_else(|| fail(TsclvStatus::Shape, "n * t overflows"))?;
        let values = slice_arg(values, len, "values")?;
        let names: Vec<String> = if labels.is_null() {
            (1..=n).map(|i| format!("e{i}")).collect()
        } else {
            slice_arg(labels, n, "labels")?
                .iter()
                .enumerate()
                .map(|(i, p)| str_arg(*p, &format!("labels[{i}]")).map(str::to_owned))
                .collect::<Result<_, _>>()?
        };
        let series = names
            .into_iter()
            .enumerate()
            .map(|(i, entity_name)| WeeklySeries { entity_name, values: values[i * t..(i + 1) * t].to_vec() })
            .collect();
        let sm = SeriesMatrix::new(series, WeekId::new(start_year, start_week)?)?;
        *out = Box::into_raw(Box::new(TsclvSeriesMatrix(sm)));
        Ok(())
    })
}

/// Parse a transaction CSV with the default column names and bucket it
/// into ISO weeks spanning the observed dates.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tsclv_series_matrix_from_transactions(
    path: *const c_char,
    out: *mut *mut TsclvSeriesMatrix,
) -> TsclvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let parsed = parse_transactions(File::open(path).map_err(Error::from)?, &ColumnMap::default(), ParseOptions::default())?;
        let sm = aggregate_weekly(&parsed.transactions, None)?;
        *out = Box::into_raw(Box::new(TsclvSeriesMatrix(sm)));
        Ok(())
    })
}

/// Number of entities, or 0 for NULL.
///
/// # Safety
/// `sm` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tsclv_series_matrix_n(sm: *const TsclvSeriesMatrix) -> usize {
    sm.as_ref().map_or(0, |s| s.0.n())
}

/// Number of weeks, or 0 for NULL.
///
/// # Safety
/// `sm` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tsclv_series_matrix_t(sm: *const TsclvSeriesMatrix) -> usize {
    sm.as_ref().map_or(0, |s| s.0.t())
}

/// Copy row `i` into `buf`, which holds `len` doubles.
///
/// # Safety
/// `sm` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tsclv_series_matrix_row(
    sm: *const TsclvSeriesMatrix,
    i: usize,
    buf: *mut f64,
    len: usize,
) -> TsclvStatus {
    guard(|| {
        let sm = &ref_arg(sm, "series matrix")?.0;
        if i >= sm.n() {
            return Err(fail(TsclvStatus::Range, format!("row {i} out of range for {} entities", sm.n())));
        }
        write_buffer(sm.row(i), buf, len)
    })
}

/// # Safety
/// `sm` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsclv_series_matrix_free(sm: *mut TsclvSeriesMatrix) {
    if !sm.is_null() {
        drop(Box::from_raw(sm));
    }
}

fn parse_measure(tag: &str) -> Result<Measure, Failure> {
    Ok(Measure::new(tag.parse::<MeasureKind>()?))
}

/// Distance between two series under `measure` (e.g. "EUCL", "DTW").
///
/// # Safety
/// `measure` must be NUL-terminated; `x` and `y` must hold `nx` and `ny`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn tsclv_distance(
    measure: *const c_char,
    x: *const f64,
    nx: usize,
    y: *const f64,
    ny: usize,
    out: *mut f64,
) -> TsclvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m = parse_measure(str_arg(measure, "measure")?)?;
        *out = m.distance(slice_arg(x, nx, "x")?, slice_arg(y, ny, "y")?)?;
        Ok(())
    })
}

/// Pairwise distances between every pair of rows of `sm`.
///
/// # Safety
/// `sm` must be a live handle and `measure` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tsclv_distance_matrix_compute(
    sm: *const TsclvSeriesMatrix,
    measure: *const c_char,
    out: *mut *mut TsclvDistanceMatrix,
) -> TsclvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let sm = &ref_arg(sm, "series matrix")?.0;
        let m = parse_measure(str_arg(measure, "measure")?)?;
        *out = Box::into_raw(Box::new(TsclvDistanceMatrix(distance_matrix(sm, &m)?)));
        Ok(())
    })
}

/// Number of entities, or 0 for NULL.
///
/// # Safety
/// `dm` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tsclv_distance_matrix_n(dm: *const TsclvDistanceMatrix) -> usize {
    dm.as_ref().map_or(0, |d| d.0.n())
}

/// # Safety
/// `dm` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tsclv_distance_matrix_get(
    dm: *const TsclvDistanceMatrix,
    i: usize,
    j: usize,
    out: *mut f64,
) -> TsclvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let d = &ref_arg(dm, "distance matrix")?.0;
        if i >= d.n() || j >= d.n() {
            return Err(fail(TsclvStatus::Range, format!("index ({i}, {j}) out of range for {} entities", d.n())));
        }
        *out = d.get(i, j);
        Ok(())
    })
}

/// Copy the full row-major `n * n` matrix into `buf`.
///
/// # Safety
/// `dm` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tsclv_distance_matrix_copy(
    dm: *const TsclvDistanceMatrix,
    buf: *mut f64,
    len: usize,
) -> TsclvStatus {
    guard(|| write_buffer(ref_arg(dm, "distance matrix")?.0.as_slice(), buf, len))
}

/// # Safety
/// `dm` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsclv_distance_matrix_free(dm: *mut TsclvDistanceMatrix) {
    if !dm.is_null() {
        drop(Box::from_raw(dm));
    }
}

/// Cluster into `k` groups. `method` is "hierarchical", "partitional" or
/// "fuzzy"; other settings take their defaults.
///
/// # Safety
/// `dm` must be a live handle and `method` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tsclv_cluster(
    dm: *const TsclvDistanceMatrix,
    method: *const c_char,
    k: usize,
    seed: u64,
    out: *mut *mut TsclvClustering,
) -> TsclvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let d = &ref_arg(dm, "distance matrix")?.0;
        let method: Method = str_arg(method, "method")?.parse()?;
        let cfg = ClusteringConfig { seed, ..ClusteringConfig::new(method, k) };
        *out = Box::into_raw(Box::new(TsclvClustering(cluster(d, &cfg)?)));
        Ok(())
    })
}

/// Number of clusters, or 0 for NULL.
///
/// # Safety
/// `c` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tsclv_clustering_k(c: *const TsclvClustering) -> usize {
    c.as_ref().map_or(0, |c| c.0.k())
}

/// Copy the cluster index of every entity into `buf`.
///
/// # Safety
/// `c` must be a live handle and `buf` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn tsclv_clustering_assignment(
    c: *const TsclvClustering,
    buf: *mut usize,
    len: usize,
) -> TsclvStatus {
    guard(|| write_buffer(&ref_arg(c, "clustering")?.0.assignment, buf, len))
}

/// Sim index of `a` against `b`.
///
/// # Safety
/// `a` and `b` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn tsclv_sim_index(
    a: *const TsclvClustering,
    b: *const TsclvClustering,
    out: *mut f64,
) -> TsclvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = sim_index(&ref_arg(a, "a")?.0, &ref_arg(b, "b")?.0)?;
        Ok(())
    })
}

/// Mean silhouette of `c` under `dm`.
///
/// # Safety
/// `dm` and `c` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn tsclv_silhouette(
    dm: *const TsclvDistanceMatrix,
    c: *const TsclvClustering,
    out: *mut f64,
) -> TsclvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = silhouette(&ref_arg(dm, "distance matrix")?.0, &ref_arg(c, "clustering")?.0)?;
        Ok(())
    })
}

/// # Safety
/// `c` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsclv_clustering_free(c: *mut TsclvClustering) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Select an ARIMA order by AIC over `p <= p_max`, `d <= d_max`,
/// `q <= q_max` and forecast `horizon` steps into `forecast_out`.
/// `order_out` receives `{p, d, q}`.
///
/// # Safety
/// `x` must hold `n` doubles, `forecast_out` `horizon` doubles and
/// `order_out` three values.
#[no_mangle]
pub unsafe extern "C" fn tsclv_arima_forecast(
    x: *const f64,
    n: usize,
    p_max: usize,
    d_max: usize,
    q_max: usize,
    horizon: usize,
    forecast_out: *mut f64,
    order_out: *mut usize,
) -> TsclvStatus {
    guard(|| {
        let x = slice_arg(x, n, "x")?;
        let fit = select_arima(x, p_max, q_max, d_max)?;
        let fc = forecast(&fit, x, horizon)?;
        write_buffer(&fc.values, forecast_out, horizon)?;
        if !order_out.is_null() {
            write_buffer(&[fit.order.p, fit.order.d, fit.order.q], order_out, 3)?;
        }
        Ok(())
    })
}
