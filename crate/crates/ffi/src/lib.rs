//! C ABI over the `fdf` crate. Every handle is opaque and owned by the
//! caller until passed to its `*_free` function. Every fallible call
//! returns an [`FdfStatus`]; on failure [`fdf_last_error_message`] describes
//! the problem until the next failing call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use fdf::check::{check_source, CheckReport};
use fdf::cli;
use fdf::diag::Severity;
use fdf::engine::RunConfig;
use fdf::library::Library;
use fdf::mlkit::{self, DataBatch, LearnedFunction};
use fdf::store;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Parse = 4,
    Check = 5,
    Io = 6,
    Shape = 7,
    Run = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// A pipeline that passed all static checks (warnings allowed).
pub struct FdfPipeline {
    report: CheckReport,
}

/// An `n × width` batch of samples.
pub struct FdfBatch {
    batch: DataBatch,
}

/// A learned function.
pub struct FdfFunction {
    function: LearnedFunction,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("interior nul removed"));
}

struct Failure(FdfStatus, String);

type Outcome = Result<(), Failure>;

fn guard(f: impl FnOnce() -> Outcome) -> FdfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FdfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FdfStatus::Panic
        }
    }
}

fn fail<T>(status: FdfStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return fail(FdfStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(s).to_str().or_else(|_| fail(FdfStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().map_or_else(|| fail(FdfStatus::NullPointer, format!("{what} is null")), Ok)
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().map_or_else(|| fail(FdfStatus::NullPointer, format!("{what} is null")), Ok)
}

fn library() -> Result<Library, Failure> {
    Library::from_env().or_else(|e| fail(FdfStatus::InvalidArgument, format!("FDF_LIBRARY_MANIFEST: {e}")))
}

/// Message describing the last failure on this thread; empty if none.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn fdf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn fdf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

fn finish_check(report: CheckReport, out: &mut *mut FdfPipeline) -> Outcome {
    if report.parse_failed || report.has_errors() {
        let status = if report.parse_failed { FdfStatus::Parse } else { FdfStatus::Check };
        let lines: Vec<String> = report.diagnostics.iter().filter(|d| d.is_error()).map(|d| d.to_string()).collect();
        return fail(status, lines.join("\n"));
    }
    *out = Box::into_raw(Box::new(FdfPipeline { report }));
    Ok(())
}

/// Parse and check pipeline text. On success `*out` receives a new handle.
///
/// # Safety
/// `source` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fdf_pipeline_parse(source: *const c_char, out: *mut *mut FdfPipeline) -> FdfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let text = text(source, "source")?;
        finish_check(check_source(text, &library()?), out)
    })
}

/// Read, parse and check a pipeline file; `file=` arguments resolve next to it.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fdf_pipeline_load(path: *const c_char, out: *mut *mut FdfPipeline) -> FdfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let path = text(path, "path")?;
        let (report, _) = fdf::check::check_file(Path::new(path), &library()?)
            .or_else(|e| fail(FdfStatus::Io, format!("{path}: {e}")))?;
        finish_check(report, out)
    })
}

/// Number of ports in the FDF graph, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live pipeline handle.
#[no_mangle]
pub unsafe extern "C" fn fdf_pipeline_port_count(p: *const FdfPipeline) -> usize {
    p.as_ref().and_then(|p| p.report.pipeline.as_ref()).map_or(0, |p| p.port_count())
}

/// Number of warnings raised by the checks, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live pipeline handle.
#[no_mangle]
pub unsafe extern "C" fn fdf_pipeline_warning_count(p: *const FdfPipeline) -> usize {
    p.as_ref().map_or(0, |p| p.report.diagnostics.iter().filter(|d| d.severity == Severity::Warning).count())
}

/// Graphviz text for the pipeline; free it with [`fdf_string_free`].
///
/// # Safety
/// `p` must be a live pipeline handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fdf_pipeline_to_dot(p: *const FdfPipeline, out: *mut *mut c_char) -> FdfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let p = handle(p, "pipeline")?;
        let pipeline = p.report.pipeline.as_ref().expect("checked pipelines are parsed");
        let dot = fdf::dot::boxes_to_dot(pipeline);
        *out = CString::new(dot).or_else(|_| fail(FdfStatus::InvalidUtf8, "nul byte in output"))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fdf_pipeline_free(p: *mut FdfPipeline) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Run a pipeline file with a data manifest, writing sinks and exports to
/// `out_dir`, exactly as the `run` command does.
///
/// # Safety
/// All strings must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn fdf_run_file(
    path: *const c_char,
    manifest: *const c_char,
    out_dir: *const c_char,
    seed: u64,
    jobs: usize,
) -> FdfStatus {
    guard(|| {
        let path = text(path, "path")?;
        let manifest = text(manifest, "manifest")?;
        let out_dir = text(out_dir, "out_dir")?;
        let (mut log, mut err) = (Vec::new(), Vec::new());
        let config = RunConfig { seed, jobs: jobs.max(1) };
        cli::run_file(
            Path::new(path),
            Path::new(manifest),
            Path::new(out_dir),
            config,
            false,
            &library()?,
            &mut log,
            &mut err,
        )
        .map(|_| ())
        .or_else(|code| fail(FdfStatus::Run, format!("exit {code}: {}", String::from_utf8_lossy(&err).trim_end())))
    })
}

/// Copy `n * width` row-major values into a new batch.
///
/// # Safety
/// `values` must point to `n * width` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fdf_batch_new(
    n: usize,
    width: usize,
    values: *const f64,
    out: *mut *mut FdfBatch,
) -> FdfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let len = n.checked_mul(width).ok_or_else(|| Failure(FdfStatus::InvalidArgument, "size overflow".into()))?;
        let v = if len == 0 {
            Vec::new()
        } else {
            handle(values, "values")?;
            std::slice::from_raw_parts(values, len).to_vec()
        };
        let batch = DataBatch::new(n, width, v).or_else(|e| fail(FdfStatus::InvalidArgument, e.to_string()))?;
        *out = Box::into_raw(Box::new(FdfBatch { batch }));
        Ok(())
    })
}

/// Read a CSV batch.
///
/// # Safety
/// `path` must be nul-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fdf_batch_load(path: *const c_char, out: *mut *mut FdfBatch) -> FdfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let path = text(path, "path")?;
        let batch = store::load_batch(Path::new(path)).or_else(|e| fail(FdfStatus::Io, e.to_string()))?;
        *out = Box::into_raw(Box::new(FdfBatch { batch }));
        Ok(())
    })
}

/// # Safety
/// `b` must be null or a live batch handle.
#[no_mangle]
pub unsafe extern "C" fn fdf_batch_rows(b: *const FdfBatch) -> usize {
    b.as_ref().map_or(0, |b| b.batch.n())
}

/// # Safety
/// `b` must be null or a live batch handle.
#[no_mangle]
pub unsafe extern "C" fn fdf_batch_width(b: *const FdfBatch) -> usize {
    b.as_ref().map_or(0, |b| b.batch.width())
}

/// Copy the row-major values into `buffer`, which holds `capacity` doubles.
///
/// # Safety
/// `b` must be a live batch handle; `buffer` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn fdf_batch_copy_values(b: *const FdfBatch, buffer: *mut f64, capacity: usize) -> FdfStatus {
    guard(|| {
        let b = handle(b, "batch")?;
        let v = b.batch.values();
        if capacity < v.len() {
            return fail(FdfStatus::BufferTooSmall, format!("need {} values, buffer holds {capacity}", v.len()));
        }
        if !v.is_empty() {
            out_ptr(buffer, "buffer")?;
            std::slice::from_raw_parts_mut(buffer, v.len()).copy_from_slice(v);
        }
        Ok(())
    })
}

/// # Safety
/// `b` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fdf_batch_free(b: *mut FdfBatch) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

/// Load a saved function, verifying format version and checksum.
///
/// # Safety
/// `path` must be nul-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fdf_function_load(path: *const c_char, out: *mut *mut FdfFunction) -> FdfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let path = text(path, "path")?;
        let function = store::load_function(Path::new(path)).or_else(|e| fail(FdfStatus::Io, e.to_string()))?;
        *out = Box::into_raw(Box::new(FdfFunction { function }));
        Ok(())
    })
}

/// # Safety
/// `f` must be a live function handle; `path` must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn fdf_function_save(f: *const FdfFunction, path: *const c_char) -> FdfStatus {
    guard(|| {
        let f = handle(f, "function")?;
        let path = text(path, "path")?;
        store::save_function(&f.function, Path::new(path)).or_else(|e| fail(FdfStatus::Io, e.to_string()))
    })
}

/// Number of data inputs the function takes, or 0 for a null handle.
///
/// # Safety
/// `f` must be null or a live function handle.
#[no_mangle]
pub unsafe extern "C" fn fdf_function_input_count(f: *const FdfFunction) -> usize {
    f.as_ref().map_or(0, |f| f.function.in_widths.len())
}

/// Number of data outputs the function produces, or 0 for a null handle.
///
/// # Safety
/// `f` must be null or a live function handle.
#[no_mangle]
pub unsafe extern "C" fn fdf_function_output_count(f: *const FdfFunction) -> usize {
    f.as_ref().map_or(0, |f| f.function.out_widths.len())
}

/// Human-readable summary; free it with [`fdf_string_free`].
///
/// # Safety
/// `f` must be a live function handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fdf_function_describe(f: *const FdfFunction, out: *mut *mut c_char) -> FdfStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let f = handle(f, "function")?;
        *out = CString::new(cli::describe(&f.function))
            .or_else(|_| fail(FdfStatus::InvalidUtf8, "nul byte in output"))?
            .into_raw();
        Ok(())
    })
}

/// Apply `f` to `input_count` batches. `outputs` must have room for
/// [`fdf_function_output_count`] handles, each released with
/// [`fdf_batch_free`].
///
/// # Safety
/// `inputs` must point to `input_count` live batch handles; `outputs` must
/// hold `output_capacity` writable slots.
#[no_mangle]
pub unsafe extern "C" fn fdf_function_apply(
    f: *const FdfFunction,
    inputs: *const *const FdfBatch,
    input_count: usize,
    outputs: *mut *mut FdfBatch,
    output_capacity: usize,
) -> FdfStatus {
    guard(|| {
        let f = handle(f, "function")?;
        let need = f.function.out_widths.len();
        if output_capacity < need {
            return fail(FdfStatus::BufferTooSmall, format!("need {need} output slots, got {output_capacity}"));
        }
        out_ptr(outputs, "outputs")?;
        let mut batches = Vec::with_capacity(input_count);
        if input_count > 0 {
            handle(inputs, "inputs")?;
            for (i, b) in std::slice::from_raw_parts(inputs, input_count).iter().enumerate() {
                batches.push(&handle(*b, &format!("input {i}"))?.batch);
            }
        }
        let results = mlkit::apply(&f.function, &batches).or_else(|e| fail(FdfStatus::Shape, e.to_string()))?;
        let slots = std::slice::from_raw_parts_mut(outputs, need);
        for (slot, batch) in slots.iter_mut().zip(results) {
            *slot = Box::into_raw(Box::new(FdfBatch { batch }));
        }
        Ok(())
    })
}

/// # Safety
/// `f` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fdf_function_free(f: *mut FdfFunction) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}
