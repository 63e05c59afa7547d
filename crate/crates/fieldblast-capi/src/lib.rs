//! C ABI for the fieldblast verifier.
//!
//! All functions are panic-safe, return an `FbStatus` code (or a plain
//! value where no failure is possible), and communicate details through a
//! thread-local last-error message. Problems and verdicts are opaque
//! handles owned by the caller and released with the matching `_free`
//! function; strings returned through `char**` out-parameters are released
//! with `fb_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Duration;

use fieldblast::{
    emit_report, gen_jolt_or, gen_random, parse_problem, pretty_problem, run_pipeline, Error,
    OracleCheck, PipelineOptions, Problem, RandomSpec, ReportFormat, Verdict, VerdictStatus,
};

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

/// Opaque parsed problem.
pub struct FbProblem {
    inner: Problem,
}

/// Opaque verification outcome.
pub struct FbVerdict {
    inner: Verdict,
    /// Counterexample pairs, pre-rendered for indexed access.
    cex: Vec<(CString, u64)>,
}

/// Status code returned by fallible functions.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FbStatus {
    FbOk = 0,
    FbErrParse = 1,
    FbErrSort = 2,
    FbErrUnsupported = 3,
    FbErrTimeout = 4,
    FbErrResource = 5,
    FbErrIo = 6,
    FbErrInvalidArgument = 7,
    FbErrInternal = 8,
}

/// Verdict of a verification run.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FbVerdictStatus {
    FbValid = 0,
    FbInvalid = 1,
    FbUnknown = 2,
}

/// Report rendering selector.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FbReportFormat {
    FbReportHuman = 0,
    FbReportLines = 1,
}

/// Oracle validation policy for countermodels and failed goals.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FbOracleCheck {
    FbOracleAuto = 0,
    FbOracleOn = 1,
    FbOracleOff = 2,
}

/// Verification options. Zero timeout or memory means unlimited.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct FbOptions {
    pub timeout_secs: u64,
    pub memory_mb: u64,
    pub case_splits: bool,
    pub oracle_check: FbOracleCheck,
}

fn status_of(e: &Error) -> FbStatus {
    match e {
        Error::Parse { .. } | Error::NonPrimeField(_) => FbStatus::FbErrParse,
        Error::SortMismatch { .. } => FbStatus::FbErrSort,
        Error::Unsupported(_) | Error::ConstraintViolation(_) => FbStatus::FbErrUnsupported,
        Error::Timeout(_) => FbStatus::FbErrTimeout,
        Error::MemoryExceeded(_) | Error::BudgetExceeded(_) | Error::Overflow => {
            FbStatus::FbErrResource
        }
        Error::Io(_) => FbStatus::FbErrIo,
        Error::UnboundVariable(_) | Error::LiftFailure(_) | Error::Internal(_) => {
            FbStatus::FbErrInternal
        }
    }
}

fn options_from(opts: Option<&FbOptions>) -> PipelineOptions {
    let mut out = PipelineOptions::default();
    if let Some(o) = opts {
        out.timeout = (o.timeout_secs > 0).then(|| Duration::from_secs(o.timeout_secs));
        out.memory_mb = (o.memory_mb > 0).then_some(o.memory_mb);
        out.case_splits = o.case_splits;
        out.oracle_check = match o.oracle_check {
            FbOracleCheck::FbOracleAuto => OracleCheck::Auto,
            FbOracleCheck::FbOracleOn => OracleCheck::On,
            FbOracleCheck::FbOracleOff => OracleCheck::Off,
        };
    }
    out
}

fn guarded(f: impl FnOnce() -> FbStatus) -> FbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic crossed the ABI boundary");
            FbStatus::FbErrInternal
        }
    }
}

fn give_string(s: String, out: *mut *mut c_char) -> FbStatus {
    match CString::new(s) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            FbStatus::FbOk
        }
        Err(_) => {
            set_error("string contains interior NUL");
            FbStatus::FbErrInternal
        }
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn fb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Default options: 300 s timeout, 8192 MiB ceiling, case splits enabled,
/// oracle on auto.
#[no_mangle]
pub extern "C" fn fb_options_default() -> FbOptions {
    FbOptions {
        timeout_secs: 300,
        memory_mb: 8192,
        case_splits: true,
        oracle_check: FbOracleCheck::FbOracleAuto,
    }
}

/// Copy of the last error message raised on this thread.
///
/// # Safety
/// `out` must be a valid pointer to a `char*` slot.
#[no_mangle]
pub unsafe extern "C" fn fb_last_error(out: *mut *mut c_char) -> FbStatus {
    if out.is_null() {
        return FbStatus::FbErrInvalidArgument;
    }
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    give_string(msg, out)
}

/// Parse and sort-check a problem from UTF-8 text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid slot; the
/// returned handle is released with `fb_problem_free`.
#[no_mangle]
pub unsafe extern "C" fn fb_problem_parse(
    text: *const c_char,
    out: *mut *mut FbProblem,
) -> FbStatus {
    if text.is_null() || out.is_null() {
        return FbStatus::FbErrInvalidArgument;
    }
    guarded(|| {
        let s = match CStr::from_ptr(text).to_str() {
            Ok(s) => s,
            Err(_) => {
                set_error("problem text is not valid UTF-8");
                return FbStatus::FbErrParse;
            }
        };
        match parse_problem(s) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(FbProblem { inner: p }));
                FbStatus::FbOk
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}

/// # Safety
/// `p` must be a handle from `fb_problem_parse` (or null).
#[no_mangle]
pub unsafe extern "C" fn fb_problem_free(p: *mut FbProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Render a problem back to its canonical text.
///
/// # Safety
/// `p` must be a live problem handle and `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn fb_problem_render(
    p: *const FbProblem,
    out: *mut *mut c_char,
) -> FbStatus {
    if p.is_null() || out.is_null() {
        return FbStatus::FbErrInvalidArgument;
    }
    guarded(|| give_string(pretty_problem(&(*p).inner), out))
}

/// Run the verification pipeline. `opts` may be null for defaults.
///
/// # Safety
/// `p` must be a live problem handle, `out` a valid slot; the returned
/// verdict is released with `fb_verdict_free`.
#[no_mangle]
pub unsafe extern "C" fn fb_verify(
    p: *const FbProblem,
    opts: *const FbOptions,
    out: *mut *mut FbVerdict,
) -> FbStatus {
    if p.is_null() || out.is_null() {
        return FbStatus::FbErrInvalidArgument;
    }
    guarded(|| {
        let options = options_from(opts.as_ref());
        match run_pipeline(&(*p).inner, &options) {
            Ok(v) => {
                let cex = v
                    .counterexample
                    .iter()
                    .flatten()
                    .filter_map(|(k, val)| {
                        CString::new(k.as_str()).ok().map(|c| (c, *val as u64))
                    })
                    .collect();
                *out = Box::into_raw(Box::new(FbVerdict { inner: v, cex }));
                FbStatus::FbOk
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}

/// # Safety
/// `v` must be a handle from `fb_verify` (or null).
#[no_mangle]
pub unsafe extern "C" fn fb_verdict_free(v: *mut FbVerdict) {
    if !v.is_null() {
        drop(Box::from_raw(v));
    }
}

/// # Safety
/// `v` must be a live verdict handle.
#[no_mangle]
pub unsafe extern "C" fn fb_verdict_status(v: *const FbVerdict) -> FbVerdictStatus {
    match (*v).inner.status {
        VerdictStatus::Valid => FbVerdictStatus::FbValid,
        VerdictStatus::Invalid => FbVerdictStatus::FbInvalid,
        VerdictStatus::Unknown => FbVerdictStatus::FbUnknown,
    }
}

/// Render the verdict report.
///
/// # Safety
/// `v` must be a live verdict handle and `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn fb_verdict_report(
    v: *const FbVerdict,
    format: FbReportFormat,
    out: *mut *mut c_char,
) -> FbStatus {
    if v.is_null() || out.is_null() {
        return FbStatus::FbErrInvalidArgument;
    }
    guarded(|| {
        let fmt = match format {
            FbReportFormat::FbReportHuman => ReportFormat::Human,
            FbReportFormat::FbReportLines => ReportFormat::Lines,
        };
        give_string(emit_report(&(*v).inner, fmt), out)
    })
}

/// The rule-application trace as JSON lines.
///
/// # Safety
/// `v` must be a live verdict handle and `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn fb_verdict_trace_jsonl(
    v: *const FbVerdict,
    out: *mut *mut c_char,
) -> FbStatus {
    if v.is_null() || out.is_null() {
        return FbStatus::FbErrInvalidArgument;
    }
    guarded(|| give_string((*v).inner.trace.to_jsonl(), out))
}

/// Number of variables in the counterexample (0 when there is none).
///
/// # Safety
/// `v` must be a live verdict handle.
#[no_mangle]
pub unsafe extern "C" fn fb_verdict_counterexample_len(v: *const FbVerdict) -> usize {
    if v.is_null() {
        return 0;
    }
    (*v).cex.len()
}

/// Fetch one counterexample binding. The name pointer stays owned by the
/// verdict and is valid until `fb_verdict_free`.
///
/// # Safety
/// `v` must be a live verdict handle; `name` and `value` must be valid
/// slots; `idx` must be below `fb_verdict_counterexample_len`.
#[no_mangle]
pub unsafe extern "C" fn fb_verdict_counterexample_at(
    v: *const FbVerdict,
    idx: usize,
    name: *mut *const c_char,
    value: *mut u64,
) -> FbStatus {
    if v.is_null() || name.is_null() || value.is_null() {
        return FbStatus::FbErrInvalidArgument;
    }
    let cex = &(*v).cex;
    match cex.get(idx) {
        Some((n, val)) => {
            *name = n.as_ptr();
            *value = *val;
            FbStatus::FbOk
        }
        None => {
            set_error(format!("counterexample index {idx} out of range"));
            FbStatus::FbErrInvalidArgument
        }
    }
}

/// Emit the B-bit bitwise-or benchmark problem as text.
///
/// # Safety
/// `out` must be a valid slot.
#[no_mangle]
pub unsafe extern "C" fn fb_gen_jolt_or(
    bits: u32,
    field: u64,
    out: *mut *mut c_char,
) -> FbStatus {
    if out.is_null() {
        return FbStatus::FbErrInvalidArgument;
    }
    guarded(|| match gen_jolt_or(bits, field) {
        Ok(p) => give_string(pretty_problem(&p), out),
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    })
}

/// Emit a seeded random context as text.
///
/// # Safety
/// `out` must be a valid slot.
#[no_mangle]
pub unsafe extern "C" fn fb_gen_random(
    seed: u64,
    field: u64,
    vars: u32,
    depth: u32,
    out: *mut *mut c_char,
) -> FbStatus {
    if out.is_null() {
        return FbStatus::FbErrInvalidArgument;
    }
    guarded(|| {
        if !fieldblast::term::is_prime(field) {
            set_error(format!("field order {field} is not prime"));
            return FbStatus::FbErrParse;
        }
        let p = gen_random(&RandomSpec {
            seed,
            prime: field,
            var_count: vars,
            depth,
        });
        give_string(pretty_problem(&p), out)
    })
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must come from a fieldblast function (or be null), and must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
