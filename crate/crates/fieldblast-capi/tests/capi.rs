//! Exercises the C ABI exactly as a foreign binding would: through the
//! exported extern "C" functions and raw pointers.

use std::ffi::{c_char, CStr, CString};
use std::ptr;

use fieldblast_capi::*;

unsafe fn take_string(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = CStr::from_ptr(p).to_string_lossy().into_owned();
    fb_string_free(p);
    s
}

#[test]
fn version_is_exposed() {
    unsafe {
        let v = CStr::from_ptr(fb_version());
        assert!(!v.to_bytes().is_empty());
    }
}

#[test]
fn generate_parse_verify_valid() {
    unsafe {
        let mut text: *mut c_char = ptr::null_mut();
        assert_eq!(fb_gen_jolt_or(2, 5, &mut text), FbStatus::FbOk);
        let problem_text = take_string(text);
        let c_text = CString::new(problem_text).unwrap();

        let mut problem: *mut FbProblem = ptr::null_mut();
        assert_eq!(fb_problem_parse(c_text.as_ptr(), &mut problem), FbStatus::FbOk);

        let mut rendered: *mut c_char = ptr::null_mut();
        assert_eq!(fb_problem_render(problem, &mut rendered), FbStatus::FbOk);
        assert!(take_string(rendered).contains("(set-field 5)"));

        let opts = fb_options_default();
        let mut verdict: *mut FbVerdict = ptr::null_mut();
        assert_eq!(fb_verify(problem, &opts, &mut verdict), FbStatus::FbOk);
        assert_eq!(fb_verdict_status(verdict), FbVerdictStatus::FbValid);

        let mut report: *mut c_char = ptr::null_mut();
        assert_eq!(
            fb_verdict_report(verdict, FbReportFormat::FbReportLines, &mut report),
            FbStatus::FbOk
        );
        assert!(take_string(report).starts_with("status=valid"));

        let mut trace: *mut c_char = ptr::null_mut();
        assert_eq!(fb_verdict_trace_jsonl(verdict, &mut trace), FbStatus::FbOk);
        assert!(take_string(trace).contains("\"rule\""));

        fb_verdict_free(verdict);
        fb_problem_free(problem);
    }
}

#[test]
fn invalid_problem_reports_counterexample() {
    unsafe {
        let text =
            CString::new("(set-field 7) (declare-ff x) (goal (= (to-nat x) 3))").unwrap();
        let mut problem: *mut FbProblem = ptr::null_mut();
        assert_eq!(fb_problem_parse(text.as_ptr(), &mut problem), FbStatus::FbOk);
        let mut verdict: *mut FbVerdict = ptr::null_mut();
        assert_eq!(fb_verify(problem, ptr::null(), &mut verdict), FbStatus::FbOk);
        assert_eq!(fb_verdict_status(verdict), FbVerdictStatus::FbInvalid);

        let n = fb_verdict_counterexample_len(verdict);
        assert_eq!(n, 1);
        let mut name: *const c_char = ptr::null();
        let mut value: u64 = 99;
        assert_eq!(
            fb_verdict_counterexample_at(verdict, 0, &mut name, &mut value),
            FbStatus::FbOk
        );
        assert_eq!(CStr::from_ptr(name).to_str().unwrap(), "x");
        assert_eq!(value, 0);
        assert_eq!(
            fb_verdict_counterexample_at(verdict, 5, &mut name, &mut value),
            FbStatus::FbErrInvalidArgument
        );

        fb_verdict_free(verdict);
        fb_problem_free(problem);
    }
}

#[test]
fn parse_errors_surface_message_and_code() {
    unsafe {
        let text = CString::new("(set-field 8) (declare-ff x)").unwrap();
        let mut problem: *mut FbProblem = ptr::null_mut();
        assert_eq!(
            fb_problem_parse(text.as_ptr(), &mut problem),
            FbStatus::FbErrParse
        );
        let mut msg: *mut c_char = ptr::null_mut();
        assert_eq!(fb_last_error(&mut msg), FbStatus::FbOk);
        assert!(take_string(msg).contains("not prime"));

        assert_eq!(
            fb_problem_parse(ptr::null(), &mut problem),
            FbStatus::FbErrInvalidArgument
        );
    }
}

#[test]
fn generated_header_exists_with_core_surface() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/fieldblast.h");
    let text = std::fs::read_to_string(header).expect("cbindgen header present");
    for needle in [
        "typedef struct FbProblem FbProblem;",
        "typedef struct FbVerdict FbVerdict;",
        "fb_problem_parse",
        "fb_verify",
        "fb_verdict_status",
        "fb_string_free",
    ] {
        assert!(text.contains(needle), "header lacks {needle}");
    }
}
