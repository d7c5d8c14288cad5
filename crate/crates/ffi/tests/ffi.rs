use std::ffi::{CStr, CString};
use std::ptr;

use finform_ffi::*;

fn last_error() -> String {
    let p = finform_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn spring_config(tf: &str) -> *mut FinformConfig {
    let mut cfg = ptr::null_mut();
    unsafe {
        assert_eq!(finform_config_new(c("spring").as_ptr(), &mut cfg), FinformStatus::Ok);
        assert_eq!(finform_config_set(cfg, c(&format!("run.tf={tf}")).as_ptr()), FinformStatus::Ok);
    }
    cfg
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(finform_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn run_and_read_channels() {
    let cfg = spring_config("2");
    let mut trace = ptr::null_mut();
    unsafe {
        assert_eq!(finform_run(cfg, &mut trace), FinformStatus::Ok);
        let mut len = 0;
        assert_eq!(finform_trace_len(trace, &mut len), FinformStatus::Ok);
        assert!(len > 1000);

        let mut width = 0;
        assert_eq!(finform_trace_channel_width(trace, c("x").as_ptr(), &mut width), FinformStatus::Ok);
        assert_eq!(width, 2);
        let mut xs = vec![0.0; len * width];
        assert_eq!(finform_trace_channel_copy(trace, c("x").as_ptr(), xs.as_mut_ptr(), xs.len()), FinformStatus::Ok);
        assert_eq!(&xs[..2], &[1.0, 0.0]);

        let mut times = vec![f64::NAN; len];
        assert_eq!(finform_trace_times_copy(trace, times.as_mut_ptr(), len), FinformStatus::Ok);
        assert_eq!(times[0], 0.0);
        assert!((times[len - 1] - 2.0).abs() < 1e-9);

        let summary = CStr::from_ptr(finform_trace_summary(trace)).to_str().unwrap();
        assert!(summary.contains("spring"), "{summary}");

        finform_trace_free(trace);
        finform_config_free(cfg);
    }
}

#[test]
fn short_buffer_is_rejected() {
    let cfg = spring_config("0.1");
    let mut trace = ptr::null_mut();
    unsafe {
        assert_eq!(finform_run(cfg, &mut trace), FinformStatus::Ok);
        let mut buf = [0.0; 3];
        assert_eq!(finform_trace_channel_copy(trace, c("x").as_ptr(), buf.as_mut_ptr(), 3), FinformStatus::BufferTooSmall);
        assert!(last_error().contains("need"));
        finform_trace_free(trace);
        finform_config_free(cfg);
    }
}

#[test]
fn unknown_channel_and_scenario() {
    let cfg = spring_config("0.1");
    let mut trace = ptr::null_mut();
    let mut cfg2 = ptr::null_mut();
    unsafe {
        assert_eq!(finform_run(cfg, &mut trace), FinformStatus::Ok);
        let mut w = 0;
        assert_eq!(finform_trace_channel_width(trace, c("nope").as_ptr(), &mut w), FinformStatus::Simulation);
        assert!(last_error().contains("nope"));
        assert_ne!(finform_config_new(c("bicycle").as_ptr(), &mut cfg2), FinformStatus::Ok);
        assert!(cfg2.is_null());
        finform_trace_free(trace);
        finform_config_free(cfg);
    }
}

#[test]
fn bad_override_leaves_config_intact() {
    let cfg = spring_config("0.5");
    unsafe {
        assert_eq!(finform_config_set(cfg, c("lamda=2").as_ptr()), FinformStatus::Config);
        assert!(last_error().contains("lamda"));
        assert_eq!(finform_config_set(cfg, c("run.h=-1").as_ptr()), FinformStatus::Config);
        let mut trace = ptr::null_mut();
        assert_eq!(finform_run(cfg, &mut trace), FinformStatus::Ok);
        finform_trace_free(trace);
        finform_config_free(cfg);
    }
}

#[test]
fn null_arguments_are_reported() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(finform_config_new(ptr::null(), &mut cfg), FinformStatus::NullPointer);
        assert_eq!(finform_config_new(c("spring").as_ptr(), ptr::null_mut()), FinformStatus::NullPointer);
        let mut len = 0;
        assert_eq!(finform_trace_len(ptr::null(), &mut len), FinformStatus::NullPointer);
        assert!(last_error().contains("trace"));
        finform_config_free(ptr::null_mut());
        finform_trace_free(ptr::null_mut());
        assert!(finform_trace_summary(ptr::null()).is_null());
    }
}

#[test]
fn invalid_utf8_is_reported() {
    let bytes = [0xffu8, 0xfe, 0];
    let mut cfg = ptr::null_mut();
    let status = unsafe { finform_config_new(bytes.as_ptr().cast(), &mut cfg) };
    assert_eq!(status, FinformStatus::InvalidUtf8);
}

#[test]
fn config_file_and_csv_export() {
    let dir = tempfile::tempdir().unwrap();
    let ini = dir.path().join("run.ini");
    std::fs::write(&ini, "[scenario]\nname = spring\n\n[run]\ntf = 0.05\n").unwrap();
    let csv = dir.path().join("trace.csv");
    let mut cfg = ptr::null_mut();
    let mut trace = ptr::null_mut();
    unsafe {
        assert_eq!(finform_config_load(c(ini.to_str().unwrap()).as_ptr(), ptr::null(), &mut cfg), FinformStatus::Ok);
        assert_eq!(finform_run(cfg, &mut trace), FinformStatus::Ok);
        assert_eq!(finform_trace_export_csv(trace, c(csv.to_str().unwrap()).as_ptr(), 0), FinformStatus::Ok);
        let mut len = 0;
        finform_trace_len(trace, &mut len);
        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with("t,"));
        assert_eq!(text.lines().count(), len + 1);
        finform_trace_free(trace);
        finform_config_free(cfg);
    }
}

#[test]
fn missing_config_file_is_io_or_config() {
    let mut cfg = ptr::null_mut();
    let status = unsafe { finform_config_load(c("/nonexistent/run.ini").as_ptr(), ptr::null(), &mut cfg) };
    assert!(matches!(status, FinformStatus::Io | FinformStatus::Config), "{status:?}");
}

#[test]
fn abs_braking_distance_and_friction() {
    let mut cfg = ptr::null_mut();
    let mut trace = ptr::null_mut();
    unsafe {
        assert_eq!(finform_config_new(c("abs").as_ptr(), &mut cfg), FinformStatus::Ok);
        assert_eq!(finform_run(cfg, &mut trace), FinformStatus::Ok);
        let mut d = 0.0;
        assert_eq!(finform_trace_braking_distance(trace, &mut d), FinformStatus::Ok);
        assert!(d > 40.0 && d < 70.0, "{d}");
        finform_trace_free(trace);
        finform_config_free(cfg);

        let mut f = 0.0;
        assert_eq!(finform_lugre_friction(30.0, 0.1, 1.0, &mut f), FinformStatus::Ok);
        assert!(f.is_finite() && f > 0.0);
        assert_eq!(finform_lugre_friction(30.0, 1.5, 1.0, &mut f), FinformStatus::InvalidArgument);
        let mut s = 0.0;
        assert_eq!(finform_optimal_slip(1.0, 30.0, &mut s), FinformStatus::Ok);
        assert!(s > 0.0 && s < 1.0);
        assert_eq!(finform_optimal_slip(-1.0, 30.0, &mut s), FinformStatus::InvalidArgument);
    }
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/finform.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in ["finform_run", "finform_trace_free", "finform_last_error_message", "FINFORM_STATUS_OK"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(out) = std::process::Command::new("cc").args(["-fsyntax-only", "-x", "c", header]).output() else {
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
