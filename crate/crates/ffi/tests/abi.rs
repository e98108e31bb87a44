use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use plap_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(plap_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn barenblatt_handle_round_trip() {
    let mut h: *mut PlapBarenblatt = ptr::null_mut();
    assert_eq!(unsafe { plap_barenblatt_new(1, 3.0, 1.0, &mut h) }, PlapStatus::Ok);
    assert!(!h.is_null());
    let mut v = f64::NAN;
    let x = [0.0];
    assert_eq!(unsafe { plap_barenblatt_eval(h, x.as_ptr(), 1, 1.0, &mut v) }, PlapStatus::Ok);
    let core = plap_core::exact::BarenblattParams::new(1, 3.0, 1.0).unwrap();
    assert_eq!(v, core.eval(&x, 1.0).unwrap());
    let mut r = 0.0;
    assert_eq!(unsafe { plap_barenblatt_front_radius(h, 1.0, &mut r) }, PlapStatus::Ok);
    let mut outside = -1.0;
    let far = [r * 1.01];
    assert_eq!(unsafe { plap_barenblatt_eval(h, far.as_ptr(), 1, 1.0, &mut outside) }, PlapStatus::Ok);
    assert_eq!(outside, 0.0);
    let (mut m1, mut m2) = (0.0, 0.0);
    unsafe {
        assert_eq!(plap_barenblatt_mass(h, 1.0, &mut m1), PlapStatus::Ok);
        assert_eq!(plap_barenblatt_mass(h, 3.0, &mut m2), PlapStatus::Ok);
        plap_barenblatt_free(h);
    }
    assert!((m1 - m2).abs() < 1e-7 * m1);
}

#[test]
fn invalid_arguments_set_status_and_message() {
    let mut h: *mut PlapBarenblatt = ptr::null_mut();
    assert_eq!(unsafe { plap_barenblatt_new(1, 2.0, 1.0, &mut h) }, PlapStatus::InvalidArgument);
    assert!(h.is_null());
    assert!(last_error().contains("requires p > 2"), "{}", last_error());
    assert_eq!(unsafe { plap_barenblatt_new(1, 3.0, 1.0, ptr::null_mut()) }, PlapStatus::NullPointer);
    let mut v = 0.0;
    assert_eq!(
        unsafe { plap_barenblatt_eval(ptr::null(), [0.0].as_ptr(), 1, 1.0, &mut v) },
        PlapStatus::NullPointer
    );
    assert_eq!(unsafe { plap_field_len(ptr::null()) }, 0);
    unsafe {
        plap_barenblatt_free(ptr::null_mut());
        plap_field_free(ptr::null_mut());
        plap_string_free(ptr::null_mut());
    }
}

#[test]
fn success_clears_the_message() {
    let mut h: *mut PlapBarenblatt = ptr::null_mut();
    unsafe { plap_barenblatt_new(1, 1.0, 1.0, &mut h) };
    assert!(!last_error().is_empty());
    unsafe {
        assert_eq!(plap_barenblatt_new(1, 3.0, 1.0, &mut h), PlapStatus::Ok);
        plap_barenblatt_free(h);
    }
    assert!(last_error().is_empty());
}

#[test]
fn giant_field_matches_core() {
    let (lo, hi, cells) = ([0.0], [1.0], [41usize]);
    let mut f: *mut PlapField = ptr::null_mut();
    let st = unsafe { plap_giant_solve(1, lo.as_ptr(), hi.as_ptr(), cells.as_ptr(), 3.0, 0.0, &mut f) };
    assert_eq!(st, PlapStatus::Ok, "{}", last_error());
    let n = unsafe { plap_field_len(f) };
    assert_eq!(n, 41);
    let mut short = vec![0.0; n - 1];
    assert_eq!(
        unsafe { plap_field_values(f, short.as_mut_ptr(), short.len()) },
        PlapStatus::InvalidArgument
    );
    let mut buf = vec![0.0; n];
    assert_eq!(unsafe { plap_field_values(f, buf.as_mut_ptr(), n) }, PlapStatus::Ok);
    unsafe { plap_field_free(f) };
    assert_eq!(buf[0], 0.0);
    assert_eq!(buf[n - 1], 0.0);
    assert!(buf[1..n - 1].iter().all(|v| *v > 0.0));
    let peak = buf.iter().cloned().fold(0.0, f64::max);
    assert!((peak - 0.0433).abs() < 1e-3, "{peak}");
}

#[test]
fn run_experiment_returns_report_json() {
    let name = CString::new("dirac").unwrap();
    let mut json: *mut std::ffi::c_char = ptr::null_mut();
    let mut passed = -1;
    let st = unsafe { plap_run_experiment(name.as_ptr(), ptr::null(), &mut json, &mut passed) };
    assert_eq!(st, PlapStatus::Ok, "{}", last_error());
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { plap_string_free(json) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["name"], "dirac");
    assert_eq!(passed, 1);
    assert!(v["verdicts"].as_array().unwrap().len() >= 2);
}

#[test]
fn run_experiment_rejects_bad_input() {
    let mut json: *mut std::ffi::c_char = ptr::null_mut();
    let bogus = CString::new("bogus").unwrap();
    let st = unsafe { plap_run_experiment(bogus.as_ptr(), ptr::null(), &mut json, ptr::null_mut()) };
    assert_eq!(st, PlapStatus::InvalidArgument);
    assert!(json.is_null());
    let name = CString::new("giant").unwrap();
    let cfg = CString::new("[giant]\np = 2.0\n").unwrap();
    let st = unsafe { plap_run_experiment(name.as_ptr(), cfg.as_ptr(), &mut json, ptr::null_mut()) };
    assert_eq!(st, PlapStatus::InvalidArgument);
    assert!(last_error().contains("requires p > 2"));
}

fn header() -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/plap.h");
    std::fs::read_to_string(path).unwrap()
}

/// Every exported symbol is declared in the header and vice versa.
#[test]
fn header_matches_exports() {
    let src = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exported: Vec<String> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap().to_string())
        .collect();
    let h = header();
    let declared: Vec<String> = h
        .lines()
        .filter(|l| l.contains("plap_") && l.contains('('))
        .filter_map(|l| {
            let start = l.find("plap_")?;
            Some(l[start..].split('(').next()?.to_string())
        })
        .filter(|name| name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'))
        .collect();
    let mut a = exported.clone();
    let mut b = declared.clone();
    a.sort();
    b.sort();
    assert_eq!(a, b);
    for variant in ["OK = 0", "NULL_POINTER = 1", "INVALID_ARGUMENT = 2", "NOT_CONVERGED = 3", "NUMERICAL = 4", "IO = 5", "PANIC = 6"] {
        assert!(h.contains(&format!("PLAP_STATUS_{variant}")), "{variant}");
    }
}

/// Compiles a C program against the header and links the static library.
#[test]
fn c_program_links_against_header() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // The test binary lives in target/<profile>/deps; the staticlib one level up.
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libplap_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let c_src = dir.path().join("main.c");
    std::fs::write(
        &c_src,
        r#"#include <stdio.h>
#include "plap.h"
int main(void) {
  PlapBarenblatt *b = NULL;
  if (plap_barenblatt_new(1, 3.0, 1.0, &b) != PLAP_STATUS_OK) return 1;
  double x = 0.0, v = 0.0;
  if (plap_barenblatt_eval(b, &x, 1, 1.0, &v) != PLAP_STATUS_OK) return 2;
  plap_barenblatt_free(b);
  if (plap_barenblatt_new(1, 2.0, 1.0, &b) != PLAP_STATUS_INVALID_ARGUMENT) return 3;
  printf("%.17g\n%s\n", v, plap_last_error());
  return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let status = Command::new(&cc)
        .arg(&c_src)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let v: f64 = lines.next().unwrap().parse().unwrap();
    let core = plap_core::exact::BarenblattParams::new(1, 3.0, 1.0).unwrap();
    assert_eq!(v, core.eval(&[0.0], 1.0).unwrap());
    assert!(lines.next().unwrap().contains("requires p > 2"));
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc.to_string());
        }
    }
    Err(())
}
