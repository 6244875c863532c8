use std::ffi::{CStr, CString};
use std::ptr;

use selig_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(selig_last_error()) }
        .to_str()
        .unwrap()
        .to_string()
}

const SCHEMA: &str = r#"{"covariates":[{"name":"x","class":"invariant"}]}"#;

fn tiny_panel() -> String {
    let mut s = String::from("unit_id,time,eligible,treatment,outcome,x\n");
    for i in 0..40 {
        let x = i % 2;
        let z = (i / 2) % 2;
        let y = 1.0 + z as f64 + 0.5 * x as f64;
        s.push_str(&format!("u{i},1,1,{z},{y},{x}\n"));
    }
    s
}

#[test]
fn version_is_a_string() {
    let v = unsafe { CStr::from_ptr(selig_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn text_dataset_round_trip() {
    let csv = c(&tiny_panel());
    let schema = c(SCHEMA);
    let mut ds = ptr::null_mut();
    let status = unsafe { selig_dataset_from_text(csv.as_ptr(), schema.as_ptr(), &mut ds) };
    assert_eq!(status, SeligStatus::Ok, "{}", last_error());
    assert_eq!(last_error(), "");
    unsafe {
        assert_eq!(selig_dataset_units(ds), 40);
        assert_eq!(selig_dataset_horizon(ds), 1);
    }

    let mut est = f64::NAN;
    let mut se = f64::NAN;
    let status = unsafe {
        selig_estimate(
            ds,
            c("tau@1:").as_ptr(),
            c("dr").as_ptr(),
            ptr::null(),
            &mut est,
            &mut se,
        )
    };
    assert_eq!(status, SeligStatus::Ok, "{}", last_error());
    assert!((est - 1.0).abs() < 1e-10, "{est}");
    assert!(se.is_finite() && se < 1e-6);
    unsafe { selig_dataset_free(ds) };
}

#[test]
fn simulated_report() {
    let mut ds = ptr::null_mut();
    let status = unsafe { selig_dataset_simulate(500, 0.0, false, false, 9, &mut ds) };
    assert_eq!(status, SeligStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { selig_dataset_horizon(ds) }, 3);

    let mut report = ptr::null_mut();
    let status = unsafe {
        selig_report_new(
            ds,
            c("tau@1:\ntau@2:*").as_ptr(),
            c("reg,dr").as_ptr(),
            c("history").as_ptr(),
            &mut report,
        )
    };
    assert_eq!(status, SeligStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { selig_report_len(report) }, 6);

    let mut label = ptr::null_mut();
    assert_eq!(
        unsafe { selig_report_label(report, 1, &mut label) },
        SeligStatus::Ok
    );
    assert_eq!(
        unsafe { CStr::from_ptr(label) }.to_str().unwrap(),
        "tau@1:/dr"
    );
    unsafe { selig_string_free(label) };

    let mut v = f64::NAN;
    assert_eq!(
        unsafe { selig_report_estimate(report, 0, &mut v) },
        SeligStatus::Ok
    );
    assert!((v - 1.0).abs() < 0.5, "{v}");
    assert_eq!(
        unsafe { selig_report_estimate(report, 6, &mut v) },
        SeligStatus::IndexOutOfRange
    );
    assert!(last_error().contains("row 6"));

    unsafe {
        selig_report_free(report);
        selig_dataset_free(ds);
    }
}

#[test]
fn bootstrap_interval_brackets_estimate() {
    let mut ds = ptr::null_mut();
    assert_eq!(
        unsafe { selig_dataset_simulate(300, 0.0, false, false, 4, &mut ds) },
        SeligStatus::Ok
    );
    let (mut est, mut lo, mut hi) = (0.0, 0.0, 0.0);
    let status = unsafe {
        selig_estimate_ci(
            ds,
            c("tau@1:").as_ptr(),
            c("dr").as_ptr(),
            ptr::null(),
            50,
            0.9,
            1,
            &mut est,
            &mut lo,
            &mut hi,
        )
    };
    assert_eq!(status, SeligStatus::Ok, "{}", last_error());
    assert!(lo < est && est < hi);
    unsafe { selig_dataset_free(ds) };
}

#[test]
fn oracle_truth_on_builtin_population() {
    let mut v = 0.0;
    let status = unsafe { selig_oracle_truth(c("d1").as_ptr(), c("tau@2:0").as_ptr(), &mut v) };
    assert_eq!(status, SeligStatus::Ok, "{}", last_error());
    assert!((v - 1.6).abs() < 1e-12);
}

#[test]
fn errors_map_to_status_codes() {
    let mut ds = ptr::null_mut();
    let status = unsafe { selig_dataset_from_text(ptr::null(), c(SCHEMA).as_ptr(), &mut ds) };
    assert_eq!(status, SeligStatus::NullPointer);
    assert!(last_error().contains("csv_text"));
    assert!(ds.is_null());

    let bad = c("unit_id,time,eligible,treatment,outcome,x\nu,1,1,2,0.0,1\n");
    let status = unsafe { selig_dataset_from_text(bad.as_ptr(), c(SCHEMA).as_ptr(), &mut ds) };
    assert_eq!(status, SeligStatus::Validation);
    assert!(!last_error().is_empty());

    let csv = c(&tiny_panel());
    assert_eq!(
        unsafe { selig_dataset_from_text(csv.as_ptr(), c(SCHEMA).as_ptr(), &mut ds) },
        SeligStatus::Ok
    );
    let mut v = 0.0;
    let status = unsafe {
        selig_estimate(
            ds,
            c("tau@9").as_ptr(),
            c("dr").as_ptr(),
            ptr::null(),
            &mut v,
            ptr::null_mut(),
        )
    };
    assert_eq!(status, SeligStatus::Validation);
    assert!(last_error().contains("tau@9"));

    let status = unsafe {
        selig_estimate(
            ds,
            c("tau@1:").as_ptr(),
            c("dr").as_ptr(),
            ptr::null(),
            ptr::null_mut(),
            ptr::null_mut(),
        )
    };
    assert_eq!(status, SeligStatus::NullPointer);

    let status = unsafe {
        selig_estimate(
            ptr::null(),
            c("tau@1:").as_ptr(),
            c("dr").as_ptr(),
            ptr::null(),
            &mut v,
            ptr::null_mut(),
        )
    };
    assert_eq!(status, SeligStatus::NullPointer);
    unsafe {
        assert_eq!(selig_dataset_units(ptr::null()), 0);
        selig_dataset_free(ds);
        selig_dataset_free(ptr::null_mut());
        selig_report_free(ptr::null_mut());
        selig_string_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/selig.h");
    assert!(header.contains("#ifndef SELIG_H"));
    assert!(header.contains("SELIG_STATUS_VALIDATION = 3"));
    assert!(header.contains("typedef struct SeligDataset SeligDataset;"));
    for f in [
        "selig_version",
        "selig_last_error",
        "selig_dataset_load",
        "selig_dataset_from_text",
        "selig_dataset_simulate",
        "selig_dataset_units",
        "selig_dataset_horizon",
        "selig_dataset_free",
        "selig_estimate",
        "selig_estimate_ci",
        "selig_report_new",
        "selig_report_len",
        "selig_report_estimate",
        "selig_report_label",
        "selig_report_free",
        "selig_string_free",
        "selig_oracle_truth",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
}
