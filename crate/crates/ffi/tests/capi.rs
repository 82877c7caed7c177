use std::ffi::CString;
use std::ptr;

use cramer_gmm_ffi::*;

fn last_error() -> String {
    let n = unsafe { cg_last_error_message(ptr::null_mut(), 0) };
    let mut buf = vec![0 as std::ffi::c_char; n];
    unsafe { cg_last_error_message(buf.as_mut_ptr(), n) };
    let bytes: Vec<u8> = buf.iter().take_while(|&&c| c != 0).map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn gmm1(w: &[f64], m: &[f64], s: &[f64]) -> *mut CgGmm1 {
    let mut out = ptr::null_mut();
    let st = unsafe { cg_gmm1_new(w.as_ptr(), m.as_ptr(), s.as_ptr(), w.len(), &mut out) };
    assert_eq!(st, CgStatus::Ok);
    out
}

#[test]
fn scalar_kernels() {
    assert!((cg_phi_cdf(0.0) - 0.5).abs() < 1e-15);
    assert!((cg_u(0.0) - cg_phi_pdf(0.0)).abs() < 1e-15);
    assert_eq!(cg_v(1.3), cg_v(-1.3));
}

#[test]
fn univariate_distance_and_gradient() {
    let a = gmm1(&[1.0], &[0.0], &[0.0]);
    let b = gmm1(&[1.0], &[1.0], &[0.0]);
    let mut d = 0.0;
    assert_eq!(unsafe { cg_c2_squared(a, b, &mut d) }, CgStatus::Ok);
    assert!((d - 1.0).abs() < 1e-8);

    let mut loss = 0.0;
    let (mut dw, mut dm, mut ds) = ([0.0], [0.0], [0.0]);
    let st = unsafe {
        cg_c2_squared_grad(a, b, 1, &mut loss, dw.as_mut_ptr(), dm.as_mut_ptr(), ds.as_mut_ptr())
    };
    assert_eq!(st, CgStatus::Ok);
    assert!((loss - d).abs() < 1e-12);
    assert!((dm[0] + 1.0).abs() < 1e-8);

    let st = unsafe {
        cg_c2_squared_grad(a, b, 2, &mut loss, dw.as_mut_ptr(), dm.as_mut_ptr(), ds.as_mut_ptr())
    };
    assert_eq!(st, CgStatus::DimensionMismatch);
    unsafe {
        assert_eq!(cg_gmm1_len(a), 1);
        cg_gmm1_free(a);
        cg_gmm1_free(b);
        cg_gmm1_free(ptr::null_mut());
    }
}

#[test]
fn invalid_input_sets_message() {
    let mut out = ptr::null_mut();
    let st = unsafe { cg_gmm1_new([0.4].as_ptr(), [0.0].as_ptr(), [1.0].as_ptr(), 1, &mut out) };
    assert_eq!(st, CgStatus::InvalidArgument);
    assert!(out.is_null());
    assert!(last_error().contains("weights"), "{}", last_error());

    let st = unsafe { cg_gmm1_new(ptr::null(), ptr::null(), ptr::null(), 1, &mut out) };
    assert_eq!(st, CgStatus::NullPointer);
    let mut d = 0.0;
    assert_eq!(unsafe { cg_c2_squared(ptr::null(), ptr::null(), &mut d) }, CgStatus::NullPointer);
}

#[test]
fn sliced_distance_round_trip_through_file() {
    let w = [0.5, 0.5];
    let m = [0.0, 0.0, 1.0, 2.0];
    let s = [1.0, 0.2, 0.0, 0.5, 0.3, 0.0, 0.0, 0.3];
    let mut a = ptr::null_mut();
    assert_eq!(
        unsafe { cg_gmmn_new(2, 2, w.as_ptr(), m.as_ptr(), s.as_ptr(), &mut a) },
        CgStatus::Ok
    );
    let mut b = ptr::null_mut();
    let mb = [0.5, 0.0, 1.0, 1.0];
    assert_eq!(
        unsafe { cg_gmmn_new(2, 2, w.as_ptr(), mb.as_ptr(), s.as_ptr(), &mut b) },
        CgStatus::Ok
    );
    let mut dirs = ptr::null_mut();
    assert_eq!(unsafe { cg_directions_equidistant_2d(7, 0.0, &mut dirs) }, CgStatus::Ok);
    assert_eq!(unsafe { cg_directions_len(dirs) }, 7);

    let mut d = 0.0;
    assert_eq!(unsafe { cg_sliced_c2_squared(a, b, dirs, &mut d) }, CgStatus::Ok);
    assert!(d > 0.0);
    let mut loss = 0.0;
    let mut dw = [0.0; 2];
    let mut dm = [0.0; 4];
    let mut ds = [0.0; 8];
    let st = unsafe {
        cg_sliced_c2_squared_grad(a, b, dirs, &mut loss, dw.as_mut_ptr(), dm.as_mut_ptr(), ds.as_mut_ptr())
    };
    assert_eq!(st, CgStatus::Ok);
    assert!((loss - d).abs() < 1e-12);
    assert!(dm.iter().any(|&g| g != 0.0));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("a.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { cg_gmmn_save(a, path.as_ptr()) }, CgStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { cg_gmmn_load(path.as_ptr(), &mut back) }, CgStatus::Ok);
    let mut d2 = 1.0;
    assert_eq!(unsafe { cg_sliced_c2_squared(a, back, dirs, &mut d2) }, CgStatus::Ok);
    assert_eq!(d2, 0.0);
    assert_eq!(unsafe { cg_gmmn_dim(back) }, 2);

    let missing = CString::new(dir.path().join("missing.json").to_str().unwrap()).unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { cg_gmmn_load(missing.as_ptr(), &mut none) }, CgStatus::Io);

    let mut u = ptr::null_mut();
    assert_eq!(unsafe { cg_directions_uniform(3, 5, 1, &mut u) }, CgStatus::Ok);
    assert_eq!(
        unsafe { cg_sliced_c2_squared(a, b, u, &mut d) },
        CgStatus::DimensionMismatch
    );
    unsafe {
        cg_gmmn_free(a);
        cg_gmmn_free(b);
        cg_gmmn_free(back);
        cg_directions_free(dirs);
        cg_directions_free(u);
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/cramer_gmm.h");
    for name in [
        "cg_last_error_message",
        "cg_gmm1_new",
        "cg_gmm1_free",
        "cg_c2_squared_grad",
        "cg_gmmn_new",
        "cg_gmmn_load",
        "cg_gmmn_save",
        "cg_directions_uniform",
        "cg_directions_equidistant_2d",
        "cg_sliced_c2_squared_grad",
        "typedef struct CgGmm1 CgGmm1",
        "CG_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
