use std::ffi::{CStr, CString};
use std::ptr;

use scfem_ffi::*;

fn last_error() -> String {
    let p = scfem_last_error();
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { scfem_string_free(p) };
    s
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(scfem_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn index_set_round_trip() {
    unsafe {
        let mut root = ptr::null_mut();
        assert_eq!(scfem_index_set_root(2, &mut root), ScfemStatus::Ok);
        let mut count = 0;
        let mut buf = [0u32; 8];
        assert_eq!(scfem_index_set_margin_entries(root, buf.as_mut_ptr(), buf.len(), &mut count), ScfemStatus::Ok);
        assert_eq!((count, &buf[..4]), (2, &[1, 2, 2, 1][..]));

        let mut grown = ptr::null_mut();
        let added = [2u32, 1];
        assert_eq!(scfem_index_set_enrich(root, added.as_ptr(), 1, &mut grown), ScfemStatus::Ok);
        let mut len = 0;
        assert_eq!(scfem_index_set_len(grown, &mut len), ScfemStatus::Ok);
        assert_eq!(len, 2);
        let mut entries = [0u32; 4];
        assert_eq!(scfem_index_set_entries(grown, entries.as_mut_ptr(), 4), ScfemStatus::Ok);
        assert_eq!(entries, [1, 1, 2, 1]);
        assert_eq!(scfem_index_set_entries(grown, entries.as_mut_ptr(), 3), ScfemStatus::BufferTooSmall);

        let bad = [2u32, 2];
        let mut out = ptr::null_mut();
        assert_eq!(scfem_index_set_enrich(root, bad.as_ptr(), 1, &mut out), ScfemStatus::Contract);
        assert!(out.is_null());
        assert!(last_error().contains("reduced margin"));

        scfem_index_set_free(grown);
        scfem_index_set_free(root);
        scfem_index_set_free(ptr::null_mut());
    }
}

#[test]
fn monotonicity_and_null_handling() {
    unsafe {
        let mut ok = false;
        let good = [1u32, 1, 2, 1];
        assert_eq!(scfem_is_monotone(good.as_ptr(), 2, 2, &mut ok), ScfemStatus::Ok);
        assert!(ok);
        let gap = [2u32, 1];
        assert_eq!(scfem_is_monotone(gap.as_ptr(), 1, 2, &mut ok), ScfemStatus::Ok);
        assert!(!ok);
        let mut len = 0;
        assert_eq!(scfem_index_set_len(ptr::null(), &mut len), ScfemStatus::NullPointer);
        assert_eq!(scfem_index_set_root(0, &mut ptr::null_mut()), ScfemStatus::InvalidArgument);
    }
}

#[test]
fn run_rejects_bad_config() {
    unsafe {
        let cfg = CString::new("problem = cookie\ntheta_x = 2\n").unwrap();
        let mut run = ptr::null_mut();
        assert_eq!(scfem_run_from_config(cfg.as_ptr(), &mut run), ScfemStatus::Config);
        assert!(run.is_null());
        let msg = last_error();
        assert!(msg.contains("family") && msg.contains("theta_x"), "{msg}");
    }
}

#[test]
fn small_run_through_the_abi() {
    unsafe {
        let problem = CString::new("fourier").unwrap();
        let family = CString::new("cc").unwrap();
        let mut run = ptr::null_mut();
        assert_eq!(scfem_run(problem.as_ptr(), family.as_ptr(), 5e-2, 2, 30, &mut run), ScfemStatus::Ok);
        let mut status = ScfemRunStatus::Failed;
        assert_eq!(scfem_run_status(run, &mut status), ScfemStatus::Ok);
        assert_eq!(status, ScfemRunStatus::Converged);
        let mut n = 0;
        assert_eq!(scfem_run_record_count(run, &mut n), ScfemStatus::Ok);
        assert!(n >= 1);
        let mut rec = std::mem::zeroed::<ScfemRecord>();
        assert_eq!(scfem_run_record(run, n - 1, &mut rec), ScfemStatus::Ok);
        assert_eq!(rec.kind, ScfemRefinement::Final);
        assert!(rec.eta < 5e-2);
        assert_eq!(scfem_run_record(run, n, &mut rec), ScfemStatus::InvalidArgument);

        let dir = std::env::temp_dir().join(format!("scfem-ffi-{}", std::process::id()));
        let cdir = CString::new(dir.to_str().unwrap()).unwrap();
        assert_eq!(scfem_run_write_outputs(run, cdir.as_ptr()), ScfemStatus::Ok);
        assert!(dir.join("run.csv").exists() && dir.join("mesh_final.txt").exists());
        std::fs::remove_dir_all(&dir).unwrap();
        scfem_run_free(run);
    }
}
