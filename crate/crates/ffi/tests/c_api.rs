use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use petc_ffi::*;

const SCALAR: &str = r#"
[network]
delta = 1
[earliness]
r = 2
e_ref = 1
bound = 2
[[loops]]
a = [[-1.0]]
b = [[1.0]]
k = [[-1.0]]
rho = 0.5
h = "1/10"
k_bar = 10
initial_state = [1.0]
"#;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let mut len = 0;
    unsafe {
        assert_eq!(petc_last_error(buf.as_mut_ptr(), buf.len(), &mut len), PetcStatus::Ok);
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn scalar_project() -> *mut PetcProject {
    let text = CString::new(SCALAR).unwrap();
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(petc_project_from_toml(text.as_ptr(), &mut p), PetcStatus::Ok);
    }
    p
}

#[test]
fn scalar_project_round_trip() {
    let p = scalar_project();
    unsafe {
        let mut n = 0;
        assert_eq!(petc_project_num_loops(p, &mut n), PetcStatus::Ok);
        assert_eq!(n, 1);

        let (mut lo, mut hi) = (0, 0);
        assert_eq!(petc_project_region_bounds(p, 1, &mut lo, &mut hi), PetcStatus::NotAbstracted);
        assert_eq!(petc_project_abstract(p), PetcStatus::Ok);
        assert_eq!(petc_project_region_bounds(p, 1, &mut lo, &mut hi), PetcStatus::Ok);
        assert_eq!(lo, hi);
        assert_eq!(petc_project_region_bounds(p, 2, &mut lo, &mut hi), PetcStatus::InvalidInput);

        let x = [0.3f64];
        let mut region = 0;
        assert_eq!(petc_region_of_state(p, 1, x.as_ptr(), 1, &mut region), PetcStatus::Ok);
        assert_eq!(region, lo);
        assert_eq!(petc_region_of_state(p, 1, x.as_ptr(), 0, &mut region), PetcStatus::InvalidInput);

        let mut st = ptr::null_mut();
        assert_eq!(petc_project_synthesize(p, &mut st), PetcStatus::Ok);
        let mut w = 0;
        assert_eq!(petc_strategy_winning_len(st, &mut w), PetcStatus::Ok);
        assert!(w > 0);

        let state = CString::new(format!("{lo} 0 idle:0 0")).unwrap();
        let mut moves = [u32::MAX; 4];
        let mut count = 0;
        assert_eq!(petc_strategy_query(st, state.as_ptr(), moves.as_mut_ptr(), 4, &mut count), PetcStatus::Ok);
        assert_eq!(&moves[..count], &[0]);
        assert_eq!(petc_strategy_query(st, state.as_ptr(), ptr::null_mut(), 0, &mut count), PetcStatus::BufferTooSmall);
        let bad = CString::new(format!("{lo} 0 bad:0 0")).unwrap();
        assert_eq!(petc_strategy_query(st, bad.as_ptr(), moves.as_mut_ptr(), 4, &mut count), PetcStatus::NotWinning);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("s.txt").to_str().unwrap()).unwrap();
        assert_eq!(petc_strategy_write(st, path.as_ptr()), PetcStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(petc_strategy_read(path.as_ptr(), &mut back), PetcStatus::Ok);
        let mut w2 = 0;
        petc_strategy_winning_len(back, &mut w2);
        assert_eq!(w, w2);

        petc_strategy_free(back);
        petc_strategy_free(st);
        petc_project_free(p);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut p = ptr::null_mut();
        let text = CString::new("[network]\ndelta = 0\n").unwrap();
        assert_ne!(petc_project_from_toml(text.as_ptr(), &mut p), PetcStatus::Ok);
        assert!(p.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(petc_project_from_toml(ptr::null(), &mut p), PetcStatus::InvalidInput);
        assert_eq!(petc_project_from_toml(text.as_ptr(), ptr::null_mut()), PetcStatus::NullPointer);
        assert_eq!(petc_project_abstract(ptr::null_mut()), PetcStatus::NullPointer);
        assert!(last_error().contains("null"));

        let missing = CString::new("/nonexistent/petc.toml").unwrap();
        assert_ne!(petc_project_load(missing.as_ptr(), &mut p), PetcStatus::Ok);

        let mut small = [0 as c_char; 2];
        let mut len = 0;
        assert_eq!(petc_last_error(small.as_mut_ptr(), small.len(), &mut len), PetcStatus::BufferTooSmall);
        assert!(len > 2);

        petc_project_free(ptr::null_mut());
        petc_strategy_free(ptr::null_mut());
    }
}

#[test]
fn earliness_update_through_the_c_api() {
    let mut out = 9;
    unsafe {
        assert_eq!(petc_earliness_update(0, 6, 5, 2, 1, 2, &mut out), PetcStatus::Ok);
        assert_eq!(out, 1);
        assert_eq!(petc_earliness_update(2, 6, 6, 2, 1, 2, &mut out), PetcStatus::Ok);
        assert_eq!(out, 1);
        assert_eq!(petc_earliness_update(0, 6, 7, 2, 1, 2, &mut out), PetcStatus::InvalidInput);
        assert_eq!(CStr::from_ptr(petc_version()).to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}

fn target_dir() -> PathBuf {
    // tests/../target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libpetc_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "petc.h"
int main(void) {
    uint32_t e = 7;
    if (petc_earliness_update(1, 6, 5, 2, 1, 2, &e) != PETC_STATUS_OK || e != 2) return 1;
    PetcProject *p = NULL;
    if (petc_project_from_toml("not = [valid", &p) == PETC_STATUS_OK) return 2;
    char buf[256];
    size_t len = 0;
    if (petc_last_error(buf, sizeof buf, &len) != PETC_STATUS_OK || len == 0) return 3;
    printf("%s\n", petc_version());
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("main");
    let cc = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(cc.status.success(), "{}", String::from_utf8_lossy(&cc.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
