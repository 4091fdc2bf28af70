use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use fraclab_ffi::*;

fn name(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = fl_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn ifs_measure_round_trip() {
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(fl_measure_ifs(name("cantor").as_ptr(), 0.0, 0, 8, &mut m), FlStatus::Ok);
        assert_eq!(fl_measure_len(m), 256);
        assert_eq!(fl_measure_dim(m), 1);
        assert!((fl_measure_total_mass(m) - 1.0).abs() < 1e-12);
        let (mut d, mut e) = (0.0, 0.0);
        assert_eq!(fl_box_dimension(m, 1.0 / 4096.0, 0.5, &mut d, &mut e), FlStatus::Ok);
        assert!((d - 2f64.ln() / 3f64.ln()).abs() < 0.1, "{d}");

        let dir = tempfile::tempdir().unwrap();
        let path = name(dir.path().join("c.bin").to_str().unwrap());
        assert_eq!(fl_measure_save(m, path.as_ptr(), true), FlStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(fl_measure_load(path.as_ptr(), &mut back), FlStatus::Ok);
        let mut a = vec![0.0; 256];
        let mut b = vec![0.0; 256];
        assert_eq!(fl_measure_copy(m, a.as_mut_ptr(), ptr::null_mut()), FlStatus::Ok);
        assert_eq!(fl_measure_copy(back, b.as_mut_ptr(), ptr::null_mut()), FlStatus::Ok);
        assert_eq!(a, b);
        fl_measure_free(back);
        fl_measure_free(m);
    }
}

#[test]
fn from_points_and_queries() {
    let pts = [0.0, 0.0, 0.5, 0.0];
    let w = [0.5, 0.5];
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(fl_measure_from_points(2, pts.as_ptr(), w.as_ptr(), 2, 0.01, &mut m), FlStatus::Ok);
        let mut v = 0.0;
        assert_eq!(fl_ball_mass(m, pts.as_ptr(), 0.1, &mut v), FlStatus::Ok);
        assert_eq!(v, 0.5);
        // Two half-masses at distance 1/2: 2 * 0.25 * 2^s with s = 1.
        assert_eq!(fl_energy_spatial(m, 1.0, 0.01, &mut v), FlStatus::Ok);
        assert!((v - 1.0).abs() < 1e-12);
        let (mut re, mut im) = (0.0, 0.0);
        let xi = [1.0, 0.0];
        assert_eq!(fl_fourier_transform(m, xi.as_ptr(), &mut re, &mut im), FlStatus::Ok);
        // 0.5 + 0.5 e^{-πi} = 0.
        assert!(re.abs() < 1e-12 && im.abs() < 1e-12);
        assert_eq!(fl_spherical_average(m, 0.0, 64, &mut v), FlStatus::Ok);
        assert!((v - 1.0).abs() < 1e-12);
        fl_measure_free(m);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(fl_measure_ifs(name("nope").as_ptr(), 0.0, 0, 3, &mut m), FlStatus::InvalidArgument);
        assert!(m.is_null());
        assert!(last_error().contains("nope"));
        assert_eq!(fl_measure_ifs(ptr::null(), 0.0, 0, 3, &mut m), FlStatus::NullPointer);
        assert_eq!(fl_measure_len(ptr::null()), 0);
        fl_measure_free(ptr::null_mut());

        assert_eq!(fl_measure_ifs(name("sierpinski").as_ptr(), 0.0, 0, 4, &mut m), FlStatus::Ok);
        assert!(fl_last_error().is_null());
        let (mut d, mut e) = (0.0, 0.0);
        assert_eq!(fl_box_dimension(m, 1e-4, 0.5, &mut d, &mut e), FlStatus::ResolutionExceeded);
        assert_eq!(fl_box_dimension(m, 0.25, 0.5, &mut d, &mut e), FlStatus::InsufficientScales);
        let x = [0.1, 0.1];
        assert_eq!(fl_ball_mass(m, x.as_ptr(), 1e-6, &mut d), FlStatus::ResolutionExceeded);
        let bad = [f64::NAN, 0.0];
        let w = [1.0];
        let mut q = ptr::null_mut();
        assert_eq!(fl_measure_from_points(2, bad.as_ptr(), w.as_ptr(), 1, 0.1, &mut q), FlStatus::InvalidMeasure);
        let missing = name("/nonexistent/dir/m.txt");
        assert_eq!(fl_measure_load(missing.as_ptr(), &mut q), FlStatus::Io);
        fl_measure_free(m);
    }
}

#[test]
fn moran_and_version() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(fl_moran_dimension(name("four-corner").as_ptr(), 0.25, 0, &mut v), FlStatus::Ok);
    }
    assert!((v - 1.0).abs() < 1e-12);
    let ver = unsafe { CStr::from_ptr(fl_version()) }.to_str().unwrap();
    assert_eq!(ver, env!("CARGO_PKG_VERSION"));
}

/// Compiles tests/c/smoke.c against the generated header and the static
/// library; skipped when no C compiler is installed.
#[test]
fn c_program_links_and_runs() {
    let manifest = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join("libfraclab_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("points=729 "), "{text}");
}
