use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use ntklab_ffi::*;

fn angles() -> Vec<f64> {
    (0..6).map(|k| -std::f64::consts::PI + k as f64 * std::f64::consts::PI / 3.0).collect()
}

#[test]
fn regression_handle_round_trip() {
    let arch = ntk_arch_default(NtkArchKind::Resnet, 5);
    let a = angles();
    let y: Vec<f64> = a.iter().map(|b| b.sin()).collect();
    let mut reg = ptr::null_mut();
    unsafe {
        assert_eq!(ntk_regression_fit(&arch, NtkKernelKind::Ntk, a.as_ptr(), y.as_ptr(), 6, &mut reg), NtkStatus::Ok);
        let mut v = 0.0;
        assert_eq!(ntk_regression_predict(reg, a[1], &mut v), NtkStatus::Ok);
        assert!((v - y[1]).abs() < 1e-8);
        let mut mu = 0.0;
        assert_eq!(ntk_regression_mu(reg, 1024, 0.5, &mut mu), NtkStatus::Ok);
        assert!(mu > 0.0 && mu <= 1.0, "{mu}");
        assert_eq!(ntk_regression_jitter(reg), 0.0);
        ntk_regression_free(reg);
        ntk_regression_free(ptr::null_mut());
    }
}

#[test]
fn kernel_profile_matches_pointwise_eval() {
    let arch = ntk_arch_default(NtkArchKind::Mlp, 3);
    let (mut gaps, mut vals) = (vec![0.0; 9], vec![0.0; 9]);
    unsafe {
        let s = ntk_kernel_profile(&arch, NtkKernelKind::Gp, 9, false, gaps.as_mut_ptr(), vals.as_mut_ptr());
        assert_eq!(s, NtkStatus::Ok);
        let x = [1.0, 0.0];
        let y = [gaps[4].cos(), gaps[4].sin()];
        let mut v = 0.0;
        assert_eq!(ntk_kernel_eval(&arch, NtkKernelKind::Gp, x.as_ptr(), y.as_ptr(), &mut v), NtkStatus::Ok);
        assert!((v - vals[4]).abs() < 1e-12);
    }
}

#[test]
fn network_handle_trains_and_reports_its_ntk() {
    let arch = ntk_arch_default(NtkArchKind::Resnet, 2);
    let a = angles();
    let y: Vec<f64> = a.iter().map(|b| b.cos()).collect();
    let mut net = ptr::null_mut();
    unsafe {
        assert_eq!(ntk_network_new(&arch, 32, NtkInit::NtkGaussian, 1, &mut net), NtkStatus::Ok);
        assert!(ntk_network_param_count(net) > 0);
        let mut g = vec![0.0; 36];
        assert_eq!(ntk_network_empirical_ntk(net, a.as_ptr(), 6, g.as_mut_ptr()), NtkStatus::Ok);
        assert!((g[1] - g[6]).abs() < 1e-10);
        let mut losses = vec![0.0; 51];
        let s = ntk_network_train_gd(net, a.as_ptr(), y.as_ptr(), 6, 0.2, 50, losses.as_mut_ptr());
        assert_eq!(s, NtkStatus::Ok);
        assert!(losses[50] < 0.5 * losses[0], "{losses:?}");
        let mut out = vec![0.0; 6];
        assert_eq!(ntk_network_forward(net, a.as_ptr(), 6, out.as_mut_ptr()), NtkStatus::Ok);
        let loss: f64 = out.iter().zip(&y).map(|(o, t)| 0.5 * (o - t) * (o - t)).sum();
        assert!((loss - losses[50]).abs() < 1e-10);
        ntk_network_free(net);
    }
}

#[test]
fn failures_report_status_and_message() {
    let bad = NtkArch { kind: NtkArchKind::Resnet, depth: 3, alpha: -1.0, sigma_w: 1.0, sigma_v: 1.0 };
    let mut net = ptr::null_mut();
    unsafe {
        assert_eq!(ntk_network_new(&bad, 8, NtkInit::NtkGaussian, 0, &mut net), NtkStatus::InvalidArgument);
        assert!(net.is_null());
        let msg = std::ffi::CStr::from_ptr(ntk_last_error()).to_string_lossy();
        assert!(msg.contains("alpha"), "{msg}");
        let arch = ntk_arch_default(NtkArchKind::Mlp, 2);
        let dup = [0.5, 0.5];
        let y = [1.0, -1.0];
        let mut reg = ptr::null_mut();
        let s = ntk_regression_fit(&arch, NtkKernelKind::Ntk, dup.as_ptr(), y.as_ptr(), 2, &mut reg);
        assert_eq!(s, NtkStatus::Numerical);
        assert_eq!(ntk_regression_fit(ptr::null(), NtkKernelKind::Ntk, dup.as_ptr(), y.as_ptr(), 2, &mut reg), NtkStatus::NullPointer);
    }
    assert!((ntk_bound_ratio(0.1, 5, 1.0, 1.0) - 0.3057).abs() < 1e-3);
}

/// Directory holding the static library built for this test run.
fn lib_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib = lib_dir().join("libntklab_ffi.a");
    if !lib.exists() {
        panic!("static library not found at {}", lib.display());
    }
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Wextra", "-Werror", "-I"])
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success(), "C build failed");
    let out = Command::new(&exe).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{}{}", text, String::from_utf8_lossy(&out.stderr));
    assert!(text.starts_with("ok "), "{text}");
}
