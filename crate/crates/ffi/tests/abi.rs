use std::ffi::CStr;
use std::ptr;

use wavegate_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(wg_last_error()) }.to_string_lossy().into_owned()
}

fn scheme(k: usize, h: f64, lambda: f64) -> *mut WgScheme {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { wg_scheme_new(k, h, lambda, -6.0, 6.0, &mut s) }, WgStatus::Ok, "{}", last_error());
    assert!(!s.is_null());
    s
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(wg_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn assemble_k0_blocks() {
    let (mut m, mut k0, mut km1, mut kp1) = ([0.0; 1], [0.0; 1], [0.0; 1], [0.0; 1]);
    let st = unsafe { wg_assemble(0, 1.0, m.as_mut_ptr(), k0.as_mut_ptr(), km1.as_mut_ptr(), kp1.as_mut_ptr(), 1) };
    assert_eq!(st, WgStatus::Ok);
    assert_eq!((m[0], k0[0], km1[0], kp1[0]), (1.0, 2.0, -1.0, -1.0));
}

#[test]
fn assemble_k1_transpose_pair() {
    let mut b = [[0.0; 4]; 4];
    let [m, k0, km1, kp1] = &mut b;
    let st = unsafe { wg_assemble(1, 0.5, m.as_mut_ptr(), k0.as_mut_ptr(), km1.as_mut_ptr(), kp1.as_mut_ptr(), 4) };
    assert_eq!(st, WgStatus::Ok);
    for i in 0..2 {
        for j in 0..2 {
            assert_eq!(b[2][i * 2 + j], b[3][j * 2 + i]);
            assert_eq!(b[1][i * 2 + j], b[1][j * 2 + i]);
        }
    }
    assert_eq!(b[0], [0.5, 0.0, 0.0, 0.5 / 3.0]);
}

#[test]
fn assemble_errors() {
    let mut buf = [0.0; 4];
    let p = buf.as_mut_ptr();
    assert_eq!(unsafe { wg_assemble(1, 1.0, p, p, p, p, 3) }, WgStatus::InvalidArgument);
    assert!(last_error().contains("need 4"));
    assert_eq!(unsafe { wg_assemble(9, 1.0, p, p, p, p, 100) }, WgStatus::ParameterDomain);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { wg_assemble(0, 1.0, ptr::null_mut(), p, p, p, 1) }, WgStatus::InvalidArgument);
    assert_eq!(unsafe { wg_assemble(0, 1.0, p, p, p, p, 1) }, WgStatus::Ok);
    assert_eq!(last_error(), "");
}

#[test]
fn cfl_limits() {
    let mut l = 0.0;
    assert_eq!(unsafe { wg_cfl_lambda_max(0, &mut l) }, WgStatus::Ok);
    assert!((l - 1.0).abs() < 1e-9);
    assert_eq!(unsafe { wg_cfl_lambda_max(1, &mut l) }, WgStatus::Ok);
    assert!((l - 1.0 / 3.0).abs() < 1e-6, "{l}");
    assert_eq!(unsafe { wg_cfl_lambda_max(1, ptr::null_mut()) }, WgStatus::InvalidArgument);
}

#[test]
fn scheme_rejects_unstable_courant() {
    let mut s = ptr::null_mut();
    let st = unsafe { wg_scheme_new(1, 0.5, 0.4, -6.0, 6.0, &mut s) };
    assert_eq!(st, WgStatus::CflViolation);
    assert!(s.is_null());
    assert!(last_error().contains("CFL"));
    assert_eq!(unsafe { wg_scheme_new(1, 0.7, 0.2, -6.0, 6.0, &mut s) }, WgStatus::ParameterDomain);
}

#[test]
fn run_conserves_energy_and_writes_back() {
    let s = scheme(1, 0.25, 0.3);
    let n = unsafe { wg_scheme_state_len(s) };
    assert_eq!(n, 48 * 2);
    assert_eq!(unsafe { wg_scheme_cells(s) }, 48);
    assert!((unsafe { wg_scheme_dt(s) } - 0.075).abs() < 1e-15);
    let mut un: Vec<f64> = (0..n).map(|i| ((i * 7919) % 97) as f64 / 97.0 - 0.5).collect();
    let mut unp1: Vec<f64> = un.iter().map(|x| 0.9 * x).collect();
    let before = un.clone();
    let (mut e, mut eo) = (0.0, 0.0);
    assert_eq!(unsafe { wg_scheme_energy(s, un.as_ptr(), unp1.as_ptr(), n, -1.0, 1.0, &mut e, &mut eo) }, WgStatus::Ok);
    let mut sum = WgRunSummary::default();
    let st = unsafe { wg_scheme_run(s, un.as_mut_ptr(), unp1.as_mut_ptr(), n, 3.0, -1.0, 1.0, &mut sum) };
    assert_eq!(st, WgStatus::Ok, "{}", last_error());
    assert_eq!(sum.steps, 40);
    assert!((sum.final_time - 3.0).abs() < 1e-12);
    assert_eq!(sum.e_total_initial, e);
    assert!((sum.e_total_final - e).abs() <= 1e-12 * e);
    assert!(sum.max_relative_drift <= 1e-12);
    assert!(sum.observed_integral > 0.0);
    assert_ne!(un, before);
    let mut e2 = 0.0;
    assert_eq!(unsafe { wg_scheme_energy(s, un.as_ptr(), unp1.as_ptr(), n, -1.0, 1.0, &mut e2, &mut eo) }, WgStatus::Ok);
    assert_eq!(e2, sum.e_total_final);
    assert_eq!(
        unsafe { wg_scheme_run(s, un.as_mut_ptr(), unp1.as_mut_ptr(), n - 1, 3.0, -1.0, 1.0, &mut sum) },
        WgStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { wg_scheme_run(s, un.as_mut_ptr(), unp1.as_mut_ptr(), n, 0.01, -1.0, 1.0, &mut sum) },
        WgStatus::ParameterDomain
    );
    unsafe { wg_scheme_free(s) };
}

#[test]
fn dispersion_table_access() {
    for k in 0..=2 {
        let lambda = [0.8, 0.3, 0.12][k];
        let mut t = ptr::null_mut();
        assert_eq!(unsafe { wg_dispersion_new(k, 1.0, lambda, &mut t) }, WgStatus::Ok);
        assert_eq!(unsafe { wg_table_branches(t) }, k + 1);
        let len = unsafe { wg_table_len(t) };
        assert!(len >= 1025);
        let mut phys = usize::MAX;
        assert_eq!(unsafe { wg_table_physical_branch(t, &mut phys) }, WgStatus::Ok);
        assert!(phys <= k);
        let mut first = WgDispersionSample::default();
        let mut last = WgDispersionSample::default();
        assert_eq!(unsafe { wg_table_sample(t, phys, 0, &mut first) }, WgStatus::Ok);
        assert_eq!(unsafe { wg_table_sample(t, phys, len - 1, &mut last) }, WgStatus::Ok);
        assert!((first.xi + std::f64::consts::PI).abs() < 1e-12 && (last.xi - std::f64::consts::PI).abs() < 1e-12);
        assert!((first.sigma - last.sigma).abs() <= 1e-10 * last.sigma.max(1.0));
        assert_eq!(unsafe { wg_table_sample(t, k + 1, 0, &mut first) }, WgStatus::InvalidArgument);
        unsafe { wg_table_free(t) };
    }
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { wg_dispersion_new(1, 1.0, 0.4, &mut t) }, WgStatus::CflViolation);
    assert!(t.is_null());
}

#[test]
fn pencil_observability() {
    let s = scheme(0, 0.5, 0.5);
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { wg_pencil_new(s, -1.0, 1.0, 2.5, &mut p) }, WgStatus::Ok, "{}", last_error());
    let dim = unsafe { wg_pencil_dim(p) };
    assert_eq!(dim, 48);
    let mut a = vec![0.0; dim * dim];
    let mut g = vec![0.0; dim * dim];
    assert_eq!(unsafe { wg_pencil_forms(p, a.as_mut_ptr(), g.as_mut_ptr(), dim * dim) }, WgStatus::Ok);
    for i in 0..dim {
        for j in 0..dim {
            assert_eq!(a[i * dim + j], a[j * dim + i]);
            assert_eq!(g[i * dim + j], g[j * dim + i]);
        }
    }
    let mut o = WgObservability::default();
    assert_eq!(unsafe { wg_pencil_observability(p, 1e-10, &mut o) }, WgStatus::Ok);
    assert!(o.mu_min > 0.0 && (o.c_t * o.mu_min - 1.0).abs() < 1e-12);
    assert!(o.c_t >= 1.0 / 2.5 - 1e-12);
    assert!(o.deflated_dim < dim && o.deflated_dim > dim / 2);
    assert_eq!(unsafe { wg_pencil_forms(p, ptr::null_mut(), ptr::null_mut(), dim * dim) }, WgStatus::Ok);
    assert_eq!(unsafe { wg_pencil_forms(p, a.as_mut_ptr(), g.as_mut_ptr(), 3) }, WgStatus::InvalidArgument);
    unsafe {
        wg_pencil_free(p);
        wg_scheme_free(s);
    }
}

#[test]
fn null_handles_are_harmless() {
    unsafe {
        wg_scheme_free(ptr::null_mut());
        wg_table_free(ptr::null_mut());
        wg_pencil_free(ptr::null_mut());
        assert_eq!(wg_scheme_state_len(ptr::null()), 0);
        assert!(wg_scheme_dt(ptr::null()).is_nan());
        assert_eq!(wg_table_len(ptr::null()), 0);
        assert_eq!(wg_pencil_dim(ptr::null()), 0);
        let mut o = WgObservability::default();
        assert_eq!(wg_pencil_observability(ptr::null(), 1e-10, &mut o), WgStatus::InvalidArgument);
        assert_eq!(last_error(), "null handle");
        let mut p = ptr::null_mut();
        assert_eq!(wg_pencil_new(ptr::null(), -1.0, 1.0, 1.0, &mut p), WgStatus::InvalidArgument);
        assert_eq!(wg_scheme_new(0, 0.5, 0.5, -6.0, 6.0, ptr::null_mut()), WgStatus::InvalidArgument);
    }
}

#[test]
fn errors_are_thread_local() {
    let mut l = 0.0;
    assert_eq!(unsafe { wg_cfl_lambda_max(42, &mut l) }, WgStatus::ParameterDomain);
    let other = std::thread::spawn(last_error).join().unwrap();
    assert_eq!(other, "");
    assert!(!last_error().is_empty());
}
