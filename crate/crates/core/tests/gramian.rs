use nalgebra::DVector;
use wavegate::gramian::{build_pencil, fit_rate, observability_constant, observability_row, write_ct_csv};
use wavegate::{Error, ObservationRegion, PeriodicMesh, Scheme, SchemeParams};

fn scheme(k: usize, lambda: f64, cells: usize) -> Scheme {
    let mesh = PeriodicMesh::with_cells(-6.0, 6.0, cells).unwrap();
    Scheme::new(SchemeParams::new(k, mesh.h, lambda).unwrap(), mesh).unwrap()
}

#[test]
fn constant_pair_lies_in_both_kernels() {
    let s = scheme(1, 0.3, 24);
    let p = build_pencil(&s, &ObservationRegion::default(), 2.5).unwrap();
    let n = s.state_len();
    let x = DVector::from_fn(2 * n, |i, _| f64::from(u8::from(i % 2 == 0)));
    let scale_a = p.a.amax();
    let scale_g = p.g.amax();
    assert!((&p.a * &x).amax() <= 1e-10 * scale_a, "A x = {:e}", (&p.a * &x).amax());
    assert!((&p.g * &x).amax() <= 1e-10 * scale_g, "G x = {:e}", (&p.g * &x).amax());
}

#[test]
fn observation_bounded_by_conservation() {
    for (k, lambda) in [(0, 1.0), (0, 0.5), (1, 0.3)] {
        let s = scheme(k, lambda, 24);
        let row = observability_row(&s, &ObservationRegion::default(), 2.5).unwrap();
        let t = row.steps as f64 * s.dt();
        assert!(row.c_t >= 1.0 / t, "k={k}: C_T = {}", row.c_t);
        assert_eq!(row.c_t, 1.0 / row.mu_min);
    }
}

#[test]
fn critical_case_near_continuum_constant() {
    let s = scheme(0, 1.0, 120);
    let p = build_pencil(&s, &ObservationRegion::default(), 2.5).unwrap();
    let c = observability_constant(&p, 1e-10).unwrap().c_t;
    assert!(c / 2.0 < 1.5 && 2.0 / c < 1.5, "{c}");
}

#[test]
fn short_horizon_is_unobservable_or_large() {
    // waves starting at the center cannot leave [-1, 1] before t = 1
    let s = scheme(0, 1.0, 48);
    let p = build_pencil(&s, &ObservationRegion::default(), 0.5).unwrap();
    match observability_constant(&p, 1e-10) {
        Err(Error::Unobservable { .. }) => {}
        Ok(o) => assert!(o.c_t > 1e6, "{}", o.c_t),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn rate_fit_on_k0() {
    let rows: Vec<(f64, f64)> = [12, 24, 48, 96]
        .iter()
        .map(|&cells| {
            let s = scheme(0, 0.3, cells);
            let r = observability_row(&s, &ObservationRegion::default(), 2.5).unwrap();
            (r.h, r.c_t)
        })
        .collect();
    let fit = fit_rate(&rows).unwrap();
    assert!((fit.r - 1.40).abs() <= 0.2 * 1.40, "r = {}", fit.r);
}

#[test]
fn ct_csv_rows() {
    let s = scheme(0, 0.5, 16);
    let r = observability_row(&s, &ObservationRegion::default(), 2.5).unwrap();
    let mut buf = Vec::new();
    write_ct_csv(&mut buf, &[r]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row.len(), 11);
    assert_eq!(row[0], "0");
    assert_eq!(row[6], "");
    assert_eq!(row[7], "false");
    assert_eq!(row[10].parse::<usize>().unwrap(), r.deflated_dim);
}
