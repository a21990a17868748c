//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs with a plain `main` so the lines are printed even when cargo captures
//! test output. Pass `--ignored` (or `--include-ignored`) to add the full
//! rate tier; any other argument filters criteria by name.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavegate::gramian::{build_pencil, filtered_constant, fit_log_linear, fit_rate, observability_constant, FilterSpec};
use wavegate::packets::{mesh_table, trap_experiment, PacketSpec};
use wavegate::spectral::{cfl_margin, default_grid, eig_branches, sigma_at, symbol_derivative, DispersionTable, VgFlag};
use wavegate::{LocalMatrices, ObservationRegion, PeriodicMesh, Scheme, SchemeParams, StatePair};

type Outcome = (bool, String);

fn scheme(k: usize, lambda: f64, h: f64) -> Scheme {
    let mesh = PeriodicMesh::new(-6.0, 6.0, h).unwrap();
    Scheme::new(SchemeParams::new(k, h, lambda).unwrap(), mesh).unwrap()
}

fn table(k: usize, lambda: f64, h: f64) -> DispersionTable {
    let local = LocalMatrices::for_params(&SchemeParams::new(k, h, lambda).unwrap()).unwrap();
    eig_branches(&local, lambda, &default_grid(h)).unwrap()
}

fn ct(k: usize, lambda: f64, h: f64, t: f64) -> f64 {
    let s = scheme(k, lambda, h);
    let p = build_pencil(&s, &ObservationRegion::default(), t).unwrap();
    observability_constant(&p, 1e-10).unwrap().c_t
}

fn ratio(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::MIN, f64::max);
    let min = v.iter().copied().fold(f64::MAX, f64::min);
    max / min
}

fn c01_energy_conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for k in 0..=2 {
        let h = 12.0 / 64.0;
        let local = LocalMatrices::for_params(&SchemeParams::new(k, h, 0.1).unwrap()).unwrap();
        let lambda = 0.9 * cfl_margin(&local, 0.1, 256).unwrap().lambda_max;
        let s = scheme(k, lambda, h);
        let st = StatePair::random(s.params, &s.mesh, &mut rng);
        let out = s.run(&st, 1000.0 * s.dt(), &ObservationRegion::default()).unwrap();
        assert_eq!(out.steps, 1000);
        worst = worst.max(out.energy_drift());
    }
    (worst <= 1e-10, format!("max relative drift {worst:.3e} (tol 1e-10)"))
}

fn c02_k0_closed_form() -> Outcome {
    let h = 0.5;
    let local = LocalMatrices::for_params(&SchemeParams::new(0, h, 0.5).unwrap()).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..512 {
        let xi = -PI / h + 2.0 * PI / h * (i as f64 + 0.5) / 512.0;
        let s = sigma_at(&local, xi).unwrap()[0];
        let exact = 4.0 / (h * h) * (xi * h / 2.0).sin().powi(2);
        worst = worst.max((s - exact).abs() / exact);
    }
    (worst <= 1e-12, format!("max relative error {worst:.3e} (tol 1e-12)"))
}

fn physical_sigma(local: &LocalMatrices, xi: f64) -> f64 {
    sigma_at(local, xi).unwrap()[0]
}

fn c03_spectral_structure() -> Outcome {
    let h = 0.5;
    let mut ok = true;
    let mut notes = Vec::new();
    for k in 0..=2 {
        let local = LocalMatrices::for_params(&SchemeParams::new(k, h, 0.1).unwrap()).unwrap();
        let s0 = sigma_at(&local, 0.0).unwrap();
        ok &= s0[0].abs() <= 1e-10 / (h * h);
        ok &= s0[1..].iter().all(|&s| s > 0.0);
        let d = 1e-2;
        let f = |x: f64| physical_sigma(&local, x);
        let second = (-f(2.0 * d) + 16.0 * f(d) - 30.0 * f(0.0) + 16.0 * f(-d) - f(-2.0 * d)) / (12.0 * d * d);
        ok &= (second - 2.0).abs() <= 1e-3;
        notes.push(format!("k={k}: sigma''(0)={second:.6}"));
        if k == 1 {
            let sp = s0[1] * h * h;
            ok &= (sp - 36.0).abs() <= 1e-8;
            notes.push(format!("sigma_sp(0)h^2={sp:.10}"));
        }
    }
    (ok, notes.join(", "))
}

fn c04_group_velocity_limits() -> Outcome {
    let h = 0.5;
    let mut ok = true;
    let mut notes = Vec::new();
    for (k, lambda) in [(0, 0.8), (1, 0.3), (2, 0.12)] {
        let t = table(k, lambda, h);
        let i0 = t.index_of(0.0).unwrap();
        let v0 = t.physical_vg(i0);
        ok &= (v0 - 1.0).abs() <= 1e-6;
        let last = t.xis.len() - 1;
        let edge = [1, last - 1].map(|i| t.physical_vg(i).abs()).into_iter().fold(0.0, f64::max);
        ok &= edge <= 1e-3;
        notes.push(format!("k={k}: vg(0)={v0:.9} |vg| near pi/h {edge:.2e}"));
    }
    let t = table(0, 1.0, h);
    let vpi = t.physical_vg(t.xis.len() - 1);
    ok &= (vpi - 1.0).abs() <= 1e-6;
    notes.push(format!("k=0 lambda=1: vg(pi/h)={vpi:.9}"));
    let mut spurious: f64 = 0.0;
    for (k, lambda) in [(1, 0.1), (2, 0.05), (1, 0.3), (2, 0.12)] {
        let t = table(k, lambda, h);
        let dt = lambda * h;
        let i0 = t.index_of(0.0).unwrap();
        let last = t.xis.len() - 1;
        for b in (0..t.branch_count()).filter(|&b| b != t.physical_index) {
            for i in [1, i0 - 1, i0 + 1, last - 1] {
                let critical = (t.omega[b][i].abs() - PI / dt).abs() <= 1e-6 * PI / dt;
                if !critical && t.flags[b][i] != VgFlag::Critical {
                    spurious = spurious.max(t.vg[b][i].abs());
                }
            }
        }
    }
    ok &= spurious <= 1e-3;
    notes.push(format!("spurious endpoint |vg| <= {spurious:.2e}"));
    (ok, notes.join(", "))
}

fn c05_hellmann_feynman() -> Outcome {
    let h = 0.5;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for (k, lambda) in [(0, 0.5), (1, 0.2), (2, 0.1)] {
        let local = LocalMatrices::for_params(&SchemeParams::new(k, h, lambda).unwrap()).unwrap();
        let grid: Vec<f64> = (0..=400).map(|i| -PI / h + 2.0 * PI / h * i as f64 / 400.0).collect();
        let t = eig_branches(&local, lambda, &grid).unwrap();
        let nb = t.branch_count();
        // distance to the nearest other branch and its local minima
        let gap: Vec<f64> = (0..grid.len())
            .map(|i| {
                let mut g = f64::INFINITY;
                for a in 0..nb {
                    for b in (a + 1)..nb {
                        g = g.min((t.sigma[a][i] - t.sigma[b][i]).abs());
                    }
                }
                g
            })
            .collect();
        let minima: Vec<usize> = (1..grid.len() - 1)
            .filter(|&i| gap[i] <= gap[i - 1] && gap[i] <= gap[i + 1])
            .collect();
        let d = 1e-4 / h;
        for i in 2..grid.len() - 2 {
            if minima.iter().any(|&m| m.abs_diff(i) < 3) {
                continue;
            }
            for b in 0..nb {
                let s = t.sigma[b][i];
                let pick = |x: f64| {
                    let vals = sigma_at(&local, x).unwrap();
                    vals.into_iter().min_by(|p, q| (p - s).abs().total_cmp(&(q - s).abs())).unwrap()
                };
                let xi = grid[i];
                let fd = (pick(xi - 2.0 * d) - 8.0 * pick(xi - d) + 8.0 * pick(xi + d) - pick(xi + 2.0 * d))
                    / (12.0 * d);
                let hf = t.dsigma[b][i];
                let v = &t.vecs[b][i];
                let direct = (v.adjoint() * symbol_derivative(&local, xi) * v)[(0, 0)].re;
                let scale = 1.0 + hf.abs();
                worst = worst.max((hf - fd).abs() / scale).max((hf - direct).abs() / scale);
                checked += 1;
            }
        }
    }
    (worst <= 1e-6, format!("max |HF - FD| / (1 + |sigma'|) = {worst:.3e} over {checked} samples"))
}

fn c06_gramian_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let region = ObservationRegion::default();
    let mut worst: f64 = 0.0;
    for (k, lambda, h) in [(0, 1.0, 0.75), (1, 0.3, 0.75), (1, 0.2, 0.375)] {
        let s = scheme(k, lambda, h);
        assert!(s.mesh.cells <= 32);
        let p = build_pencil(&s, &region, 2.5).unwrap();
        let n = s.state_len();
        for _ in 0..10 {
            let x = DVector::from_fn(2 * n, |_, _| rng.gen_range(-1.0..1.0));
            let st = StatePair::new(x.rows(0, n).into(), x.rows(n, n).into(), s.params).unwrap();
            let run = s.run(&st, 2.5, &region).unwrap();
            let rq = x.dot(&(&p.g * &x)) / x.dot(&(&p.a * &x));
            let direct = run.observed_integral / s.energy(&st, None);
            worst = worst.max((rq - direct).abs() / direct.abs());
        }
    }
    (worst <= 1e-10, format!("max relative deviation {worst:.3e} over 30 states"))
}

const RATE_TARGETS: [(usize, f64, f64); 6] =
    [(0, 0.3, 1.40), (0, 0.9, 0.67), (1, 0.1, 1.50), (1, 0.3, 0.60), (2, 0.05, 2.20), (2, 0.15, 0.95)];

fn rate_table(hs: &[f64]) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (k, lambda, target) in RATE_TARGETS {
        let mut pts = Vec::new();
        let mut lost = None;
        for &h in hs {
            let s = scheme(k, lambda, h);
            let p = build_pencil(&s, &ObservationRegion::default(), 2.5).unwrap();
            match observability_constant(&p, 1e-10) {
                Ok(o) => pts.push((h, o.c_t)),
                Err(e) => {
                    lost = Some(format!("h={h}: {e}"));
                    break;
                }
            }
        }
        if let Some(msg) = lost {
            ok = false;
            notes.push(format!("k={k} lambda={lambda}: {msg}"));
            continue;
        }
        let fit = fit_rate(&pts).unwrap();
        let rel = (fit.r - target).abs() / target;
        ok &= rel <= 0.2;
        notes.push(format!("k={k} lambda={lambda}: r={:.3} (target {target}, {:+.1}%)", fit.r, 100.0 * (fit.r / target - 1.0)));
    }
    (ok, notes.join("; "))
}

fn c07_rates_smoke() -> Outcome {
    rate_table(&[1.0, 0.5, 0.25, 0.125])
}

fn c07_rates_full() -> Outcome {
    rate_table(&[1.0, 0.5, 0.25, 0.125, 0.0625])
}

fn c08_critical_case() -> Outcome {
    let v: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&h| ct(0, 1.0, h, 2.5)).collect();
    let bounded = ratio(&v) <= 1.25;
    let near = v.iter().all(|&c| c / 2.0 <= 1.5 && 2.0 / c <= 1.5);
    (bounded && near, format!("C_T = {v:.4?}, max/min {:.4}", ratio(&v)))
}

fn c09_filtered_recovery() -> Outcome {
    let region = ObservationRegion::default();
    let hs = [0.4, 0.2, 0.1, 0.05];
    let filter = FilterSpec::new(0.1, true, false).unwrap();
    let mut filtered = Vec::new();
    for &h in &hs {
        let s = scheme(1, 0.2, h);
        let t = mesh_table(&s.params, &s.mesh, 4).unwrap();
        filtered.push(filtered_constant(&s, &region, 2.5, &t, &filter).unwrap().c_t);
    }
    let growth = ct(1, 0.2, 0.05, 2.5) / ct(1, 0.2, 0.4, 2.5);
    let ok = ratio(&filtered) <= 3.0 && growth >= 1e3;
    (
        ok,
        format!(
            "filtered C_T = {filtered:.3?} (max/min {:.2}, tol 3); unfiltered growth {growth:.3e} (need >= 1e3)",
            ratio(&filtered)
        ),
    )
}

fn c10_order_comparison() -> Outcome {
    let region = ObservationRegion::default();
    let retention = [0.3, 0.5, 0.7, 0.9];
    let mut rows = Vec::new();
    for k in [0, 1] {
        let s = scheme(k, 0.2, 0.1);
        let t = mesh_table(&s.params, &s.mesh, 4).unwrap();
        let row: Vec<f64> = retention
            .iter()
            .map(|g| {
                let f = FilterSpec::new(1.0 - g, true, false).unwrap();
                filtered_constant(&s, &region, 2.4, &t, &f).unwrap().c_t
            })
            .collect();
        rows.push(row);
    }
    let monotone = rows.iter().all(|r| r.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9)));
    let at07 = rows[0][2] / rows[1][2];
    (
        monotone && at07 >= 10.0,
        format!(
            "P0 {:.3?}, P1 {:.3?} at retention {retention:?}; monotone {monotone}; P0/P1 at 0.7 = {at07:.2} (need >= 10)",
            rows[0], rows[1]
        ),
    )
}

fn c11_trapping_decay() -> Outcome {
    let spec = PacketSpec::default();
    let region = ObservationRegion::default();
    let mut rows = Vec::new();
    for h in [0.2, 0.1, 0.05, 0.025] {
        let mesh = PeriodicMesh::new(-6.0, 6.0, h).unwrap();
        let params = SchemeParams::new(1, h, 0.3).unwrap();
        rows.push(trap_experiment(&params, &mesh, &spec, 2.5, &region).unwrap());
    }
    let e0: Vec<f64> = rows.iter().map(|r| r.e0).collect();
    let obs: Vec<f64> = rows.iter().map(|r| r.obs_integral).collect();
    let decreasing = obs.windows(2).all(|w| w[1] < w[0]);
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.obs_integral)).collect();
    let fit = fit_log_linear(&pts, |h| h.powf(-spec.gamma / spec.s)).unwrap();
    let ok = ratio(&e0) <= 4.0 && decreasing && fit.r < 0.0 && fit.r2 >= 0.9;
    (
        ok,
        format!(
            "E0 max/min {:.4}; observed {obs:.6?}; slope {:.4} R^2 {:.4}",
            ratio(&e0),
            fit.r,
            fit.r2
        ),
    )
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let with_ignored = args.iter().any(|a| a == "--ignored" || a == "--include-ignored");
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let mut criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("c01_energy_conservation", c01_energy_conservation),
        ("c02_k0_closed_form", c02_k0_closed_form),
        ("c03_spectral_structure", c03_spectral_structure),
        ("c04_group_velocity_limits", c04_group_velocity_limits),
        ("c05_hellmann_feynman", c05_hellmann_feynman),
        ("c06_gramian_oracle", c06_gramian_oracle),
        ("c07_rates_smoke", c07_rates_smoke),
        ("c08_critical_case", c08_critical_case),
        ("c09_filtered_recovery", c09_filtered_recovery),
        ("c10_order_comparison", c10_order_comparison),
        ("c11_trapping_decay", c11_trapping_decay),
    ];
    if with_ignored {
        criteria.push(("c07_rates_full", c07_rates_full));
    } else {
        println!("skip c07_rates_full (run with --ignored)");
    }
    let mut failed = 0;
    for (name, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} {name} [{:.1}s]: {detail}",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {failed} failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
