//! Frequency symbol, branch-tracked dispersion relations and group velocities.
//!
//! For a wavenumber `xi` in the Brillouin zone `[-pi/h, pi/h]` the scheme
//! decouples into the `(k+1) x (k+1)` generalized Hermitian problem
//! `K(xi) v = sigma M v` with `K(xi) = K0 + Km1 e^{-i xi h} + Kp1 e^{i xi h}`.
//! The leapfrog step turns each eigenvalue into a temporal frequency
//! `omega = sign(xi) (2/dt) asin(sqrt(sigma) dt / 2)`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::basis::{fmt17, LocalMatrices, SchemeParams};
use crate::error::{Error, Result};
use crate::linalg::{generalized_hermitian_eig, herm_form, m_inner};

/// Minimum overlap accepted when matching eigenvectors between grid points.
pub const TRACKING_THRESHOLD: f64 = 0.5;
/// Physical group velocity floor that delimits the positive band.
pub const VG_FLOOR: f64 = 1e-6;
/// Relative distance to the stability boundary treated as critical.
const CRITICAL_EPS: f64 = 1e-8;
/// `sigma h^2` below this is treated as zero.
const ZERO_SIGMA: f64 = 1e-12;

/// The symbol matrix at one wavenumber.
#[derive(Debug, Clone)]
pub struct SymbolSample {
    pub xi: f64,
    pub kxi: DMatrix<Complex64>,
}

fn zone_bound(h: f64) -> f64 {
    PI / h
}

/// `K(xi) = K0 + Km1 e^{-i xi h} + Kp1 e^{i xi h}`.
pub fn symbol(local: &LocalMatrices, xi: f64) -> Result<SymbolSample> {
    let bound = zone_bound(local.h);
    if !(xi.abs() <= bound + 1e-12 * bound.max(1.0)) {
        return Err(Error::OutsideZone { xi, bound });
    }
    // expanded around the block sum, with e^{i t} - 1 = -2 sin^2(t/2) + i sin t
    let theta = xi * local.h;
    let half = (theta / 2.0).sin();
    let dm = Complex64::new(-2.0 * half * half, -theta.sin());
    let dp = dm.conj();
    let n = local.dim();
    let kxi = DMatrix::from_fn(n, n, |i, j| {
        let sum = local.k0[(i, j)] + local.km1[(i, j)] + local.kp1[(i, j)];
        Complex64::new(sum, 0.0) + dm * local.km1[(i, j)] + dp * local.kp1[(i, j)]
    });
    Ok(SymbolSample { xi, kxi })
}

/// `dK/dxi = i h (-Km1 e^{-i xi h} + Kp1 e^{i xi h})`.
pub fn symbol_derivative(local: &LocalMatrices, xi: f64) -> DMatrix<Complex64> {
    let theta = xi * local.h;
    let em = Complex64::new(theta.cos(), -theta.sin());
    let ep = em.conj();
    let ih = Complex64::new(0.0, local.h);
    let n = local.dim();
    DMatrix::from_fn(n, n, |i, j| ih * (-em * local.km1[(i, j)] + ep * local.kp1[(i, j)]))
}

/// Unordered eigenpairs at a single wavenumber (ascending eigenvalues).
pub fn eigenpairs(local: &LocalMatrices, xi: f64) -> Result<(Vec<f64>, Vec<DVector<Complex64>>)> {
    let s = symbol(local, xi)?;
    generalized_hermitian_eig(&s.kxi, &local.m)
}

/// Ascending eigenvalues at a single wavenumber.
pub fn sigma_at(local: &LocalMatrices, xi: f64) -> Result<Vec<f64>> {
    Ok(eigenpairs(local, xi)?.0)
}

/// Discrete temporal frequency of a branch value.
pub fn temporal_frequency(sigma: f64, xi: f64, dt: f64) -> Result<f64> {
    let ratio = sigma * dt * dt / 4.0;
    if ratio > 1.0 + 1e-12 {
        return Err(Error::CflViolation {
            ratio,
            lambda_max: f64::NAN,
        });
    }
    let s = (sigma.max(0.0).sqrt() * dt / 2.0).min(1.0);
    let sign = if xi > 0.0 {
        1.0
    } else if xi < 0.0 {
        -1.0
    } else {
        0.0
    };
    Ok(sign * 2.0 / dt * s.asin())
}

/// How a group velocity value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VgFlag {
    /// Closed-form Hellmann–Feynman evaluation.
    Ok,
    /// Near the stability boundary; extrapolated from neighbours.
    Critical,
    /// Near `sigma = 0`; analytic limit or extrapolation.
    OriginLimit,
}

impl VgFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            VgFlag::Ok => "ok",
            VgFlag::Critical => "critical",
            VgFlag::OriginLimit => "origin-limit",
        }
    }
}

/// Branch-tracked dispersion data over a sorted wavenumber grid.
///
/// All per-branch arrays are indexed `[branch][grid index]`.
#[derive(Debug, Clone)]
pub struct DispersionTable {
    pub params: SchemeParams,
    pub xis: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    pub vg: Vec<Vec<f64>>,
    pub flags: Vec<Vec<VgFlag>>,
    /// Hellmann–Feynman derivative `d sigma / d xi`.
    pub dsigma: Vec<Vec<f64>>,
    pub vecs: Vec<Vec<DVector<Complex64>>>,
    pub physical_index: usize,
}

/// Tracks eigen-branches by maximal `M`-overlap and fills a [`DispersionTable`].
///
/// The grid must be sorted, lie inside the zone and contain `0` and `+-pi/h`.
pub fn eig_branches(local: &LocalMatrices, lambda: f64, xi_grid: &[f64]) -> Result<DispersionTable> {
    let params = SchemeParams::new(local.k, local.h, lambda)?;
    let h = local.h;
    let bound = zone_bound(h);
    if xi_grid.len() < 3 || xi_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::ParameterDomain("wavenumber grid must be strictly increasing with >= 3 points".into()));
    }
    let has = |x: f64| xi_grid.iter().any(|&g| (g - x).abs() <= 1e-12 * bound);
    if !has(0.0) || !has(bound) || !has(-bound) {
        return Err(Error::ParameterDomain("wavenumber grid must include 0 and +-pi/h".into()));
    }

    let n = local.dim();
    let solved: Vec<(Vec<f64>, Vec<DVector<Complex64>>)> =
        xi_grid.iter().map(|&xi| eigenpairs(local, xi)).collect::<Result<_>>()?;

    let npts = xi_grid.len();
    let mut sigma = vec![vec![0.0; npts]; n];
    let mut vecs: Vec<Vec<DVector<Complex64>>> = vec![Vec::with_capacity(npts); n];
    for b in 0..n {
        sigma[b][0] = solved[0].0[b];
        vecs[b].push(solved[0].1[b].clone());
    }
    for i in 1..npts {
        let (vals, cand) = &solved[i];
        let mut pairs = Vec::with_capacity(n * n);
        for b in 0..n {
            for (c, v) in cand.iter().enumerate() {
                pairs.push((m_inner(&vecs[b][i - 1], &local.m, v).norm(), b, c));
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut branch_done = vec![false; n];
        let mut cand_done = vec![false; n];
        let mut assigned = vec![usize::MAX; n];
        for (ov, b, c) in pairs {
            if branch_done[b] || cand_done[c] {
                continue;
            }
            if ov < TRACKING_THRESHOLD {
                return Err(Error::TrackingFailure { xi: xi_grid[i], overlap: ov });
            }
            branch_done[b] = true;
            cand_done[c] = true;
            assigned[b] = c;
        }
        for b in 0..n {
            let c = assigned[b];
            sigma[b][i] = vals[c];
            vecs[b].push(cand[c].clone());
        }
    }

    let i0 = xi_grid
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .expect("non-empty grid");
    let mut e0 = DVector::zeros(n);
    e0[0] = Complex64::new(1.0, 0.0);
    let physical_index = (0..n)
        .max_by(|&a, &b| {
            let oa = m_inner(&vecs[a][i0], &local.m, &e0).norm();
            let ob = m_inner(&vecs[b][i0], &local.m, &e0).norm();
            oa.total_cmp(&ob)
        })
        .expect("at least one branch");

    let dt = params.dt();
    let mut omega = vec![vec![0.0; npts]; n];
    let mut dsigma = vec![vec![0.0; npts]; n];
    for i in 0..npts {
        let dk = symbol_derivative(local, xi_grid[i]);
        for b in 0..n {
            omega[b][i] = temporal_frequency(sigma[b][i], xi_grid[i], dt).map_err(|_| {
                let margin = sigma[b][i] * dt * dt / 4.0;
                Error::CflViolation {
                    ratio: margin,
                    lambda_max: lambda / margin.sqrt(),
                }
            })?;
            dsigma[b][i] = herm_form(&vecs[b][i], &dk, &vecs[b][i]).re;
        }
    }

    let mut table = DispersionTable {
        params,
        xis: xi_grid.to_vec(),
        sigma,
        omega,
        vg: vec![vec![0.0; npts]; n],
        flags: vec![vec![VgFlag::Ok; npts]; n],
        dsigma,
        vecs,
        physical_index,
    };
    for b in 0..n {
        for i in 0..npts {
            let (v, f) = table.raw_group_velocity(b, i);
            table.vg[b][i] = v;
            table.flags[b][i] = f;
        }
        for i in 0..npts {
            if table.flags[b][i] != VgFlag::Ok && !(b == physical_index && table.is_origin(i)) {
                table.vg[b][i] = table.extrapolate_vg(b, i);
            }
        }
    }
    Ok(table)
}

impl DispersionTable {
    pub fn branch_count(&self) -> usize {
        self.sigma.len()
    }

    pub fn h(&self) -> f64 {
        self.params.h
    }

    /// Index of the grid point closest to `xi`.
    pub fn nearest_index(&self, xi: f64) -> usize {
        match self.xis.binary_search_by(|g| g.total_cmp(&xi)) {
            Ok(i) => i,
            Err(i) => {
                if i == 0 {
                    0
                } else if i >= self.xis.len() {
                    self.xis.len() - 1
                } else if (self.xis[i] - xi).abs() < (xi - self.xis[i - 1]).abs() {
                    i
                } else {
                    i - 1
                }
            }
        }
    }

    /// Index of `xi` on the grid, if present to rounding.
    pub fn index_of(&self, xi: f64) -> Option<usize> {
        let i = self.nearest_index(xi);
        let tol = 1e-9 * PI / self.h();
        ((self.xis[i] - xi).abs() <= tol).then_some(i)
    }

    fn is_origin(&self, i: usize) -> bool {
        self.sigma[self.physical_index][i] * self.h() * self.h() <= ZERO_SIGMA
    }

    fn classify(&self, b: usize, i: usize) -> VgFlag {
        let dt = self.params.dt();
        let s = self.sigma[b][i];
        if s * self.h() * self.h() <= ZERO_SIGMA {
            VgFlag::OriginLimit
        } else if 4.0 - s * dt * dt <= 4.0 * CRITICAL_EPS {
            VgFlag::Critical
        } else {
            VgFlag::Ok
        }
    }

    fn raw_group_velocity(&self, b: usize, i: usize) -> (f64, VgFlag) {
        let flag = self.classify(b, i);
        match flag {
            VgFlag::OriginLimit if b == self.physical_index => (1.0, flag),
            VgFlag::Ok => {
                let dt = self.params.dt();
                let s = self.sigma[b][i];
                let sign = if self.xis[i] < 0.0 { -1.0 } else { 1.0 };
                let v = sign * self.dsigma[b][i] / (s.sqrt() * (4.0 - s * dt * dt).sqrt());
                (v, flag)
            }
            _ => (f64::NAN, flag),
        }
    }

    /// Quadratic extrapolation from the three nearest regular samples on one side.
    fn extrapolate_vg(&self, b: usize, i: usize) -> f64 {
        let regular = |j: usize| self.flags[b][j] == VgFlag::Ok;
        let left: Vec<usize> = (0..i).rev().filter(|&j| regular(j)).take(3).collect();
        let right: Vec<usize> = ((i + 1)..self.xis.len()).filter(|&j| regular(j)).take(3).collect();
        let pick = match (left.len(), right.len()) {
            (3, 3) => {
                if self.xis[i] - self.xis[left[0]] <= self.xis[right[0]] - self.xis[i] {
                    left
                } else {
                    right
                }
            }
            (3, _) => left,
            (_, 3) => right,
            _ => return f64::NAN,
        };
        let x = self.xis[i];
        // Lagrange form through the three samples
        let mut acc = 0.0;
        for a in 0..3 {
            let mut w = 1.0;
            for c in 0..3 {
                if a != c {
                    w *= (x - self.xis[pick[c]]) / (self.xis[pick[a]] - self.xis[pick[c]]);
                }
            }
            acc += w * self.vg[b][pick[a]];
        }
        acc
    }

    /// Group velocity of branch `b` at grid index `i` together with its flag.
    pub fn group_velocity(&self, b: usize, i: usize) -> (f64, VgFlag) {
        (self.vg[b][i], self.flags[b][i])
    }

    /// Physical-branch group velocity at grid index `i`.
    pub fn physical_vg(&self, i: usize) -> f64 {
        self.vg[self.physical_index][i]
    }

    /// Writes `dispersion.csv` rows sorted by wavenumber then branch.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "xi,branch,sigma,omega,vg,is_physical,flag")?;
        for i in 0..self.xis.len() {
            for b in 0..self.branch_count() {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    fmt17(self.xis[i]),
                    b,
                    fmt17(self.sigma[b][i]),
                    fmt17(self.omega[b][i]),
                    fmt17(self.vg[b][i]),
                    u8::from(b == self.physical_index),
                    self.flags[b][i].as_str()
                )?;
            }
        }
        Ok(())
    }
}

/// Uniform grid of `n` points on `[-pi/h, pi/h]` plus geometric refinement
/// (`levels` halvings of the spacing) around `0` and `+-pi/h`.
pub fn refined_grid(h: f64, n: usize, levels: u32) -> Vec<f64> {
    let bound = zone_bound(h);
    let n = n.max(3) | 1;
    let step = 2.0 * bound / (n - 1) as f64;
    let mut g: Vec<f64> = (0..n).map(|i| -bound + step * i as f64).collect();
    g[n / 2] = 0.0;
    g[n - 1] = bound;
    for l in 1..=levels {
        let d = step / 2f64.powi(l as i32);
        g.extend([-d, d, -bound + d, bound - d]);
    }
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * bound);
    g
}

/// Default grid: 1025 uniform points with 10 refinement levels.
pub fn default_grid(h: f64) -> Vec<f64> {
    refined_grid(h, 1025, 10)
}

/// Grid of the discrete frequencies `2 pi m / (J h)` of a periodic mesh of
/// `cells` cells, each interval subdivided `refine` times.
pub fn mesh_grid(cells: usize, h: f64, refine: usize) -> Vec<f64> {
    let refine = refine.max(1);
    let half = (cells / 2 * refine) as i64;
    let d = 2.0 * PI / (cells as f64 * h) / refine as f64;
    let bound = zone_bound(h);
    (-half..=half)
        .map(|m| {
            if m == half {
                bound
            } else if m == -half {
                -bound
            } else {
                m as f64 * d
            }
        })
        .collect()
}

/// Largest `sigma dt^2 / 4` over the zone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CflMargin {
    /// `max_{xi, m} sigma_m(xi) dt^2 / 4`; stable iff `<= 1`.
    pub max_ratio: f64,
    pub argmax_xi: f64,
    /// The same maximum restricted to the physical branch.
    pub physical_ratio: f64,
    /// Largest stable CFL ratio, `2 / (h sqrt(max sigma))`.
    pub lambda_max: f64,
}

impl CflMargin {
    /// Stability of every branch (`max sigma dt^2 <= 4`).
    pub fn is_stable(&self) -> bool {
        self.max_ratio <= 1.0 + 1e-12
    }

    /// Strict stability of the physical branch.
    pub fn physical_strict(&self) -> bool {
        self.physical_ratio < 1.0
    }
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let endpoints = [(a, f(a)), (b, f(b)), (c, fc), (d, fd)];
    endpoints
        .into_iter()
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .expect("non-empty")
}

/// Scans `[0, pi/h]` (the spectrum is even in `xi`) for the CFL margin.
pub fn cfl_margin(local: &LocalMatrices, lambda: f64, n_samples: usize) -> Result<CflMargin> {
    if n_samples < 64 {
        return Err(Error::ParameterDomain(format!("n_samples must be >= 64, got {n_samples}")));
    }
    let h = local.h;
    let bound = zone_bound(h);
    let step = bound / (n_samples - 1) as f64;
    let xs: Vec<f64> = (0..n_samples).map(|i| (step * i as f64).min(bound)).collect();
    let top = |xi: f64| sigma_at(local, xi).map(|s| *s.last().expect("k+1 >= 1 eigenvalues"));
    let low = |xi: f64| sigma_at(local, xi).map(|s| s[0]);
    let tops: Vec<f64> = xs.iter().map(|&x| top(x)).collect::<Result<_>>()?;

    let refine = |vals: &[f64], f: &dyn Fn(f64) -> f64| -> (f64, f64) {
        let (imax, _) = vals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty scan");
        let a = xs[imax.saturating_sub(1)];
        let b = xs[(imax + 1).min(xs.len() - 1)];
        let (x, v) = golden_max(f, a, b);
        if v >= vals[imax] {
            (x, v)
        } else {
            (xs[imax], vals[imax])
        }
    };
    let top_f = |x: f64| top(x).unwrap_or(f64::NEG_INFINITY);
    let (argmax_xi, smax) = refine(&tops, &top_f);

    // The physical branch is the lowest one away from crossings; track it by
    // continuity from the origin to be safe.
    let phys = physical_branch_scan(local, &xs)?;
    let (imax, _) = phys
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty scan");
    let mut pmax = phys[imax];
    if imax + 1 < xs.len() && imax > 0 {
        // refine along the lowest eigenvalue when it is the physical one locally
        if (phys[imax] - low(xs[imax])?).abs() <= 1e-12 * phys[imax].abs().max(1.0) {
            let low_f = |x: f64| low(x).unwrap_or(f64::NEG_INFINITY);
            pmax = pmax.max(golden_max(low_f, xs[imax - 1], xs[imax + 1]).1);
        }
    }

    let dt = lambda * h;
    Ok(CflMargin {
        max_ratio: smax * dt * dt / 4.0,
        argmax_xi,
        physical_ratio: pmax * dt * dt / 4.0,
        lambda_max: 2.0 / (h * smax.sqrt()),
    })
}

/// Physical-branch eigenvalues along a sorted grid starting at `xi = 0`.
fn physical_branch_scan(local: &LocalMatrices, xs: &[f64]) -> Result<Vec<f64>> {
    let n = local.dim();
    let mut e0 = DVector::zeros(n);
    e0[0] = Complex64::new(1.0, 0.0);
    let mut prev: Option<DVector<Complex64>> = None;
    let mut out = Vec::with_capacity(xs.len());
    for &xi in xs {
        let (vals, vecs) = eigenpairs(local, xi)?;
        let reference = prev.as_ref().unwrap_or(&e0);
        let (best, _) = vecs
            .iter()
            .enumerate()
            .map(|(c, v)| (c, m_inner(reference, &local.m, v).norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("k+1 >= 1 eigenvectors");
        out.push(vals[best]);
        prev = Some(vecs[best].clone());
    }
    Ok(out)
}

/// Positive group-velocity band of the physical branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositiveBand {
    /// `eta_k` such that `v_g > floor` for `|xi| <= eta_k / h`.
    pub eta: f64,
    /// `delta_k = 1 - eta_k / pi`.
    pub delta: f64,
    /// Minimum of the physical group velocity over the retained band.
    pub vg_min: f64,
}

/// Largest grid prefix `[0, eta/h]` on which the physical group velocity stays above the floor.
pub fn positive_band(table: &DispersionTable) -> Result<PositiveBand> {
    let i0 = table
        .index_of(0.0)
        .ok_or_else(|| Error::ParameterDomain("grid lacks xi = 0".into()))?;
    let count = table.xis.len() - i0;
    if count < 1024 {
        return Err(Error::ParameterDomain(format!(
            "positive band needs >= 1024 grid points on [0, pi/h], got {count}"
        )));
    }
    let vg0 = table.physical_vg(i0);
    if !(vg0 > VG_FLOOR) {
        return Err(Error::DegenerateBand { vg0 });
    }
    let mut last = i0;
    let mut vg_min = vg0;
    for i in i0..table.xis.len() {
        let v = table.physical_vg(i);
        if !(v > VG_FLOOR) {
            break;
        }
        last = i;
        vg_min = vg_min.min(v);
    }
    let eta = (table.xis[last] * table.h()).min(PI);
    Ok(PositiveBand {
        eta,
        delta: 1.0 - eta / PI,
        vg_min,
    })
}
