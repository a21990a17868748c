//! Observability Gramian pencil `(A, G)` on the initial-pair space and the
//! constant `C_T = 1 / min x^T G x / x^T A x`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DMatrixViewMut};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::fmt17;
use crate::error::{Error, Result};
use crate::evolve::{apply_block_diag, ObservationRegion, Scheme};
use crate::linalg::{symmetric_eig, symmetric_eigenvalues, symmetrize};
use crate::spectral::DispersionTable;

/// Largest pencil dimension accepted.
pub const MEMORY_GUARD: usize = 4096;
/// Default relative deflation threshold for the kernel of `A`.
pub const DEFAULT_DEFLATION: f64 = 1e-10;

/// Energy form `A` and accumulated observed-energy form `G` on a basis of
/// initial pairs.
#[derive(Debug, Clone)]
pub struct QuadraticPencil {
    pub dim: usize,
    pub a: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub steps: usize,
}

/// Basis of initial pairs: column `c` is the pair `(x0[:, c], x1[:, c])`.
#[derive(Debug, Clone)]
pub struct PairBasis {
    pub x0: DMatrix<f64>,
    pub x1: DMatrix<f64>,
}

impl PairBasis {
    /// Canonical basis of the full pair space, dimension `2 (k+1) J`.
    pub fn canonical(state_len: usize) -> Self {
        let d = 2 * state_len;
        let x0 = DMatrix::from_fn(state_len, d, |r, c| f64::from(u8::from(r == c)));
        let x1 = DMatrix::from_fn(state_len, d, |r, c| f64::from(u8::from(r + state_len == c)));
        Self { x0, x1 }
    }

    pub fn dim(&self) -> usize {
        self.x0.ncols()
    }
}

struct FormWork<'a> {
    scheme: &'a Scheme,
    observed_rows: Vec<usize>,
    mask: Vec<bool>,
}

impl FormWork<'_> {
    fn masked(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x.clone();
        for col in y.column_iter_mut() {
            for (v, &keep) in col.into_iter().zip(&self.mask) {
                if !keep {
                    *v = 0.0;
                }
            }
        }
        y
    }

    fn stiffness(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        let rows = x.nrows();
        let chunk = rows * 32;
        out.as_mut_slice()
            .par_chunks_mut(chunk)
            .zip(x.as_slice().par_chunks(chunk))
            .for_each(|(o, i)| self.scheme.stiffness().apply(i, rows, o));
        out
    }

    /// `(M / (2 dt^2) - K / 4) w`.
    fn w_form(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let dt = self.scheme.dt();
        let mut mw = DMatrix::zeros(w.nrows(), w.ncols());
        apply_block_diag(&self.scheme.local.m, w.as_slice(), mw.as_mut_slice());
        let kw = self.stiffness(w);
        mw * (0.5 / (dt * dt)) - kw * 0.25
    }
}

/// `acc += alpha * a^T b` with columns of `acc` split across workers.
fn accumulate_tr(acc: &mut DMatrix<f64>, alpha: f64, a: &DMatrix<f64>, b: &DMatrix<f64>) {
    let d = acc.nrows();
    let block = 64;
    let at = a.transpose();
    acc.as_mut_slice()
        .par_chunks_mut(d * block)
        .enumerate()
        .for_each(|(ci, chunk)| {
            let cols = chunk.len() / d;
            let mut view = DMatrixViewMut::from_slice(chunk, d, cols);
            view.gemm(alpha, &at, &b.columns(ci * block, cols), 1.0);
        });
}

/// Energy form `E(X0 x, X1 x)` as a matrix; full energy when `work.mask` is all true.
fn energy_form(work: &FormWork, x0: &DMatrix<f64>, x1: &DMatrix<f64>) -> DMatrix<f64> {
    let d = x0.ncols();
    let w = x1 - x0;
    let mut a = DMatrix::zeros(d, d);
    accumulate_tr(&mut a, 1.0, &w, &work.w_form(&w));
    accumulate_tr(&mut a, 0.25, x1, &work.stiffness(x1));
    accumulate_tr(&mut a, 0.25, x0, &work.stiffness(x0));
    symmetrize(&mut a);
    a
}

/// Assembles the pencil on the canonical basis of the full pair space.
pub fn build_pencil(scheme: &Scheme, region: &ObservationRegion, t_final: f64) -> Result<QuadraticPencil> {
    let dim = 2 * scheme.state_len();
    if dim > MEMORY_GUARD {
        return Err(Error::MemoryGuard {
            dim,
            limit: MEMORY_GUARD,
        });
    }
    build_pencil_on_basis(scheme, region, t_final, &PairBasis::canonical(scheme.state_len()))
}

/// Assembles `A` and `G` restricted to the span of `basis`, propagating the
/// basis columns through `N = round(T/dt)` leapfrog steps.
pub fn build_pencil_on_basis(
    scheme: &Scheme,
    region: &ObservationRegion,
    t_final: f64,
    basis: &PairBasis,
) -> Result<QuadraticPencil> {
    let dim = basis.dim();
    if dim > MEMORY_GUARD {
        return Err(Error::MemoryGuard {
            dim,
            limit: MEMORY_GUARD,
        });
    }
    if dim == 0 {
        return Err(Error::EmptyBand);
    }
    region.validate_in(&scheme.mesh)?;
    let steps = scheme.steps_for(t_final)?;
    let mask = scheme.dof_mask(region);
    let observed_rows: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let full = FormWork {
        scheme,
        observed_rows: (0..mask.len()).collect(),
        mask: vec![true; mask.len()],
    };
    let work = FormWork {
        scheme,
        observed_rows,
        mask,
    };
    let a = energy_form(&full, &basis.x0, &basis.x1);

    let rows = scheme.state_len();
    let obs = |m: &DMatrix<f64>| m.select_rows(work.observed_rows.iter());
    let mut g = DMatrix::zeros(dim, dim);
    let mut u0 = basis.x0.clone();
    let mut u1 = basis.x1.clone();
    let mut y0 = work.masked(&u0);
    // level weights 1/4, 1/2, ..., 1/2, 1/4 on Y_n^T K Y_n
    let ky0 = work.stiffness(&y0);
    accumulate_tr(&mut g, 0.25, &obs(&y0), &obs(&ky0));
    for n in 0..steps {
        let y1 = work.masked(&u1);
        let w = &y1 - &y0;
        accumulate_tr(&mut g, 1.0, &obs(&w), &obs(&work.w_form(&w)));
        let weight = if n + 1 == steps { 0.25 } else { 0.5 };
        let ky1 = work.stiffness(&y1);
        accumulate_tr(&mut g, weight, &obs(&y1), &obs(&ky1));
        if n + 1 == steps {
            break;
        }
        let mut u2 = DMatrix::zeros(rows, dim);
        let chunk = rows * 32;
        u2.as_mut_slice()
            .par_chunks_mut(chunk)
            .zip(u1.as_slice().par_chunks(chunk))
            .for_each(|(o, i)| scheme.update().apply(i, rows, o));
        for ((z2, &z1), &z0) in u2.iter_mut().zip(u1.iter()).zip(u0.iter()) {
            *z2 = 2.0 * z1 - z0 - *z2;
        }
        if u2.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: n + 2 });
        }
        u0 = std::mem::replace(&mut u1, u2);
        y0 = y1;
    }
    g *= scheme.dt();
    symmetrize(&mut g);
    Ok(QuadraticPencil { dim, a, g, steps })
}

/// Result of the reduced eigenproblem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observability {
    pub c_t: f64,
    pub mu_min: f64,
    /// Dimension of `range(A)` after deflation.
    pub deflated_dim: usize,
}

/// `C_T = 1 / mu_min`, with `mu_min` the smallest eigenvalue of `G` restricted
/// to `range(A)` in the `A`-inner product. Eigenvalues of `A` at or below
/// `tol * max` are deflated.
pub fn observability_constant(pencil: &QuadraticPencil, tol: f64) -> Result<Observability> {
    let (w, v) = symmetric_eig(pencil.a.clone());
    let wmax = w.iter().copied().fold(0.0, f64::max);
    if !(wmax > 0.0) {
        return Err(Error::LinearAlgebra("energy form has no positive eigenvalue".into()));
    }
    let keep: Vec<usize> = (0..w.len()).filter(|&i| w[i] > tol * wmax).collect();
    let mut vr = DMatrix::zeros(pencil.dim, keep.len());
    for (dst, &src) in keep.iter().enumerate() {
        vr.set_column(dst, &v.column(src));
    }
    let gv = &pencil.g * &vr;
    let mut reduced = vr.transpose() * gv;
    for a in 0..keep.len() {
        for b in 0..keep.len() {
            reduced[(a, b)] /= (w[keep[a]] * w[keep[b]]).sqrt();
        }
    }
    symmetrize(&mut reduced);
    let mu = symmetric_eigenvalues(reduced);
    let mu_min = mu[0];
    if !(mu_min > 0.0) {
        return Err(Error::Unobservable { mu_min });
    }
    Ok(Observability {
        c_t: 1.0 / mu_min,
        mu_min,
        deflated_dim: keep.len(),
    })
}

/// Spectral filter of the initial-pair space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FilterSpec {
    /// Retained band `|xi| <= (1 - delta) pi / h`.
    pub delta: f64,
    /// Keep only the physical branch.
    pub physical_only: bool,
    /// Tie `U^1` to `U^0` by the branch phase shifts `e^{-+i omega dt}`.
    pub slave_pair: bool,
}

impl FilterSpec {
    pub fn new(delta: f64, physical_only: bool, slave_pair: bool) -> Result<Self> {
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::ParameterDomain(format!("delta = {delta} not in [0, 1)")));
        }
        Ok(Self {
            delta,
            physical_only,
            slave_pair,
        })
    }
}

/// Filtered result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FilteredObservability {
    pub c_t: f64,
    pub mu_min: f64,
    pub deflated_dim: usize,
    /// Dimension of the filtered pair space.
    pub retained_dim: usize,
}

/// Orthonormalizes the columns of `b` (modified Gram-Schmidt, two passes),
/// dropping columns that fall below `tol` of their original norm.
fn orthonormal_columns(b: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    for col in b {
        let norm0 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = col.clone();
        for _ in 0..2 {
            for e in &q {
                let p: f64 = e.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, ei) in v.iter_mut().zip(e) {
                    *vi -= p * ei;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > tol * norm0 {
            q.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    q
}

/// Basis of the filtered pair space built from the discrete frequencies of
/// the scheme's mesh. `table` must contain those frequencies.
pub fn filtered_basis(scheme: &Scheme, table: &DispersionTable, filter: &FilterSpec) -> Result<PairBasis> {
    let mesh = &scheme.mesh;
    let h = mesh.h;
    let nl = scheme.params.local_dim();
    let rows = scheme.state_len();
    let dt = scheme.dt();
    let bound = (1.0 - filter.delta) * PI / h;
    let branches: Vec<usize> = if filter.physical_only {
        vec![table.physical_index]
    } else {
        (0..table.branch_count()).collect()
    };
    // complex profiles v e^{i xi x_j} with their branch frequency
    let mut profiles: Vec<(Vec<Complex64>, f64)> = Vec::new();
    for m in 0..=mesh.cells / 2 {
        let xi = 2.0 * PI * m as f64 / (mesh.cells as f64 * h);
        if xi > bound * (1.0 + 1e-12) {
            continue;
        }
        let i = table.index_of(xi).ok_or_else(|| {
            Error::ParameterDomain(format!("dispersion table lacks the mesh frequency {xi}"))
        })?;
        for &b in &branches {
            let v = &table.vecs[b][i];
            let mut z = vec![Complex64::new(0.0, 0.0); rows];
            for j in 0..mesh.cells {
                let e = Complex64::from_polar(1.0, xi * mesh.center(j));
                for l in 0..nl {
                    z[j * nl + l] = v[l] * e;
                }
            }
            profiles.push((z, table.omega[b][i]));
        }
    }
    let parts = |z: &[Complex64]| -> [Vec<f64>; 2] {
        [z.iter().map(|c| c.re).collect(), z.iter().map(|c| c.im).collect()]
    };
    let (x0, x1) = if filter.slave_pair {
        let mut cols = Vec::new();
        for (z, omega) in &profiles {
            for sign in [-1.0, 1.0] {
                let shift = Complex64::from_polar(1.0, sign * omega * dt);
                let z1: Vec<Complex64> = z.iter().map(|c| c * shift).collect();
                let [r0, i0] = parts(z);
                let [r1, i1] = parts(&z1);
                cols.push([r0, r1].concat());
                cols.push([i0, i1].concat());
            }
        }
        let q = orthonormal_columns(&cols, 1e-8);
        let x0 = DMatrix::from_fn(rows, q.len(), |r, c| q[c][r]);
        let x1 = DMatrix::from_fn(rows, q.len(), |r, c| q[c][rows + r]);
        (x0, x1)
    } else {
        let cols: Vec<Vec<f64>> = profiles.iter().flat_map(|(z, _)| parts(z)).collect();
        let q = orthonormal_columns(&cols, 1e-8);
        let r = q.len();
        let x0 = DMatrix::from_fn(rows, 2 * r, |i, c| if c < r { q[c][i] } else { 0.0 });
        let x1 = DMatrix::from_fn(rows, 2 * r, |i, c| if c >= r { q[c - r][i] } else { 0.0 });
        (x0, x1)
    };
    if x0.ncols() == 0 {
        return Err(Error::EmptyBand);
    }
    Ok(PairBasis { x0, x1 })
}

/// `C_T` of the pencil restricted to the filtered pair space.
pub fn filtered_constant(
    scheme: &Scheme,
    region: &ObservationRegion,
    t_final: f64,
    table: &DispersionTable,
    filter: &FilterSpec,
) -> Result<FilteredObservability> {
    let basis = filtered_basis(scheme, table, filter)?;
    let pencil = build_pencil_on_basis(scheme, region, t_final, &basis)?;
    let o = observability_constant(&pencil, DEFAULT_DEFLATION)?;
    Ok(FilteredObservability {
        c_t: o.c_t,
        mu_min: o.mu_min,
        deflated_dim: o.deflated_dim,
        retained_dim: basis.dim(),
    })
}

/// Least-squares fit of `ln C_T = intercept + r / h`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub r: f64,
    pub intercept: f64,
    pub r2: f64,
    /// `(h, C_T)` pairs used.
    pub points: Vec<(f64, f64)>,
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    fit_log_linear(points, |h| 1.0 / h)
}

/// Least squares of `ln y` against `feature(x)`.
pub fn fit_log_linear(points: &[(f64, f64)], feature: impl Fn(f64) -> f64) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::SingularRegression(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(h, c)| !(h > 0.0) || !(c > 0.0)) {
        return Err(Error::SingularRegression("h and C_T must be positive".into()));
    }
    let xs: Vec<f64> = points.iter().map(|&(h, _)| feature(h)).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, c)| c.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 1e-14 * mx.abs().max(1.0).powi(2)) {
        return Err(Error::SingularRegression("abscissae are not distinct".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let r = sxy / sxx;
    let intercept = my - r * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - r * x).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(RateFit {
        r,
        intercept,
        r2,
        points: points.to_vec(),
    })
}

/// One row of `ct.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObservabilityRow {
    pub k: usize,
    pub lambda: f64,
    pub t: f64,
    pub h: f64,
    pub cells: usize,
    pub steps: usize,
    pub delta: Option<f64>,
    pub physical_only: bool,
    pub c_t: f64,
    pub mu_min: f64,
    pub deflated_dim: usize,
}

/// Unfiltered `C_T` for one scheme.
pub fn observability_row(scheme: &Scheme, region: &ObservationRegion, t_final: f64) -> Result<ObservabilityRow> {
    let pencil = build_pencil(scheme, region, t_final)?;
    let o = observability_constant(&pencil, DEFAULT_DEFLATION)?;
    Ok(ObservabilityRow {
        k: scheme.params.k,
        lambda: scheme.params.lambda,
        t: t_final,
        h: scheme.params.h,
        cells: scheme.mesh.cells,
        steps: pencil.steps,
        delta: None,
        physical_only: false,
        c_t: o.c_t,
        mu_min: o.mu_min,
        deflated_dim: o.deflated_dim,
    })
}

/// Writes `ct.csv`; an unfiltered row has an empty `delta` field.
pub fn write_ct_csv<W: Write>(mut out: W, rows: &[ObservabilityRow]) -> std::io::Result<()> {
    writeln!(out, "k,lambda,T,h,J,N,delta,physical_only,C_T,mu_min,deflated_dim")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            fmt17(r.lambda),
            fmt17(r.t),
            fmt17(r.h),
            r.cells,
            r.steps,
            r.delta.map(fmt17).unwrap_or_default(),
            r.physical_only,
            fmt17(r.c_t),
            fmt17(r.mu_min),
            r.deflated_dim
        )?;
    }
    Ok(())
}
