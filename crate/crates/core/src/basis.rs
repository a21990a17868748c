//! Local blocks of the P^k-LDG scheme with alternating fluxes.
//!
//! Each cell carries the monomial basis `((x - x_j) / (h/2))^l`, `l = 0..=k`.
//! With the auxiliary variable `q = u_x` and the fluxes `u~ = u^-`,
//! `q~ = q^+`, the weak forms reduce to
//!
//! ```text
//! M q_j    = A0 u_j + Am1 u_{j-1}
//! M u_j''  = -A0^T q_j - Am1^T q_{j+1}
//! ```
//!
//! and eliminating `q` gives the stiffness stencil `[Km1, K0, Kp1]`.
//! All basis integrals are rational, so the blocks are assembled in exact
//! rational arithmetic in reference coordinates and rounded once.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

/// Highest supported polynomial degree.
pub const MAX_DEGREE: usize = 8;

/// Discretization parameters: degree, mesh size and CFL ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchemeParams {
    pub k: usize,
    pub h: f64,
    pub lambda: f64,
}

impl SchemeParams {
    pub fn new(k: usize, h: f64, lambda: f64) -> Result<Self> {
        check_degree(k)?;
        check_mesh_size(h)?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::ParameterDomain(format!("lambda must be > 0, got {lambda}")));
        }
        Ok(Self { k, h, lambda })
    }

    /// Time step `dt = lambda * h`.
    pub fn dt(&self) -> f64 {
        self.lambda * self.h
    }

    /// Number of local degrees of freedom per cell.
    pub fn local_dim(&self) -> usize {
        self.k + 1
    }
}

fn check_degree(k: usize) -> Result<()> {
    if k > MAX_DEGREE {
        return Err(Error::ParameterDomain(format!(
            "polynomial degree k = {k} exceeds the supported maximum {MAX_DEGREE}"
        )));
    }
    Ok(())
}

fn check_mesh_size(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::ParameterDomain(format!("mesh size h must be > 0, got {h}")));
    }
    Ok(())
}

/// Local mass and stiffness blocks at mesh size `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMatrices {
    pub k: usize,
    pub h: f64,
    pub m: DMatrix<f64>,
    pub k0: DMatrix<f64>,
    pub km1: DMatrix<f64>,
    pub kp1: DMatrix<f64>,
}

type RatMatrix = Vec<Vec<BigRational>>;

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn rat_to_f64(x: &BigRational) -> f64 {
    // BigRational::to_f64 rounds correctly for the magnitudes seen here.
    x.to_f64().unwrap_or(f64::NAN)
}

fn to_dmatrix(a: &RatMatrix, scale: f64) -> DMatrix<f64> {
    let n = a.len();
    DMatrix::from_fn(n, n, |i, j| rat_to_f64(&a[i][j]) * scale)
}

/// Reference mass matrix `Mhat = M / h`: `1/(l+m+1)` for even `l+m`.
fn ref_mass(k: usize) -> RatMatrix {
    (0..=k)
        .map(|l| {
            (0..=k)
                .map(|m| {
                    if (l + m) % 2 == 0 {
                        rat(1, (l + m + 1) as i64)
                    } else {
                        BigRational::zero()
                    }
                })
                .collect()
        })
        .collect()
}

fn ref_flux_blocks(k: usize) -> (RatMatrix, RatMatrix) {
    let n = k + 1;
    let mut a0 = vec![vec![BigRational::zero(); n]; n];
    let mut am1 = vec![vec![BigRational::zero(); n]; n];
    for m in 0..n {
        for l in 0..n {
            // volume term: int phi_l phi_m' = 2m/(l+m) when l+m is odd
            let vol = if (l + m) % 2 == 1 {
                rat(2 * m as i64, (l + m) as i64)
            } else {
                BigRational::zero()
            };
            a0[m][l] = BigRational::one() - vol;
            am1[m][l] = if m % 2 == 0 { -BigRational::one() } else { BigRational::one() };
        }
    }
    (a0, am1)
}

fn rat_inverse(a: &RatMatrix) -> RatMatrix {
    let n = a.len();
    let mut aug: Vec<Vec<BigRational>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { BigRational::one() } else { BigRational::zero() }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .find(|&r| !aug[r][col].is_zero())
            .expect("reference mass matrix is nonsingular");
        aug.swap(col, pivot);
        let p = aug[col][col].clone();
        for v in aug[col].iter_mut() {
            *v = &*v / &p;
        }
        for r in 0..n {
            if r != col && !aug[r][col].is_zero() {
                let f = aug[r][col].clone();
                for c in 0..2 * n {
                    let delta = &f * &aug[col][c];
                    aug[r][c] -= delta;
                }
            }
        }
    }
    aug.into_iter().map(|row| row[n..].to_vec()).collect()
}

fn rat_mul(a: &RatMatrix, b: &RatMatrix) -> RatMatrix {
    let n = a.len();
    let p = b[0].len();
    let inner = b.len();
    (0..n)
        .map(|i| {
            (0..p)
                .map(|j| {
                    (0..inner).fold(BigRational::zero(), |acc, t| acc + &a[i][t] * &b[t][j])
                })
                .collect()
        })
        .collect()
}

fn rat_transpose(a: &RatMatrix) -> RatMatrix {
    let n = a.len();
    let p = a[0].len();
    (0..p).map(|j| (0..n).map(|i| a[i][j].clone()).collect()).collect()
}

fn rat_add(a: &RatMatrix, b: &RatMatrix) -> RatMatrix {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect())
        .collect()
}

/// Local mass matrix `M[l][m] = h/(l+m+1)` (even `l+m`), zero otherwise.
pub fn local_mass(k: usize, h: f64) -> Result<DMatrix<f64>> {
    check_degree(k)?;
    check_mesh_size(h)?;
    Ok(to_dmatrix(&ref_mass(k), 1.0) * h)
}

/// The h-independent flux blocks `(A0, Am1)` with `M q_j = A0 u_j + Am1 u_{j-1}`.
pub fn flux_blocks(k: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_degree(k)?;
    let (a0, am1) = ref_flux_blocks(k);
    Ok((to_dmatrix(&a0, 1.0), to_dmatrix(&am1, 1.0)))
}

/// Reference (h = 1) stiffness blocks `(K0, Km1, Kp1)` in exact arithmetic.
fn ref_stiffness(k: usize) -> (RatMatrix, RatMatrix, RatMatrix) {
    let minv = rat_inverse(&ref_mass(k));
    let (a0, am1) = ref_flux_blocks(k);
    let a0t = rat_transpose(&a0);
    let am1t = rat_transpose(&am1);
    let minv_a0 = rat_mul(&minv, &a0);
    let minv_am1 = rat_mul(&minv, &am1);
    let k0 = rat_add(&rat_mul(&a0t, &minv_a0), &rat_mul(&am1t, &minv_am1));
    let km1 = rat_mul(&a0t, &minv_am1);
    let kp1 = rat_mul(&am1t, &minv_a0);
    (k0, km1, kp1)
}

/// Assembles `K0 = A0^T M^-1 A0 + Am1^T M^-1 Am1`, `Km1 = A0^T M^-1 Am1`,
/// `Kp1 = Am1^T M^-1 A0` so that the local scheme reads
/// `M u_j'' + K0 u_j + Km1 u_{j-1} + Kp1 u_{j+1} = 0`.
pub fn assemble_stiffness(k: usize, h: f64) -> Result<LocalMatrices> {
    check_degree(k)?;
    check_mesh_size(h)?;
    let (k0, km1, kp1) = ref_stiffness(k);
    // Entries scale exactly as 1/h; dividing the rounded reference values keeps
    // h * K bit-identical across power-of-two mesh sizes.
    let scale = |a: &RatMatrix| to_dmatrix(a, 1.0).map(|x| x / h);
    Ok(LocalMatrices {
        k,
        h,
        m: local_mass(k, h)?,
        k0: scale(&k0),
        km1: scale(&km1),
        kp1: scale(&kp1),
    })
}

impl LocalMatrices {
    pub fn for_params(params: &SchemeParams) -> Result<Self> {
        assemble_stiffness(params.k, params.h)
    }

    pub fn dim(&self) -> usize {
        self.k + 1
    }

    /// JSON dump with row-major arrays and 17 significant digits per entry.
    pub fn to_json(&self) -> String {
        let mat = |a: &DMatrix<f64>| {
            let rows: Vec<String> = (0..a.nrows())
                .map(|i| {
                    let cols: Vec<String> = (0..a.ncols()).map(|j| fmt17(a[(i, j)])).collect();
                    format!("[{}]", cols.join(", "))
                })
                .collect();
            format!("[{}]", rows.join(", "))
        };
        format!(
            "{{\n  \"k\": {},\n  \"h\": {},\n  \"M\": {},\n  \"K0\": {},\n  \"Km1\": {},\n  \"Kp1\": {}\n}}\n",
            self.k,
            fmt17(self.h),
            mat(&self.m),
            mat(&self.k0),
            mat(&self.km1),
            mat(&self.kp1)
        )
    }
}

/// Formats a float with 17 significant digits in a JSON/CSV-safe form.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 {
        // normalizes -0.0 as well
        return "0.0000000000000000e0".to_string();
    }
    format!("{x:.16e}")
}

/// Exact rational check used by tests: `K0 + Km1 + Kp1` annihilates `e0`.
pub fn reference_row_sums_vanish(k: usize) -> bool {
    let (k0, km1, kp1) = ref_stiffness(k);
    (0..=k).all(|i| {
        let s = &k0[i][0] + &km1[i][0] + &kp1[i][0];
        s.is_zero()
    })
}
