//! Leapfrog time stepping on a periodic mesh and the discrete energies.
//!
//! State vectors are cell-major: the `k+1` coefficients of cell `j` occupy
//! `[j(k+1), (j+1)(k+1))`. The scheme is
//! `U^{n+2} = 2 U^{n+1} - U^n - dt^2 M^-1 K U^{n+1}`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::basis::{fmt17, LocalMatrices, SchemeParams};
use crate::error::{Error, Result};
use crate::spectral::cfl_margin;

/// Uniform periodic mesh on `[x_lo, x_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodicMesh {
    pub cells: usize,
    pub h: f64,
    pub x_lo: f64,
    pub x_hi: f64,
}

impl PeriodicMesh {
    /// Mesh of cell size `h`; `(x_hi - x_lo) / h` must be an even integer >= 8.
    pub fn new(x_lo: f64, x_hi: f64, h: f64) -> Result<Self> {
        if !(x_hi > x_lo) || !(h > 0.0) {
            return Err(Error::ParameterDomain(format!(
                "invalid mesh: domain [{x_lo}, {x_hi}], h = {h}"
            )));
        }
        let len = x_hi - x_lo;
        let cells = (len / h).round();
        if (cells * h - len).abs() > 1e-12 * len {
            return Err(Error::ParameterDomain(format!(
                "h = {h} does not divide the domain length {len}"
            )));
        }
        Self::with_cells(x_lo, x_hi, cells as usize)
    }

    pub fn with_cells(x_lo: f64, x_hi: f64, cells: usize) -> Result<Self> {
        if cells < 8 || cells % 2 != 0 {
            return Err(Error::ParameterDomain(format!(
                "cell count must be even and >= 8, got {cells}"
            )));
        }
        if !(x_hi > x_lo) {
            return Err(Error::ParameterDomain(format!("empty domain [{x_lo}, {x_hi}]")));
        }
        Ok(Self {
            cells,
            h: (x_hi - x_lo) / cells as f64,
            x_lo,
            x_hi,
        })
    }

    pub fn length(&self) -> f64 {
        self.x_hi - self.x_lo
    }

    /// Cell center `x_lo + (j + 1/2) h`.
    pub fn center(&self, j: usize) -> f64 {
        self.x_lo + (j as f64 + 0.5) * self.h
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|j| self.center(j)).collect()
    }
}

/// Observation region: every cell whose center lies outside `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObservationRegion {
    pub a: f64,
    pub b: f64,
}

impl Default for ObservationRegion {
    fn default() -> Self {
        Self { a: -1.0, b: 1.0 }
    }
}

impl ObservationRegion {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a < b) {
            return Err(Error::ParameterDomain(format!("excluded interval [{a}, {b}] is empty")));
        }
        Ok(Self { a, b })
    }

    pub fn validate_in(&self, mesh: &PeriodicMesh) -> Result<()> {
        if !(self.a > mesh.x_lo && self.b < mesh.x_hi) {
            return Err(Error::ParameterDomain(format!(
                "excluded interval [{}, {}] must lie strictly inside [{}, {}]",
                self.a, self.b, mesh.x_lo, mesh.x_hi
            )));
        }
        Ok(())
    }

    pub fn observes(&self, x: f64) -> bool {
        !(x >= self.a && x <= self.b)
    }

    /// Per-cell observation flags.
    pub fn cell_mask(&self, mesh: &PeriodicMesh) -> Vec<bool> {
        mesh.centers().into_iter().map(|x| self.observes(x)).collect()
    }
}

/// Two consecutive time levels `(U^n, U^{n+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePair {
    pub un: DVector<f64>,
    pub unp1: DVector<f64>,
    pub n: usize,
    pub params: SchemeParams,
}

impl StatePair {
    pub fn new(un: DVector<f64>, unp1: DVector<f64>, params: SchemeParams) -> Result<Self> {
        if un.len() != unp1.len() || un.len() % params.local_dim() != 0 {
            return Err(Error::ParameterDomain(format!(
                "state lengths {} / {} incompatible with k = {}",
                un.len(),
                unp1.len(),
                params.k
            )));
        }
        Ok(Self { un, unp1, n: 0, params })
    }

    pub fn zeros(params: SchemeParams, mesh: &PeriodicMesh) -> Self {
        let len = params.local_dim() * mesh.cells;
        Self {
            un: DVector::zeros(len),
            unp1: DVector::zeros(len),
            n: 0,
            params,
        }
    }

    /// Uniform random coefficients in `[-1, 1]` for both levels.
    pub fn random<R: Rng>(params: SchemeParams, mesh: &PeriodicMesh, rng: &mut R) -> Self {
        let len = params.local_dim() * mesh.cells;
        let un = DVector::from_fn(len, |_, _| rng.gen_range(-1.0..1.0));
        let unp1 = DVector::from_fn(len, |_, _| rng.gen_range(-1.0..1.0));
        Self { un, unp1, n: 0, params }
    }

    /// Time-reversed pair `(U^{n+1}, U^n)`.
    pub fn reversed(&self) -> Self {
        Self {
            un: self.unp1.clone(),
            unp1: self.un.clone(),
            n: self.n,
            params: self.params,
        }
    }

    /// Periodic shift by `shift` cells towards larger `x`.
    pub fn shifted(&self, shift: usize) -> Self {
        let n = self.params.local_dim();
        let cells = self.un.len() / n;
        let roll = |v: &DVector<f64>| {
            DVector::from_fn(v.len(), |i, _| {
                let (j, l) = (i / n, i % n);
                v[((j + cells - shift % cells) % cells) * n + l]
            })
        };
        Self {
            un: roll(&self.un),
            unp1: roll(&self.unp1),
            n: self.n,
            params: self.params,
        }
    }
}

/// Block-tridiagonal periodic stencil `[left, center, right]` acting on
/// cell-major coefficient data with any number of columns.
#[derive(Debug, Clone)]
pub(crate) struct Stencil {
    n: usize,
    left: DMatrix<f64>,
    center: DMatrix<f64>,
    right: DMatrix<f64>,
}

impl Stencil {
    pub(crate) fn new(left: DMatrix<f64>, center: DMatrix<f64>, right: DMatrix<f64>) -> Self {
        Self {
            n: center.nrows(),
            left,
            center,
            right,
        }
    }

    /// `out = S x` for column-major `x` with `rows = n * cells` rows.
    pub(crate) fn apply(&self, x: &[f64], rows: usize, out: &mut [f64]) {
        let n = self.n;
        let cells = rows / n;
        for (xc, oc) in x.chunks_exact(rows).zip(out.chunks_exact_mut(rows)) {
            for j in 0..cells {
                let jm = if j == 0 { cells - 1 } else { j - 1 };
                let jp = if j + 1 == cells { 0 } else { j + 1 };
                for r in 0..n {
                    let mut acc = 0.0;
                    for c in 0..n {
                        acc += self.center[(r, c)] * xc[j * n + c];
                    }
                    for c in 0..n {
                        acc += self.left[(r, c)] * xc[jm * n + c];
                    }
                    for c in 0..n {
                        acc += self.right[(r, c)] * xc[jp * n + c];
                    }
                    oc[j * n + r] = acc;
                }
            }
        }
    }
}

/// Block-diagonal application of a local matrix.
pub(crate) fn apply_block_diag(block: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let n = block.nrows();
    for (xc, oc) in x.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
        for r in 0..n {
            let mut acc = 0.0;
            for c in 0..n {
                acc += block[(r, c)] * xc[c];
            }
            oc[r] = acc;
        }
    }
}

/// Leapfrog scheme bound to a mesh.
#[derive(Debug, Clone)]
pub struct Scheme {
    pub params: SchemeParams,
    pub local: LocalMatrices,
    pub mesh: PeriodicMesh,
    stiffness: Stencil,
    /// `dt^2 M^-1 K` stencil used by the stepper.
    update: Stencil,
}

impl Scheme {
    /// Builds the stepper after checking the CFL margin once.
    pub fn new(params: SchemeParams, mesh: PeriodicMesh) -> Result<Self> {
        if (mesh.h - params.h).abs() > 1e-12 * params.h {
            return Err(Error::ParameterDomain(format!(
                "mesh size {} differs from scheme h = {}",
                mesh.h, params.h
            )));
        }
        let local = LocalMatrices::for_params(&params)?;
        let margin = cfl_margin(&local, params.lambda, 256)?;
        if !margin.is_stable() {
            return Err(Error::CflViolation {
                ratio: margin.max_ratio,
                lambda_max: margin.lambda_max,
            });
        }
        Ok(Self::new_unchecked(params, mesh, local))
    }

    pub(crate) fn new_unchecked(params: SchemeParams, mesh: PeriodicMesh, local: LocalMatrices) -> Self {
        let minv = local
            .m
            .clone()
            .try_inverse()
            .expect("local mass matrix is SPD");
        let dt2 = params.dt() * params.dt();
        let update = Stencil::new(
            &minv * &local.km1 * dt2,
            &minv * &local.k0 * dt2,
            &minv * &local.kp1 * dt2,
        );
        let stiffness = Stencil::new(local.km1.clone(), local.k0.clone(), local.kp1.clone());
        Self {
            params,
            local,
            mesh,
            stiffness,
            update,
        }
    }

    /// Length of a state vector, `(k+1) J`.
    pub fn state_len(&self) -> usize {
        self.params.local_dim() * self.mesh.cells
    }

    pub fn dt(&self) -> f64 {
        self.params.dt()
    }

    pub(crate) fn stiffness(&self) -> &Stencil {
        &self.stiffness
    }

    pub(crate) fn update(&self) -> &Stencil {
        &self.update
    }

    /// `K U` with periodic wrap.
    pub fn apply_stiffness(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(u.len());
        self.stiffness.apply(u.as_slice(), u.len(), out.as_mut_slice());
        out
    }

    /// `<U, K U>`.
    pub fn k_norm2(&self, u: &DVector<f64>) -> f64 {
        u.dot(&self.apply_stiffness(u))
    }

    /// `<U, M U>`.
    pub fn m_norm2(&self, u: &DVector<f64>) -> f64 {
        let mut out = DVector::zeros(u.len());
        apply_block_diag(&self.local.m, u.as_slice(), out.as_mut_slice());
        u.dot(&out)
    }

    /// Advances `(U^n, U^{n+1})` to `(U^{n+1}, U^{n+2})`.
    pub fn step(&self, state: &StatePair) -> Result<StatePair> {
        let len = state.un.len();
        let mut next = DVector::zeros(len);
        self.update
            .apply(state.unp1.as_slice(), len, next.as_mut_slice());
        for i in 0..len {
            next[i] = 2.0 * state.unp1[i] - state.un[i] - next[i];
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: state.n + 1 });
        }
        Ok(StatePair {
            un: state.unp1.clone(),
            unp1: next,
            n: state.n + 1,
            params: state.params,
        })
    }

    /// Discrete energy of `(U^n, U^{n+1})`; with a region, the energy of the
    /// pair restricted (zeroed outside) to the observed cells.
    pub fn energy(&self, state: &StatePair, region: Option<&ObservationRegion>) -> f64 {
        match region {
            None => self.pair_energy(&state.un, &state.unp1),
            Some(r) => {
                let mask = self.dof_mask(r);
                let restrict = |v: &DVector<f64>| {
                    DVector::from_fn(v.len(), |i, _| if mask[i] { v[i] } else { 0.0 })
                };
                self.pair_energy(&restrict(&state.un), &restrict(&state.unp1))
            }
        }
    }

    fn pair_energy(&self, u0: &DVector<f64>, u1: &DVector<f64>) -> f64 {
        let dt = self.dt();
        let w = u1 - u0;
        0.5 * self.m_norm2(&w) / (dt * dt) + 0.25 * self.k_norm2(u1) + 0.25 * self.k_norm2(u0)
            - 0.25 * self.k_norm2(&w)
    }

    /// Per-degree-of-freedom observation flags.
    pub fn dof_mask(&self, region: &ObservationRegion) -> Vec<bool> {
        let n = self.params.local_dim();
        region
            .cell_mask(&self.mesh)
            .into_iter()
            .flat_map(|o| std::iter::repeat(o).take(n))
            .collect()
    }

    /// Number of steps `N = round(T / dt)`.
    pub fn steps_for(&self, t_final: f64) -> Result<usize> {
        let dt = self.dt();
        let n = (t_final / dt).round();
        if !(n >= 1.0) {
            return Err(Error::NoSteps { t: t_final, dt });
        }
        Ok(n as usize)
    }

    /// Runs `N = round(T/dt)` steps, recording the energies of every level pair.
    pub fn run(
        &self,
        initial: &StatePair,
        t_final: f64,
        region: &ObservationRegion,
    ) -> Result<RunOutput> {
        let steps = self.steps_for(t_final)?;
        let dt = self.dt();
        let mut state = initial.clone();
        let mut records = Vec::with_capacity(steps);
        let mut observed = 0.0;
        for _ in 0..steps {
            let e_total = self.energy(&state, None);
            let e_obs = self.energy(&state, Some(region));
            observed += e_obs;
            records.push(EnergyRecord {
                n: state.n,
                t: state.n as f64 * dt,
                e_total,
                e_obs,
            });
            state = self.step(&state)?;
        }
        Ok(RunOutput {
            records,
            final_state: state,
            observed_integral: dt * observed,
            steps,
            final_time: steps as f64 * dt,
        })
    }
}

/// Energies of the level pair `(U^n, U^{n+1})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyRecord {
    pub n: usize,
    pub t: f64,
    pub e_total: f64,
    pub e_obs: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<EnergyRecord>,
    pub final_state: StatePair,
    /// `dt * sum_{n=0}^{N-1} E_obs^n`.
    pub observed_integral: f64,
    pub steps: usize,
    /// Realized final time `N dt`.
    pub final_time: f64,
}

impl RunOutput {
    /// Writes `energy.csv`, keeping every `stride`-th record.
    pub fn write_csv<W: Write>(&self, mut out: W, stride: usize) -> std::io::Result<()> {
        writeln!(out, "n,t,E_total,E_obs")?;
        for r in self.records.iter().step_by(stride.max(1)) {
            writeln!(out, "{},{},{},{}", r.n, fmt17(r.t), fmt17(r.e_total), fmt17(r.e_obs))?;
        }
        Ok(())
    }

    /// Largest relative deviation of the total energy from its first value.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.records.first().map(|r| r.e_total).unwrap_or(0.0);
        let scale = e0.abs().max(f64::MIN_POSITIVE);
        self.records
            .iter()
            .map(|r| (r.e_total - e0).abs() / scale)
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scheme(k: usize, lambda: f64, cells: usize) -> Scheme {
        let mesh = PeriodicMesh::with_cells(-6.0, 6.0, cells).unwrap();
        let params = SchemeParams::new(k, mesh.h, lambda).unwrap();
        Scheme::new(params, mesh).unwrap()
    }

    #[test]
    fn mesh_validation() {
        assert!(PeriodicMesh::new(-6.0, 6.0, 0.5).is_ok());
        assert!(PeriodicMesh::new(-6.0, 6.0, 0.7).is_err());
        assert!(PeriodicMesh::with_cells(-6.0, 6.0, 6).is_err());
        assert!(PeriodicMesh::with_cells(-6.0, 6.0, 9).is_err());
        let m = PeriodicMesh::new(-6.0, 6.0, 1.0).unwrap();
        assert_eq!(m.cells, 12);
        assert_eq!(m.center(0), -5.5);
        assert!(((m.cells as f64) * m.h - m.length()).abs() <= 1e-12 * m.length());
    }

    #[test]
    fn observation_by_cell_center() {
        let m = PeriodicMesh::new(-6.0, 6.0, 1.0).unwrap();
        let mask = ObservationRegion::default().cell_mask(&m);
        assert_eq!(mask.iter().filter(|o| !**o).count(), 2);
        assert!(!mask[5] && !mask[6] && mask[4] && mask[7]);
        assert!(ObservationRegion::new(1.0, 1.0).is_err());
        assert!(ObservationRegion::new(-7.0, 1.0).unwrap().validate_in(&m).is_err());
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let mesh = PeriodicMesh::with_cells(-6.0, 6.0, 24).unwrap();
        let params = SchemeParams::new(1, mesh.h, 0.4).unwrap();
        assert!(matches!(Scheme::new(params, mesh), Err(Error::CflViolation { .. })));
    }

    #[test]
    fn constants_are_stationary() {
        let s = scheme(2, 0.1, 16);
        let mut u = DVector::zeros(s.state_len());
        for j in 0..16 {
            u[j * 3] = 1.75;
        }
        let mut st = StatePair::new(u.clone(), u.clone(), s.params).unwrap();
        for _ in 0..50 {
            st = s.step(&st).unwrap();
        }
        assert!((&st.unp1 - &u).amax() < 1e-12);
        assert!(s.energy(&st, None).abs() < 1e-10);
    }

    #[test]
    fn zero_state_has_zero_energy() {
        let s = scheme(1, 0.2, 16);
        let st = StatePair::zeros(s.params, &s.mesh);
        assert_eq!(s.energy(&st, None), 0.0);
        assert_eq!(s.energy(&st, Some(&ObservationRegion::default())), 0.0);
    }

    #[test]
    fn k0_unit_cfl_advances_phase_exactly() {
        let s = scheme(0, 1.0, 32);
        let xi = 2.0 * std::f64::consts::PI * 5.0 / s.mesh.length();
        let x = s.mesh.centers();
        let dt = s.dt();
        let wave = |n: usize| DVector::from_fn(32, |j, _| (xi * (x[j] - n as f64 * dt)).cos());
        let mut st = StatePair::new(wave(0), wave(1), s.params).unwrap();
        for n in 1..200 {
            st = s.step(&st).unwrap();
            assert!((&st.unp1 - wave(n + 1)).amax() < 1e-10, "step {n}");
        }
    }

    #[test]
    fn no_steps_error() {
        let s = scheme(0, 0.5, 16);
        let st = StatePair::zeros(s.params, &s.mesh);
        let err = s.run(&st, 0.1 * s.dt(), &ObservationRegion::default()).unwrap_err();
        assert!(matches!(err, Error::NoSteps { .. }));
    }

    #[test]
    fn non_finite_state_aborts() {
        let s = scheme(0, 0.5, 16);
        let mut st = StatePair::zeros(s.params, &s.mesh);
        st.unp1[3] = f64::INFINITY;
        assert!(matches!(s.step(&st), Err(Error::NonFinite { step: 1 })));
    }

    #[test]
    fn run_conserves_energy() {
        let s = scheme(1, 0.3, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let st = StatePair::random(s.params, &s.mesh, &mut rng);
        let out = s.run(&st, 3.0, &ObservationRegion::default()).unwrap();
        assert!(out.energy_drift() < 1e-10);
        assert_eq!(out.steps, (3.0 / s.dt()).round() as usize);
        let sum: f64 = out.records.iter().map(|r| r.e_obs).sum();
        assert!((out.observed_integral - s.dt() * sum).abs() < 1e-12 * out.observed_integral.abs());
        let mut buf = Vec::new();
        out.write_csv(&mut buf, 10).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,t,E_total,E_obs\n"));
        assert_eq!(text.lines().count(), 1 + out.steps.div_ceil(10));
    }
}
