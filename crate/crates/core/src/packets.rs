//! Gevrey-localized high-frequency packets on the physical branch and the
//! trapping experiment.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::basis::{fmt17, SchemeParams};
use crate::error::{Error, Result};
use crate::evolve::{ObservationRegion, PeriodicMesh, Scheme, StatePair};
use crate::linalg::m_inner;
use crate::spectral::{eig_branches, mesh_grid, DispersionTable};

/// Packet parameters. The window is `chi((xi - xi_c) / rho)` with
/// `rho = h^-gamma` and `xi_c = pi/h - (1 + margin) rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PacketSpec {
    pub gamma: f64,
    pub s: f64,
    pub x_c: f64,
    pub margin: f64,
}

impl Default for PacketSpec {
    fn default() -> Self {
        Self {
            gamma: 0.8,
            s: 1.5,
            x_c: 0.0,
            margin: 1.0,
        }
    }
}

impl PacketSpec {
    pub fn new(gamma: f64, s: f64, x_c: f64, margin: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::ParameterDomain(format!("gamma = {gamma} not in (0, 1)")));
        }
        if !(s > 1.0) {
            return Err(Error::ParameterDomain(format!("Gevrey index s = {s} must exceed 1")));
        }
        if !(x_c > -1.0 && x_c < 1.0) {
            return Err(Error::ParameterDomain(format!("x_c = {x_c} not in (-1, 1)")));
        }
        if !(margin >= 1.0) {
            return Err(Error::ParameterDomain(format!("margin = {margin} must be >= 1")));
        }
        Ok(Self { gamma, s, x_c, margin })
    }

    pub fn rho(&self, h: f64) -> f64 {
        h.powf(-self.gamma)
    }

    pub fn xi_c(&self, h: f64) -> f64 {
        PI / h - (1.0 + self.margin) * self.rho(h)
    }

    /// Checks that `[xi_c - rho, xi_c + rho]` lies inside `(0, pi/h)`.
    pub fn check_support(&self, h: f64) -> Result<()> {
        let (lo, hi) = (self.xi_c(h) - self.rho(h), self.xi_c(h) + self.rho(h));
        if !(lo > 0.0 && hi < PI / h) {
            return Err(Error::ParameterDomain(format!(
                "packet window [{lo}, {hi}] not inside (0, {}) at h = {h}",
                PI / h
            )));
        }
        Ok(())
    }

    /// Frequency window `chi_rho(xi)`.
    pub fn window(&self, h: f64, xi: f64) -> f64 {
        gevrey_bump(self.s, (xi - self.xi_c(h)) / self.rho(h)).unwrap_or(0.0)
    }
}

/// `exp(-(1 - x^2)^{-1/(s-1)})` on `|x| < 1`, zero elsewhere.
pub fn gevrey_bump(s: f64, x: f64) -> Result<f64> {
    if !(s > 1.0) {
        return Err(Error::ParameterDomain(format!("Gevrey index s = {s} must exceed 1")));
    }
    if x.abs() >= 1.0 {
        return Ok(0.0);
    }
    Ok((-(1.0 - x * x).powf(-1.0 / (s - 1.0))).exp())
}

/// Amplitude vector at one retained discrete frequency.
#[derive(Debug, Clone)]
pub struct SpectralAmplitude {
    pub xi: f64,
    pub omega: f64,
    pub sigma: f64,
    pub vg: f64,
    pub amplitude: DVector<Complex64>,
}

/// A packet in frequency space with its synthesized physical-space levels.
#[derive(Debug, Clone)]
pub struct Packet {
    pub params: SchemeParams,
    pub mesh: PeriodicMesh,
    pub modes: Vec<SpectralAmplitude>,
}

impl Packet {
    /// Number of retained discrete frequencies.
    pub fn support_count(&self) -> usize {
        self.modes.len()
    }

    /// Largest physical group velocity magnitude on the support.
    pub fn max_vg(&self) -> f64 {
        self.modes.iter().map(|m| m.vg.abs()).fold(0.0, f64::max)
    }

    /// Complex field at time level `n`, `(1/(J h)) sum_m e^{-i omega n dt} U(xi_m) e^{i xi_m x_j}`,
    /// returned as (real, imaginary) parts.
    pub fn level(&self, n: usize) -> (DVector<f64>, DVector<f64>) {
        let nl = self.params.local_dim();
        let cells = self.mesh.cells;
        let dt = self.params.dt();
        let scale = 1.0 / (cells as f64 * self.mesh.h);
        let mut field = vec![Complex64::new(0.0, 0.0); nl * cells];
        for mode in &self.modes {
            let shift = Complex64::from_polar(scale, -mode.omega * n as f64 * dt);
            for j in 0..cells {
                let phase = shift * Complex64::from_polar(1.0, mode.xi * self.mesh.center(j));
                for l in 0..nl {
                    field[j * nl + l] += phase * mode.amplitude[l];
                }
            }
        }
        (
            DVector::from_iterator(field.len(), field.iter().map(|z| z.re)),
            DVector::from_iterator(field.len(), field.iter().map(|z| z.im)),
        )
    }

    /// Real and imaginary parts of the initial pair `(U^0, U^1)`.
    pub fn initial_pairs(&self) -> (StatePair, StatePair) {
        let (r0, i0) = self.level(0);
        let (r1, i1) = self.level(1);
        let pair = |a, b| StatePair {
            un: a,
            unp1: b,
            n: 0,
            params: self.params,
        };
        (pair(r0, r1), pair(i0, i1))
    }
}

/// Assembles the packet amplitudes on the discrete frequencies of `mesh`.
/// `table` must contain every retained frequency.
pub fn packet_modes(
    params: &SchemeParams,
    mesh: &PeriodicMesh,
    spec: &PacketSpec,
    table: &DispersionTable,
) -> Result<Packet> {
    let h = params.h;
    spec.check_support(h)?;
    let b = table.physical_index;
    let local = crate::basis::LocalMatrices::for_params(params)?;
    let cells = mesh.cells as i64;
    let mut modes = Vec::new();
    for m in -cells / 2..cells / 2 {
        let xi = 2.0 * PI * m as f64 / (cells as f64 * h);
        // support of the window; its value may underflow to zero near the edges
        if ((xi - spec.xi_c(h)) / spec.rho(h)).abs() >= 1.0 {
            continue;
        }
        let chi = spec.window(h, xi);
        if xi >= PI / h {
            return Err(Error::ParameterDomain(format!(
                "retained frequency {xi} violates xi < pi/h"
            )));
        }
        let i = table.index_of(xi).ok_or_else(|| {
            Error::ParameterDomain(format!("dispersion table lacks the mesh frequency {xi}"))
        })?;
        let sigma = table.sigma[b][i];
        let mut v = table.vecs[b][i].clone();
        if v[0].norm() > 0.0 {
            let p = v[0] / v[0].norm();
            v = v.map(|z| z / p);
        }
        let mass = m_inner(&v, &local.m, &v).re / h;
        let r = (sigma * mass).powf(-0.5);
        let coef = Complex64::from_polar(r * h.powf(spec.gamma / 2.0) * chi, -xi * spec.x_c);
        modes.push(SpectralAmplitude {
            xi,
            omega: table.omega[b][i],
            sigma,
            vg: table.physical_vg(i),
            amplitude: v.map(|z| z * coef),
        });
    }
    if modes.is_empty() {
        // smallest J whose frequency spacing fits inside the window
        let min_cells = (PI / (h * spec.rho(h))).ceil() as usize;
        return Err(Error::EmptySupport {
            min_cells: (min_cells + min_cells % 2).max(8),
        });
    }
    Ok(Packet {
        params: *params,
        mesh: *mesh,
        modes,
    })
}

/// Real part of the packet initial pair.
pub fn build_packet(
    params: &SchemeParams,
    mesh: &PeriodicMesh,
    spec: &PacketSpec,
    table: &DispersionTable,
) -> Result<StatePair> {
    Ok(packet_modes(params, mesh, spec, table)?.initial_pairs().0)
}

/// Dispersion table on the discrete frequencies of `mesh`, each interval
/// subdivided `refine` times for branch tracking.
pub fn mesh_table(params: &SchemeParams, mesh: &PeriodicMesh, refine: usize) -> Result<DispersionTable> {
    let local = crate::basis::LocalMatrices::for_params(params)?;
    eig_branches(&local, params.lambda, &mesh_grid(mesh.cells, params.h, refine))
}

/// One row of `trap.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrapResult {
    pub h: f64,
    pub cells: usize,
    pub steps: usize,
    /// Initial energy of the complex packet.
    pub e0: f64,
    /// `dt * sum_{n<N} E_obs^n`.
    pub obs_integral: f64,
    /// `obs_integral / (N dt E0)`.
    pub fraction: f64,
    /// `E0 / obs_integral`.
    pub ct_lower_bound: f64,
    pub support: usize,
    pub max_vg: f64,
}

/// Launches the packet and accumulates its observed energy up to `t_final`.
///
/// Energies are those of the complex field, i.e. the sums over its real and
/// imaginary parts, which evolve independently.
pub fn trap_experiment(
    params: &SchemeParams,
    mesh: &PeriodicMesh,
    spec: &PacketSpec,
    t_final: f64,
    region: &ObservationRegion,
) -> Result<TrapResult> {
    let limit = mesh.length() / 2.0 - 1.0;
    if t_final > limit {
        return Err(Error::WrapAround { t: t_final, limit });
    }
    region.validate_in(mesh)?;
    let scheme = Scheme::new(*params, *mesh)?;
    let table = mesh_table(params, mesh, 4)?;
    let packet = packet_modes(params, mesh, spec, &table)?;
    let (re, im) = packet.initial_pairs();
    let e0 = scheme.energy(&re, None) + scheme.energy(&im, None);
    let a = scheme.run(&re, t_final, region)?;
    let b = scheme.run(&im, t_final, region)?;
    let obs = a.observed_integral + b.observed_integral;
    Ok(TrapResult {
        h: params.h,
        cells: mesh.cells,
        steps: a.steps,
        e0,
        obs_integral: obs,
        fraction: obs / (a.final_time * e0),
        ct_lower_bound: e0 / obs,
        support: packet.support_count(),
        max_vg: packet.max_vg(),
    })
}

/// Writes `trap.csv`.
pub fn write_trap_csv<W: Write>(mut out: W, rows: &[TrapResult]) -> std::io::Result<()> {
    writeln!(out, "h,J,N,E0,obs_integral,fraction,ct_lower_bound")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt17(r.h),
            r.cells,
            r.steps,
            fmt17(r.e0),
            fmt17(r.obs_integral),
            fmt17(r.fraction),
            fmt17(r.ct_lower_bound)
        )?;
    }
    Ok(())
}
