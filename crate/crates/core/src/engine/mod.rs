//! Weak coherent-drive master-equation engine.
//!
//! A chain is driven through one waveguide mode by a coherent field of amplitude `A`
//! (units of `sqrt(rate)`). In the frame rotating at the drive frequency `k` the effective
//! master equation has
//!
//! ```text
//! H   = sum_i (omega_i - k) n_i + sum_{i<j} J_ij (s_i^dag s_j + h.c.) + A (c_in + c_in^dag)
//! J_ij = sqrt(G_i G_j)/2 sin|phi_i - phi_j|,   jumps: c_R, c_L and the loss channels
//! ```
//!
//! with output fields `b_fwd = A - i c_in` and `b_bwd = -i c_back`. Observables are taken
//! as exact coefficients of the drive expansion (order 1 for `t`, order 4 for fluxes and
//! intensities), so no finite-`A` extrapolation is needed; a finite-`A` solver is kept for
//! scaling checks.
//!
//! The emitter space is first restricted to the subspace reachable from the ground state,
//! which removes exactly decoupled dark states and keeps the stationary state unique.

mod calibration;
mod liouville;
mod observables;
mod operators;

pub use calibration::{calibrate_normalization, default_calibration, CalibrationConstant};
pub use liouville::{Superoperators, WeakDriveExpansion};
pub use observables::{
    g2_transmitted, incoherent_spectrum, inelastic_flux, integrated_spectrum,
    nonlinear_intensity, weak_drive_transmission, Channel, FourthOrder, InelasticFlux,
    LinearResponse, NonlinearIntensity, Spectrum,
};
pub use operators::{CMat, CVec, ChainOperators, ReachableSpace};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::model::{EmitterChain, Incidence};
use crate::{Error, Result, C64};

/// Default drive amplitude for finite-drive evaluations, in units of `sqrt(gamma)`.
pub const DEFAULT_AMPLITUDE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub incidence: Incidence,
    pub k: f64,
    pub amplitude: f64,
}

impl DriveSpec {
    pub fn new(incidence: Incidence, k: f64) -> Self {
        DriveSpec { incidence, k, amplitude: DEFAULT_AMPLITUDE }
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }
}

/// A chain prepared for one drive direction: operators restricted to the reachable space.
/// Frequency independent; [`EngineSystem::problem`] specialises to a drive frequency.
#[derive(Clone, Debug)]
pub struct EngineSystem {
    chain: EmitterChain,
    incidence: Incidence,
    ops: ChainOperators,
    space: ReachableSpace,
    h_lab: CMat,
    number: CMat,
    c_fwd: CMat,
    c_bwd: CMat,
    c_right: CMat,
    c_left: CMat,
    jumps: Vec<CMat>,
}

impl EngineSystem {
    pub fn new(chain: &EmitterChain, incidence: Incidence) -> Result<Self> {
        let ops = ChainOperators::new(chain)?;
        let space = ReachableSpace::new(&ops, incidence);
        let h_lab = space.restrict(&ops.hamiltonian);
        let number = {
            let d = space.dim();
            CMat::from_fn(d, d, |i, j| if i == j { C64::new(space.excitations[i] as f64, 0.0) } else { C64::new(0.0, 0.0) })
        };
        let c_right = space.restrict(&ops.c_right);
        let c_left = space.restrict(&ops.c_left);
        let (c_fwd, c_bwd) = match incidence {
            Incidence::Left => (c_right.clone(), c_left.clone()),
            Incidence::Right => (c_left.clone(), c_right.clone()),
        };
        let mut jumps = vec![c_right.clone(), c_left.clone()];
        jumps.extend(ops.losses.iter().map(|l| space.restrict(l)));
        Ok(EngineSystem {
            chain: chain.clone(),
            incidence,
            ops,
            space,
            h_lab,
            number,
            c_fwd,
            c_bwd,
            c_right,
            c_left,
            jumps,
        })
    }

    pub fn chain(&self) -> &EmitterChain {
        &self.chain
    }

    pub fn incidence(&self) -> Incidence {
        self.incidence
    }

    pub fn operators(&self) -> &ChainOperators {
        &self.ops
    }

    pub fn reduced_dim(&self) -> usize {
        self.space.dim()
    }

    /// Output mode carrying transmitted (`Forward`) or reflected light.
    pub(crate) fn mode(&self, ch: Channel) -> &CMat {
        match ch {
            Channel::Transmitted => &self.c_fwd,
            Channel::Reflected => &self.c_bwd,
        }
    }

    pub(crate) fn right_left(&self) -> (&CMat, &CMat) {
        (&self.c_right, &self.c_left)
    }

    pub(crate) fn excitations(&self) -> &[usize] {
        &self.space.excitations
    }

    /// Hamiltonian in the frame rotating at `k`, without drive.
    pub(crate) fn hamiltonian(&self, k: f64) -> CMat {
        &self.h_lab - &self.number * C64::new(k, 0.0)
    }

    pub(crate) fn effective_hamiltonian(&self, k: f64) -> CMat {
        let mut h = self.hamiltonian(k);
        for j in &self.jumps {
            h -= j.adjoint() * j * C64::new(0.0, 0.5);
        }
        h
    }

    pub fn superoperators(&self, k: f64) -> Superoperators {
        let drive = &self.c_fwd + self.c_fwd.adjoint();
        Superoperators::new(&self.hamiltonian(k), &drive, &self.jumps)
    }

    pub fn problem(&self, drive: DriveSpec) -> Result<LiouvilleProblem> {
        if drive.incidence != self.incidence {
            return Err(Error::invalid("drive direction differs from the prepared system"));
        }
        if !drive.k.is_finite() {
            return Err(Error::invalid("drive frequency must be finite"));
        }
        let em = self.chain.emitters();
        let s = drive.incidence.sign();
        let drive_vector = em
            .iter()
            .map(|e| drive.amplitude * (0.5 * e.gamma()).sqrt() * (C64::new(0.0, s * e.phase())).exp())
            .collect();
        Ok(LiouvilleProblem {
            drive,
            hilbert_dim: self.ops.dim,
            reduced_dim: self.space.dim(),
            exchange: self.ops.exchange.clone(),
            collective_decay: self.ops.collective_decay.clone(),
            loss_rates: self.ops.loss_rates.clone(),
            drive_vector,
            sup: self.superoperators(drive.k),
            basis: self.space.basis.clone(),
        })
    }
}

/// Master-equation problem at one drive frequency and amplitude.
#[derive(Clone, Debug)]
pub struct LiouvilleProblem {
    pub drive: DriveSpec,
    pub hilbert_dim: usize,
    pub reduced_dim: usize,
    pub exchange: DMatrix<f64>,
    pub collective_decay: DMatrix<f64>,
    pub loss_rates: Vec<f64>,
    /// Coefficients of `s_i^dag` in the drive Hamiltonian.
    pub drive_vector: Vec<C64>,
    pub sup: Superoperators,
    basis: CMat,
}

pub fn build_liouvillian(chain: &EmitterChain, drive: DriveSpec) -> Result<LiouvilleProblem> {
    EngineSystem::new(chain, drive.incidence)?.problem(drive)
}

/// Stationary state at the problem's drive amplitude.
pub fn steady_state(problem: &LiouvilleProblem) -> Result<DensityMatrix> {
    let v = problem.sup.steady_state(problem.drive.amplitude)?;
    let d = problem.reduced_dim;
    Ok(DensityMatrix { reduced: liouville::mat_of(&v, d), basis: problem.basis.clone() })
}

/// Density operator on the reachable space, with the embedding into the full space.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    pub reduced: CMat,
    basis: CMat,
}

impl DensityMatrix {
    pub fn full(&self) -> CMat {
        &self.basis * &self.reduced * self.basis.adjoint()
    }

    pub fn trace(&self) -> C64 {
        self.reduced.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.reduced - self.reduced.adjoint()).camax()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.reduced + self.reduced.adjoint()) * C64::new(0.5, 0.0);
        nalgebra::SymmetricEigen::new(h).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `<psi| rho |psi>` for a full-space basis index.
    pub fn full_element(&self, i: usize) -> f64 {
        let row = self.basis.row(i);
        (row * &self.reduced * row.adjoint())[(0, 0)].re
    }
}
