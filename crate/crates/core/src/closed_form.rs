//! Analytic two-photon quantities for a pair of two-level emitters in the Markovian regime.
//!
//! The transmitted two-photon intensity far beyond the pair is
//! `|t|^2 * delta(0)/pi + X(k)`, with the nonlinear part
//!
//! ```text
//! X(k) = F(k) / 2pi + interference(k)
//! ```
//!
//! `F` is the transmitted inelastic flux, supplied by [`crate::engine`]; the interference
//! term is built here from the one-photon emitter amplitudes, contour integrals `RR_i`
//! evaluated by residues, and the coincident two-excitation propagator of the pair.
//! The divergent elastic part is never regularised; it is carried as the coefficient
//! `|t|^2` only.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::model::{Incidence, PairGeometry, PhaseMode};
use crate::single_photon::t_pair;
use crate::{Error, Result, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
const SQRT_PI: f64 = 1.772_453_850_905_516;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Emitter amplitudes for both drive directions, with the associated reflection amplitudes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitWavefunctions {
    pub k: f64,
    /// Amplitudes of emitters 1 and 2 for left incidence.
    pub forward: [C64; 2],
    /// Amplitudes of emitters 1 and 2 for right incidence.
    pub backward: [C64; 2],
    pub t: C64,
    pub r_forward: C64,
    pub r_backward: C64,
}

/// `(e1, e2, r)` for left incidence of an equal-rate pair; loss enters as
/// `omega0 -> omega0 - i loss / 2`.
fn printed_forward(k: f64, center: f64, delta: f64, gamma: f64, loss: f64, kl: f64) -> [C64; 3] {
    let kap = c(2.0 * (k - center)) + I * loss;
    let e2kl = (I * (2.0 * kl)).exp();
    let den = (kap + I * gamma).powi(2) + gamma * gamma * e2kl - delta * delta;
    let sg = gamma.sqrt();
    let e1 = sg * (-I * (0.5 * kl)).exp() * (I * (kap + delta) - gamma * (1.0 - e2kl))
        / (I * SQRT_PI * den);
    let e2 = sg * (I * (0.5 * kl)).exp() * (kap - delta) / (SQRT_PI * den);
    let r = -I * gamma * (2.0 * kap * kl.cos() + 2.0 * (c(gamma) - I * delta) * kl.sin()) / den;
    [e1, e2, r]
}

fn propagation_phase(k: f64, pair: &PairGeometry, mode: PhaseMode) -> f64 {
    match mode {
        PhaseMode::Markovian => pair.separation_phase,
        PhaseMode::Exact => pair.separation_phase * k / pair.center,
    }
}

fn require_equal_rates(pair: &PairGeometry) -> Result<f64> {
    if pair.gamma1 != pair.gamma2 {
        return Err(Error::invalid("closed-form pair amplitudes need gamma1 == gamma2"));
    }
    Ok(pair.gamma1)
}

/// Emitter amplitudes from the closed forms; the right-incidence set follows from the
/// mirror substitution `delta -> -delta` with the emitter labels exchanged.
pub fn qubit_wavefunctions(k: f64, pair: &PairGeometry, mode: PhaseMode) -> Result<QubitWavefunctions> {
    let g = require_equal_rates(pair)?;
    let kl = propagation_phase(k, pair, mode);
    let [f1, f2, rf] = printed_forward(k, pair.center, pair.detuning, g, pair.loss, kl);
    let [m1, m2, rb] = printed_forward(k, pair.center, -pair.detuning, g, pair.loss, kl);
    Ok(QubitWavefunctions {
        k,
        forward: [f1, f2],
        backward: [m2, m1],
        t: t_pair(k, pair, mode),
        r_forward: rf,
        r_backward: rb,
    })
}

/// One-excitation Green matrix `G(k) = k - H_eff` of the pair with its drive vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreenMatrix {
    pub k: f64,
    pub matrix: Matrix2<C64>,
    pub drive_forward: Vector2<C64>,
    pub drive_backward: Vector2<C64>,
}

impl GreenMatrix {
    pub fn drive(&self, inc: Incidence) -> Vector2<C64> {
        match inc {
            Incidence::Left => self.drive_forward,
            Incidence::Right => self.drive_backward,
        }
    }

    /// Emitter amplitudes `G^-1 d`.
    pub fn amplitudes(&self, inc: Incidence) -> Result<Vector2<C64>> {
        self.matrix
            .lu()
            .solve(&self.drive(inc))
            .ok_or_else(|| Error::numeric("singular green matrix"))
    }
}

/// Markovian coupling data shared by the Green matrix and the residue evaluation.
struct PairOperators {
    /// Effective non-Hermitian Hamiltonian (lab frame).
    heff: Matrix2<C64>,
    rates: [f64; 2],
    phases: [f64; 2],
}

impl PairOperators {
    fn new(pair: &PairGeometry) -> Self {
        let (g1, g2) = (pair.gamma1, pair.gamma2);
        let off = -I * (0.5 * (g1 * g2).sqrt()) * (I * pair.separation_phase).exp();
        let heff = Matrix2::new(
            c(pair.omega1()) - I * (0.5 * (g1 + pair.loss)),
            off,
            off,
            c(pair.omega2()) - I * (0.5 * (g2 + pair.loss)),
        );
        PairOperators { heff, rates: [g1, g2], phases: pair.phases() }
    }

    /// Drive vector for incidence `s`: `sqrt(Gamma_i / 2) e^{i s phi_i} / sqrt(2 pi)`.
    fn drive(&self, inc: Incidence) -> Vector2<C64> {
        let s = inc.sign();
        Vector2::from_fn(|i, _| {
            (self.rates[i] / 2.0).sqrt() * (I * (s * self.phases[i])).exp() / TWO_PI.sqrt()
        })
    }

    /// Weights `w` with `amplitude = -i sqrt(2 pi) w . e` for the transmitted (`same = false`)
    /// or reflected (`same = true`) output of incidence `inc`.
    fn output(&self, inc: Incidence, reflected: bool) -> Vector2<C64> {
        let s = if reflected { inc.sign() } else { -inc.sign() };
        Vector2::from_fn(|i, _| (self.rates[i] / 2.0).sqrt() * (I * (s * self.phases[i])).exp())
    }
}

/// Green matrix of the pair, accepted only if it reproduces the closed-form emitter
/// amplitudes to `1e-10`.
pub fn green_matrix(k: f64, pair: &PairGeometry) -> Result<GreenMatrix> {
    let ops = PairOperators::new(pair);
    let g = GreenMatrix {
        k,
        matrix: Matrix2::from_diagonal_element(c(k)) - ops.heff,
        drive_forward: ops.drive(Incidence::Left),
        drive_backward: ops.drive(Incidence::Right),
    };
    if pair.gamma1 == pair.gamma2 {
        let deviation = reconstruction_deviation(&g, pair)?;
        if deviation > 1e-10 {
            return Err(Error::ReconstructionMismatch { deviation });
        }
    }
    Ok(g)
}

/// Largest absolute difference between `G^-1 d` and the closed-form amplitudes,
/// both directions.
pub fn reconstruction_deviation(g: &GreenMatrix, pair: &PairGeometry) -> Result<f64> {
    let w = qubit_wavefunctions(g.k, pair, PhaseMode::Markovian)?;
    let f = g.amplitudes(Incidence::Left)?;
    let b = g.amplitudes(Incidence::Right)?;
    let mut dev: f64 = 0.0;
    for i in 0..2 {
        dev = dev.max((f[i] - w.forward[i]).norm()).max((b[i] - w.backward[i]).norm());
    }
    Ok(dev)
}

/// Coincident-site two-excitation propagator `Pi_ij`, the amplitude for two excitations
/// injected on emitter `i` to be found together on emitter `j` at total energy `2k`.
pub fn coincidence_propagator(k: f64, pair: &PairGeometry) -> Result<Matrix2<C64>> {
    let m = PairOperators::new(pair).heff - Matrix2::from_diagonal_element(c(k));
    let id = Matrix2::<C64>::identity();
    let two = -(m.kronecker(&id) + id.kronecker(&m));
    let a = Matrix4::from_iterator(two.iter().copied());
    let lu = a.lu();
    let mut pi = Matrix2::zeros();
    for i in 0..2 {
        let mut rhs = Vector4::zeros();
        rhs[3 * i] = c(1.0);
        let col = lu.solve(&rhs).ok_or_else(|| Error::numeric("singular two-excitation block"))?;
        for j in 0..2 {
            pi[(i, j)] = col[3 * j];
        }
    }
    Ok(pi)
}

/// Eigen-decomposition of the pair Hamiltonian as a partial-fraction resolvent,
/// `(q - H)^-1 = sum_n u_n u_n^T / (q - lambda_n)` with `u_n^T u_n = 1`.
struct Resolvent {
    poles: [C64; 2],
    modes: [Vector2<C64>; 2],
}

impl Resolvent {
    fn new(h: &Matrix2<C64>) -> Option<Self> {
        let (a, b, d) = (h[(0, 0)], h[(0, 1)], h[(1, 1)]);
        let mean = 0.5 * (a + d);
        let root = (0.25 * (a - d) * (a - d) + b * h[(1, 0)]).sqrt();
        let poles = [mean + root, mean - root];
        let mut modes = [Vector2::zeros(); 2];
        for (n, &l) in poles.iter().enumerate() {
            let u1 = Vector2::new(b, l - a);
            let u2 = Vector2::new(l - d, h[(1, 0)]);
            let u = if u1.norm() >= u2.norm() { u1 } else { u2 };
            let norm2 = u[0] * u[0] + u[1] * u[1];
            if u.norm() < 1e-300 || norm2.norm() < 1e-10 * u.norm_squared() {
                return None;
            }
            modes[n] = u / norm2.sqrt();
        }
        Some(Resolvent { poles, modes })
    }

    /// Residue vectors of `(q - H)^-1 v`.
    fn residues(&self, v: &Vector2<C64>) -> [Vector2<C64>; 2] {
        let r = |n: usize| self.modes[n] * (self.modes[n].transpose() * v)[0];
        [r(0), r(1)]
    }
}

fn resolvent_with_fallback(pair: &PairGeometry) -> (Resolvent, PairOperators) {
    let ops = PairOperators::new(pair);
    if let Some(r) = Resolvent::new(&ops.heff) {
        return (r, ops);
    }
    log::warn!("coincident pair poles; perturbing detuning by 1e-9 gamma");
    let g = 0.5 * (pair.gamma1 + pair.gamma2);
    let shifted = pair.with_detuning(pair.detuning + 1e-9 * g);
    let ops = PairOperators::new(&shifted);
    let r = Resolvent::new(&ops.heff).expect("perturbation lifts the degeneracy");
    (r, ops)
}

/// Contour integral
///
/// ```text
/// RR_i(k, x) = e_i(k)^* / sqrt(pi) * int dq e^{iqx} [t(q) e_i(q)^c + r'(q) e'_i(q)^c] / (k - q + i0)
/// ```
///
/// for incidence `inc`, where primed quantities belong to the opposite incidence and `^c`
/// denotes the rational continuation with conjugated coefficients. `x > 0` is the distance
/// into the transmitted side. The contour is closed in the upper half plane.
pub fn rr_integral(k: f64, x: f64, i: usize, pair: &PairGeometry, inc: Incidence) -> Result<C64> {
    if i > 1 {
        return Err(Error::invalid("emitter index must be 0 or 1"));
    }
    if x.is_nan() || x <= 0.0 {
        return Err(Error::invalid("rr_integral needs x > 0"));
    }
    let (res, ops) = resolvent_with_fallback(pair);
    let back = inc.reversed();
    let a_f = res.residues(&ops.drive(inc));
    let a_b = res.residues(&ops.drive(back));
    let w_t = ops.output(inc, false);
    let w_r = ops.output(back, true);
    let scale = -I * TWO_PI.sqrt();
    let tau: Vec<C64> = a_f.iter().map(|a| scale * (w_t.transpose() * a)[0]).collect();
    let rho: Vec<C64> = a_b.iter().map(|a| scale * (w_r.transpose() * a)[0]).collect();

    let ef = |q: C64, j: usize| -> C64 { (0..2).map(|n| a_f[n][j] / (q - res.poles[n])).sum() };
    let t = |q: C64| -> C64 { c(1.0) + (0..2).map(|n| tau[n] / (q - res.poles[n])).sum::<C64>() };
    let r = |q: C64| -> C64 { (0..2).map(|n| rho[n] / (q - res.poles[n])).sum() };
    let conj_cont = |a: &[Vector2<C64>; 2], q: C64| -> C64 {
        (0..2).map(|n| a[n][i].conj() / (q - res.poles[n].conj())).sum()
    };

    let kk = c(k);
    // Pole at q = k + i0 (the 1/(k - q) factor contributes -1).
    let f_k = t(kk) * conj_cont(&a_f, kk) + r(kk) * conj_cont(&a_b, kk);
    let mut sum = -(I * (k * x)).exp() * f_k;
    // Poles of the conjugated continuations at q = lambda_n^*.
    for n in 0..2 {
        let q = res.poles[n].conj();
        if q.im <= 0.0 {
            continue;
        }
        let resid = t(q) * a_f[n][i].conj() + r(q) * a_b[n][i].conj();
        if resid == C64::new(0.0, 0.0) {
            continue;
        }
        let den = kk - q;
        if den.norm() < 1e-12 {
            return Err(Error::numeric("integrand pole coincides with k"));
        }
        sum += (I * q * x).exp() * resid / den;
    }
    Ok(ef(kk, i).conj() / SQRT_PI * (I * TWO_PI) * sum)
}

/// Interference part of the nonlinear transmitted intensity, evaluated at distance `x`.
pub fn interference_term_at(k: f64, x: f64, pair: &PairGeometry, inc: Incidence) -> Result<f64> {
    let g = green_matrix(k, pair)?;
    let e = g.amplitudes(inc)?;
    let t = t_pair(k, pair, PhaseMode::Markovian);
    let pi_inv = coincidence_propagator(k, pair)?
        .try_inverse()
        .ok_or_else(|| Error::numeric("singular coincidence propagator"))?;
    let rr = [rr_integral(k, x, 0, pair, inc)?, rr_integral(k, x, 1, pair, inc)?];
    let mut s = C64::new(0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            s += rr[i] * pi_inv[(i, j)] * e[j] * e[j];
        }
    }
    let z = -2.0 * (-I * (k * x)).exp() / (2.0 * SQRT_PI) * t.conj() * s;
    // z + z^*
    Ok(2.0 * z.re)
}

/// Distance beyond the pair used for the nominally x-independent quantities.
pub const FAR_FIELD_X: f64 = 10.0;

pub fn interference_term(k: f64, pair: &PairGeometry, inc: Incidence) -> Result<f64> {
    let x = FAR_FIELD_X / (0.5 * (pair.gamma1 + pair.gamma2));
    interference_term_at(k, x, pair, inc)
}

/// Transmitted two-photon intensity, split into the elastic coefficient and the nonlinear
/// part `X = F / 2pi + interference`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityDecomposition {
    pub k: f64,
    pub incidence: Incidence,
    /// Coefficient of the divergent `delta(0) / pi` term.
    pub elastic: f64,
    pub inelastic_flux: f64,
    pub interference: f64,
    pub x: f64,
}

/// Assemble `X` for one drive direction. `flux` is the transmitted inelastic flux for the
/// same incidence, in calibrated units.
pub fn transmitted_intensity_x(
    k: f64,
    pair: &PairGeometry,
    inc: Incidence,
    flux: Option<f64>,
) -> Result<IntensityDecomposition> {
    let f = flux.ok_or(Error::MissingDependency("transmitted inelastic flux from the engine"))?;
    let interference = interference_term(k, pair, inc)?;
    Ok(IntensityDecomposition {
        k,
        incidence: inc,
        elastic: t_pair(k, pair, PhaseMode::Markovian).norm_sqr(),
        inelastic_flux: f,
        interference,
        x: f / TWO_PI + interference,
    })
}

/// Unnormalised rectification factor `|X_fwd - X_bwd|`.
pub fn rectification_factor(fwd: &IntensityDecomposition, bwd: &IntensityDecomposition) -> Result<f64> {
    if fwd.k != bwd.k || fwd.incidence == bwd.incidence {
        return Err(Error::invalid("rectification needs both directions at the same k"));
    }
    Ok((fwd.x - bwd.x).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pair(d: f64, l: f64) -> PairGeometry {
        PairGeometry::new(100.0, d, 1.0, l).unwrap()
    }

    #[test]
    fn green_matrix_reproduces_printed_amplitudes() {
        for &(d, l, k) in &[(0.35, PI, 100.1), (-0.8, 1.3, 99.2), (0.0, 0.0, 100.7), (1.4, 5.9, 101.3)] {
            let p = pair(d, l);
            let g = green_matrix(k, &p).unwrap();
            assert!(reconstruction_deviation(&g, &p).unwrap() < 1e-12);
        }
    }

    #[test]
    fn printed_reflection_matches_star_product() {
        let p = pair(0.6, 2.1);
        let ch = crate::model::build_pair(&p).unwrap();
        for k in [99.1, 99.9, 100.4] {
            let w = qubit_wavefunctions(k, &p, PhaseMode::Markovian).unwrap();
            let s = crate::single_photon::scatter(&ch, k, PhaseMode::Markovian).unwrap();
            assert!((w.r_forward - s.r_left).norm() < 1e-12);
            assert!((w.r_backward - s.r_right).norm() < 1e-12);
        }
    }

    #[test]
    fn upper_half_plane_residues_cancel() {
        let p = pair(0.4, 2.5);
        let a = rr_integral(100.2, 3.0, 0, &p, Incidence::Left).unwrap();
        let b = rr_integral(100.2, 30.0, 0, &p, Incidence::Left).unwrap();
        let phase = (I * (100.2 * 27.0)).exp();
        assert!((a * phase - b).norm() < 1e-12 * a.norm());
    }

    #[test]
    fn no_rectification_at_half_wavelength() {
        let p = pair(0.35, PI);
        for k in [99.5, 100.03, 100.4] {
            let f = interference_term(k, &p, Incidence::Left).unwrap();
            let b = interference_term(k, &p, Incidence::Right).unwrap();
            assert!((f - b).abs() < 1e-10 * (1.0 + f.abs()));
        }
    }

    #[test]
    fn missing_flux_is_an_error() {
        let p = pair(0.35, PI);
        assert_eq!(
            transmitted_intensity_x(100.0, &p, Incidence::Left, None),
            Err(Error::MissingDependency("transmitted inelastic flux from the engine"))
        );
    }

    #[test]
    fn propagator_inverse_structure() {
        // Pi^-1 = 2 (M12^2 / S) J - 2 diag(M) with M = H - k, S = M11 + M22.
        let p = pair(0.3, 2.0);
        let k = 100.1;
        let m = PairOperators::new(&p).heff - Matrix2::from_diagonal_element(c(k));
        let s = m[(0, 0)] + m[(1, 1)];
        let w = m[(0, 1)] * m[(0, 1)] / s;
        let expect = Matrix2::new(w - m[(0, 0)], w, w, w - m[(1, 1)]) * c(2.0);
        let got = coincidence_propagator(k, &p).unwrap().try_inverse().unwrap();
        assert!((got - expect).norm() < 1e-12);
    }
}
