//! Observables of the driven chain: linear response, fourth-order fluxes and intensities,
//! incoherent spectra and second-order correlations.

use serde::{Deserialize, Serialize};

use super::calibration::CalibrationConstant;
use super::liouville::{expect, RegressionResolvent};
use super::operators::{CMat, CVec};
use super::{EngineSystem, DEFAULT_AMPLITUDE};
use crate::model::{EmitterChain, Incidence};
use crate::numerics::{integrate_real_line, Quadrature};
use crate::{Error, Result, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };
const PI: f64 = std::f64::consts::PI;

/// Output channel relative to the drive direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Transmitted,
    Reflected,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearResponse {
    pub k: f64,
    pub t: C64,
    pub r: C64,
}

/// Fourth-order (in drive amplitude) coefficients, engine normalisation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourthOrder {
    pub k: f64,
    pub incidence: Incidence,
    pub t: C64,
    /// Incoherent flux into the transmitted channel.
    pub flux_transmitted: f64,
    pub flux_reflected: f64,
    /// Nonlinear part of the transmitted intensity.
    pub intensity_transmitted: f64,
}

impl FourthOrder {
    pub fn flux_right(&self) -> f64 {
        match self.incidence {
            Incidence::Left => self.flux_transmitted,
            Incidence::Right => self.flux_reflected,
        }
    }

    pub fn flux_left(&self) -> f64 {
        match self.incidence {
            Incidence::Left => self.flux_reflected,
            Incidence::Right => self.flux_transmitted,
        }
    }

    pub fn flux_total(&self) -> f64 {
        self.flux_transmitted + self.flux_reflected
    }

    /// Coherent (interference) part of the transmitted intensity.
    pub fn coherent_transmitted(&self) -> f64 {
        self.intensity_transmitted - self.flux_transmitted
    }
}

/// Inelastic fluxes in calibrated units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InelasticFlux {
    pub k: f64,
    pub incidence: Incidence,
    pub transmitted: f64,
    pub reflected: f64,
    pub right: f64,
    pub left: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearIntensity {
    pub k: f64,
    pub forward: f64,
    pub backward: f64,
}

impl NonlinearIntensity {
    pub fn difference(&self) -> f64 {
        (self.forward - self.backward).abs()
    }
}

/// Incoherent spectra per output mode, engine normalisation (`int S = flux`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub k: f64,
    pub omega: Vec<f64>,
    pub right: Vec<f64>,
    pub left: Vec<f64>,
}

impl Spectrum {
    pub fn total(&self) -> Vec<f64> {
        self.right.iter().zip(&self.left).map(|(a, b)| a + b).collect()
    }
}

/// One- and two-excitation steady-state amplitudes at leading order in the drive.
struct PureAmplitudes {
    one: Vec<usize>,
    psi1: CVec,
    psi2: CVec,
    h1: CMat,
}

fn sub(m: &CMat, rows: &[usize], cols: &[usize]) -> CMat {
    CMat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn solve_sector(h: &CMat, rhs: &CVec, idx: &[usize], d: usize) -> Result<CVec> {
    let mut out = CVec::zeros(d);
    if idx.is_empty() {
        return Ok(out);
    }
    let hs = sub(h, idx, idx);
    let rs = CVec::from_iterator(idx.len(), idx.iter().map(|&i| rhs[i]));
    let x = hs.lu().solve(&(-rs)).ok_or_else(|| Error::numeric("singular effective Hamiltonian"))?;
    for (n, &i) in idx.iter().enumerate() {
        out[i] = x[n];
    }
    Ok(out)
}

impl EngineSystem {
    fn pure_amplitudes(&self, k: f64) -> Result<PureAmplitudes> {
        let heff = self.effective_hamiltonian(k);
        let ex = self.excitations();
        let d = ex.len();
        let sector = |n: usize| -> Vec<usize> { (0..d).filter(|&i| ex[i] == n).collect() };
        let one = sector(1);
        let two = sector(2);
        let raise = self.mode(Channel::Transmitted).adjoint();
        let mut g = CVec::zeros(d);
        g[0] = C64::new(1.0, 0.0);
        let psi1 = solve_sector(&heff, &(&raise * &g), &one, d)?;
        let psi2 = solve_sector(&heff, &(&raise * &psi1), &two, d)?;
        let h1 = sub(&heff, &one, &one);
        Ok(PureAmplitudes { one, psi1, psi2, h1 })
    }

    /// Exact linear-response amplitudes.
    pub fn linear_response(&self, k: f64) -> Result<LinearResponse> {
        let p = self.pure_amplitudes(k)?;
        let t = C64::new(1.0, 0.0) - I * (self.mode(Channel::Transmitted) * &p.psi1)[0];
        let r = -I * (self.mode(Channel::Reflected) * &p.psi1)[0];
        Ok(LinearResponse { k, t, r })
    }

    /// Fourth-order coefficients from the drive expansion.
    pub fn fourth_order(&self, k: f64) -> Result<FourthOrder> {
        let sup = self.superoperators(k);
        let exp = sup.expansion(4)?;
        let coeffs = |c: &CMat| -> (C64, C64, f64) {
            let n = c.adjoint() * c;
            (exp.expect(c, 1), exp.expect(c, 3), exp.expect(&n, 4).re)
        };
        let (c1, c3, n4) = coeffs(self.mode(Channel::Transmitted));
        let (r1, r3, m4) = coeffs(self.mode(Channel::Reflected));
        Ok(FourthOrder {
            k,
            incidence: self.incidence(),
            t: C64::new(1.0, 0.0) - I * c1,
            flux_transmitted: n4 - 2.0 * (c1.conj() * c3).re,
            flux_reflected: m4 - 2.0 * (r1.conj() * r3).re,
            intensity_transmitted: 2.0 * c3.im + n4,
        })
    }

    /// Transmission `<b_fwd> / A` from the finite-drive steady state.
    pub fn finite_drive_transmission(&self, k: f64, a: f64) -> Result<C64> {
        let rho = self.superoperators(k).steady_state(a)?;
        Ok(C64::new(1.0, 0.0) - I * expect(self.mode(Channel::Transmitted), &rho) / a)
    }

    /// Incoherent flux divided by `A^4` from the finite-drive steady state.
    pub fn finite_drive_flux(&self, k: f64, a: f64, ch: Channel) -> Result<f64> {
        let rho = self.superoperators(k).steady_state(a)?;
        let c = self.mode(ch);
        let n = expect(&(c.adjoint() * c), &rho).re;
        Ok((n - expect(c, &rho).norm_sqr()) / a.powi(4))
    }

    /// Nonlinear transmitted intensity `(<b^dag b> - A^2 |t|^2) / A^4` at finite drive.
    pub fn finite_drive_intensity(&self, k: f64, a: f64) -> Result<f64> {
        let rho = self.superoperators(k).steady_state(a)?;
        let c = self.mode(Channel::Transmitted);
        let mean = expect(c, &rho);
        let n = expect(&(c.adjoint() * c), &rho).re;
        let t = self.linear_response(k)?.t;
        let bb = a * a + 2.0 * a * mean.im + n;
        Ok((bb - a * a * t.norm_sqr()) / a.powi(4))
    }

    /// Fourth-order transmitted intensity by Richardson elimination of the `A^2` term from
    /// drives `A` and `A / sqrt 2`.
    pub fn richardson_intensity(&self, k: f64, a: f64) -> Result<f64> {
        let hi = self.finite_drive_intensity(k, a)?;
        let lo = self.finite_drive_intensity(k, a / 2f64.sqrt())?;
        Ok(2.0 * lo - hi)
    }

    /// Incoherent spectrum of one output mode at detunings `nu = omega - k`.
    pub fn spectral_density(&self, k: f64, nu: &[f64], mode: &CMat) -> Result<Vec<f64>> {
        let sup = self.superoperators(k);
        let exp = sup.expansion(4)?;
        let res = RegressionResolvent::new(&sup, &exp, mode)?;
        nu.iter().map(|&v| Ok(res.evaluate(C64::new(0.0, -v))?.re / PI)).collect()
    }

    /// Detunings where the spectrum can have narrow features.
    fn spectral_breakpoints(&self, k: f64) -> Vec<f64> {
        let heff = self.effective_hamiltonian(k);
        let ex = self.excitations();
        let eig = |n: usize| -> Vec<C64> {
            let idx: Vec<usize> = (0..ex.len()).filter(|&i| ex[i] == n).collect();
            if idx.is_empty() {
                return vec![];
            }
            let (_, t) = sub(&heff, &idx, &idx).schur().unpack();
            (0..idx.len()).map(|i| t[(i, i)]).collect()
        };
        let e1 = eig(1);
        let e2 = eig(2);
        let mut b = vec![0.0];
        for l in &e1 {
            b.push(l.re);
            b.push(-l.re);
            for m in &e2 {
                b.push((m - l).re);
                b.push(-(m - l).re);
            }
        }
        b
    }

    /// `int S(omega) d omega` over the real line for one output mode.
    pub fn integrated_spectrum(&self, k: f64, ch: Channel) -> Result<Quadrature> {
        let sup = self.superoperators(k);
        let exp = sup.expansion(4)?;
        let res = RegressionResolvent::new(&sup, &exp, self.mode(ch))?;
        let scale: f64 = self.chain().emitters().iter().map(|e| e.gamma()).sum();
        let mut err = None;
        let q = integrate_real_line(
            |v| match res.evaluate(C64::new(0.0, -v)) {
                Ok(z) => C64::new(z.re / PI, 0.0),
                Err(e) => {
                    err.get_or_insert(e);
                    C64::new(0.0, 0.0)
                }
            },
            scale,
            &self.spectral_breakpoints(k),
            1e-13,
            1e-10,
            20_000,
        )?;
        match err {
            Some(e) => Err(e),
            None => Ok(q),
        }
    }

    /// Second-order correlation of one output channel at delays `times`.
    pub fn g2(&self, k: f64, times: &[f64], ch: Channel) -> Result<Vec<f64>> {
        let p = self.pure_amplitudes(k)?;
        let c = self.mode(ch);
        let alpha = match ch {
            Channel::Transmitted => C64::new(1.0, 0.0),
            Channel::Reflected => C64::new(0.0, 0.0),
        };
        let amp = alpha - I * (c * &p.psi1)[0];
        if amp.norm_sqr() < 1e-12 {
            return Err(Error::IllDefined(format!(
                "no elastic light in the {ch:?} channel at k = {k}, g2 is undefined"
            )));
        }
        let phi0 = (&p.psi1 * alpha - (c * &p.psi2) * I) / amp;
        let pick = |v: &CVec| CVec::from_iterator(p.one.len(), p.one.iter().map(|&i| v[i]));
        let base = pick(&p.psi1);
        let diff = pick(&phi0) - &base;
        let c_g = CVec::from_iterator(p.one.len(), p.one.iter().map(|&i| c[(0, i)]));
        times
            .iter()
            .map(|&tau| {
                if !(tau.is_finite() && tau >= 0.0) {
                    return Err(Error::invalid("correlation delays must be finite and >= 0"));
                }
                let u = (&p.h1 * (-I * tau)).exp();
                let phi = &base + u * &diff;
                let a = alpha - I * c_g.dot(&phi);
                Ok(a.norm_sqr() / amp.norm_sqr())
            })
            .collect()
    }
}

/// Linear-response transmission for left incidence, after checking that the default drive
/// amplitude is in the linear regime.
pub fn weak_drive_transmission(chain: &EmitterChain, k: f64) -> Result<C64> {
    let sys = EngineSystem::new(chain, Incidence::Left)?;
    let t = sys.linear_response(k)?.t;
    let a = DEFAULT_AMPLITUDE;
    let t1 = sys.finite_drive_transmission(k, a)?;
    let t2 = sys.finite_drive_transmission(k, 0.5 * a)?;
    let change = (t1 - t2).norm() / t2.norm().max(1e-3);
    if change > 1e-4 {
        return Err(Error::WeakDriveViolation { change });
    }
    Ok(t)
}

/// Incoherent spectra of both output modes on an absolute frequency grid. The grid must
/// capture the flux: its trapezoid integral has to match the exact flux to 2%.
pub fn incoherent_spectrum(
    chain: &EmitterChain,
    k: f64,
    inc: Incidence,
    omega: &[f64],
) -> Result<Spectrum> {
    if omega.len() < 2 || omega.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Grid("frequency grid must be increasing with at least two points".into()));
    }
    let sys = EngineSystem::new(chain, inc)?;
    let nu: Vec<f64> = omega.iter().map(|w| w - k).collect();
    let (cr, cl) = sys.right_left();
    let right = sys.spectral_density(k, &nu, cr)?;
    let left = sys.spectral_density(k, &nu, cl)?;
    let fo = sys.fourth_order(k)?;
    let flux = fo.flux_total();
    let trap: f64 = omega
        .windows(2)
        .enumerate()
        .map(|(i, w)| 0.5 * (w[1] - w[0]) * (right[i] + left[i] + right[i + 1] + left[i + 1]))
        .sum();
    if (trap - flux).abs() > 0.02 * flux.abs() + 1e-9 {
        return Err(Error::Grid(format!(
            "grid integral {trap:.6e} does not reproduce the flux {flux:.6e}"
        )));
    }
    Ok(Spectrum { k, omega: omega.to_vec(), right, left })
}

/// `int S d omega` for one channel, engine normalisation.
pub fn integrated_spectrum(chain: &EmitterChain, k: f64, inc: Incidence, ch: Channel) -> Result<f64> {
    Ok(EngineSystem::new(chain, inc)?.integrated_spectrum(k, ch)?.value.re)
}

/// Inelastic fluxes in calibrated units.
pub fn inelastic_flux(
    chain: &EmitterChain,
    k: f64,
    inc: Incidence,
    calibration: Option<&CalibrationConstant>,
) -> Result<InelasticFlux> {
    let cal = calibration.ok_or(Error::CalibrationRequired)?;
    let fo = EngineSystem::new(chain, inc)?.fourth_order(k)?;
    Ok(cal.flux(&fo))
}

pub fn g2_transmitted(chain: &EmitterChain, k: f64, inc: Incidence, times: &[f64]) -> Result<Vec<f64>> {
    EngineSystem::new(chain, inc)?.g2(k, times, Channel::Transmitted)
}

/// Fourth-order transmitted intensities for both drive directions.
pub fn nonlinear_intensity(chain: &EmitterChain, k: f64) -> Result<NonlinearIntensity> {
    let f = EngineSystem::new(chain, Incidence::Left)?.fourth_order(k)?;
    let b = EngineSystem::new(chain, Incidence::Right)?.fourth_order(k)?;
    Ok(NonlinearIntensity { k, forward: f.intensity_transmitted, backward: b.intensity_transmitted })
}
