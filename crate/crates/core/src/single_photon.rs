//! One-photon scattering: closed-form amplitudes for pairs and driven three-level
//! emitters, scattering-matrix composition for arbitrary chains, poles and group delay.
//!
//! Each emitter is reduced to a local transmission `t_j` (with `r_j = t_j - 1`); the chain
//! is assembled with the Redheffer star product, which stays bounded where plain transfer
//! matrices lose precision.

use serde::{Deserialize, Serialize};

use crate::model::{DrivenLambdaEmitter, Emitter, EmitterChain, PairGeometry, PhaseMode};
use crate::{Error, Result, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Amplitudes of a chain, referenced to `x = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringSolution {
    pub k: f64,
    pub t: C64,
    /// Reflection for a photon incident from the left.
    pub r_left: C64,
    /// Reflection for a photon incident from the right.
    pub r_right: C64,
}

impl ScatteringSolution {
    pub fn transmittance(&self) -> f64 {
        self.t.norm_sqr()
    }

    pub fn reflectance_left(&self) -> f64 {
        self.r_left.norm_sqr()
    }

    pub fn reflectance_right(&self) -> f64 {
        self.r_right.norm_sqr()
    }
}

/// Transmission of a pair of two-level emitters. Losses shift both frequencies by
/// `-i loss / 2`.
pub fn t_pair(k: f64, pair: &PairGeometry, mode: PhaseMode) -> C64 {
    let kl = match mode {
        PhaseMode::Markovian => pair.separation_phase,
        PhaseMode::Exact => pair.separation_phase * k / pair.center,
    };
    let a = c(k - pair.omega1()) + I * (0.5 * pair.loss);
    let b = c(k - pair.omega2()) + I * (0.5 * pair.loss);
    let g1 = pair.gamma1;
    let g2 = pair.gamma2;
    let num = a * b;
    let den = (a + I * (0.5 * g1)) * (b + I * (0.5 * g2)) + (0.25 * g1 * g2) * (I * (2.0 * kl)).exp();
    num / den
}

/// Transmission of a single driven three-level emitter.
pub fn t_lambda(k: f64, e: &DrivenLambdaEmitter) -> C64 {
    let ke = c(k - e.excited) + I * (0.5 * e.loss_excited);
    let ks = c(k - e.metastable) + I * (0.5 * e.loss_metastable);
    let q = 0.25 * e.rabi * e.rabi;
    (ks * ke - q) / (ks * (ke + I * (0.5 * e.gamma)) - q)
}

/// Local transmission of one emitter at its own position.
pub fn emitter_transmission(k: f64, e: &Emitter) -> C64 {
    match e {
        Emitter::TwoLevel(t) => {
            let d = c(k - t.frequency);
            (d + I * (0.5 * t.loss)) / (d + I * (0.5 * (t.gamma + t.loss)))
        }
        Emitter::Lambda(l) => t_lambda(k, l),
    }
}

/// Star product of two scattering elements, left element first. Amplitudes are
/// `(t, r_left, r_right)`.
fn star(a: (C64, C64, C64), b: (C64, C64, C64)) -> Result<(C64, C64, C64)> {
    let (ta, rla, rra) = a;
    let (tb, rlb, rrb) = b;
    let den = C64::new(1.0, 0.0) - rra * rlb;
    if den.norm() < 1e-14 {
        return Err(Error::numeric(format!(
            "multiple-scattering resonance: |1 - r'r| = {:e}",
            den.norm()
        )));
    }
    let t = ta * tb / den;
    let rl = rla + ta * ta * rlb / den;
    let rr = rrb + tb * tb * rra / den;
    Ok((t, rl, rr))
}

/// Scattering amplitudes of a chain at one wavevector.
pub fn scatter(chain: &EmitterChain, k: f64, mode: PhaseMode) -> Result<ScatteringSolution> {
    if !k.is_finite() {
        return Err(Error::invalid("wavevector must be finite"));
    }
    let mut acc: Option<(C64, C64, C64)> = None;
    for (j, e) in chain.emitters().iter().enumerate() {
        let t = emitter_transmission(k, e);
        let r = t - 1.0;
        let phi = chain.phase_at(j, k, mode);
        let el = (t, r * (I * (2.0 * phi)).exp(), r * (-I * (2.0 * phi)).exp());
        acc = Some(match acc {
            None => el,
            Some(a) => star(a, el)?,
        });
    }
    let (t, r_left, r_right) = acc.expect("chain is non-empty");
    let out = ScatteringSolution { k, t, r_left, r_right };
    if !(out.t.is_finite() && out.r_left.is_finite() && out.r_right.is_finite()) {
        return Err(Error::numeric(format!("non-finite amplitudes at k = {k}")));
    }
    Ok(out)
}

/// Like [`scatter`], but a removable multiple-scattering singularity (for instance identical
/// emitters at `k0L = n pi` on resonance) is replaced by the mean of the two sides.
pub fn scatter_regularized(chain: &EmitterChain, k: f64, mode: PhaseMode) -> Result<ScatteringSolution> {
    match scatter(chain, k, mode) {
        Err(Error::NumericFailure(_)) if k.is_finite() => {
            let gmin = chain.emitters().iter().map(Emitter::gamma).fold(f64::INFINITY, f64::min);
            let h = 1e-7 * gmin;
            let a = scatter(chain, k - h, mode)?;
            let b = scatter(chain, k + h, mode)?;
            Ok(ScatteringSolution {
                k,
                t: 0.5 * (a.t + b.t),
                r_left: 0.5 * (a.r_left + b.r_left),
                r_right: 0.5 * (a.r_right + b.r_right),
            })
        }
        other => other,
    }
}

/// Scattering amplitudes on a grid of wavevectors.
pub fn chain_amplitudes(
    chain: &EmitterChain,
    ks: &[f64],
    mode: PhaseMode,
) -> Result<Vec<ScatteringSolution>> {
    ks.iter().map(|&k| scatter(chain, k, mode)).collect()
}

/// Which pole of the pair is long-lived.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoleLabel {
    Plus,
    Minus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoleSet {
    /// `omega_+` (principal square-root branch).
    pub plus: C64,
    pub minus: C64,
    pub dark: PoleLabel,
    /// Leading-order dark pole about the nearest half-wavelength separation.
    pub dark_expansion: C64,
    /// Leading-order bright pole about the nearest half-wavelength separation.
    pub bright_expansion: C64,
}

impl PoleSet {
    pub fn dark_pole(&self) -> C64 {
        match self.dark {
            PoleLabel::Plus => self.plus,
            PoleLabel::Minus => self.minus,
        }
    }

    pub fn bright_pole(&self) -> C64 {
        match self.dark {
            PoleLabel::Plus => self.minus,
            PoleLabel::Minus => self.plus,
        }
    }
}

/// Complex single-excitation frequencies of a Markovian pair.
pub fn pole_analysis(pair: &PairGeometry) -> PoleSet {
    let g1 = pair.gamma1;
    let g2 = pair.gamma2;
    let a = c(pair.omega1()) - I * (0.5 * (g1 + pair.loss));
    let d = c(pair.omega2()) - I * (0.5 * (g2 + pair.loss));
    let off2 = -0.25 * g1 * g2 * (I * (2.0 * pair.separation_phase)).exp();
    let mean = 0.5 * (a + d);
    let root = (0.25 * (a - d) * (a - d) + off2).sqrt();
    let plus = mean + root;
    let minus = mean - root;
    let dark = if plus.im.abs() <= minus.im.abs() { PoleLabel::Plus } else { PoleLabel::Minus };

    // Expansion in eps = k0L - n pi and delta, equal rates assumed at this order.
    let gamma = 0.5 * (g1 + g2);
    let n = (pair.separation_phase / std::f64::consts::PI).round();
    let eps = pair.separation_phase - n * std::f64::consts::PI;
    let shift = 0.5 * gamma * eps;
    let width = (pair.detuning.powi(2) + gamma * gamma * eps * eps) / (4.0 * gamma);
    let base = c(pair.center) - I * (0.5 * pair.loss);
    PoleSet {
        plus,
        minus,
        dark,
        dark_expansion: base + c(-shift) - I * width,
        bright_expansion: base + c(shift) - I * (gamma - width),
    }
}

/// Detuning that minimises the dark-pole width's competition with its displacement,
/// `gamma * (k0L - n pi)` for the nearest integer `n`.
pub fn delta_opt(separation_phase: f64, gamma: f64) -> f64 {
    let n = (separation_phase / std::f64::consts::PI).round();
    gamma * (separation_phase - n * std::f64::consts::PI)
}

/// Group delay `d arg t / dk`: central difference with one Richardson step.
pub fn time_delay(chain: &EmitterChain, k: f64, mode: PhaseMode) -> Result<f64> {
    let gmin = chain.emitters().iter().map(Emitter::gamma).fold(f64::INFINITY, f64::min);
    let h = 1e-4 * gmin;
    let t = |q: f64| -> Result<C64> {
        let t = scatter_regularized(chain, q, mode)?.t;
        if t.norm() < 1e-10 {
            return Err(Error::UndefinedPhase { k: q });
        }
        Ok(t)
    };
    t(k)?;
    let d = |h: f64| -> Result<f64> { Ok((t(k + h)? / t(k - h)?).arg() / (2.0 * h)) };
    let d1 = d(h)?;
    let d2 = d(0.5 * h)?;
    Ok((4.0 * d2 - d1) / 3.0)
}

/// Delay approached from both sides of `k`: the mean of [`time_delay`] at `k -+ h`.
///
/// At a transmission zero the phase is undefined, but the delay of the surrounding smooth
/// branch still has a limit; for identical emitters at a separation off the nodes the double
/// zero on resonance leaves `tau -> 2 / gamma`. The symmetric mean cancels the `O(h)` term.
pub fn limiting_time_delay(chain: &EmitterChain, k: f64, h: f64, mode: PhaseMode) -> Result<f64> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid("limit offset must be finite and > 0"));
    }
    Ok(0.5 * (time_delay(chain, k - h, mode)? + time_delay(chain, k + h, mode)?))
}
