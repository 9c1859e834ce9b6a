//! Emitter and chain descriptions.
//!
//! Positions are stored as phases `phi = k0 * x` relative to the chain's reference
//! wavevector `k0`. In [`PhaseMode::Markovian`] every propagation phase uses `k0`; in
//! [`PhaseMode::Exact`] the phase at wavevector `k` is `(k / k0) * phi`.
//!
//! Pairs are placed symmetrically about the origin: the upper emitter
//! (`omega0 + delta/2`) sits at `-L/2` and the lower one at `+L/2`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Reference scales. Everything else is measured in units of `gamma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitsConvention {
    pub gamma: f64,
    pub omega0: f64,
}

impl Default for UnitsConvention {
    fn default() -> Self {
        UnitsConvention { gamma: 1.0, omega0: 100.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseMode {
    #[default]
    Markovian,
    Exact,
}

/// Side from which the probe photon enters the waveguide.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Incidence {
    /// Enters from the left, travels right.
    #[default]
    Left,
    /// Enters from the right, travels left.
    Right,
}

impl Incidence {
    pub fn reversed(self) -> Self {
        match self {
            Incidence::Left => Incidence::Right,
            Incidence::Right => Incidence::Left,
        }
    }

    /// `+1` for left incidence, `-1` for right incidence.
    pub fn sign(self) -> f64 {
        match self {
            Incidence::Left => 1.0,
            Incidence::Right => -1.0,
        }
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite, got {v}")))
    }
}

fn check_rate(name: &str, v: f64, strict: bool) -> Result<()> {
    check_finite(name, v)?;
    if v < 0.0 || (strict && v == 0.0) {
        let bound = if strict { "> 0" } else { ">= 0" };
        return Err(Error::invalid(format!("{name} must be {bound}, got {v}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelEmitter {
    pub frequency: f64,
    /// Decay rate into the waveguide (both directions together).
    pub gamma: f64,
    /// Decay rate into non-guided modes.
    pub loss: f64,
    pub phase: f64,
}

impl TwoLevelEmitter {
    pub fn new(frequency: f64, gamma: f64, loss: f64, phase: f64) -> Result<Self> {
        check_finite("frequency", frequency)?;
        check_rate("gamma", gamma, true)?;
        check_rate("loss", loss, false)?;
        check_finite("phase", phase)?;
        Ok(TwoLevelEmitter { frequency, gamma, loss, phase })
    }
}

/// Lambda-type three-level emitter. The `e-s` transition is driven classically with Rabi
/// frequency `rabi`; `detuning` is the classical-field detuning, so `metastable = excited - detuning`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivenLambdaEmitter {
    pub excited: f64,
    pub metastable: f64,
    pub detuning: f64,
    pub rabi: f64,
    pub gamma: f64,
    pub loss_excited: f64,
    pub loss_metastable: f64,
    pub phase: f64,
}

impl DrivenLambdaEmitter {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        excited: f64,
        detuning: f64,
        rabi: f64,
        gamma: f64,
        loss_excited: f64,
        loss_metastable: f64,
        phase: f64,
    ) -> Result<Self> {
        check_finite("excited", excited)?;
        check_finite("detuning", detuning)?;
        check_rate("rabi", rabi, false)?;
        check_rate("gamma", gamma, true)?;
        check_rate("loss_excited", loss_excited, false)?;
        check_rate("loss_metastable", loss_metastable, false)?;
        check_finite("phase", phase)?;
        Ok(DrivenLambdaEmitter {
            excited,
            metastable: excited - detuning,
            detuning,
            rabi,
            gamma,
            loss_excited,
            loss_metastable,
            phase,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Emitter {
    TwoLevel(TwoLevelEmitter),
    Lambda(DrivenLambdaEmitter),
}

impl Emitter {
    pub fn gamma(&self) -> f64 {
        match self {
            Emitter::TwoLevel(e) => e.gamma,
            Emitter::Lambda(e) => e.gamma,
        }
    }

    pub fn phase(&self) -> f64 {
        match self {
            Emitter::TwoLevel(e) => e.phase,
            Emitter::Lambda(e) => e.phase,
        }
    }

    /// Frequency of the waveguide-coupled transition.
    pub fn frequency(&self) -> f64 {
        match self {
            Emitter::TwoLevel(e) => e.frequency,
            Emitter::Lambda(e) => e.excited,
        }
    }

    pub fn local_dim(&self) -> usize {
        match self {
            Emitter::TwoLevel(_) => 2,
            Emitter::Lambda(_) => 3,
        }
    }

    fn with_phase(mut self, phase: f64) -> Self {
        match &mut self {
            Emitter::TwoLevel(e) => e.phase = phase,
            Emitter::Lambda(e) => e.phase = phase,
        }
        self
    }
}

/// Ordered emitters along the waveguide.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChainRepr", into = "ChainRepr")]
pub struct EmitterChain {
    emitters: Vec<Emitter>,
    k0: f64,
}

#[derive(Serialize, Deserialize)]
struct ChainRepr {
    emitters: Vec<Emitter>,
    k0: f64,
}

impl TryFrom<ChainRepr> for EmitterChain {
    type Error = Error;
    fn try_from(r: ChainRepr) -> Result<Self> {
        EmitterChain::new(r.emitters, r.k0)
    }
}

impl From<EmitterChain> for ChainRepr {
    fn from(c: EmitterChain) -> Self {
        ChainRepr { emitters: c.emitters, k0: c.k0 }
    }
}

impl EmitterChain {
    /// Phases must be non-decreasing; co-located emitters share a phase.
    pub fn new(emitters: Vec<Emitter>, k0: f64) -> Result<Self> {
        if emitters.is_empty() {
            return Err(Error::invalid("chain needs at least one emitter"));
        }
        check_rate("k0", k0, true)?;
        for w in emitters.windows(2) {
            if w[1].phase() < w[0].phase() {
                return Err(Error::invalid("emitter phases must be non-decreasing"));
            }
        }
        Ok(EmitterChain { emitters, k0 })
    }

    pub fn emitters(&self) -> &[Emitter] {
        &self.emitters
    }

    pub fn len(&self) -> usize {
        self.emitters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emitters.is_empty()
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    /// Propagation phase of emitter `i` at wavevector `k`.
    pub fn phase_at(&self, i: usize, k: f64, mode: PhaseMode) -> f64 {
        let phi = self.emitters[i].phase();
        match mode {
            PhaseMode::Markovian => phi,
            PhaseMode::Exact => phi * k / self.k0,
        }
    }

    /// Mirror image `x -> -x` (reverses the emitter order).
    pub fn mirrored(&self) -> Self {
        let emitters = self.emitters.iter().rev().map(|e| e.with_phase(-e.phase())).collect();
        EmitterChain { emitters, k0: self.k0 }
    }

    pub fn has_loss(&self) -> bool {
        self.emitters.iter().any(|e| match e {
            Emitter::TwoLevel(t) => t.loss > 0.0,
            Emitter::Lambda(l) => l.loss_excited > 0.0 || l.loss_metastable > 0.0,
        })
    }

    pub fn hilbert_dim(&self) -> usize {
        self.emitters.iter().map(Emitter::local_dim).product()
    }
}

/// Two two-level emitters at separation phase `k0 L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairGeometry {
    pub center: f64,
    pub detuning: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub separation_phase: f64,
    pub loss: f64,
}

impl PairGeometry {
    pub fn new(center: f64, detuning: f64, gamma: f64, separation_phase: f64) -> Result<Self> {
        Self::with_rates(center, detuning, gamma, gamma, separation_phase, 0.0)
    }

    pub fn with_rates(
        center: f64,
        detuning: f64,
        gamma1: f64,
        gamma2: f64,
        separation_phase: f64,
        loss: f64,
    ) -> Result<Self> {
        check_finite("center", center)?;
        check_finite("detuning", detuning)?;
        check_rate("gamma1", gamma1, true)?;
        check_rate("gamma2", gamma2, true)?;
        check_rate("separation_phase", separation_phase, false)?;
        check_rate("loss", loss, false)?;
        Ok(PairGeometry { center, detuning, gamma1, gamma2, separation_phase, loss })
    }

    pub fn with_loss(mut self, loss: f64) -> Result<Self> {
        check_rate("loss", loss, false)?;
        self.loss = loss;
        Ok(self)
    }

    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.detuning = detuning;
        self
    }

    pub fn with_separation(mut self, separation_phase: f64) -> Self {
        self.separation_phase = separation_phase;
        self
    }

    /// Frequency of the emitter at `-L/2`.
    pub fn omega1(&self) -> f64 {
        self.center + 0.5 * self.detuning
    }

    /// Frequency of the emitter at `+L/2`.
    pub fn omega2(&self) -> f64 {
        self.center - 0.5 * self.detuning
    }

    pub fn phases(&self) -> [f64; 2] {
        [-0.5 * self.separation_phase, 0.5 * self.separation_phase]
    }
}

pub fn build_pair(pair: &PairGeometry) -> Result<EmitterChain> {
    let [p1, p2] = pair.phases();
    let e1 = TwoLevelEmitter::new(pair.omega1(), pair.gamma1, pair.loss, p1)?;
    let e2 = TwoLevelEmitter::new(pair.omega2(), pair.gamma2, pair.loss, p2)?;
    EmitterChain::new(vec![Emitter::TwoLevel(e1), Emitter::TwoLevel(e2)], pair.center)
}

/// Two-level / driven three-level / two-level chain. The three-level emitter sits at the
/// origin with excited level `omega0`; the outer emitters sit at `-+neighbor_phase` with
/// frequencies `omega0 + delta/2` (left) and `omega0 - delta/2` (right).
#[allow(clippy::too_many_arguments)]
pub fn build_232(
    omega0: f64,
    delta: f64,
    gamma: f64,
    rabi: f64,
    lambda_detuning: f64,
    neighbor_phase: f64,
    loss: f64,
) -> Result<EmitterChain> {
    check_rate("neighbor_phase", neighbor_phase, false)?;
    let left = TwoLevelEmitter::new(omega0 + 0.5 * delta, gamma, loss, -neighbor_phase)?;
    let mid = DrivenLambdaEmitter::new(omega0, lambda_detuning, rabi, gamma, loss, 0.0, 0.0)?;
    let right = TwoLevelEmitter::new(omega0 - 0.5 * delta, gamma, loss, neighbor_phase)?;
    EmitterChain::new(
        vec![Emitter::TwoLevel(left), Emitter::Lambda(mid), Emitter::TwoLevel(right)],
        omega0,
    )
}

/// Single-photon equivalent of a pair at half-wavelength separation: a driven three-level
/// emitter with `Gamma_e = gamma1 + gamma2`, carrying the pair loss on both levels.
pub fn map_pair_to_lambda(pair: &PairGeometry) -> Result<DrivenLambdaEmitter> {
    let (g1, g2) = (pair.gamma1, pair.gamma2);
    let sum = g1 + g2;
    let shift = pair.detuning * (g1 - g2) / (2.0 * sum);
    let rabi = (2.0 * pair.detuning * (g1 * g2).sqrt() / sum).abs();
    DrivenLambdaEmitter::new(
        pair.center + shift,
        2.0 * shift,
        rabi,
        sum,
        pair.loss,
        pair.loss,
        0.0,
    )
}
