//! Independent reference computations and seeded property checks shared by the integration
//! tests. Nothing here calls the library routine it is compared against.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wqed::closed_form::{green_matrix, interference_term, qubit_wavefunctions, reconstruction_deviation, rr_integral};
use wqed::engine::{build_liouvillian, steady_state, Channel, DriveSpec, EngineSystem};
use wqed::numerics::integrate;
use wqed::scenarios::SystemParams;
use wqed::single_photon::{scatter, time_delay};
use wqed::{
    build_232, build_pair, DrivenLambdaEmitter, Emitter, EmitterChain, Incidence, PairGeometry, PhaseMode,
    TwoLevelEmitter, C64,
};

const I: C64 = C64 { re: 0.0, im: 1.0 };

pub const DRAWS: usize = 100;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------------------
// One-photon oracle: the single-excitation linear system of the chain.
// ---------------------------------------------------------------------------------------

/// Single-excitation problem `(k - H_eff(k)) psi = v` for a chain, with the metastable level
/// of each driven three-level emitter eliminated into a frequency-dependent self-energy.
struct LinearSystem {
    m: DMatrix<C64>,
    /// `d M / d k`
    dm: DMatrix<C64>,
    rates: Vec<f64>,
    phases: Vec<f64>,
}

impl LinearSystem {
    fn new(chain: &EmitterChain, k: f64, mode: PhaseMode) -> Self {
        let em = chain.emitters();
        let n = em.len();
        let scale = match mode {
            PhaseMode::Markovian => 1.0,
            PhaseMode::Exact => k / chain.k0(),
        };
        let phases: Vec<f64> = em.iter().map(|e| e.phase() * scale).collect();
        let rates: Vec<f64> = em.iter().map(|e| e.gamma()).collect();
        let mut m = DMatrix::<C64>::zeros(n, n);
        let mut dm = DMatrix::<C64>::identity(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = 0.5 * I * (rates[i] * rates[j]).sqrt() * (I * (phases[i] - phases[j]).abs()).exp();
            }
            match em[i] {
                Emitter::TwoLevel(t) => m[(i, i)] += C64::new(k - t.frequency, 0.5 * t.loss),
                Emitter::Lambda(l) => {
                    let ks = C64::new(k - l.metastable, 0.5 * l.loss_metastable);
                    let q = 0.25 * l.rabi * l.rabi;
                    m[(i, i)] += C64::new(k - l.excited, 0.5 * l.loss_excited) - q / ks;
                    dm[(i, i)] += q / (ks * ks);
                }
            }
        }
        LinearSystem { m, dm, rates, phases }
    }

    fn vector(&self, sign: f64) -> DVector<C64> {
        DVector::from_iterator(
            self.rates.len(),
            self.rates.iter().zip(&self.phases).map(|(g, p)| (0.5 * g).sqrt() * (I * (sign * p)).exp()),
        )
    }

    /// Emitter amplitudes for drive phase sign `s` (`+1` from the left).
    fn solve(&self, s: f64) -> DVector<C64> {
        self.m.clone().lu().solve(&self.vector(s)).expect("regular single-excitation system")
    }
}

/// `(t, r_left, r_right)` from the linear system.
pub fn chain_amplitudes(chain: &EmitterChain, k: f64, mode: PhaseMode) -> (C64, C64, C64) {
    let sys = LinearSystem::new(chain, k, mode);
    let fwd = sys.solve(1.0);
    let bwd = sys.solve(-1.0);
    let t = C64::new(1.0, 0.0) - I * sys.vector(-1.0).dot(&fwd);
    let r_left = -I * sys.vector(1.0).dot(&fwd);
    let r_right = -I * sys.vector(-1.0).dot(&bwd);
    (t, r_left, r_right)
}

/// Group delay `Im(t' / t)` with `t'` from the analytic derivative of the linear system
/// (Markovian phases).
pub fn group_delay(chain: &EmitterChain, k: f64) -> f64 {
    let sys = LinearSystem::new(chain, k, PhaseMode::Markovian);
    let lu = sys.m.clone().lu();
    let psi = lu.solve(&sys.vector(1.0)).expect("regular system");
    let dpsi = -lu.solve(&(&sys.dm * &psi)).expect("regular system");
    let w = sys.vector(-1.0);
    let t = C64::new(1.0, 0.0) - I * w.dot(&psi);
    let dt = -I * w.dot(&dpsi);
    (dt / t).im
}

/// Resonant delay of the two-level / three-level / two-level chain.
pub fn tau_232(delta: f64, rabi: f64, gamma: f64) -> f64 {
    let a = 4.0 * gamma / (delta * delta);
    let b = 2.0 * gamma / (rabi * rabi);
    a + b + gamma * a * b
}

// ---------------------------------------------------------------------------------------
// Pair amplitudes in delta normalisation and the quadrature form of RR_i.
// ---------------------------------------------------------------------------------------

struct PairOracle {
    heff: Matrix2<C64>,
    rate: f64,
    phases: [f64; 2],
}

impl PairOracle {
    fn new(p: &PairGeometry) -> Self {
        let g = p.gamma1;
        let off = -0.5 * I * g * (I * p.separation_phase).exp();
        let diag = |w: f64| C64::new(w, -0.5 * (g + p.loss));
        PairOracle {
            heff: Matrix2::new(diag(p.center + 0.5 * p.detuning), off, off, diag(p.center - 0.5 * p.detuning)),
            rate: g,
            phases: [-0.5 * p.separation_phase, 0.5 * p.separation_phase],
        }
    }

    fn weights(&self, sign: f64) -> Vector2<C64> {
        Vector2::from_fn(|i, _| (0.5 * self.rate).sqrt() * (I * (sign * self.phases[i])).exp())
    }

    /// Amplitudes `(q - H_eff)^-1 d` with `d` the delta-normalised drive.
    fn amplitudes(&self, q: f64, inc: Incidence) -> Vector2<C64> {
        let g = Matrix2::from_diagonal_element(C64::new(q, 0.0)) - self.heff;
        let d = self.weights(inc.sign()) * C64::new(1.0 / (2.0 * PI).sqrt(), 0.0);
        g.lu().solve(&d).expect("regular pair system")
    }

    fn transmission(&self, q: f64, inc: Incidence) -> C64 {
        let e = self.amplitudes(q, inc);
        C64::new(1.0, 0.0) - I * (2.0 * PI).sqrt() * (self.weights(-inc.sign()).transpose() * e)[0]
    }

    fn reflection(&self, q: f64, inc: Incidence) -> C64 {
        let e = self.amplitudes(q, inc);
        -I * (2.0 * PI).sqrt() * (self.weights(inc.sign()).transpose() * e)[0]
    }
}

/// Left- or right-incidence emitter amplitudes of a pair, delta normalised.
pub fn pair_amplitudes(p: &PairGeometry, q: f64, inc: Incidence) -> [C64; 2] {
    let e = PairOracle::new(p).amplitudes(q, inc);
    [e[0], e[1]]
}

/// `RR_i` by direct quadrature on the real axis. On the real line the conjugated
/// continuation of a rational amplitude is its complex conjugate, and
/// `1 / (k - q + i0) = P 1/(k - q) - i pi delta(k - q)`. The principal value is taken on
/// `[k - R, k + R]` after subtracting a Lorentzian with vanishing principal value; the
/// tails beyond `R` come from repeated integration by parts.
pub fn rr_quadrature(k: f64, x: f64, i: usize, p: &PairGeometry, inc: Incidence) -> C64 {
    rr_quadrature_radius(k, x, i, p, inc, 150.0 * p.gamma1)
}

pub fn rr_quadrature_radius(k: f64, x: f64, i: usize, p: &PairGeometry, inc: Incidence, r: f64) -> C64 {
    let o = PairOracle::new(p);
    let back = inc.reversed();
    let bracket = |q: f64| -> C64 {
        let e = o.amplitudes(q, inc)[i].conj();
        let eb = o.amplitudes(q, back)[i].conj();
        o.transmission(q, inc) * e + o.reflection(q, back) * eb
    };
    let g = |q: f64| (I * (q * x)).exp() * bracket(q);
    let gk = g(k);
    let width = p.gamma1;
    let lorentz = |q: f64| width * width / ((q - k).powi(2) + width * width);
    let f = |q: f64| (g(q) - gk * lorentz(q)) / (k - q);
    let tol = 1e-13;
    let lo = integrate(f, k - r, k, tol, 1e-14, 400_000).expect("lower half converges").value;
    let hi = integrate(f, k, k + r, tol, 1e-14, 400_000).expect("upper half converges").value;
    let pv = lo + hi;

    // int_a^inf e^{iqx} H = -e^{iax} sum_n (-1)^n H^(n)(a) / (ix)^(n+1), and the mirror
    // image for the lower tail.
    let h = |q: f64| bracket(q) / (k - q);
    let derivs = |a: f64| -> [C64; 4] {
        let s = 0.5;
        let (m2, m1, z, p1, p2) = (h(a - 2.0 * s), h(a - s), h(a), h(a + s), h(a + 2.0 * s));
        [
            z,
            (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * s),
            (-p2 + 16.0 * p1 - 30.0 * z + 16.0 * m1 - m2) / (12.0 * s * s),
            (p2 - 2.0 * p1 + 2.0 * m1 - m2) / (2.0 * s * s * s),
        ]
    };
    let series = |a: f64| -> C64 {
        let d = derivs(a);
        let ix = I * x;
        let mut sum = C64::new(0.0, 0.0);
        let mut pow = ix;
        for (n, dn) in d.iter().enumerate() {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * dn / pow;
            pow *= ix;
        }
        (I * (a * x)).exp() * sum
    };
    let tails = -series(k + r) + series(k - r);

    let e_k = o.amplitudes(k, inc)[i].conj();
    e_k / PI.sqrt() * (pv + tails - I * PI * gk)
}

// ---------------------------------------------------------------------------------------
// Random draws.
// ---------------------------------------------------------------------------------------

pub fn draw_pair(r: &mut ChaCha8Rng) -> PairGeometry {
    let d = r.gen_range(-1.5..1.5);
    let l = r.gen_range(0.05..2.0 * PI);
    PairGeometry::new(100.0, d, 1.0, l).unwrap()
}

/// Detuning bounded away from zero, so the dark pole keeps a width of at least `0.01`.
pub fn draw_resolved_pair(r: &mut ChaCha8Rng) -> PairGeometry {
    let d = r.gen_range(0.2..1.5) * if r.gen_bool(0.5) { 1.0 } else { -1.0 };
    let l = r.gen_range(0.2..2.0 * PI - 0.2);
    PairGeometry::new(100.0, d, 1.0, l).unwrap()
}

pub fn draw_lambda(r: &mut ChaCha8Rng, phase: f64, loss: bool) -> DrivenLambdaEmitter {
    let (le, ls) = if loss { (r.gen_range(0.0..0.2), r.gen_range(0.0..0.05)) } else { (0.0, 0.0) };
    DrivenLambdaEmitter::new(
        100.0 + r.gen_range(-1.0..1.0),
        r.gen_range(-1.0..1.0),
        r.gen_range(0.5..4.0),
        r.gen_range(0.5..1.5),
        le,
        ls,
        phase,
    )
    .unwrap()
}

/// One to four emitters of either kind with increasing phases.
pub fn draw_chain(r: &mut ChaCha8Rng, loss: bool) -> EmitterChain {
    let n = r.gen_range(1..=4);
    let mut phase = r.gen_range(-2.0..0.0);
    let mut em = Vec::with_capacity(n);
    for _ in 0..n {
        if r.gen_bool(0.3) {
            em.push(Emitter::Lambda(draw_lambda(r, phase, loss)));
        } else {
            let l = if loss { r.gen_range(0.0..0.2) } else { 0.0 };
            let e = TwoLevelEmitter::new(100.0 + r.gen_range(-1.5..1.5), r.gen_range(0.5..1.5), l, phase).unwrap();
            em.push(Emitter::TwoLevel(e));
        }
        phase += r.gen_range(0.1..2.5);
    }
    EmitterChain::new(em, 100.0).unwrap()
}

/// A pair, a driven three-level emitter, or a 2-3-2 chain, small enough for the engine.
/// Loss is present with probability `p_loss`.
pub fn draw_engine_chain(r: &mut ChaCha8Rng, p_loss: f64) -> EmitterChain {
    let loss = r.gen_bool(p_loss);
    let l = if loss { r.gen_range(0.0..0.1) } else { 0.0 };
    match r.gen_range(0..3) {
        0 => build_pair(&draw_pair(r).with_loss(l).unwrap()).unwrap(),
        1 => EmitterChain::new(vec![Emitter::Lambda(draw_lambda(r, 0.0, loss))], 100.0).unwrap(),
        _ => build_232(
            100.0,
            r.gen_range(-1.5..1.5),
            1.0,
            r.gen_range(0.5..4.0),
            r.gen_range(-0.5..0.5),
            r.gen_range(0.1..PI),
            l,
        )
        .unwrap(),
    }
}

fn draw_k(r: &mut ChaCha8Rng) -> f64 {
    100.0 + r.gen_range(-3.0..3.0)
}

fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

fn incidence(r: &mut ChaCha8Rng) -> Incidence {
    if r.gen_bool(0.5) {
        Incidence::Left
    } else {
        Incidence::Right
    }
}

// ---------------------------------------------------------------------------------------
// Property checks: each returns the worst deviation over its draws.
// ---------------------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct Check {
    pub name: &'static str,
    pub worst: f64,
    pub tol: f64,
    pub draws: usize,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.worst <= self.tol && self.draws >= DRAWS
    }

    pub fn summary(&self) -> String {
        format!("{}: worst {:.3e} (tol {:.0e}, {} draws)", self.name, self.worst, self.tol, self.draws)
    }
}

fn check<F: FnMut(&mut ChaCha8Rng) -> f64>(name: &'static str, seed: u64, tol: f64, mut f: F) -> Check {
    let mut r = rng(seed);
    let worst = (0..DRAWS).map(|_| f(&mut r)).fold(0.0, f64::max);
    Check { name, worst, tol, draws: DRAWS }
}

/// Lossless chains conserve probability from both sides, in both phase modes.
pub fn unitarity() -> Check {
    check("unitarity", 11, 1e-10, |r| {
        let ch = draw_chain(r, false);
        let k = draw_k(r);
        [PhaseMode::Markovian, PhaseMode::Exact]
            .iter()
            .map(|&m| {
                let s = scatter(&ch, k, m).unwrap();
                let t = s.transmittance();
                (t + s.reflectance_left() - 1.0).abs().max((t + s.reflectance_right() - 1.0).abs())
            })
            .fold(0.0, f64::max)
    })
}

/// Transmission is the same from both sides, for any chain with loss; also the scattering
/// composition agrees with the linear-system oracle.
pub fn reciprocity() -> Check {
    check("reciprocity", 12, 1e-10, |r| {
        let ch = draw_chain(r, true);
        let k = draw_k(r);
        let mode = if r.gen_bool(0.5) { PhaseMode::Markovian } else { PhaseMode::Exact };
        let s = scatter(&ch, k, mode).unwrap();
        let m = scatter(&ch.mirrored(), k, mode).unwrap();
        let (t, rl, rr) = chain_amplitudes(&ch, k, mode);
        let sys = LinearSystem::new(&ch, k, mode);
        let t_back = C64::new(1.0, 0.0) - I * sys.vector(1.0).dot(&sys.solve(-1.0));
        [(s.t - m.t).norm(), (t_back - t).norm(), (s.t - t).norm(), (s.r_left - rl).norm(), (s.r_right - rr).norm()]
            .into_iter()
            .fold(0.0, f64::max)
    })
}

/// Markovian outputs of a pair repeat when `k0L` grows by `pi`: `t`, `|r|` and the engine
/// fluxes.
pub fn periodicity() -> Check {
    check("half-wavelength periodicity", 13, 1e-9, |r| {
        let p = draw_pair(r).with_loss(r.gen_range(0.0..0.1)).unwrap();
        let q = p.with_separation(p.separation_phase + PI);
        let k = draw_k(r);
        let a = scatter(&build_pair(&p).unwrap(), k, PhaseMode::Markovian).unwrap();
        let b = scatter(&build_pair(&q).unwrap(), k, PhaseMode::Markovian).unwrap();
        let ea = EngineSystem::new(&build_pair(&p).unwrap(), Incidence::Left).unwrap().fourth_order(k).unwrap();
        let eb = EngineSystem::new(&build_pair(&q).unwrap(), Incidence::Left).unwrap().fourth_order(k).unwrap();
        [
            (a.t - b.t).norm(),
            (a.r_left.norm() - b.r_left.norm()).abs(),
            rel(eb.flux_transmitted, ea.flux_transmitted, 1e-6),
            rel(eb.flux_reflected, ea.flux_reflected, 1e-6),
            rel(eb.intensity_transmitted, ea.intensity_transmitted, 1e-6),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    })
}

/// Right-incidence nonlinear intensity at `delta` equals left incidence at `-delta`, for
/// the engine coefficients and for the closed-form interference term.
pub fn mirror_identity() -> Check {
    check("mirror identity", 14, 1e-9, |r| {
        let p = draw_resolved_pair(r);
        let m = p.with_detuning(-p.detuning);
        let k = draw_k(r);
        let back = EngineSystem::new(&build_pair(&p).unwrap(), Incidence::Right).unwrap().fourth_order(k).unwrap();
        let fwd = EngineSystem::new(&build_pair(&m).unwrap(), Incidence::Left).unwrap().fourth_order(k).unwrap();
        let ib = interference_term(k, &p, Incidence::Right).unwrap();
        let if_ = interference_term(k, &m, Incidence::Left).unwrap();
        rel(back.intensity_transmitted, fwd.intensity_transmitted, 1e-3)
            .max(rel(back.flux_transmitted, fwd.flux_transmitted, 1e-3))
            .max(rel(ib, if_, 1e-3))
    })
}

/// `<b> / A` is unchanged and the incoherent flux scales as `A^4` when the drive halves.
pub fn drive_scaling() -> Check {
    check("drive-amplitude scaling", 15, 1e-4, |r| {
        let ch = draw_engine_chain(r, 0.5);
        let k = draw_k(r);
        let sys = EngineSystem::new(&ch, incidence(r)).unwrap();
        let a = 1e-3;
        let t1 = sys.finite_drive_transmission(k, a).unwrap();
        let t2 = sys.finite_drive_transmission(k, 0.5 * a).unwrap();
        let f1 = sys.finite_drive_flux(k, a, Channel::Transmitted).unwrap();
        let f2 = sys.finite_drive_flux(k, 0.5 * a, Channel::Transmitted).unwrap();
        let fo = sys.fourth_order(k).unwrap();
        let floor = 1e-3 * fo.flux_total().abs().max(1e-6);
        ((t1 - t2).norm() / t2.norm().max(1e-3))
            .max((f1 - f2).abs() / f2.abs().max(floor))
            .max((f2 - fo.flux_transmitted).abs() / fo.flux_transmitted.abs().max(floor))
    })
}

/// Finite-drive stationary states are normalised, Hermitian and positive.
pub fn positivity() -> Check {
    check("steady-state positivity", 16, 1e-10, |r| {
        let ch = draw_engine_chain(r, 0.5);
        let k = draw_k(r);
        let a = 10f64.powf(r.gen_range(-3.0..-0.3));
        let pb = build_liouvillian(&ch, DriveSpec::new(incidence(r), k).with_amplitude(a)).unwrap();
        let rho = steady_state(&pb).unwrap();
        (rho.trace() - 1.0).norm().max(rho.hermiticity_error()).max((-rho.min_eigenvalue()).max(0.0))
    })
}

/// The incoherent spectrum integrates to the fourth-order flux.
pub fn flux_sum_rule() -> Check {
    check("flux equals integrated spectrum", 17, 1e-6, |r| {
        let ch = draw_engine_chain(r, 0.3);
        let k = 100.0 + r.gen_range(-2.0..2.0);
        let sys = EngineSystem::new(&ch, incidence(r)).unwrap();
        let fo = sys.fourth_order(k).unwrap();
        [(Channel::Transmitted, fo.flux_transmitted), (Channel::Reflected, fo.flux_reflected)]
            .into_iter()
            .map(|(c, f)| {
                let s = sys.integrated_spectrum(k, c).unwrap().value.re;
                (s - f).abs() / f.abs().max(1e-4 * fo.flux_total().abs()).max(1e-12)
            })
            .fold(0.0, f64::max)
    })
}

/// Residue evaluation of `RR_i` against real-axis quadrature.
pub fn residues_vs_quadrature() -> Check {
    check("RR residues vs quadrature", 18, 1e-8, |r| {
        let p = draw_resolved_pair(r);
        let k = 100.0 + r.gen_range(-2.0..2.0);
        let x = r.gen_range(0.5..10.0);
        let i = r.gen_range(0..2);
        let inc = incidence(r);
        let a = rr_integral(k, x, i, &p, inc).unwrap();
        let b = rr_quadrature(k, x, i, &p, inc);
        (a - b).norm() / a.norm().max(1.0)
    })
}

/// The Green-matrix route reproduces the printed emitter amplitudes; both agree with the
/// linear-system oracle.
pub fn green_reconstruction() -> Check {
    check("Green-matrix reconstruction", 19, 1e-10, |r| {
        let p = draw_pair(r).with_loss(r.gen_range(0.0..0.1)).unwrap();
        let k = draw_k(r);
        let g = green_matrix(k, &p).unwrap();
        let w = qubit_wavefunctions(k, &p, PhaseMode::Markovian).unwrap();
        let f = pair_amplitudes(&p, k, Incidence::Left);
        let b = pair_amplitudes(&p, k, Incidence::Right);
        let mut dev = reconstruction_deviation(&g, &p).unwrap();
        for i in 0..2 {
            dev = dev.max((w.forward[i] - f[i]).norm()).max((w.backward[i] - b[i]).norm());
        }
        dev
    })
}

/// Group delay of the finite-difference routine against the analytic derivative.
pub fn delay_oracle() -> Check {
    check("group delay vs analytic derivative", 20, 1e-6, |r| {
        let ch = draw_chain(r, true);
        let k = draw_k(r);
        let tau = time_delay(&ch, k, PhaseMode::Markovian).unwrap();
        rel(tau, group_delay(&ch, k), 1.0)
    })
}

/// JSON round trips of model and scenario types.
pub fn serde_round_trip() -> Check {
    check("serde round trip", 21, 0.0, |r| {
        let ch = draw_chain(r, true);
        let p = draw_pair(r);
        let s = scatter(&ch, draw_k(r), PhaseMode::Exact).unwrap();
        let sp = SystemParams::chain_232(100.0, p.detuning, 1.0, r.gen_range(0.0..4.0), p.separation_phase);
        let ok = serde_json::from_str::<EmitterChain>(&serde_json::to_string(&ch).unwrap()).unwrap() == ch
            && serde_json::from_str::<PairGeometry>(&serde_json::to_string(&p).unwrap()).unwrap() == p
            && serde_json::from_str::<wqed::single_photon::ScatteringSolution>(&serde_json::to_string(&s).unwrap())
                .unwrap()
                == s
            && serde_json::from_str::<SystemParams>(&serde_json::to_string(&sp).unwrap()).unwrap() == sp;
        if ok {
            0.0
        } else {
            1.0
        }
    })
}

pub fn all_checks() -> Vec<Check> {
    vec![
        unitarity(),
        reciprocity(),
        periodicity(),
        mirror_identity(),
        drive_scaling(),
        positivity(),
        flux_sum_rule(),
        residues_vs_quadrature(),
        green_reconstruction(),
        delay_oracle(),
        serde_round_trip(),
    ]
}
